use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::filterbank::SampleTensor;
use crate::real::Real;
use crate::seed;

use super::adam::{adam_step, AdamState, DEFAULT_LR};
use super::loss::{sample_loss, LossParts, LossWeights, Target};
use super::model::Network;
use super::tensor::Tensor;

/// Samples per gradient work unit. Fixed so the reduction order does not
/// depend on the number of workers.
pub const GRAD_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the last step as a fraction of `lr` (cosine decay); 1 keeps it constant.
    pub lr_final_frac: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: DEFAULT_LR,
            lr_final_frac: 1.0,
            weights: LossWeights::default(),
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: LossParts,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub steps: u64,
    /// Set when training stopped on a non-finite loss.
    pub diverged: Option<String>,
}

impl TrainReport {
    pub fn last(&self, split: Split) -> Option<&LossParts> {
        self.history.iter().rev().find(|r| r.split == split).map(|r| &r.loss)
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,split,L,L_ttc,L_theta,L_r\n");
        for r in &self.history {
            s += &format!(
                "{},{},{:.9},{:.9},{:.9},{:.9}\n",
                r.epoch,
                r.split.name(),
                r.loss.total,
                r.loss.ttc,
                r.loss.theta,
                r.loss.r
            );
        }
        s
    }
}

/// Batch-mean loss and parameter gradient.
pub fn batch_gradient<T: Real>(net: &Network<T>, batch: &[&SampleTensor], weights: &LossWeights, jobs: usize) -> Result<(LossParts, Vec<T>)> {
    weights.validate()?;
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let b = batch.len();
    let scale = net.config().tau_scale;
    let chunks: Vec<&[&SampleTensor]> = batch.chunks(GRAD_CHUNK).collect();
    let results = seed::parallel_map(chunks, jobs, |chunk| -> Result<(LossParts, Vec<T>)> {
        let mut g = vec![T::zero(); net.param_count()];
        let mut parts = LossParts::default();
        for s in chunk {
            let (pred, trace) = net.forward_trace(&Tensor::from_sample(s))?;
            let (p, dout) = sample_loss(&pred, &Target::of(s), weights, scale, b)?;
            parts.add(&p);
            net.backward(&trace, &dout, &mut g);
        }
        Ok((parts, g))
    });
    let mut total = LossParts::default();
    let mut grad = vec![T::zero(); net.param_count()];
    for r in results {
        let (p, g) = r?;
        total.add(&p);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    total.scale(1.0 / b as f64);
    Ok((total, grad))
}

/// Mean loss over `samples` without gradients.
pub fn evaluate_loss<T: Real>(net: &Network<T>, samples: &[SampleTensor], weights: &LossWeights, jobs: usize) -> Result<LossParts> {
    if samples.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let scale = net.config().tau_scale;
    let chunks: Vec<&[SampleTensor]> = samples.chunks(GRAD_CHUNK).collect();
    let results = seed::parallel_map(chunks, jobs, |chunk| -> Result<LossParts> {
        let mut parts = LossParts::default();
        for s in chunk {
            let pred = net.forward_one(&Tensor::from_sample(s))?;
            parts.add(&sample_loss(&pred, &Target::of(s), weights, scale, 1)?.0);
        }
        Ok(parts)
    });
    let mut total = LossParts::default();
    for r in results {
        total.add(&r?);
    }
    total.scale(1.0 / samples.len() as f64);
    Ok(total)
}

fn is_numeric(e: &Error) -> bool {
    matches!(e, Error::Numeric(_))
}

/// Mini-batch Adam training. The shuffle order is derived from `cfg.seed`, so
/// the same inputs always produce the same parameters and history.
pub fn train<T: Real>(net: &mut Network<T>, train_set: &[SampleTensor], val_set: &[SampleTensor], cfg: &TrainConfig) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.lr_final_frac > 0.0 && cfg.lr_final_frac <= 1.0) {
        return Err(Error::Config(format!(
            "invalid batch size {} / lr {} / lr_final_frac {}",
            cfg.batch_size, cfg.lr, cfg.lr_final_frac
        )));
    }
    cfg.weights.validate()?;
    for s in train_set.iter().chain(val_set) {
        Target::of(s).validate()?;
    }
    let mut adam = AdamState::new(net.param_count(), cfg.lr);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = (per_epoch * cfg.epochs).max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::derive_indexed(cfg.seed, "shuffle", epoch as u64)));
        let mut sum = LossParts::default();
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&SampleTensor> = idx.iter().map(|&i| &train_set[i]).collect();
            let (parts, grad) = match batch_gradient(net, &batch, &cfg.weights, cfg.jobs) {
                Ok(v) => v,
                Err(e) if is_numeric(&e) => {
                    report.diverged = Some(e.to_string());
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                report.diverged = Some(format!("non-finite loss at epoch {epoch}, step {}", report.steps));
                return Ok(report);
            }
            let progress = report.steps as f64 / total_steps as f64;
            let f = cfg.lr_final_frac;
            adam.lr = cfg.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
            adam_step(&mut net.params, &grad, &mut adam)?;
            report.steps += 1;
            let mut weighted = parts;
            weighted.scale(batch.len() as f64);
            sum.add(&weighted);
        }
        sum.scale(1.0 / train_set.len() as f64);
        report.history.push(EpochRecord {
            epoch,
            split: Split::Train,
            loss: sum,
        });
        let mut line = format!("epoch {epoch}: train L={:.5}", sum.total);
        if !val_set.is_empty() {
            match evaluate_loss(net, val_set, &cfg.weights, cfg.jobs) {
                Ok(v) => {
                    line += &format!(" val L={:.5} (ttc {:.4} theta {:.4} r {:.4})", v.total, v.ttc, v.theta, v.r);
                    report.history.push(EpochRecord {
                        epoch,
                        split: Split::Val,
                        loss: v,
                    });
                }
                Err(e) if is_numeric(&e) => {
                    report.diverged = Some(e.to_string());
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }
        log::info!("{line}");
    }
    Ok(report)
}
