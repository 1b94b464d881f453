use crate::error::{Error, Result};
use crate::filterbank::SampleTensor;
use crate::geom::{R_BINS, THETA_BINS};
use crate::real::Real;

use super::layers::{log_softmax, softmax};
use super::model::{OutputGrad, Prediction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w_ttc: f64,
    pub w_theta: f64,
    pub w_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_ttc: 1.0,
            w_theta: 1.0,
            w_r: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_ttc, self.w_theta, self.w_r];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|&v| v == 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative and not all zero: {w:?}")));
        }
        Ok(())
    }

    pub fn scaled(self, c: f64) -> Self {
        LossWeights {
            w_ttc: self.w_ttc * c,
            w_theta: self.w_theta * c,
            w_r: self.w_r * c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub tau_s: f64,
    pub theta_bin: usize,
    pub r_bin: usize,
}

impl Target {
    pub fn of(s: &SampleTensor) -> Self {
        Target {
            tau_s: s.tau_s(),
            theta_bin: s.theta_bin as usize,
            r_bin: s.r_bin as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_bin >= THETA_BINS || self.r_bin >= R_BINS {
            return Err(Error::Data(format!("label bins out of range: theta {} r {}", self.theta_bin, self.r_bin)));
        }
        if !(self.tau_s >= 0.0 && self.tau_s.is_finite()) {
            return Err(Error::Data(format!("time to collision must be finite and >= 0, got {}", self.tau_s)));
        }
        Ok(())
    }
}

/// Batch-mean loss terms; `total` already includes the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ttc: f64,
    pub theta: f64,
    pub r: f64,
}

impl LossParts {
    pub fn add(&mut self, o: &LossParts) {
        self.total += o.total;
        self.ttc += o.ttc;
        self.theta += o.theta;
        self.r += o.r;
    }

    pub fn scale(&mut self, c: f64) {
        self.total *= c;
        self.ttc *= c;
        self.theta *= c;
        self.r *= c;
    }
}

/// Loss and output gradient for one sample, with the batch mean folded in via `1 / batch`.
///
/// The τ term is `((τ̂ − τ) / tau_scale)²`.
pub fn sample_loss<T: Real>(
    pred: &Prediction<T>,
    target: &Target,
    weights: &LossWeights,
    tau_scale: f64,
    batch: usize,
) -> Result<(LossParts, OutputGrad<T>)> {
    target.validate()?;
    if pred.theta_logits.len() != THETA_BINS || pred.r_logits.len() != R_BINS {
        return Err(Error::Shape(format!(
            "expected {THETA_BINS} + {R_BINS} logits, got {} + {}",
            pred.theta_logits.len(),
            pred.r_logits.len()
        )));
    }
    let inv_b = T::lit(1.0 / batch as f64);
    let scale = T::lit(tau_scale);
    let diff = (pred.tau_s - T::lit(target.tau_s)) / scale;
    let ttc = diff * diff;
    let ce = |logits: &[T], k: usize, w: f64| -> (T, Vec<T>) {
        let loss = -log_softmax(logits)[k];
        let mut g = softmax(logits);
        g[k] -= T::one();
        g.iter_mut().for_each(|v| *v *= T::lit(w) * inv_b);
        (loss, g)
    };
    let (l_theta, g_theta) = ce(&pred.theta_logits, target.theta_bin, weights.w_theta);
    let (l_r, g_r) = ce(&pred.r_logits, target.r_bin, weights.w_r);
    let parts = LossParts {
        total: weights.w_ttc * ttc.as_f64() + weights.w_theta * l_theta.as_f64() + weights.w_r * l_r.as_f64(),
        ttc: ttc.as_f64(),
        theta: l_theta.as_f64(),
        r: l_r.as_f64(),
    };
    let grad = OutputGrad {
        tau_s: T::lit(2.0 * weights.w_ttc) * diff / scale * inv_b,
        theta: g_theta,
        r: g_r,
    };
    Ok((parts, grad))
}

/// Batch-mean loss and per-sample output gradients.
pub fn loss<T: Real>(
    preds: &[Prediction<T>],
    targets: &[Target],
    weights: &LossWeights,
    tau_scale: f64,
) -> Result<(LossParts, Vec<OutputGrad<T>>)> {
    weights.validate()?;
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let mut total = LossParts::default();
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(targets) {
        let (parts, g) = sample_loss(p, t, weights, tau_scale, preds.len())?;
        total.add(&parts);
        grads.push(g);
    }
    total.scale(1.0 / preds.len() as f64);
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(tau: f64, th: Vec<f64>, r: Vec<f64>) -> Prediction<f64> {
        Prediction {
            tau_s: tau,
            theta_logits: th,
            r_logits: r,
        }
    }

    const T0: Target = Target {
        tau_s: 0.2,
        theta_bin: 3,
        r_bin: 1,
    };

    #[test]
    fn uniform_logits_give_log_bins() {
        let (l, _) = loss(&[pred(0.2, vec![0.0; 12], vec![0.0; 4])], &[T0], &LossWeights::default(), 1.0).unwrap();
        assert!((l.theta - 12f64.ln()).abs() < 1e-12);
        assert!((l.theta - 2.4849).abs() < 1e-4);
        assert!((l.r - 4f64.ln()).abs() < 1e-12);
        assert_eq!(l.ttc, 0.0);
    }

    #[test]
    fn saturated_correct_logits_reach_zero() {
        let mut th = vec![-500.0; 12];
        th[3] = 500.0;
        let mut r = vec![-500.0; 4];
        r[1] = 500.0;
        let (l, _) = loss(&[pred(0.2, th, r)], &[T0], &LossWeights::default(), 1.0).unwrap();
        assert!(l.total.abs() < 1e-12);
    }

    #[test]
    fn tau_offset_mse() {
        let w = LossWeights {
            w_ttc: 3.0,
            w_theta: 0.0,
            w_r: 0.0,
        };
        let (l, _) = loss(&[pred(0.3, vec![0.0; 12], vec![0.0; 4])], &[T0], &w, 1.0).unwrap();
        assert!((l.total - 0.03).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = pred(0.2, vec![0.0; 12], vec![0.0; 4]);
        let bad = Target { theta_bin: 12, ..T0 };
        assert!(loss(&[p.clone()], &[bad], &LossWeights::default(), 1.0).is_err());
        let neg = Target { tau_s: -0.1, ..T0 };
        assert!(loss(&[p.clone()], &[neg], &LossWeights::default(), 1.0).is_err());
        let zero = LossWeights {
            w_ttc: 0.0,
            w_theta: 0.0,
            w_r: 0.0,
        };
        assert!(loss(&[p], &[T0], &zero, 1.0).is_err());
    }

    #[test]
    fn weight_scaling_scales_loss_and_gradients() {
        let preds = vec![pred(0.1, (0..12).map(|i| i as f64 * 0.3).collect(), vec![0.5, -1.0, 2.0, 0.0]); 2];
        let targets = [T0, Target { tau_s: 0.05, theta_bin: 7, r_bin: 3 }];
        let w = LossWeights { w_ttc: 0.7, w_theta: 1.3, w_r: 0.4 };
        let (a, ga) = loss(&preds, &targets, &w, 0.5).unwrap();
        let (b, gb) = loss(&preds, &targets, &w.scaled(4.0), 0.5).unwrap();
        assert!((b.total - 4.0 * a.total).abs() < 1e-12);
        for (x, y) in ga.iter().zip(&gb) {
            assert!((y.tau_s - 4.0 * x.tau_s).abs() < 1e-12);
            for (u, v) in x.theta.iter().chain(&x.r).zip(y.theta.iter().chain(&y.r)) {
                assert!((v - 4.0 * u).abs() < 1e-12);
            }
        }
        let (c, _) = loss(&[preds[1].clone(), preds[0].clone()], &[targets[1], targets[0]], &w, 0.5).unwrap();
        assert!((c.total - a.total).abs() < 1e-12);
    }
}
