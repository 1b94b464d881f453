//! Streaming prediction and recursive Bayesian smoothing of the θ/r heads.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::event::EventStream;
use crate::filterbank::Encoder;
use crate::geom::{ImpactLabel, R_BINS, THETA_BINS};
use crate::nnet::{softmax, Network, Tensor};
use crate::real::Real;

/// Tolerance on the sum of an input probability vector.
const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior<T> {
    pub p_theta: Vec<T>,
    pub p_r: Vec<T>,
    pub updates: u64,
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn entropy<T: Real>(v: &[T]) -> T {
    v.iter().filter(|p| **p > T::zero()).map(|&p| -p * p.ln()).sum()
}

impl<T: Real> Posterior<T> {
    pub fn uniform() -> Self {
        Posterior {
            p_theta: vec![T::lit(1.0 / THETA_BINS as f64); THETA_BINS],
            p_r: vec![T::lit(1.0 / R_BINS as f64); R_BINS],
            updates: 0,
        }
    }

    pub fn theta_bin(&self) -> usize {
        argmax(&self.p_theta)
    }

    pub fn r_bin(&self) -> usize {
        argmax(&self.p_r)
    }

    /// Summed Shannon entropy of both distributions (nats).
    pub fn entropy(&self) -> T {
        entropy(&self.p_theta) + entropy(&self.p_r)
    }
}

fn check_probs<T: Real>(v: &[T], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{what}: expected {n} probabilities, got {}", v.len())));
    }
    if v.iter().any(|p| !(p.is_finite() && *p >= T::zero())) {
        return Err(Error::Data(format!("{what}: probabilities must be finite and non-negative")));
    }
    let s = v.iter().copied().sum::<T>().as_f64();
    if (s - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::Data(format!("{what}: probabilities sum to {s}")));
    }
    Ok(())
}

/// `post_k ∝ prior_k^λ · like_k` in the log domain. Returns `None` when the
/// product vanishes everywhere.
fn update_one<T: Real>(prior: &[T], like: &[T], lambda: T) -> Option<Vec<T>> {
    let logs: Vec<T> = prior
        .iter()
        .zip(like)
        .map(|(&p, &l)| {
            lambda * p.ln() + l.ln()
        })
        .collect();
    let m = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return None;
    }
    let e: Vec<T> = logs.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    Some(e.into_iter().map(|v| v / s).collect())
}

/// One recursive Bayesian step with forgetting factor `lambda`
/// (1 = pure product, 0 = instantaneous likelihood).
pub fn bayes_update<T: Real>(prior: &Posterior<T>, like_theta: &[T], like_r: &[T], lambda: f64) -> Result<Posterior<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("forgetting factor must lie in [0, 1], got {lambda}")));
    }
    check_probs(like_theta, THETA_BINS, "theta likelihood")?;
    check_probs(like_r, R_BINS, "r likelihood")?;
    if lambda == 0.0 {
        // No memory: the posterior is the likelihood itself.
        return Ok(Posterior {
            p_theta: like_theta.to_vec(),
            p_r: like_r.to_vec(),
            updates: prior.updates + 1,
        });
    }
    let lam = T::lit(lambda);
    let step = |prior: &[T], like: &[T], what: &str| {
        update_one(prior, like, lam).unwrap_or_else(|| {
            log::warn!("{what} posterior underflowed; resetting to the likelihood");
            like.to_vec()
        })
    };
    Ok(Posterior {
        p_theta: step(&prior.p_theta, like_theta, "theta"),
        p_r: step(&prior.p_r, like_r, "r"),
        updates: prior.updates + 1,
    })
}

/// One prediction of the stream with its smoothed posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub t_s: f64,
    pub tau_hat_s: f64,
    /// Ground truth where known.
    pub tau_true_s: Option<f64>,
    pub theta_true: Option<usize>,
    pub r_true: Option<usize>,
    pub p_theta: Vec<f64>,
    pub p_r: Vec<f64>,
    pub posterior: Posterior<f64>,
    pub latency_us: f64,
}

impl PredictionRecord {
    pub fn theta_hat(&self) -> usize {
        argmax(&self.p_theta)
    }

    pub fn r_hat(&self) -> usize {
        argmax(&self.p_r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    pub cadence_us: u64,
    pub step_us: u64,
    /// First snapshot is at `t_start_us + cadence_us`.
    pub t_start_us: u64,
    /// Last snapshot is at or before `t_end_us`.
    pub t_end_us: u64,
    pub lambda: f64,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_us == 0 || self.cadence_us == 0 || self.cadence_us % self.step_us != 0 {
            return Err(Error::Config(format!(
                "cadence {} us must be a positive multiple of the {} us filter step",
                self.cadence_us, self.step_us
            )));
        }
        Ok(())
    }

    pub fn times(&self) -> impl Iterator<Item = u64> + '_ {
        (1..)
            .map(move |k| self.t_start_us + k * self.cadence_us)
            .take_while(move |&t| t <= self.t_end_us)
    }
}

/// Runs encoder + network over `stream` at the configured cadence, smoothing
/// θ/r with a posterior that starts uniform.
pub fn predict_stream<T: Real>(
    stream: &EventStream,
    encoder: &mut dyn Encoder,
    net: &Network<T>,
    cfg: &StreamConfig,
    truth: Option<&ImpactLabel<f64>>,
) -> Result<Vec<PredictionRecord>> {
    cfg.validate()?;
    let (h, w) = encoder.output_shape();
    let want = net.config().input;
    if (encoder.channels(), h, w) != want {
        return Err(Error::Shape(format!(
            "encoder produces ({}, {h}, {w}) but the model expects {want:?}",
            encoder.channels()
        )));
    }
    if stream.is_empty() {
        return Ok(Vec::new());
    }
    let mut post = Posterior::<f64>::uniform();
    let mut out = Vec::new();
    for t in cfg.times() {
        let started = Instant::now();
        encoder.advance_to(stream, t)?;
        let pred = net.forward_one(&Tensor::from_sample(&encoder.snapshot()))?;
        let p_theta: Vec<f64> = softmax(&pred.theta_logits).into_iter().map(Real::as_f64).collect();
        let p_r: Vec<f64> = softmax(&pred.r_logits).into_iter().map(Real::as_f64).collect();
        post = bayes_update(&post, &p_theta, &p_r, cfg.lambda)?;
        let latency_us = started.elapsed().as_secs_f64() * 1e6;
        let t_s = t as f64 * 1e-6;
        log::debug!("t={t_s:.4}s latency {latency_us:.0}us");
        out.push(PredictionRecord {
            t_s,
            tau_hat_s: pred.tau_s.as_f64(),
            tau_true_s: truth.map(|l| l.t_impact - t_s),
            theta_true: truth.map(|l| l.theta_bin),
            r_true: truth.map(|l| l.r_bin),
            p_theta,
            p_r,
            posterior: post.clone(),
            latency_us,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowEstimate {
    pub theta_bin: usize,
    pub r_bin: usize,
    pub posterior: Posterior<f64>,
    /// Standard deviation of per-record argmax bins (θ measured circularly around the estimate).
    pub theta_std_bins: f64,
    pub r_std_bins: f64,
    pub n: usize,
}

fn circ_delta(a: usize, b: usize) -> f64 {
    let d = (a as i64 - b as i64).rem_euclid(THETA_BINS as i64);
    if d > THETA_BINS as i64 / 2 {
        (d - THETA_BINS as i64) as f64
    } else {
        d as f64
    }
}

fn std_dev(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Posterior built only from the records with `t_start <= t_s <= t_end`.
pub fn windowed_estimate(records: &[PredictionRecord], t_start: f64, t_end: f64, lambda: f64) -> Result<WindowEstimate> {
    let inside: Vec<&PredictionRecord> = records.iter().filter(|r| r.t_s >= t_start && r.t_s <= t_end).collect();
    if inside.is_empty() {
        return Err(Error::Data(format!("no predictions in window [{t_start}, {t_end}] s")));
    }
    let mut post = Posterior::uniform();
    for r in &inside {
        post = bayes_update(&post, &r.p_theta, &r.p_r, lambda)?;
    }
    let (tb, rb) = (post.theta_bin(), post.r_bin());
    Ok(WindowEstimate {
        theta_bin: tb,
        r_bin: rb,
        theta_std_bins: std_dev(inside.iter().map(|r| circ_delta(r.theta_hat(), tb))),
        r_std_bins: std_dev(inside.iter().map(|r| r.r_hat() as f64)),
        posterior: post,
        n: inside.len(),
    })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn predictions_csv_header() -> String {
    let mut h = String::from("recording,t_s,tau_hat_s,tau_true_s");
    for (prefix, n) in [("p_theta", THETA_BINS), ("p_r", R_BINS), ("post_theta", THETA_BINS), ("post_r", R_BINS)] {
        for i in 0..n {
            let _ = write!(h, ",{prefix}_{i}");
        }
    }
    h + ",theta_hat,r_hat,post_theta_hat,post_r_hat,theta_true,r_true,latency_us\n"
}

/// Appends rows for one recording.
pub fn predictions_csv_rows(recording: &str, records: &[PredictionRecord], out: &mut String) {
    for r in records {
        let _ = write!(out, "{recording},{:.6},{:.6},{}", r.t_s, r.tau_hat_s, opt(r.tau_true_s.map(|t| format!("{t:.6}"))));
        for p in r.p_theta.iter().chain(&r.p_r).chain(&r.posterior.p_theta).chain(&r.posterior.p_r) {
            let _ = write!(out, ",{p:.9e}");
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},{:.1}",
            r.theta_hat(),
            r.r_hat(),
            r.posterior.theta_bin(),
            r.posterior.r_bin(),
            opt(r.theta_true),
            opt(r.r_true),
            r.latency_us
        );
    }
}

/// Parsed predictions file, grouped by recording in file order.
pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions_csv(&text)
}

pub fn parse_predictions_csv(text: &str) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == predictions_csv_header().trim() => {}
        _ => return Err(Error::parse(1, "missing or unexpected predictions header")),
    }
    let width = 4 + 2 * (THETA_BINS + R_BINS) + 7;
    let mut out: Vec<(String, Vec<PredictionRecord>)> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::parse(n as u64 + 1, m.to_string());
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != width {
            return Err(bad(&format!("expected {width} fields, got {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
        let opt_num = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
        let opt_bin = |s: &str| -> Result<Option<usize>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                s.trim().parse().map(Some).map_err(|_| bad(&format!("bad bin {s:?}")))
            }
        };
        let probs = |a: usize, b: usize| -> Result<Vec<f64>> { f[a..b].iter().map(|s| num(s)).collect() };
        let o = 4;
        let rec = PredictionRecord {
            t_s: num(f[1])?,
            tau_hat_s: num(f[2])?,
            tau_true_s: opt_num(f[3])?,
            p_theta: probs(o, o + THETA_BINS)?,
            p_r: probs(o + THETA_BINS, o + THETA_BINS + R_BINS)?,
            posterior: Posterior {
                p_theta: probs(o + THETA_BINS + R_BINS, o + 2 * THETA_BINS + R_BINS)?,
                p_r: probs(o + 2 * THETA_BINS + R_BINS, o + 2 * (THETA_BINS + R_BINS))?,
                updates: 0,
            },
            theta_true: opt_bin(f[width - 3])?,
            r_true: opt_bin(f[width - 2])?,
            latency_us: num(f[width - 1])?,
        };
        match out.last_mut() {
            Some((id, recs)) if id == f[0] => recs.push(rec),
            _ => out.push((f[0].to_string(), vec![rec])),
        }
    }
    for (_, recs) in &mut out {
        for (i, r) in recs.iter_mut().enumerate() {
            r.posterior.updates = i as u64 + 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peaked(n: usize, k: usize, mass: f64) -> Vec<f64> {
        let mut v = vec![(1.0 - mass) / (n - 1) as f64; n];
        v[k] = mass;
        v
    }

    #[test]
    fn uniform_prior_gives_likelihood() {
        let lt = peaked(12, 4, 0.3);
        let lr = peaked(4, 2, 0.6);
        let p = bayes_update(&Posterior::uniform(), &lt, &lr, 1.0).unwrap();
        for (a, b) in p.p_theta.iter().zip(&lt).chain(p.p_r.iter().zip(&lr)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_rule_and_lambda_zero() {
        let lt: Vec<f64> = (1..=12).map(|i| i as f64 / 78.0).collect();
        let lr = vec![0.1, 0.2, 0.3, 0.4];
        let p1 = bayes_update(&Posterior::uniform(), &lt, &lr, 1.0).unwrap();
        let p2 = bayes_update(&p1, &lt, &lr, 1.0).unwrap();
        let z: f64 = lt.iter().map(|v| v * v).sum();
        for (a, l) in p2.p_theta.iter().zip(&lt) {
            assert!((a - l * l / z).abs() < 1e-12);
        }
        let p0 = bayes_update(&p2, &lt, &lr, 0.0).unwrap();
        assert_eq!(p0.p_theta, lt);
        assert_eq!(p0.p_r, lr);
    }

    #[test]
    fn underflow_resets_to_likelihood() {
        let mut prior = Posterior::<f64>::uniform();
        prior.p_theta = peaked(12, 0, 1.0);
        let lt = peaked(12, 5, 1.0);
        let p = bayes_update(&prior, &lt, &[0.25; 4], 1.0).unwrap();
        assert_eq!(p.p_theta, lt);
    }

    #[test]
    fn invalid_likelihood_rejected() {
        let u = Posterior::<f64>::uniform();
        assert!(bayes_update(&u, &[0.5; 12], &[0.25; 4], 1.0).is_err());
        assert!(bayes_update(&u, &[1.0 / 12.0; 11], &[0.25; 4], 1.0).is_err());
        assert!(bayes_update(&u, &[1.0 / 12.0; 12], &[0.25; 4], 1.5).is_err());
    }

    #[test]
    fn window_of_one_record_and_empty_window() {
        let rec = PredictionRecord {
            t_s: 0.01,
            tau_hat_s: 0.02,
            tau_true_s: None,
            theta_true: None,
            r_true: None,
            p_theta: peaked(12, 3, 0.4),
            p_r: peaked(4, 1, 0.7),
            posterior: Posterior::uniform(),
            latency_us: 0.0,
        };
        let w = windowed_estimate(&[rec.clone()], 0.0, 1.0, 1.0).unwrap();
        assert_eq!(w.theta_bin, 3);
        assert!((w.posterior.p_theta[3] - 0.4).abs() < 1e-12);
        assert_eq!(w.theta_std_bins, 0.0);
        assert!(windowed_estimate(&[rec], 0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rec = PredictionRecord {
            t_s: 0.003,
            tau_hat_s: 0.25,
            tau_true_s: Some(0.26),
            theta_true: Some(7),
            r_true: Some(2),
            p_theta: peaked(12, 7, 0.5),
            p_r: peaked(4, 2, 0.7),
            posterior: Posterior {
                p_theta: peaked(12, 7, 0.5),
                p_r: peaked(4, 2, 0.7),
                updates: 1,
            },
            latency_us: 12.5,
        };
        let mut s = predictions_csv_header();
        predictions_csv_rows("ball_0001", &[rec.clone()], &mut s);
        predictions_csv_rows("ball_0002", &[rec.clone(), rec.clone()], &mut s);
        let back = parse_predictions_csv(&s).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].1.len(), 2);
        let r = &back[0].1[0];
        assert_eq!((r.theta_true, r.r_true, r.theta_hat(), r.r_hat()), (Some(7), Some(2), 7, 2));
        assert!((r.p_theta[7] - 0.5).abs() < 1e-9);
        assert!(parse_predictions_csv("nope\n").is_err());
    }
}
