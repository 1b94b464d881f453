use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{R_BINS, R_BIN_MIN_MM, THETA_BINS, THETA_BIN_DEG};
use crate::inference::PredictionRecord;

pub const BALL_INTERVALS_S: [f64; 4] = [0.3, 0.2, 0.1, 0.0];
pub const DART_INTERVALS_S: [f64; 5] = [0.04, 0.03, 0.02, 0.01, 0.0];

/// `|τ − τ̂| / τ`.
pub fn ttc_error(tau: f64, tau_hat: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Data(format!("time to collision must be positive, got {tau}")));
    }
    Ok((tau - tau_hat).abs() / tau)
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn check_theta(b: usize) -> Result<()> {
    if b >= THETA_BINS {
        return Err(Error::Data(format!("theta bin {b} out of range 0..{THETA_BINS}")));
    }
    Ok(())
}

fn check_r(b: usize) -> Result<()> {
    if b >= R_BINS {
        return Err(Error::Data(format!("radius bin {b} out of range 0..{R_BINS}")));
    }
    Ok(())
}

/// Circular bin distance in degrees.
pub fn theta_error(theta: usize, theta_hat: usize) -> Result<f64> {
    check_theta(theta)?;
    check_theta(theta_hat)?;
    let d = theta.abs_diff(theta_hat);
    Ok(THETA_BIN_DEG * d.min(THETA_BINS - d) as f64)
}

/// Literal non-circular form `30 · |θ − θ̂|²`.
pub fn theta_error_squared(theta: usize, theta_hat: usize) -> Result<f64> {
    check_theta(theta)?;
    check_theta(theta_hat)?;
    Ok(THETA_BIN_DEG * (theta.abs_diff(theta_hat) as f64).powi(2))
}

/// `|f(r) − f(r̂)|` in mm, `f` being the lower edge of each bin.
pub fn radius_error(r: usize, r_hat: usize) -> Result<f64> {
    check_r(r)?;
    check_r(r_hat)?;
    Ok((R_BIN_MIN_MM[r] - R_BIN_MIN_MM[r_hat]).abs())
}

pub fn radius_error_squared(r: usize, r_hat: usize) -> Result<f64> {
    Ok(radius_error(r, r_hat)?.powi(2))
}

/// Labelled prediction reduced to what the metrics need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub tau: f64,
    pub tau_hat: f64,
    pub theta: usize,
    pub theta_hat: usize,
    pub r: usize,
    pub r_hat: usize,
}

/// Which θ/r estimate of a record is scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimate {
    Instantaneous,
    Smoothed,
}

impl Estimate {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "instantaneous" => Ok(Estimate::Instantaneous),
            "smoothed" => Ok(Estimate::Smoothed),
            _ => Err(Error::Config(format!("estimate must be instantaneous or smoothed, got {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimate::Instantaneous => "instantaneous",
            Estimate::Smoothed => "smoothed",
        }
    }
}

/// Rows for every record carrying ground truth.
pub fn rows_from_records(records: &[PredictionRecord], estimate: Estimate) -> Vec<EvalRow> {
    records
        .iter()
        .filter_map(|r| {
            let (tau, theta, rb) = (r.tau_true_s?, r.theta_true?, r.r_true?);
            let (th, rh) = match estimate {
                Estimate::Instantaneous => (r.theta_hat(), r.r_hat()),
                Estimate::Smoothed => (r.posterior.theta_bin(), r.posterior.r_bin()),
            };
            Some(EvalRow {
                tau,
                tau_hat: r.tau_hat_s,
                theta,
                theta_hat: th,
                r: rb,
                r_hat: rh,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricSet {
    pub n: usize,
    /// Rows with τ ≤ 0, left out of the TTC median.
    pub excluded_tau: usize,
    /// Fraction (0.25 = 25 %); NaN when no row has τ > 0.
    pub median_ttc_error: f64,
    pub mean_theta_deg: f64,
    pub mean_radius_mm: f64,
    pub mean_theta_sq: f64,
    pub mean_radius_sq_mm2: f64,
}

impl MetricSet {
    pub fn compute(rows: &[EvalRow]) -> Result<Self> {
        let mut ttc = Vec::with_capacity(rows.len());
        let (mut th, mut r, mut th2, mut r2) = (0.0, 0.0, 0.0, 0.0);
        let mut excluded = 0;
        for row in rows {
            if row.tau > 0.0 {
                ttc.push(ttc_error(row.tau, row.tau_hat)?);
            } else {
                excluded += 1;
            }
            th += theta_error(row.theta, row.theta_hat)?;
            th2 += theta_error_squared(row.theta, row.theta_hat)?;
            r += radius_error(row.r, row.r_hat)?;
            r2 += radius_error_squared(row.r, row.r_hat)?;
        }
        if excluded > 0 {
            log::info!("{excluded} samples with non-positive time to collision excluded from the TTC median");
        }
        let n = rows.len();
        let mean = |s: f64| if n == 0 { f64::NAN } else { s / n as f64 };
        Ok(MetricSet {
            n,
            excluded_tau: excluded,
            median_ttc_error: median(&ttc).unwrap_or(f64::NAN),
            mean_theta_deg: mean(th),
            mean_radius_mm: mean(r),
            mean_theta_sq: mean(th2),
            mean_radius_sq_mm2: mean(r2),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMetrics {
    /// Interval is `(lo, hi]` in seconds of true time to collision.
    pub lo: f64,
    pub hi: f64,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub global: MetricSet,
    pub intervals: Vec<IntervalMetrics>,
    /// `(τ, τ̂)` pairs for the correlation plot.
    pub correlation: Vec<(f64, f64)>,
}

/// Global and per-interval metrics. `edges` are strictly decreasing τ values.
pub fn interval_report(rows: &[EvalRow], edges: &[f64]) -> Result<MetricReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Config(format!("interval edges must be strictly decreasing, got {edges:?}")));
    }
    let intervals = edges
        .windows(2)
        .map(|w| {
            let (hi, lo) = (w[0], w[1]);
            let inside: Vec<EvalRow> = rows.iter().copied().filter(|r| r.tau > lo && r.tau <= hi).collect();
            Ok(IntervalMetrics {
                lo,
                hi,
                metrics: MetricSet::compute(&inside)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        global: MetricSet::compute(rows)?,
        intervals,
        correlation: rows.iter().map(|r| (r.tau, r.tau_hat)).collect(),
    })
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scope,lo_s,hi_s,n,median_ttc_error,mean_theta_deg,mean_radius_mm,mean_theta_sq,mean_radius_sq_mm2\n");
        let mut row = |scope: &str, lo: String, hi: String, m: &MetricSet| {
            let _ = writeln!(
                s,
                "{scope},{lo},{hi},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.n, m.median_ttc_error, m.mean_theta_deg, m.mean_radius_mm, m.mean_theta_sq, m.mean_radius_sq_mm2
            );
        };
        row("global", String::new(), String::new(), &self.global);
        for iv in &self.intervals {
            row("interval", format!("{}", iv.lo), format!("{}", iv.hi), &iv.metrics);
        }
        s
    }

    pub fn correlation_csv(&self) -> String {
        let mut s = String::from("tau_s,tau_hat_s\n");
        for (t, h) in &self.correlation {
            let _ = writeln!(s, "{t:.6},{h:.6}");
        }
        s
    }

    pub fn summary(&self) -> String {
        let g = &self.global;
        let mut s = format!(
            "n={} median TTC error {:.2}% | mean theta error {:.2} deg | mean radius error {:.2} mm\n",
            g.n,
            100.0 * g.median_ttc_error,
            g.mean_theta_deg,
            g.mean_radius_mm
        );
        for iv in &self.intervals {
            let m = &iv.metrics;
            let _ = writeln!(
                s,
                "  tau ({:.3}, {:.3}] s: n={:<5} ttc {:>7.2}% theta {:>6.2} deg radius {:>6.2} mm",
                iv.lo,
                iv.hi,
                m.n,
                100.0 * m.median_ttc_error,
                m.mean_theta_deg,
                m.mean_radius_mm
            );
        }
        s
    }
}
