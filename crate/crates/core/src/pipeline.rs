//! End-to-end stages: simulate, augment, encode, train, predict, evaluate.

use std::fs;
use std::path::{Path, PathBuf};

use crate::augment::{augment_recording, BalancedSampler};
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{
    convexhull_baseline, hough_circle_baseline, interval_report, rows_from_records, EvalRow, HoughConfig, MetricReport,
};
use crate::event::CountFrame;
use crate::filterbank::{BinnedEncoder, Encoder, FilterBank, SampleTensor};
use crate::inference::{predict_stream, PredictionRecord, StreamConfig};
use crate::nnet::{encode_checkpoint, train, Network, TrainConfig, TrainReport};
use crate::real::Real;
use crate::seed;
use crate::sim::{build_dataset, parse_kv, position_at, Dataset, Recording};

/// Largest validation subset evaluated after each epoch.
pub const MAX_VAL_SAMPLES: usize = 512;

pub fn simulate(cfg: &RunConfig, jobs: usize) -> Result<Dataset> {
    let mut d = cfg.dataset_config();
    d.jobs = jobs;
    build_dataset(cfg.n_recordings(), &d, cfg.stage_seed("simulate"))
}

/// Originals followed by `copies` augmented variants of each recording.
pub fn augment_set(recs: &[Recording], copies: usize, cfg: &RunConfig, tag: &str, jobs: usize) -> Result<Vec<Recording>> {
    let sampler = BalancedSampler {
        max_shift: cfg.max_shift_m,
        r_outer: cfg.r_outer_m,
        window_us: cfg.period_us(),
    };
    let base = seed::derive(cfg.stage_seed("augment"), tag);
    let jobs_in: Vec<(usize, usize)> = (0..recs.len()).flat_map(|i| (0..copies).map(move |k| (i, k))).collect();
    let made = seed::parallel_map(jobs_in, jobs, |(i, k)| {
        let rec = &recs[i];
        let mut rng = seed::rng(seed::derive_indexed(seed::derive(base, &rec.id), "copy", k as u64));
        let specs = sampler.sample(&rec.impact, &mut rng);
        augment_recording(rec, &specs, format!("{}_aug{k:02}", rec.id))
    });
    let mut out = recs.to_vec();
    for r in made {
        out.push(r?);
    }
    Ok(out)
}

pub fn make_encoder(cfg: &RunConfig, rec: &Recording) -> Result<Box<dyn Encoder>> {
    let (w, h) = (rec.events.width(), rec.events.height());
    let fc = cfg.filter_config();
    Ok(if cfg.filter_enabled {
        Box::new(FilterBank::<f64>::new(fc, w, h, 0)?)
    } else {
        Box::new(BinnedEncoder::new(&fc, cfg.bin_us, w, h)?)
    })
}

/// Snapshot schedule covering the labelled window before impact.
pub fn stream_config(cfg: &RunConfig, rec: &Recording) -> StreamConfig {
    let cadence = cfg.period_us();
    let t_impact = rec.t_impact_us();
    let window = (cfg.tau_window_s() * 1e6).round() as u64;
    let k0 = t_impact.saturating_sub(window + cadence) / cadence;
    StreamConfig {
        cadence_us: cadence,
        step_us: cfg.step_us,
        t_start_us: k0 * cadence,
        t_end_us: t_impact,
        lambda: cfg.lambda,
    }
}

fn in_window(tau: f64, window: f64) -> bool {
    tau > 0.0 && tau <= window + 1e-9
}

/// Labelled snapshots with `0 < τ ≤ tau_window`.
pub fn encode_recording(cfg: &RunConfig, rec: &Recording) -> Result<Vec<SampleTensor>> {
    let mut enc = make_encoder(cfg, rec)?;
    let sc = stream_config(cfg, rec);
    let window = cfg.tau_window_s();
    let mut out = Vec::new();
    for t in sc.times() {
        let tau = rec.impact.t_impact - t as f64 * 1e-6;
        if !in_window(tau, window) {
            continue;
        }
        enc.advance_to(&rec.events, t)?;
        let mut s = enc.snapshot();
        s.t_us = t;
        s.tau_ms = tau * 1e3;
        s.r_bin = rec.impact.r_bin as u8;
        s.theta_bin = rec.impact.theta_bin as u8;
        out.push(s);
    }
    Ok(out)
}

pub fn encode_set(cfg: &RunConfig, recs: &[Recording], jobs: usize) -> Result<Vec<SampleTensor>> {
    let per: Vec<Result<Vec<SampleTensor>>> = seed::parallel_map(recs.iter().collect(), jobs, |r| encode_recording(cfg, r));
    let mut out = Vec::new();
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

pub fn train_config(cfg: &RunConfig, jobs: usize) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size(),
        lr: cfg.lr,
        lr_final_frac: cfg.lr_final_frac,
        weights: cfg.weights,
        seed: cfg.stage_seed("train"),
        jobs,
    }
}

/// Evenly strided subset of at most `max` samples.
pub fn validation_subset(samples: &[SampleTensor], max: usize) -> Vec<SampleTensor> {
    let stride = samples.len().div_ceil(max.max(1)).max(1);
    samples.iter().step_by(stride).cloned().collect()
}

pub fn train_network<T: Real>(cfg: &RunConfig, train_set: &[SampleTensor], val_set: &[SampleTensor], jobs: usize) -> Result<(Network<T>, TrainReport)> {
    let mut net = Network::<T>::new(cfg.model_config(), cfg.stage_seed("init"))?;
    let report = train(&mut net, train_set, val_set, &train_config(cfg, jobs))?;
    Ok((net, report))
}

pub fn predict_recordings<T: Real>(cfg: &RunConfig, net: &Network<T>, recs: &[Recording], jobs: usize) -> Result<Vec<(String, Vec<PredictionRecord>)>> {
    let out = seed::parallel_map(recs.iter().collect(), jobs, |rec: &Recording| -> Result<(String, Vec<PredictionRecord>)> {
        let mut enc = make_encoder(cfg, rec)?;
        let recs = predict_stream(&rec.events, enc.as_mut(), net, &stream_config(cfg, rec), Some(&rec.impact))?;
        Ok((rec.id.clone(), recs))
    });
    out.into_iter().collect()
}

/// Rows inside the evaluation window.
pub fn eval_rows(cfg: &RunConfig, preds: &[(String, Vec<PredictionRecord>)]) -> Vec<EvalRow> {
    let window = cfg.tau_window_s();
    preds
        .iter()
        .flat_map(|(_, r)| rows_from_records(r, cfg.estimate))
        .filter(|r| in_window(r.tau, window))
        .collect()
}

pub fn evaluate(cfg: &RunConfig, preds: &[(String, Vec<PredictionRecord>)]) -> Result<MetricReport> {
    interval_report(&eval_rows(cfg, preds), &cfg.intervals_s())
}

/// Trained model as a precision-independent checkpoint plus everything measured on the way.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub checkpoint: Vec<u8>,
    pub train: TrainReport,
    pub n_train_samples: usize,
    pub n_test_samples: usize,
    pub predictions: Vec<(String, Vec<PredictionRecord>)>,
    pub report: MetricReport,
}

fn run_typed<T: Real>(cfg: &RunConfig, train_recs: &[Recording], test_recs: &[Recording], jobs: usize) -> Result<Experiment> {
    let train_set = encode_set(cfg, train_recs, jobs)?;
    let test_set = encode_set(cfg, test_recs, jobs)?;
    log::info!("{} train / {} test samples", train_set.len(), test_set.len());
    let val = validation_subset(&test_set, MAX_VAL_SAMPLES);
    let (net, report) = train_network::<T>(cfg, &train_set, &val, jobs)?;
    if let Some(msg) = &report.diverged {
        return Err(Error::Numeric(format!("training diverged: {msg}")));
    }
    let predictions = predict_recordings(cfg, &net, test_recs, jobs)?;
    let metrics = evaluate(cfg, &predictions)?;
    Ok(Experiment {
        checkpoint: encode_checkpoint(&net),
        train: report,
        n_train_samples: train_set.len(),
        n_test_samples: test_set.len(),
        predictions,
        report: metrics,
    })
}

/// Augments (when enabled), encodes, trains and evaluates on `data`'s split.
/// The test side is augmented with `test_copies` regardless of
/// `augment.enabled`, so arms that differ only in training share a test set.
pub fn run_experiment(cfg: &RunConfig, data: &Dataset, jobs: usize) -> Result<Experiment> {
    cfg.validate()?;
    let train_recs = if cfg.augment_enabled {
        augment_set(&data.train, cfg.train_copies(), cfg, "train", jobs)?
    } else {
        data.train.clone()
    };
    let test_recs = augment_set(&data.test, cfg.test_copies(), cfg, "test", jobs)?;
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg, &train_recs, &test_recs, jobs),
        Precision::F64 => run_typed::<f64>(cfg, &train_recs, &test_recs, jobs),
    }
}

/// One arm of the filter/augmentation ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arm {
    pub filter: bool,
    pub augment: bool,
}

impl Arm {
    pub const ALL: [Arm; 3] = [
        Arm { filter: true, augment: true },
        Arm { filter: false, augment: true },
        Arm { filter: true, augment: false },
    ];

    pub fn name(self) -> &'static str {
        match (self.filter, self.augment) {
            (true, true) => "aug+exp",
            (false, true) => "no-exp",
            (true, false) => "no-aug",
            (false, false) => "no-aug-no-exp",
        }
    }

    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        RunConfig {
            filter_enabled: self.filter,
            augment_enabled: self.augment,
            ..cfg.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArmResult {
    pub arm: Arm,
    /// `None` when the arm diverged or failed numerically.
    pub experiment: Option<Experiment>,
    pub failure: Option<String>,
}

/// Trains and evaluates each arm on the same simulated split, in order.
pub fn ablation_run(cfg: &RunConfig, data: &Dataset, arms: &[Arm], jobs: usize) -> Result<Vec<ArmResult>> {
    let mut out = Vec::new();
    for &arm in arms {
        log::info!("ablation arm {}", arm.name());
        match run_experiment(&arm.apply(cfg), data, jobs) {
            Ok(e) => out.push(ArmResult {
                arm,
                experiment: Some(e),
                failure: None,
            }),
            Err(Error::Numeric(m)) => out.push(ArmResult {
                arm,
                experiment: None,
                failure: Some(m),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn ablation_csv(results: &[ArmResult]) -> String {
    let mut s = String::from("arm,filter,augment,status,n_test,median_ttc_error,mean_theta_deg,mean_radius_mm\n");
    for r in results {
        match &r.experiment {
            Some(e) => {
                let g = &e.report.global;
                s += &format!(
                    "{},{},{},ok,{},{:.6},{:.6},{:.6}\n",
                    r.arm.name(),
                    r.arm.filter,
                    r.arm.augment,
                    g.n,
                    g.median_ttc_error,
                    g.mean_theta_deg,
                    g.mean_radius_mm
                )
            }
            None => s += &format!("{},{},{},diverged,0,,,\n", r.arm.name(), r.arm.filter, r.arm.augment),
        }
    }
    s
}

/// Writes each recording to `dir/<id>/`.
pub fn save_recordings(recs: &[Recording], dir: &Path) -> Result<()> {
    for r in recs {
        r.save(dir.join(&r.id))?;
    }
    Ok(())
}

/// Loads every recording directory below `dir`, sorted by id.
pub fn load_recordings(dir: &Path) -> Result<Vec<Recording>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut dirs: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.join("meta.txt").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    dirs.iter().map(Recording::load).collect()
}

/// `dir/recordings/<id>/` plus `dir/split.txt` listing the train and test ids.
pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    let rec_dir = dir.join("recordings");
    save_recordings(&data.train, &rec_dir)?;
    save_recordings(&data.test, &rec_dir)?;
    let ids = |v: &[Recording]| v.iter().map(|r| r.id.as_str()).collect::<Vec<_>>().join(",");
    let text = format!(
        "n_train = {}\nn_test = {}\ntrain = {}\ntest = {}\n",
        data.train.len(),
        data.test.len(),
        ids(&data.train),
        ids(&data.test)
    );
    fs::write(dir.join("split.txt"), text).map_err(|e| Error::io(dir.join("split.txt"), e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let split_path = dir.join("split.txt");
    let text = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
    let kv = parse_kv(&text)?;
    let load = |key: &str| -> Result<Vec<Recording>> {
        let list = kv.get(key).ok_or_else(|| Error::Data(format!("{}: missing {key}", split_path.display())))?;
        list.split(',')
            .filter(|s| !s.is_empty())
            .map(|id| Recording::load(dir.join("recordings").join(id.trim())))
            .collect()
    };
    Ok(Dataset {
        train: load("train")?,
        test: load("test")?,
    })
}

/// One baseline measurement on the events of a single output period.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRow {
    pub recording: String,
    pub t_s: f64,
    pub tau_s: f64,
    /// Projected object diameter from the trajectory, pixels.
    pub true_diameter_px: f64,
    pub hull_diameter_px: Option<f64>,
    pub hough_diameter_px: Option<f64>,
    pub hough_low_confidence: bool,
}

/// Runs the Hough circle and convex-hull baselines on the count frame of each
/// output period inside the evaluation window.
pub fn baseline_rows(cfg: &RunConfig, rec: &Recording, hough: &HoughConfig) -> Vec<BaselineRow> {
    let sc = stream_config(cfg, rec);
    let window = cfg.tau_window_s();
    let (w, h) = (rec.events.width(), rec.events.height());
    let mut out = Vec::new();
    for t in sc.times() {
        let tau = rec.impact.t_impact - t as f64 * 1e-6;
        if !in_window(tau, window) {
            continue;
        }
        let t0 = t.saturating_sub(sc.cadence_us);
        let frame = CountFrame::from_events(w, h, t0, t, rec.events.window(t0, t));
        let pos = position_at(&rec.trajectory, t as f64 * 1e-6);
        let true_diameter_px = 2.0 * rec.camera.fx * rec.object.radius / pos[2].max(1e-9);
        let hull = convexhull_baseline(&frame).ok().map(|e| e.diameter_px);
        let circle = hough_circle_baseline(&frame, hough).ok();
        out.push(BaselineRow {
            recording: rec.id.clone(),
            t_s: t as f64 * 1e-6,
            tau_s: tau,
            true_diameter_px,
            hull_diameter_px: hull,
            hough_diameter_px: circle.map(|c| 2.0 * c.r),
            hough_low_confidence: circle.is_none_or(|c| c.low_confidence),
        });
    }
    out
}

pub fn baseline_csv(rows: &[BaselineRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    let mut s = String::from("recording,t_s,tau_s,true_diameter_px,hull_diameter_px,hough_diameter_px,hough_low_confidence\n");
    for r in rows {
        s += &format!(
            "{},{:.6},{:.6},{:.4},{},{},{}\n",
            r.recording,
            r.t_s,
            r.tau_s,
            r.true_diameter_px,
            opt(r.hull_diameter_px),
            opt(r.hough_diameter_px),
            r.hough_low_confidence
        );
    }
    s
}

/// Mean relative diameter error of each baseline over the rows where it produced an estimate.
pub fn baseline_summary(rows: &[BaselineRow]) -> String {
    let rel = |f: &dyn Fn(&BaselineRow) -> Option<f64>| {
        let errs: Vec<f64> = rows
            .iter()
            .filter_map(|r| f(r).map(|d| (d - r.true_diameter_px).abs() / r.true_diameter_px))
            .collect();
        let mean = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
        (errs.len(), mean)
    };
    let (nh, eh) = rel(&|r| r.hull_diameter_px);
    let (nc, ec) = rel(&|r| r.hough_diameter_px);
    format!(
        "frames {}\nconvex hull: {nh} estimates, mean relative diameter error {:.2}%\nhough circle: {nc} estimates, mean relative diameter error {:.2}%\n",
        rows.len(),
        100.0 * eh,
        100.0 * ec
    )
}
