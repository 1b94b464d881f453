//! Flat `key = value` run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{Estimate, BALL_INTERVALS_S, DART_INTERVALS_S};
use crate::filterbank::{
    FilterBankConfig, Scaling, ABLATION_BIN_US, BALL_OUTPUT_PERIOD_US, DART_OUTPUT_PERIOD_US, DEFAULT_STEP_US, DEFAULT_X_CAP,
    DEFAULT_TIME_CONSTANTS_US,
};
use crate::nnet::{LossWeights, ModelConfig, DEFAULT_LR};
use crate::seed;
use crate::sim::{DatasetConfig, ObjectKind, SensorProfile, SimConfig, TrajectoryLimits};

pub const SEED_ENV: &str = "EVFLIGHT_SEED";

/// Scalar type used for network training and inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub object: ObjectKind,
    pub seed: u64,
    pub output_dir: PathBuf,

    pub profile: SensorProfile,
    pub n_recordings: Option<usize>,
    pub noise_rate: f64,
    pub micro_step_us: u64,
    pub emission_count: u8,
    pub impact_spread_m: f64,
    pub ball_drift_mps: f64,
    pub dart_start_spread_m: f64,
    pub limits: TrajectoryLimits,

    pub time_constants_us: Vec<f64>,
    pub step_us: u64,
    pub period_us: Option<u64>,
    pub x_cap: f64,
    pub scaling: Scaling,
    pub filter_enabled: bool,
    pub bin_us: u64,

    pub augment_enabled: bool,
    pub train_copies: Option<usize>,
    pub test_copies: Option<usize>,
    pub max_shift_m: f64,
    pub r_outer_m: f64,

    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub lr: f64,
    pub lr_final_frac: f64,
    pub weights: LossWeights,
    pub tau_scale_s: Option<f64>,
    pub readout_grid: Option<usize>,
    pub precision: Precision,

    pub tau_window_s: Option<f64>,
    pub intervals_s: Option<Vec<f64>>,
    pub lambda: f64,
    pub estimate: Estimate,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            object: ObjectKind::Ball,
            seed: 0,
            output_dir: PathBuf::from("out"),
            profile: SensorProfile::Desk,
            n_recordings: None,
            noise_rate: SimConfig::default().noise_rate,
            micro_step_us: SimConfig::default().micro_step_us,
            emission_count: SimConfig::default().emission_count,
            impact_spread_m: 0.06,
            ball_drift_mps: 0.05,
            dart_start_spread_m: 0.05,
            limits: TrajectoryLimits::default(),
            time_constants_us: DEFAULT_TIME_CONSTANTS_US.to_vec(),
            step_us: DEFAULT_STEP_US,
            period_us: None,
            x_cap: DEFAULT_X_CAP,
            scaling: Scaling::Count,
            filter_enabled: true,
            bin_us: ABLATION_BIN_US,
            augment_enabled: true,
            train_copies: None,
            test_copies: None,
            max_shift_m: crate::augment::DEFAULT_MAX_SHIFT,
            r_outer_m: crate::augment::DEFAULT_R_OUTER,
            epochs: 4,
            batch_size: None,
            lr: DEFAULT_LR,
            lr_final_frac: 1.0,
            weights: LossWeights::default(),
            tau_scale_s: None,
            readout_grid: None,
            precision: Precision::F32,
            tau_window_s: None,
            intervals_s: None,
            lambda: 1.0,
            estimate: Estimate::Instantaneous,
        }
    }
}

/// Every accepted key with a one-line description; defaults come from [`RunConfig::default`].
pub const KEYS: &[(&str, &str)] = &[
    ("object", "ball | dart"),
    ("seed", "global seed; per-stage seeds are derived from it (EVFLIGHT_SEED overrides)"),
    ("output_dir", "all artifacts are written below this directory"),
    ("sim.profile", "desk (160x120 sensor, 60x60 input) | full (640x480, 240x240)"),
    ("sim.n", "number of trajectories; auto = 150 ball drops / 36 dart shots"),
    ("sim.noise_rate", "background events per pixel per second"),
    ("sim.micro_step_us", "renderer sub-step"),
    ("sim.emission_count", "events per pixel per occupancy change"),
    ("sim.impact_spread_m", "radius of the disk raw impact points are drawn from"),
    ("sim.ball_drift_mps", "bound on ball lateral speed per axis"),
    ("sim.dart_start_spread_m", "radius of the dart launch offset disk"),
    ("sim.ball_height_min_m", "lowest drop height"),
    ("sim.ball_height_max_m", "highest drop height"),
    ("sim.dart_speed_min_mps", "slowest dart"),
    ("sim.dart_speed_max_mps", "fastest dart"),
    ("sim.dart_distance_min_m", "nearest launch distance"),
    ("sim.dart_distance_max_m", "farthest launch distance"),
    ("filter.time_constants_us", "comma separated filter periods"),
    ("filter.step_us", "binning step"),
    ("filter.period_us", "prediction cadence; auto = 3000 ball / 1000 dart"),
    ("filter.x_cap", "per-step input cap; the filter value mapped to 255"),
    ("filter.scaling", "rate (y/x_cap) | count (y/((1-alpha)*x_cap), leaky event count per channel)"),
    ("filter.enabled", "false replaces the filterbank by 2-channel binned counts"),
    ("filter.bin_us", "window of the binned input when the filter is disabled"),
    ("augment.enabled", "false trains and tests on the raw trajectories only"),
    ("augment.train_copies", "augmented copies per training trajectory; auto = 3 ball / 5 dart"),
    ("augment.test_copies", "augmented copies per test trajectory; auto = 1 ball / 4 dart"),
    ("augment.max_shift_m", "largest impact translation"),
    ("augment.r_outer_m", "outer edge of the last radius bin when drawing targets"),
    ("net.epochs", "training epochs"),
    ("net.batch_size", "mini-batch size; auto = 32 desk / 160 full"),
    ("net.lr", "Adam learning rate"),
    ("net.lr_final_frac", "final learning rate as a fraction of net.lr (cosine decay); 1 = constant"),
    ("net.w_ttc", "weight of the time-to-collision MSE"),
    ("net.w_theta", "weight of the theta cross-entropy"),
    ("net.w_r", "weight of the radius cross-entropy"),
    ("net.tau_scale_s", "tau normalisation; auto = eval.tau_window_s"),
    ("net.readout_grid", "average-pool grid before the heads; auto = 5 desk / 1 full"),
    ("net.precision", "f64 | f32"),
    ("eval.tau_window_s", "samples with 0 < tau <= window are used; auto = 0.3 ball / 0.04 dart"),
    ("eval.intervals_s", "decreasing tau interval edges; auto = 0.3,0.2,0.1,0 ball / 0.04,...,0 dart"),
    ("eval.lambda", "Bayesian forgetting factor in [0, 1]"),
    ("eval.estimate", "instantaneous | smoothed theta/r estimate used for metrics"),
];

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

fn auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or("auto".into(), |x| x.to_string())
}

impl RunConfig {
    pub fn for_object(object: ObjectKind) -> Self {
        RunConfig {
            object,
            ..RunConfig::default()
        }
    }

    pub fn n_recordings(&self) -> usize {
        self.n_recordings.unwrap_or(match self.object {
            ObjectKind::Ball => 150,
            ObjectKind::Dart => 36,
        })
    }

    pub fn period_us(&self) -> u64 {
        self.period_us.unwrap_or(match self.object {
            ObjectKind::Ball => BALL_OUTPUT_PERIOD_US,
            ObjectKind::Dart => DART_OUTPUT_PERIOD_US,
        })
    }

    pub fn train_copies(&self) -> usize {
        self.train_copies.unwrap_or(match self.object {
            ObjectKind::Ball => 3,
            ObjectKind::Dart => 5,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.profile {
            SensorProfile::Desk => 32,
            SensorProfile::Full => 160,
        })
    }

    pub fn test_copies(&self) -> usize {
        self.test_copies.unwrap_or(match self.object {
            ObjectKind::Ball => 1,
            ObjectKind::Dart => 4,
        })
    }

    pub fn tau_window_s(&self) -> f64 {
        self.tau_window_s.unwrap_or(match self.object {
            ObjectKind::Ball => 0.3,
            ObjectKind::Dart => 0.04,
        })
    }

    pub fn intervals_s(&self) -> Vec<f64> {
        self.intervals_s.clone().unwrap_or_else(|| match self.object {
            ObjectKind::Ball => BALL_INTERVALS_S.to_vec(),
            ObjectKind::Dart => DART_INTERVALS_S.to_vec(),
        })
    }

    pub fn tau_scale_s(&self) -> f64 {
        self.tau_scale_s.unwrap_or_else(|| self.tau_window_s())
    }

    pub fn readout_grid(&self) -> usize {
        self.readout_grid.unwrap_or(match self.profile {
            SensorProfile::Desk => 5,
            SensorProfile::Full => 1,
        })
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let mut d = DatasetConfig::new(self.object, self.profile);
        d.sim.noise_rate = self.noise_rate;
        d.sim.micro_step_us = self.micro_step_us;
        d.sim.emission_count = self.emission_count;
        d.limits = self.limits;
        d.impact_spread = self.impact_spread_m;
        d.ball_drift = self.ball_drift_mps;
        d.dart_start_spread = self.dart_start_spread_m;
        d
    }

    pub fn filter_config(&self) -> FilterBankConfig {
        FilterBankConfig {
            time_constants_us: self.time_constants_us.clone(),
            dt_us: self.step_us,
            output_period_us: self.period_us(),
            crop: self.profile.crop(),
            downscale: 2,
            x_cap: self.x_cap,
            scaling: self.scaling,
        }
    }

    pub fn input_channels(&self) -> usize {
        if self.filter_enabled {
            crate::filterbank::CHANNELS
        } else {
            2
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let base = match self.profile {
            SensorProfile::Desk => ModelConfig::desk(self.tau_scale_s()),
            SensorProfile::Full => ModelConfig::full(self.tau_scale_s()),
        };
        let (h, w) = self.profile.crop();
        let mut m = base.with_input(self.input_channels(), h, w);
        m.readout_grid = self.readout_grid();
        m
    }

    /// Per-stage seed; stages keep their streams when others change.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive(self.seed, stage)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_config().validate()?;
        self.model_config().validate()?;
        self.weights.validate()?;
        if self.n_recordings() < 5 {
            return Err(Error::Config(format!("sim.n must be at least 5, got {}", self.n_recordings())));
        }
        if self.period_us() % self.step_us != 0 {
            return Err(Error::Config(format!(
                "filter.period_us {} must be a multiple of filter.step_us {}",
                self.period_us(),
                self.step_us
            )));
        }
        if self.epochs == 0 || self.batch_size() == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("net.epochs, net.batch_size and net.lr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("eval.lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.tau_window_s() > 0.0) {
            return Err(Error::Config("eval.tau_window_s must be positive".into()));
        }
        let e = self.intervals_s();
        if e.len() < 2 || e.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Config(format!("eval.intervals_s must be strictly decreasing, got {e:?}")));
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let l = &self.limits;
        let vals: Vec<String> = vec![
            self.object.name().into(),
            self.seed.to_string(),
            self.output_dir.display().to_string(),
            self.profile.name().into(),
            auto(&self.n_recordings),
            self.noise_rate.to_string(),
            self.micro_step_us.to_string(),
            self.emission_count.to_string(),
            self.impact_spread_m.to_string(),
            self.ball_drift_mps.to_string(),
            self.dart_start_spread_m.to_string(),
            l.ball_height.0.to_string(),
            l.ball_height.1.to_string(),
            l.dart_speed.0.to_string(),
            l.dart_speed.1.to_string(),
            l.dart_distance.0.to_string(),
            l.dart_distance.1.to_string(),
            list(&self.time_constants_us),
            self.step_us.to_string(),
            auto(&self.period_us),
            self.x_cap.to_string(),
            self.scaling.name().into(),
            self.filter_enabled.to_string(),
            self.bin_us.to_string(),
            self.augment_enabled.to_string(),
            auto(&self.train_copies),
            auto(&self.test_copies),
            self.max_shift_m.to_string(),
            self.r_outer_m.to_string(),
            self.epochs.to_string(),
            auto(&self.batch_size),
            self.lr.to_string(),
            self.lr_final_frac.to_string(),
            self.weights.w_ttc.to_string(),
            self.weights.w_theta.to_string(),
            self.weights.w_r.to_string(),
            auto(&self.tau_scale_s),
            auto(&self.readout_grid),
            match self.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            auto(&self.tau_window_s),
            self.intervals_s.as_ref().map_or("auto".into(), |v| list(v)),
            self.lambda.to_string(),
            self.estimate.name().into(),
        ];
        debug_assert_eq!(vals.len(), KEYS.len());
        KEYS.iter().map(|(k, _)| *k).zip(vals).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = || Error::Config(format!("invalid value {v:?} for {key}"));
        let f = || v.parse::<f64>().map_err(|_| bad());
        let u = || v.parse::<u64>().map_err(|_| bad());
        let z = || v.parse::<usize>().map_err(|_| bad());
        let b = || v.parse::<bool>().map_err(|_| bad());
        let is_auto = v == "auto";
        let floats = || -> Result<Vec<f64>> { v.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect() };
        match key {
            "object" => self.object = ObjectKind::parse(v)?,
            "seed" => self.seed = u()?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "sim.profile" => self.profile = SensorProfile::parse(v)?,
            "sim.n" => self.n_recordings = if is_auto { None } else { Some(z()?) },
            "sim.noise_rate" => self.noise_rate = f()?,
            "sim.micro_step_us" => self.micro_step_us = u()?,
            "sim.emission_count" => self.emission_count = v.parse().map_err(|_| bad())?,
            "sim.impact_spread_m" => self.impact_spread_m = f()?,
            "sim.ball_drift_mps" => self.ball_drift_mps = f()?,
            "sim.dart_start_spread_m" => self.dart_start_spread_m = f()?,
            "sim.ball_height_min_m" => self.limits.ball_height.0 = f()?,
            "sim.ball_height_max_m" => self.limits.ball_height.1 = f()?,
            "sim.dart_speed_min_mps" => self.limits.dart_speed.0 = f()?,
            "sim.dart_speed_max_mps" => self.limits.dart_speed.1 = f()?,
            "sim.dart_distance_min_m" => self.limits.dart_distance.0 = f()?,
            "sim.dart_distance_max_m" => self.limits.dart_distance.1 = f()?,
            "filter.time_constants_us" => self.time_constants_us = floats()?,
            "filter.step_us" => self.step_us = u()?,
            "filter.period_us" => self.period_us = if is_auto { None } else { Some(u()?) },
            "filter.x_cap" => self.x_cap = f()?,
            "filter.scaling" => self.scaling = Scaling::parse(v)?,
            "filter.enabled" => self.filter_enabled = b()?,
            "filter.bin_us" => self.bin_us = u()?,
            "augment.enabled" => self.augment_enabled = b()?,
            "augment.train_copies" => self.train_copies = if is_auto { None } else { Some(z()?) },
            "augment.test_copies" => self.test_copies = if is_auto { None } else { Some(z()?) },
            "augment.max_shift_m" => self.max_shift_m = f()?,
            "augment.r_outer_m" => self.r_outer_m = f()?,
            "net.epochs" => self.epochs = z()?,
            "net.batch_size" => self.batch_size = if is_auto { None } else { Some(z()?) },
            "net.lr" => self.lr = f()?,
            "net.lr_final_frac" => self.lr_final_frac = f()?,
            "net.w_ttc" => self.weights.w_ttc = f()?,
            "net.w_theta" => self.weights.w_theta = f()?,
            "net.w_r" => self.weights.w_r = f()?,
            "net.tau_scale_s" => self.tau_scale_s = if is_auto { None } else { Some(f()?) },
            "net.readout_grid" => self.readout_grid = if is_auto { None } else { Some(z()?) },
            "net.precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad()),
                }
            }
            "eval.tau_window_s" => self.tau_window_s = if is_auto { None } else { Some(f()?) },
            "eval.intervals_s" => self.intervals_s = if is_auto { None } else { Some(floats()?) },
            "eval.lambda" => self.lambda = f()?,
            "eval.estimate" => self.estimate = Estimate::parse(v)?,
            _ => {
                let valid: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
                return Err(Error::Config(format!("unknown key {key:?}; valid keys: {}", valid.join(", "))));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Replaces the seed with `EVFLIGHT_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Help text listing every key with its default.
    pub fn help_text() -> String {
        let d = RunConfig::default().entries();
        let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::from("Configuration keys (default in brackets):\n");
        for ((k, help), (_, def)) in KEYS.iter().zip(d) {
            s += &format!("  {k:<width$}  [{def}]  {help}\n");
        }
        s
    }
}
