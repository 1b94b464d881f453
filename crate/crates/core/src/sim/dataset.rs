use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::render::{synthesize_events, SimConfig};
use super::trajectory::{gen_ball_trajectory, gen_dart_trajectory, ObjectKind, ObjectSpec, TrajectoryLimits};
use crate::error::{Error, Result};
use crate::event::{read_events, write_events, EventStream};
use crate::geom::{impact_solve, label_timesteps, CameraModel, ImpactLabel, TrajectorySample};
use crate::seed;

/// Sensor resolution and optics used for rendering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorProfile {
    /// 640×480, f = 320 px; filter output 240×240.
    Full,
    /// Quarter scale: 160×120, f = 80 px; filter output 60×60.
    Desk,
}

impl SensorProfile {
    pub fn camera(self) -> CameraModel<f64> {
        match self {
            SensorProfile::Full => CameraModel::centered(640, 480, 320.0),
            SensorProfile::Desk => CameraModel::centered(160, 120, 80.0),
        }
    }

    /// Network input (height, width).
    pub fn crop(self) -> (usize, usize) {
        match self {
            SensorProfile::Full => (240, 240),
            SensorProfile::Desk => (60, 60),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorProfile::Full => "full",
            SensorProfile::Desk => "desk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SensorProfile::Full),
            "desk" => Ok(SensorProfile::Desk),
            other => Err(Error::Config(format!("unknown sensor profile {other:?} (expected full or desk)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub kind: ObjectKind,
    pub object: ObjectSpec,
    pub profile: SensorProfile,
    pub sim: SimConfig,
    pub limits: TrajectoryLimits,
    /// Raw impact points are drawn uniformly from a disk of this radius, metres.
    pub impact_spread: f64,
    /// Ball lateral drift speed bound, m/s per axis.
    pub ball_drift: f64,
    /// Dart launch offset from the aim line, disk radius in metres.
    pub dart_start_spread: f64,
    pub jobs: usize,
}

impl DatasetConfig {
    pub fn new(kind: ObjectKind, profile: SensorProfile) -> Self {
        DatasetConfig {
            kind,
            object: ObjectSpec::default_for(kind),
            profile,
            sim: SimConfig::default(),
            limits: TrajectoryLimits::default(),
            impact_spread: 0.06,
            ball_drift: 0.05,
            dart_start_spread: 0.05,
            jobs: 1,
        }
    }
}

/// One labelled recording: trajectory, impact, per-sample τ labels and events.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: String,
    pub object: ObjectSpec,
    pub camera: CameraModel<f64>,
    pub trajectory: Vec<TrajectorySample<f64>>,
    pub impact: ImpactLabel<f64>,
    /// `(t_i, τ_i)` for every trajectory sample up to impact.
    pub labels: Vec<(f64, f64)>,
    pub events: EventStream,
    pub meta: BTreeMap<String, String>,
}

impl Recording {
    pub fn kind(&self) -> ObjectKind {
        self.object.kind
    }

    /// Impact time in microseconds (rounded).
    pub fn t_impact_us(&self) -> u64 {
        (self.impact.t_impact * 1e6).round() as u64
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_events(&self.events, dir.join("events.evf"))?;
        let mut traj = String::from("t,x,y,z\n");
        for s in &self.trajectory {
            let _ = writeln!(traj, "{},{},{},{}", s.t, s.pos[0], s.pos[1], s.pos[2]);
        }
        write_file(&dir.join("trajectory.csv"), &traj)?;
        let mut labels = String::from("t_i,tau,r_bin,theta_bin\n");
        for (t, tau) in &self.labels {
            let _ = writeln!(labels, "{t},{tau},{},{}", self.impact.r_bin, self.impact.theta_bin);
        }
        write_file(&dir.join("labels.csv"), &labels)?;
        self.camera.save(dir.join("camera.txt"))?;
        let mut meta = self.meta.clone();
        meta.insert("id".into(), self.id.clone());
        meta.insert("kind".into(), self.object.kind.name().into());
        meta.insert("object_radius".into(), self.object.radius.to_string());
        meta.insert("object_length".into(), self.object.length.to_string());
        meta.insert("t_impact".into(), self.impact.t_impact.to_string());
        meta.insert("impact_x".into(), self.impact.x.to_string());
        meta.insert("impact_y".into(), self.impact.y.to_string());
        meta.insert("r_bin".into(), self.impact.r_bin.to_string());
        meta.insert("theta_bin".into(), self.impact.theta_bin.to_string());
        write_file(&dir.join("meta.txt"), &format_kv(&meta))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta = parse_kv(&read_file(&dir.join("meta.txt"))?)?;
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Data(format!("{}: meta.txt missing {k}", dir.display())));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Data(format!("{}: meta.txt bad number for {k}", dir.display())))
        };
        let kind = ObjectKind::parse(get("kind")?)?;
        let object = ObjectSpec {
            kind,
            radius: num("object_radius")?,
            length: num("object_length")?,
        };
        let trajectory = parse_csv(&read_file(&dir.join("trajectory.csv"))?, 4)?
            .into_iter()
            .map(|r| TrajectorySample { t: r[0], pos: [r[1], r[2], r[3]] })
            .collect();
        let labels = parse_csv(&read_file(&dir.join("labels.csv"))?, 4)?
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect();
        let impact = ImpactLabel::at(num("t_impact")?, num("impact_x")?, num("impact_y")?);
        Ok(Recording {
            id: get("id")?.clone(),
            object,
            camera: CameraModel::load(dir.join("camera.txt"))?,
            trajectory,
            impact,
            labels,
            events: read_events(dir.join("events.evf"))?,
            meta,
        })
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn format_kv(kv: &BTreeMap<String, String>) -> String {
    kv.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k} = {v}");
        s
    })
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(n as u64 + 1, "expected key = value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Numeric CSV with one header line.
pub fn parse_csv(text: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let row: Vec<f64> = l
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(n as u64 + 1, "bad number"))?;
            if row.len() != columns {
                return Err(Error::parse(n as u64 + 1, format!("expected {columns} columns, got {}", row.len())));
            }
            Ok(row)
        })
        .collect()
}

/// Shuffled 80/20 split by whole recording; the test share rounds up.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_test = (n * 20).div_ceil(100);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let test = {
        let mut t = idx[..n_test].to_vec();
        t.sort_unstable();
        t
    };
    let mut train = idx[n_test..].to_vec();
    train.sort_unstable();
    (train, test)
}

fn uniform_disk(rng: &mut impl Rng, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    [r * a.cos(), r * a.sin()]
}

/// Simulates one recording with parameters drawn from `seed`.
pub fn simulate_recording(id: String, cfg: &DatasetConfig, seed: u64) -> Result<Recording> {
    let mut rng = seed::rng(seed);
    let mut meta = BTreeMap::new();
    let trajectory = match cfg.kind {
        ObjectKind::Ball => {
            let (lo, hi) = cfg.limits.ball_height;
            let h = rng.gen_range(lo..=hi);
            let offset = uniform_disk(&mut rng, cfg.impact_spread);
            let drift = [
                rng.gen_range(-cfg.ball_drift..=cfg.ball_drift),
                rng.gen_range(-cfg.ball_drift..=cfg.ball_drift),
            ];
            meta.insert("drop_height".into(), h.to_string());
            meta.insert("lateral_velocity".into(), format!("{} {}", drift[0], drift[1]));
            // Keep the impact inside the spread disk: the drift moves it by drift * t_impact.
            let t = super::trajectory::ball_impact_time(h);
            let start = [offset[0] - drift[0] * t, offset[1] - drift[1] * t];
            gen_ball_trajectory(h, start, drift, &cfg.limits)?
        }
        ObjectKind::Dart => {
            let speed = rng.gen_range(cfg.limits.dart_speed.0..=cfg.limits.dart_speed.1);
            let dist = rng.gen_range(cfg.limits.dart_distance.0..=cfg.limits.dart_distance.1);
            let aim = uniform_disk(&mut rng, cfg.impact_spread);
            let start = uniform_disk(&mut rng, cfg.dart_start_spread);
            meta.insert("speed".into(), speed.to_string());
            meta.insert("launch_distance".into(), dist.to_string());
            gen_dart_trajectory(speed, aim, dist, start, &cfg.limits)?
        }
    };
    let impact = impact_solve(&trajectory)?;
    let labels = label_timesteps(&trajectory, impact.t_impact);
    let camera = cfg.profile.camera();
    let sim = SimConfig {
        seed: seed::derive(seed, "render"),
        ..cfg.sim
    };
    let (events, stats) = synthesize_events(&trajectory, &cfg.object, &camera, &sim, impact.t_impact);
    meta.insert("seed".into(), seed.to_string());
    meta.insert("profile".into(), cfg.profile.name().into());
    meta.insert("signal_events".into(), stats.signal_events.to_string());
    meta.insert("noise_events".into(), stats.noise_events.to_string());
    meta.insert("never_visible".into(), stats.never_visible.to_string());
    Ok(Recording {
        id,
        object: cfg.object,
        camera,
        trajectory,
        impact,
        labels,
        events,
        meta,
    })
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Recording>,
    pub test: Vec<Recording>,
}

pub fn recording_id(i: usize) -> String {
    format!("rec_{i:04}")
}

/// Simulates `n` recordings and splits them 80/20 by whole trajectory.
pub fn build_dataset(n: usize, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    if n < 5 {
        return Err(Error::Config(format!("need at least 5 trajectories for an 80/20 split, got {n}")));
    }
    let sim_seed = seed::derive(seed, "sim");
    let recs: Vec<Result<Recording>> = seed::parallel_map((0..n).collect(), cfg.jobs, |i| {
        simulate_recording(recording_id(i), cfg, seed::derive_indexed(sim_seed, cfg.kind.name(), i as u64))
    });
    let mut recs: Vec<Option<Recording>> = recs.into_iter().map(|r| r.map(Some)).collect::<Result<_>>()?;
    let (train, test) = split_indices(n, seed::derive(seed, "split"));
    let take = |idx: &[usize], recs: &mut Vec<Option<Recording>>| -> Vec<Recording> {
        idx.iter().map(|&i| recs[i].take().expect("index used once")).collect()
    };
    Ok(Dataset {
        train: take(&train, &mut recs),
        test: take(&test, &mut recs),
    })
}
