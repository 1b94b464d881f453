use crate::error::{Error, Result};
use crate::geom::TrajectorySample;

pub const GRAVITY: f64 = 9.81;
pub const SAMPLE_RATE_HZ: f64 = 1_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Ball,
    Dart,
}

impl ObjectKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Ball => "ball",
            ObjectKind::Dart => "dart",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ball" => Ok(ObjectKind::Ball),
            "dart" => Ok(ObjectKind::Dart),
            other => Err(Error::Config(format!("unknown object kind {other:?} (expected ball or dart)"))),
        }
    }
}

/// Physical size of the simulated object, metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub radius: f64,
    /// Body length for darts; zero for balls.
    pub length: f64,
}

impl ObjectSpec {
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config("ball radius must be positive".into()));
        }
        Ok(ObjectSpec {
            kind: ObjectKind::Ball,
            radius,
            length: 0.0,
        })
    }

    pub fn dart(length: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && length > 0.0) {
            return Err(Error::Config("dart dimensions must be positive".into()));
        }
        Ok(ObjectSpec {
            kind: ObjectKind::Dart,
            radius,
            length,
        })
    }

    pub fn default_for(kind: ObjectKind) -> Self {
        match kind {
            ObjectKind::Ball => ObjectSpec {
                kind,
                radius: 0.025,
                length: 0.0,
            },
            // 2 cm diameter.
            ObjectKind::Dart => ObjectSpec {
                kind,
                radius: 0.01,
                length: 0.07,
            },
        }
    }
}

/// Accepted parameter ranges for generated trajectories.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryLimits {
    pub ball_height: (f64, f64),
    pub dart_speed: (f64, f64),
    pub dart_distance: (f64, f64),
}

impl Default for TrajectoryLimits {
    fn default() -> Self {
        TrajectoryLimits {
            ball_height: (0.4, 1.2),
            dart_speed: (16.0, 23.4),
            dart_distance: (0.6, 1.0),
        }
    }
}

fn check_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !(v >= lo && v <= hi) {
        return Err(Error::Config(format!("{name} {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Samples `pos(t)` at 1 kHz from `t = 0` through the first sample at or below Z = 0.
fn sample_until_impact(t_impact: f64, pos: impl Fn(f64) -> [f64; 3]) -> Vec<TrajectorySample<f64>> {
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let n = (t_impact / dt).floor() as usize + 1;
    let mut out: Vec<_> = (0..=n)
        .map(|i| {
            let t = i as f64 * dt;
            TrajectorySample { t, pos: pos(t) }
        })
        .collect();
    // Guarantee the last sample is past the plane even under rounding.
    while out.last().is_some_and(|s| s.pos[2] > 0.0) {
        let t = out.len() as f64 * dt;
        out.push(TrajectorySample { t, pos: pos(t) });
    }
    out
}

/// Free fall from rest at height `drop_height` above the sensor with optional
/// lateral drift. Z points from the sensor toward the ball.
pub fn gen_ball_trajectory(
    drop_height: f64,
    lateral_offset: [f64; 2],
    lateral_velocity: [f64; 2],
    limits: &TrajectoryLimits,
) -> Result<Vec<TrajectorySample<f64>>> {
    check_range("drop height", drop_height, limits.ball_height)?;
    if !(drop_height > 0.0) {
        return Err(Error::Geometry("trajectory does not reach camera plane".into()));
    }
    let t_impact = ball_impact_time(drop_height);
    Ok(sample_until_impact(t_impact, |t| {
        [
            lateral_offset[0] + lateral_velocity[0] * t,
            lateral_offset[1] + lateral_velocity[1] * t,
            drop_height - 0.5 * GRAVITY * t * t,
        ]
    }))
}

pub fn ball_impact_time(drop_height: f64) -> f64 {
    (2.0 * drop_height / GRAVITY).sqrt()
}

/// Initial state of a dart shot that lands exactly on `aim_point` at Z = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DartShot {
    pub start: [f64; 3],
    pub velocity: [f64; 3],
    pub flight_time: f64,
}

impl DartShot {
    /// Solves for the launch velocity with speed `speed`, starting at
    /// `launch_distance` in front of the sensor offset by `start_offset`,
    /// under gravity along +Y.
    pub fn solve(speed: f64, aim_point: [f64; 2], launch_distance: f64, start_offset: [f64; 2]) -> Result<Self> {
        let start = [aim_point[0] + start_offset[0], aim_point[1] + start_offset[1], launch_distance];
        let mut t = launch_distance / speed;
        let mut v = [0.0; 3];
        for _ in 0..50 {
            v[0] = (aim_point[0] - start[0]) / t;
            v[1] = (aim_point[1] - start[1] - 0.5 * GRAVITY * t * t) / t;
            let lateral2 = v[0] * v[0] + v[1] * v[1];
            if lateral2 >= speed * speed {
                return Err(Error::Geometry("trajectory does not reach camera plane".into()));
            }
            let vz = (speed * speed - lateral2).sqrt();
            let next = launch_distance / vz;
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        v[0] = (aim_point[0] - start[0]) / t;
        v[1] = (aim_point[1] - start[1] - 0.5 * GRAVITY * t * t) / t;
        v[2] = -launch_distance / t;
        Ok(DartShot {
            start,
            velocity: v,
            flight_time: t,
        })
    }

    pub fn position(&self, t: f64) -> [f64; 3] {
        [
            self.start[0] + self.velocity[0] * t,
            self.start[1] + self.velocity[1] * t + 0.5 * GRAVITY * t * t,
            self.start[2] + self.velocity[2] * t,
        ]
    }
}

/// Near-straight dart flight toward `aim_point`.
pub fn gen_dart_trajectory(
    speed: f64,
    aim_point: [f64; 2],
    launch_distance: f64,
    start_offset: [f64; 2],
    limits: &TrajectoryLimits,
) -> Result<Vec<TrajectorySample<f64>>> {
    check_range("dart speed", speed, limits.dart_speed)?;
    check_range("launch distance", launch_distance, limits.dart_distance)?;
    let shot = DartShot::solve(speed, aim_point, launch_distance, start_offset)?;
    Ok(sample_until_impact(shot.flight_time, |t| shot.position(t)))
}

/// Linear interpolation of a sampled trajectory; clamps outside the sampled span.
pub fn position_at(samples: &[TrajectorySample<f64>], t: f64) -> [f64; 3] {
    let i = samples.partition_point(|s| s.t <= t);
    if i == 0 {
        return samples[0].pos;
    }
    if i >= samples.len() {
        return samples[samples.len() - 1].pos;
    }
    let (a, b) = (&samples[i - 1], &samples[i]);
    let s = (t - a.t) / (b.t - a.t);
    [0, 1, 2].map(|k| a.pos[k] + s * (b.pos[k] - a.pos[k]))
}

/// Finite-difference velocity of a sampled trajectory.
pub fn velocity_at(samples: &[TrajectorySample<f64>], t: f64) -> [f64; 3] {
    let i = samples.partition_point(|s| s.t <= t).clamp(1, samples.len() - 1);
    let (a, b) = (&samples[i - 1], &samples[i]);
    let dt = b.t - a.t;
    [0, 1, 2].map(|k| (b.pos[k] - a.pos[k]) / dt)
}
