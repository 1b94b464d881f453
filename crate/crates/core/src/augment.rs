//! Event-level augmentations driven by ground-truth 3-D motion.
//!
//! Rotation about the optical axis is a depth-independent image rotation about
//! the principal point. Translating the impact point is not: each time window's
//! events move by the pinhole image of the world offset at that window's mean
//! object depth, so near windows shift more than far ones.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream};
use crate::geom::{rot_z, CameraModel, ImpactLabel, TrajectorySample, R_BINS, R_BIN_MIN_MM, THETA_BINS, THETA_BIN_DEG};
use crate::sim::{position_at, Recording};

/// Default bound on translation perturbations, metres.
pub const DEFAULT_MAX_SHIFT: f64 = 0.25;
/// Outer radius of the last radius bin used when sampling target impacts, metres.
pub const DEFAULT_R_OUTER: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentKind {
    /// World-frame shift of the impact point (ΔX, ΔY), metres.
    Translate([f64; 2]),
    /// Rotation about the optical axis, radians in `[0, 2π)`.
    Rotate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    /// Depth-association window for translations, microseconds.
    pub window_us: u64,
}

impl AugmentSpec {
    pub fn rotate(phi: f64) -> Self {
        AugmentSpec {
            kind: AugmentKind::Rotate(phi.rem_euclid(TAU)),
            window_us: 0,
        }
    }

    pub fn translate(delta: [f64; 2], window_us: u64) -> Self {
        AugmentSpec {
            kind: AugmentKind::Translate(delta),
            window_us,
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            AugmentKind::Rotate(phi) => format!("rotate:{phi}"),
            AugmentKind::Translate([dx, dy]) => format!("translate:{dx},{dy}@{}us", self.window_us),
        }
    }
}

/// Rotates every event by `phi` about the principal point; drops events that leave the sensor.
pub fn rotate_events(stream: &EventStream, phi: f64, cam: &CameraModel<f64>) -> EventStream {
    let (s, c) = phi.sin_cos();
    let (w, h) = (stream.width() as f64, stream.height() as f64);
    let events = stream
        .events()
        .iter()
        .filter_map(|e| {
            let (dx, dy) = (e.x as f64 - cam.cx, e.y as f64 - cam.cy);
            let x = (c * dx - s * dy + cam.cx).round();
            let y = (s * dx + c * dy + cam.cy).round();
            (x >= 0.0 && y >= 0.0 && x < w && y < h).then(|| Event::new(x as u16, y as u16, e.p, e.t))
        })
        .collect();
    // Timestamps are untouched, so order is preserved.
    EventStream::new(stream.width(), stream.height(), events).expect("rotation keeps order and bounds")
}

/// Mean object depth over `[t0, t1)` seconds, integrating the piecewise-linear trajectory.
pub fn mean_depth(trajectory: &[TrajectorySample<f64>], t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return position_at(trajectory, t0)[2];
    }
    let mut knots = vec![t0];
    knots.extend(trajectory.iter().map(|s| s.t).filter(|&t| t > t0 && t < t1));
    knots.push(t1);
    let area: f64 = knots
        .windows(2)
        .map(|k| 0.5 * (position_at(trajectory, k[0])[2] + position_at(trajectory, k[1])[2]) * (k[1] - k[0]))
        .sum();
    area / (t1 - t0)
}

/// First time the interpolated trajectory reaches Z = 0 (infinity if never).
fn plane_crossing(trajectory: &[TrajectorySample<f64>]) -> f64 {
    match trajectory.first() {
        Some(s) if s.pos[2] <= 0.0 => return s.t,
        None => return f64::INFINITY,
        _ => {}
    }
    for p in trajectory.windows(2) {
        let (a, b) = (&p[0], &p[1]);
        if b.pos[2] <= 0.0 {
            return a.t + (b.t - a.t) * a.pos[2] / (a.pos[2] - b.pos[2]);
        }
    }
    f64::INFINITY
}

/// Integer pixel shift for world offset `delta` at depth `z`.
pub fn pixel_shift(delta: [f64; 2], z: f64, cam: &CameraModel<f64>) -> (i64, i64) {
    ((cam.fx * delta[0] / z).round() as i64, (cam.fy * delta[1] / z).round() as i64)
}

/// Shifts each `window_us` slice of events by the image of `delta` at the
/// window's mean object depth.
pub fn translate_events(
    stream: &EventStream,
    trajectory: &[TrajectorySample<f64>],
    delta: [f64; 2],
    cam: &CameraModel<f64>,
    window_us: u64,
) -> Result<EventStream> {
    if window_us == 0 {
        return Err(Error::Config("translation window must be positive".into()));
    }
    let (w, h) = (stream.width() as i64, stream.height() as i64);
    let mut out = Vec::with_capacity(stream.len());
    let evs = stream.events();
    // Depth is only meaningful before the object reaches the sensor plane;
    // later events (background noise) are dropped.
    let t_cross = plane_crossing(trajectory);
    let mut i = 0;
    while i < evs.len() {
        let k = evs[i].t / window_us;
        let (t0, t1) = (k * window_us, (k + 1) * window_us);
        let j = i + evs[i..].partition_point(|e| e.t < t1);
        let (s0, s1) = (t0 as f64 * 1e-6, (t1 as f64 * 1e-6).min(t_cross));
        if s0 >= t_cross && s0 > 0.0 {
            i = j;
            continue;
        }
        let z = mean_depth(trajectory, s0, s1);
        if !(z > 0.0) {
            return Err(Error::Geometry(format!("mean object depth {z} m in window starting at {t0} us")));
        }
        let (sx, sy) = pixel_shift(delta, z, cam);
        out.extend(evs[i..j].iter().filter_map(|e| {
            let (x, y) = (e.x as i64 + sx, e.y as i64 + sy);
            (x >= 0 && y >= 0 && x < w && y < h).then(|| Event::new(x as u16, y as u16, e.p, e.t))
        }));
        i = j;
    }
    EventStream::new(stream.width(), stream.height(), out)
}

/// Impact label after an augmentation. Time to collision is unchanged.
pub fn relabel(label: &ImpactLabel<f64>, spec: &AugmentSpec) -> ImpactLabel<f64> {
    match spec.kind {
        AugmentKind::Translate([dx, dy]) => ImpactLabel::at(label.t_impact, label.x + dx, label.y + dy),
        AugmentKind::Rotate(phi) => {
            let (s, c) = phi.sin_cos();
            ImpactLabel::at(label.t_impact, c * label.x - s * label.y, s * label.x + c * label.y)
        }
    }
}

fn transform_trajectory(trajectory: &[TrajectorySample<f64>], spec: &AugmentSpec) -> Vec<TrajectorySample<f64>> {
    match spec.kind {
        AugmentKind::Translate([dx, dy]) => trajectory
            .iter()
            .map(|s| TrajectorySample {
                t: s.t,
                pos: [s.pos[0] + dx, s.pos[1] + dy, s.pos[2]],
            })
            .collect(),
        AugmentKind::Rotate(phi) => {
            let r = rot_z(phi);
            trajectory
                .iter()
                .map(|s| TrajectorySample {
                    t: s.t,
                    pos: crate::geom::mat_vec(&r, &s.pos),
                })
                .collect()
        }
    }
}

/// Applies `specs` in order to a recording's events, trajectory and labels.
pub fn augment_recording(rec: &Recording, specs: &[AugmentSpec], id: String) -> Result<Recording> {
    let mut out = rec.clone();
    out.id = id;
    let mut applied = Vec::new();
    for spec in specs {
        out.events = match spec.kind {
            AugmentKind::Rotate(phi) => rotate_events(&out.events, phi, &out.camera),
            AugmentKind::Translate(delta) => {
                translate_events(&out.events, &out.trajectory, delta, &out.camera, spec.window_us)?
            }
        };
        out.trajectory = transform_trajectory(&out.trajectory, spec);
        out.impact = relabel(&out.impact, spec);
        applied.push(spec.describe());
    }
    out.meta.insert("source".into(), rec.id.clone());
    out.meta.insert("augment".into(), applied.join(" "));
    Ok(out)
}

/// Draws augmentations whose resulting impacts are balanced over the polar grid.
///
/// A rotation is drawn uniformly; then a target (r_bin, θ_bin) cell is drawn
/// uniformly and a target impact uniformly by area inside it. The translation
/// is whatever carries the rotated impact there, redrawn if longer than
/// `max_shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalancedSampler {
    pub max_shift: f64,
    pub r_outer: f64,
    pub window_us: u64,
}

impl BalancedSampler {
    pub fn new(window_us: u64) -> Self {
        BalancedSampler {
            max_shift: DEFAULT_MAX_SHIFT,
            r_outer: DEFAULT_R_OUTER,
            window_us,
        }
    }

    fn target(&self, rng: &mut impl Rng, r_bin: usize, theta_bin: usize) -> [f64; 2] {
        let lo = R_BIN_MIN_MM[r_bin] / 1000.0;
        let hi = if r_bin + 1 < R_BINS {
            R_BIN_MIN_MM[r_bin + 1] / 1000.0
        } else {
            self.r_outer
        };
        let r = (lo * lo + rng.gen::<f64>() * (hi * hi - lo * lo)).sqrt().clamp(lo, hi);
        let deg = THETA_BIN_DEG * (theta_bin as f64 + rng.gen_range(1e-6..1.0 - 1e-6));
        let a = deg.to_radians();
        [r * a.cos(), r * a.sin()]
    }

    pub fn sample(&self, impact: &ImpactLabel<f64>, rng: &mut impl Rng) -> Vec<AugmentSpec> {
        let phi = rng.gen_range(0.0..TAU);
        let rotate = AugmentSpec::rotate(phi);
        let rotated = relabel(impact, &rotate);
        for _ in 0..1000 {
            let (rb, tb) = (rng.gen_range(0..R_BINS), rng.gen_range(0..THETA_BINS));
            let target = self.target(rng, rb, tb);
            let delta = [target[0] - rotated.x, target[1] - rotated.y];
            if delta[0].hypot(delta[1]) <= self.max_shift {
                return vec![rotate, AugmentSpec::translate(delta, self.window_us)];
            }
        }
        vec![rotate]
    }
}
