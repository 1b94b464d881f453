use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::trajectory::{position_at, velocity_at, ObjectKind, ObjectSpec};
use crate::event::{Event, EventStream, Polarity};
use crate::geom::{CameraModel, TrajectorySample};

/// Event emission model for the silhouette renderer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    /// Events emitted per pixel per occupancy change.
    pub emission_count: u8,
    /// Swap the leading/trailing polarity convention (dark object on bright background).
    pub invert_polarity: bool,
    /// Background events per pixel per second.
    pub noise_rate: f64,
    pub micro_step_us: u64,
    /// Signal events get a uniform timestamp offset in `[0, jitter_us]`.
    pub jitter_us: u64,
    /// Rendering stops once the nearest point of the object is this close to the sensor plane, metres.
    pub z_clip: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            emission_count: 1,
            invert_polarity: false,
            noise_rate: 0.1,
            micro_step_us: 100,
            jitter_us: 0,
            z_clip: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SynthStats {
    pub signal_events: usize,
    pub noise_events: usize,
    pub visible_steps: usize,
    /// Set when the object never covered a pixel.
    pub never_visible: bool,
}

/// Pixel-aligned bounding box, inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Bbox {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Bbox {
    fn union(a: Option<Bbox>, b: Option<Bbox>) -> Option<Bbox> {
        match (a, b) {
            (Some(a), Some(b)) => Some(Bbox {
                x0: a.x0.min(b.x0),
                y0: a.y0.min(b.y0),
                x1: a.x1.max(b.x1),
                y1: a.y1.max(b.y1),
            }),
            (a, None) => a,
            (None, b) => b,
        }
    }
}

/// Projected outline: a disk (ball) or a capsule between two image points (dart).
/// Pixel `(i, j)` is centred on image coordinate `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Silhouette {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub radius: f64,
}

impl Silhouette {
    fn dist2(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let s = if len2 > 0.0 {
            (((x - self.a.0) * dx + (y - self.a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (self.a.0 + s * dx, self.a.1 + s * dy);
        (x - px).powi(2) + (y - py).powi(2)
    }

    /// Whether the pixel centred at `(x, y)` is covered. Objects smaller than a
    /// pixel still cover the pixel nearest their centre.
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let r = self.radius.max(0.5);
        self.dist2(x as f64, y as f64) <= r * r
    }

    fn bbox(&self, width: u16, height: u16) -> Option<Bbox> {
        let r = self.radius.max(0.5) + 1.0;
        let lo_x = self.a.0.min(self.b.0) - r;
        let hi_x = self.a.0.max(self.b.0) + r;
        let lo_y = self.a.1.min(self.b.1) - r;
        let hi_y = self.a.1.max(self.b.1) + r;
        if hi_x < 0.0 || hi_y < 0.0 || lo_x >= width as f64 || lo_y >= height as f64 {
            return None;
        }
        Some(Bbox {
            x0: lo_x.max(0.0).floor() as usize,
            y0: lo_y.max(0.0).floor() as usize,
            x1: (hi_x.ceil() as usize).min(width as usize - 1),
            y1: (hi_y.ceil() as usize).min(height as usize - 1),
        })
    }
}

/// Image outline of `object` centred at camera-frame `pos` and moving along `vel`.
/// `None` once the object reaches the clip plane.
pub fn silhouette(object: &ObjectSpec, cam: &CameraModel<f64>, pos: [f64; 3], vel: [f64; 3], z_clip: f64) -> Option<Silhouette> {
    let f = 0.5 * (cam.fx + cam.fy);
    match object.kind {
        ObjectKind::Ball => {
            if pos[2] - object.radius <= z_clip {
                return None;
            }
            let c = cam.project(&pos).ok()?;
            Some(Silhouette {
                a: c,
                b: c,
                radius: f * object.radius / pos[2],
            })
        }
        ObjectKind::Dart => {
            let speed = (vel[0] * vel[0] + vel[1] * vel[1] + vel[2] * vel[2]).sqrt();
            let dir = if speed > 0.0 { vel.map(|v| v / speed) } else { [0.0, 0.0, -1.0] };
            let h = 0.5 * object.length;
            let tip = [0, 1, 2].map(|k| pos[k] + h * dir[k]);
            let tail = [0, 1, 2].map(|k| pos[k] - h * dir[k]);
            if tip[2].min(tail[2]) - object.radius <= z_clip {
                return None;
            }
            let (pa, pb) = (cam.project(&tip).ok()?, cam.project(&tail).ok()?);
            Some(Silhouette {
                a: pa,
                b: pb,
                radius: f * object.radius / pos[2],
            })
        }
    }
}

/// Renders a recording: occupancy changes between micro-steps emit events,
/// newly covered pixels positive and uncovered pixels negative, plus uniform
/// background noise. Rendering stops at the last trajectory sample or when the
/// object reaches the clip plane.
pub fn synthesize_events(
    trajectory: &[TrajectorySample<f64>],
    object: &ObjectSpec,
    cam: &CameraModel<f64>,
    cfg: &SimConfig,
    t_end_s: f64,
) -> (EventStream, SynthStats) {
    let (w, h) = (cam.width, cam.height);
    let mut rng = crate::seed::rng(cfg.seed);
    let mut stats = SynthStats::default();
    let mut events = Vec::new();
    if trajectory.is_empty() {
        stats.never_visible = true;
        return (EventStream::empty(w, h), stats);
    }
    let t_end_us = (t_end_s * 1e6).round().max(0.0) as u64;
    let (on, off) = if cfg.invert_polarity {
        (Polarity::Off, Polarity::On)
    } else {
        (Polarity::On, Polarity::Off)
    };

    let mut occ = vec![false; w as usize * h as usize];
    let mut prev_box: Option<Bbox> = None;
    let mut ever_visible = false;
    let mut step = 0u64;
    loop {
        let t_us = step * cfg.micro_step_us;
        if t_us > t_end_us {
            break;
        }
        let t = t_us as f64 * 1e-6;
        let pos = position_at(trajectory, t);
        let vel = velocity_at(trajectory, t);
        let Some(sil) = silhouette(object, cam, pos, vel, cfg.z_clip) else {
            if pos[2] <= object.radius + object.length + cfg.z_clip {
                // Past the clip plane: the scene is frozen from here on.
                break;
            }
            step += 1;
            continue;
        };
        let cur_box = sil.bbox(w, h);
        if cur_box.is_some() {
            stats.visible_steps += 1;
        }
        if let Some(b) = Bbox::union(prev_box, cur_box) {
            for y in b.y0..=b.y1 {
                for x in b.x0..=b.x1 {
                    let i = y * w as usize + x;
                    let now = cur_box.is_some_and(|cb| x >= cb.x0 && x <= cb.x1 && y >= cb.y0 && y <= cb.y1)
                        && sil.covers(x, y);
                    if now != occ[i] {
                        occ[i] = now;
                        ever_visible |= now;
                        // The initial silhouette is the static background state.
                        if step > 0 {
                            let p = if now { on } else { off };
                            for _ in 0..cfg.emission_count {
                                let jitter = if cfg.jitter_us > 0 { rng.gen_range(0..=cfg.jitter_us) } else { 0 };
                                events.push(Event::new(x as u16, y as u16, p, t_us + jitter));
                            }
                            stats.signal_events += cfg.emission_count as usize;
                        }
                    }
                }
            }
        }
        prev_box = cur_box;
        step += 1;
    }

    if cfg.noise_rate > 0.0 && t_end_us > 0 {
        let mean = cfg.noise_rate * w as f64 * h as f64 * t_end_us as f64 * 1e-6;
        let n = Poisson::new(mean).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
        for _ in 0..n {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            events.push(Event::new(rng.gen_range(0..w), rng.gen_range(0..h), p, rng.gen_range(0..t_end_us)));
        }
        stats.noise_events = n;
    }
    stats.never_visible = !ever_visible;
    if stats.never_visible {
        log::warn!("object never visible; emitting noise only");
    }
    (EventStream::from_unsorted(w, h, events), stats)
}
