//! Hough-circle and convex-hull size estimators on binned event frames.

use crate::error::{Error, Result};
use crate::event::CountFrame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughConfig {
    pub r_min: usize,
    pub r_max: usize,
    /// Centre grid spacing (px).
    pub spatial_step: usize,
    /// Radius spacing (px).
    pub radial_step: usize,
    /// Votes / circumference below which a detection is flagged.
    pub min_support: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            r_min: 5,
            r_max: 60,
            spatial_step: 2,
            radial_step: 1,
            min_support: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub votes: u32,
    /// Fraction of the circumference backed by votes.
    pub support: f64,
    pub low_confidence: bool,
}

/// Active pixel coordinates of either polarity.
pub fn active_points(frame: &CountFrame) -> Vec<(f64, f64)> {
    frame.active_pixels().into_iter().map(|(x, y)| (x as f64, y as f64)).collect()
}

/// Accumulator argmax over a `(cx, cy, r)` grid.
pub fn hough_circle(points: &[(f64, f64)], width: usize, height: usize, cfg: &HoughConfig) -> Result<HoughCircle> {
    if points.len() < 3 {
        return Err(Error::Data("insufficient events".into()));
    }
    if cfg.spatial_step == 0 || cfg.radial_step == 0 || cfg.r_min == 0 || cfg.r_min > cfg.r_max {
        return Err(Error::Config(format!("invalid Hough configuration {cfg:?}")));
    }
    let s = cfg.spatial_step as f64;
    let (gw, gh) = (width.div_ceil(cfg.spatial_step), height.div_ceil(cfg.spatial_step));
    let radii: Vec<usize> = (cfg.r_min..=cfg.r_max).step_by(cfg.radial_step).collect();
    let plane = gw * gh;
    let mut acc = vec![0u32; plane * radii.len()];
    let mut stamp = vec![u32::MAX; plane];
    let mut visit = 0u32;
    for (ri, &r) in radii.iter().enumerate() {
        let rf = r as f64;
        let steps = ((2.0 * std::f64::consts::PI * rf / (0.5 * s)).ceil() as usize).max(8);
        let trig: Vec<(f64, f64)> = (0..steps)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
                (rf * a.cos(), rf * a.sin())
            })
            .collect();
        let layer = &mut acc[ri * plane..(ri + 1) * plane];
        for &(px, py) in points {
            // Each point votes at most once per cell and radius.
            visit = visit.wrapping_add(1);
            for &(dx, dy) in &trig {
                let (gx, gy) = (((px + dx) / s).round(), ((py + dy) / s).round());
                if gx < 0.0 || gy < 0.0 || gx >= gw as f64 || gy >= gh as f64 {
                    continue;
                }
                let cell = gy as usize * gw + gx as usize;
                if stamp[cell] != visit {
                    stamp[cell] = visit;
                    layer[cell] += 1;
                }
            }
        }
    }
    let (best, votes) = acc.iter().enumerate().max_by_key(|&(i, v)| (*v, std::cmp::Reverse(i))).map(|(i, v)| (i, *v)).unwrap();
    let (ri, cell) = (best / plane, best % plane);
    let r = radii[ri] as f64;
    let support = votes as f64 / (2.0 * std::f64::consts::PI * r);
    Ok(HoughCircle {
        cx: (cell % gw) as f64 * s,
        cy: (cell / gw) as f64 * s,
        r,
        votes,
        support,
        low_confidence: support < cfg.min_support,
    })
}

pub fn hough_circle_baseline(frame: &CountFrame, cfg: &HoughConfig) -> Result<HoughCircle> {
    hough_circle(&active_points(frame), frame.width() as usize, frame.height() as usize, cfg)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull, counter-clockwise, without collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        * 0.5
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullEstimate {
    pub diameter_px: f64,
    pub area_px2: f64,
    pub hull: Vec<(f64, f64)>,
}

/// Effective diameter `2·√(A/π)` of the hull of the given points.
pub fn hull_diameter(points: &[(f64, f64)]) -> Result<HullEstimate> {
    let hull = convex_hull(points);
    let area = if hull.len() >= 3 { polygon_area(&hull) } else { 0.0 };
    if area <= 0.0 {
        return Err(Error::Data("insufficient events".into()));
    }
    Ok(HullEstimate {
        diameter_px: 2.0 * (area / std::f64::consts::PI).sqrt(),
        area_px2: area,
        hull,
    })
}

pub fn convexhull_baseline(frame: &CountFrame) -> Result<HullEstimate> {
    hull_diameter(&active_points(frame))
}

/// Pixels whose centre lies within `r` of `(cx, cy)`.
pub fn raster_disk(cx: f64, cy: f64, r: f64, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                out.push((x, y));
            }
        }
    }
    out
}

/// Pixels whose centre lies within half a pixel of the circle of radius `r`.
pub fn raster_ring(cx: f64, cy: f64, r: f64, width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if (d - r).abs() <= 0.5 {
                out.push((x, y));
            }
        }
    }
    out
}
