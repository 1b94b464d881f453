//! Pinhole camera, rigid transforms, impact solving and the polar impact grid.
//!
//! Camera frame: origin at the optical centre, +Z perpendicular to the sensor
//! plane pointing into the scene. An object "impacts" when its centre crosses
//! Z = 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

pub const THETA_BINS: usize = 12;
pub const R_BINS: usize = 4;
/// Angular width of one θ bin, degrees.
pub const THETA_BIN_DEG: f64 = 30.0;
/// Lower edge of each radius bin, millimetres. The last bin is open-ended.
pub const R_BIN_MIN_MM: [f64; R_BINS] = [0.0, 60.0, 91.0, 121.0];

pub fn identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn rot_z<T: Real>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let (o, z) = (T::one(), T::zero());
    [[c, -s, z], [s, c, z], [z, z, o]]
}

pub fn mat_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    let mut out = [T::zero(); 3];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    out
}

pub fn transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut out = *m;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

pub fn det<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn dist<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn orthonormal_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(100.0))
}

/// Rotation + translation mapping world coordinates into the camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: identity(),
            translation: [T::zero(); 3],
        }
    }

    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let rtr = mat_mul(&transpose(&rotation), &rotation);
        let eye = identity::<T>();
        let tol = orthonormal_tol::<T>();
        let off = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (rtr[i][j] - eye[i][j]).abs())
            .fold(T::zero(), T::max);
        if off > tol || (det(&rotation) - T::one()).abs() > tol {
            return Err(Error::Geometry("rotation is not orthonormal with determinant 1".into()));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn apply(&self, p: &Vec3<T>) -> Vec3<T> {
        let r = mat_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, &self.translation);
        RigidTransform {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }
}

/// Pinhole intrinsics, sensor size and world-to-camera extrinsics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel<T> {
    pub width: u16,
    pub height: u16,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub world_to_cam: RigidTransform<T>,
}

impl<T: Real> CameraModel<T> {
    pub fn new(width: u16, height: u16, fx: T, fy: T, cx: T, cy: T, world_to_cam: RigidTransform<T>) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::Geometry("focal lengths must be positive".into()));
        }
        // Re-validates the rotation when constructed by hand.
        let world_to_cam = RigidTransform::new(world_to_cam.rotation, world_to_cam.translation)?;
        Ok(CameraModel {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            world_to_cam,
        })
    }

    /// Sensor of `width`×`height`, square pixels, principal point at the centre,
    /// camera frame equal to the world frame.
    pub fn centered(width: u16, height: u16, focal: T) -> Self {
        CameraModel {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: T::lit(width as f64 / 2.0),
            cy: T::lit(height as f64 / 2.0),
            world_to_cam: RigidTransform::identity(),
        }
    }

    pub fn to_camera(&self, world: &Vec3<T>) -> Vec3<T> {
        self.world_to_cam.apply(world)
    }

    pub fn to_world(&self, cam: &Vec3<T>) -> Vec3<T> {
        self.world_to_cam.inverse().apply(cam)
    }

    /// Camera-frame point to real-valued pixel coordinates.
    pub fn project(&self, p: &Vec3<T>) -> Result<(T, T)> {
        if p[2] <= T::zero() {
            return Err(Error::Geometry("behind camera plane".into()));
        }
        Ok((self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy))
    }

    pub fn backproject(&self, u: T, v: T, depth: T) -> Vec3<T> {
        [(u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth]
    }

    pub fn in_bounds(&self, u: T, v: T) -> bool {
        u >= T::zero() && v >= T::zero() && u < T::lit(self.width as f64) && v < T::lit(self.height as f64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "height = {}", self.height);
        for (k, v) in [("fx", self.fx), ("fy", self.fy), ("cx", self.cx), ("cy", self.cy)] {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (i, row) in self.world_to_cam.rotation.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(s, "r{i}{j} = {v}");
            }
        }
        for (i, v) in self.world_to_cam.translation.iter().enumerate() {
            let _ = writeln!(s, "t{i} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n as u64 + 1, "expected key = value"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::parse(n as u64 + 1, format!("bad number for {}", k.trim())))?;
            kv.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Data(format!("camera file missing key {k}")));
        let mut rot = [[T::zero(); 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = T::lit(get(&format!("r{i}{j}"))?);
            }
        }
        let mut tr = [T::zero(); 3];
        for (i, v) in tr.iter_mut().enumerate() {
            *v = T::lit(get(&format!("t{i}"))?);
        }
        CameraModel::new(
            get("width")? as u16,
            get("height")? as u16,
            T::lit(get("fx")?),
            T::lit(get("fy")?),
            T::lit(get("cx")?),
            T::lit(get("cy")?),
            RigidTransform::new(rot, tr)?,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Object centre in the camera frame at time `t` (seconds).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample<T> {
    pub t: T,
    pub pos: Vec3<T>,
}

/// θ of an impact point in degrees, measured from +X toward +Y, in `[0, 360)`.
pub fn theta_deg<T: Real>(x: T, y: T) -> T {
    let d = y.atan2(x).to_degrees();
    let full = T::lit(360.0);
    let d = if d < T::zero() { d + full } else { d };
    if d >= full {
        T::zero()
    } else {
        d
    }
}

pub fn theta_bin_of_deg<T: Real>(deg: T) -> usize {
    let b = (deg / T::lit(THETA_BIN_DEG)).floor().to_usize().unwrap_or(0);
    b.min(THETA_BINS - 1)
}

/// Radius bin for a distance in metres; bins are lower-edge inclusive.
pub fn r_bin<T: Real>(r_m: T) -> usize {
    let mm = r_m * T::lit(1000.0);
    R_BIN_MIN_MM.iter().rposition(|&lo| mm >= T::lit(lo)).unwrap_or(0)
}

/// Impact point on the camera plane together with its polar-grid labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpactLabel<T> {
    pub t_impact: T,
    pub x: T,
    pub y: T,
    pub r: T,
    pub theta_deg: T,
    pub r_bin: usize,
    pub theta_bin: usize,
}

impl<T: Real> ImpactLabel<T> {
    pub fn at(t_impact: T, x: T, y: T) -> Self {
        let r = (x * x + y * y).sqrt();
        let theta = theta_deg(x, y);
        ImpactLabel {
            t_impact,
            x,
            y,
            r,
            theta_deg: theta,
            r_bin: r_bin(r),
            theta_bin: theta_bin_of_deg(theta),
        }
    }
}

/// Locates the Z = 0 crossing by linear interpolation between the bracketing samples.
pub fn impact_solve<T: Real>(samples: &[TrajectorySample<T>]) -> Result<ImpactLabel<T>> {
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.pos[2] > T::zero() && b.pos[2] <= T::zero() {
            let s = a.pos[2] / (a.pos[2] - b.pos[2]);
            let lerp = |u: T, v: T| u + s * (v - u);
            return Ok(ImpactLabel::at(lerp(a.t, b.t), lerp(a.pos[0], b.pos[0]), lerp(a.pos[1], b.pos[1])));
        }
    }
    if let Some(first) = samples.first() {
        if first.pos[2] == T::zero() {
            return Ok(ImpactLabel::at(first.t, first.pos[0], first.pos[1]));
        }
    }
    Err(Error::Geometry("trajectory does not reach camera plane".into()))
}

/// Time-to-collision countdown `τ = T_impact - t` for every sample at or before impact.
pub fn label_timesteps<T: Real>(samples: &[TrajectorySample<T>], t_impact: T) -> Vec<(T, T)> {
    samples
        .iter()
        .filter(|s| s.t <= t_impact)
        .map(|s| (s.t, t_impact - s.t))
        .collect()
}
