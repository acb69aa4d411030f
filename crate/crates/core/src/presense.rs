//! Pre-grasp payload estimation: a PCA oriented bounding box around the
//! object's point cloud, combined with a per-label shape and density prior.

use crate::spatial::{validate_inertia, InertiaError, Mat3, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

pub const MIN_POINTS: usize = 10;
pub const DEFAULT_PAD_HEIGHT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum PresenseError {
    #[error("point cloud needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("point cloud is degenerate (covariance rank < 3)")]
    DegenerateCloud,
    #[error("point cloud contains non-finite coordinates")]
    NonFinite,
    #[error("no prior for label {0:?}")]
    UnknownLabel(String),
    #[error("invalid prior {label:?}: {reason}")]
    InvalidPrior { label: String, reason: String },
    #[error("duplicate label {0:?} in prior catalog")]
    DuplicateLabel(String),
    #[error("estimated object inertia is invalid: {0}")]
    Inertia(#[from] InertiaError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, PresenseError> {
        if points.len() < MIN_POINTS {
            return Err(PresenseError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(PresenseError::NonFinite);
        }
        Ok(Self { points })
    }

    /// Reads xyz triples. Files ending in `.bin` hold little-endian f64
    /// triples; anything else is text with one point per line, fields split
    /// by whitespace or commas, `#` starting a comment.
    pub fn load(path: &Path) -> Result<Self, PresenseError> {
        let io_err = |source| PresenseError::Io {
            path: path.display().to_string(),
            source,
        };
        if path.extension().is_some_and(|e| e == "bin") {
            let bytes = std::fs::read(path).map_err(io_err)?;
            if bytes.len() % 24 != 0 {
                return Err(PresenseError::Parse(
                    "binary cloud length is not a multiple of 24 bytes".into(),
                ));
            }
            let points = bytes
                .chunks_exact(24)
                .map(|c| {
                    let f = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
                    Vec3::new(f(0), f(1), f(2))
                })
                .collect();
            return Self::new(points);
        }
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self, PresenseError> {
        let mut points = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(str::parse::<f64>)
                .collect();
            match vals {
                Ok(v) if v.len() == 3 => points.push(Vec3::new(v[0], v[1], v[2])),
                _ => return Err(PresenseError::Parse(format!("line {}: expected three numbers", n + 1))),
            }
        }
        Self::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# x y z\n");
        for p in &self.points {
            s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Columns are the box axes (length, width, height) in the cloud frame.
    pub rotation: Mat3,
    /// `(l, w, h)` with `l >= w >= h`.
    pub dims: Vec3,
}

impl OrientedBox {
    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    /// Box-frame coordinates of a cloud-frame point.
    pub fn local(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let l = self.local(p);
        (0..3).all(|k| l[k].abs() <= 0.5 * self.dims[k] + tol)
    }

    /// Half of the box's extent along the cloud frame's z axis.
    pub fn vertical_half_extent(&self) -> f64 {
        0.5 * (0..3).map(|k| self.rotation[(2, k)].abs() * self.dims[k]).sum::<f64>()
    }
}

const REFINE_SPAN: f64 = 0.05;
const REFINE_STEPS: usize = 50;

fn extents(pts: &[Vec3], mean: &Vec3, axes: &Mat3) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        let c = axes.transpose() * (p - mean);
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    (lo, hi)
}

fn extent_volume(pts: &[Vec3], mean: &Vec3, axes: &Mat3) -> f64 {
    let (lo, hi) = extents(pts, mean, axes);
    (0..3).map(|k| hi[k] - lo[k]).product()
}

fn rotate_pair(axes: &Mat3, a: usize, b: usize, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let (u, v) = (axes.column(a).into_owned(), axes.column(b).into_owned());
    let mut out = *axes;
    out.set_column(a, &(c * u + s * v));
    out.set_column(b, &(-s * u + c * v));
    out
}

/// Oriented box seeded by the principal axes of the cloud covariance and
/// tightened by a small-angle minimum-volume search.
pub fn fit_obb(cloud: &PointCloud) -> Result<OrientedBox, PresenseError> {
    let pts = &cloud.points;
    if pts.len() < MIN_POINTS {
        return Err(PresenseError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let cov = pts.iter().fold(Mat3::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n;
    let eig = cov.symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    if !(max_ev > 0.0) || eig.eigenvalues.min() <= 1e-10 * max_ev {
        return Err(PresenseError::DegenerateCloud);
    }

    let mut axes = eig.eigenvectors;
    // sampled covariances tilt the principal axes slightly; a local
    // minimum-volume search in each coordinate plane removes that tilt
    for _ in 0..2 {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let mut best = (extent_volume(pts, &mean, &axes), 0.0);
            for step in 1..=REFINE_STEPS {
                let angle = REFINE_SPAN * step as f64 / REFINE_STEPS as f64;
                for sign in [-1.0, 1.0] {
                    let vol = extent_volume(pts, &mean, &rotate_pair(&axes, a, b, sign * angle));
                    if vol < best.0 {
                        best = (vol, sign * angle);
                    }
                }
            }
            axes = rotate_pair(&axes, a, b, best.1);
        }
    }

    let (lo, hi) = extents(pts, &mean, &axes);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (hi[b] - lo[b]).total_cmp(&(hi[a] - lo[a])));

    let mut rotation = Mat3::zeros();
    let mut dims = Vec3::zeros();
    let mut center = mean;
    for (slot, &k) in order.iter().enumerate() {
        let axis = axes.column(k).into_owned();
        rotation.set_column(slot, &axis);
        dims[slot] = hi[k] - lo[k];
        center += 0.5 * (hi[k] + lo[k]) * axis;
    }
    if rotation.determinant() < 0.0 {
        let flipped = -rotation.column(2);
        rotation.set_column(2, &flipped);
    }
    Ok(OrientedBox { center, rotation, dims })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPrior {
    pub label: String,
    /// Fraction of the bounding box volume the object fills.
    pub beta: f64,
    /// Diagonal MoI scaling relative to a solid box, per box axis.
    pub alpha: [f64; 3],
    /// Mean density, kg/m^3.
    pub rho: f64,
}

impl ObjectPrior {
    pub fn validate(&self) -> Result<(), PresenseError> {
        let bad = |reason: &str| PresenseError::InvalidPrior {
            label: self.label.clone(),
            reason: reason.into(),
        };
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(bad("beta must lie in (0, 1]"));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && *a <= 3.0)) {
            return Err(bad("alpha entries must lie in (0, 3]"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(bad("rho must be positive"));
        }
        Ok(())
    }
}

/// Pre-sensed payload: mass, MoI about the box centre in box axes, and where
/// the object's CoM sits relative to the end effector once grasped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectEstimate {
    pub mass_tilde: f64,
    pub moi_tilde: Mat3,
    /// Bounding box volume.
    pub volume_box: f64,
    /// Object volume after the prior's fill factor.
    pub volume_hat: f64,
    /// `^E p_O`: end effector to object CoM.
    pub grasp_offset: Vec3,
    /// Box axes in the observation frame.
    pub axes: Mat3,
}

impl ObjectEstimate {
    /// MoI rotated from box axes into the observation (and, for a level
    /// vehicle at yaw zero, body) frame.
    pub fn moi_in_parent(&self) -> Mat3 {
        self.axes * self.moi_tilde * self.axes.transpose()
    }
}

pub fn estimate_inertia(
    obb: &OrientedBox,
    prior: &ObjectPrior,
    pad_height: f64,
) -> Result<ObjectEstimate, PresenseError> {
    prior.validate()?;
    let (l, w, h) = (obb.dims.x, obb.dims.y, obb.dims.z);
    let volume_box = l * w * h;
    let volume_hat = prior.beta * volume_box;
    let mass = prior.rho * volume_hat;
    let base = Vec3::new(w * w + h * h, l * l + h * h, l * l + w * w);
    let moi = Mat3::from_diagonal(&(Vec3::from(prior.alpha).component_mul(&base) * (mass / 12.0)));
    validate_inertia(&moi)?;
    Ok(ObjectEstimate {
        mass_tilde: mass,
        moi_tilde: moi,
        volume_box,
        volume_hat,
        grasp_offset: Vec3::new(0.0, 0.0, -obb.vertical_half_extent() - pad_height),
        axes: obb.rotation,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorCatalog {
    #[serde(default, rename = "prior")]
    pub priors: Vec<ObjectPrior>,
}

/// Catalog shipped with the crate, one entry per benchmark object.
pub const DEFAULT_CATALOG: &str = include_str!("../data/priors.toml");

impl PriorCatalog {
    pub fn parse(text: &str) -> Result<Self, PresenseError> {
        let cat: PriorCatalog = toml::from_str(text).map_err(|e| PresenseError::Parse(e.to_string()))?;
        let mut seen = HashSet::new();
        for p in &cat.priors {
            p.validate()?;
            if !seen.insert(p.label.to_lowercase()) {
                return Err(PresenseError::DuplicateLabel(p.label.clone()));
            }
        }
        Ok(cat)
    }

    pub fn load(path: &Path) -> Result<Self, PresenseError> {
        let text = std::fs::read_to_string(path).map_err(|source| PresenseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled prior catalog is valid")
    }

    pub fn prior_for(&self, label: &str) -> Result<&ObjectPrior, PresenseError> {
        self.priors
            .iter()
            .find(|p| p.label == label)
            .or_else(|| self.priors.iter().find(|p| p.label.eq_ignore_ascii_case(label)))
            .ok_or_else(|| PresenseError::UnknownLabel(label.to_string()))
    }
}

/// Synthetic point clouds for scenarios and tests.
pub mod synth {
    use super::*;

    /// Uniform samples inside an axis-aligned box of the given extents.
    pub fn box_volume<R: Rng>(dims: &Vec3, center: &Vec3, n: usize, rng: &mut R) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                let u = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) - Vec3::repeat(0.5);
                center + dims.component_mul(&u)
            })
            .collect()
    }

    /// Vertices of a closed cylinder mesh with its axis along z: `rings`
    /// circles of `segments` points plus filled end caps.
    pub fn cylinder_mesh(radius: f64, height: f64, center: &Vec3, rings: usize, segments: usize) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let ring = |z: f64, r: f64, pts: &mut Vec<Vec3>| {
            for k in 0..segments {
                let a = 2.0 * std::f64::consts::PI * k as f64 / segments as f64;
                pts.push(center + Vec3::new(r * a.cos(), r * a.sin(), z));
            }
        };
        for i in 0..rings {
            let z = -0.5 * height + height * i as f64 / (rings - 1) as f64;
            ring(z, radius, &mut pts);
        }
        for z in [-0.5 * height, 0.5 * height] {
            pts.push(center + Vec3::new(0.0, 0.0, z));
            for c in 1..4 {
                ring(z, radius * c as f64 / 4.0, &mut pts);
            }
        }
        pts
    }

    pub fn add_noise<R: Rng>(points: &mut [Vec3], sigma: f64, rng: &mut R) {
        if sigma <= 0.0 {
            return;
        }
        let n = Normal::new(0.0, sigma).expect("sigma is positive");
        for p in points {
            *p += Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        }
    }
}
