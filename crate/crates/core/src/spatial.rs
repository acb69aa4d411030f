//! Vectors, rotations and rigid-body inertia algebra.
//!
//! Frame M (manipulator base) shares its axes with the body frame B; only a
//! translation separates them. All inertia tensors in this crate are therefore
//! expressed in body axes.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion as NaUnitQuaternion, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type UnitQuaternion = NaUnitQuaternion<f64>;

const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InertiaError {
    #[error("mass must be positive and finite, got {0}")]
    NonPositiveMass(f64),
    #[error("inertia tensor is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("inertia tensor is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("principal moments violate the triangle inequality: {0:?}")]
    TriangleInequality([f64; 3]),
    #[error("non-finite value in inertial parameters")]
    NonFinite,
}

/// Matrix form of the cross product: `skew(v) * w == v.cross(&w)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]: extracts the axial vector of the antisymmetric part.
pub fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Shifts an inertia tensor taken about a body's CoM to a point offset by `d`.
pub fn parallel_axis(j_com: &Mat3, mass: f64, d: &Vec3) -> Mat3 {
    j_com + mass * (d.dot(d) * Mat3::identity() - d * d.transpose())
}

pub fn rotation_matrix(q: &UnitQuaternion) -> Mat3 {
    q.to_rotation_matrix().into_inner()
}

/// Builds a unit quaternion from an orthonormal matrix. The input is
/// re-orthonormalized through nalgebra's rotation extraction.
pub fn quaternion_from_matrix(r: &Mat3) -> UnitQuaternion {
    let rot = nalgebra::Rotation3::from_matrix_eps(r, 1e-15, 64, nalgebra::Rotation3::identity());
    UnitQuaternion::from_rotation_matrix(&rot)
}

/// Renormalizes a raw quaternion, keeping `w >= 0`.
pub fn normalize_quaternion(q: Quaternion<f64>) -> UnitQuaternion {
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::from_quaternion(q)
}

/// Mass, centre of mass (frame M) and inertia tensor about that centre of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialParams {
    pub mass: f64,
    pub com: Vec3,
    pub inertia_about_com: Mat3,
}

impl InertialParams {
    /// Validated constructor: positive mass, symmetric positive-definite
    /// inertia whose principal moments satisfy the triangle inequality.
    pub fn new(mass: f64, com: Vec3, inertia_about_com: Mat3) -> Result<Self, InertiaError> {
        let p = Self {
            mass,
            com,
            inertia_about_com,
        };
        p.validate()?;
        Ok(p)
    }

    /// Skips validation. Used for intermediate sums and for the massless
    /// "no payload" placeholder.
    pub fn new_unchecked(mass: f64, com: Vec3, inertia_about_com: Mat3) -> Self {
        Self {
            mass,
            com,
            inertia_about_com,
        }
    }

    pub fn point_mass(mass: f64, com: Vec3) -> Self {
        Self::new_unchecked(mass, com, Mat3::zeros())
    }

    pub fn validate(&self) -> Result<(), InertiaError> {
        if !self.mass.is_finite()
            || !self.com.iter().all(|c| c.is_finite())
            || !self.inertia_about_com.iter().all(|c| c.is_finite())
        {
            return Err(InertiaError::NonFinite);
        }
        if self.mass <= 0.0 {
            return Err(InertiaError::NonPositiveMass(self.mass));
        }
        validate_inertia(&self.inertia_about_com)
    }

    /// Inertia of this body about an arbitrary point `p` (frame M).
    pub fn inertia_about(&self, p: &Vec3) -> Mat3 {
        parallel_axis(&self.inertia_about_com, self.mass, &(self.com - p))
    }
}

/// Checks symmetry, positive definiteness and the principal-moment triangle
/// inequality.
pub fn validate_inertia(j: &Mat3) -> Result<(), InertiaError> {
    let scale = j.abs().max().max(f64::MIN_POSITIVE);
    let asym = (j - j.transpose()).abs().max();
    if asym > SYMMETRY_TOL * scale {
        return Err(InertiaError::Asymmetric(asym));
    }
    let eig = j.symmetric_eigenvalues();
    let mut m = [eig[0], eig[1], eig[2]];
    m.sort_by(|a, b| a.total_cmp(b));
    if m[0] <= 0.0 {
        return Err(InertiaError::NotPositiveDefinite(m[0]));
    }
    if m[0] + m[1] < m[2] * (1.0 - 1e-9) {
        return Err(InertiaError::TriangleInequality(m));
    }
    Ok(())
}

/// Combines rigid bodies into one: mass-weighted CoM and the sum of each
/// body's inertia shifted to that common CoM.
pub fn combine(bodies: &[InertialParams]) -> InertialParams {
    let mass: f64 = bodies.iter().map(|b| b.mass).sum();
    if mass <= 0.0 {
        return InertialParams::new_unchecked(0.0, Vec3::zeros(), Mat3::zeros());
    }
    let com = bodies.iter().fold(Vec3::zeros(), |acc, b| acc + b.mass * b.com) / mass;
    let inertia = bodies.iter().fold(Mat3::zeros(), |acc, b| {
        acc + parallel_axis(&b.inertia_about_com, b.mass, &(b.com - com))
    });
    InertialParams::new_unchecked(mass, com, inertia)
}

/// Total inertial parameters of the vehicle plus an object whose CoM sits at
/// `p_obj + obj.com` in frame M.
pub fn compose_inertia(am: &InertialParams, obj: &InertialParams, p_obj: &Vec3) -> InertialParams {
    let placed = InertialParams::new_unchecked(obj.mass, p_obj + obj.com, obj.inertia_about_com);
    combine(&[*am, placed])
}
