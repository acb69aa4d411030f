//! Post-grasp adaptation: grasp detection from the external force, the
//! disturbance-observer mass estimator, MoI rescaling and the live
//! whole-system inertia.

use crate::delta::{forward_kin, DeltaError, DeltaGeometry};
use crate::presense::ObjectEstimate;
use crate::spatial::{compose_inertia, InertialParams, Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Tolerance on accumulated persistence time (sums of 0.01 s fall a few ulp short).
const PERSISTENCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DobConfig {
    /// Convergence gain `c`.
    pub gain: f64,
    /// Force and acceleration low-pass cutoff, Hz.
    pub cutoff_hz: f64,
    pub rate_hz: f64,
}

impl Default for DobConfig {
    fn default() -> Self {
        Self {
            gain: 10.0,
            cutoff_hz: 50.0,
            rate_hz: 100.0,
        }
    }
}

/// Disturbance-observer state. The filters run from the first sample; the
/// mass estimate only moves once [`DobState::start`] has been called.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DobState {
    pub m_hat: f64,
    /// Low-passed world-frame rotor force `R T`, N.
    pub force_filt: Vec3,
    /// Low-passed world-frame acceleration, m/s^2.
    pub accel_filt: Vec3,
    pub last_update: f64,
    pub estimating: bool,
    primed: bool,
}

impl Default for DobState {
    fn default() -> Self {
        Self {
            m_hat: 0.0,
            force_filt: Vec3::zeros(),
            accel_filt: Vec3::zeros(),
            last_update: 0.0,
            estimating: false,
            primed: false,
        }
    }
}

impl DobState {
    /// Begins mass estimation from `m_init` (the pre-sensed mass, or zero).
    pub fn start(&mut self, m_init: f64) {
        self.m_hat = m_init.max(0.0);
        self.estimating = true;
    }

    /// World-frame external force seen by a vehicle of mass `m_a`:
    /// `m_a (a + g e3) - R T`. A carried payload shows up as `-m_o g` in z.
    pub fn external_force(&self, m_a: f64, gravity: f64) -> Vec3 {
        m_a * (self.accel_filt + gravity * Vec3::z()) - self.force_filt
    }
}

/// One observer update at the DOB rate.
///
/// The z component of the mass dynamics
/// `m_hat' = c (R T - (m_a + m_hat)(a + g e3)) / (m_a (a_z + g))` is linear in
/// `m_hat`, so it is advanced with its exact zero-order-hold solution. At
/// hover this is the plain `(R T - m_a g e3 - m_hat g e3) / g` residual law;
/// normalizing by the measured specific force instead of `g` removes the
/// `a_z / g` bias while the vehicle climbs or sinks. Near free fall the
/// estimate is held.
#[allow(clippy::too_many_arguments)]
pub fn dob_step(
    st: &DobState,
    accel_w: &Vec3,
    rot: &Mat3,
    thrust_body: &Vec3,
    m_a: f64,
    gravity: f64,
    cfg: &DobConfig,
    t: f64,
    dt: f64,
) -> DobState {
    let force = rot * thrust_body;
    let mut next = *st;
    if st.primed {
        let alpha = 1.0 - (-2.0 * std::f64::consts::PI * cfg.cutoff_hz * dt).exp();
        next.force_filt += alpha * (force - st.force_filt);
        next.accel_filt += alpha * (accel_w - st.accel_filt);
    } else {
        next.force_filt = force;
        next.accel_filt = *accel_w;
        next.primed = true;
    }
    if next.estimating {
        let specific = next.accel_filt.z + gravity;
        if specific > 0.1 * gravity {
            let measured = next.force_filt.z / specific - m_a;
            let decay = (-cfg.gain * dt / m_a).exp();
            next.m_hat = (measured + (st.m_hat - measured) * decay).max(0.0);
        }
    }
    next.last_update = t;
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspDetector {
    pub threshold: f64,
    pub persistence: f64,
    #[serde(skip)]
    pub elapsed_above: f64,
    #[serde(skip)]
    pub triggered: bool,
}

impl Default for GraspDetector {
    fn default() -> Self {
        Self::new(1.0, 0.5)
    }
}

impl GraspDetector {
    pub fn new(threshold: f64, persistence: f64) -> Self {
        assert!(
            threshold > 0.0 && persistence > 0.0,
            "threshold and persistence must be positive"
        );
        Self {
            threshold,
            persistence,
            elapsed_above: 0.0,
            triggered: false,
        }
    }

    /// Accumulates time while `|ext_force_z|` exceeds the threshold and
    /// latches once it has done so continuously for `persistence` seconds.
    pub fn detect_grasp(&mut self, ext_force_z: f64, dt: f64) -> bool {
        if self.triggered {
            return true;
        }
        if ext_force_z.abs() > self.threshold {
            self.elapsed_above += dt;
            if self.elapsed_above >= self.persistence - PERSISTENCE_EPS {
                self.triggered = true;
            }
        } else {
            self.elapsed_above = 0.0;
        }
        self.triggered
    }
}

/// Scales the pre-sensed MoI by the ratio of refined to pre-sensed mass.
pub fn rescale_moi(j_tilde: &Mat3, m_tilde: f64, m_hat: f64) -> Mat3 {
    j_tilde * (m_hat / m_tilde)
}

/// The payload as the estimator currently sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadEstimate {
    pub mass: f64,
    /// MoI about the payload CoM in frame M axes.
    pub inertia: Mat3,
    /// `^E p_O`.
    pub grasp_offset: Vec3,
}

impl PayloadEstimate {
    /// Pre-sensed estimate with its mass replaced by `m_hat` and the MoI rescaled.
    pub fn from_presensed(obj: &ObjectEstimate, m_hat: f64) -> Self {
        Self {
            mass: m_hat,
            inertia: rescale_moi(&obj.moi_in_parent(), obj.mass_tilde, m_hat),
            grasp_offset: obj.grasp_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalInertia {
    pub m_t_hat: f64,
    /// System CoM in frame M.
    pub c_t: Vec3,
    pub j_t_hat: Mat3,
}

impl From<InertialParams> for TotalInertia {
    fn from(p: InertialParams) -> Self {
        Self {
            m_t_hat: p.mass,
            c_t: p.com,
            j_t_hat: p.inertia_about_com,
        }
    }
}

/// Whole-system mass, CoM and inertia for the current joint angles.
/// `vehicle.com` is `^M p_B`.
pub fn update_total(
    vehicle: &InertialParams,
    payload: Option<&PayloadEstimate>,
    theta: &[f64; 3],
    geom: &DeltaGeometry,
) -> Result<TotalInertia, DeltaError> {
    let Some(obj) = payload.filter(|p| p.mass > 0.0) else {
        return Ok((*vehicle).into());
    };
    let p_o = forward_kin(geom, theta)? + obj.grasp_offset;
    let body = InertialParams::new_unchecked(obj.mass, Vec3::zeros(), obj.inertia);
    Ok(compose_inertia(vehicle, &body, &p_o).into())
}
