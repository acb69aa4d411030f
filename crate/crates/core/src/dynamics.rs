//! Rigid-body dynamics of the vehicle, rotor thrust/torque model and the
//! first-order motor response.

use crate::spatial::{normalize_quaternion, rotation_matrix, Mat3, UnitQuaternion, Vec3};
use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_STEP: f64 = 5e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state became non-finite")]
    NonFinite,
    #[error("integration step {0} s outside (0, 5 ms]")]
    BadStep(f64),
    #[error("invalid rotor configuration: {0}")]
    InvalidRotors(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// World-frame position, m.
    pub p: Vec3,
    /// World-frame velocity, m/s.
    pub v: Vec3,
    /// Body to world rotation.
    pub q: UnitQuaternion,
    /// Body angular rate, rad/s.
    pub omega: Vec3,
}

impl VehicleState {
    pub fn at_rest(p: Vec3) -> Self {
        Self {
            p,
            v: Vec3::zeros(),
            q: UnitQuaternion::identity(),
            omega: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.omega.iter())
            .all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vec3,
    pub v_dot: Vec3,
    pub q_dot: Quaternion<f64>,
    pub omega_dot: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorConfig {
    /// Rotor hub positions in frame B, m.
    pub positions: [[f64; 3]; 4],
    /// +1 or -1: sign of each rotor's drag torque about body z.
    pub spin_dirs: [f64; 4],
    /// Thrust at full normalized rotor speed, N.
    pub c_t: f64,
    /// Drag torque per unit thrust, m.
    pub k_tau: f64,
    pub k_m: f64,
    pub tau_m: f64,
}

impl Default for RotorConfig {
    fn default() -> Self {
        let a = 0.12 * std::f64::consts::FRAC_1_SQRT_2;
        Self {
            positions: [[a, -a, 0.0], [-a, a, 0.0], [a, a, 0.0], [-a, -a, 0.0]],
            spin_dirs: [1.0, 1.0, -1.0, -1.0],
            c_t: 18.1712,
            k_tau: 0.016,
            k_m: 1.0,
            tau_m: 0.02,
        }
    }
}

impl RotorConfig {
    pub fn position(&self, i: usize) -> Vec3 {
        Vec3::from(self.positions[i])
    }

    /// Per-rotor thrust ceiling: rotor speed is normalized to [0, 1].
    pub fn max_thrust(&self) -> f64 {
        self.c_t
    }

    /// Thrust for a normalized rotor speed.
    pub fn thrust_from_speed(&self, speed: f64) -> f64 {
        self.c_t * speed * speed
    }

    pub fn speed_from_thrust(&self, thrust: f64) -> f64 {
        (thrust.max(0.0) / self.c_t).sqrt()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.c_t > 0.0) || !(self.tau_m > 0.0) || !(self.k_m > 0.0) {
            return Err(DynamicsError::InvalidRotors(
                "c_t, k_m and tau_m must be positive".into(),
            ));
        }
        if self.spin_dirs.iter().any(|s| s.abs() != 1.0) {
            return Err(DynamicsError::InvalidRotors("spin directions must be +1 or -1".into()));
        }
        let a = self.allocation_matrix(&Vec3::zeros());
        let sv = a.singular_values();
        if sv.min() < 1e-9 * sv.max() {
            return Err(DynamicsError::InvalidRotors("allocation matrix is singular".into()));
        }
        Ok(())
    }

    /// Maps per-rotor thrusts to `[collective, tau_x, tau_y, tau_z]` about `com`.
    pub fn allocation_matrix(&self, com: &Vec3) -> nalgebra::Matrix4<f64> {
        let mut a = nalgebra::Matrix4::zeros();
        for i in 0..4 {
            let r = self.position(i) - com;
            a[(0, i)] = 1.0;
            a[(1, i)] = r.y;
            a[(2, i)] = -r.x;
            a[(3, i)] = self.spin_dirs[i] * self.k_tau;
        }
        a
    }
}

/// Body-frame force and torque about `com` (frame B) produced by the rotors.
pub fn rotor_wrench(thrusts: &[f64; 4], cfg: &RotorConfig, com: &Vec3) -> (Vec3, Vec3) {
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for (i, &t) in thrusts.iter().enumerate() {
        let f = t * Vec3::z();
        force += f;
        torque += (cfg.position(i) - com).cross(&f) + cfg.spin_dirs[i] * cfg.k_tau * f;
    }
    (force, torque)
}

/// Everything held constant across one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInputs {
    pub force_body: Vec3,
    pub torque_body: Vec3,
    /// External force in the world frame (wind, contact), N.
    pub force_world: Vec3,
    pub mass: f64,
    pub inertia: Mat3,
    pub gravity: f64,
}

pub fn derivatives(s: &VehicleState, inputs: &StepInputs) -> StateDerivative {
    let r = rotation_matrix(&s.q);
    let v_dot = -inputs.gravity * Vec3::z() + (r * inputs.force_body + inputs.force_world) / inputs.mass;
    let h = inputs.inertia * s.omega;
    let omega_dot = inputs
        .inertia
        .try_inverse()
        .map(|inv| inv * (inputs.torque_body - s.omega.cross(&h)))
        .unwrap_or_else(|| Vec3::repeat(f64::NAN));
    let w = Quaternion::new(0.0, s.omega.x, s.omega.y, s.omega.z);
    StateDerivative {
        p_dot: s.v,
        v_dot,
        q_dot: s.q.into_inner() * w * 0.5,
        omega_dot,
    }
}

fn advance(s: &VehicleState, d: &StateDerivative, h: f64) -> VehicleState {
    VehicleState {
        p: s.p + d.p_dot * h,
        v: s.v + d.v_dot * h,
        // intermediate stages stay unnormalized
        q: UnitQuaternion::new_unchecked(s.q.into_inner() + d.q_dot * h),
        omega: s.omega + d.omega_dot * h,
    }
}

/// Classical fourth-order Runge-Kutta step; the quaternion is renormalized
/// at the end of the step.
pub fn step_rk4(s: &VehicleState, inputs: &StepInputs, dt: f64) -> Result<VehicleState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::BadStep(dt));
    }
    let k1 = derivatives(s, inputs);
    let k2 = derivatives(&advance(s, &k1, 0.5 * dt), inputs);
    let k3 = derivatives(&advance(s, &k2, 0.5 * dt), inputs);
    let k4 = derivatives(&advance(s, &k3, dt), inputs);
    let w = dt / 6.0;
    let next = VehicleState {
        p: s.p + (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot) * w,
        v: s.v + (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot) * w,
        q: normalize_quaternion(s.q.into_inner() + (k1.q_dot + k2.q_dot * 2.0 + k3.q_dot * 2.0 + k4.q_dot) * w),
        omega: s.omega + (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot) * w,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite)
    }
}

/// Exact discretization of `T' = (K_m T_des - T) / tau_m` with `T_des` held over `dt`.
pub fn motor_lag_step(t_des: &[f64; 4], t_actual: &[f64; 4], cfg: &RotorConfig, dt: f64) -> [f64; 4] {
    let decay = (-dt / cfg.tau_m).exp();
    let mut out = [0.0; 4];
    for i in 0..4 {
        let target = cfg.k_m * t_des[i];
        out[i] = target + (t_actual[i] - target) * decay;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSegment {
    /// Start time of the segment, s.
    pub start: f64,
    /// World-frame force applied from `start` until the next segment, N.
    pub force: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    pub gravity: f64,
    pub wind: Vec<WindSegment>,
    pub accel_noise: f64,
    pub gyro_noise: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            wind: Vec::new(),
            accel_noise: 0.0,
            gyro_noise: 0.0,
        }
    }
}

impl Environment {
    pub fn wind_force(&self, t: f64) -> Vec3 {
        self.wind
            .iter()
            .filter(|w| w.start <= t)
            .max_by(|a, b| a.start.total_cmp(&b.start))
            .map(|w| Vec3::from(w.force))
            .unwrap_or_else(Vec3::zeros)
    }
}
