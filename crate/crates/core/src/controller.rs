//! Cascade flight controller: flatness-based position loop, geometric
//! attitude loop, rate PID with inertia-aware gain scheduling, and mixer.

use crate::dynamics::RotorConfig;
use crate::spatial::{quaternion_from_matrix, rotation_matrix, vee, Mat3, UnitQuaternion, Vec3};
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

/// Below this fraction of g the commanded thrust direction is undefined.
const FREE_FALL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Gains {
    pub k_pos: [f64; 3],
    pub k_vel: [f64; 3],
    pub k_att: [f64; 3],
    /// Rate PID gains in N·m per rad/s (and per rad, per rad/s^2).
    pub k_p_rate: [f64; 3],
    pub k_i_rate: [f64; 3],
    pub k_d_rate: [f64; 3],
    /// D-term low-pass cutoff, rad/s.
    pub d_lpf_cutoff: f64,
    /// Bound on the integrator contribution, N·m.
    pub i_limit: f64,
    /// Largest commanded tilt, rad.
    pub max_tilt: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_pos: [4.0, 4.0, 3.0],
            k_vel: [3.5, 3.4, 3.0],
            k_att: [6.0, 6.0, 3.0],
            k_p_rate: [0.15, 0.15, 0.2],
            k_i_rate: [0.2, 0.2, 0.1],
            k_d_rate: [0.003, 0.003, 0.0],
            d_lpf_cutoff: 2.0 * std::f64::consts::PI * 40.0,
            i_limit: 0.3,
            max_tilt: 0.6,
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.k_pos,
            self.k_vel,
            self.k_att,
            self.k_p_rate,
            self.k_i_rate,
            self.k_d_rate,
        ];
        if all.iter().flatten().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err("gains must be finite and non-negative".into());
        }
        if !(self.d_lpf_cutoff > 0.0) || !(self.i_limit >= 0.0) {
            return Err("d_lpf_cutoff must be positive and i_limit non-negative".into());
        }
        if !(self.max_tilt > 0.0 && self.max_tilt < std::f64::consts::FRAC_PI_2) {
            return Err("max_tilt must lie in (0, pi/2)".into());
        }
        Ok(())
    }
}

fn diag(v: &[f64; 3]) -> Mat3 {
    Mat3::from_diagonal(&Vec3::from(*v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub thrust_des: f64,
    pub torque_des: Vec3,
    pub q_des: UnitQuaternion,
    pub omega_des: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionCommand {
    pub thrust_des: f64,
    pub q_des: UnitQuaternion,
    pub a_cmd: Vec3,
    /// Raised when `|a_cmd| < 0.1 g`: attitude falls back to level at the commanded yaw.
    pub free_fall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Setpoint {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    pub yaw: f64,
}

impl Setpoint {
    pub fn hold(p: Vec3) -> Self {
        Self {
            p,
            ..Default::default()
        }
    }
}

/// Attitude whose body z axis is `b3` and whose heading follows `yaw`.
fn attitude_from_thrust_dir(b3: &Vec3, yaw: f64) -> Mat3 {
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut b2 = b3.cross(&heading);
    if b2.norm() < 1e-9 {
        b2 = b3.cross(&Vec3::x());
    }
    let b2 = b2.normalize();
    let b1 = b2.cross(b3);
    Mat3::from_columns(&[b1, b2, *b3])
}

/// Position loop. `max_thrust` is the collective ceiling.
#[allow(clippy::too_many_arguments)]
pub fn position_loop(
    sp: &Setpoint,
    p: &Vec3,
    v: &Vec3,
    q: &UnitQuaternion,
    m_t_hat: f64,
    gains: &Gains,
    gravity: f64,
    max_thrust: f64,
) -> PositionCommand {
    let mut a_cmd = diag(&gains.k_pos) * (sp.p - p) + diag(&gains.k_vel) * (sp.v - v) + sp.a;
    a_cmd.z += gravity;
    // tilt limit on the horizontal demand, vertical preserved
    let horiz = a_cmd.xy().norm();
    let horiz_max = a_cmd.z.max(0.0) * gains.max_tilt.tan();
    if horiz > horiz_max && horiz > 0.0 {
        let s = horiz_max / horiz;
        a_cmd.x *= s;
        a_cmd.y *= s;
    }
    let r = rotation_matrix(q);
    let free_fall = a_cmd.norm() < FREE_FALL_FRACTION * gravity;
    let r_des = if free_fall {
        attitude_from_thrust_dir(&Vec3::z(), sp.yaw)
    } else {
        attitude_from_thrust_dir(&a_cmd.normalize(), sp.yaw)
    };
    let thrust = (m_t_hat * a_cmd.dot(&(r * Vec3::z()))).clamp(0.0, max_thrust);
    PositionCommand {
        thrust_des: thrust,
        q_des: quaternion_from_matrix(&r_des),
        a_cmd,
        free_fall,
    }
}

/// Geometric attitude loop on SO(3).
pub fn attitude_loop(q_des: &UnitQuaternion, q: &UnitQuaternion, k_att: &[f64; 3]) -> Vec3 {
    let r_d = rotation_matrix(q_des);
    let r = rotation_matrix(q);
    let e_r = 0.5 * vee(&(r_d.transpose() * r - r.transpose() * r_d));
    -diag(k_att) * e_r
}

/// Scheduled rate gain `J_a^-1 J_t`, reduced to its diagonal.
pub fn iags_gain(j_a: &Mat3, j_t_hat: &Mat3) -> Vec3 {
    let full = j_a.try_inverse().expect("vehicle inertia must be invertible") * j_t_hat;
    full.diagonal()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateController {
    pub gains: Gains,
    /// Integrator contribution `K_i ∫e`, N·m.
    pub integral: Vec3,
    pub d_filt: Vec3,
    prev_error: Option<Vec3>,
}

impl RateController {
    pub fn new(gains: Gains) -> Self {
        Self {
            gains,
            integral: Vec3::zeros(),
            d_filt: Vec3::zeros(),
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.gains);
    }

    /// One rate-loop tick. `k_k` is the diagonal of the scheduled gain.
    pub fn rate_loop(&mut self, omega_des: &Vec3, omega: &Vec3, k_k: &Vec3, dt: f64) -> Vec3 {
        let g = &self.gains;
        let e = omega_des - omega;
        let mut integral = self.integral + Vec3::from(g.k_i_rate).component_mul(&e) * dt;
        let n = integral.norm();
        if n > g.i_limit {
            integral *= g.i_limit / n;
        }
        self.integral = integral;
        if let Some(prev) = self.prev_error {
            let alpha = 1.0 - (-g.d_lpf_cutoff * dt).exp();
            let raw = (e - prev) / dt;
            self.d_filt += alpha * (raw - self.d_filt);
        }
        self.prev_error = Some(e);
        let u = Vec3::from(g.k_p_rate).component_mul(&e)
            + self.integral
            + Vec3::from(g.k_d_rate).component_mul(&self.d_filt);
        u.component_mul(k_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerStatus {
    Ok,
    /// Collective was moved to keep the torque demand.
    Saturated,
    /// The torque demand itself did not fit; it was scaled down.
    Infeasible,
}

/// Per-rotor thrusts for a collective and body torque, allocated about the
/// rotor-plane center.
pub fn mixer(thrust_des: f64, torque_des: &Vec3, cfg: &RotorConfig) -> ([f64; 4], MixerStatus) {
    let a_inv: Matrix4<f64> = cfg
        .allocation_matrix(&Vec3::zeros())
        .try_inverse()
        .expect("allocation matrix must be invertible");
    let t_max = cfg.max_thrust();
    let direct = a_inv * Vector4::new(thrust_des, torque_des.x, torque_des.y, torque_des.z);
    if direct.iter().all(|t| (0.0..=t_max).contains(t)) {
        return (direct.into(), MixerStatus::Ok);
    }
    let torque_part = a_inv * Vector4::new(0.0, torque_des.x, torque_des.y, torque_des.z);
    let unit = a_inv * Vector4::new(1.0, 0.0, 0.0, 0.0);
    // collective range that keeps every rotor inside [0, t_max]
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..4 {
        lo = lo.max(-torque_part[i] / unit[i]);
        hi = hi.min((t_max - torque_part[i]) / unit[i]);
    }
    if lo <= hi {
        let c = thrust_des.clamp(lo, hi);
        let out = torque_part + unit * c;
        return (out.map(|t| t.clamp(0.0, t_max)).into(), MixerStatus::Saturated);
    }
    let spread = torque_part.max() - torque_part.min();
    let s = t_max / spread;
    let scaled = torque_part * s;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..4 {
        lo = lo.max(-scaled[i] / unit[i]);
        hi = hi.min((t_max - scaled[i]) / unit[i]);
    }
    let c = thrust_des.clamp(lo.min(hi), hi.max(lo));
    let out = scaled + unit * c;
    (out.map(|t| t.clamp(0.0, t_max)).into(), MixerStatus::Infeasible)
}
