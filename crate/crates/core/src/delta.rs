//! Kinematics of the 3-RSS delta arm hanging below the vehicle.
//!
//! Frame M sits at the centre of the three servo axes with z pointing up, so
//! reachable end-effector positions have negative z. Joint angles are measured
//! from the horizontal, positive when the upper arm swings downwards.

use crate::spatial::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SINGULAR_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeltaError {
    #[error("invalid delta geometry: {0}")]
    InvalidGeometry(String),
    #[error("forearm spheres do not intersect for joint angles {0:?}")]
    NoIntersection([f64; 3]),
    #[error("target {target:?} is out of reach of arm {arm}")]
    Unreachable { arm: usize, target: [f64; 3] },
    #[error("arm {arm} needs {angle} rad, outside its joint limits")]
    OutOfLimits { arm: usize, angle: f64 },
    #[error("jacobian is singular (condition number {0:e})")]
    Singular(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaGeometry {
    pub base_radius: f64,
    pub platform_radius: f64,
    pub upper_arm_len: f64,
    pub forearm_len: f64,
    /// Azimuth of each arm's servo axis around frame M's z axis, rad.
    pub arm_azimuths: [f64; 3],
    /// `[min, max]` per joint, rad.
    pub joint_limits: [[f64; 2]; 3],
}

impl Default for DeltaGeometry {
    fn default() -> Self {
        let lim = [(-30f64).to_radians(), 120f64.to_radians()];
        Self {
            base_radius: 0.06,
            platform_radius: 0.03,
            upper_arm_len: 0.08,
            forearm_len: 0.16,
            arm_azimuths: [0.0, 120f64.to_radians(), 240f64.to_radians()],
            joint_limits: [lim; 3],
        }
    }
}

impl DeltaGeometry {
    pub fn validate(&self) -> Result<(), DeltaError> {
        let lengths = [
            self.base_radius,
            self.platform_radius,
            self.upper_arm_len,
            self.forearm_len,
        ];
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(DeltaError::InvalidGeometry("all lengths must be positive".into()));
        }
        if self.forearm_len <= (self.base_radius - self.platform_radius).abs() {
            return Err(DeltaError::InvalidGeometry(
                "forearm must be longer than the base/platform radius difference".into(),
            ));
        }
        for lim in &self.joint_limits {
            if !(lim[0] < lim[1]) {
                return Err(DeltaError::InvalidGeometry("joint limit min must be below max".into()));
            }
        }
        Ok(())
    }

    fn radial(&self, arm: usize) -> Vec3 {
        let a = self.arm_azimuths[arm];
        Vec3::new(a.cos(), a.sin(), 0.0)
    }

    /// Elbow (upper arm tip) position of `arm` at joint angle `theta`.
    pub fn elbow(&self, arm: usize, theta: f64) -> Vec3 {
        let u = self.radial(arm);
        (self.base_radius + self.upper_arm_len * theta.cos()) * u - self.upper_arm_len * theta.sin() * Vec3::z()
    }

    fn elbow_rate(&self, arm: usize, theta: f64) -> Vec3 {
        let u = self.radial(arm);
        -self.upper_arm_len * theta.sin() * u - self.upper_arm_len * theta.cos() * Vec3::z()
    }

    pub fn within_limits(&self, theta: &[f64; 3]) -> bool {
        theta
            .iter()
            .zip(&self.joint_limits)
            .all(|(t, l)| *t >= l[0] && *t <= l[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub theta: [f64; 3],
    pub theta_dot: [f64; 3],
}

/// End-effector position `^M p_E` for the given joint angles.
///
/// Each forearm constrains the platform centre to a sphere around the elbow
/// shifted inwards by the platform radius; the three spheres are intersected
/// and the lower of the two solutions is returned.
pub fn forward_kin(geom: &DeltaGeometry, theta: &[f64; 3]) -> Result<Vec3, DeltaError> {
    let centres: Vec<Vec3> = (0..3)
        .map(|i| geom.elbow(i, theta[i]) - geom.platform_radius * geom.radial(i))
        .collect();
    let r = geom.forearm_len;
    let (p1, p2, p3) = (centres[0], centres[1], centres[2]);

    let d_vec = p2 - p1;
    let d = d_vec.norm();
    if d < 1e-12 {
        return Err(DeltaError::NoIntersection(*theta));
    }
    let ex = d_vec / d;
    let i = ex.dot(&(p3 - p1));
    let ey_raw = p3 - p1 - i * ex;
    let j = ey_raw.norm();
    if j < 1e-12 {
        return Err(DeltaError::NoIntersection(*theta));
    }
    let ey = ey_raw / j;
    let ez = ex.cross(&ey);

    // equal radii simplify the usual trilateration formulas
    let x = 0.5 * d;
    let y = (i * i + j * j) / (2.0 * j) - i * x / j;
    let z2 = r * r - x * x - y * y;
    // tangent spheres (fully stretched arms) land here with z2 at round-off level
    if z2 < -1e-12 * r * r {
        return Err(DeltaError::NoIntersection(*theta));
    }
    let z = z2.max(0.0).sqrt();
    let a = p1 + x * ex + y * ey + z * ez;
    let b = p1 + x * ex + y * ey - z * ez;
    Ok(if a.z < b.z { a } else { b })
}

/// Round-off allowance when an inverse solution lands on a joint limit, rad.
const LIMIT_EPS: f64 = 1e-9;

/// Joint angles placing the platform centre at `p`, elbow-out branch.
pub fn inverse_kin(geom: &DeltaGeometry, p: &Vec3) -> Result<[f64; 3], DeltaError> {
    let mut theta = [0.0; 3];
    for (arm, out) in theta.iter_mut().enumerate() {
        let angle = solve_arm(geom, arm, p)?;
        let lim = geom.joint_limits[arm];
        if angle < lim[0] - LIMIT_EPS || angle > lim[1] + LIMIT_EPS {
            return Err(DeltaError::OutOfLimits { arm, angle });
        }
        *out = angle.clamp(lim[0], lim[1]);
    }
    Ok(theta)
}

/// Solves `A cos(theta) + B sin(theta) = C` for one arm.
fn solve_arm(geom: &DeltaGeometry, arm: usize, p: &Vec3) -> Result<f64, DeltaError> {
    let u = geom.radial(arm);
    // platform attachment point relative to the servo axis
    let rel = p + (geom.platform_radius - geom.base_radius) * u;
    let l = geom.upper_arm_len;
    let a = 2.0 * l * rel.dot(&u);
    let b = -2.0 * l * rel.z;
    let c = l * l + rel.norm_squared() - geom.forearm_len * geom.forearm_len;
    let amp = a.hypot(b);
    if amp < 1e-15 || c.abs() > amp {
        return Err(DeltaError::Unreachable {
            arm,
            target: [p.x, p.y, p.z],
        });
    }
    // of the two roots atan2(b, a) -/+ acos(c / amp), the minus branch keeps
    // the elbow further from the central axis
    let angle = b.atan2(a) - (c / amp).acos();
    Ok(wrap_pi(angle))
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + 2.0 * std::f64::consts::PI
    } else {
        w
    }
}

/// True when `p` has an in-limits inverse kinematic solution.
pub fn reachable(geom: &DeltaGeometry, p: &Vec3) -> bool {
    inverse_kin(geom, p).is_ok()
}

/// Velocity Jacobian `v_E = J * theta_dot` from the closed-chain constraints.
///
/// Differentiating `|p + r u_i - e_i(theta_i)|^2 = l^2` gives
/// `s_i . v_E = s_i . (de_i/dtheta_i) theta_dot_i` with `s_i` the forearm vector.
pub fn jacobian(geom: &DeltaGeometry, theta: &[f64; 3]) -> Result<Mat3, DeltaError> {
    let p = forward_kin(geom, theta)?;
    let mut a = Mat3::zeros();
    let mut b = Mat3::zeros();
    for i in 0..3 {
        let s = p + geom.platform_radius * geom.radial(i) - geom.elbow(i, theta[i]);
        let rate = geom.elbow_rate(i, theta[i]);
        let b_ii = s.dot(&rate);
        // forearm perpendicular to the elbow velocity: that joint no longer moves the platform
        let alignment = b_ii.abs() / (s.norm() * rate.norm());
        if !(alignment * SINGULAR_CONDITION > 1.0) {
            return Err(DeltaError::Singular(1.0 / alignment));
        }
        a.set_row(i, &s.transpose());
        b[(i, i)] = b_ii;
    }
    let a_inv = a.try_inverse().ok_or(DeltaError::Singular(f64::INFINITY))?;
    let j = a_inv * b;
    let cond = condition_number(&j);
    if !(cond <= SINGULAR_CONDITION) {
        return Err(DeltaError::Singular(cond));
    }
    Ok(j)
}

fn condition_number(m: &Mat3) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Joint-space tracking law: IK position target plus Jacobian feedforward
/// and proportional correction.
pub fn joint_command(
    geom: &DeltaGeometry,
    target_p: &Vec3,
    target_v: &Vec3,
    current: &JointState,
    k_theta: &Mat3,
) -> Result<([f64; 3], [f64; 3]), DeltaError> {
    let theta_des = inverse_kin(geom, target_p)?;
    let jac = jacobian(geom, &theta_des)?;
    let jac_inv = jac.try_inverse().ok_or(DeltaError::Singular(f64::INFINITY))?;
    let err = Vec3::from(theta_des) - Vec3::from(current.theta);
    let rate = jac_inv * target_v + k_theta * err;
    Ok((theta_des, [rate.x, rate.y, rate.z]))
}

/// Servo model: joints follow the commanded rate, saturated at `rate_limit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoModel {
    pub rate_limit: f64,
}

impl Default for ServoModel {
    fn default() -> Self {
        Self { rate_limit: 6.0 }
    }
}

impl ServoModel {
    pub fn step(&self, geom: &DeltaGeometry, state: &JointState, rate_cmd: &[f64; 3], dt: f64) -> JointState {
        let mut next = *state;
        for i in 0..3 {
            let rate = rate_cmd[i].clamp(-self.rate_limit, self.rate_limit);
            let lim = geom.joint_limits[i];
            next.theta[i] = (state.theta[i] + rate * dt).clamp(lim[0], lim[1]);
            next.theta_dot[i] = (next.theta[i] - state.theta[i]) / dt;
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom() -> DeltaGeometry {
        DeltaGeometry::default()
    }

    #[test]
    fn symmetric_angles_land_on_axis() {
        for t in [0.0, 0.3, 0.8, 1.2] {
            let p = forward_kin(&geom(), &[t; 3]).unwrap();
            assert!(p.x.abs() < 1e-10 && p.y.abs() < 1e-10, "{p:?}");
            assert!(p.z < 0.0);
        }
    }

    #[test]
    fn central_point_gives_equal_angles() {
        let th = inverse_kin(&geom(), &Vec3::new(0.0, 0.0, -0.15)).unwrap();
        assert!((th[0] - th[1]).abs() < 1e-12 && (th[1] - th[2]).abs() < 1e-12);
        // hand-solved for this geometry: elbow-out root near 21.2 deg
        assert!((th[0].to_degrees() - 21.19).abs() < 0.05, "{}", th[0].to_degrees());
    }

    #[test]
    fn short_forearm_has_no_intersection() {
        let mut g = geom();
        g.forearm_len = 0.04;
        assert!(g.validate().is_ok());
        assert!(matches!(forward_kin(&g, &[0.0; 3]), Err(DeltaError::NoIntersection(_))));
    }

    #[test]
    fn far_target_is_unreachable() {
        let err = inverse_kin(&geom(), &Vec3::new(0.0, 0.0, -0.5)).unwrap_err();
        assert!(matches!(err, DeltaError::Unreachable { .. }));
    }

    #[test]
    fn limits_are_enforced() {
        let mut g = geom();
        g.joint_limits = [[-0.1, 0.1]; 3];
        let err = inverse_kin(&g, &Vec3::new(0.0, 0.0, -0.2)).unwrap_err();
        assert!(matches!(err, DeltaError::OutOfLimits { .. }));
    }

    #[test]
    fn pose_on_joint_limit_round_trips() {
        let g = DeltaGeometry::default();
        let lo = g.joint_limits[0][0];
        let p = forward_kin(&g, &[lo; 3]).unwrap();
        let theta = inverse_kin(&g, &p).unwrap();
        assert!(g.within_limits(&theta));
        assert!((forward_kin(&g, &theta).unwrap() - p).norm() < 1e-9);
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut g = geom();
        g.forearm_len = 0.02;
        assert!(g.validate().is_err());
        g.forearm_len = -1.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn equal_rates_move_vertically() {
        let j = jacobian(&geom(), &[0.5; 3]).unwrap();
        let v = j * Vec3::new(1.0, 1.0, 1.0);
        assert!(v.x.abs() < 1e-12 && v.y.abs() < 1e-12);
        assert!(v.z.abs() > 1e-3);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let g = geom();
        let theta = [0.35, 0.7, 0.52];
        let j = jacobian(&g, &theta).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut tp = theta;
            let mut tm = theta;
            tp[k] += h;
            tm[k] -= h;
            let col = (forward_kin(&g, &tp).unwrap() - forward_kin(&g, &tm).unwrap()) / (2.0 * h);
            let rel = (col - j.column(k)).norm() / col.norm();
            assert!(rel < 1e-5, "column {k}: {rel}");
        }
    }

    #[test]
    fn fully_stretched_arm_is_singular() {
        let g = geom();
        // symmetric pose where every forearm continues its upper arm in a straight line
        let t = ((g.platform_radius - g.base_radius) / (g.upper_arm_len + g.forearm_len)).acos();
        assert!(g.within_limits(&[t; 3]));
        let r = jacobian(&g, &[t; 3]);
        assert!(matches!(r, Err(DeltaError::Singular(_))), "{r:?}");
    }

    #[test]
    fn joint_command_cases() {
        let g = geom();
        let target = Vec3::new(0.02, -0.01, -0.17);
        let theta = inverse_kin(&g, &target).unwrap();
        let at_rest = JointState {
            theta,
            theta_dot: [0.0; 3],
        };
        let k = Mat3::from_diagonal(&Vec3::new(20.0, 20.0, 20.0));
        let (_, rate) = joint_command(&g, &target, &Vec3::zeros(), &at_rest, &k).unwrap();
        assert!(rate.iter().all(|r| r.abs() < 1e-12));

        let mut off = at_rest;
        off.theta[1] -= 0.01;
        let (_, rate) = joint_command(&g, &target, &Vec3::zeros(), &off, &k).unwrap();
        assert!((rate[1] - 0.2).abs() < 1e-9);
        assert!(rate[0].abs() < 1e-12 && rate[2].abs() < 1e-12);

        let centre = Vec3::new(0.0, 0.0, -0.16);
        let th = inverse_kin(&g, &centre).unwrap();
        let st = JointState {
            theta: th,
            theta_dot: [0.0; 3],
        };
        let (_, rate) = joint_command(&g, &centre, &Vec3::new(0.0, 0.0, -0.1), &st, &k).unwrap();
        assert!((rate[0] - rate[1]).abs() < 1e-9 && (rate[1] - rate[2]).abs() < 1e-9);
    }

    #[test]
    fn servo_respects_rate_limit() {
        let g = geom();
        let s = ServoModel::default();
        let st = JointState {
            theta: [0.3; 3],
            theta_dot: [0.0; 3],
        };
        let next = s.step(&g, &st, &[100.0, -100.0, 1.0], 0.01);
        assert!((next.theta[0] - 0.36).abs() < 1e-12);
        assert!((next.theta[1] - 0.24).abs() < 1e-12);
        assert!((next.theta[2] - 0.31).abs() < 1e-12);
    }

    #[test]
    fn longer_forearm_keeps_lower_workspace() {
        // near the base the unreachable core grows with the forearm, so the
        // comparison is made on points at least one forearm length below frame M
        for l in [0.12, 0.14, 0.16, 0.18, 0.2] {
            let mut short = geom();
            short.forearm_len = l;
            let mut long = short;
            long.forearm_len += 0.02;
            let n = 21;
            let mut checked = 0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let f = |a: usize| a as f64 / (n - 1) as f64;
                        let p = Vec3::new(-0.15 + 0.3 * f(i), -0.15 + 0.3 * f(j), -0.4 + 0.4 * f(k));
                        if p.z > -l || !reachable(&short, &p) {
                            continue;
                        }
                        checked += 1;
                        assert!(reachable(&long, &p), "l={l} lost {p:?}");
                    }
                }
            }
            assert!(checked > 100);
        }
    }

    proptest! {
        #[test]
        fn ik_then_fk_roundtrip(x in -0.06..0.06f64, y in -0.06..0.06f64, z in -0.22..-0.10f64) {
            let g = geom();
            let p = Vec3::new(x, y, z);
            if let Ok(th) = inverse_kin(&g, &p) {
                let back = forward_kin(&g, &th).unwrap();
                prop_assert!((back - p).norm() < 1e-9);
            }
        }

        #[test]
        fn fk_then_ik_roundtrip(a in 0.0..1.2f64, b in 0.0..1.2f64, c in 0.0..1.2f64) {
            let g = geom();
            let th = [a, b, c];
            if let Ok(p) = forward_kin(&g, &th) {
                if let Ok(back) = inverse_kin(&g, &p) {
                    for k in 0..3 {
                        prop_assert!((back[k] - th[k]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
