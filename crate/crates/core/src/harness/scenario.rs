//! Deterministic multirate scenario runner.

use super::config::{ConfigError, Mode, ObjectConfig, ScenarioConfig, Shape};
use super::log::{LogRow, RunLog, RunMeta};
use super::metrics::{declare_convergence, ConvergenceBounds};
use super::trajectory::{add_oscillation, sample};
use crate::adaptation::{dob_step, update_total, DobState, GraspDetector, PayloadEstimate, TotalInertia};
use crate::controller::{attitude_loop, iags_gain, mixer, position_loop, RateController, Setpoint};
use crate::delta::{inverse_kin, joint_command, DeltaError, JointState, ServoModel};
use crate::dynamics::{derivatives, motor_lag_step, rotor_wrench, step_rk4, DynamicsError, StepInputs, VehicleState};
use crate::presense::{estimate_inertia, fit_obb, synth, ObjectEstimate, PointCloud, PriorCatalog};
use crate::spatial::{rotation_matrix, Mat3, UnitQuaternion, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation diverged at t = {t:.4} s: {source}")]
    Diverged { t: f64, source: DynamicsError },
    #[error("arm kinematics failed at t = {t:.4} s: {source}")]
    Kinematics { t: f64, source: DeltaError },
}

/// Points sampled on the cylinder mesh or inside the box.
const BOX_CLOUD_POINTS: usize = 2000;
/// Stream offset so cloud noise and sensor noise never share draws.
const CLOUD_STREAM: u64 = 0x5eed_c10d;

/// Pre-sensing on a synthetic observation of the configured object.
pub fn presense_object(obj: &ObjectConfig, seed: u64) -> Result<ObjectEstimate, ConfigError> {
    let prior = match obj.explicit_prior() {
        Some(p) => p,
        None => {
            let label = obj.label.as_deref().unwrap_or_default();
            let catalog = match &obj.catalog {
                Some(path) => PriorCatalog::load(path)?,
                None => PriorCatalog::builtin(),
            };
            catalog.prior_for(label)?.clone()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CLOUD_STREAM);
    let mut pts = match obj.shape {
        Shape::Cylinder => {
            let r = 0.25 * (obj.dims[0] + obj.dims[1]);
            synth::cylinder_mesh(r, obj.dims[2], &Vec3::zeros(), 13, 72)
        }
        Shape::Box => synth::box_volume(&Vec3::from(obj.dims), &Vec3::zeros(), BOX_CLOUD_POINTS, &mut rng),
    };
    synth::add_noise(&mut pts, obj.cloud_noise, &mut rng);
    let obb = fit_obb(&PointCloud::new(pts)?)?;
    Ok(estimate_inertia(&obb, &prior, obj.pad_height)?)
}

struct Payload {
    cfg: ObjectConfig,
    presensed: ObjectEstimate,
    truth: PayloadEstimate,
}

fn euler(q: &UnitQuaternion) -> [f64; 3] {
    let (r, p, y) = q.euler_angles();
    [r, p, y]
}

fn diag3(m: &Mat3) -> [f64; 3] {
    [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
}

fn estimated_payload(mode: Mode, latched: bool, payload: Option<&Payload>, dob: &DobState) -> Option<PayloadEstimate> {
    let obj = payload.filter(|_| latched)?;
    match mode {
        Mode::Baseline => None,
        Mode::Iags => Some(PayloadEstimate::from_presensed(
            &obj.presensed,
            obj.presensed.mass_tilde,
        )),
        Mode::IagsDob => Some(PayloadEstimate::from_presensed(&obj.presensed, dob.m_hat)),
        Mode::DobOnly => Some(PayloadEstimate {
            mass: dob.m_hat,
            inertia: Mat3::zeros(),
            grasp_offset: Vec3::zeros(),
        }),
    }
}

fn start_estimation(mode: Mode, payload: Option<&Payload>, dob: &mut DobState) {
    match (mode, payload) {
        (Mode::IagsDob, Some(p)) => dob.start(p.presensed.mass_tilde),
        (Mode::DobOnly, Some(_)) => dob.start(0.0),
        _ => {}
    }
}

/// Runs one scenario to completion.
///
/// Physics advances at the sim rate; the controller, observer and servo
/// tasks fire on fixed tick dividers. The rigid-body state is that of the
/// whole-system CoM, so arm motion shifts frame M without moving the CoM.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog, RunError> {
    cfg.validate()?;
    let vehicle = cfg.vehicle.inertial()?;
    let rotors = cfg.vehicle.rotors;
    let gains = cfg.vehicle.gains;
    let geom = cfg.arm.geometry;
    let g = cfg.environment.gravity;
    let servo = ServoModel {
        rate_limit: cfg.arm.rate_limit,
    };
    let k_theta = Mat3::identity() * cfg.arm.k_theta;
    let dt = cfg.rates.sim_dt();
    let ctrl_div = cfg.rates.divider(cfg.rates.control_hz);
    let dob_div = cfg.rates.divider(cfg.rates.dob_hz);
    let servo_div = cfg.rates.divider(cfg.rates.servo_hz);
    let dt_ctrl = ctrl_div as f64 * dt;
    let dt_dob = dob_div as f64 * dt;
    let steps = (cfg.duration * cfg.rates.sim_hz as f64).round() as u64;
    let max_collective = 4.0 * rotors.max_thrust();

    let payload = match &cfg.object {
        Some(o) => Some(Payload {
            presensed: presense_object(o, cfg.seed)?,
            truth: PayloadEstimate {
                mass: o.mass,
                inertia: o.true_inertia(),
                grasp_offset: o.true_grasp_offset(),
            },
            cfg: o.clone(),
        }),
        None => None,
    };
    let attach_at = payload.as_ref().map(|p| p.cfg.attach_time);
    let mut attached = attach_at == Some(0.0);
    let mut latched = attached;

    let arm_target = |t: f64| add_oscillation(sample(&cfg.arm.waypoints, t), cfg.arm.oscillation.as_ref(), t);
    let kin = |t: f64| move |source| RunError::Kinematics { t, source };
    let mut joint = JointState {
        theta: inverse_kin(&geom, &arm_target(0.0).p).map_err(kin(0.0))?,
        theta_dot: [0.0; 3],
    };
    let truth_at = |theta: &[f64; 3], attached: bool, t: f64| -> Result<TotalInertia, RunError> {
        let obj = payload.as_ref().filter(|_| attached).map(|p| &p.truth);
        update_total(&vehicle, obj, theta, &geom).map_err(kin(t))
    };

    let mut truth = truth_at(&joint.theta, attached, 0.0)?;
    let p0 = Vec3::from(cfg.trajectory.waypoints[0].p);
    let mut state = VehicleState::at_rest(p0 + truth.c_t);
    let mut c_prev = truth.c_t;
    let mut thrusts = [truth.m_t_hat * g / 4.0; 4];
    let mut accel_cm = Vec3::zeros();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accel_noise = Normal::new(0.0, cfg.environment.accel_noise).expect("noise std is finite");
    let gyro_noise = Normal::new(0.0, cfg.environment.gyro_noise).expect("noise std is finite");
    let noise3 = |n: &Normal<f64>, rng: &mut ChaCha8Rng| {
        if n.std_dev() > 0.0 {
            Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
        } else {
            Vec3::zeros()
        }
    };

    let mut rate_ctl = RateController::new(gains);
    let mut dob = DobState::default();
    let mut detector = GraspDetector::new(cfg.grasp.threshold, cfg.grasp.persistence);
    let mut servo_rate = [0.0; 3];
    let mut thrust_cmd = thrusts;
    let mut f_ext = Vec3::zeros();

    let mut log = RunLog {
        meta: RunMeta {
            name: cfg.name.clone(),
            mode: Some(cfg.mode),
            seed: cfg.seed,
        },
        rows: Vec::with_capacity((steps / ctrl_div + 1) as usize),
        events: Vec::new(),
    };
    if latched {
        start_estimation(cfg.mode, payload.as_ref(), &mut dob);
        log.push_event(0.0, "attach", "carried from start");
        log.push_event(0.0, "grasp_latch", "");
    }

    for k in 0..steps {
        let t = k as f64 * dt;
        if !attached && attach_at.is_some_and(|ta| t >= ta) {
            // the object joins at rest; frame M does not jump, momentum is shared
            let r = rotation_matrix(&state.q);
            let p_m = state.p - r * truth.c_t;
            let m_old = truth.m_t_hat;
            attached = true;
            truth = truth_at(&joint.theta, true, t)?;
            state.p = p_m + r * truth.c_t;
            state.v *= m_old / truth.m_t_hat;
            c_prev = truth.c_t;
            log.push_event(t, "attach", "");
        } else {
            truth = truth_at(&joint.theta, attached, t)?;
        }
        let r = rotation_matrix(&state.q);
        let c_dot = (truth.c_t - c_prev) / dt;
        let p_m = state.p - r * truth.c_t;
        let v_m = state.v - r * (state.omega.cross(&truth.c_t) + c_dot);

        if k % dob_div == 0 {
            let a_meas = accel_cm + noise3(&accel_noise, &mut rng);
            let thrust_body = Vec3::new(0.0, 0.0, thrusts.iter().sum());
            dob = dob_step(&dob, &a_meas, &r, &thrust_body, vehicle.mass, g, &cfg.dob, t, dt_dob);
            f_ext = dob.external_force(vehicle.mass, g);
            if !latched && detector.detect_grasp(f_ext.z, dt_dob) {
                latched = true;
                start_estimation(cfg.mode, payload.as_ref(), &mut dob);
                log.push_event(t, "grasp_latch", format!("f_ext_z = {:.3} N", f_ext.z));
            }
        }

        if k % servo_div == 0 {
            let target = arm_target(t);
            let (_, rate) = joint_command(&geom, &target.p, &target.v, &joint, &k_theta).map_err(kin(t))?;
            servo_rate = rate;
        }

        if k % ctrl_div == 0 {
            let est_payload = estimated_payload(cfg.mode, latched, payload.as_ref(), &dob);
            let est = update_total(&vehicle, est_payload.as_ref(), &joint.theta, &geom).map_err(kin(t))?;
            let m_model = if cfg.mode == Mode::Baseline {
                vehicle.mass
            } else {
                est.m_t_hat
            };
            let traj = sample(&cfg.trajectory.waypoints, t);
            let sp = Setpoint {
                p: traj.p,
                v: traj.v,
                a: traj.a,
                yaw: cfg.trajectory.yaw,
            };
            let pos = position_loop(&sp, &p_m, &v_m, &state.q, m_model, &gains, g, max_collective);
            let omega_des = attitude_loop(&pos.q_des, &state.q, &gains.k_att);
            let k_k = if cfg.mode == Mode::Baseline {
                Vec3::repeat(1.0)
            } else {
                iags_gain(&vehicle.inertia_about_com, &est.j_t_hat)
            };
            let gyro = state.omega + noise3(&gyro_noise, &mut rng);
            let torque = rate_ctl.rate_loop(&omega_des, &gyro, &k_k, dt_ctrl);
            let (cmd, _) = mixer(pos.thrust_des, &torque, &rotors);
            thrust_cmd = cmd;

            log.rows.push(LogRow {
                t,
                p: p_m.into(),
                v: v_m.into(),
                att: euler(&state.q),
                omega: state.omega.into(),
                p_des: sp.p.into(),
                att_des: euler(&pos.q_des),
                omega_des: omega_des.into(),
                theta: joint.theta,
                m_hat_o: est_payload.map_or(0.0, |p| p.mass),
                m_true_o: payload.as_ref().filter(|_| attached).map_or(0.0, |p| p.truth.mass),
                m_hat_t: m_model,
                m_true_t: truth.m_t_hat,
                c_hat: est.c_t.into(),
                c_true: truth.c_t.into(),
                j_hat: diag3(&est.j_t_hat),
                j_true: diag3(&truth.j_t_hat),
                k_k: k_k.into(),
                torque: torque.into(),
                thrust: thrusts,
                f_ext: f_ext.into(),
                attached,
                latched,
            });
        }

        thrusts = motor_lag_step(&thrust_cmd, &thrusts, &rotors, dt);
        let (force_body, torque_body) = rotor_wrench(&thrusts, &rotors, &(truth.c_t - vehicle.com));
        let inputs = StepInputs {
            force_body,
            torque_body,
            force_world: cfg.environment.wind_force(t),
            mass: truth.m_t_hat,
            inertia: truth.j_t_hat,
            gravity: g,
        };
        accel_cm = derivatives(&state, &inputs).v_dot;
        state = step_rk4(&state, &inputs, dt).map_err(|source| RunError::Diverged { t, source })?;
        if state.p.norm() > 1e4 || state.omega.norm() > 1e3 {
            return Err(RunError::Diverged {
                t,
                source: DynamicsError::NonFinite,
            });
        }
        joint = servo.step(&geom, &joint, &servo_rate, dt);
        c_prev = truth.c_t;
    }

    let conv = declare_convergence(&log, &ConvergenceBounds::default());
    for (name, time) in [("mass", conv.mass), ("com", conv.com), ("moi", conv.moi)] {
        if let Some(tc) = time {
            log.push_event(tc, "converged", name);
        }
    }
    Ok(log)
}

/// Runs the same scenario under several modes in parallel; results keep
/// the order of `modes`.
pub fn run_modes(cfg: &ScenarioConfig, modes: &[Mode]) -> Vec<(Mode, Result<RunLog, RunError>)> {
    modes
        .par_iter()
        .map(|&mode| {
            let mut c = cfg.clone();
            c.mode = mode;
            (mode, run_scenario(&c))
        })
        .collect()
}
