//! Acceptance suite: one pass/fail line per criterion, exit status 1 if any fails.

use aminertia::adaptation::{dob_step, DobConfig, DobState};
use aminertia::controller::Gains;
use aminertia::delta::{forward_kin, inverse_kin, jacobian, DeltaGeometry};
use aminertia::dynamics::{derivatives, motor_lag_step, rotor_wrench, step_rk4, RotorConfig, StepInputs, VehicleState};
use aminertia::freqdom::{
    margins, open_loop_tf, robustness_sweep, workspace_kk_sweep, AxisGains, Band, BoxPayload, RatePlant, RationalTF,
    UncertaintyBox,
};
use aminertia::harness::config::VehicleConfig;
use aminertia::harness::metrics::{declare_convergence, ConvergenceBounds};
use aminertia::harness::{compute_metrics, run_modes, run_scenario, Mode, RunLog, ScenarioConfig};
use aminertia::spatial::{compose_inertia, rotation_matrix, InertialParams, Mat3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::{Duration, Instant};

// Tolerances.
const MASS_REL_TOL: f64 = 0.01;
const MASS_WINDOW: f64 = 2.0;
const CONVERGENCE_WINDOW: f64 = 2.0;
const GRASP_RUNTIME: Duration = Duration::from_secs(5);
const DOB_CLOSED_FORM_TOL: f64 = 0.005;
const LOOP_SHAPE_TOL: f64 = 1e-12;
const MARGIN_TOL_DEG: f64 = 0.01;
const MIN_PHASE_MARGIN: f64 = 45.0;
const DIAGONAL_TOL: f64 = 1e-9;
const XY_RATIO_TOL: f64 = 0.2;
const ATT_IMPROVEMENT: f64 = 0.15;
const POS_IMPROVEMENT: f64 = 0.10;
const HOVER_RUNTIME: Duration = Duration::from_secs(30);
const COMPOSE_REL_TOL: f64 = 0.01;
const MC_SAMPLES: usize = 200_000;
const FK_IK_TOL: f64 = 1e-9;
const JACOBIAN_REL_TOL: f64 = 1e-5;
const MOMENTUM_REL_TOL: f64 = 1e-6;
const RK4_MIN_RATIO: f64 = 15.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "scenarios", &format!("{name}.toml")]
        .iter()
        .collect();
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn csv_bytes(log: &RunLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).expect("in-memory CSV");
    buf
}

fn grasp_mass_convergence() -> Outcome {
    let cfg = scenario("grasp_estimate");
    let start = Instant::now();
    let log = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let latch = log.latch_time().ok_or("grasp never latched")?;
    let last_outside = log
        .rows
        .iter()
        .filter(|r| r.latched && ((r.m_hat_o - r.m_true_o) / r.m_true_o).abs() >= MASS_REL_TOL)
        .map(|r| r.t)
        .fold(latch, f64::max);
    let mass_time = last_outside - latch;
    let at_window = log
        .rows
        .iter()
        .find(|r| r.t >= latch + MASS_WINDOW)
        .ok_or("run ends before the estimation window")?;
    let err_at_window = (at_window.m_hat_o - at_window.m_true_o) / at_window.m_true_o;
    let conv = declare_convergence(&log, &ConvergenceBounds::default());
    let times = conv.require().map_err(|e| e.to_string())?;
    let worst = times.iter().map(|t| t - latch).fold(0.0, f64::max);
    check(
        mass_time <= MASS_WINDOW && err_at_window.abs() < MASS_REL_TOL && worst <= CONVERGENCE_WINDOW && elapsed < GRASP_RUNTIME,
        format!(
            "m_o error {:+.3}% at latch+{MASS_WINDOW} s, within 1% from latch+{mass_time:.3} s; all bounds by latch+{worst:.3} s; runtime {:.2} s",
            100.0 * err_at_window,
            elapsed.as_secs_f64()
        ),
    )
}

/// Payload step on a hovering vehicle: thrust command steps to the loaded
/// hover value through the motor lag while the observer runs at its own rate.
fn dob_closed_form() -> Outcome {
    let (m_a, m_o, g) = (1.379, 0.219, 9.81);
    let rotors = RotorConfig::default();
    let cfg = DobConfig::default();
    let j = Mat3::from_diagonal(&Vec3::new(9.2e-3, 10.5e-3, 14.7e-3));
    let (sim_dt, div) = (5e-4, 20);
    let mut s = VehicleState::at_rest(Vec3::new(0.0, 0.0, 1.0));
    let mut thrust = [m_a * g / 4.0; 4];
    let command = [(m_a + m_o) * g / 4.0; 4];
    let mut dob = DobState::default();
    dob.start(0.0);
    let mut worst: f64 = 0.0;
    for k in 0..=(2.0 / sim_dt) as usize {
        let (force, torque) = rotor_wrench(&thrust, &rotors, &Vec3::zeros());
        let inputs = StepInputs {
            force_body: force,
            torque_body: torque,
            force_world: Vec3::zeros(),
            mass: m_a + m_o,
            inertia: j,
            gravity: g,
        };
        if k % div == 0 && k > 0 {
            let t = k as f64 * sim_dt;
            let accel = derivatives(&s, &inputs).v_dot;
            dob = dob_step(
                &dob,
                &accel,
                &rotation_matrix(&s.q),
                &force,
                m_a,
                g,
                &cfg,
                t,
                div as f64 * sim_dt,
            );
            let closed = m_o * (1.0 - (-cfg.gain * t / m_a).exp());
            worst = worst.max((dob.m_hat - closed).abs() / m_o);
        }
        s = step_rk4(&s, &inputs, sim_dt).map_err(|e| e.to_string())?;
        thrust = motor_lag_step(&command, &thrust, &rotors, sim_dt);
    }
    check(
        worst <= DOB_CLOSED_FORM_TOL,
        format!("max |m_hat - m_o(1 - e^(-ct/m_a))| = {:.2e} of m_o over 2 s", worst),
    )
}

fn loop_shape_invariance() -> Outcome {
    let v = VehicleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for axis in 0..3 {
        let gains = AxisGains::from_gains(&v.gains, axis);
        let j_a = v.inertia[axis];
        let nominal = open_loop_tf(&gains, 1.0, v.rotors.k_m, v.rotors.tau_m, j_a).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let scale = rng.random_range(1.0..4.0);
            let j = scale * j_a;
            let tf = open_loop_tf(&gains, j / j_a, v.rotors.k_m, v.rotors.tau_m, j).map_err(|e| e.to_string())?;
            for (a, b) in tf.num.iter().zip(&nominal.num).chain(tf.den.iter().zip(&nominal.den)) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    check(
        worst <= LOOP_SHAPE_TOL,
        format!("max coefficient deviation {worst:.2e} over 3 x 100 scalings"),
    )
}

fn margin_oracle() -> Outcome {
    let band = Band::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut n) = (0.0f64, 0);
    while n < 50 {
        let k = 10f64.powf(rng.random_range(0.5..2.5));
        let tau = 10f64.powf(rng.random_range(-3.0..-1.0));
        let wc = (((1.0 + 4.0 * k * k * tau * tau).sqrt() - 1.0) / (2.0 * tau * tau)).sqrt();
        if wc < 2.0 * band.lo || wc > 0.5 * band.hi {
            continue;
        }
        let analytic = 90.0 - (tau * wc).atan().to_degrees();
        let tf = RationalTF::new(vec![k], vec![0.0, 1.0, tau]).map_err(|e| e.to_string())?;
        let m = margins(&tf, &band).map_err(|e| e.to_string())?;
        worst = worst.max((m.phase_margin_deg - analytic).abs());
        n += 1;
    }
    check(
        worst <= MARGIN_TOL_DEG,
        format!("max phase-margin error {worst:.2e} deg over {n} (K, tau) pairs"),
    )
}

fn rate_plant(v: &VehicleConfig) -> RatePlant {
    RatePlant {
        j_a: Vec3::from(v.inertia),
        k_m: v.rotors.k_m,
        tau_m: v.rotors.tau_m,
    }
}

fn robustness() -> Outcome {
    let v = VehicleConfig::default();
    let grid = 11;
    let sweep = robustness_sweep(
        &Gains::default(),
        &rate_plant(&v),
        &UncertaintyBox::default(),
        grid,
        &Band::default(),
    )
    .map_err(|e| e.to_string())?;
    let min_pm = sweep
        .worst
        .iter()
        .map(|w| w.report.phase_margin_deg)
        .fold(f64::INFINITY, f64::min);
    let mut diag_spread: f64 = 0.0;
    for axis in 0..3 {
        let diag: Vec<f64> = sweep
            .cells
            .iter()
            .filter(|c| c.axis == axis && c.j_scale == c.kk_scale)
            .map(|c| c.report.phase_margin_deg)
            .collect();
        if diag.len() != grid {
            return Err(format!("axis {axis}: {} diagonal cells", diag.len()));
        }
        for pm in &diag {
            diag_spread = diag_spread.max((pm - diag[0]).abs());
        }
    }
    let w = &sweep.worst;
    check(
        min_pm >= MIN_PHASE_MARGIN && diag_spread <= DIAGONAL_TOL,
        format!(
            "min PM {min_pm:.2} deg (x {:.2}, y {:.2}, z {:.2}); diagonal spread {diag_spread:.1e} deg",
            w[0].report.phase_margin_deg, w[1].report.phase_margin_deg, w[2].report.phase_margin_deg
        ),
    )
}

fn workspace_structure() -> Outcome {
    let v = VehicleConfig::default();
    let vehicle = v.inertial().map_err(|e| e.to_string())?;
    let geom = DeltaGeometry::default();
    let mut maxima = Vec::new();
    for mass in [0.1, 0.2, 0.4] {
        let p = BoxPayload {
            mass,
            dims: [0.2; 3],
            pad: 0.01,
        };
        maxima.push(
            workspace_kk_sweep(&geom, &p, &vehicle, 15)
                .map_err(|e| e.to_string())?
                .max_kk,
        );
    }
    let [x, y, z] = maxima[2];
    let structure = z < x && z < y && (x / y - 1.0).abs() <= XY_RATIO_TOL;
    let monotone = maxima.windows(2).all(|w| (0..3).all(|a| w[1][a] > w[0][a]));
    check(
        structure && monotone,
        format!(
            "0.4 kg maxima ({x:.3}, {y:.3}, {z:.3}); x-axis over masses {:.3} / {:.3} / {:.3}",
            maxima[0][0], maxima[1][0], maxima[2][0]
        ),
    )
}

fn controller_benefit() -> Outcome {
    let cfg = scenario("hover_payload");
    let start = Instant::now();
    let runs = run_modes(&cfg, &[Mode::Baseline, Mode::Iags]);
    let elapsed = start.elapsed();
    let mut reports = Vec::new();
    for (m, r) in runs {
        let log = r.map_err(|e| format!("{m}: {e}"))?;
        reports.push(compute_metrics(&log, cfg.metrics.window).map_err(|e| e.to_string())?);
    }
    let (base, iags) = (&reports[0], &reports[1]);
    let att = 1.0 - iags.attitude_rmse / base.attitude_rmse;
    let pos = 1.0 - iags.position_rmse / base.position_rmse;
    check(
        att >= ATT_IMPROVEMENT && pos >= POS_IMPROVEMENT && elapsed < HOVER_RUNTIME,
        format!(
            "attitude RMSE -{:.1}%, position RMSE -{:.1}%; runtime {:.2} s",
            100.0 * att,
            100.0 * pos,
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation_order() -> Outcome {
    let cfg = scenario("grasp_estimate");
    let modes = [Mode::Baseline, Mode::Iags, Mode::IagsDob];
    let mut pos = Vec::new();
    for (m, r) in run_modes(&cfg, &modes) {
        let log = r.map_err(|e| format!("{m}: {e}"))?;
        pos.push(
            compute_metrics(&log, cfg.metrics.window)
                .map_err(|e| e.to_string())?
                .position_rmse,
        );
    }
    check(
        pos[2] <= pos[1] && pos[1] <= pos[0],
        format!(
            "position RMSE iags+dob {:.4} <= iags {:.4} <= baseline {:.4}",
            pos[2], pos[1], pos[0]
        ),
    )
}

fn random_box(rng: &mut ChaCha8Rng) -> (f64, Vec3) {
    let dims = Vec3::new(
        rng.random_range(0.02..0.4),
        rng.random_range(0.02..0.4),
        rng.random_range(0.02..0.4),
    );
    (rng.random_range(0.05..2.0), dims)
}

fn box_inertia(mass: f64, d: &Vec3) -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(
        d.y * d.y + d.z * d.z,
        d.x * d.x + d.z * d.z,
        d.x * d.x + d.y * d.y,
    )) * (mass / 12.0)
}

/// Point-mass discretization of two solid boxes: inertia about the sampled CoM.
fn monte_carlo(bodies: &[(f64, Vec3, Vec3, Mat3)], rng: &mut ChaCha8Rng) -> (f64, Vec3, Mat3) {
    let mut pts: Vec<(f64, Vec3)> = Vec::with_capacity(bodies.len() * MC_SAMPLES);
    for (mass, dims, center, rot) in bodies {
        let w = mass / MC_SAMPLES as f64;
        for _ in 0..MC_SAMPLES {
            let local = Vec3::new(
                dims.x * rng.random_range(-0.5..0.5),
                dims.y * rng.random_range(-0.5..0.5),
                dims.z * rng.random_range(-0.5..0.5),
            );
            pts.push((w, center + rot * local));
        }
    }
    let mass: f64 = pts.iter().map(|p| p.0).sum();
    let com = pts.iter().fold(Vec3::zeros(), |a, (w, r)| a + *w * r) / mass;
    let j = pts.iter().fold(Mat3::zeros(), |a, (w, r)| {
        let d = r - com;
        a + *w * (Mat3::identity() * d.dot(&d) - d * d.transpose())
    });
    (mass, com, j)
}

fn composite_inertia() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (m1, d1) = random_box(&mut rng);
        let (m2, d2) = random_box(&mut rng);
        let c1 = Vec3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
        );
        let p2 = Vec3::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.5..0.0),
        );
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let rot = nalgebra::Rotation3::new(axis).into_inner();
        let am = InertialParams::new(m1, c1, box_inertia(m1, &d1)).map_err(|e| e.to_string())?;
        let obj = InertialParams::new(m2, Vec3::zeros(), rot * box_inertia(m2, &d2) * rot.transpose())
            .map_err(|e| e.to_string())?;
        let total = compose_inertia(&am, &obj, &p2);
        let (mc_mass, mc_com, mc_j) = monte_carlo(&[(m1, d1, c1, Mat3::identity()), (m2, d2, p2, rot)], &mut rng);
        let scale = total.inertia_about_com.norm();
        worst = worst
            .max((total.mass - mc_mass).abs() / mc_mass)
            .max((total.inertia_about_com - mc_j).norm() / scale)
            .max((total.com - mc_com).norm() / (total.inertia_about_com.trace() / total.mass).sqrt());
    }
    check(
        worst <= COMPOSE_REL_TOL,
        format!(
            "max relative deviation {:.3}% over 20 configurations, {MC_SAMPLES} samples per body",
            100.0 * worst
        ),
    )
}

fn kinematics() -> Outcome {
    let geom = DeltaGeometry::default();
    let n = 10;
    let axis = |k: usize, i: usize| {
        let [lo, hi] = geom.joint_limits[k];
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    };
    let (mut fk_err, mut jac_err, mut tested, mut skipped): (f64, f64, usize, usize) = (0.0, 0.0, 0, 0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let theta = [axis(0, i), axis(1, j), axis(2, k)];
                let Ok(p) = forward_kin(&geom, &theta) else {
                    skipped += 1;
                    continue;
                };
                let back = inverse_kin(&geom, &p).map_err(|e| format!("IK at {p:?}: {e}"))?;
                let p2 = forward_kin(&geom, &back).map_err(|e| e.to_string())?;
                fk_err = fk_err.max((p2 - p).norm());
                tested += 1;
                let Ok(jm) = jacobian(&geom, &theta) else { continue };
                let h = 1e-6;
                for c in 0..3 {
                    let (mut tp, mut tm) = (theta, theta);
                    tp[c] += h;
                    tm[c] -= h;
                    let (Ok(fp), Ok(fm)) = (forward_kin(&geom, &tp), forward_kin(&geom, &tm)) else {
                        continue;
                    };
                    let col = (fp - fm) / (2.0 * h);
                    if col.norm() > 1e-6 {
                        jac_err = jac_err.max((col - jm.column(c)).norm() / col.norm());
                    }
                }
            }
        }
    }
    check(
        fk_err <= FK_IK_TOL && jac_err <= JACOBIAN_REL_TOL && tested > n * n * n / 2,
        format!(
            "FK(IK(p)) error {fk_err:.1e} m over {tested} poses ({skipped} unassemblable); Jacobian rel error {jac_err:.1e}"
        ),
    )
}

fn dynamics_conservation() -> Outcome {
    let j = Mat3::from_diagonal(&Vec3::new(9.2e-3, 10.5e-3, 14.7e-3));
    let inputs = StepInputs {
        force_body: Vec3::zeros(),
        torque_body: Vec3::zeros(),
        force_world: Vec3::zeros(),
        mass: 1.0,
        inertia: j,
        gravity: 9.81,
    };
    let tumble = |dt: f64, steps: usize| -> Result<VehicleState, String> {
        let mut s = VehicleState::at_rest(Vec3::zeros());
        s.omega = Vec3::new(3.0, -1.0, 5.0);
        for _ in 0..steps {
            s = step_rk4(&s, &inputs, dt).map_err(|e| e.to_string())?;
        }
        Ok(s)
    };
    let h = |s: &VehicleState| rotation_matrix(&s.q) * j * s.omega;
    let h0 = h(&tumble(1e-3, 0)?);
    let h_end = h(&tumble(1e-3, 10_000)?);
    let drift = (h_end - h0).norm() / h0.norm();
    let reference = tumble(1e-5, 100_000)?;
    let err = |s: VehicleState| (s.omega - reference.omega).norm() + (s.q.coords - reference.q.coords).norm();
    let ratio = err(tumble(5e-3, 200)?) / err(tumble(2.5e-3, 400)?);
    check(
        drift <= MOMENTUM_REL_TOL && ratio >= RK4_MIN_RATIO,
        format!("momentum drift {drift:.1e} over 10 s; error ratio on halving dt {ratio:.2}"),
    )
}

fn determinism() -> Outcome {
    let mut lines = Vec::new();
    for name in ["grasp_estimate", "hover_payload", "pick_place", "gate_wind"] {
        let cfg = scenario(name);
        let a = csv_bytes(&run_scenario(&cfg).map_err(|e| e.to_string())?);
        let b = csv_bytes(&run_scenario(&cfg).map_err(|e| e.to_string())?);
        if a != b {
            return Err(format!("{name}: logs differ"));
        }
        lines.push(format!("{name} {} B", a.len()));
    }
    Ok(format!("identical CSV on re-run: {}", lines.join(", ")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("grasp mass convergence", grasp_mass_convergence),
        ("observer closed-form response", dob_closed_form),
        ("loop-shape invariance", loop_shape_invariance),
        ("margin oracle", margin_oracle),
        ("robustness sweep", robustness),
        ("workspace gain sweep", workspace_structure),
        ("controller benefit", controller_benefit),
        ("ablation ordering", ablation_order),
        ("composite inertia", composite_inertia),
        ("delta kinematics", kinematics),
        ("dynamics conservation", dynamics_conservation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
