use aminertia::controller::Gains;
use aminertia::delta::DeltaGeometry;
use aminertia::freqdom::{
    margins, open_loop_tf, robustness_sweep, workspace_kk_sweep, AxisGains, Band, BoxPayload, RatePlant, UncertaintyBox,
};
use aminertia::harness::metrics::{ablation_table, declare_convergence, ConvergenceBounds, EstimationErrors};
use aminertia::harness::{
    compare_runs, compute_metrics, run_modes, run_scenario, ConfigError, Mode, RunError, RunLog, ScenarioConfig,
};
use aminertia::presense::{estimate_inertia, fit_obb, PointCloud, PriorCatalog, DEFAULT_PAD_HEIGHT};
use aminertia::spatial::Vec3;
use clap::{Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CRITERIA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "aminertia",
    version,
    about = "Aerial manipulator inertia estimation and control toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its log.
    Run {
        config: PathBuf,
        /// Controller mode: baseline, iags (pre-only), iags+dob, dob-only, or "all".
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for log CSV and events.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 unless the estimates converge within this many
        /// seconds of the grasp latch.
        #[arg(long)]
        check: Option<f64>,
    },
    /// Tracking and estimation metrics of a log.
    Metrics {
        log: PathBuf,
        /// True object mass, kg, overriding the logged truth.
        #[arg(long)]
        truth: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["START", "END"])]
        window: Option<Vec<f64>>,
    },
    /// Compare two logs of the same scenario (B against A).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, num_args = 2, value_names = ["START", "END"])]
        window: Option<Vec<f64>>,
    },
    /// Rate-loop margins for the vehicle in a scenario file (defaults otherwise).
    Margins {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Workspace gain sweep or uncertainty-box margin sweep.
    Sweep {
        #[arg(long, conflicts_with = "uncertainty")]
        workspace: bool,
        #[arg(long)]
        uncertainty: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Payload mass for the workspace sweep, kg.
        #[arg(long, default_value_t = 0.4)]
        mass: f64,
        /// Payload cube edge for the workspace sweep, m.
        #[arg(long, default_value_t = 0.2)]
        size: f64,
        #[arg(long, default_value_t = 15)]
        grid: usize,
        /// Write the full sweep table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-sense a payload from a point cloud file.
    Estimate {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PAD_HEIGHT)]
        pad: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run {
            config,
            mode,
            seed,
            out,
            check,
        } => cmd_run(&config, mode.as_deref(), seed, out.as_deref(), check),
        Cmd::Metrics { log, truth, window } => cmd_metrics(&log, truth, window_arg(window)),
        Cmd::Compare { a, b, window } => cmd_compare(&a, &b, window_arg(window)),
        Cmd::Margins { config } => cmd_margins(config.as_deref()),
        Cmd::Sweep {
            workspace,
            uncertainty,
            config,
            mass,
            size,
            grid,
            out,
        } => {
            if workspace == uncertainty {
                Err(Failure::config("choose one of --workspace or --uncertainty"))
            } else if workspace {
                cmd_workspace(config.as_deref(), mass, size, grid)
            } else {
                cmd_uncertainty(config.as_deref(), grid, out.as_deref())
            }
        }
        Cmd::Estimate {
            cloud,
            label,
            catalog,
            pad,
        } => cmd_estimate(&cloud, &label, catalog.as_deref(), pad),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(msg: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.to_string(),
        }
    }

    fn criteria(msg: impl ToString) -> Self {
        Self {
            code: EXIT_CRITERIA,
            message: msg.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Diverged { .. } | RunError::Kinematics { .. } => EXIT_DIVERGED,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

fn window_arg(w: Option<Vec<f64>>) -> Option<[f64; 2]> {
    w.map(|v| [v[0], v[1]])
}

fn read_log(path: &Path) -> Result<RunLog, Failure> {
    let f = File::open(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    RunLog::read_csv(f).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn write_log(log: &RunLog, dir: &Path, stem: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::config(format!("{}: {e}", dir.display())))?;
    let io = |e: &dyn std::fmt::Display| Failure::config(e.to_string());
    let f = File::create(dir.join(format!("{stem}.csv"))).map_err(|e| io(&e))?;
    log.write_csv(BufWriter::new(f)).map_err(|e| io(&e))?;
    let f = File::create(dir.join(format!("{stem}_events.csv"))).map_err(|e| io(&e))?;
    log.write_events_csv(BufWriter::new(f)).map_err(|e| io(&e))
}

fn print_estimation(log: &RunLog) {
    let Some(i) = log.rows.iter().position(|r| r.latched) else {
        return;
    };
    let show = |label: &str, e: EstimationErrors| {
        println!(
            "{label:<8} m_t {:+.4} kg ({:+.2}%)  m_o {:+.2}%  c_t [{:+.4} {:+.4} {:+.4}] m  J_t [{:+.2}% {:+.2}% {:+.2}%]",
            e.mass_abs,
            100.0 * e.mass_rel,
            100.0 * e.object_mass_rel,
            e.com_abs[0],
            e.com_abs[1],
            e.com_abs[2],
            100.0 * e.moi_rel[0],
            100.0 * e.moi_rel[1],
            100.0 * e.moi_rel[2]
        );
    };
    show("latch", EstimationErrors::at(&log.rows[i]));
    show("final", EstimationErrors::at(log.rows.last().unwrap()));
}

fn convergence_check(log: &RunLog, limit: Option<f64>) -> Result<(), Failure> {
    let Some(latch) = log.latch_time() else {
        return match limit {
            Some(_) => Err(Failure::criteria("grasp never latched")),
            None => Ok(()),
        };
    };
    let conv = declare_convergence(log, &ConvergenceBounds::default());
    let fmt = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{:.3} s", t - latch));
    println!(
        "latch at {latch:.3} s; converged after latch: mass {}, CoM {}, MoI {}",
        fmt(conv.mass),
        fmt(conv.com),
        fmt(conv.moi)
    );
    if let Some(limit) = limit {
        let times = conv.require().map_err(Failure::criteria)?;
        if times.iter().any(|t| t - latch > limit) {
            return Err(Failure::criteria(format!("convergence slower than {limit} s")));
        }
    }
    Ok(())
}

fn cmd_run(
    config: &Path,
    mode: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
    check: Option<f64>,
) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let window = cfg.metrics.window;
    if mode == Some("all") {
        let runs = run_modes(&cfg, &Mode::ALL);
        let mut table = Vec::new();
        let mut logs = Vec::new();
        for (m, res) in runs {
            let log = res?;
            let report = compute_metrics(&log, window).map_err(Failure::config)?;
            table.push((m.to_string(), report));
            logs.push((m, log));
        }
        print!("{}", ablation_table(&table));
        if let Some(dir) = out {
            for (m, log) in &logs {
                write_log(log, dir, &format!("{}_{}", cfg.name, m.as_str().replace('+', "_")))?;
            }
        }
        return Ok(());
    }
    if let Some(m) = mode {
        cfg.mode = m.parse()?;
    }
    let log = run_scenario(&cfg)?;
    let report = compute_metrics(&log, window).map_err(Failure::config)?;
    println!("scenario {} mode {} seed {}", cfg.name, cfg.mode, cfg.seed);
    println!("{report}");
    print_estimation(&log);
    if let Some(dir) = out {
        write_log(&log, dir, &cfg.name)?;
    }
    if cfg.object.is_some() {
        convergence_check(&log, check)?;
    }
    Ok(())
}

fn cmd_metrics(path: &Path, truth: Option<f64>, window: Option<[f64; 2]>) -> Result<(), Failure> {
    let mut log = read_log(path)?;
    if let Some(m_o) = truth {
        for r in log.rows.iter_mut().filter(|r| r.attached) {
            r.m_true_t += m_o - r.m_true_o;
            r.m_true_o = m_o;
        }
    }
    let report = compute_metrics(&log, window.unwrap_or([0.0, 0.0])).map_err(Failure::config)?;
    println!("{report}");
    print_estimation(&log);
    convergence_check(&log, None)
}

fn cmd_compare(a: &Path, b: &Path, window: Option<[f64; 2]>) -> Result<(), Failure> {
    let (la, lb) = (read_log(a)?, read_log(b)?);
    let c = compare_runs(&la, &lb, window.unwrap_or([0.0, 0.0])).map_err(Failure::config)?;
    println!("A = {}\nB = {}", a.display(), b.display());
    println!("{c}");
    Ok(())
}

fn vehicle_setup(
    config: Option<&Path>,
) -> Result<(Gains, RatePlant, aminertia::spatial::InertialParams, DeltaGeometry), Failure> {
    let cfg = match config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::parse("name = \"default\"\nduration = 1.0\n")?,
    };
    let v = &cfg.vehicle;
    let plant = RatePlant {
        j_a: Vec3::from(v.inertia),
        k_m: v.rotors.k_m,
        tau_m: v.rotors.tau_m,
    };
    Ok((v.gains, plant, v.inertial()?, cfg.arm.geometry))
}

fn cmd_margins(config: Option<&Path>) -> Result<(), Failure> {
    let (gains, plant, _, _) = vehicle_setup(config)?;
    println!(
        "{:<5} {:>10} {:>12} {:>12} {:>12}",
        "axis", "PM [deg]", "wc [rad/s]", "GM [dB]", "w180 [rad/s]"
    );
    for axis in 0..3 {
        let tf = open_loop_tf(
            &AxisGains::from_gains(&gains, axis),
            1.0,
            plant.k_m,
            plant.tau_m,
            plant.j_a[axis],
        )
        .map_err(Failure::config)?;
        let m = margins(&tf, &Band::default()).map_err(Failure::config)?;
        println!(
            "{:<5} {:>10.2} {:>12.2} {:>12.2} {:>12}",
            ["x", "y", "z"][axis],
            m.phase_margin_deg,
            m.gain_crossover,
            m.gain_margin_db,
            m.phase_crossover.map_or("-".into(), |w| format!("{w:.2}"))
        );
    }
    Ok(())
}

fn cmd_uncertainty(config: Option<&Path>, grid: usize, out: Option<&Path>) -> Result<(), Failure> {
    let (gains, plant, _, _) = vehicle_setup(config)?;
    let sweep = robustness_sweep(&gains, &plant, &UncertaintyBox::default(), grid, &Band::default())
        .map_err(Failure::config)?;
    for w in &sweep.worst {
        println!(
            "axis {}: min PM {:.2} deg at {:.2} rad/s (J x{:.3}, K_k x{:.3})",
            ["x", "y", "z"][w.axis],
            w.report.phase_margin_deg,
            w.report.gain_crossover,
            w.j_scale,
            w.kk_scale
        );
    }
    if let Some(path) = out {
        let f = File::create(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut wr = csv::Writer::from_writer(BufWriter::new(f));
        let io = |e: csv::Error| Failure::config(e);
        wr.write_record([
            "axis",
            "j_scale",
            "kk_scale",
            "gm_db",
            "pm_deg",
            "gain_crossover",
            "phase_crossover",
        ])
        .map_err(io)?;
        for c in &sweep.cells {
            wr.write_record([
                c.axis.to_string(),
                c.j_scale.to_string(),
                c.kk_scale.to_string(),
                c.report.gain_margin_db.to_string(),
                c.report.phase_margin_deg.to_string(),
                c.report.gain_crossover.to_string(),
                c.report.phase_crossover.map_or(String::new(), |w| w.to_string()),
            ])
            .map_err(io)?;
        }
        wr.flush().map_err(Failure::config)?;
    }
    Ok(())
}

fn cmd_workspace(config: Option<&Path>, mass: f64, size: f64, grid: usize) -> Result<(), Failure> {
    let (_, _, vehicle, geom) = vehicle_setup(config)?;
    let payload = BoxPayload {
        mass,
        dims: [size; 3],
        pad: DEFAULT_PAD_HEIGHT,
    };
    let r = workspace_kk_sweep(&geom, &payload, &vehicle, grid).map_err(Failure::config)?;
    println!("{} reachable poses", r.reachable);
    for axis in 0..3 {
        let th = r.argmax[axis].map(f64::to_degrees);
        println!(
            "K_k {}: max {:.3} at theta [{:.1} {:.1} {:.1}] deg",
            ["x", "y", "z"][axis],
            r.max_kk[axis],
            th[0],
            th[1],
            th[2]
        );
    }
    Ok(())
}

fn cmd_estimate(cloud: &Path, label: &str, catalog: Option<&Path>, pad: f64) -> Result<(), Failure> {
    let cat = match catalog {
        Some(p) => PriorCatalog::load(p).map_err(Failure::config)?,
        None => PriorCatalog::builtin(),
    };
    let prior = cat.prior_for(label).map_err(Failure::config)?;
    let pts = PointCloud::load(cloud).map_err(Failure::config)?;
    let obb = fit_obb(&pts).map_err(Failure::config)?;
    let est = estimate_inertia(&obb, prior, pad).map_err(Failure::config)?;
    let j = est.moi_in_parent();
    println!(
        "prior    {} (beta {:.4}, rho {} kg/m^3)",
        prior.label, prior.beta, prior.rho
    );
    println!("box      {:.4} x {:.4} x {:.4} m", obb.dims.x, obb.dims.y, obb.dims.z);
    println!("mass     {:.4} kg", est.mass_tilde);
    println!(
        "moi      diag [{:.4e} {:.4e} {:.4e}] kg m^2",
        j[(0, 0)],
        j[(1, 1)],
        j[(2, 2)]
    );
    println!(
        "grasp    [{:.4} {:.4} {:.4}] m",
        est.grasp_offset.x, est.grasp_offset.y, est.grasp_offset.z
    );
    Ok(())
}
