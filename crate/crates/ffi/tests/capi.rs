use aminertia_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(am_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn kinematics_round_trip_and_errors() {
    let g = am_delta_default_geometry();
    let theta = [0.3, 0.45, 0.6];
    let (mut p, mut back, mut jac) = ([0.0; 3], [0.0; 3], [0.0; 9]);
    unsafe {
        assert_eq!(am_delta_forward(&g, theta.as_ptr(), p.as_mut_ptr()), AmStatus::Ok);
        assert_eq!(am_delta_inverse(&g, p.as_ptr(), back.as_mut_ptr()), AmStatus::Ok);
        assert_eq!(am_delta_jacobian(&g, theta.as_ptr(), jac.as_mut_ptr()), AmStatus::Ok);
    }
    for i in 0..3 {
        assert!((back[i] - theta[i]).abs() < 1e-9);
    }
    assert!(jac.iter().any(|x| x.abs() > 1e-3));

    let far = [0.0, 0.0, -5.0];
    let status = unsafe { am_delta_inverse(&g, far.as_ptr(), back.as_mut_ptr()) };
    assert_eq!(status, AmStatus::Kinematics);
    assert!(last_error().contains("out of reach"), "{}", last_error());

    let mut bad = g;
    bad.forearm_len = -1.0;
    let status = unsafe { am_delta_forward(&bad, theta.as_ptr(), p.as_mut_ptr()) };
    assert_eq!(status, AmStatus::InvalidArgument);
    assert_eq!(
        unsafe { am_delta_forward(ptr::null(), theta.as_ptr(), p.as_mut_ptr()) },
        AmStatus::NullPointer
    );
}

#[test]
fn compose_matches_parallel_axis_by_hand() {
    let vehicle = AmInertial {
        mass: 1.0,
        com: [0.0; 3],
        inertia: [0.01, 0.0, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.02],
    };
    let point = AmInertial {
        mass: 1.0,
        com: [0.0; 3],
        inertia: [0.0; 9],
    };
    let at = [0.0, 0.0, -0.2];
    let mut out = AmInertial {
        mass: 0.0,
        com: [0.0; 3],
        inertia: [0.0; 9],
    };
    assert_eq!(
        unsafe { am_compose_inertia(&vehicle, &point, at.as_ptr(), &mut out) },
        AmStatus::Ok
    );
    assert_eq!(out.mass, 2.0);
    assert!((out.com[2] + 0.1).abs() < 1e-15);
    // two unit masses 0.1 m either side of the CoM add 0.02 about x and y
    assert!((out.inertia[0] - 0.03).abs() < 1e-12);
    assert!((out.inertia[4] - 0.03).abs() < 1e-12);
    assert!((out.inertia[8] - 0.02).abs() < 1e-12);

    let negative = AmInertial { mass: -1.0, ..point };
    assert_eq!(
        unsafe { am_compose_inertia(&vehicle, &negative, at.as_ptr(), &mut out) },
        AmStatus::InvalidArgument
    );
}

#[test]
fn presense_through_catalog_handle() {
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { am_catalog_builtin(&mut cat) }, AmStatus::Ok);
    let mut pts = Vec::new();
    for i in 0..2000 {
        let f = i as f64 / 2000.0;
        let u = [(f * 7.3).fract(), (f * 13.7).fract(), (f * 29.1).fract()];
        pts.extend([0.2 * (u[0] - 0.5), 0.1 * (u[1] - 0.5), 0.05 * (u[2] - 0.5)]);
    }
    let label = CString::new("solid cardboard box").unwrap();
    let mut est = AmObjectEstimate {
        mass: 0.0,
        inertia: [0.0; 9],
        grasp_offset: [0.0; 3],
        box_dims: [0.0; 3],
    };
    let status = unsafe { am_presense_estimate(cat, label.as_ptr(), pts.as_ptr(), 2000, 0.01, &mut est) };
    assert_eq!(status, AmStatus::Ok, "{}", last_error());
    assert!(est.mass > 0.0);
    assert!(est.box_dims[0] >= est.box_dims[1] && est.box_dims[1] >= est.box_dims[2]);
    assert!(est.grasp_offset[2] < 0.0);

    let unknown = CString::new("anvil").unwrap();
    let status = unsafe { am_presense_estimate(cat, unknown.as_ptr(), pts.as_ptr(), 2000, 0.01, &mut est) };
    assert_eq!(status, AmStatus::Presense);
    unsafe { am_catalog_free(cat) };

    let missing = CString::new("/nonexistent/priors.toml").unwrap();
    let mut cat = ptr::null_mut();
    assert_eq!(
        unsafe { am_catalog_load(missing.as_ptr(), &mut cat) },
        AmStatus::Presense
    );
    assert!(cat.is_null());
}

#[test]
fn margins_report_no_phase_crossover_as_negative() {
    let mut m = AmMargins {
        gain_margin_db: 0.0,
        phase_margin_deg: 0.0,
        gain_crossover: 0.0,
        phase_crossover: 0.0,
    };
    let status = unsafe { am_rate_margins(0.15, 0.2, 0.003, 1.0, 1.0, 0.02, 9.2e-3, 1.0, 600.0, &mut m) };
    assert_eq!(status, AmStatus::Ok);
    assert!(m.phase_margin_deg > 45.0 && m.gain_crossover > 0.0);
    if m.phase_crossover < 0.0 {
        assert!(m.gain_margin_db.is_infinite());
    }
    let status = unsafe { am_rate_margins(0.15, 0.2, 0.003, 1.0, 1.0, 0.02, 0.0, 1.0, 600.0, &mut m) };
    assert_eq!(status, AmStatus::Analysis);
}

#[test]
fn scenario_run_and_log_access() {
    let text = CString::new(
        "name = \"ffi\"\nduration = 1.0\nseed = 2\n[object]\nlabel = \"coffee can\"\nshape = \"cylinder\"\ndims = [0.1, 0.1, 0.12]\nmass = 0.219\n",
    )
    .unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { am_scenario_parse(text.as_ptr(), &mut sc) },
        AmStatus::Ok,
        "{}",
        last_error()
    );
    let mode = CString::new("pre-only").unwrap();
    assert_eq!(unsafe { am_scenario_set_mode(sc, mode.as_ptr()) }, AmStatus::Ok);
    let bogus = CString::new("autopilot").unwrap();
    assert_eq!(unsafe { am_scenario_set_mode(sc, bogus.as_ptr()) }, AmStatus::Config);
    assert_eq!(unsafe { am_scenario_set_seed(sc, 5) }, AmStatus::Ok);

    let mut log = ptr::null_mut();
    assert_eq!(unsafe { am_run(sc, &mut log) }, AmStatus::Ok, "{}", last_error());
    let n = unsafe { am_runlog_len(log) };
    assert_eq!(n, 400);
    assert_eq!(unsafe { am_runlog_latch_time(log) }, 0.0);
    let mut row = std::mem::MaybeUninit::<AmLogSample>::uninit();
    assert_eq!(unsafe { am_runlog_row(log, n - 1, row.as_mut_ptr()) }, AmStatus::Ok);
    let row = unsafe { row.assume_init() };
    assert!(row.latched && (row.m_true_o - 0.219).abs() < 1e-12);
    let mut spare = std::mem::MaybeUninit::<AmLogSample>::uninit();
    assert_eq!(
        unsafe { am_runlog_row(log, n, spare.as_mut_ptr()) },
        AmStatus::OutOfRange
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ffi.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { am_runlog_write_csv(log, path.as_ptr()) }, AmStatus::Ok);
    let written = std::fs::read_to_string(dir.path().join("ffi.csv")).unwrap();
    assert_eq!(written.lines().count(), 2 + n);

    unsafe {
        am_runlog_free(log);
        am_scenario_free(sc);
        am_runlog_free(ptr::null_mut());
        am_scenario_free(ptr::null_mut());
    }

    let broken = CString::new("name = 3").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { am_scenario_parse(broken.as_ptr(), &mut sc) }, AmStatus::Config);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/aminertia.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .filter_map(|s| s.split('(').next())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/capi-<hash> -> target/<profile>/libaminertia_ffi.a
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libaminertia_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_static_library() {
    let Some(lib) = static_lib() else {
        panic!("static library not found next to the test binary");
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let compiled = Command::new("cc")
        .arg(crate_dir().join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("a C compiler named cc");
    assert!(
        compiled.status.success(),
        "{}",
        String::from_utf8_lossy(&compiled.stderr)
    );
    let run = Command::new(Path::new(&exe)).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0"));
}
