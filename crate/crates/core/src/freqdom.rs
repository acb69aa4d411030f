//! Frequency-domain analysis of the angular-rate loop.

use crate::adaptation::{update_total, PayloadEstimate};
use crate::controller::{iags_gain, Gains};
use crate::delta::{DeltaError, DeltaGeometry};
use crate::spatial::{InertialParams, Mat3, Vec3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("invalid transfer function: {0}")]
    InvalidTf(String),
    #[error("pole on the imaginary axis at {0} rad/s")]
    PoleOnAxis(f64),
    #[error("open-loop gain never crosses unity in [{0}, {1}] rad/s")]
    NoCrossover(f64, f64),
    #[error("invalid band or grid: {0}")]
    BadBand(String),
    #[error(transparent)]
    Kinematics(#[from] DeltaError),
}

/// Rational transfer function, coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn poly_eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, FreqError> {
        if num.is_empty() || den.is_empty() {
            return Err(FreqError::InvalidTf("empty coefficient list".into()));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(FreqError::InvalidTf("non-finite coefficient".into()));
        }
        if *den.last().unwrap() == 0.0 {
            return Err(FreqError::InvalidTf("denominator leading coefficient is zero".into()));
        }
        Ok(Self { num, den })
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            num: poly_mul(&self.num, &other.num),
            den: poly_mul(&self.den, &other.den),
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: self.num.iter().map(|c| c * k).collect(),
            den: self.den.clone(),
        }
    }

    /// Net number of integrators (poles at the origin minus zeros there).
    fn origin_order(&self) -> i32 {
        let lead = |c: &[f64]| c.iter().take_while(|x| **x == 0.0).count() as i32;
        lead(&self.den) - lead(&self.num)
    }

    /// Phase (rad) of the part of the response without origin poles/zeros.
    fn reduced_phase(&self, omega: f64) -> f64 {
        let strip = |c: &[f64]| c.iter().skip_while(|x| **x == 0.0).copied().collect::<Vec<_>>();
        let s = Complex64::new(0.0, omega);
        (poly_eval(&strip(&self.num), s) / poly_eval(&strip(&self.den), s)).arg()
    }
}

pub fn freq_response(tf: &RationalTF, omega: f64) -> Result<Complex64, FreqError> {
    let s = Complex64::new(0.0, omega);
    let d = poly_eval(&tf.den, s);
    if d.norm() < 1e-14 {
        return Err(FreqError::PoleOnAxis(omega));
    }
    Ok(poly_eval(&tf.num, s) / d)
}

/// Rate-loop gains for one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl AxisGains {
    pub fn from_gains(g: &Gains, axis: usize) -> Self {
        Self {
            kp: g.k_p_rate[axis],
            ki: g.k_i_rate[axis],
            kd: g.k_d_rate[axis],
        }
    }
}

/// `K_m (K_d s^2 + K_p s + K_i) k_k / (j s^2 (tau_m s + 1))`, normalized so
/// the `s^2` denominator coefficient is one.
pub fn open_loop_tf(g: &AxisGains, k_k: f64, k_m: f64, tau_m: f64, j: f64) -> Result<RationalTF, FreqError> {
    if !(j > 0.0) || !(tau_m > 0.0) {
        return Err(FreqError::InvalidTf(
            "inertia and motor time constant must be positive".into(),
        ));
    }
    let k = k_m * k_k / j;
    RationalTF::new(vec![k * g.ki, k * g.kp, k * g.kd], vec![0.0, 0.0, 1.0, tau_m])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for Band {
    fn default() -> Self {
        Self {
            lo: 1.0,
            hi: 600.0,
            points: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// `+inf` when the phase never reaches -180 deg in band.
    pub gain_margin_db: f64,
    pub phase_margin_deg: f64,
    pub gain_crossover: f64,
    pub phase_crossover: Option<f64>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// Relative tolerance of the crossover bisection.
const BISECT_TOL: f64 = 1e-10;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    while hi / lo - 1.0 > BISECT_TOL {
        let mid = (lo * hi).sqrt();
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Gain and phase margins from a log-spaced scan with bisection refinement.
/// With several gain crossovers the smallest phase margin is reported.
pub fn margins(tf: &RationalTF, band: &Band) -> Result<MarginReport, FreqError> {
    if !(band.lo > 0.0 && band.hi > band.lo && band.points >= 2) {
        return Err(FreqError::BadBand(format!("{band:?}")));
    }
    let order = tf.origin_order() as f64 * std::f64::consts::FRAC_PI_2;
    // unwrap from well below the band so the branch is fixed by the low-frequency asymptote
    let lead_lo = band.lo * 1e-3;
    let lead_points = 600;
    let mut omegas: Vec<f64> = log_grid(lead_lo, band.lo, lead_points).collect();
    omegas.pop();
    let first_in_band = omegas.len();
    omegas.extend(log_grid(band.lo, band.hi, band.points));

    let mut phases = Vec::with_capacity(omegas.len());
    let mut prev = tf.reduced_phase(omegas[0]);
    for &w in &omegas {
        let mut p = tf.reduced_phase(w);
        while p - prev > std::f64::consts::PI {
            p -= std::f64::consts::TAU;
        }
        while p - prev < -std::f64::consts::PI {
            p += std::f64::consts::TAU;
        }
        phases.push(p);
        prev = p;
    }
    let mut mags = Vec::with_capacity(omegas.len());
    for &w in &omegas {
        mags.push(freq_response(tf, w)?.norm().ln());
    }
    // continuous phase at an arbitrary frequency, anchored on a nearby grid value
    let phase_at = |w: f64, anchor: f64| {
        let mut p = tf.reduced_phase(w);
        while p - anchor > std::f64::consts::PI {
            p -= std::f64::consts::TAU;
        }
        while p - anchor < -std::f64::consts::PI {
            p += std::f64::consts::TAU;
        }
        p - order
    };
    let mag_at = |w: f64| freq_response(tf, w).map(|c| c.norm().ln()).unwrap_or(f64::NAN);

    let mut best_pm: Option<(f64, f64)> = None;
    let mut phase_cross: Option<(f64, f64)> = None;
    for i in first_in_band..omegas.len() - 1 {
        let (w0, w1) = (omegas[i], omegas[i + 1]);
        if mags[i] == 0.0 || (mags[i] > 0.0) != (mags[i + 1] > 0.0) {
            let wc = if mags[i] == 0.0 { w0 } else { bisect(w0, w1, mag_at) };
            let pm = 180.0 + phase_at(wc, phases[i]).to_degrees();
            if best_pm.is_none_or(|(p, _)| pm < p) {
                best_pm = Some((pm, wc));
            }
        }
        // -180 deg crossings on any branch (odd multiples of pi)
        let shifted = |p: f64| ((p - order) + std::f64::consts::PI) / std::f64::consts::TAU;
        let (k0, k1) = (shifted(phases[i]).floor(), shifted(phases[i + 1]).floor());
        if k0 != k1 && phase_cross.is_none() {
            let level = k0.max(k1);
            let anchor = phases[i];
            let f = |w: f64| (phase_at(w, anchor) + std::f64::consts::PI) / std::f64::consts::TAU - level;
            let wp = bisect(w0, w1, f);
            let gm = -20.0 * freq_response(tf, wp)?.norm().log10();
            phase_cross = Some((gm, wp));
        }
    }
    let (pm, wc) = best_pm.ok_or(FreqError::NoCrossover(band.lo, band.hi))?;
    Ok(MarginReport {
        gain_margin_db: phase_cross.map_or(f64::INFINITY, |p| p.0),
        phase_margin_deg: pm,
        gain_crossover: wc,
        phase_crossover: phase_cross.map(|p| p.1),
    })
}

/// Per-axis co-variation intervals for the inertia and scheduled-gain multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintyBox {
    pub j_scale: [[f64; 2]; 3],
    pub kk_scale: [[f64; 2]; 3],
}

impl Default for UncertaintyBox {
    fn default() -> Self {
        let b = [[1.0, 3.52], [1.0, 3.79], [1.0, 1.61]];
        Self {
            j_scale: b,
            kk_scale: b,
        }
    }
}

/// Rate-loop plant parameters shared by every sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePlant {
    pub j_a: Vec3,
    pub k_m: f64,
    pub tau_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub axis: usize,
    pub j_scale: f64,
    pub kk_scale: f64,
    pub report: MarginReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessSweep {
    /// Row-major per axis: J scale outer, K_k scale inner.
    pub cells: Vec<SweepCell>,
    pub worst: [SweepCell; 3],
}

fn linspace(r: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 || r[0] == r[1] {
        return vec![r[0]; n];
    }
    (0..n)
        .map(|i| r[0] + (r[1] - r[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Lower phase margin first, then lower crossover frequency.
fn worse(a: &SweepCell, b: &SweepCell) -> Ordering {
    a.report
        .phase_margin_deg
        .total_cmp(&b.report.phase_margin_deg)
        .then(a.report.gain_crossover.total_cmp(&b.report.gain_crossover))
}

pub fn robustness_sweep(
    gains: &Gains,
    plant: &RatePlant,
    ubox: &UncertaintyBox,
    grid_n: usize,
    band: &Band,
) -> Result<RobustnessSweep, FreqError> {
    if grid_n < 5 {
        return Err(FreqError::BadBand(format!("grid_n must be at least 5, got {grid_n}")));
    }
    let jobs: Vec<(usize, f64, f64)> = (0..3)
        .flat_map(|axis| {
            let js = linspace(ubox.j_scale[axis], grid_n);
            let ks = linspace(ubox.kk_scale[axis], grid_n);
            js.into_iter()
                .flat_map(move |j| ks.clone().into_iter().map(move |k| (axis, j, k)))
        })
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(axis, j_scale, kk_scale)| {
            let tf = open_loop_tf(
                &AxisGains::from_gains(gains, axis),
                kk_scale,
                plant.k_m,
                plant.tau_m,
                plant.j_a[axis] * j_scale,
            )?;
            Ok(SweepCell {
                axis,
                j_scale,
                kk_scale,
                report: margins(&tf, band)?,
            })
        })
        .collect::<Result<Vec<_>, FreqError>>()?;
    let worst = [0, 1, 2].map(|axis| {
        *cells
            .iter()
            .filter(|c| c.axis == axis)
            .min_by(|a, b| worse(a, b))
            .expect("every axis has cells")
    });
    Ok(RobustnessSweep { cells, worst })
}

/// Solid box payload used by the workspace sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPayload {
    pub mass: f64,
    /// Edge lengths along M-frame x, y, z, m.
    pub dims: [f64; 3],
    /// Gripper pad height between the end effector and the box top, m.
    pub pad: f64,
}

impl BoxPayload {
    pub fn estimate(&self) -> PayloadEstimate {
        let [a, b, c] = self.dims;
        let k = self.mass / 12.0;
        PayloadEstimate {
            mass: self.mass,
            inertia: Mat3::from_diagonal(&Vec3::new(
                k * (b * b + c * c),
                k * (a * a + c * c),
                k * (a * a + b * b),
            )),
            grasp_offset: Vec3::new(0.0, 0.0, -0.5 * c - self.pad),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkspaceSweep {
    pub max_kk: [f64; 3],
    /// Joint angles attaining each axis maximum.
    pub argmax: [[f64; 3]; 3],
    pub reachable: usize,
}

/// Scans a joint-space grid (`grid_n` per joint over the joint limits) and
/// records the largest scheduled gain per axis.
pub fn workspace_kk_sweep(
    geom: &DeltaGeometry,
    payload: &BoxPayload,
    vehicle: &InertialParams,
    grid_n: usize,
) -> Result<WorkspaceSweep, FreqError> {
    geom.validate()?;
    if grid_n < 2 {
        return Err(FreqError::BadBand("grid_n must be at least 2".into()));
    }
    let [a0, a1, a2] = geom.joint_limits.map(|r| linspace(r, grid_n));
    let est = payload.estimate();
    let mut combos = Vec::with_capacity(grid_n.pow(3));
    for &a in &a0 {
        for &b in &a1 {
            for &c in &a2 {
                combos.push([a, b, c]);
            }
        }
    }
    let gains: Vec<([f64; 3], Vec3)> = combos
        .par_iter()
        .filter_map(|theta| {
            update_total(vehicle, Some(&est), theta, geom)
                .ok()
                .map(|t| (*theta, iags_gain(&vehicle.inertia_about_com, &t.j_t_hat)))
        })
        .collect();
    if gains.is_empty() {
        return Err(FreqError::BadBand("no reachable pose on the joint grid".into()));
    }
    let mut out = WorkspaceSweep {
        max_kk: [f64::NEG_INFINITY; 3],
        argmax: [[0.0; 3]; 3],
        reachable: gains.len(),
    };
    for (theta, kk) in &gains {
        for axis in 0..3 {
            if kk[axis] > out.max_kk[axis] {
                out.max_kk[axis] = kk[axis];
                out.argmax[axis] = *theta;
            }
        }
    }
    Ok(out)
}
