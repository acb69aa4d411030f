//! Tracking and estimation metrics over a run log.

use super::log::{LogRow, RunLog};
use std::fmt::{self, Write as _};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples in the evaluation window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("runs cannot be compared: {0}")]
    MismatchedRuns(String),
    #[error("{0} estimate never converged")]
    NeverConverged(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStat {
    pub name: &'static str,
    pub rmse: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub window: [f64; 2],
    pub samples: usize,
    /// `pos_x..z` (m), `roll/pitch/yaw` (rad), `rate_x..z` (rad/s).
    pub channels: Vec<ChannelStat>,
    /// RMS of the position error norm, m.
    pub position_rmse: f64,
    /// RMS of the Euler-angle error norm, rad.
    pub attitude_rmse: f64,
}

impl MetricReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelStat> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn rmse(&self, name: &str) -> f64 {
        self.channel(name).map_or(f64::NAN, |c| c.rmse)
    }
}

const CHANNELS: [&str; 9] = [
    "pos_x", "pos_y", "pos_z", "roll", "pitch", "yaw", "rate_x", "rate_y", "rate_z",
];

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if r == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        r
    }
}

fn errors(r: &LogRow) -> [f64; 9] {
    let mut e = [0.0; 9];
    for i in 0..3 {
        e[i] = r.p[i] - r.p_des[i];
        e[3 + i] = wrap_angle(r.att[i] - r.att_des[i]);
        e[6 + i] = r.omega[i] - r.omega_des[i];
    }
    e
}

/// Resolves a window; `end <= start` extends to the last sample.
fn window_rows(log: &RunLog, window: [f64; 2]) -> Result<(Vec<&LogRow>, [f64; 2]), MetricsError> {
    let last = log.rows.last().map_or(0.0, |r| r.t);
    let w = if window[1] > window[0] {
        window
    } else {
        [window[0], last]
    };
    let rows: Vec<&LogRow> = log.rows.iter().filter(|r| r.t >= w[0] && r.t <= w[1]).collect();
    if rows.is_empty() {
        return Err(MetricsError::EmptyWindow(w[0], w[1]));
    }
    Ok((rows, w))
}

/// Root mean square, scaled by the largest magnitude so a constant
/// channel reproduces its value exactly.
fn rms(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v / scale).powi(2), n + 1));
    scale * (sum / n as f64).sqrt()
}

pub fn compute_metrics(log: &RunLog, window: [f64; 2]) -> Result<MetricReport, MetricsError> {
    let (rows, w) = window_rows(log, window)?;
    let errs: Vec<[f64; 9]> = rows.iter().map(|r| errors(r)).collect();
    let channels = CHANNELS
        .iter()
        .enumerate()
        .map(|(i, name)| ChannelStat {
            name,
            rmse: rms(errs.iter().map(|e| e[i])),
            max_abs: errs.iter().fold(0.0f64, |m, e| m.max(e[i].abs())),
        })
        .collect();
    let norm = |e: &[f64]| e.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(MetricReport {
        window: w,
        samples: rows.len(),
        channels,
        position_rmse: rms(errs.iter().map(|e| norm(&e[0..3]))),
        attitude_rmse: rms(errs.iter().map(|e| norm(&e[3..6]))),
    })
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "window [{:.3}, {:.3}] s, {} samples",
            self.window[0], self.window[1], self.samples
        )?;
        writeln!(f, "{:<8} {:>12} {:>12}", "channel", "rmse", "max")?;
        for c in &self.channels {
            writeln!(f, "{:<8} {:>12.6} {:>12.6}", c.name, c.rmse, c.max_abs)?;
        }
        writeln!(f, "{:<8} {:>12.6}", "pos", self.position_rmse)?;
        write!(f, "{:<8} {:>12.6}", "att", self.attitude_rmse)
    }
}

/// First time after which `ok` holds for every remaining sample.
pub fn settling_time(rows: &[LogRow], ok: impl Fn(&LogRow) -> bool) -> Option<f64> {
    let last_bad = rows.iter().rposition(|r| !ok(r));
    match last_bad {
        None => rows.first().map(|r| r.t),
        Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceBounds {
    pub mass_rel: f64,
    pub moi_rel: f64,
    pub com_abs: f64,
}

impl Default for ConvergenceBounds {
    fn default() -> Self {
        Self {
            mass_rel: 0.04,
            moi_rel: 0.20,
            com_abs: 0.002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceTimes {
    pub mass: Option<f64>,
    pub com: Option<f64>,
    pub moi: Option<f64>,
}

impl ConvergenceTimes {
    pub fn require(&self) -> Result<[f64; 3], MetricsError> {
        Ok([
            self.mass.ok_or(MetricsError::NeverConverged("mass"))?,
            self.com.ok_or(MetricsError::NeverConverged("CoM"))?,
            self.moi.ok_or(MetricsError::NeverConverged("MoI"))?,
        ])
    }
}

/// Whole-system estimation errors at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationErrors {
    pub mass_abs: f64,
    pub mass_rel: f64,
    pub object_mass_rel: f64,
    pub com_abs: [f64; 3],
    pub com_rel: [f64; 3],
    pub moi_abs: [f64; 3],
    pub moi_rel: [f64; 3],
}

impl EstimationErrors {
    pub fn at(r: &LogRow) -> Self {
        let rel = |e: f64, t: f64| if t != 0.0 { e / t } else { 0.0 };
        let mut out = Self {
            mass_abs: r.m_hat_t - r.m_true_t,
            mass_rel: rel(r.m_hat_t - r.m_true_t, r.m_true_t),
            object_mass_rel: rel(r.m_hat_o - r.m_true_o, r.m_true_o),
            com_abs: [0.0; 3],
            com_rel: [0.0; 3],
            moi_abs: [0.0; 3],
            moi_rel: [0.0; 3],
        };
        for i in 0..3 {
            out.com_abs[i] = r.c_hat[i] - r.c_true[i];
            out.com_rel[i] = rel(out.com_abs[i], r.c_true[i]);
            out.moi_abs[i] = r.j_hat[i] - r.j_true[i];
            out.moi_rel[i] = rel(out.moi_abs[i], r.j_true[i]);
        }
        out
    }

    fn com_norm(&self) -> f64 {
        self.com_abs.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    fn moi_worst(&self) -> f64 {
        self.moi_rel.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }
}

/// Convergence of the whole-system mass, CoM and MoI estimates after the
/// grasp latch: each channel's time is when it enters its bound for good.
pub fn declare_convergence(log: &RunLog, bounds: &ConvergenceBounds) -> ConvergenceTimes {
    let Some(start) = log.rows.iter().position(|r| r.latched) else {
        return ConvergenceTimes {
            mass: None,
            com: None,
            moi: None,
        };
    };
    let rows = &log.rows[start..];
    ConvergenceTimes {
        mass: settling_time(rows, |r| EstimationErrors::at(r).mass_rel.abs() < bounds.mass_rel),
        com: settling_time(rows, |r| EstimationErrors::at(r).com_norm() < bounds.com_abs),
        moi: settling_time(rows, |r| EstimationErrors::at(r).moi_worst() < bounds.moi_rel),
    }
}

/// Table row with the "(↓ x%)" annotation.
pub fn format_delta(base: f64, new: f64) -> String {
    if base == 0.0 {
        return if new == 0.0 { "(0.0%)".into() } else { "(n/a)".into() };
    }
    let pct = (new - base) / base * 100.0;
    if pct.abs() < 0.05 {
        "(0.0%)".into()
    } else if pct < 0.0 {
        format!("(\u{2193}{:.1}%)", -pct)
    } else {
        format!("(\u{2191}{:.1}%)", pct)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: MetricReport,
    pub b: MetricReport,
    /// Relative change of `b` against `a`, percent, per channel then pos/att.
    pub deltas: Vec<(&'static str, f64)>,
}

/// Compares two runs of the same trajectory. `b` is reported against `a`.
pub fn compare_runs(a: &RunLog, b: &RunLog, window: [f64; 2]) -> Result<Comparison, MetricsError> {
    if a.rows.len() != b.rows.len() {
        return Err(MetricsError::MismatchedRuns(format!(
            "{} vs {} samples",
            a.rows.len(),
            b.rows.len()
        )));
    }
    if a.rows
        .iter()
        .zip(&b.rows)
        .any(|(x, y)| x.t != y.t || x.p_des != y.p_des)
    {
        return Err(MetricsError::MismatchedRuns("timestamps or setpoints differ".into()));
    }
    if !a.meta.name.is_empty() && !b.meta.name.is_empty() && a.meta.name != b.meta.name {
        return Err(MetricsError::MismatchedRuns(format!(
            "scenarios '{}' and '{}'",
            a.meta.name, b.meta.name
        )));
    }
    let ra = compute_metrics(a, window)?;
    let rb = compute_metrics(b, window)?;
    let pct = |x: f64, y: f64| if x != 0.0 { (y - x) / x * 100.0 } else { 0.0 };
    let mut deltas: Vec<(&'static str, f64)> = ra
        .channels
        .iter()
        .zip(&rb.channels)
        .map(|(x, y)| (x.name, pct(x.rmse, y.rmse)))
        .collect();
    deltas.push(("pos", pct(ra.position_rmse, rb.position_rmse)));
    deltas.push(("att", pct(ra.attitude_rmse, rb.attitude_rmse)));
    Ok(Comparison { a: ra, b: rb, deltas })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>12} {:>12} {:>12} {:>12}",
            "channel", "rmse A", "rmse B", "max A", "max B"
        )?;
        for (x, y) in self.a.channels.iter().zip(&self.b.channels) {
            writeln!(
                f,
                "{:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {}",
                x.name,
                x.rmse,
                y.rmse,
                x.max_abs,
                y.max_abs,
                format_delta(x.rmse, y.rmse)
            )?;
        }
        writeln!(
            f,
            "{:<8} {:>12.6} {:>12.6} {:>25} {}",
            "pos",
            self.a.position_rmse,
            self.b.position_rmse,
            "",
            format_delta(self.a.position_rmse, self.b.position_rmse)
        )?;
        write!(
            f,
            "{:<8} {:>12.6} {:>12.6} {:>25} {}",
            "att",
            self.a.attitude_rmse,
            self.b.attitude_rmse,
            "",
            format_delta(self.a.attitude_rmse, self.b.attitude_rmse)
        )
    }
}

/// Ablation table: one line per labelled run, deltas against the first.
pub fn ablation_table(runs: &[(String, MetricReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "mode", "pos rmse", "pos ax max", "att rmse", "att ax max", "d pos", "d att"
    );
    let Some((_, base)) = runs.first() else { return s };
    for (name, r) in runs {
        let pos_max = ["pos_x", "pos_y", "pos_z"]
            .iter()
            .filter_map(|c| r.channel(c))
            .fold(0.0f64, |m, c| m.max(c.max_abs));
        let att_max = ["roll", "pitch", "yaw"]
            .iter()
            .filter_map(|c| r.channel(c))
            .fold(0.0f64, |m, c| m.max(c.max_abs));
        let _ = writeln!(
            s,
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>10}",
            name,
            r.position_rmse,
            pos_max,
            r.attitude_rmse,
            att_max,
            format_delta(base.position_rmse, r.position_rmse),
            format_delta(base.attitude_rmse, r.attitude_rmse)
        );
    }
    s
}
