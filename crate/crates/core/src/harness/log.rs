//! Run log: one row per control tick, written as CSV.

use super::config::Mode;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed log: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRow {
    pub t: f64,
    /// Frame M origin, world frame.
    pub p: [f64; 3],
    pub v: [f64; 3],
    /// Roll, pitch, yaw (ZYX), rad.
    pub att: [f64; 3],
    pub omega: [f64; 3],
    pub p_des: [f64; 3],
    pub att_des: [f64; 3],
    pub omega_des: [f64; 3],
    pub theta: [f64; 3],
    pub m_hat_o: f64,
    pub m_true_o: f64,
    pub m_hat_t: f64,
    pub m_true_t: f64,
    pub c_hat: [f64; 3],
    pub c_true: [f64; 3],
    /// Inertia diagonals, kg m^2.
    pub j_hat: [f64; 3],
    pub j_true: [f64; 3],
    pub k_k: [f64; 3],
    pub torque: [f64; 3],
    pub thrust: [f64; 4],
    pub f_ext: [f64; 3],
    pub attached: bool,
    pub latched: bool,
}

const VEC_FIELDS: [(&str, usize); 16] = [
    ("p", 3),
    ("v", 3),
    ("att", 3),
    ("omega", 3),
    ("p_des", 3),
    ("att_des", 3),
    ("omega_des", 3),
    ("theta", 3),
    ("c_hat", 3),
    ("c_true", 3),
    ("j_hat", 3),
    ("j_true", 3),
    ("k_k", 3),
    ("torque", 3),
    ("thrust", 4),
    ("f_ext", 3),
];

const SCALARS: [&str; 5] = ["t", "m_hat_o", "m_true_o", "m_hat_t", "m_true_t"];
const FLAGS: [&str; 2] = ["attached", "latched"];

impl LogRow {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = SCALARS.iter().map(|s| s.to_string()).collect();
        for (name, n) in VEC_FIELDS {
            let suffix: &[&str] = if n == 4 {
                &["1", "2", "3", "4"]
            } else {
                &["x", "y", "z"]
            };
            h.extend(suffix.iter().map(|s| format!("{name}_{s}")));
        }
        h.extend(FLAGS.iter().map(|s| s.to_string()));
        h
    }

    fn vectors(&self) -> [&[f64]; 16] {
        [
            &self.p,
            &self.v,
            &self.att,
            &self.omega,
            &self.p_des,
            &self.att_des,
            &self.omega_des,
            &self.theta,
            &self.c_hat,
            &self.c_true,
            &self.j_hat,
            &self.j_true,
            &self.k_k,
            &self.torque,
            &self.thrust,
            &self.f_ext,
        ]
    }

    fn vectors_mut(&mut self) -> [&mut [f64]; 16] {
        [
            &mut self.p,
            &mut self.v,
            &mut self.att,
            &mut self.omega,
            &mut self.p_des,
            &mut self.att_des,
            &mut self.omega_des,
            &mut self.theta,
            &mut self.c_hat,
            &mut self.c_true,
            &mut self.j_hat,
            &mut self.j_true,
            &mut self.k_k,
            &mut self.torque,
            &mut self.thrust,
            &mut self.f_ext,
        ]
    }

    pub fn to_record(&self) -> Vec<String> {
        let mut out: Vec<String> = [self.t, self.m_hat_o, self.m_true_o, self.m_hat_t, self.m_true_t]
            .iter()
            .map(|x| x.to_string())
            .collect();
        for v in self.vectors() {
            out.extend(v.iter().map(|x| x.to_string()));
        }
        out.push(u8::from(self.attached).to_string());
        out.push(u8::from(self.latched).to_string());
        out
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self, LogError> {
        let expected = Self::header().len();
        if rec.len() != expected {
            return Err(LogError::Malformed(format!(
                "row has {} fields, expected {expected}",
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| LogError::Malformed(format!("bad number '{s}'")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let mut row = LogRow {
            t: vals[0],
            m_hat_o: vals[1],
            m_true_o: vals[2],
            m_hat_t: vals[3],
            m_true_t: vals[4],
            ..Default::default()
        };
        let mut k = SCALARS.len();
        for v in row.vectors_mut() {
            let n = v.len();
            v.copy_from_slice(&vals[k..k + n]);
            k += n;
        }
        row.attached = vals[k] != 0.0;
        row.latched = vals[k + 1] != 0.0;
        Ok(row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    pub name: String,
    pub mode: Option<Mode>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub meta: RunMeta,
    pub rows: Vec<LogRow>,
    pub events: Vec<Event>,
}

impl RunLog {
    pub fn push_event(&mut self, t: f64, kind: &str, detail: impl Into<String>) {
        self.events.push(Event {
            t,
            kind: kind.into(),
            detail: detail.into(),
        });
    }

    pub fn event_time(&self, kind: &str) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.t)
    }

    /// First time the grasp latch flag is set.
    pub fn latch_time(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.latched).map(|r| r.t)
    }

    /// Writes the log as CSV, preceded by a `#` metadata line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        let mode = self.meta.mode.map_or("-", |m| m.as_str());
        writeln!(w, "# scenario={} mode={} seed={}", self.meta.name, mode, self.meta.seed)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(LogRow::header())?;
        for r in &self.rows {
            out.write_record(r.to_record())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, LogError> {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let mut meta = RunMeta::default();
        if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix("# ")) {
            for kv in first.split_whitespace() {
                match kv.split_once('=') {
                    Some(("scenario", v)) => meta.name = v.into(),
                    Some(("mode", v)) => meta.mode = v.parse().ok(),
                    Some(("seed", v)) => meta.seed = v.parse().unwrap_or(0),
                    _ => {}
                }
            }
        }
        let mut rd = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != LogRow::header() {
            return Err(LogError::Malformed("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            rows.push(LogRow::from_record(&rec?)?);
        }
        let mut log = RunLog {
            meta,
            rows,
            events: Vec::new(),
        };
        if let Some(t) = log.latch_time() {
            log.push_event(t, "grasp_latch", "");
        }
        Ok(log)
    }

    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "kind", "detail"])?;
        for e in &self.events {
            out.write_record([e.t.to_string(), e.kind.clone(), e.detail.clone()])?;
        }
        out.flush()?;
        Ok(())
    }
}
