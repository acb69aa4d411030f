//! Minimum-jerk waypoint interpolation.

use super::config::{Oscillation, Waypoint};
use crate::spatial::Vec3;

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
}

/// Holds the first waypoint before it and the last one after it; between
/// waypoints each segment is a quintic with zero boundary velocity and
/// acceleration.
pub fn sample(waypoints: &[Waypoint], t: f64) -> Sample {
    let hold = |w: &Waypoint| Sample {
        p: Vec3::from(w.p),
        v: Vec3::zeros(),
        a: Vec3::zeros(),
    };
    let first = &waypoints[0];
    if t <= first.t || waypoints.len() == 1 {
        return hold(first);
    }
    let Some(i) = waypoints.windows(2).position(|w| t < w[1].t) else {
        return hold(waypoints.last().unwrap());
    };
    let (a, b) = (&waypoints[i], &waypoints[i + 1]);
    let span = b.t - a.t;
    let s = (t - a.t) / span;
    let (s2, s3) = (s * s, s * s * s);
    let pos = 10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2;
    let vel = (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / span;
    let acc = (60.0 * s - 180.0 * s2 + 120.0 * s3) / (span * span);
    let d = Vec3::from(b.p) - Vec3::from(a.p);
    Sample {
        p: Vec3::from(a.p) + d * pos,
        v: d * vel,
        a: d * acc,
    }
}

/// Adds the oscillation (if active at `t`) to a sample.
pub fn add_oscillation(base: Sample, osc: Option<&Oscillation>, t: f64) -> Sample {
    let Some(o) = osc else { return base };
    let tau = t - o.start;
    if tau < 0.0 || tau > o.cycles / o.frequency {
        return base;
    }
    let axis = Vec3::from(o.axis).normalize();
    let w = 2.0 * std::f64::consts::PI * o.frequency;
    Sample {
        p: base.p + axis * (o.amplitude * (w * tau).sin()),
        v: base.v + axis * (o.amplitude * w * (w * tau).cos()),
        a: base.a - axis * (o.amplitude * w * w * (w * tau).sin()),
    }
}
