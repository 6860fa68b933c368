//! Regularization schedules and their floored (dyadic) version.

use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};

/// One decreasing profile `x ↦ value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// `scale / max(1, ln ln x)`
    LogLog(f64),
    /// `scale / max(1, ln x)`
    Log(f64),
    Constant(f64),
    /// Piecewise constant: `[x_from, value]` rows sorted by `x_from`.
    Table(Vec<(f64, f64)>),
}

fn loglog(x: f64) -> f64 {
    if x > 1.0 {
        let l = x.ln();
        if l > 0.0 {
            return l.ln();
        }
    }
    f64::NEG_INFINITY
}

impl Profile {
    pub fn at(&self, x: f64) -> f64 {
        match self {
            Profile::LogLog(c) => c / loglog(x).max(1.0),
            Profile::Log(c) => c / (if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).max(1.0),
            Profile::Constant(c) => *c,
            Profile::Table(rows) => rows.iter().take_while(|(from, _)| *from <= x).last().or(rows.first()).map(|r| r.1).unwrap_or(0.0),
        }
    }
}

/// The four regularizers of the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub flat: Profile,
    pub test: Profile,
    pub unif: Profile,
    pub reg: Profile,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            flat: Profile::LogLog(1.0),
            test: Profile::LogLog(1.0),
            unif: Profile::LogLog(1.0),
            reg: Profile::Log(1.0),
        }
    }
}

/// Regularizer values in force at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regularizers {
    pub flat: f64,
    pub test: f64,
    pub unif: f64,
    pub reg: f64,
}

/// `2^⌊log₂ m⌋`, with `m = 0` treated as one.
pub fn dyadic_floor(m: u64) -> u64 {
    if m <= 1 {
        1
    } else {
        1u64 << (63 - m.leading_zeros())
    }
}

impl Schedule {
    /// Reads `"default"` or an object overriding some profiles.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        match value {
            serde_json::Value::Null => Ok(Self::default()),
            serde_json::Value::String(s) if s == "default" => Ok(Self::default()),
            serde_json::Value::Object(obj) => {
                let mut out = Self::default();
                for (k, v) in obj {
                    let p: Profile = serde_json::from_value(v.clone())
                        .map_err(|e| MdpError::InvalidConfig(format!("schedule entry {k}: {e}")))?;
                    match k.as_str() {
                        "flat" => out.flat = p,
                        "test" => out.test = p,
                        "unif" => out.unif = p,
                        "reg" => out.reg = p,
                        other => return Err(MdpError::InvalidConfig(format!("unknown schedule entry {other}"))),
                    }
                }
                Ok(out)
            }
            other => Err(MdpError::InvalidConfig(format!("schedule must be \"default\" or an object, got {other}"))),
        }
    }

    pub fn raw(&self, t: f64, m: f64) -> Regularizers {
        Regularizers { flat: self.flat.at(t), test: self.test.at(t), unif: self.unif.at(m), reg: self.reg.at(m) }
    }

    /// Values at time `t` with `m` exploration steps so far; the
    /// measure-side regularizers only change at powers of two of `m`.
    pub fn floored(&self, t: u64, m: u64) -> Regularizers {
        self.raw(t as f64, dyadic_floor(m) as f64)
    }
}

/// One line of a schedule validation report.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleCheck {
    pub name: &'static str,
    pub exact: bool,
    pub passed: bool,
    pub detail: String,
}

/// Checks monotonicity and the uniformity/regularization ratio exactly on
/// the grid `1, 2, 4, ..., 2^max_log2`; the asymptotic properties are only
/// spot-checked between the last two grid points.
pub fn validate_schedule(s: &Schedule, max_log2: u32) -> Vec<ScheduleCheck> {
    let grid: Vec<f64> = (0..=max_log2).map(|k| 2f64.powi(k as i32)).collect();
    let mut out = Vec::new();
    let profiles = [("flat", &s.flat), ("test", &s.test), ("unif", &s.unif), ("reg", &s.reg)];
    let mut worst = None;
    for (name, p) in profiles {
        for w in grid.windows(2) {
            if p.at(w[1]) > p.at(w[0]) {
                worst.get_or_insert(format!("{name} increases between {} and {}", w[0], w[1]));
            }
        }
    }
    out.push(ScheduleCheck {
        name: "A1 non-increasing",
        exact: true,
        passed: worst.is_none(),
        detail: worst.unwrap_or_else(|| "all profiles non-increasing on the grid".into()),
    });
    let ratio = |m: f64| s.unif.at(m) / s.reg.at(m);
    let bad = grid.windows(2).find(|w| ratio(w[1]) > ratio(w[0]) * (1.0 + 1e-12));
    out.push(ScheduleCheck {
        name: "A5 unif/reg decreasing",
        exact: true,
        passed: bad.is_none(),
        detail: match bad {
            Some(w) => format!("ratio rises from {:.4} at {} to {:.4} at {}", ratio(w[0]), w[0], ratio(w[1]), w[1]),
            None => "ratio non-increasing on the grid".into(),
        },
    });
    let (a, b) = (grid[grid.len().saturating_sub(2)], grid[grid.len() - 1]);
    let spot = |name: &'static str, f: &dyn Fn(f64) -> f64| ScheduleCheck {
        name,
        exact: false,
        passed: f(b) >= f(a),
        detail: format!("spot check at {a} and {b}: {:.4e} -> {:.4e}", f(a), f(b)),
    };
    out.push(ScheduleCheck {
        name: "A0 vanishing",
        exact: false,
        passed: profiles.iter().all(|(_, p)| p.at(b) < p.at(1.0) || p.at(b) == 0.0),
        detail: "every profile below its initial value at the grid end".into(),
    });
    out.push(spot("A2 flat slower than powers of log", &|x| s.flat.at(x) * x.ln().max(1.0).sqrt()));
    out.push(spot("A3 reg slower than powers", &|x| s.reg.at(x) * x.sqrt()));
    out.push(spot("A4 unif slower than powers of log", &|x| s.unif.at(x) * x.ln().max(1.0).sqrt()));
    out.push(spot("A6 growth of reg*unif*m", &|x| s.reg.at(x) * s.unif.at(x) * x));
    out.push(spot("A7 test slower than loglog/log", &|x| s.test.at(x) * x.ln().max(1.0) / loglog(x).max(1.0)));
    out
}

/// Skeleton threshold `(ln t)²`.
pub fn skeleton_threshold(t: u64) -> f64 {
    let l = (t.max(1) as f64).ln();
    l * l
}

pub fn skeleton(counts: &[u64], t: u64) -> Vec<bool> {
    skeleton_at_log(counts, (t.max(1) as f64).ln())
}

/// Skeleton for a time given by its logarithm, so that times beyond `u64`
/// can be probed.
pub fn skeleton_at_log(counts: &[u64], log_t: f64) -> Vec<bool> {
    counts.iter().map(|&n| n as f64 >= log_t * log_t).collect()
}
