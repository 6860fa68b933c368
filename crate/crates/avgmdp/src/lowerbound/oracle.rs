//! Brute-force upper bound on the regret lower bound: search a grid of fully
//! randomized policies and take the best regret-to-information ratio.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MdpError, Result};
use crate::lowerbound::cutting::BoundContext;
use crate::measures::policy_stationary_measure;
use crate::model::{MdpModel, Policy};

/// Largest number of grid policies evaluated.
pub const ORACLE_CAP: usize = 200_000;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub resolution: f64,
    pub grid_size: usize,
    pub best_policy: Vec<f64>,
}

/// Compositions of `m` into `k` positive parts.
fn compositions(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return if m >= 1 { vec![vec![m]] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in 1..m {
        for mut rest in compositions(m - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of grid policies at resolution `1/m`.
pub fn grid_size(model: &MdpModel, m: usize) -> f64 {
    (0..model.n_states())
        .map(|s| {
            let k = model.n_actions(s);
            if m < k {
                0.0
            } else {
                binomial(m - 1, k - 1)
            }
        })
        .product()
}

/// Finest resolution `1/m` whose grid fits under `cap`.
pub fn finest_resolution(model: &MdpModel, cap: usize) -> f64 {
    let mut m = model.max_actions().max(1);
    while grid_size(model, m + 1) <= cap as f64 && m < 1000 {
        m += 1;
    }
    1.0 / m as f64
}

pub fn policywise_oracle(model: &MdpModel, resolution: f64) -> Result<OracleResult> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(MdpError::InvalidConfig("grid resolution must lie in (0, 1]".into()));
    }
    let m = (1.0 / resolution + 1e-9).floor() as usize;
    let size = grid_size(model, m);
    if size > ORACLE_CAP as f64 {
        return Err(MdpError::ResourceLimit(format!("policy grid has {size:.0} points, cap is {ORACLE_CAP}")));
    }
    if size == 0.0 {
        return Err(MdpError::InvalidConfig("resolution too coarse for the number of actions".into()));
    }
    let ctx = BoundContext::new(model)?;
    let protected = ctx.protected(0.0)?;
    let per_state: Vec<Vec<Vec<usize>>> = (0..model.n_states()).map(|s| compositions(m, model.n_actions(s))).collect();
    let total = size as usize;
    let g_star = ctx.solution.gain;
    let eval = |index: usize| -> (f64, usize) {
        let mut rest = index;
        let mut probs = vec![0.0; model.n_pairs()];
        for (s, options) in per_state.iter().enumerate() {
            let pick = &options[rest % options.len()];
            rest /= options.len();
            for (a, &c) in pick.iter().enumerate() {
                probs[model.pair(s, a)] = c as f64 / m as f64;
            }
        }
        let policy = Policy::from_probs(model, probs).expect("grid rows are distributions");
        let Ok(mu) = policy_stationary_measure(model, &policy) else {
            return (f64::INFINITY, index);
        };
        let gain: f64 = mu.iter().enumerate().map(|(p, w)| w * model.reward(p)).sum();
        let regret = (g_star - gain).max(0.0);
        let info = ctx.information(&mu, &protected).map(|r| r.value).unwrap_or(0.0);
        let ratio = if info.is_infinite() {
            0.0
        } else if info <= 0.0 {
            f64::INFINITY
        } else {
            regret / info
        };
        (ratio, index)
    };
    let (value, best) = (0..total)
        .into_par_iter()
        .map(eval)
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut best_policy = vec![0.0; model.n_pairs()];
    if best != usize::MAX {
        let mut rest = best;
        for (s, options) in per_state.iter().enumerate() {
            let pick = &options[rest % options.len()];
            rest /= options.len();
            for (a, &c) in pick.iter().enumerate() {
                best_policy[model.pair(s, a)] = c as f64 / m as f64;
            }
        }
    }
    Ok(OracleResult { value, resolution: 1.0 / m as f64, grid_size: total, best_policy })
}
