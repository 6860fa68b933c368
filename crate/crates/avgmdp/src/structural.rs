//! Diameters, gain gap and the smallest model parameter.
//!
//! Hitting times count the starting step: the time to reach `s'` from `s`
//! is the index of the first visit when the walk starts at index one, so it
//! equals one plus the number of transitions taken.

use crate::chain::{hitting_steps, structure};
use crate::error::{MdpError, Result};
use crate::model::{deterministic_policies, MdpModel, Policy};
use crate::solve::{evaluate_policy, solve_optimal, ENUM_CAP, TOL_GAP};

const MAX_SSP_ITERATIONS: usize = 10_000;

/// Worst expected hitting time of a reward process, starting anywhere and
/// aiming at the worst choice of one state per recurrent class.
pub fn kernel_diameter(p: &[Vec<f64>]) -> f64 {
    let st = structure(p);
    let n = p.len();
    let mut pick = vec![0usize; st.classes.len()];
    let mut worst: f64 = 1.0;
    loop {
        let mut target = vec![false; n];
        for (c, &i) in pick.iter().enumerate() {
            target[st.classes[c][i]] = true;
        }
        let steps = hitting_steps(p, &target);
        let here = steps.iter().cloned().fold(0.0, f64::max) + 1.0;
        worst = worst.max(here);
        let mut c = 0;
        loop {
            if c == pick.len() {
                return worst;
            }
            pick[c] += 1;
            if pick[c] < st.classes[c].len() {
                break;
            }
            pick[c] = 0;
            c += 1;
        }
    }
}

pub fn policy_diameter(model: &MdpModel, policy: &Policy) -> f64 {
    kernel_diameter(&policy.markov_reward_process(model).0)
}

/// Minimal expected number of transitions to reach `target`, per state.
pub fn shortest_steps(model: &MdpModel, target: usize) -> Result<Vec<f64>> {
    let n = model.n_states();
    // breadth-first distances give an initial proper policy
    let mut dist = vec![usize::MAX; n];
    let mut choice = vec![usize::MAX; n];
    dist[target] = 0;
    choice[target] = model.pairs_of(target).start;
    let mut frontier = vec![target];
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for s in 0..n {
            if dist[s] != usize::MAX {
                continue;
            }
            if let Some(p) = model.pairs_of(s).find(|&p| model.support(p).any(|t| frontier.contains(&t))) {
                dist[s] = d;
                choice[s] = p;
                next.push(s);
            }
        }
        frontier = next;
    }
    if let Some(s) = dist.iter().position(|&x| x == usize::MAX) {
        return Err(MdpError::NotCommunicating {
            from: model.state_label(s).to_string(),
            to: model.state_label(target).to_string(),
        });
    }
    let mut target_mask = vec![false; n];
    target_mask[target] = true;
    for _ in 0..MAX_SSP_ITERATIONS {
        let (kernel, _) = Policy::deterministic(model, &choice).markov_reward_process(model);
        let v = hitting_steps(&kernel, &target_mask);
        let mut changed = false;
        for s in (0..n).filter(|&s| s != target) {
            let q = |p: usize| 1.0 + model.kernel(p).iter().zip(&v).map(|(k, x)| if *k > 0.0 { k * x } else { 0.0 }).sum::<f64>();
            let current = q(choice[s]);
            let tol = 1e-12 * (1.0 + current.abs());
            let (best, val) = model
                .pairs_of(s)
                .map(|p| (p, q(p)))
                .fold((choice[s], current), |acc, x| if x.1 < acc.1 - tol { x } else { acc });
            if best != choice[s] && val < current - tol {
                choice[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(v);
        }
    }
    Err(MdpError::NonConvergence("shortest-path policy iteration did not settle".into()))
}

/// Largest over ordered state pairs of the minimal expected hitting time.
pub fn diameter(model: &MdpModel) -> Result<f64> {
    model.require_communicating()?;
    let mut worst: f64 = 1.0;
    for t in 0..model.n_states() {
        let v = shortest_steps(model, t)?;
        for (s, x) in v.iter().enumerate() {
            if s != t {
                worst = worst.max(1.0 + x);
            }
        }
    }
    Ok(worst)
}

/// Largest policy diameter over deterministic policies.
pub fn worst_diameter(model: &MdpModel) -> Result<f64> {
    let mut worst: f64 = 1.0;
    for choice in deterministic_policies(model, ENUM_CAP)? {
        worst = worst.max(policy_diameter(model, &Policy::deterministic(model, &choice)));
    }
    Ok(worst)
}

/// Smallest sup-norm gain loss of a deterministic policy that is not gain
/// optimal; infinite when every deterministic policy is gain optimal.
pub fn gain_gap(model: &MdpModel) -> Result<f64> {
    let g_star = solve_optimal(model)?.gain;
    let mut best = f64::INFINITY;
    for choice in deterministic_policies(model, ENUM_CAP)? {
        let ev = evaluate_policy(model, &Policy::deterministic(model, &choice));
        let loss = ev.gain.iter().map(|g| g_star - g).fold(0.0, f64::max);
        if loss > TOL_GAP {
            best = best.min(loss);
        }
    }
    Ok(best)
}

/// Smallest positive kernel entry or Bernoulli reward probability.
pub fn dmin(model: &MdpModel) -> f64 {
    let mut m: f64 = 1.0;
    for p in 0..model.n_pairs() {
        for &x in model.kernel(p) {
            if x > 0.0 {
                m = m.min(x);
            }
        }
        for x in [model.reward(p), 1.0 - model.reward(p)] {
            if x > 0.0 {
                m = m.min(x);
            }
        }
    }
    m
}
