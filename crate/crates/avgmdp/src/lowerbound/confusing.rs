//! Inner minimization over confusing models.
//!
//! A confusing model agrees with the reference model on the protected pairs
//! and lets some policy reach the optimal gain. Candidates are the recurrent
//! classes of deterministic policies: on each class the rewards are raised
//! at minimal weighted cost (exact, by bisection on the dual multiplier),
//! and free kernels may additionally be tilted by mirror descent.

use std::collections::HashSet;

use serde::Serialize;

use crate::chain::{reward_process, stationary_on, structure};
use crate::error::{MdpError, Result};
use crate::lowerbound::kl::{bernoulli_kl, categorical_kl};
use crate::model::{deterministic_policies, l1, KernelSpace, MdpModel, Policy};
use crate::solve::{ENUM_CAP, TOL_GAP};

/// Rewards of raised pairs are kept inside the open unit interval.
pub const REWARD_CLAMP: f64 = 1e-9;
const BISECTION_STEPS: usize = 200;
const MIRROR_STEPS: usize = 500;

/// Recurrent class of some deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassCandidate {
    pub states: Vec<usize>,
    /// Pair played at each state of `states`.
    pub pairs: Vec<usize>,
}

/// Deduplicated recurrent classes of all deterministic policies.
#[derive(Debug, Clone, Serialize)]
pub struct Candidates {
    pub classes: Vec<ClassCandidate>,
}

impl Candidates {
    pub fn enumerate(model: &MdpModel) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut classes = Vec::new();
        for choice in deterministic_policies(model, ENUM_CAP)? {
            let (kernel, _) = Policy::deterministic(model, &choice).markov_reward_process(model);
            for states in structure(&kernel).classes {
                let pairs: Vec<usize> = states.iter().map(|&s| choice[s]).collect();
                if seen.insert(pairs.clone()) {
                    classes.push(ClassCandidate { states, pairs });
                }
            }
        }
        classes.sort_by(|a, b| a.pairs.cmp(&b.pairs));
        Ok(Self { classes })
    }

    /// Support signature; candidates only depend on kernel supports.
    pub fn signature(model: &MdpModel) -> Vec<Vec<usize>> {
        (0..model.n_pairs()).map(|p| model.support(p).collect()).collect()
    }
}

/// A (boundary) confusing model found by the inner minimization.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusingModel {
    pub class: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Replacement kernels, present only when some free kernel was tilted.
    pub kernels: Option<Vec<Vec<f64>>>,
    /// Divergence of each pair from the reference model.
    pub kl_per_pair: Vec<f64>,
    pub achieved_gain: f64,
    /// Model distance to the reference model.
    pub distance: f64,
}

impl ConfusingModel {
    pub fn weighted(&self, weights: &[f64]) -> f64 {
        self.kl_per_pair.iter().zip(weights).map(|(k, w)| if *w == 0.0 { 0.0 } else { k * w }).sum()
    }

    pub fn to_model(&self, reference: &MdpModel) -> Result<MdpModel> {
        let m = reference.with_rewards(self.rewards.clone())?;
        match &self.kernels {
            Some(k) => m.with_kernels(k.clone()),
            None => Ok(m),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InnerMin {
    pub value: f64,
    pub best: Option<ConfusingModel>,
}

enum Raise {
    /// The class already reaches the target.
    Reached,
    /// Even the largest admissible rewards fall short.
    Infeasible,
    Raised(Raised),
}

struct Raised {
    value: f64,
    x: Vec<f64>,
    lambda: f64,
}

/// Minimal-cost reward raise on one class. `free` lists the changeable
/// positions of the class; the others keep their rewards.
fn raise_rewards(nu: &[f64], r: &[f64], w: &[f64], free: &[bool], target: f64) -> Raise {
    let k = nu.len();
    let hi: Vec<f64> = r.iter().map(|&x| x.max(1.0 - REWARD_CLAMP)).collect();
    let mut x = r.to_vec();
    let unchanged: f64 = (0..k).map(|i| nu[i] * r[i]).sum();
    if unchanged >= target - TOL_GAP {
        return Raise::Reached;
    }
    let top: f64 = (0..k).map(|i| nu[i] * if free[i] { hi[i] } else { r[i] }).sum();
    if top < target - 1e-12 {
        return Raise::Infeasible;
    }
    // zero-weight pairs move for free: raise them first, as little as needed
    let cheap: f64 = (0..k).filter(|&i| free[i] && w[i] == 0.0).map(|i| nu[i] * (hi[i] - r[i])).sum();
    if unchanged + cheap >= target {
        let t = if cheap > 0.0 { ((target - unchanged) / cheap).clamp(0.0, 1.0) } else { 0.0 };
        for i in (0..k).filter(|&i| free[i] && w[i] == 0.0) {
            x[i] = r[i] + t * (hi[i] - r[i]);
        }
        return Raise::Raised(Raised { value: 0.0, x, lambda: 0.0 });
    }
    let base = unchanged + cheap;
    let at = |lambda: f64, out: &mut Vec<f64>| -> f64 {
        let mut g = base;
        for i in 0..k {
            if !free[i] || w[i] == 0.0 {
                continue;
            }
            let a = lambda * nu[i];
            let v = if a == 0.0 {
                r[i]
            } else {
                let b = w[i] - a;
                let disc = (b * b + 4.0 * a * w[i] * r[i]).sqrt();
                if b >= 0.0 {
                    if b + disc > 0.0 {
                        2.0 * w[i] * r[i] / (b + disc)
                    } else {
                        r[i]
                    }
                } else {
                    (-b + disc) / (2.0 * a)
                }
            };
            out[i] = v.clamp(r[i], hi[i]);
            g += nu[i] * (out[i] - r[i]);
        }
        g
    };
    for i in (0..k).filter(|&i| free[i] && w[i] == 0.0) {
        x[i] = hi[i];
    }
    let mut lo = 0.0;
    let mut up = 1e6;
    while at(up, &mut x) < target && up < 1e15 {
        lo = up;
        up *= 10.0;
    }
    if at(up, &mut x) < target {
        for i in (0..k).filter(|&i| free[i]) {
            x[i] = hi[i];
        }
    } else {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + up);
            if at(mid, &mut x) >= target {
                up = mid;
            } else {
                lo = mid;
            }
        }
        at(up, &mut x);
    }
    let value = (0..k).filter(|&i| free[i] && w[i] > 0.0).map(|i| w[i] * bernoulli_kl(r[i], x[i])).sum();
    Raise::Raised(Raised { value, x, lambda: up })
}

/// Reward-process view of one class with its own kernel rows.
fn class_kernel(class: &ClassCandidate, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|row| class.states.iter().map(|&t| row[t]).collect()).collect()
}

fn build_witness(
    model: &MdpModel,
    class: &ClassCandidate,
    x: &[f64],
    kernels: Option<Vec<Vec<f64>>>,
    nu: &[f64],
) -> ConfusingModel {
    let mut rewards = model.rewards().to_vec();
    for (i, &p) in class.pairs.iter().enumerate() {
        rewards[p] = x[i];
    }
    let mut kl_per_pair = vec![0.0; model.n_pairs()];
    let mut distance: f64 = 0.0;
    for p in 0..model.n_pairs() {
        let mut d = bernoulli_kl(model.reward(p), rewards[p]);
        let mut dist = (rewards[p] - model.reward(p)).abs();
        if let Some(k) = &kernels {
            d += categorical_kl(model.kernel(p), &k[p]);
            dist += l1(model.kernel(p), &k[p]);
        }
        kl_per_pair[p] = d;
        distance = distance.max(dist);
    }
    let achieved_gain = x.iter().zip(nu).map(|(a, b)| a * b).sum();
    ConfusingModel { class: class.pairs.clone(), rewards, kernels, kl_per_pair, achieved_gain, distance }
}

/// Best confusing model supported on one candidate class.
pub fn class_minimum(
    weights: &[f64],
    model: &MdpModel,
    protected: &[bool],
    class: &ClassCandidate,
    target: f64,
) -> Option<(f64, ConfusingModel)> {
    let rows: Vec<Vec<f64>> = class.pairs.iter().map(|&p| model.kernel(p).to_vec()).collect();
    let local = class_kernel(class, &rows);
    let all: Vec<usize> = (0..class.states.len()).collect();
    let nu = stationary_on(&local, &all);
    let r: Vec<f64> = class.pairs.iter().map(|&p| model.reward(p)).collect();
    let w: Vec<f64> = class.pairs.iter().map(|&p| weights[p]).collect();
    let free: Vec<bool> = class.pairs.iter().map(|&p| !protected[p]).collect();
    if !free.iter().any(|&f| f) {
        return None;
    }
    let mut best = match raise_rewards(&nu, &r, &w, &free, target) {
        Raise::Raised(rs) => Some((rs.value, build_witness(model, class, &rs.x, None, &nu))),
        Raise::Reached | Raise::Infeasible => None,
    };
    let tiltable: Vec<bool> = class
        .pairs
        .iter()
        .map(|&p| !protected[p] && model.space(p) == KernelSpace::Free && class.states.len() > 1)
        .collect();
    if tiltable.iter().any(|&t| t) {
        if let Some(tilted) = tilt_kernels(model, class, &rows, &r, &w, &free, &tiltable, target) {
            let better = match &best {
                Some((v, _)) => tilted.0 < *v - 1e-12,
                None => true,
            };
            if better {
                best = Some(tilted);
            }
        }
    }
    best
}

/// Mirror-descent refinement over the free kernels of a class: alternate an
/// exponentiated step on the Lagrangian with an exact reward re-solve, and
/// keep the best feasible point.
#[allow(clippy::too_many_arguments)]
fn tilt_kernels(
    model: &MdpModel,
    class: &ClassCandidate,
    rows: &[Vec<f64>],
    r: &[f64],
    w: &[f64],
    free: &[bool],
    tiltable: &[bool],
    target: f64,
) -> Option<(f64, ConfusingModel)> {
    let k = class.states.len();
    let all: Vec<usize> = (0..k).collect();
    let original = class_kernel(class, rows);
    let mut current: Vec<Vec<f64>> = original
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if tiltable[i] {
                row.iter().map(|x| 0.999 * x + 0.001 / k as f64).collect()
            } else {
                row.clone()
            }
        })
        .collect();
    // (value, class kernel, rewards, stationary law)
    type Point = (f64, Vec<Vec<f64>>, Vec<f64>, Vec<f64>);
    let mut best: Option<Point> = None;
    for step in 1..=MIRROR_STEPS {
        let nu = stationary_on(&current, &all);
        let kl: f64 = (0..k).filter(|&i| tiltable[i]).map(|i| w[i] * categorical_kl(&original[i], &current[i])).sum();
        // with infeasible rewards, climb the gain at the largest rewards
        let (x, lambda, fit) = match raise_rewards(&nu, r, w, free, target) {
            Raise::Reached => {
                if best.as_ref().is_none_or(|b| kl < b.0) {
                    best = Some((kl, current.clone(), r.to_vec(), nu.clone()));
                }
                break;
            }
            Raise::Infeasible => {
                let top: Vec<f64> = (0..k).map(|i| if free[i] { r[i].max(1.0 - REWARD_CLAMP) } else { r[i] }).collect();
                (top, 1.0, 0.0)
            }
            Raise::Raised(raised) => {
                let total = raised.value + kl;
                if best.as_ref().is_none_or(|b| total < b.0) {
                    best = Some((total, current.clone(), raised.x.clone(), nu.clone()));
                }
                (raised.x, raised.lambda, 1.0)
            }
        };
        let h = reward_process(&current, &x).bias;
        let eta = 0.1 / (step as f64).sqrt();
        for i in (0..k).filter(|&i| tiltable[i]) {
            let grad: Vec<f64> = (0..k)
                .map(|j| {
                    let pull = if original[i][j] > 0.0 { -w[i] * original[i][j] / current[i][j] } else { 0.0 };
                    fit * pull - lambda * nu[i] * h[j]
                })
                .collect();
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if scale == 0.0 {
                continue;
            }
            let mut row: Vec<f64> = (0..k).map(|j| current[i][j] * (-eta * grad[j] / scale).exp()).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x = (*x / s).max(1e-300));
            current[i] = row;
        }
    }
    let (value, local, x, nu) = best?;
    let mut kernels = model.kernels().to_vec();
    for (i, &p) in class.pairs.iter().enumerate() {
        if tiltable[i] {
            let mut row = vec![0.0; model.n_states()];
            for (j, &t) in class.states.iter().enumerate() {
                row[t] = local[i][j];
            }
            kernels[p] = row;
        }
    }
    Some((value, build_witness(model, class, &x, Some(kernels), &nu)))
}

/// Infimum of the weighted divergence over confusing models, with the
/// minimizing boundary model.
pub fn confusing_weighted_kl_min(
    weights: &[f64],
    model: &MdpModel,
    protected: &[bool],
    candidates: &Candidates,
    target: f64,
) -> Result<InnerMin> {
    if weights.iter().any(|&w| w < 0.0 || w.is_nan()) {
        return Err(MdpError::Precondition("weights must be non-negative".into()));
    }
    let mut out = InnerMin { value: f64::INFINITY, best: None };
    for class in &candidates.classes {
        if let Some((v, m)) = class_minimum(weights, model, protected, class, target) {
            if v < out.value {
                out = InnerMin { value: v, best: Some(m) };
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::{classify_pairs, solve_optimal};
    use crate::zoo;

    fn setup(m: &MdpModel) -> (Vec<bool>, Candidates, f64) {
        let sol = solve_optimal(m).unwrap();
        let protected = classify_pairs(m, &sol).optimal;
        (protected, Candidates::enumerate(m).unwrap(), sol.gain)
    }

    #[test]
    fn loop_raise_costs_kl() {
        let m = zoo::regret_discontinuity(0.0);
        let (protected, cands, g) = setup(&m);
        let res = confusing_weighted_kl_min(&[1.0; 4], &m, &protected, &cands, g).unwrap();
        assert!((res.value - bernoulli_kl(0.1, 0.5)).abs() < 1e-9);
        let best = res.best.unwrap();
        assert_eq!(best.class, vec![m.pair_by_label("1,§").unwrap()]);
        assert!(best.achieved_gain >= g - TOL_GAP);
    }

    #[test]
    fn value_is_linear_in_weights() {
        let m = zoo::regret_discontinuity(0.05);
        let (protected, cands, g) = setup(&m);
        let w = [0.3, 1.2, 0.7, 0.4];
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let a = confusing_weighted_kl_min(&w, &m, &protected, &cands, g).unwrap().value;
        let b = confusing_weighted_kl_min(&w2, &m, &protected, &cands, g).unwrap().value;
        assert!((b - 2.0 * a).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn single_action_has_no_confusing_model() {
        let m = crate::MdpBuilder::new("cycle", &["1", "2"]).det(0, "a", 1, 0.2).det(1, "b", 0, 0.7).build().unwrap();
        let (protected, cands, g) = setup(&m);
        let res = confusing_weighted_kl_min(&[1.0, 1.0], &m, &protected, &cands, g).unwrap();
        assert!(res.value.is_infinite() && res.best.is_none());
    }

    #[test]
    fn zero_weights_cost_nothing() {
        let m = zoo::regret_discontinuity(0.0);
        let (protected, cands, g) = setup(&m);
        let res = confusing_weighted_kl_min(&[0.0; 4], &m, &protected, &cands, g).unwrap();
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn negative_weights_rejected() {
        let m = zoo::regret_discontinuity(0.0);
        let (protected, cands, g) = setup(&m);
        assert!(confusing_weighted_kl_min(&[-1.0, 0.0, 0.0, 0.0], &m, &protected, &cands, g).is_err());
    }
}
