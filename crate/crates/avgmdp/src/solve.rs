//! Policy evaluation, bias-optimal solutions and pair classification.

use std::cmp::Ordering;

use serde::Serialize;

use crate::chain::{reward_process, strongly_connected, RewardProcess};
use crate::error::{MdpError, Result};
use crate::model::{MdpModel, Policy};

/// Gaps at or below this are treated as zero.
pub const TOL_GAP: f64 = 1e-8;
/// Span tolerance of relative value iteration.
pub const TOL_SOLVE: f64 = 1e-10;
/// Cap on deterministic policy enumeration.
pub const ENUM_CAP: usize = 20_000;

const MAX_POLICY_ITERATIONS: usize = 10_000;
const MAX_VALUE_ITERATIONS: usize = 1_000_000;

/// Recurrent class of a policy, described on pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrentClass {
    pub states: Vec<usize>,
    pub pairs: Vec<usize>,
    /// Stationary probability of each pair in `pairs`.
    pub pair_measure: Vec<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub gaps: Vec<f64>,
    pub classes: Vec<RecurrentClass>,
    pub transient: Vec<usize>,
    pub process: RewardProcess,
}

impl PolicyEvaluation {
    pub fn is_unichain(&self) -> bool {
        self.classes.len() == 1
    }
}

/// Gap of every pair against a (gain, bias) couple.
pub fn gaps_against(model: &MdpModel, gain: &[f64], bias: &[f64]) -> Vec<f64> {
    (0..model.n_pairs())
        .map(|p| {
            let s = model.state_of(p);
            let next: f64 = model.kernel(p).iter().zip(bias).map(|(k, h)| k * h).sum();
            gain[s] + bias[s] - model.reward(p) - next
        })
        .collect()
}

pub fn evaluate_policy(model: &MdpModel, policy: &Policy) -> PolicyEvaluation {
    let (kernel, reward) = policy.markov_reward_process(model);
    let process = reward_process(&kernel, &reward);
    let gaps = gaps_against(model, &process.gain, &process.bias);
    let classes = process
        .structure
        .classes
        .iter()
        .enumerate()
        .map(|(c, states)| {
            let mut pairs = Vec::new();
            let mut pair_measure = Vec::new();
            for (i, &s) in states.iter().enumerate() {
                for p in model.pairs_of(s) {
                    if policy.prob(p) > 0.0 {
                        pairs.push(p);
                        pair_measure.push(process.stationary[c][i] * policy.prob(p));
                    }
                }
            }
            RecurrentClass { states: states.clone(), pairs, pair_measure, gain: process.class_gain[c] }
        })
        .collect();
    PolicyEvaluation {
        gain: process.gain.clone(),
        bias: process.bias.clone(),
        gaps,
        classes,
        transient: process.structure.transient.clone(),
        process,
    }
}

/// Gain-optimal solution with the maximal (bias-optimal) bias.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalSolution {
    pub gain: f64,
    /// Optimal gain per state; constant for communicating models.
    pub gains: Vec<f64>,
    pub bias: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Chosen pair per state of a bias-optimal deterministic policy.
    pub policy: Vec<usize>,
    pub iterations: usize,
}

fn tol_for(v: &[f64]) -> f64 {
    1e-10 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

fn lex_cmp(a: &[f64; 3], b: &[f64; 3], tol: &[f64; 3]) -> Ordering {
    for i in 0..3 {
        if a[i] > b[i] + tol[i] {
            return Ordering::Greater;
        }
        if a[i] < b[i] - tol[i] {
            return Ordering::Less;
        }
    }
    Ordering::Equal
}

/// Bias-optimal policy iteration for arbitrary (possibly multichain) models.
///
/// Improvements compare actions lexicographically on the gain, the Bellman
/// value and the second-order bias, keeping the current action on ties.
pub fn solve_multichain(model: &MdpModel) -> Result<OptimalSolution> {
    let n = model.n_states();
    let mut choice: Vec<usize> = (0..n).map(|s| model.pairs_of(s).start).collect();
    for it in 0..MAX_POLICY_ITERATIONS {
        let policy = Policy::deterministic(model, &choice);
        let (kernel, reward) = policy.markov_reward_process(model);
        let first = reward_process(&kernel, &reward);
        let minus_h: Vec<f64> = first.bias.iter().map(|h| -h).collect();
        let second = reward_process(&kernel, &minus_h);
        let (g, h, w) = (&first.gain, &first.bias, &second.bias);
        let tol = [tol_for(g), tol_for(h), tol_for(w)];
        let score = |p: usize| -> [f64; 3] {
            let k = model.kernel(p);
            let dot = |v: &[f64]| k.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            [dot(g), model.reward(p) + dot(h), dot(w)]
        };
        let mut changed = false;
        for s in 0..n {
            let current = score(choice[s]);
            let mut best = model.pairs_of(s).start;
            let mut best_score = score(best);
            for p in model.pairs_of(s).skip(1) {
                let sc = score(p);
                if lex_cmp(&sc, &best_score, &tol) == Ordering::Greater {
                    best = p;
                    best_score = sc;
                }
            }
            if best != choice[s] && lex_cmp(&best_score, &current, &tol) == Ordering::Greater {
                choice[s] = best;
                changed = true;
            }
        }
        if !changed {
            let gaps = gaps_against(model, g, h);
            let gain = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Ok(OptimalSolution {
                gain,
                gains: g.clone(),
                bias: h.clone(),
                gaps,
                policy: choice,
                iterations: it + 1,
            });
        }
    }
    Err(MdpError::NonConvergence(format!("policy iteration exceeded {MAX_POLICY_ITERATIONS} iterations")))
}

/// Optimal gain, bias-optimal bias and gaps of a communicating model.
pub fn solve_optimal(model: &MdpModel) -> Result<OptimalSolution> {
    model.require_communicating()?;
    let sol = solve_multichain(model)?;
    let spread = crate::model::span(&sol.gains);
    if spread > 1e-9 {
        return Err(MdpError::NonConvergence(format!("optimal gain is not constant (span {spread:e})")));
    }
    Ok(sol)
}

/// Relative value iteration on the aperiodic transform `tau*I + (1-tau)*P`.
///
/// Returns the optimal gain and a solution of the Bellman equation (not
/// necessarily the bias-optimal one).
pub fn relative_value_iteration(model: &MdpModel, tol: f64) -> Result<(f64, Vec<f64>)> {
    model.require_communicating()?;
    let tau = 0.5;
    let n = model.n_states();
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_VALUE_ITERATIONS {
        for (s, out) in next.iter_mut().enumerate() {
            *out = model
                .pairs_of(s)
                .map(|p| {
                    let kh: f64 = model.kernel(p).iter().zip(&h).map(|(k, v)| k * v).sum();
                    model.reward(p) + tau * h[s] + (1.0 - tau) * kh
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let diff: Vec<f64> = next.iter().zip(&h).map(|(a, b)| a - b).collect();
        let lo = diff.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let anchor = next[0];
        for (x, y) in h.iter_mut().zip(&next) {
            *x = y - anchor;
        }
        if hi - lo < tol {
            let bias = h.iter().map(|x| (1.0 - tau) * x).collect();
            return Ok((0.5 * (hi + lo), bias));
        }
    }
    Err(MdpError::NonConvergence(format!("relative value iteration exceeded {MAX_VALUE_ITERATIONS} iterations")))
}

/// Closed communicating component made of pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub states: Vec<usize>,
    pub pairs: Vec<usize>,
}

/// Maximal closed communicating components of the sub-model made of the
/// allowed pairs.
pub fn closed_components(model: &MdpModel, allowed: &[bool]) -> Vec<Component> {
    let n = model.n_states();
    let mut alive = allowed.to_vec();
    let mut comp_of: Vec<Option<usize>> = vec![None; n];
    loop {
        // drop pairs leaving the current candidate sets until nothing changes
        let mut has_pair = vec![false; n];
        for p in 0..model.n_pairs() {
            if alive[p] {
                has_pair[model.state_of(p)] = true;
            }
        }
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                let mut out: Vec<usize> = model
                    .pairs_of(s)
                    .filter(|&p| alive[p])
                    .flat_map(|p| model.support(p).collect::<Vec<_>>())
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        let comps = strongly_connected(&succ);
        for (c, comp) in comps.iter().enumerate() {
            for &s in comp {
                comp_of[s] = Some(c);
            }
        }
        let mut changed = false;
        for p in 0..model.n_pairs() {
            if !alive[p] {
                continue;
            }
            let c = comp_of[model.state_of(p)];
            if model.support(p).any(|t| !has_pair[t] || comp_of[t] != c) {
                alive[p] = false;
                changed = true;
            }
        }
        if !changed {
            let mut out: Vec<Component> = comps
                .into_iter()
                .filter_map(|states| {
                    let pairs: Vec<usize> = states.iter().flat_map(|&s| model.pairs_of(s)).filter(|&p| alive[p]).collect();
                    (!pairs.is_empty()).then_some(Component { states, pairs })
                })
                .collect();
            out.sort_by_key(|c| c.pairs[0]);
            return out;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairClassification {
    pub weakly_optimal: Vec<bool>,
    pub optimal: Vec<bool>,
    pub components: Vec<Component>,
}

impl PairClassification {
    pub fn optimal_pairs(&self) -> Vec<usize> {
        (0..self.optimal.len()).filter(|&p| self.optimal[p]).collect()
    }
}

/// Weakly optimal pairs have zero gap; optimal pairs are those recurrent
/// under some gain-optimal policy, i.e. the closed communicating components
/// of the weakly optimal sub-model.
pub fn classify_pairs(model: &MdpModel, sol: &OptimalSolution) -> PairClassification {
    let weakly_optimal: Vec<bool> = sol.gaps.iter().map(|&d| d <= TOL_GAP).collect();
    let components = closed_components(model, &weakly_optimal);
    let mut optimal = vec![false; model.n_pairs()];
    for c in &components {
        for &p in &c.pairs {
            optimal[p] = true;
        }
    }
    PairClassification { weakly_optimal, optimal, components }
}

pub fn optimal_pairs(model: &MdpModel) -> Result<Vec<usize>> {
    let sol = solve_optimal(model)?;
    Ok(classify_pairs(model, &sol).optimal_pairs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn regret_discontinuity_solution() {
        let m = zoo::regret_discontinuity(0.0);
        let sol = solve_optimal(&m).unwrap();
        assert!((sol.gain - 0.5).abs() < 1e-12);
        let cls = classify_pairs(&m, &sol);
        let names: Vec<String> = cls.optimal_pairs().iter().map(|&p| m.pair_label(crate::model::PairId(p))).collect();
        assert_eq!(names, vec!["1,*", "2,†", "2,‡"]);
        assert_eq!(cls.components.len(), 1);
        assert!((sol.gaps[m.pair_by_label("1,§").unwrap()] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn relative_value_iteration_matches_policy_iteration() {
        for theta in [0.0, 0.1, 0.3] {
            let m = zoo::discontinuous_gaps(theta);
            let (g, _) = relative_value_iteration(&m, TOL_SOLVE).unwrap();
            let sol = solve_optimal(&m).unwrap();
            assert!((g - sol.gain).abs() < 1e-9);
        }
    }

    #[test]
    fn leveling_figure_gaps() {
        let m = zoo::leveling_perturbed();
        let sol = solve_optimal(&m).unwrap();
        assert!((sol.gain - 0.52).abs() < 1e-12);
        let gap = |l: &str| sol.gaps[m.pair_by_label(l).unwrap()];
        assert!((gap("2,loop") - 0.03).abs() < 1e-12);
        assert!((gap("1,go") - 0.33).abs() < 1e-12);
        assert!(gap("2,back").abs() < 1e-12);
    }

    #[test]
    fn not_communicating_is_rejected() {
        let m = crate::model::MdpBuilder::new("split", &["a", "b"])
            .det(0, "stay", 0, 0.5)
            .det(1, "stay", 1, 0.5)
            .build()
            .unwrap();
        assert!(matches!(solve_optimal(&m), Err(MdpError::NotCommunicating { .. })));
    }

    #[test]
    fn single_state_single_action() {
        let m = crate::model::MdpBuilder::new("one", &["s"]).det(0, "a", 0, 0.3).build().unwrap();
        let sol = solve_optimal(&m).unwrap();
        assert!((sol.gain - 0.3).abs() < 1e-15);
        assert_eq!(sol.gaps, vec![0.0]);
    }
}
