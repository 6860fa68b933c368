//! Invariant measures on pairs: flow conservation, uniformity, induced
//! policies, covering measures and unichain decompositions.

use serde::Serialize;

use crate::chain::{stationary_on, structure};
use crate::error::{MdpError, Result};
use crate::model::{MdpModel, Policy};
use crate::qp::QuadraticProgram;
use crate::structural::diameter;

/// Flow-conservation tolerance, relative to the total mass.
pub const TOL_FLOW: f64 = 1e-9;

/// Outflow minus inflow at each state.
pub fn flow_residual(model: &MdpModel, mu: &[f64]) -> Vec<f64> {
    let mut res = vec![0.0; model.n_states()];
    for p in 0..model.n_pairs() {
        res[model.state_of(p)] += mu[p];
        for (t, k) in model.kernel(p).iter().enumerate() {
            res[t] -= mu[p] * k;
        }
    }
    res
}

pub fn is_invariant(model: &MdpModel, mu: &[f64]) -> bool {
    let mass: f64 = mu.iter().sum();
    let tol = TOL_FLOW * mass.max(1.0);
    mu.iter().all(|&x| x >= -tol) && flow_residual(model, mu).iter().all(|r| r.abs() <= tol)
}

/// Every pair carries at least an `eps` share of its state's mass.
pub fn is_uniform(model: &MdpModel, mu: &[f64], eps: f64) -> bool {
    (0..model.n_states()).all(|s| {
        let total: f64 = model.pairs_of(s).map(|p| mu[p]).sum();
        model.pairs_of(s).all(|p| mu[p] >= eps * total - TOL_FLOW * total.max(1.0))
    })
}

/// Policy proportional to the measure at each state, uniform where the
/// measure vanishes.
pub fn induced_policy(model: &MdpModel, mu: &[f64]) -> Policy {
    let mut probs = vec![0.0; model.n_pairs()];
    for s in 0..model.n_states() {
        let range = model.pairs_of(s);
        let total: f64 = range.clone().map(|p| mu[p].max(0.0)).sum();
        for p in range.clone() {
            probs[p] = if total > 0.0 { mu[p].max(0.0) / total } else { 1.0 / range.len() as f64 };
        }
    }
    Policy::from_probs(model, probs).expect("induced rows are distributions")
}

/// Stationary probability of each pair under a unichain policy.
pub fn policy_stationary_measure(model: &MdpModel, policy: &Policy) -> Result<Vec<f64>> {
    let (kernel, _) = policy.markov_reward_process(model);
    let st = structure(&kernel);
    if !st.is_unichain() {
        return Err(MdpError::Precondition(format!(
            "policy has {} recurrent classes; its stationary measure is not unique",
            st.classes.len()
        )));
    }
    let class = &st.classes[0];
    let nu = stationary_on(&kernel, class);
    let mut mu = vec![0.0; model.n_pairs()];
    for (i, &s) in class.iter().enumerate() {
        for p in model.pairs_of(s) {
            mu[p] = nu[i] * policy.prob(p);
        }
    }
    Ok(mu)
}

/// Adds flow-conservation rows for the measure stored in the first
/// `n_pairs` variables of `prob`.
pub(crate) fn add_flow_rows(model: &MdpModel, prob: &mut QuadraticProgram) {
    for s in 0..model.n_states() {
        let mut row = vec![0.0; prob.n];
        for p in 0..model.n_pairs() {
            if model.state_of(p) == s {
                row[p] += 1.0;
            }
            row[p] -= model.kernel(p)[s];
        }
        prob.eq(row, 0.0);
    }
}

/// Invariant probability measure maximizing its smallest entry.
#[derive(Debug, Clone, Serialize)]
pub struct CoveringMeasure {
    pub measure: Vec<f64>,
    pub min_mass: f64,
}

pub fn covering_measure(model: &MdpModel) -> Result<CoveringMeasure> {
    model.require_communicating()?;
    let np = model.n_pairs();
    let mut prob = QuadraticProgram::new(np + 1);
    prob.c[np] = -1.0;
    add_flow_rows(model, &mut prob);
    let mut total = vec![1.0; np + 1];
    total[np] = 0.0;
    prob.eq(total, 1.0);
    for p in 0..np {
        let mut row = vec![0.0; np + 1];
        row[p] = 1.0;
        row[np] = -1.0;
        prob.geq(row, 0.0);
    }
    let mut row = vec![0.0; np + 1];
    row[np] = 1.0;
    prob.geq(row, 0.0);
    let sol = prob.solve()?;
    let mut measure: Vec<f64> = sol.x[..np].iter().map(|x| x.max(0.0)).collect();
    let mass: f64 = measure.iter().sum();
    measure.iter_mut().for_each(|x| *x /= mass);
    let min_mass = measure.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CoveringMeasure { measure, min_mass })
}

/// Result of mixing a measure with the covering measure.
#[derive(Debug, Clone, Serialize)]
pub struct Uniformized {
    pub measure: Vec<f64>,
    pub weight: f64,
    pub epsilon: f64,
    pub clamped: bool,
}

/// Mixes `mu` with the covering measure so that every pair gets at least
/// `eps` of the total mass. `eps` is clamped below `1/(|P| D)`.
pub fn uniformize(model: &MdpModel, mu: &[f64], eps: f64) -> Result<Uniformized> {
    let cover = covering_measure(model)?;
    let d = diameter(model)?;
    let ceiling = (1.0 / (model.n_pairs() as f64 * d)).min(cover.min_mass);
    let (eps, clamped) = if eps >= ceiling { (0.99 * ceiling, true) } else { (eps, false) };
    let weight = eps / cover.min_mass;
    let mass: f64 = mu.iter().sum();
    let measure = mu
        .iter()
        .zip(&cover.measure)
        .map(|(m, c)| (1.0 - weight) * m + weight * mass * c)
        .collect();
    Ok(Uniformized { measure, weight, epsilon: eps, clamped })
}

/// One term of a unichain decomposition: `weight` times the stationary
/// measure of a unichain policy.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionTerm {
    pub weight: f64,
    pub pairs: Vec<usize>,
    pub measure: Vec<f64>,
    #[serde(skip)]
    pub policy: Policy,
}

/// Writes an invariant measure as a non-negative combination of at most
/// `|P|` stationary measures of unichain policies. Each step takes the
/// recurrent class reached from the lowest supported pair when every
/// supported state plays its lowest supported action, and subtracts the
/// largest multiple of its stationary measure.
pub fn unichain_decomposition(model: &MdpModel, mu: &[f64]) -> Result<Vec<DecompositionTerm>> {
    if !is_invariant(model, mu) {
        return Err(MdpError::Precondition("measure is not invariant".into()));
    }
    let n = model.n_states();
    let mass: f64 = mu.iter().sum();
    let thr = TOL_FLOW * mass.max(1.0) * 1e-3;
    let mut rest: Vec<f64> = mu.iter().map(|x| x.max(0.0)).collect();
    let mut terms = Vec::new();
    for _ in 0..=model.n_pairs() {
        let Some(first) = (0..model.n_pairs()).find(|&p| rest[p] > thr) else {
            return Ok(terms);
        };
        let mut pick: Vec<Option<usize>> = vec![None; n];
        for s in 0..n {
            pick[s] = model.pairs_of(s).find(|&p| rest[p] > thr);
        }
        // states without support become absorbing so they never join a class
        let kernel: Vec<Vec<f64>> = (0..n)
            .map(|s| match pick[s] {
                Some(p) => model.kernel(p).to_vec(),
                None => {
                    let mut row = vec![0.0; n];
                    row[s] = 1.0;
                    row
                }
            })
            .collect();
        let st = structure(&kernel);
        let start = model.state_of(first);
        let reach = reachable(&kernel, start);
        let class = st
            .classes
            .iter()
            .find(|c| reach[c[0]] && c.iter().all(|&s| pick[s].is_some()))
            .or_else(|| st.classes.iter().find(|c| c.iter().all(|&s| pick[s].is_some())))
            .ok_or_else(|| MdpError::Precondition("support of the measure is not closed".into()))?
            .clone();
        let nu = stationary_on(&kernel, &class);
        let pairs: Vec<usize> = class.iter().map(|&s| pick[s].expect("supported state")).collect();
        let (arg, weight) = pairs
            .iter()
            .zip(&nu)
            .map(|(&p, &w)| (p, rest[p] / w))
            .fold((pairs[0], f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let mut measure = vec![0.0; model.n_pairs()];
        for (&p, &w) in pairs.iter().zip(&nu) {
            measure[p] = w;
            rest[p] = (rest[p] - weight * w).max(0.0);
        }
        rest[arg] = 0.0;
        let mut probs = Policy::uniform(model).probs().to_vec();
        for (&s, &p) in class.iter().zip(&pairs) {
            for q in model.pairs_of(s) {
                probs[q] = if q == p { 1.0 } else { 0.0 };
            }
        }
        let policy = Policy::from_probs(model, probs)?;
        let mut sorted = pairs.clone();
        sorted.sort_unstable();
        terms.push(DecompositionTerm { weight, pairs: sorted, measure, policy });
    }
    Err(MdpError::NonConvergence("decomposition did not terminate within |P| terms".into()))
}

fn reachable(kernel: &[Vec<f64>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; kernel.len()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        for (t, &x) in kernel[s].iter().enumerate() {
            if x > 0.0 && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Sum of the decomposition terms.
pub fn recompose(model: &MdpModel, terms: &[DecompositionTerm]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_pairs()];
    for t in terms {
        for (o, m) in out.iter_mut().zip(&t.measure) {
            *o += t.weight * m;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sup_distance;
    use crate::zoo;

    #[test]
    fn covering_regret_discontinuity() {
        let m = zoo::regret_discontinuity(0.0);
        let c = covering_measure(&m).unwrap();
        // every pair can carry a quarter: the uniform policy is stationary-uniform
        assert!((c.min_mass - 0.25).abs() < 1e-8);
        assert!(c.min_mass >= 1.0 / (4.0 * diameter(&m).unwrap()));
        assert!(is_invariant(&m, &c.measure));
    }

    #[test]
    fn cycle_plus_loop_decomposes_into_two_terms() {
        let m = zoo::regret_discontinuity(0.0);
        let star = m.pair_by_label("1,*").unwrap();
        let dagger = m.pair_by_label("2,†").unwrap();
        let ddagger = m.pair_by_label("2,‡").unwrap();
        let mut mu = vec![0.0; 4];
        mu[star] = 0.25;
        mu[dagger] = 0.25;
        mu[ddagger] = 0.5;
        let terms = unichain_decomposition(&m, &mu).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].pairs, vec![star, dagger]);
        assert!((terms[0].weight - 0.5).abs() < 1e-12);
        assert_eq!(terms[1].pairs, vec![ddagger]);
        assert!(sup_distance(&recompose(&m, &terms), &mu) < 1e-12);
    }

    #[test]
    fn induced_policy_of_stationary_measure() {
        let m = zoo::regret_discontinuity(0.0);
        let pol = Policy::uniform(&m);
        let mu = policy_stationary_measure(&m, &pol).unwrap();
        let back = induced_policy(&m, &mu);
        assert!(sup_distance(back.probs(), pol.probs()) < 1e-12);
    }

    #[test]
    fn uniformize_stays_close() {
        let m = zoo::regret_discontinuity(0.0);
        let mut mu = vec![0.0; 4];
        mu[m.pair_by_label("1,§").unwrap()] = 1.0;
        let u = uniformize(&m, &mu, 0.05).unwrap();
        let d = diameter(&m).unwrap();
        assert!(sup_distance(&u.measure, &mu) <= 4.0 * d * 0.05 + 1e-12);
        assert!(u.measure.iter().all(|&x| x >= 0.05 - 1e-9));
        assert!(is_invariant(&m, &u.measure));
    }
}
