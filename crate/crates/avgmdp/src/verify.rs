//! Randomized property checks run by the command line `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deviation::{deviation_bounds, measured_deviation};
use crate::error::Result;
use crate::learner::{validate_schedule, Schedule};
use crate::leveling::{leveled_optimal_pairs, leveling_constant};
use crate::lowerbound::{finest_resolution, policywise_oracle, regularized_lower_bound, simple_bound, Regularization};
use crate::measures::{covering_measure, policy_stationary_measure, recompose, unichain_decomposition};
use crate::model::{support_aware_distance, KernelSpace, MdpModel, Policy};
use crate::solve::{optimal_pairs, solve_optimal};
use crate::structural::{diameter, gain_gap};
use crate::zoo::{perturb_same_support, random_communicating};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn tally(name: &'static str, trials: usize, failures: Vec<String>) -> Self {
        Self {
            name,
            trials,
            failures: failures.len(),
            passed: failures.is_empty(),
            detail: failures.into_iter().next().unwrap_or_default(),
        }
    }
}

fn random_policy<R: Rng>(rng: &mut R, model: &MdpModel) -> Policy {
    let probs = (0..model.n_pairs()).map(|_| 0.05 + rng.gen::<f64>()).collect();
    Policy::from_probs(model, probs).expect("positive rows")
}

fn random_invariant<R: Rng>(rng: &mut R, model: &MdpModel) -> Vec<f64> {
    let mut mu = vec![0.0; model.n_pairs()];
    for _ in 0..rng.gen_range(1..=3) {
        let w = rng.gen::<f64>() * 3.0;
        let nu = policy_stationary_measure(model, &random_policy(rng, model)).expect("randomized policies are unichain");
        mu.iter_mut().zip(nu).for_each(|(m, x)| *m += w * x);
    }
    mu
}

fn covering<R: Rng>(rng: &mut R, trials: usize) -> Result<CheckOutcome> {
    let mut bad = Vec::new();
    for i in 0..trials {
        let m = random_communicating(rng, 3, 3, KernelSpace::Known);
        let c = covering_measure(&m)?;
        let floor = 1.0 / (m.n_pairs() as f64 * diameter(&m)?);
        if c.min_mass < floor - 1e-9 {
            bad.push(format!("trial {i}: min {} below {floor}", c.min_mass));
        }
    }
    Ok(CheckOutcome::tally("covering measure floor", trials, bad))
}

fn decomposition<R: Rng>(rng: &mut R, trials: usize) -> Result<CheckOutcome> {
    let mut bad = Vec::new();
    for i in 0..trials {
        let m = random_communicating(rng, 3, 3, KernelSpace::Known);
        let mu = random_invariant(rng, &m);
        let terms = unichain_decomposition(&m, &mu)?;
        let back = recompose(&m, &terms);
        let err = back.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-9 || terms.len() > m.n_pairs() {
            bad.push(format!("trial {i}: error {err:.2e} with {} terms", terms.len()));
        }
        let sol = solve_optimal(&m)?;
        let lhs: f64 = mu.iter().zip(&sol.gaps).map(|(a, g)| a * g).sum();
        let rhs: f64 = mu.iter().enumerate().map(|(p, a)| a * (sol.gain - m.reward(p))).sum();
        if (lhs - rhs).abs() > 1e-9 {
            bad.push(format!("trial {i}: gap identity off by {:.2e}", lhs - rhs));
        }
    }
    Ok(CheckOutcome::tally("unichain decomposition and gap identity", trials, bad))
}

fn sandwich<R: Rng>(rng: &mut R, trials: usize) -> Result<CheckOutcome> {
    let mut bad = Vec::new();
    for i in 0..trials {
        let m = random_communicating(rng, 3, 2, KernelSpace::Known);
        let k = regularized_lower_bound(&m, Regularization::new(1e-6, 1e-10, 1e-12))?.value;
        let oracle = policywise_oracle(&m, finest_resolution(&m, 5000))?.value;
        let upper = simple_bound(&m)?;
        if !(k >= 0.0 && k <= oracle * 1.05 + 1e-6 && k <= upper + 1e-6) {
            bad.push(format!("trial {i}: bound {k} oracle {oracle} closed form {upper}"));
        }
    }
    Ok(CheckOutcome::tally("lower bound sandwich", trials, bad))
}

fn deviations<R: Rng>(rng: &mut R, trials: usize) -> Result<CheckOutcome> {
    let mut bad = Vec::new();
    for i in 0..trials {
        let m = random_communicating(rng, 3, 3, KernelSpace::Known);
        let m2 = perturb_same_support(rng, &m, 0.05);
        let pi = random_policy(rng, &m);
        let b = deviation_bounds(&pi, &m, &m2)?;
        let d = measured_deviation(&pi, &m, &m2)?;
        let pairs = [
            ("gain", d.gain, b.gain),
            ("bias", d.bias, b.bias),
            ("measure", d.invariant_measure, b.invariant_measure),
            ("diameter", d.diameter, b.diameter),
        ];
        for (name, seen, bound) in pairs {
            if let Some(bound) = bound {
                if seen > bound + 1e-9 {
                    bad.push(format!("trial {i}: {name} moved {seen:.3e} > {bound:.3e}"));
                }
            }
        }
    }
    Ok(CheckOutcome::tally("deviation bounds", trials, bad))
}

fn leveling<R: Rng>(rng: &mut R, trials: usize) -> Result<CheckOutcome> {
    let mut bad = Vec::new();
    let mut done = 0;
    while done < trials {
        let m = random_communicating(rng, 3, 2, KernelSpace::Known);
        let gap = gain_gap(&m)?;
        if !gap.is_finite() {
            continue;
        }
        let c = leveling_constant(&m)?.total;
        let eps = gap * rng.gen_range(0.1..0.9);
        let radius = 0.99 * (eps / c).min((gap - eps) / (2.0 * c));
        let m2 = perturb_same_support(rng, &m, radius);
        if c * support_aware_distance(&m, &m2) >= eps || eps + 2.0 * c * support_aware_distance(&m, &m2) >= gap {
            continue;
        }
        done += 1;
        if leveled_optimal_pairs(&m2, eps)?.pairs != optimal_pairs(&m)? {
            bad.push(format!("draw {done}: leveled pairs differ at eps {eps:.3e}"));
        }
    }
    Ok(CheckOutcome::tally("leveling robustness", trials, bad))
}

fn schedule() -> CheckOutcome {
    let report = validate_schedule(&Schedule::default(), 40);
    let a1 = report.iter().find(|c| c.name.starts_with("A1")).expect("A1 is always reported");
    CheckOutcome { name: "default schedule monotone", trials: 1, failures: usize::from(!a1.passed), passed: a1.passed, detail: a1.detail.clone() }
}

/// Runs every check with `trials` random draws each.
pub fn run_property_suite(seed: u64, trials: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        covering(&mut rng, trials)?,
        decomposition(&mut rng, trials)?,
        sandwich(&mut rng, trials.div_ceil(4))?,
        deviations(&mut rng, trials)?,
        leveling(&mut rng, trials)?,
        schedule(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        let out = run_property_suite(1, 8).unwrap();
        for c in &out {
            assert!(c.passed, "{c:?}");
        }
    }
}
