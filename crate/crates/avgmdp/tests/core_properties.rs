//! Randomized checks of gains, biases, gaps, diameters and optimal pairs.

use std::collections::BTreeSet;

use avgmdp::chain::structure;
use avgmdp::model::{deterministic_policies, span};
use avgmdp::solve::{evaluate_policy, optimal_pairs, solve_optimal, TOL_GAP};
use avgmdp::structural::{diameter, worst_diameter};
use avgmdp::zoo::random_communicating;
use avgmdp::{KernelSpace, MdpModel, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, states: usize, actions: usize) -> MdpModel {
    random_communicating(&mut ChaCha8Rng::seed_from_u64(seed), states, actions, KernelSpace::Known)
}

/// Average reward of a long run of a deterministic policy, with a
/// batch-means standard error.
fn simulated_gain(model: &MdpModel, choice: &[usize], start: usize, steps: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let batches = 100;
    let per = steps / batches;
    let mut s = start;
    let mut means = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut total = 0.0;
        for _ in 0..per {
            let p = choice[s];
            if rng.gen::<f64>() < model.reward(p) {
                total += 1.0;
            }
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let row = model.kernel(p);
            let mut next = row.len() - 1;
            for (t, &x) in row.iter().enumerate() {
                acc += x;
                if u < acc {
                    next = t;
                    break;
                }
            }
            s = next;
        }
        means.push(total / per as f64);
    }
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[test]
fn policy_gain_matches_long_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for seed in 0..4 {
        let m = instance(seed, 4, 3);
        for choice in deterministic_policies(&m, 1000).unwrap() {
            let ev = evaluate_policy(&m, &Policy::deterministic(&m, &choice));
            let (mean, se) = simulated_gain(&m, &choice, 0, 1_000_000, &mut rng);
            assert!(
                (mean - ev.gain[0]).abs() <= 3.0 * se + 1e-12,
                "instance {seed} policy {choice:?}: exact {} simulated {mean} se {se}",
                ev.gain[0]
            );
            checked += 1;
        }
    }
    assert!(checked > 4);
}

/// Pairs on recurrent classes of optimal gain, over all deterministic policies.
fn enumerated_optimal_pairs(m: &MdpModel) -> Vec<usize> {
    let g = solve_optimal(m).unwrap().gain;
    let mut out = BTreeSet::new();
    for choice in deterministic_policies(m, 100_000).unwrap() {
        let (kernel, _) = Policy::deterministic(m, &choice).markov_reward_process(m);
        let ev = evaluate_policy(m, &Policy::deterministic(m, &choice));
        for class in structure(&kernel).classes {
            if ev.gain[class[0]] >= g - 1e-9 {
                out.extend(class.iter().map(|&s| choice[s]));
            }
        }
    }
    out.into_iter().collect()
}

#[test]
fn bias_span_diameter_and_gap_sign() {
    for seed in 0..200 {
        let m = instance(1000 + seed, 4, 3);
        let sol = solve_optimal(&m).unwrap();
        let d = diameter(&m).unwrap();
        assert!(span(&sol.bias) <= span(m.rewards()) * d + 1e-9, "instance {seed}");
        assert!(d <= worst_diameter(&m).unwrap() + 1e-9, "instance {seed}");
        assert!(sol.gaps.iter().all(|&g| g >= -TOL_GAP), "instance {seed}: {:?}", sol.gaps);
        for s in 0..m.n_states() {
            let best = m.pairs_of(s).map(|p| sol.gaps[p]).fold(f64::INFINITY, f64::min);
            assert!(best <= TOL_GAP, "instance {seed} state {s}");
        }
    }
}

#[test]
fn component_method_matches_enumeration() {
    for seed in 0..200 {
        let m = instance(5000 + seed, 4, 3);
        assert_eq!(optimal_pairs(&m).unwrap(), enumerated_optimal_pairs(&m), "instance {seed}");
    }
}

#[test]
fn ties_are_found_by_both_methods() {
    let m = avgmdp::zoo::discontinuous_gaps(0.0);
    assert_eq!(optimal_pairs(&m).unwrap(), enumerated_optimal_pairs(&m));
    assert_eq!(optimal_pairs(&m).unwrap().len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_gain_dominates_every_policy(seed in any::<u64>()) {
        let m = instance(seed, 3, 3);
        let g = solve_optimal(&m).unwrap().gain;
        for choice in deterministic_policies(&m, 1000).unwrap() {
            let ev = evaluate_policy(&m, &Policy::deterministic(&m, &choice));
            prop_assert!(ev.gain.iter().all(|&x| x <= g + 1e-9));
        }
    }

    #[test]
    fn gaps_vanish_on_the_optimal_policy(seed in any::<u64>()) {
        let m = instance(seed, 4, 3);
        let sol = solve_optimal(&m).unwrap();
        for &p in &sol.policy {
            prop_assert!(sol.gaps[p].abs() <= TOL_GAP);
        }
    }
}
