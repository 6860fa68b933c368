//! Computable upper bounds on how gains, biases, invariant measures,
//! diameters and reaching probabilities move when a model is perturbed.
//!
//! All kernel distances are the largest row-wise ℓ1 distance; reward
//! distances are sup norms over states of the policy's reward process.

use serde::Serialize;

use crate::chain::{hitting_steps, reward_process, RewardProcess};
use crate::error::{MdpError, Result};
use crate::model::{kernel_distance, span, sup_distance, MdpModel, Policy};
use crate::structural::{diameter, kernel_diameter};

#[derive(Debug, Clone, Serialize)]
pub struct DeviationBounds {
    pub reward_distance: f64,
    pub kernel_distance: f64,
    pub equivalent: bool,
    pub unichain: bool,
    pub gain: Option<f64>,
    pub bias: Option<f64>,
    pub invariant_measure: Option<f64>,
    pub policy_diameter: Option<f64>,
    pub diameter: Option<f64>,
    pub reaching_prob: Option<f64>,
    /// Names of the bounds whose preconditions fail.
    pub not_applicable: Vec<&'static str>,
}

/// Observed changes, to be compared against [`DeviationBounds`].
#[derive(Debug, Clone, Serialize)]
pub struct MeasuredDeviation {
    pub gain: f64,
    pub bias: f64,
    pub invariant_measure: f64,
    pub policy_diameter: f64,
    pub diameter: f64,
    pub reaching_prob: f64,
}

fn same_support(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.iter().zip(y).all(|(u, v)| (*u > 0.0) == (*v > 0.0)))
}

fn absorption_steps(process: &RewardProcess, kernel: &[Vec<f64>]) -> Vec<f64> {
    let target: Vec<bool> = process.structure.class_of.iter().map(|c| c.is_some()).collect();
    hitting_steps(kernel, &target).into_iter().map(|x| x + 1.0).collect()
}

pub fn deviation_bounds(policy: &Policy, base: &MdpModel, other: &MdpModel) -> Result<DeviationBounds> {
    if !base.same_layout(other) {
        return Err(MdpError::Precondition("models do not share the same states and actions".into()));
    }
    let (k1, r1) = policy.markov_reward_process(base);
    let (k2, r2) = policy.markov_reward_process(other);
    let dr = sup_distance(&r1, &r2);
    let dk = kernel_distance(&k1, &k2);
    let equivalent = same_support(&k1, &k2);
    let p1 = reward_process(&k1, &r1);
    let d1 = kernel_diameter(&k1);
    let d2 = kernel_diameter(&k2);
    let unichain = p1.structure.is_unichain();
    let classes = p1.structure.classes.len() as f64;
    let mut na = Vec::new();

    let gain = if unichain {
        Some(dr + 0.5 * span(&p1.bias) * dk)
    } else if equivalent {
        Some(dr + (1.0 + classes / 4.0) * d1.min(d2) * dk)
    } else {
        na.push("gain");
        None
    };

    let bias = if equivalent && unichain {
        let minus_h: Vec<f64> = p1.bias.iter().map(|h| -h).collect();
        let second = reward_process(&k1, &minus_h);
        Some(4.0 * d2 * dr + (2.0 * d2 * span(&p1.bias) + 0.5 * span(&second.bias)) * dk)
    } else if equivalent {
        Some(6.0 * d2 * dr + ((7.0 + classes / 2.0) * d2 * d1 + 2.0 * d1 * d1) * dk)
    } else {
        na.push("bias");
        None
    };

    let invariant_measure = if equivalent && unichain {
        Some(d1.min(d2) * dk)
    } else {
        na.push("invariant_measure");
        None
    };

    let policy_diameter = if equivalent {
        Some(0.5 * d1 * d2 * dk)
    } else {
        na.push("policy_diameter");
        None
    };

    let diameter = if base.same_supports(other) && base.is_communicating() {
        let da = crate::structural::diameter(base)?;
        let db = crate::structural::diameter(other)?;
        Some(0.5 * da * db * kernel_distance(base.kernels(), other.kernels()))
    } else {
        na.push("diameter");
        None
    };

    let reaching_prob = if equivalent {
        let p2 = reward_process(&k2, &r2);
        let t1 = absorption_steps(&p1, &k1).into_iter().fold(0.0, f64::max);
        let t2 = absorption_steps(&p2, &k2).into_iter().fold(0.0, f64::max);
        Some(0.5 * t1.min(t2) * dk)
    } else {
        na.push("reaching_prob");
        None
    };

    Ok(DeviationBounds {
        reward_distance: dr,
        kernel_distance: dk,
        equivalent,
        unichain,
        gain,
        bias,
        invariant_measure,
        policy_diameter,
        diameter,
        reaching_prob,
        not_applicable: na,
    })
}

pub fn measured_deviation(policy: &Policy, base: &MdpModel, other: &MdpModel) -> Result<MeasuredDeviation> {
    let (k1, r1) = policy.markov_reward_process(base);
    let (k2, r2) = policy.markov_reward_process(other);
    let p1 = reward_process(&k1, &r1);
    let p2 = reward_process(&k2, &r2);
    let n = k1.len();
    let mut measure = 0.0f64;
    let mut reach = 0.0f64;
    for s in 0..n {
        measure = measure.max(sup_distance(&p1.limiting_law(s), &p2.limiting_law(s)));
    }
    if p1.structure.classes == p2.structure.classes {
        for s in 0..n {
            reach = reach.max(sup_distance(&p1.absorption[s], &p2.absorption[s]));
        }
    } else {
        reach = f64::NAN;
    }
    let diam = match (base.is_communicating(), other.is_communicating()) {
        (true, true) => (diameter(base)? - diameter(other)?).abs(),
        _ => f64::NAN,
    };
    Ok(MeasuredDeviation {
        gain: sup_distance(&p1.gain, &p2.gain),
        bias: sup_distance(&p1.bias, &p2.bias),
        invariant_measure: measure,
        policy_diameter: (kernel_diameter(&k1) - kernel_diameter(&k2)).abs(),
        diameter: diam,
        reaching_prob: reach,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn single_reward_change_moves_gain_by_at_most_that() {
        let m = zoo::regret_discontinuity(0.0);
        let mut r = m.rewards().to_vec();
        let p = m.pair_by_label("2,‡").unwrap();
        r[p] += 0.01;
        let m2 = m.with_rewards(r).unwrap();
        let pol = Policy::deterministic(&m, &[m.pair_by_label("1,*").unwrap(), p]);
        let b = deviation_bounds(&pol, &m, &m2).unwrap();
        assert!((b.gain.unwrap() - 0.01).abs() < 1e-12);
        let d = measured_deviation(&pol, &m, &m2).unwrap();
        assert!((d.gain - 0.01).abs() < 1e-12);
    }

    #[test]
    fn support_change_disables_equivalence_bounds() {
        let m = zoo::regret_discontinuity(0.0);
        let mut k = m.kernels().to_vec();
        let p = m.pair_by_label("1,§").unwrap();
        k[p] = vec![0.9, 0.1];
        let m2 = m.with_kernels(k).unwrap();
        let pol = Policy::deterministic(&m, &[p, m.pair_by_label("2,‡").unwrap()]);
        let b = deviation_bounds(&pol, &m, &m2).unwrap();
        assert!(!b.equivalent);
        assert!(b.bias.is_none() && b.diameter.is_none());
        assert!(b.not_applicable.contains(&"bias"));
    }
}
