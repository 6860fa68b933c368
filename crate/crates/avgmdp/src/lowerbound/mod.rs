//! Instance-dependent regret lower bounds: information values, confusing
//! models, the regularized bound by cutting planes and brute-force checks.

pub mod confusing;
pub mod cutting;
pub mod kl;
pub mod oracle;

pub use confusing::{confusing_weighted_kl_min, Candidates, ConfusingModel, InnerMin};
pub use cutting::{
    central_measure, default_levels, regularized_lower_bound, regularized_lower_bound_in, vanilla_lower_bound, BoundContext,
    CentralMeasure, LowerBoundSolution, Regularization, VanillaBound, CUT_TOL, MAX_CUTS,
};
pub use kl::{bernoulli_kl, categorical_kl};
pub use oracle::{finest_resolution, policywise_oracle, OracleResult};

use crate::error::Result;
use crate::model::MdpModel;
use crate::structural::{diameter, gain_gap};

/// Weighted divergence to the closest leveled confusing model.
pub fn information_value(mu: &[f64], model: &MdpModel, flat: f64) -> Result<f64> {
    let ctx = BoundContext::new(model)?;
    let protected = ctx.protected(flat)?;
    Ok(ctx.information(mu, &protected)?.value)
}

/// Closed-form upper bound `16 |P| D³ / Δgap²`; zero when every
/// deterministic policy is gain optimal.
pub fn simple_bound(model: &MdpModel) -> Result<f64> {
    let d = diameter(model)?;
    let gap = gain_gap(model)?;
    if gap.is_infinite() {
        return Ok(0.0);
    }
    Ok(16.0 * model.n_pairs() as f64 * d.powi(3) / (gap * gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    fn closed_form() -> f64 {
        0.4 / bernoulli_kl(0.1, 0.5)
    }

    #[test]
    fn regularized_value_on_regret_discontinuity() {
        let m = zoo::regret_discontinuity(0.0);
        let sol = regularized_lower_bound(&m, Regularization::new(1e-3, 1e-4, 1e-6)).unwrap();
        assert!(sol.converged);
        assert!((sol.value / closed_form() - 1.0).abs() < 0.01, "{}", sol.value);
        assert!(crate::measures::is_invariant(&m, &sol.measure));
        for cut in &sol.cuts {
            assert!(cut.weighted(&sol.measure) >= 1.0 - CUT_TOL);
        }
    }

    #[test]
    fn information_of_unit_measure() {
        let m = zoo::regret_discontinuity(0.0);
        let v = information_value(&[1.0; 4], &m, 1e-3).unwrap();
        assert!((v - 0.368_064).abs() < 1e-5);
        assert_eq!(information_value(&[0.0; 4], &m, 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn simple_bound_of_regret_discontinuity() {
        // D = 2 with the start counted, gain gap 0.4
        let b = simple_bound(&zoo::regret_discontinuity(0.0)).unwrap();
        assert!((b - 16.0 * 4.0 * 8.0 / 0.16).abs() < 1e-9);
    }

    #[test]
    fn oracle_matches_closed_form() {
        let m = zoo::regret_discontinuity(0.0);
        let o = policywise_oracle(&m, 0.05).unwrap();
        assert!((o.value / closed_form() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_action_model_has_zero_bound() {
        let m = crate::MdpBuilder::new("cycle", &["1", "2"]).det(0, "a", 1, 0.2).det(1, "b", 0, 0.7).build().unwrap();
        assert_eq!(regularized_lower_bound(&m, Regularization::new(1e-3, 1e-4, 1e-6)).unwrap().value, 0.0);
        assert_eq!(policywise_oracle(&m, 0.5).unwrap().value, 0.0);
        assert_eq!(simple_bound(&m).unwrap(), 0.0);
    }
}
