//! Regularized regret lower bound by cutting planes.
//!
//! The outer problem is a small convex QP over invariant, uniform measures;
//! each violated information constraint contributes the linear cut
//! `Σ μ(p)·KL(M(p)‖M†(p)) ≥ 1` of the confusing model found by the inner
//! minimization.

use serde::Serialize;

use crate::error::{MdpError, Result};
use crate::leveling::leveled_optimal_pairs_with;
use crate::lowerbound::confusing::{confusing_weighted_kl_min, Candidates, ConfusingModel, InnerMin};
use crate::measures::add_flow_rows;
use crate::model::MdpModel;
use crate::qp::QuadraticProgram;
use crate::solve::{solve_optimal, OptimalSolution};
use crate::structural::diameter;

pub const CUT_TOL: f64 = 1e-6;
pub const MAX_CUTS: usize = 200;
/// Mass cap keeping the unregularized outer problem bounded.
const MASS_CAP: f64 = 1e7;

/// Leveling threshold, uniformity ratio and strong-convexity weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Regularization {
    pub flat: f64,
    pub unif: f64,
    pub reg: f64,
}

impl Regularization {
    pub fn new(flat: f64, unif: f64, reg: f64) -> Self {
        Self { flat, unif, reg }
    }
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
    fn validate(&self) -> Result<()> {
        if [self.flat, self.unif, self.reg].iter().any(|x| *x < 0.0 || x.is_nan()) {
            return Err(MdpError::InvalidConfig("regularization parameters must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundSolution {
    pub value: f64,
    pub measure: Vec<f64>,
    pub cuts: Vec<ConfusingModel>,
    pub iterations: usize,
    pub converged: bool,
    /// Uniformity ratio actually used after clamping.
    pub unif_used: f64,
    pub unif_clamped: bool,
    /// Information value of the returned measure.
    pub information: f64,
}

/// Everything the cutting-plane loop needs about a model, reusable across
/// calls with different regularizations.
pub struct BoundContext<'a> {
    pub model: &'a MdpModel,
    pub solution: OptimalSolution,
    pub candidates: Candidates,
    pub diameter: f64,
}

impl<'a> BoundContext<'a> {
    pub fn new(model: &'a MdpModel) -> Result<Self> {
        let solution = solve_optimal(model)?;
        Self::with_parts(model, solution, Candidates::enumerate(model)?)
    }

    pub fn with_parts(model: &'a MdpModel, solution: OptimalSolution, candidates: Candidates) -> Result<Self> {
        let diameter = diameter(model)?;
        Ok(Self { model, solution, candidates, diameter })
    }

    pub fn protected(&self, flat: f64) -> Result<Vec<bool>> {
        let lp = leveled_optimal_pairs_with(self.model, &self.solution, flat)?;
        Ok(lp.mask(self.model.n_pairs()))
    }

    pub fn information(&self, weights: &[f64], protected: &[bool]) -> Result<InnerMin> {
        confusing_weighted_kl_min(weights, self.model, protected, &self.candidates, self.solution.gain)
    }
}

fn outer_problem(model: &MdpModel, gaps: &[f64], reg: f64, unif: f64, cuts: &[ConfusingModel]) -> QuadraticProgram {
    let n = model.n_pairs();
    let mut prob = QuadraticProgram::new(n);
    prob.q = vec![2.0 * reg; n];
    prob.c = gaps.iter().map(|g| g.max(0.0)).collect();
    add_flow_rows(model, &mut prob);
    for p in 0..n {
        let mut row = vec![0.0; n];
        row[p] = 1.0;
        prob.geq(row, 0.0);
    }
    if unif > 0.0 {
        for s in 0..model.n_states() {
            if model.n_actions(s) < 2 {
                continue;
            }
            for p in model.pairs_of(s) {
                let mut row = vec![0.0; n];
                for q in model.pairs_of(s) {
                    row[q] = -unif;
                }
                row[p] += 1.0;
                prob.geq(row, 0.0);
            }
        }
    }
    if reg == 0.0 {
        prob.geq(vec![-1.0; n], -MASS_CAP);
    }
    for cut in cuts {
        prob.geq(cut.kl_per_pair.iter().map(|k| k.min(1e6)).collect(), 1.0);
    }
    prob
}

pub fn regularized_lower_bound(model: &MdpModel, eps: Regularization) -> Result<LowerBoundSolution> {
    let ctx = BoundContext::new(model)?;
    regularized_lower_bound_in(&ctx, eps, None)
}

/// Cutting-plane solve; `start` seeds the first inner evaluation.
pub fn regularized_lower_bound_in(ctx: &BoundContext, eps: Regularization, start: Option<&[f64]>) -> Result<LowerBoundSolution> {
    eps.validate()?;
    let model = ctx.model;
    let n = model.n_pairs();
    let ceiling = 1.0 / (n as f64 * ctx.diameter);
    let (unif, unif_clamped) = if eps.unif >= ceiling { (0.99 * ceiling, true) } else { (eps.unif, false) };
    let protected = ctx.protected(eps.flat)?;
    let gaps = &ctx.solution.gaps;

    let seed: Vec<f64> = match start {
        Some(s) if s.iter().any(|&x| x > 0.0) => s.to_vec(),
        _ => vec![1.0; n],
    };
    let first = ctx.information(&seed, &protected)?;
    let Some(first_cut) = first.best else {
        return Ok(LowerBoundSolution {
            value: 0.0,
            measure: vec![0.0; n],
            cuts: Vec::new(),
            iterations: 0,
            converged: true,
            unif_used: unif,
            unif_clamped,
            information: f64::INFINITY,
        });
    };
    let mut cuts = vec![first_cut];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let prob = outer_problem(model, gaps, eps.reg, unif, &cuts);
        let sol = prob.solve()?;
        let measure: Vec<f64> = sol.x.iter().map(|x| x.max(0.0)).collect();
        let inner = ctx.information(&measure, &protected)?;
        let converged = inner.value >= 1.0 - CUT_TOL;
        if converged || cuts.len() >= MAX_CUTS || inner.best.is_none() {
            let value = measure.iter().zip(gaps).map(|(m, g)| m * g.max(0.0)).sum::<f64>()
                + eps.reg * measure.iter().map(|m| m * m).sum::<f64>();
            return Ok(LowerBoundSolution {
                value,
                measure,
                cuts,
                iterations,
                converged,
                unif_used: unif,
                unif_clamped,
                information: inner.value,
            });
        }
        cuts.push(inner.best.expect("checked above"));
    }
}

/// Successive regularized values along a decreasing schedule.
#[derive(Debug, Clone, Serialize)]
pub struct VanillaBound {
    pub value: f64,
    pub levels: Vec<Regularization>,
    pub values: Vec<f64>,
    pub extrapolated: f64,
    pub converged: bool,
}

/// Default decreasing levels with the uniformity ratio vanishing faster
/// than the strong-convexity weight.
pub fn default_levels() -> Vec<Regularization> {
    (1..=8)
        .map(|k| {
            let k = k as f64;
            Regularization::new(10f64.powf(-(k + 1.0)), 10f64.powf(-2.0 * k), 10f64.powf(-k))
        })
        .collect()
}

pub fn vanilla_lower_bound(model: &MdpModel, levels: &[Regularization]) -> Result<VanillaBound> {
    if levels.is_empty() {
        return Err(MdpError::InvalidConfig("at least one regularization level is required".into()));
    }
    let ctx = BoundContext::new(model)?;
    let mut values = Vec::new();
    let mut converged = true;
    let mut start: Option<Vec<f64>> = None;
    for &e in levels {
        let sol = regularized_lower_bound_in(&ctx, e, start.as_deref())?;
        converged &= sol.converged;
        values.push(sol.value);
        start = Some(sol.measure);
    }
    let value = *values.last().expect("non-empty");
    let extrapolated = if values.len() >= 2 {
        let (a, b) = (values[values.len() - 2], value);
        let (ha, hb) = (levels[levels.len() - 2].reg, levels[levels.len() - 1].reg);
        if ha > hb {
            b - (a - b) * hb / (ha - hb)
        } else {
            b
        }
    } else {
        value
    };
    Ok(VanillaBound { value, levels: levels.to_vec(), values, extrapolated, converged })
}

/// Regularized optimal measure at a fine level, normalized.
#[derive(Debug, Clone, Serialize)]
pub struct CentralMeasure {
    pub measure: Vec<f64>,
    pub total_mass: f64,
    pub value: f64,
}

pub fn central_measure(model: &MdpModel) -> Result<CentralMeasure> {
    let eps = Regularization::new(1e-6, 1e-10, 1e-8);
    let sol = regularized_lower_bound(model, eps)?;
    if sol.value <= 0.0 {
        return Err(MdpError::Precondition("no exploration needed: the lower bound is zero".into()));
    }
    let total_mass: f64 = sol.measure.iter().sum();
    Ok(CentralMeasure {
        measure: sol.measure.iter().map(|m| m / total_mass).collect(),
        total_mass,
        value: sol.value,
    })
}
