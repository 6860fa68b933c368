//! Leveling: raise the reward of every nearly optimal pair by its gap so that
//! nearly optimal pairs become optimal.

use serde::Serialize;

use crate::error::Result;
use crate::model::MdpModel;
use crate::solve::{classify_pairs, solve_optimal, Component, OptimalSolution, TOL_GAP};
use crate::structural::worst_diameter;

#[derive(Debug, Clone, Serialize)]
pub struct Leveled {
    #[serde(skip)]
    pub model: MdpModel,
    /// Pairs whose gap lies strictly between zero and the threshold.
    pub bumped: Vec<usize>,
    pub epsilon: f64,
}

/// Leveled model from an already computed optimal solution.
pub fn level_with(model: &MdpModel, sol: &OptimalSolution, eps: f64) -> Leveled {
    let mut rewards = model.rewards().to_vec();
    let mut bumped = Vec::new();
    for (p, &gap) in sol.gaps.iter().enumerate() {
        if gap > TOL_GAP && gap < eps {
            rewards[p] = (rewards[p] + gap).min(1.0);
            bumped.push(p);
        }
    }
    let leveled = model.with_rewards(rewards).expect("leveled rewards stay in [0,1]");
    Leveled { model: leveled, bumped, epsilon: eps }
}

pub fn level(model: &MdpModel, eps: f64) -> Result<Leveled> {
    let sol = solve_optimal(model)?;
    Ok(level_with(model, &sol, eps))
}

#[derive(Debug, Clone, Serialize)]
pub struct LeveledPairs {
    pub pairs: Vec<usize>,
    pub components: Vec<Component>,
    pub bumped: Vec<usize>,
}

impl LeveledPairs {
    pub fn mask(&self, n_pairs: usize) -> Vec<bool> {
        let mut m = vec![false; n_pairs];
        for &p in &self.pairs {
            m[p] = true;
        }
        m
    }
}

/// Optimal pairs of the leveled model.
pub fn leveled_optimal_pairs(model: &MdpModel, eps: f64) -> Result<LeveledPairs> {
    let sol = solve_optimal(model)?;
    leveled_optimal_pairs_with(model, &sol, eps)
}

pub fn leveled_optimal_pairs_with(model: &MdpModel, sol: &OptimalSolution, eps: f64) -> Result<LeveledPairs> {
    let lv = level_with(model, sol, eps);
    let cls = if lv.bumped.is_empty() {
        classify_pairs(model, sol)
    } else {
        classify_pairs(&lv.model, &solve_optimal(&lv.model)?)
    };
    Ok(LeveledPairs { pairs: cls.optimal_pairs(), components: cls.components, bumped: lv.bumped })
}

/// Computable stand-in for the model constant governing leveling robustness,
/// built from the worst diameter and the number of states.
#[derive(Debug, Clone, Serialize)]
pub struct LevelingConstant {
    pub worst_diameter: f64,
    pub gain: f64,
    pub gaps: f64,
    pub total: f64,
}

pub fn leveling_constant(model: &MdpModel) -> Result<LevelingConstant> {
    let d = worst_diameter(model)?;
    let states = model.n_states() as f64;
    let gain = 2.0 * (1.0 + states) * d;
    let gaps = 32.0 * (1.0 + states) * d * d;
    Ok(LevelingConstant { worst_diameter: d, gain, gaps, total: gain.max(gaps * d) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn leveling_figure() {
        let m = zoo::leveling_perturbed();
        let lv = level(&m, 0.05).unwrap();
        let loop2 = m.pair_by_label("2,loop").unwrap();
        assert_eq!(lv.bumped, vec![loop2]);
        assert!((lv.model.reward(loop2) - 0.52).abs() < 1e-9);
        let lp = leveled_optimal_pairs(&m, 0.05).unwrap();
        assert_eq!(lp.pairs, vec![m.pair_by_label("1,loop").unwrap(), loop2]);
    }

    #[test]
    fn zero_threshold_changes_nothing() {
        let m = zoo::leveling_original();
        let lv = level(&m, 0.0).unwrap();
        assert!(lv.bumped.is_empty());
        assert_eq!(lv.model, m);
    }

    #[test]
    fn two_cycle_constant() {
        let m = crate::MdpBuilder::new("cycle", &["1", "2"]).det(0, "a", 1, 0.5).det(1, "b", 0, 0.5).build().unwrap();
        let c = leveling_constant(&m).unwrap();
        assert_eq!(c.worst_diameter, 2.0);
        assert_eq!(c.gain, 12.0);
        assert_eq!(c.gaps, 384.0);
        assert_eq!(c.total, 768.0);
    }
}
