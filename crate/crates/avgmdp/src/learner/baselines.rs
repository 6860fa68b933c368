//! Reference learners without exploration logic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::estimator::{Estimator, ModelShape};
use super::{Counters, Learner, StepTag};
use crate::solve::solve_multichain;

/// Plays every legal action with equal probability.
pub struct UniformRandom {
    rng: ChaCha8Rng,
    shape: Option<ModelShape>,
}

impl Default for UniformRandom {
    fn default() -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(0), shape: None }
    }
}

impl Learner for UniformRandom {
    fn name(&self) -> &str {
        "uniform"
    }

    fn reset(&mut self, seed: u64, shape: &ModelShape) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.shape = Some(shape.clone());
    }

    fn act(&mut self, state: usize) -> usize {
        let range = self.shape.as_ref().expect("reset before use").prior().pairs_of(state);
        rand::Rng::gen_range(&mut self.rng, range)
    }

    fn observe(&mut self, _: usize, _: usize, _: f64, _: usize) {}

    fn last_tag(&self) -> StepTag {
        StepTag::NONE
    }
}

/// Follows a bias-optimal policy of the current estimate, re-solved each step.
#[derive(Default)]
pub struct GreedyMle {
    est: Option<Estimator>,
    counters: Counters,
}

impl Learner for GreedyMle {
    fn name(&self) -> &str {
        "greedy"
    }

    fn reset(&mut self, _seed: u64, shape: &ModelShape) {
        self.est = Some(Estimator::new(shape.clone()));
        self.counters = Counters::default();
    }

    fn act(&mut self, state: usize) -> usize {
        let est = self.est.as_ref().expect("reset before use");
        match solve_multichain(&est.mle()) {
            Ok(sol) => sol.policy[state],
            Err(_) => est.shape().prior().pairs_of(state).start,
        }
    }

    fn observe(&mut self, _: usize, pair: usize, reward: f64, next: usize) {
        self.est.as_mut().expect("reset before use").observe(pair, reward, next);
    }

    fn last_tag(&self) -> StepTag {
        StepTag::NONE
    }
}
