//! Maximum likelihood estimate of the model from the observed history.

use crate::model::{KernelSpace, MdpModel};

/// Learner-visible description of a model: layout, kernel spaces and the
/// kernels of `Known` pairs. Rewards and `Free` kernels carry the prior.
#[derive(Debug, Clone)]
pub struct ModelShape {
    prior: MdpModel,
}

pub const PRIOR_REWARD: f64 = 0.5;

impl ModelShape {
    pub fn of(model: &MdpModel) -> Self {
        let n = model.n_states();
        let kernels = (0..model.n_pairs())
            .map(|p| match model.space(p) {
                KernelSpace::Known => model.kernel(p).to_vec(),
                KernelSpace::Free => vec![1.0 / n as f64; n],
            })
            .collect();
        let prior = model
            .with_kernels(kernels)
            .and_then(|m| m.with_rewards(vec![PRIOR_REWARD; model.n_pairs()]))
            .expect("prior rows are distributions");
        Self { prior }
    }

    pub fn prior(&self) -> &MdpModel {
        &self.prior
    }
}

#[derive(Debug, Clone)]
pub struct Estimator {
    shape: ModelShape,
    counts: Vec<u64>,
    reward_sums: Vec<f64>,
    transitions: Vec<Vec<u64>>,
}

impl Estimator {
    pub fn new(shape: ModelShape) -> Self {
        let (np, ns) = (shape.prior.n_pairs(), shape.prior.n_states());
        Self { shape, counts: vec![0; np], reward_sums: vec![0.0; np], transitions: vec![vec![0; ns]; np] }
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn observe(&mut self, pair: usize, reward: f64, next: usize) {
        self.counts[pair] += 1;
        self.reward_sums[pair] += reward;
        self.transitions[pair][next] += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn reward_sums(&self) -> &[f64] {
        &self.reward_sums
    }

    pub fn transition_counts(&self, pair: usize) -> &[u64] {
        &self.transitions[pair]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| n as f64).collect()
    }

    /// Whether `next` has already been observed after `pair`.
    pub fn seen(&self, pair: usize, next: usize) -> bool {
        self.transitions[pair][next] > 0
    }

    pub fn observed_support(&self, pair: usize) -> Vec<usize> {
        (0..self.transitions[pair].len()).filter(|&s| self.transitions[pair][s] > 0).collect()
    }

    pub fn unvisited(&self, pair: usize) -> bool {
        self.counts[pair] == 0
    }

    pub fn mle(&self) -> MdpModel {
        let prior = &self.shape.prior;
        let rewards = (0..prior.n_pairs())
            .map(|p| if self.counts[p] > 0 { self.reward_sums[p] / self.counts[p] as f64 } else { prior.reward(p) })
            .collect();
        let kernels = (0..prior.n_pairs())
            .map(|p| {
                if prior.space(p) == KernelSpace::Free && self.counts[p] > 0 {
                    let n = self.counts[p] as f64;
                    self.transitions[p].iter().map(|&c| c as f64 / n).collect()
                } else {
                    prior.kernel(p).to_vec()
                }
            })
            .collect();
        prior
            .with_rewards(rewards)
            .and_then(|m| m.with_kernels(kernels))
            .expect("empirical frequencies are distributions")
    }
}
