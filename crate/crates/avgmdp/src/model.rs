//! Tabular MDP models with Bernoulli rewards.
//!
//! Pairs are numbered state by state, so the actions of state `s` occupy a
//! contiguous block of pair indices. Kernels are dense rows over states.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};

/// Largest row-sum defect that is silently renormalized.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairId(pub usize);

/// Whether a pair's transition kernel is part of the unknown parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpace {
    #[default]
    Known,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    name: String,
    state_labels: Vec<String>,
    action_labels: Vec<String>,
    pair_state: Vec<usize>,
    state_pairs: Vec<Range<usize>>,
    kernel: Vec<Vec<f64>>,
    reward: Vec<f64>,
    space: Vec<KernelSpace>,
}

/// Incremental constructor; pairs must be added state by state.
#[derive(Debug, Clone, Default)]
pub struct MdpBuilder {
    name: String,
    states: Vec<String>,
    pairs: Vec<(usize, String, Vec<f64>, f64, KernelSpace)>,
}

impl MdpBuilder {
    pub fn new(name: impl Into<String>, states: &[&str]) -> Self {
        Self {
            name: name.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
            pairs: Vec::new(),
        }
    }

    pub fn with_states(name: impl Into<String>, states: Vec<String>) -> Self {
        Self { name: name.into(), states, pairs: Vec::new() }
    }

    /// Adds an action at `state` with a dense kernel row.
    pub fn action(mut self, state: usize, label: &str, kernel: Vec<f64>, reward: f64) -> Self {
        self.pairs.push((state, label.to_string(), kernel, reward, KernelSpace::Known));
        self
    }

    /// Adds an action with a deterministic transition.
    pub fn det(self, state: usize, label: &str, next: usize, reward: f64) -> Self {
        let mut row = vec![0.0; self.states.len()];
        row[next] = 1.0;
        self.action(state, label, row, reward)
    }

    pub fn space(mut self, space: KernelSpace) -> Self {
        for p in &mut self.pairs {
            p.4 = space;
        }
        self
    }

    pub fn build(self) -> Result<MdpModel> {
        let n = self.states.len();
        let mut pairs = self.pairs;
        // stable sort keeps the declaration order of actions within a state
        pairs.sort_by_key(|p| p.0);
        let mut m = MdpModel {
            name: self.name,
            state_labels: self.states,
            action_labels: Vec::new(),
            pair_state: Vec::new(),
            state_pairs: vec![0..0; n],
            kernel: Vec::new(),
            reward: Vec::new(),
            space: Vec::new(),
        };
        for (s, label, row, r, sp) in pairs {
            if s >= n {
                return Err(MdpError::InvalidModel(format!("action {label} at unknown state index {s}")));
            }
            m.action_labels.push(label);
            m.pair_state.push(s);
            m.kernel.push(row);
            m.reward.push(r);
            m.space.push(sp);
        }
        m.rebuild_index()?;
        m.validate()?;
        Ok(m)
    }
}

impl MdpModel {
    fn rebuild_index(&mut self) -> Result<()> {
        let n = self.state_labels.len();
        let mut ranges = vec![0..0; n];
        let mut p = 0;
        for (s, range) in ranges.iter_mut().enumerate() {
            let start = p;
            while p < self.pair_state.len() && self.pair_state[p] == s {
                p += 1;
            }
            *range = start..p;
        }
        if p != self.pair_state.len() {
            return Err(MdpError::InvalidModel("pairs are not grouped by state".into()));
        }
        self.state_pairs = ranges;
        Ok(())
    }

    fn validate(&mut self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(MdpError::InvalidModel("model has no states".into()));
        }
        for s in 0..n {
            if self.state_pairs[s].is_empty() {
                return Err(MdpError::InvalidModel(format!("state {} has no action", self.state_labels[s])));
            }
        }
        for p in 0..self.n_pairs() {
            let label = self.pair_label(PairId(p));
            let r = self.reward[p];
            if !(0.0..=1.0).contains(&r) || r.is_nan() {
                return Err(MdpError::InvalidModel(format!("reward mean of {label} outside [0,1]: {r}")));
            }
            let row = &mut self.kernel[p];
            if row.len() != n {
                return Err(MdpError::InvalidModel(format!("kernel of {label} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&x| x < 0.0 || x.is_nan()) {
                return Err(MdpError::InvalidModel(format!("kernel of {label} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::InvalidModel(format!("kernel of {label} sums to {sum}")));
            }
            if sum != 1.0 {
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }
    pub fn n_pairs(&self) -> usize {
        self.pair_state.len()
    }
    pub fn pairs_of(&self, s: usize) -> Range<usize> {
        self.state_pairs[s].clone()
    }
    pub fn n_actions(&self, s: usize) -> usize {
        self.state_pairs[s].len()
    }
    pub fn max_actions(&self) -> usize {
        (0..self.n_states()).map(|s| self.n_actions(s)).max().unwrap_or(0)
    }
    pub fn state_of(&self, p: usize) -> usize {
        self.pair_state[p]
    }
    /// Position of pair `p` among the actions of its state.
    pub fn action_index(&self, p: usize) -> usize {
        p - self.state_pairs[self.pair_state[p]].start
    }
    pub fn pair(&self, s: usize, action: usize) -> usize {
        self.state_pairs[s].start + action
    }
    pub fn kernel(&self, p: usize) -> &[f64] {
        &self.kernel[p]
    }
    pub fn reward(&self, p: usize) -> f64 {
        self.reward[p]
    }
    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }
    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernel
    }
    pub fn space(&self, p: usize) -> KernelSpace {
        self.space[p]
    }
    pub fn state_label(&self, s: usize) -> &str {
        &self.state_labels[s]
    }
    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }
    pub fn action_label(&self, p: usize) -> &str {
        &self.action_labels[p]
    }
    pub fn pair_label(&self, p: PairId) -> String {
        format!("{},{}", self.state_labels[self.pair_state[p.0]], self.action_labels[p.0])
    }
    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }
    pub fn pair_index(&self, state: &str, action: &str) -> Option<usize> {
        let s = self.state_index(state)?;
        self.pairs_of(s).find(|&p| self.action_labels[p] == action)
    }
    /// Looks up a pair by its `"state,action"` label.
    pub fn pair_by_label(&self, label: &str) -> Option<usize> {
        let (s, a) = label.split_once(',')?;
        self.pair_index(s.trim(), a.trim())
    }

    /// Support of a kernel row.
    pub fn support(&self, p: usize) -> impl Iterator<Item = usize> + '_ {
        self.kernel[p].iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(s, _)| s)
    }

    /// Same model with other reward means; kernels are left bit-identical.
    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<MdpModel> {
        if reward.len() != self.n_pairs() {
            return Err(MdpError::InvalidModel(format!("expected {} reward means, got {}", self.n_pairs(), reward.len())));
        }
        if let Some(p) = reward.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(MdpError::InvalidModel(format!("reward mean of {} outside [0,1]: {}", self.pair_label(PairId(p)), reward[p])));
        }
        let mut m = self.clone();
        m.reward = reward;
        Ok(m)
    }

    pub fn with_kernels(&self, kernel: Vec<Vec<f64>>) -> Result<MdpModel> {
        let mut m = self.clone();
        m.kernel = kernel;
        m.validate()?;
        Ok(m)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_space(mut self, space: KernelSpace) -> Self {
        self.space.iter_mut().for_each(|x| *x = space);
        self
    }

    /// Whether two models share states, actions and kernel spaces.
    pub fn same_layout(&self, other: &MdpModel) -> bool {
        self.pair_state == other.pair_state && self.state_labels.len() == other.state_labels.len() && self.space == other.space
    }

    /// Whether every pair has the same kernel support in both models.
    pub fn same_supports(&self, other: &MdpModel) -> bool {
        self.same_layout(other)
            && self.kernel.iter().zip(&other.kernel).all(|(a, b)| a.iter().zip(b).all(|(x, y)| (*x > 0.0) == (*y > 0.0)))
    }

    /// State-to-state reachability graph of the union of all actions.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.n_states();
        let mut adj = vec![vec![false; n]; n];
        for p in 0..self.n_pairs() {
            let s = self.pair_state[p];
            for t in self.support(p) {
                adj[s][t] = true;
            }
        }
        adj
    }

    /// Returns the first unreachable (from, to) state pair, if any.
    pub fn communicating_witness(&self) -> Option<(usize, usize)> {
        let adj = self.reachability();
        let n = self.n_states();
        for from in 0..n {
            let mut seen = vec![false; n];
            let mut stack = vec![from];
            seen[from] = true;
            while let Some(s) = stack.pop() {
                for t in 0..n {
                    if adj[s][t] && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            if let Some(to) = seen.iter().position(|x| !x) {
                return Some((from, to));
            }
        }
        None
    }

    pub fn is_communicating(&self) -> bool {
        self.communicating_witness().is_none()
    }

    pub fn require_communicating(&self) -> Result<()> {
        match self.communicating_witness() {
            None => Ok(()),
            Some((from, to)) => Err(MdpError::NotCommunicating {
                from: self.state_labels[from].clone(),
                to: self.state_labels[to].clone(),
            }),
        }
    }
}

/// ℓ1 distance between two kernel rows.
pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// max_p |r'(p) - r(p)| + ‖k'(p) - k(p)‖₁.
pub fn model_distance(a: &MdpModel, b: &MdpModel) -> f64 {
    (0..a.n_pairs())
        .map(|p| (a.reward(p) - b.reward(p)).abs() + l1(a.kernel(p), b.kernel(p)))
        .fold(0.0, f64::max)
}

/// Like [`model_distance`] but infinite as soon as one kernel support differs.
pub fn support_aware_distance(a: &MdpModel, b: &MdpModel) -> f64 {
    if !a.same_supports(b) {
        return f64::INFINITY;
    }
    model_distance(a, b)
}

/// Largest row-wise ℓ1 distance between two kernels.
pub fn kernel_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| l1(x, y)).fold(0.0, f64::max)
}

/// Largest absolute difference between two vectors.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn span(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Stationary randomized policy stored as one probability per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<f64>,
}

impl Policy {
    /// Deterministic policy from one chosen pair per state.
    pub fn deterministic(model: &MdpModel, choice: &[usize]) -> Self {
        let mut probs = vec![0.0; model.n_pairs()];
        for (s, &p) in choice.iter().enumerate() {
            debug_assert_eq!(model.state_of(p), s);
            probs[p] = 1.0;
        }
        Self { probs }
    }

    pub fn uniform(model: &MdpModel) -> Self {
        let probs = (0..model.n_pairs()).map(|p| 1.0 / model.n_actions(model.state_of(p)) as f64).collect();
        Self { probs }
    }

    /// Uniform over the allowed pairs of each state, uniform over all actions
    /// at states with no allowed pair.
    pub fn uniform_over(model: &MdpModel, allowed: &[bool]) -> Self {
        let mut probs = vec![0.0; model.n_pairs()];
        for s in 0..model.n_states() {
            let range = model.pairs_of(s);
            let k = range.clone().filter(|&p| allowed[p]).count();
            for p in range.clone() {
                probs[p] = if k == 0 {
                    1.0 / range.len() as f64
                } else if allowed[p] {
                    1.0 / k as f64
                } else {
                    0.0
                };
            }
        }
        Self { probs }
    }

    /// Builds a policy from raw per-pair probabilities, normalizing each state.
    pub fn from_probs(model: &MdpModel, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != model.n_pairs() {
            return Err(MdpError::Precondition("policy length does not match the number of pairs".into()));
        }
        for s in 0..model.n_states() {
            let range = model.pairs_of(s);
            let sum: f64 = probs[range.clone()].iter().sum();
            if probs[range.clone()].iter().any(|&x| x < 0.0 || x.is_nan()) || sum <= 0.0 {
                return Err(MdpError::Precondition(format!("policy row of state {} is not a distribution", model.state_label(s))));
            }
            probs[range].iter_mut().for_each(|x| *x /= sum);
        }
        Ok(Self { probs })
    }

    pub fn prob(&self, p: usize) -> f64 {
        self.probs[p]
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    /// Chosen pair per state for deterministic policies.
    pub fn choices(&self, model: &MdpModel) -> Option<Vec<usize>> {
        (0..model.n_states()).map(|s| model.pairs_of(s).find(|&p| self.probs[p] == 1.0)).collect()
    }

    /// Transition matrix and reward vector of the induced reward process.
    pub fn markov_reward_process(&self, model: &MdpModel) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = model.n_states();
        let mut kernel = vec![vec![0.0; n]; n];
        let mut reward = vec![0.0; n];
        for p in 0..model.n_pairs() {
            let w = self.probs[p];
            if w == 0.0 {
                continue;
            }
            let s = model.state_of(p);
            reward[s] += w * model.reward(p);
            for (t, &x) in model.kernel(p).iter().enumerate() {
                kernel[s][t] += w * x;
            }
        }
        (kernel, reward)
    }
}

/// Iterates over all deterministic policies as pair choices, or fails when
/// there are more than `cap` of them.
pub fn deterministic_policies(model: &MdpModel, cap: usize) -> Result<Vec<Vec<usize>>> {
    let mut count: usize = 1;
    for s in 0..model.n_states() {
        count = count.saturating_mul(model.n_actions(s));
        if count > cap {
            return Err(MdpError::ResourceLimit(format!("more than {cap} deterministic policies")));
        }
    }
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; model.n_states()];
    loop {
        out.push(idx.iter().enumerate().map(|(s, &a)| model.pair(s, a)).collect());
        let mut s = 0;
        loop {
            if s == idx.len() {
                return Ok(out);
            }
            idx[s] += 1;
            if idx[s] < model.n_actions(s) {
                break;
            }
            idx[s] = 0;
            s += 1;
        }
    }
}

impl MdpModel {
    pub(crate) fn set_space_unchecked(&mut self, p: usize, sp: KernelSpace) {
        self.space[p] = sp;
    }
}
