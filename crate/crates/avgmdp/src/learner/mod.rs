//! The ECoE* learner, two baselines and the contract the harness drives.

pub mod baselines;
pub mod ecoe;
pub mod estimator;
pub mod schedule;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{GreedyMle, UniformRandom};
pub use ecoe::{exploitation_policy, exploration_policy, glr_exploration_test, glr_exploration_test_at_log, square_trick_check, Caps, Ecoe, GlrOutcome};
pub use estimator::{Estimator, ModelShape};
pub use schedule::{dyadic_floor, skeleton, skeleton_at_log, validate_schedule, Profile, Regularizers, Schedule, ScheduleCheck};

use crate::error::{MdpError, Result};
use crate::model::Policy;

/// Kind of step a learner just took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    CoExplore,
    Exploit,
    Panic,
    /// Steps of learners without phases.
    None,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::CoExplore => "coexplore",
            Phase::Exploit => "exploit",
            Phase::Panic => "panic",
            Phase::None => "none",
        }
    }
}

/// Phase of a step plus whether it opened an exploitation phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StepTag {
    pub phase: Phase,
    pub phase_start: bool,
}

impl StepTag {
    pub const NONE: StepTag = StepTag { phase: Phase::None, phase_start: false };

    pub fn in_minus(self) -> bool {
        matches!(self.phase, Phase::Explore | Phase::CoExplore)
    }

    /// Time-class membership written to traces, `+`-joined.
    pub fn class_label(self) -> &'static str {
        match (self.phase, self.phase_start) {
            (Phase::Explore, _) => "minus",
            (Phase::CoExplore, _) => "minus+pm",
            (Phase::Exploit, false) => "plus",
            (Phase::Exploit, true) => "plus+plus0",
            (Phase::Panic, false) => "panic",
            (Phase::Panic, true) => "panic+plus0",
            (Phase::None, _) => "none",
        }
    }
}

/// Running event counts reported by a learner.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counters {
    pub explore_steps: u64,
    pub coexplore_steps: u64,
    pub exploit_phases: u64,
    pub panics: u64,
    /// Co-exploration steps not preceded by another co-exploration step.
    pub travels: u64,
    pub lower_bound_solves: u64,
}

pub trait Learner: Send {
    fn name(&self) -> &str;
    fn reset(&mut self, seed: u64, shape: &ModelShape);
    /// Chosen pair at `state`.
    fn act(&mut self, state: usize) -> usize;
    fn observe(&mut self, state: usize, pair: usize, reward: f64, next: usize);
    /// Tag of the last observed step.
    fn last_tag(&self) -> StepTag;
    fn counters(&self) -> Counters {
        Counters::default()
    }
}

/// Learner configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algo: String,
    #[serde(default = "default_schedule_json")]
    pub schedule: serde_json::Value,
    #[serde(default)]
    pub caps: Caps,
}

fn default_schedule_json() -> serde_json::Value {
    serde_json::Value::String("default".into())
}

impl LearnerConfig {
    pub fn named(algo: &str) -> Self {
        Self { algo: algo.into(), schedule: default_schedule_json(), caps: Caps::default() }
    }

    pub fn build(&self) -> Result<Box<dyn Learner>> {
        match self.algo.as_str() {
            "ecoe" => Ok(Box::new(Ecoe::new(Schedule::from_json(&self.schedule)?, self.caps.clone()))),
            "uniform" => Ok(Box::new(UniformRandom::default())),
            "greedy" => Ok(Box::new(GreedyMle::default())),
            other => Err(MdpError::InvalidConfig(format!("unknown learner {other}; expected ecoe, uniform or greedy"))),
        }
    }
}

/// Draws a pair at `state` from a stationary policy.
pub(crate) fn sample_pair<R: Rng>(rng: &mut R, policy: &Policy, pairs: std::ops::Range<usize>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = pairs.start;
    for p in pairs {
        let w = policy.prob(p);
        if w > 0.0 {
            acc += w;
            last = p;
            if u < acc {
                return p;
            }
        }
    }
    last
}
