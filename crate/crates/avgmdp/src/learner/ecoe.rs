//! ECoE*: explore while the likelihood-ratio test says information is
//! lacking, co-explore across optimal components with the square trick,
//! exploit the leveled optimal pairs otherwise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::estimator::{Estimator, ModelShape};
use super::schedule::{dyadic_floor, skeleton_at_log, Regularizers, Schedule};
use super::{sample_pair, Counters, Learner, Phase, StepTag};
use crate::chain::structure;
use crate::error::Result;
use crate::leveling::{leveled_optimal_pairs_with, LeveledPairs};
use crate::lowerbound::{confusing_weighted_kl_min, regularized_lower_bound_in, BoundContext, Candidates, Regularization};
use crate::measures::{covering_measure, induced_policy};
use crate::model::{MdpModel, Policy};
use crate::solve::{solve_optimal, OptimalSolution};

/// Knobs that trade computation for freshness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    /// Recompute the exploration measure at every exploring phase instead
    /// of once per dyadic epoch.
    pub refresh_every_phase: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GlrOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub explore: bool,
}

fn glr_with(
    mhat: &MdpModel,
    sol: &OptimalSolution,
    leveled: &[bool],
    counts: &[u64],
    log_t: f64,
    eps: &Regularizers,
    candidates: &Candidates,
) -> GlrOutcome {
    let threshold = (1.0 + eps.test) * log_t;
    let protected: Vec<bool> = skeleton_at_log(counts, log_t).iter().zip(leveled).map(|(a, b)| *a || *b).collect();
    let weights: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    match confusing_weighted_kl_min(&weights, mhat, &protected, candidates, sol.gain) {
        Ok(inner) => GlrOutcome { statistic: inner.value, threshold, explore: inner.value <= threshold },
        Err(_) => GlrOutcome { statistic: f64::NAN, threshold, explore: true },
    }
}

/// Likelihood-ratio exploration test on the current estimate. Returns
/// `explore = true` when some confusing model is not yet rejected, and also
/// whenever the estimate cannot be solved.
pub fn glr_exploration_test(est: &Estimator, t: u64, eps: &Regularizers) -> GlrOutcome {
    glr_exploration_test_at_log(est, (t.max(1) as f64).ln(), eps)
}

/// Same test with the time given by its logarithm.
pub fn glr_exploration_test_at_log(est: &Estimator, log_t: f64, eps: &Regularizers) -> GlrOutcome {
    let threshold = (1.0 + eps.test) * log_t;
    let fail = GlrOutcome { statistic: f64::NAN, threshold, explore: true };
    let mhat = est.mle();
    let Ok(sol) = solve_optimal(&mhat) else { return fail };
    let Ok(lp) = leveled_optimal_pairs_with(&mhat, &sol, eps.flat) else { return fail };
    let Ok(candidates) = Candidates::enumerate(&mhat) else { return fail };
    glr_with(&mhat, &sol, &lp.mask(mhat.n_pairs()), est.counts(), log_t, eps, &candidates)
}

/// Uniform over the leveled optimal actions, uniform over all actions at
/// states without one.
pub fn exploitation_policy(mhat: &MdpModel, leveled: &LeveledPairs) -> Policy {
    Policy::uniform_over(mhat, &leveled.mask(mhat.n_pairs()))
}

/// Policy induced by the regularized optimal measure, blended with the
/// covering measure when the measure misses a state. Returns the policy and
/// the raw measure.
pub fn exploration_policy(ctx: &BoundContext, eps: &Regularizers, start: Option<&[f64]>) -> Result<(Policy, Vec<f64>)> {
    let model = ctx.model;
    let lb = regularized_lower_bound_in(ctx, Regularization::new(eps.flat, eps.unif, eps.reg), start)?;
    let mass: f64 = lb.measure.iter().sum();
    let starved = (0..model.n_states()).any(|s| model.pairs_of(s).map(|p| lb.measure[p]).sum::<f64>() <= 1e-12 * mass.max(1e-300));
    let measure = if mass <= 0.0 || lb.value == 0.0 {
        covering_measure(model)?.measure
    } else if starved {
        let cover = covering_measure(model)?.measure;
        let w = eps.unif.clamp(0.0, 1.0);
        lb.measure.iter().zip(&cover).map(|(m, c)| (1.0 - w) * m + w * mass * c).collect()
    } else {
        lb.measure.clone()
    };
    Ok((induced_policy(model, &measure), lb.measure))
}

/// True when the least visited leveled optimal pair is visited less than the
/// square root of the least visited pair of the current component.
pub fn square_trick_check(counts: &[u64], leveled_pairs: &[usize], current: &[usize]) -> bool {
    let min_over = |ps: &[usize]| ps.iter().map(|&p| counts[p]).min();
    match (min_over(leveled_pairs), min_over(current)) {
        (Some(global), Some(local)) => (global as f64) < (local as f64).sqrt(),
        _ => false,
    }
}

struct ExploreCache {
    epoch: u64,
    leveled: Vec<usize>,
    computed_at: u64,
    policy: Policy,
    measure: Vec<f64>,
}

enum Mode {
    Deciding,
    Exploiting { start: usize, inside: Vec<bool>, policy: Policy, first: bool },
}

pub struct Ecoe {
    schedule: Schedule,
    caps: Caps,
    est: Option<Estimator>,
    rng: ChaCha8Rng,
    steps: u64,
    explore_count: u64,
    mode: Mode,
    pending: StepTag,
    last: StepTag,
    candidates: Option<(Vec<Vec<usize>>, Candidates)>,
    cache: Option<ExploreCache>,
    counters: Counters,
}

struct Plan {
    mhat: MdpModel,
    sol: OptimalSolution,
    leveled: LeveledPairs,
}

impl Ecoe {
    pub fn new(schedule: Schedule, caps: Caps) -> Self {
        Self {
            schedule,
            caps,
            est: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            explore_count: 0,
            mode: Mode::Deciding,
            pending: StepTag::NONE,
            last: StepTag::NONE,
            candidates: None,
            cache: None,
            counters: Counters::default(),
        }
    }

    pub fn estimator(&self) -> Option<&Estimator> {
        self.est.as_ref()
    }

    pub fn explore_count(&self) -> u64 {
        self.explore_count
    }

    fn candidates_for(&mut self, mhat: &MdpModel) -> Option<Candidates> {
        let sig = Candidates::signature(mhat);
        if let Some((s, c)) = &self.candidates {
            if *s == sig {
                return Some(c.clone());
            }
        }
        let c = Candidates::enumerate(mhat).ok()?;
        self.candidates = Some((sig, c.clone()));
        Some(c)
    }

    fn plan(&self, eps: &Regularizers) -> Option<Plan> {
        let mhat = self.est.as_ref().expect("reset before use").mle();
        if !mhat.is_communicating() {
            return None;
        }
        let sol = solve_optimal(&mhat).ok()?;
        let leveled = leveled_optimal_pairs_with(&mhat, &sol, eps.flat).ok()?;
        Some(Plan { mhat, sol, leveled })
    }

    fn explore_policy(&mut self, plan: &Plan, candidates: Candidates, eps: &Regularizers, t: u64) -> Policy {
        let epoch = dyadic_floor(self.explore_count);
        if let Some(c) = &self.cache {
            let fresh = c.epoch == epoch && c.leveled == plan.leveled.pairs && t < 2 * c.computed_at;
            if fresh && !self.caps.refresh_every_phase {
                return c.policy.clone();
            }
        }
        let start = self.cache.as_ref().map(|c| c.measure.clone());
        let computed = BoundContext::with_parts(&plan.mhat, plan.sol.clone(), candidates)
            .and_then(|ctx| exploration_policy(&ctx, eps, start.as_deref()));
        self.counters.lower_bound_solves += 1;
        match computed {
            Ok((policy, measure)) => {
                self.cache =
                    Some(ExploreCache { epoch, leveled: plan.leveled.pairs.clone(), computed_at: t, policy: policy.clone(), measure });
                policy
            }
            Err(_) => Policy::uniform(&plan.mhat),
        }
    }

    fn decide(&mut self, state: usize) -> usize {
        let t = self.steps + 1;
        let eps = self.schedule.floored(t, self.explore_count);
        let Some(plan) = self.plan(&eps) else {
            // the estimate is not communicating yet: wander uniformly
            let prior = self.est.as_ref().expect("reset before use").shape().prior().clone();
            self.pending = StepTag { phase: Phase::Explore, phase_start: false };
            return sample_pair(&mut self.rng, &Policy::uniform(&prior), prior.pairs_of(state));
        };
        let pairs = plan.mhat.pairs_of(state);
        let plus = exploitation_policy(&plan.mhat, &plan.leveled);
        let (kernel, _) = plus.markov_reward_process(&plan.mhat);
        let component = plan.leveled.components.iter().find(|c| c.states.contains(&state));
        let recurrent = structure(&kernel).is_recurrent(state) && component.is_some();
        let Some(candidates) = self.candidates_for(&plan.mhat) else {
            self.pending = StepTag { phase: Phase::Explore, phase_start: false };
            return sample_pair(&mut self.rng, &Policy::uniform(&plan.mhat), pairs);
        };
        let est = self.est.as_ref().expect("reset before use");
        let explore = !recurrent
            || glr_with(&plan.mhat, &plan.sol, &plan.leveled.mask(plan.mhat.n_pairs()), est.counts(), (t as f64).ln(), &eps, &candidates).explore;
        let travel = !explore && {
            let comp = component.expect("recurrent implies a component");
            square_trick_check(est.counts(), &plan.leveled.pairs, &comp.pairs)
        };
        if explore || travel {
            let minus = self.explore_policy(&plan, candidates, &eps, t);
            let phase = if explore { Phase::Explore } else { Phase::CoExplore };
            self.pending = StepTag { phase, phase_start: false };
            return sample_pair(&mut self.rng, &minus, pairs);
        }
        let comp = component.expect("recurrent implies a component");
        let mut inside = vec![false; plan.mhat.n_states()];
        comp.states.iter().for_each(|&s| inside[s] = true);
        self.counters.exploit_phases += 1;
        let pair = sample_pair(&mut self.rng, &plus, pairs);
        self.pending = StepTag { phase: Phase::Exploit, phase_start: true };
        self.mode = Mode::Exploiting { start: state, inside, policy: plus, first: false };
        pair
    }
}

impl Learner for Ecoe {
    fn name(&self) -> &str {
        "ecoe"
    }

    fn reset(&mut self, seed: u64, shape: &ModelShape) {
        let (schedule, caps) = (self.schedule.clone(), self.caps.clone());
        *self = Self::new(schedule, caps);
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.est = Some(Estimator::new(shape.clone()));
    }

    fn act(&mut self, state: usize) -> usize {
        match &mut self.mode {
            Mode::Deciding => self.decide(state),
            Mode::Exploiting { policy, first, .. } => {
                self.pending = StepTag { phase: Phase::Exploit, phase_start: *first };
                *first = false;
                let range = self.est.as_ref().expect("reset before use").shape().prior().pairs_of(state);
                sample_pair(&mut self.rng, policy, range)
            }
        }
    }

    fn observe(&mut self, _state: usize, pair: usize, reward: f64, next: usize) {
        let mut tag = self.pending;
        if let Mode::Exploiting { start, inside, .. } = &self.mode {
            if !inside[next] {
                tag.phase = Phase::Panic;
                self.counters.panics += 1;
                self.mode = Mode::Deciding;
            } else if next == *start {
                self.mode = Mode::Deciding;
            }
        }
        match tag.phase {
            Phase::Explore => self.counters.explore_steps += 1,
            Phase::CoExplore => {
                self.counters.coexplore_steps += 1;
                if self.last.phase != Phase::CoExplore {
                    self.counters.travels += 1;
                }
            }
            _ => {}
        }
        if tag.in_minus() {
            self.explore_count += 1;
        }
        self.est.as_mut().expect("reset before use").observe(pair, reward, next);
        self.steps += 1;
        self.last = tag;
    }

    fn last_tag(&self) -> StepTag {
        self.last
    }

    fn counters(&self) -> Counters {
        self.counters.clone()
    }
}
