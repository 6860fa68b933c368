//! Seeded simulation of a learner against a model, regret accounting and
//! multi-seed experiments.
//!
//! Randomness: every run seed `s` drives three ChaCha8 generators seeded
//! with `s` on streams 1 (rewards), 2 (transitions); the learner is reset
//! with `splitmix64(s ^ 0x6c65_6172_6e65_7200)`. Seeds listed in an
//! experiment are used as run seeds directly.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MdpError, Result};
use crate::io::load_model;
use crate::learner::{Counters, Learner, LearnerConfig, ModelShape, StepTag};
use crate::lowerbound::{central_measure, information_value, vanilla_lower_bound, default_levels};
use crate::model::MdpModel;
use crate::solve::solve_optimal;

const REWARD_STREAM: u64 = 1;
const TRANSITION_STREAM: u64 = 2;
const LEARNER_TAG: u64 = 0x6c65_6172_6e65_7200;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn learner_seed(seed: u64) -> u64 {
    splitmix64(seed ^ LEARNER_TAG)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: u64,
    pub state: usize,
    pub pair: usize,
    pub reward: u8,
    pub next: usize,
    pub tag: StepTag,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    pub model: String,
    pub learner: String,
    pub config_hash: String,
    pub seed: u64,
    pub start_state: usize,
    pub records: Vec<StepRecord>,
    pub counts: Vec<u64>,
    pub cumulative_reward: f64,
    pub counters: Counters,
}

/// Short content hash of a learner configuration.
pub fn config_hash(config: &LearnerConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn draw_next<R: Rng>(rng: &mut R, row: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (s, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = s;
            if u < acc {
                return s;
            }
        }
    }
    last
}

pub fn simulate(model: &MdpModel, learner: &mut dyn Learner, horizon: u64, seed: u64, start_state: usize) -> Result<Trace> {
    simulate_tagged(model, learner, horizon, seed, start_state, String::new())
}

fn simulate_tagged(
    model: &MdpModel,
    learner: &mut dyn Learner,
    horizon: u64,
    seed: u64,
    start_state: usize,
    config_hash: String,
) -> Result<Trace> {
    if horizon == 0 {
        return Err(MdpError::Precondition("horizon must be at least 1".into()));
    }
    if start_state >= model.n_states() {
        return Err(MdpError::Precondition(format!("start state {start_state} out of range")));
    }
    let mut rewards = stream(seed, REWARD_STREAM);
    let mut transitions = stream(seed, TRANSITION_STREAM);
    learner.reset(learner_seed(seed), &ModelShape::of(model));
    let mut records = Vec::with_capacity(horizon as usize);
    let mut counts = vec![0u64; model.n_pairs()];
    let mut total = 0.0;
    let mut state = start_state;
    for t in 1..=horizon {
        let pair = learner.act(state);
        if pair >= model.n_pairs() || model.state_of(pair) != state {
            return Err(MdpError::IllegalAction { step: t, pair, state: model.state_label(state).to_string() });
        }
        let reward = u8::from(rewards.gen::<f64>() < model.reward(pair));
        let next = draw_next(&mut transitions, model.kernel(pair));
        learner.observe(state, pair, reward as f64, next);
        counts[pair] += 1;
        total += reward as f64;
        records.push(StepRecord { t, state, pair, reward, next, tag: learner.last_tag() });
        state = next;
    }
    Ok(Trace {
        model: model.name().to_string(),
        learner: learner.name().to_string(),
        config_hash,
        seed,
        start_state,
        records,
        counts,
        cumulative_reward: total,
        counters: learner.counters(),
    })
}

pub fn write_trace_csv(trace: &Trace, model: &MdpModel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "state", "action", "reward", "next_state", "phase", "class"])?;
    for r in &trace.records {
        w.write_record([
            r.t.to_string().as_str(),
            model.state_label(r.state),
            model.action_label(r.pair),
            if r.reward == 1 { "1" } else { "0" },
            model.state_label(r.next),
            r.tag.phase.label(),
            r.tag.class_label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Powers of two up to the horizon, plus the horizon itself.
pub fn regret_grid(horizon: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (0..64).map(|k| 1u64 << k).take_while(|&t| t <= horizon).collect();
    if grid.last() != Some(&horizon) {
        grid.push(horizon);
    }
    grid
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretReport {
    pub grid: Vec<u64>,
    /// `T g* - sum of rewards`.
    pub empirical: Vec<f64>,
    /// Sum of the Bellman gaps of the played pairs.
    pub pseudo: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn regret(trace: &Trace, model: &MdpModel) -> Result<RegretReport> {
    let sol = solve_optimal(model)?;
    let grid = regret_grid(trace.records.len() as u64);
    let (mut empirical, mut pseudo) = (Vec::new(), Vec::new());
    let (mut rsum, mut gsum) = (0.0, 0.0);
    let mut next = 0;
    for r in &trace.records {
        rsum += r.reward as f64;
        gsum += sol.gaps[r.pair].max(0.0);
        if next < grid.len() && r.t == grid[next] {
            empirical.push(r.t as f64 * sol.gain - rsum);
            pseudo.push(gsum);
            next += 1;
        }
    }
    Ok(RegretReport { grid, empirical, pseudo, counts: trace.counts.clone() })
}

/// Experiment description as read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub learners: Vec<LearnerConfig>,
    pub horizon: u64,
    /// May be left empty for the caller to fill in.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// State label or index; defaults to the first state.
    #[serde(default)]
    pub start_state: Option<serde_json::Value>,
    pub out_dir: PathBuf,
    #[serde(default = "yes")]
    pub write_traces: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Reads a config; relative model and output paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.model.is_relative() {
            cfg.model = base.join(&cfg.model);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn start_index(&self, model: &MdpModel) -> Result<usize> {
        match &self.start_state {
            None => Ok(0),
            Some(serde_json::Value::Number(n)) => n
                .as_u64()
                .map(|n| n as usize)
                .filter(|&n| n < model.n_states())
                .ok_or_else(|| MdpError::InvalidConfig(format!("start_state {n} out of range"))),
            Some(serde_json::Value::String(s)) => {
                model.state_index(s).ok_or_else(|| MdpError::InvalidConfig(format!("unknown start_state {s}")))
            }
            Some(other) => Err(MdpError::InvalidConfig(format!("start_state must be a label or index, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_pseudo_regret: f64,
    pub final_empirical_regret: f64,
    pub counters: Counters,
    pub counts: Vec<u64>,
    pub trace_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub grid: Vec<u64>,
    pub pseudo_mean: Vec<f64>,
    pub pseudo_stderr: Vec<f64>,
    pub empirical_mean: Vec<f64>,
    pub empirical_stderr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VisitRate {
    pub pair: String,
    /// Mean `N_T(p) / ln T` across seeds.
    pub observed: f64,
    /// Central measure scaled to unit information.
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnerSummary {
    pub learner: String,
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
    pub curve: Curve,
    /// Mean pseudo-regret at the horizon divided by `ln T`.
    pub tail_ratio: f64,
    pub visit_rates: Vec<VisitRate>,
    pub max_panics: u64,
    pub max_travels: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub model: String,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub lower_bound: Option<f64>,
    pub learners: Vec<LearnerSummary>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Central measure rescaled so its information value is one: the visit
/// rates per `ln T` of an asymptotically optimal learner.
pub fn predicted_visit_rates(model: &MdpModel) -> Result<Vec<f64>> {
    let central = central_measure(model)?;
    let info = information_value(&central.measure, model, 0.0)?;
    Ok(central.measure.iter().map(|m| m / info).collect())
}

/// Runs one learner on many seeds in parallel; results keep seed order.
pub fn run_seeds(model: &MdpModel, config: &LearnerConfig, horizon: u64, seeds: &[u64], start: usize) -> Result<Vec<Trace>> {
    let hash = config_hash(config);
    seeds
        .par_iter()
        .map(|&seed| {
            let mut learner = config.build()?;
            simulate_tagged(model, learner.as_mut(), horizon, seed, start, hash.clone())
        })
        .collect()
}

pub fn summarize(model: &MdpModel, config: &LearnerConfig, traces: &[Trace], files: &[Option<String>], predicted: Option<&[f64]>) -> Result<LearnerSummary> {
    let reports: Vec<RegretReport> = traces.iter().map(|t| regret(t, model)).collect::<Result<_>>()?;
    let grid = reports[0].grid.clone();
    let column = |f: &dyn Fn(&RegretReport) -> &Vec<f64>, i: usize| reports.iter().map(|r| f(r)[i]).collect::<Vec<f64>>();
    let mut curve = Curve { grid: grid.clone(), pseudo_mean: vec![], pseudo_stderr: vec![], empirical_mean: vec![], empirical_stderr: vec![] };
    for i in 0..grid.len() {
        let (m, s) = mean_stderr(&column(&|r| &r.pseudo, i));
        curve.pseudo_mean.push(m);
        curve.pseudo_stderr.push(s);
        let (m, s) = mean_stderr(&column(&|r| &r.empirical, i));
        curve.empirical_mean.push(m);
        curve.empirical_stderr.push(s);
    }
    let horizon = *grid.last().expect("non-empty grid");
    let log_t = (horizon as f64).ln().max(1.0);
    let visit_rates = (0..model.n_pairs())
        .map(|p| VisitRate {
            pair: model.pair_label(crate::PairId(p)),
            observed: traces.iter().map(|t| t.counts[p] as f64).sum::<f64>() / traces.len() as f64 / log_t,
            predicted: predicted.map(|v| v[p]),
        })
        .collect();
    let runs = traces
        .iter()
        .zip(&reports)
        .zip(files)
        .map(|((t, r), f)| RunSummary {
            seed: t.seed,
            final_pseudo_regret: *r.pseudo.last().expect("non-empty"),
            final_empirical_regret: *r.empirical.last().expect("non-empty"),
            counters: t.counters.clone(),
            counts: t.counts.clone(),
            trace_file: f.clone(),
        })
        .collect();
    Ok(LearnerSummary {
        learner: config.algo.clone(),
        config_hash: config_hash(config),
        runs,
        tail_ratio: curve.pseudo_mean.last().copied().unwrap_or(0.0) / log_t,
        curve,
        visit_rates,
        max_panics: traces.iter().map(|t| t.counters.panics).max().unwrap_or(0),
        max_travels: traces.iter().map(|t| t.counters.travels).max().unwrap_or(0),
    })
}

/// Runs the (learner x seed) grid, writes traces and `summary.json` into
/// the output directory and returns the summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    if config.seeds.is_empty() || config.learners.is_empty() {
        return Err(MdpError::InvalidConfig("an experiment needs at least one learner and one seed".into()));
    }
    if config.horizon == 0 {
        return Err(MdpError::InvalidConfig("horizon must be at least 1".into()));
    }
    let model = load_model(&config.model)?;
    model.require_communicating()?;
    let start = config.start_index(&model)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let lower_bound = vanilla_lower_bound(&model, &default_levels()).ok().map(|v| v.value);
    let predicted = predicted_visit_rates(&model).ok();
    let mut learners = Vec::new();
    for lc in &config.learners {
        let traces = run_seeds(&model, lc, config.horizon, &config.seeds, start)?;
        let mut files = Vec::new();
        for t in &traces {
            if config.write_traces {
                let name = format!("trace_{}_{}_{}.csv", lc.algo, t.config_hash, t.seed);
                write_trace_csv(t, &model, &config.out_dir.join(&name))?;
                files.push(Some(name));
            } else {
                files.push(None);
            }
        }
        learners.push(summarize(&model, lc, &traces, &files, predicted.as_deref())?);
    }
    let summary = ExperimentSummary {
        model: model.name().to_string(),
        horizon: config.horizon,
        seeds: config.seeds.clone(),
        lower_bound,
        learners,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(config.out_dir.join("summary.json"), json)?;
    Ok(summary)
}
