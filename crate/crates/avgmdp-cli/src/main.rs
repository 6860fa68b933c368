//! `avgmdp`: solve, level, decompose and bound average-reward MDPs, and run
//! learning experiments. Every command prints JSON.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use avgmdp::io::{load_model, model_to_json, pair_list, pair_map, pair_values_from_json};
use avgmdp::leveling::{level, leveled_optimal_pairs};
use avgmdp::lowerbound::{
    default_levels, finest_resolution, policywise_oracle, regularized_lower_bound, simple_bound, vanilla_lower_bound,
    Regularization,
};
use avgmdp::measures::{recompose, unichain_decomposition};
use avgmdp::sim::{run_experiment, ExperimentConfig};
use avgmdp::solve::{classify_pairs, solve_optimal};
use avgmdp::structural::{diameter, gain_gap, worst_diameter};
use avgmdp::verify::run_property_suite;
use avgmdp::{MdpError, MdpModel, PairId};

#[derive(Parser)]
#[command(name = "avgmdp", version, about = "Average-reward MDP toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the JSON result to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Indent the JSON output.
    #[arg(long, global = true)]
    pretty: bool,
}

#[derive(Args)]
struct ModelArg {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal gain, bias, gaps, pair classes and diameters.
    Solve(ModelArg),
    /// Raise the rewards of pairs whose gap is below epsilon.
    Level {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        epsilon: f64,
    },
    /// Split an invariant measure into unichain terms.
    Decompose {
        #[command(flatten)]
        model: ModelArg,
        /// JSON file (or inline JSON object) keyed by "state,action".
        #[arg(long)]
        measure: String,
    },
    /// Regularized lower bound at one level, or the vanilla bound along a
    /// decreasing sequence of levels.
    LowerBound {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, requires_all = ["eunif", "ereg"])]
        eflat: Option<f64>,
        #[arg(long, requires_all = ["eflat", "ereg"])]
        eunif: Option<f64>,
        #[arg(long, requires_all = ["eflat", "eunif"])]
        ereg: Option<f64>,
        /// JSON list of [flat, unif, reg] triples (file or inline).
        #[arg(long, conflicts_with = "eflat")]
        levels: Option<String>,
    },
    /// Run an experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for seeds.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the randomized property checks.
    Verify {
        /// Random draws per check.
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Closed-form bound next to the computed bound and the policy grid oracle.
    BoundCheck(ModelArg),
}

fn invalid(msg: impl Into<String>) -> MdpError {
    MdpError::InvalidConfig(msg.into())
}

fn master_seed() -> Result<u64, MdpError> {
    match std::env::var("AVGMDP_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| invalid(format!("AVGMDP_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn inline_or_file(arg: &str) -> Result<Value, MdpError> {
    let text = if Path::new(arg).is_file() { std::fs::read_to_string(arg)? } else { arg.to_string() };
    Ok(serde_json::from_str(&text)?)
}

fn check_unit(name: &str, v: f64) -> Result<f64, MdpError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(format!("--{name} must lie in [0, 1], got {v}")))
    }
}

fn labels(model: &MdpModel, pairs: impl IntoIterator<Item = usize>) -> Vec<String> {
    pairs.into_iter().map(|p| model.pair_label(PairId(p))).collect()
}

fn solve(model: &MdpModel) -> Result<Value, MdpError> {
    let sol = solve_optimal(model)?;
    let cls = classify_pairs(model, &sol);
    let weak: Vec<usize> = (0..model.n_pairs()).filter(|&p| cls.weakly_optimal[p]).collect();
    let components: Vec<Value> = cls
        .components
        .iter()
        .map(|c| {
            json!({
                "states": c.states.iter().map(|&s| model.state_label(s)).collect::<Vec<_>>(),
                "pairs": labels(model, c.pairs.iter().copied()),
            })
        })
        .collect();
    let bias: serde_json::Map<String, Value> =
        (0..model.n_states()).map(|s| (model.state_label(s).to_string(), json!(sol.bias[s]))).collect();
    Ok(json!({
        "model": model.name(),
        "gain": sol.gain,
        "bias": bias,
        "gaps": pair_map(model, &sol.gaps),
        "policy": labels(model, sol.policy.iter().copied()),
        "weakly_optimal": labels(model, weak),
        "optimal": pair_list(model, &cls.optimal_pairs()),
        "components": components,
        "diameter": diameter(model)?,
        "worst_diameter": worst_diameter(model).ok(),
        "gain_gap": gain_gap(model).ok().filter(|g| g.is_finite()),
    }))
}

fn run(cli: Cli) -> Result<Value, MdpError> {
    match cli.command {
        Command::Solve(m) => solve(&load_model(&m.model)?),
        Command::Level { model, epsilon } => {
            let m = load_model(&model.model)?;
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return Err(invalid(format!("--epsilon must be non-negative, got {epsilon}")));
            }
            let lv = level(&m, epsilon)?;
            let lp = leveled_optimal_pairs(&m, epsilon)?;
            Ok(json!({
                "epsilon": epsilon,
                "bumped": pair_list(&m, &lv.bumped),
                "leveled_optimal": pair_list(&m, &lp.pairs),
                "model": model_to_json(&lv.model),
            }))
        }
        Command::Decompose { model, measure } => {
            let m = load_model(&model.model)?;
            let mu = pair_values_from_json(&m, &inline_or_file(&measure)?)?;
            let terms = unichain_decomposition(&m, &mu)?;
            let back = recompose(&m, &terms);
            let error = back.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let terms: Vec<Value> = terms
                .iter()
                .map(|t| json!({"weight": t.weight, "pairs": pair_list(&m, &t.pairs), "measure": pair_map(&m, &t.measure)}))
                .collect();
            Ok(json!({"terms": terms, "reconstruction_error": error}))
        }
        Command::LowerBound { model, eflat, eunif, ereg, levels } => {
            let m = load_model(&model.model)?;
            if let (Some(f), Some(u), Some(r)) = (eflat, eunif, ereg) {
                let eps = Regularization::new(check_unit("eflat", f)?, check_unit("eunif", u)?, check_unit("ereg", r)?);
                let sol = regularized_lower_bound(&m, eps)?;
                return Ok(json!({
                    "value": sol.value,
                    "measure": pair_map(&m, &sol.measure),
                    "cuts": sol.cuts.len(),
                    "iterations": sol.iterations,
                    "converged": sol.converged,
                    "unif_used": sol.unif_used,
                    "unif_clamped": sol.unif_clamped,
                    "information": sol.information,
                }));
            }
            let lv = match levels {
                None => default_levels(),
                Some(arg) => {
                    let rows: Vec<[f64; 3]> = serde_json::from_value(inline_or_file(&arg)?)
                        .map_err(|e| invalid(format!("--levels must be a list of [flat, unif, reg]: {e}")))?;
                    rows.iter()
                        .map(|r| Ok(Regularization::new(check_unit("levels", r[0])?, check_unit("levels", r[1])?, check_unit("levels", r[2])?)))
                        .collect::<Result<Vec<_>, MdpError>>()?
                }
            };
            let v = vanilla_lower_bound(&m, &lv)?;
            Ok(serde_json::to_value(v)?)
        }
        Command::Run { config, jobs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if cfg.seeds.is_empty() {
                cfg.seeds = vec![master_seed()?];
            }
            with_jobs(jobs, || run_experiment(&cfg)).and_then(|s| Ok(serde_json::to_value(s)?))
        }
        Command::Verify { trials, jobs } => {
            if trials == 0 {
                return Err(invalid("--trials must be positive"));
            }
            let seed = master_seed()?;
            let checks = with_jobs(jobs, || run_property_suite(seed, trials))?;
            let all = checks.iter().all(|c| c.passed);
            for c in &checks {
                eprintln!("{} {} ({} of {} failed)", if c.passed { "PASS" } else { "FAIL" }, c.name, c.failures, c.trials);
            }
            let out = json!({"seed": seed, "passed": all, "checks": checks});
            if !all {
                emit(&out, cli.out.as_deref(), cli.pretty)?;
                return Err(MdpError::Precondition("some property checks failed".into()));
            }
            Ok(out)
        }
        Command::BoundCheck(m) => {
            let m = load_model(&m.model)?;
            let simple = simple_bound(&m)?;
            let vanilla = vanilla_lower_bound(&m, &default_levels())?;
            let oracle = policywise_oracle(&m, finest_resolution(&m, 20_000)).ok();
            let oracle_value = oracle.as_ref().map(|o| o.value);
            let within = vanilla.value >= 0.0
                && vanilla.value <= simple + 1e-9
                && oracle_value.is_none_or(|o| vanilla.value <= 1.05 * o + 1e-9);
            Ok(json!({
                "simple_bound": simple,
                "lower_bound": vanilla.value,
                "converged": vanilla.converged,
                "oracle": oracle_value,
                "oracle_resolution": oracle.map(|o| o.resolution),
                "sandwich_holds": within,
            }))
        }
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T, MdpError> + Send) -> Result<T, MdpError> {
    match jobs {
        None => f(),
        Some(0) => Err(invalid("--jobs must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(format!("cannot start {n} workers: {e}")))?
            .install(f),
    }
}

fn emit(value: &Value, out: Option<&Path>, pretty: bool) -> Result<(), MdpError> {
    let mut text = if pretty { serde_json::to_string_pretty(value)? } else { serde_json::to_string(value)? };
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn exit_code(e: &MdpError) -> u8 {
    if e.is_non_convergence() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("error: {}", msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let (out, pretty) = (cli.out.clone(), cli.pretty);
    match run(cli).and_then(|v| emit(&v, out.as_deref(), pretty)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
