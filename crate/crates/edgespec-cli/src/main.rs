//! Command-line front end: decoding studies, training, evaluation, energy
//! sweeps, and report rendering.
//!
//! Results land in the output directory resolved as: `--out-dir` flag,
//! else the `EDGESPEC_OUT_DIR` environment variable, else the current
//! directory. Every failure prints `error[<kind>]: <message>` on stderr
//! and exits with a kind-specific code (see [`exit_code`]).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgespec::harness::{
    decode_study, read_metrics_csv, render_report, rollout, sweep_w, write_metrics_csv,
    write_swap_trace_csv, DecodeStudyParams, PolicyKind,
};
use edgespec::net::ScenarioConfig;
use edgespec::sac::{evaluate_policy, load_checkpoint, save_checkpoint, train, write_curve_csv};
use edgespec::{Error, Result};

/// Environment variable consulted for the output directory when
/// `--out-dir` is not given.
const OUT_DIR_ENV: &str = "EDGESPEC_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "edgespec",
    version,
    about = "Collaborative-decoding and edge-allocation experiment driver",
    after_help = "Output directory precedence: --out-dir, then $EDGESPEC_OUT_DIR, then '.'.\n\
                  Exit codes: 2 config, 3 contract, 4 infeasible, 5 diverged, 6 checkpoint, 7 io."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every scenario-driven subcommand.
#[derive(Args)]
struct Common {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed: fixes the environment streams and network init.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for result files (see precedence note).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep decoding engines over speculation depths and uplink rates.
    DecodeStudy {
        #[command(flatten)]
        common: Common,
        /// Number of independent runs; run seeds are seed..seed+runs.
        #[arg(long, default_value_t = 10)]
        runs: u64,
        /// Draft-model divergence from the target, in [0, 1].
        #[arg(long, default_value_t = 0.1)]
        smoothing: f64,
        /// Value for the run_id column.
        #[arg(long, default_value = "decode-study")]
        run_id: String,
    },
    /// Train a learner on a scenario; writes a checkpoint and the curve.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Roll one association policy over a scenario episode.
    Eval {
        #[command(flatten)]
        common: Common,
        /// One of: random, max-sinr, max-compute, swap-sac.
        #[arg(long)]
        policy: String,
        /// Trained checkpoint; required by swap-sac.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the association stage's accepted-exchange trace.
        #[arg(long)]
        swap_trace: bool,
        /// Value for the run_id column.
        #[arg(long, default_value = "eval")]
        run_id: String,
    },
    /// Train and evaluate the learned policy across energy weights.
    SweepW {
        #[command(flatten)]
        common: Common,
        /// Comma-separated energy weights.
        #[arg(long, default_value = "20,60,100")]
        weights: String,
        /// Number of independent runs; run seeds are seed..seed+runs.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Summarize one or more metrics CSV files to stdout.
    Report {
        /// Metrics CSV files produced by the other subcommands.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Exit code for an error kind; success is 0.
fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        "config" => 2,
        "contract" => 3,
        "infeasible" => 4,
        "diverged" => 5,
        "checkpoint" => 6,
        _ => 7, // io
    }
}

/// Resolves the output directory (flag > environment > `.`) and creates it.
fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_config(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::from_toml_path(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DecodeStudy { common, runs, smoothing, run_id } => {
            if !(0.0..=1.0).contains(&smoothing) {
                return Err(Error::Config(format!(
                    "smoothing must be in [0, 1], got {smoothing}"
                )));
            }
            let out = resolve_out_dir(common.out_dir)?;
            let params = DecodeStudyParams {
                seeds: (common.seed..common.seed + runs).collect(),
                smoothing,
                ..DecodeStudyParams::default()
            };
            let rows = decode_study(&params, &run_id)?;
            let path = out.join("decode-study.csv");
            write_metrics_csv(&path, &rows)?;
            wrote(&path);
        }
        Command::Train { common } => {
            let cfg = load_config(&common.config)?;
            let out = resolve_out_dir(common.out_dir)?;
            let outcome = train(&cfg, common.seed)?;

            let ckpt = out.join(format!("checkpoint-{}.json", common.seed));
            save_checkpoint(&ckpt, &outcome.learner, &cfg)?;
            wrote(&ckpt);

            let curve = out.join(format!("training-curve-{}.csv", common.seed));
            write_curve_csv(&curve, &outcome.curve)?;
            wrote(&curve);

            let score = evaluate_policy(&cfg, &outcome.learner, common.seed)?;
            println!("deterministic mean reward: {score}");
        }
        Command::Eval { common, policy, checkpoint, swap_trace, run_id } => {
            let cfg = load_config(&common.config)?;
            let out = resolve_out_dir(common.out_dir)?;
            let policy: PolicyKind = policy.parse()?;

            let learner = match (&checkpoint, policy.needs_learner()) {
                (Some(path), _) => Some(load_checkpoint(path, &cfg)?),
                (None, true) => {
                    return Err(Error::Config(format!(
                        "policy '{policy}' needs --checkpoint"
                    )));
                }
                (None, false) => None,
            };

            let outcome = rollout(&cfg, policy, learner.as_ref(), common.seed, &run_id)?;
            let mut rows = outcome.per_slot;
            rows.push(outcome.aggregate);
            let path = out.join(format!("eval-{policy}-{}.csv", common.seed));
            write_metrics_csv(&path, &rows)?;
            wrote(&path);

            if swap_trace {
                let path = out.join(format!("swap-trace-{policy}-{}.csv", common.seed));
                write_swap_trace_csv(&path, &outcome.swap_trace)?;
                wrote(&path);
            }
        }
        Command::SweepW { common, weights, runs } => {
            let cfg = load_config(&common.config)?;
            let out = resolve_out_dir(common.out_dir)?;
            let weights = parse_weights(&weights)?;
            let seeds: Vec<u64> = (common.seed..common.seed + runs).collect();
            let rows = sweep_w(&cfg, &weights, &seeds, "sweep-w")?;
            let path = out.join("sweep-w.csv");
            write_metrics_csv(&path, &rows)?;
            wrote(&path);
        }
        Command::Report { inputs } => {
            let mut rows = Vec::new();
            for input in &inputs {
                rows.extend(read_metrics_csv(input)?);
            }
            print!("{}", render_report(&rows));
        }
    }
    Ok(())
}

fn parse_weights(text: &str) -> Result<Vec<f64>> {
    let weights: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad weight '{s}' in --weights")))
        })
        .collect::<Result<_>>()?;
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("--weights needs non-negative numbers".into()));
    }
    Ok(weights)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
