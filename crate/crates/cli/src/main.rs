use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use navattn_core::io::pipeline::{self, Workspace, MODEL_FILE, TRUNK_FILE};
use navattn_core::io::RunConfig;
use navattn_core::planner::PlanResult;
use navattn_core::saliency::SaliencySource;

#[derive(Parser)]
#[command(name = "navattn", version, about = "Attention-branch explanations for a navigation DQN")]
struct Cli {
    /// INI configuration file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stage 1: train the DQN and write a frozen trunk checkpoint.
    Train,
    /// Stage 2: distill the attention branch from a frozen trunk.
    Distill {
        /// Trunk checkpoint [default: <out>/trunk.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Greedy navigation trials.
    EvalNav {
        /// Trunk or model checkpoint [default: <out>/trunk.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Attention and VisualBackProp images, angle sweeps and per-action means.
    Explain {
        /// Model checkpoint [default: <out>/model.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        states: usize,
    },
    /// Deletion and insertion curves with AUC summary.
    Metrics {
        /// Model checkpoint [default: <out>/model.ckpt].
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        states: Option<usize>,
    },
    /// Plans one seeded task and dumps the tree.
    PlanDebug,
}

fn workspace(cli: &Cli) -> Result<Workspace> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(Workspace::new(cfg)?)
}

fn or_default(path: &Option<PathBuf>, out: &Path, file: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| out.join(file))
}

fn run(cli: Cli) -> Result<()> {
    let ws = workspace(&cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::Train => {
            let total = ws.cfg.dqn.episodes;
            let mut window = Vec::new();
            let art = pipeline::train(&ws, out, |e| {
                window.push(e.success);
                if window.len() == 100 || e.episode + 1 == total {
                    let rate = window.iter().filter(|s| **s).count() as f64 / window.len() as f64;
                    log::info!("episode {}/{total} epsilon {:.3} success {:.2}", e.episode + 1, e.epsilon, rate);
                    window.clear();
                }
            })?;
            if let Some(ep) = art.selected_episode {
                let v = art.validations.iter().find(|v| v.episode == ep).expect("selected round");
                println!(
                    "kept snapshot after {ep} episodes: validation {}/{} successes, {} collisions",
                    v.successes, v.trials, v.collisions
                );
            }
            println!("trunk written to {}", art.checkpoint.display());
        }
        Command::Distill { checkpoint } => {
            let trunk = or_default(checkpoint, out, TRUNK_FILE);
            let art = pipeline::distill(&ws, &trunk, out, |e| {
                log::info!(
                    "epoch {} lr {} loss {:.4} train {:.3} heldout {:.3}",
                    e.epoch,
                    e.lr,
                    e.train_loss,
                    e.train_agreement,
                    e.heldout_agreement
                );
            })?;
            let last = art.log.last().map_or(f64::NAN, |e| e.heldout_agreement);
            println!("dataset {} records, labels {:?}", art.dataset_size, art.label_histogram);
            println!("held-out agreement {last:.4}");
            println!("trunk sha256 {}", art.trunk_digest_after);
            println!("model written to {}", art.checkpoint.display());
        }
        Command::EvalNav { checkpoint, trials } => {
            let ck = or_default(checkpoint, out, TRUNK_FILE);
            let stats = pipeline::eval_nav(&ws, &ck, trials.unwrap_or(ws.cfg.eval.trials), out)?;
            println!(
                "successes {}/{} collisions {} mean final distance {:.3} m",
                stats.successes, stats.trials, stats.collisions, stats.mean_final_distance
            );
        }
        Command::Explain { checkpoint, states } => {
            let ck = or_default(checkpoint, out, MODEL_FILE);
            let report = pipeline::explain(&ws, &ck, *states, out)?;
            println!("explained {} states; per-action counts {:?}", report.states, report.averages.counts());
        }
        Command::Metrics { checkpoint, states } => {
            let ck = or_default(checkpoint, out, MODEL_FILE);
            let report = pipeline::metrics(&ws, &ck, states.unwrap_or(ws.cfg.eval.states), out)?;
            for s in SaliencySource::ALL {
                println!(
                    "{:<14} deletion AUC {:.4} insertion AUC {:.4}",
                    s.name(),
                    report.deletion_auc(s),
                    report.insertion_auc(s)
                );
            }
        }
        Command::PlanDebug => {
            let dbg = pipeline::plan_debug(&ws, out)?;
            match dbg.result {
                PlanResult::Path { cost, ref waypoints } => {
                    println!("path cost {cost:.3} m, {} waypoints, {} tree nodes", waypoints.len(), dbg.tree_nodes)
                }
                PlanResult::Infeasible => println!("infeasible after {} tree nodes", dbg.tree_nodes),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
