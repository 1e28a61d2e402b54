use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sdnsync::harness::{
    compare_dir, run_experiment, run_sweep, write_outputs, write_sweep_csv, ExperimentSpec,
    SweepSpec,
};

/// Multi-domain SDN controller-synchronization simulator and benchmark.
#[derive(Parser)]
#[command(name = "sdnsync", version)]
struct Cli {
    /// Worker threads for (policy, seed) cells; 0 = one per CPU.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every policy listed in a TOML experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a stored checkpoint greedily, without training.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read summary.json from a run directory and write report.json with
    /// the d2q-vs-baselines percentage comparison.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run a grid sweep over domain count, sync budget, and deadline mix.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_dir(cli_out: Option<PathBuf>, spec_out: &Option<String>) -> PathBuf {
    cli_out
        .or_else(|| spec_out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> sdnsync::error::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let text = std::fs::read_to_string(&config)?;
            let mut spec = ExperimentSpec::from_toml(&text)?;
            if let Some(seed) = seed {
                spec.seeds = vec![seed];
            }
            let dir = output_dir(out, &spec.output_dir);
            let output = run_experiment(&spec, cli.threads)?;
            write_outputs(&output, &dir, spec.debug_dump)?;
            let mut failed = 0usize;
            for (policy, summary) in &output.summaries {
                for f in &summary.failed_cells {
                    eprintln!("cell failed: {policy} {f}");
                    failed += 1;
                }
                println!(
                    "{policy}: accumulated_cost {:.2} +/- {:.2}, compliant {:.1}, correct {:.1}",
                    summary.accumulated_cost.mean,
                    summary.accumulated_cost.std,
                    summary.latency_compliant_count.mean,
                    summary.correct_allocation_count.mean,
                );
            }
            println!("wrote {}", dir.display());
            if failed > 0 {
                return Err(sdnsync::error::Error::InvalidConfig(format!(
                    "{failed} cell(s) failed"
                )));
            }
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            config,
            seed,
            out,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut spec = ExperimentSpec::from_toml(&text)?;
            let ckpt: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&checkpoint)?)?;
            let policy = ckpt
                .get("policy")
                .and_then(|v| v.as_str())
                .ok_or_else(|| {
                    sdnsync::error::Error::Checkpoint("missing `policy` field".into())
                })?
                .to_string();
            // Evaluation-only run: rebuild the stored policy, skip training.
            spec.policies = vec![policy.clone()];
            spec.episodes = 0;
            if let Some(seed) = seed {
                spec.seeds = vec![seed];
            }
            spec.agents = restore_agent_configs(&spec, &ckpt)?;
            let dir = output_dir(out, &spec.output_dir);
            let output = run_experiment(&spec, cli.threads)?;
            write_outputs(&output, &dir, spec.debug_dump)?;
            let summary = &output.summaries[&policy];
            println!(
                "{policy}: accumulated_cost {:.2} +/- {:.2} over {} episodes",
                summary.accumulated_cost.mean, summary.accumulated_cost.std, summary.episodes,
            );
            Ok(())
        }
        Command::Compare { input } => {
            let report = compare_dir(&input)?;
            for (policy, pct) in &report.cost_reduction_pct {
                println!("cost reduction vs {policy}: {pct:.2}%");
            }
            println!("wrote {}", input.join("report.json").display());
            Ok(())
        }
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let spec = SweepSpec::from_toml(&text)?;
            let dir = output_dir(out, &spec.base.output_dir);
            let rows = run_sweep(&spec, cli.threads)?;
            write_sweep_csv(&rows, &dir)?;
            println!("wrote {} ({} rows)", dir.join("sweep.csv").display(), rows.len());
            Ok(())
        }
    }
}

/// `evaluate` rebuilds the policy from its checkpoint, so verify the stored
/// weights are loadable before the run starts.
fn restore_agent_configs(
    spec: &ExperimentSpec,
    ckpt: &serde_json::Value,
) -> sdnsync::error::Result<sdnsync::agents::AgentConfigs> {
    sdnsync::agents::load_policy(ckpt)?;
    // Cell runners build policies from configs; stash the checkpoint so the
    // runner restores weights instead of re-initializing.
    let mut agents = spec.agents.clone();
    agents.restore_from = Some(ckpt.clone());
    Ok(agents)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
