use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::build_policy;
use crate::env::{normalize_state, SdnEnv, TaskRecord};
use crate::error::{Error, Result};
use crate::nn::Transition;

use super::spec::{ExperimentSpec, MetricsRow};

/// Result of one (policy, seed) cell; failures are captured, not propagated,
/// so one diverging cell cannot sink a whole run.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub policy: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub checkpoint: serde_json::Value,
    pub debug_lines: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std: f64,
}

/// Per-policy aggregate over all evaluation episodes of all seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub accumulated_cost: SummaryStat,
    pub latency_compliant_count: SummaryStat,
    pub correct_allocation_count: SummaryStat,
    pub task_count: SummaryStat,
    pub infeasible_count: SummaryStat,
    pub mean_reward: SummaryStat,
    pub failed_cells: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub summaries: BTreeMap<String, Summary>,
    pub cells: Vec<CellResult>,
}

fn stat(values: impl Iterator<Item = f64> + Clone) -> SummaryStat {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return SummaryStat { mean: 0.0, std: 0.0 };
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    SummaryStat { mean, std: var.sqrt() }
}

/// Train (if `episodes > 0`) and evaluate one policy on one seed. The
/// environment seed is shared by every policy on the same seed, and the truth
/// network consumes randomness independently of the chosen actions, so all
/// policies face the same sequence of network states and task arrivals.
fn run_cell(spec: &ExperimentSpec, policy_name: &str, seed: u64) -> Result<CellResult> {
    let policy_stream = crate::agents::POLICY_NAMES
        .iter()
        .position(|p| *p == policy_name)
        .unwrap_or(usize::MAX) as u64;
    let policy_seed = crate::derive_seed(seed, 0xa6e17 + policy_stream);
    let mut policy = build_policy(policy_name, &spec.env, &spec.agents, policy_seed)?;

    let (mut env, mut state) = SdnEnv::reset(&spec.env, seed)?;
    let max_staleness = spec.env.max_staleness;

    // Training phase with exploration.
    for episode in 0..spec.episodes {
        if episode > 0 {
            if spec.regenerate_each_episode {
                let ep_seed = crate::derive_seed(seed, 0x4e7 + episode as u64);
                let (e, s) = SdnEnv::reset(&spec.env, ep_seed)?;
                env = e;
                state = s;
            } else {
                state = env.reset_episode();
            }
        }
        for _ in 0..spec.env.horizon {
            let action = policy.act(&state, true);
            let outcome = env.step(&action)?;
            policy.observe(Transition {
                state: normalize_state(&state, max_staleness),
                action_index: action.index,
                reward: outcome.reward,
                next_obs: normalize_state(&outcome.next_state, max_staleness),
            })?;
            state = outcome.next_state;
        }
        policy.end_episode(episode)?;
    }

    // Greedy evaluation on the same evolving network.
    env.cfg.horizon = spec.eval_horizon;
    env.record_tasks = spec.debug_dump;
    let mut rows = Vec::with_capacity(spec.eval_episodes);
    let mut debug_lines = Vec::new();
    for episode in 0..spec.eval_episodes {
        state = env.reset_episode();
        let mut reward_sum = 0.0;
        let mut compliant = 0u64;
        let mut correct = 0u64;
        let mut tasks = 0u64;
        let mut infeasible = 0u64;
        for _ in 0..spec.eval_horizon {
            let action = policy.act(&state, false);
            let outcome = env.step(&action)?;
            reward_sum += outcome.reward;
            compliant += outcome.tasks_compliant as u64;
            correct += outcome.tasks_correct_server as u64;
            tasks += outcome.tasks_total as u64;
            infeasible += outcome.tasks_infeasible as u64;
            if spec.debug_dump {
                for record in &env.last_task_records {
                    debug_lines.push(debug_line(policy_name, seed, episode, record)?);
                }
            }
            state = outcome.next_state;
        }
        rows.push(MetricsRow {
            policy: policy_name.to_string(),
            seed,
            episode,
            accumulated_cost: reward_sum.abs(),
            latency_compliant_count: compliant,
            correct_allocation_count: correct,
            task_count: tasks,
            infeasible_count: infeasible,
            mean_reward: reward_sum / spec.eval_horizon as f64,
        });
    }

    Ok(CellResult {
        policy: policy_name.to_string(),
        seed,
        rows,
        checkpoint: policy.checkpoint(),
        debug_lines,
        error: None,
    })
}

fn debug_line(policy: &str, seed: u64, episode: usize, record: &TaskRecord) -> Result<String> {
    #[derive(Serialize)]
    struct Line<'a> {
        policy: &'a str,
        seed: u64,
        episode: usize,
        #[serde(flatten)]
        record: &'a TaskRecord,
    }
    Ok(serde_json::to_string(&Line { policy, seed, episode, record })?)
}

/// Run every (policy, seed) cell, optionally in parallel. Results come back
/// in (policy, seed) declaration order regardless of thread count, so file
/// outputs are byte-identical across runs and `--threads` settings.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<RunOutput> {
    spec.validate()?;
    let tasks: Vec<(String, u64)> = spec
        .policies
        .iter()
        .flat_map(|p| spec.seeds.iter().map(move |&s| (p.clone(), s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let cells: Vec<CellResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(policy, seed)| {
                run_cell(spec, policy, *seed).unwrap_or_else(|e| CellResult {
                    policy: policy.clone(),
                    seed: *seed,
                    rows: Vec::new(),
                    checkpoint: serde_json::Value::Null,
                    debug_lines: Vec::new(),
                    error: Some(e.to_string()),
                })
            })
            .collect()
    });

    let rows: Vec<MetricsRow> = cells.iter().flat_map(|c| c.rows.iter().cloned()).collect();
    let mut summaries = BTreeMap::new();
    for policy in &spec.policies {
        let policy_rows: Vec<&MetricsRow> = rows.iter().filter(|r| &r.policy == policy).collect();
        let failed_cells: Vec<String> = cells
            .iter()
            .filter(|c| &c.policy == policy)
            .filter_map(|c| c.error.as_ref().map(|e| format!("seed {}: {e}", c.seed)))
            .collect();
        let f = |get: fn(&MetricsRow) -> f64| stat(policy_rows.iter().map(|r| get(r)).collect::<Vec<_>>().into_iter());
        summaries.insert(
            policy.clone(),
            Summary {
                episodes: policy_rows.len(),
                accumulated_cost: f(|r| r.accumulated_cost),
                latency_compliant_count: f(|r| r.latency_compliant_count as f64),
                correct_allocation_count: f(|r| r.correct_allocation_count as f64),
                task_count: f(|r| r.task_count as f64),
                infeasible_count: f(|r| r.infeasible_count as f64),
                mean_reward: f(|r| r.mean_reward),
                failed_cells,
            },
        );
    }

    Ok(RunOutput { rows, summaries, cells })
}

/// Write metrics.csv, summary.json, per-cell checkpoints, and (when enabled)
/// debug.jsonl under `dir`.
pub fn write_outputs(output: &RunOutput, dir: &Path, debug_dump: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut writer = csv::Writer::from_path(dir.join("metrics.csv"))?;
    for row in &output.rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(Error::Io)?;

    let summary = serde_json::json!({
        "schema_version": 1,
        "policies": output.summaries,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    for cell in &output.cells {
        if cell.error.is_none() {
            let path = ckpt_dir.join(format!("{}_seed{}.json", cell.policy, cell.seed));
            std::fs::write(path, serde_json::to_string(&cell.checkpoint)?)?;
        }
    }

    if debug_dump {
        let mut file = std::fs::File::create(dir.join("debug.jsonl"))?;
        for cell in &output.cells {
            for line in &cell.debug_lines {
                writeln!(file, "{line}")?;
            }
        }
    }
    Ok(())
}
