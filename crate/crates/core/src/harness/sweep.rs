use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::runner::{run_experiment, RunOutput};
use super::spec::ExperimentSpec;

/// Grid sweep over network size, synchronization budget, and the share of
/// tight task deadlines. Every grid cell reuses the base experiment settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    #[serde(flatten)]
    pub base: ExperimentSpec,
    pub grid: SweepGrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub n_domains: Vec<usize>,
    pub sb: Vec<usize>,
    pub deadline_mix: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: ExperimentSpec::default(),
            grid: SweepGrid::default(),
        }
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            n_domains: Vec::new(),
            sb: Vec::new(),
            deadline_mix: Vec::new(),
        }
    }
}

/// Aggregated result of one grid cell for one policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_domains: usize,
    pub sb: usize,
    pub deadline_mix: f64,
    pub policy: String,
    pub accumulated_cost_mean: f64,
    pub accumulated_cost_std: f64,
    pub latency_compliant_mean: f64,
    pub correct_allocation_mean: f64,
    pub mean_reward: f64,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Materialize the grid into per-cell experiment specs. Every cell is
    /// validated up front so an infeasible combination (e.g. a budget that
    /// isn't below the domain count) fails before any cell runs.
    pub fn cells(&self) -> Result<Vec<ExperimentSpec>> {
        if self.grid.n_domains.is_empty()
            || self.grid.sb.is_empty()
            || self.grid.deadline_mix.is_empty()
        {
            return Err(Error::InvalidConfig(
                "sweep grid needs n_domains, sb, and deadline_mix values".into(),
            ));
        }
        let mut cells = Vec::new();
        for &n in &self.grid.n_domains {
            for &sb in &self.grid.sb {
                for &mix in &self.grid.deadline_mix {
                    let mut spec = self.base.clone();
                    spec.env.network.n_domains = n;
                    spec.env.sb = sb;
                    spec.env.deadline_mix = mix;
                    spec.output_dir = None;
                    spec.validate().map_err(|e| {
                        Error::InvalidConfig(format!(
                            "grid cell n_domains={n} sb={sb} deadline_mix={mix}: {e}"
                        ))
                    })?;
                    cells.push(spec);
                }
            }
        }
        Ok(cells)
    }

    pub fn validate(&self) -> Result<()> {
        self.cells().map(|_| ())
    }
}

/// Run the full grid and return long-format rows, one per (cell, policy),
/// in grid declaration order.
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<Vec<SweepRow>> {
    let cells = spec.cells()?;
    let mut rows = Vec::new();
    for cell in &cells {
        let output: RunOutput = run_experiment(cell, threads)?;
        for policy in &cell.policies {
            let summary = &output.summaries[policy];
            rows.push(SweepRow {
                n_domains: cell.env.network.n_domains,
                sb: cell.env.sb,
                deadline_mix: cell.env.deadline_mix,
                policy: policy.clone(),
                accumulated_cost_mean: summary.accumulated_cost.mean,
                accumulated_cost_std: summary.accumulated_cost.std,
                latency_compliant_mean: summary.latency_compliant_count.mean,
                correct_allocation_mean: summary.correct_allocation_count.mean,
                mean_reward: summary.mean_reward.mean,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::topology::NetworkConfig;

    fn base() -> ExperimentSpec {
        ExperimentSpec {
            env: EnvConfig {
                network: NetworkConfig {
                    devices_per_domain: [3, 4],
                    ..Default::default()
                },
                horizon: 15,
                ..Default::default()
            },
            policies: vec!["round_robin".into()],
            episodes: 0,
            eval_episodes: 2,
            eval_horizon: 15,
            seeds: vec![3],
            ..Default::default()
        }
    }

    #[test]
    fn infeasible_cell_rejected_up_front() {
        let spec = SweepSpec {
            base: base(),
            grid: SweepGrid {
                n_domains: vec![4, 3],
                sb: vec![3],
                deadline_mix: vec![0.5],
            },
        };
        // sb=3 is fine for n=4 but not n=3: the whole sweep must be rejected.
        assert!(matches!(spec.cells(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sweep_produces_one_row_per_cell_policy() {
        let spec = SweepSpec {
            base: base(),
            grid: SweepGrid {
                n_domains: vec![4],
                sb: vec![1, 2],
                deadline_mix: vec![0.0, 1.0],
            },
        };
        let rows = run_sweep(&spec, 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].sb, 1);
        assert_eq!(rows[3].deadline_mix, 1.0);

        let dir = tempfile::tempdir().unwrap();
        write_sweep_csv(&rows, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with("n_domains,sb,deadline_mix,policy"));
    }

    #[test]
    fn toml_parses_flattened_base() {
        let text = r#"
            policies = ["random"]
            seeds = [1]
            episodes = 0

            [grid]
            n_domains = [4]
            sb = [2]
            deadline_mix = [0.5]
        "#;
        let spec = SweepSpec::from_toml(text).unwrap();
        assert_eq!(spec.grid.sb, vec![2]);
        assert_eq!(spec.base.policies, vec!["random"]);
    }
}
