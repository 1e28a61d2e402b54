use serde::{Deserialize, Serialize};

use crate::agents::AgentConfigs;
use crate::env::EnvConfig;
use crate::error::{Error, Result};

/// One experiment: train every listed policy for `episodes` episodes on each
/// seed, then evaluate greedily, all on the same evolving network per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub env: EnvConfig,
    pub policies: Vec<String>,
    /// Training episodes M (0 = evaluation-only).
    pub episodes: usize,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub seeds: Vec<u64>,
    pub output_dir: Option<String>,
    pub agents: AgentConfigs,
    /// Emit debug.jsonl with per-task records for evaluation episodes.
    pub debug_dump: bool,
    /// Regenerate the network between episodes instead of letting the same
    /// network keep evolving.
    pub regenerate_each_episode: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            policies: vec!["random".to_string()],
            episodes: 0,
            eval_episodes: 25,
            eval_horizon: 1000,
            seeds: vec![1],
            output_dir: None,
            agents: AgentConfigs::default(),
            debug_dump: false,
            regenerate_each_episode: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("at least one policy required".into()));
        }
        for p in &self.policies {
            if !crate::agents::POLICY_NAMES.contains(&p.as_str()) {
                return Err(Error::UnknownPolicy(p.clone()));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.eval_episodes == 0 || self.eval_horizon == 0 {
            return Err(Error::InvalidConfig(
                "eval_episodes and eval_horizon must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluation episode's metrics. The CSV schema is versioned by
/// `METRICS_HEADER`; a golden test pins it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub policy: String,
    pub seed: u64,
    pub episode: usize,
    /// Magnitude of the episode's accumulated negative reward.
    pub accumulated_cost: f64,
    pub latency_compliant_count: u64,
    pub correct_allocation_count: u64,
    pub task_count: u64,
    pub infeasible_count: u64,
    pub mean_reward: f64,
}

pub const METRICS_HEADER: &str = "policy,seed,episode,accumulated_cost,latency_compliant_count,correct_allocation_count,task_count,infeasible_count,mean_reward";
