//! The synchronization policies behind one common interface: a double-DQN
//! agent, a single-network DQN baseline, a PPO baseline, and the Random and
//! Round Robin static baselines.

mod ppo;
mod q_learning;
mod simple;

pub use ppo::{clipped_surrogate, PpoAgent, PpoConfig};
pub use q_learning::{exploration_probability, QAgent, QAgentConfig, TargetStyle};
pub use simple::{RandomPolicy, RoundRobinPolicy};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, SyncAction, SyncState};
use crate::error::{Error, Result};
use crate::nn::Transition;

/// Behavioral contract shared by every synchronization policy.
pub trait SynchronizerPolicy {
    fn name(&self) -> &'static str;
    /// Produce a budget-respecting action. `explore` enables the policy's
    /// stochastic training behavior; with `explore = false` value-based
    /// policies act greedily and deterministically.
    fn act(&mut self, state: &SyncState, explore: bool) -> SyncAction;
    /// Feed back one transition; learning policies may update here.
    fn observe(&mut self, transition: Transition) -> Result<()>;
    /// Episode boundary notification; `episode` is the 0-based index of the
    /// episode that just finished.
    fn end_episode(&mut self, episode: usize) -> Result<()>;
    /// Serializable parameter snapshot.
    fn checkpoint(&self) -> serde_json::Value;
}

pub const POLICY_NAMES: [&str; 5] = ["d2q", "dqn", "ppo", "random", "round_robin"];

/// Per-experiment agent hyperparameters, one block per trainable family.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfigs {
    pub q: QAgentConfig,
    pub ppo: PpoConfig,
    /// When set, `build_policy` restores this checkpoint for the matching
    /// policy instead of initializing fresh parameters (evaluation-only runs).
    #[serde(skip)]
    pub restore_from: Option<serde_json::Value>,
}

pub fn build_policy(
    name: &str,
    env_cfg: &EnvConfig,
    agent_cfgs: &AgentConfigs,
    seed: u64,
) -> Result<Box<dyn SynchronizerPolicy>> {
    if let Some(ckpt) = &agent_cfgs.restore_from {
        if ckpt.get("policy").and_then(|v| v.as_str()) == Some(name) {
            return load_policy(ckpt);
        }
    }
    let n = env_cfg.network.n_domains;
    let sb = env_cfg.sb;
    let max_staleness = env_cfg.max_staleness;
    Ok(match name {
        "d2q" => Box::new(QAgent::new_double(agent_cfgs.q.clone(), n, sb, max_staleness, seed)?),
        "dqn" => Box::new(QAgent::new_single(agent_cfgs.q.clone(), n, sb, max_staleness, seed)?),
        "ppo" => Box::new(PpoAgent::new(agent_cfgs.ppo.clone(), n, sb, max_staleness, seed)?),
        "random" => Box::new(RandomPolicy::new(n, sb, seed)?),
        "round_robin" => Box::new(RoundRobinPolicy::new(n, sb)?),
        other => return Err(Error::UnknownPolicy(other.to_string())),
    })
}

/// Rebuild a policy from a checkpoint produced by `checkpoint()`.
pub fn load_policy(value: &serde_json::Value) -> Result<Box<dyn SynchronizerPolicy>> {
    let name = value
        .get("policy")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Checkpoint("missing `policy` field".into()))?;
    match name {
        "d2q" | "dqn" => Ok(Box::new(QAgent::from_checkpoint(value)?)),
        "ppo" => Ok(Box::new(PpoAgent::from_checkpoint(value)?)),
        "random" => Ok(Box::new(RandomPolicy::from_checkpoint(value)?)),
        "round_robin" => Ok(Box::new(RoundRobinPolicy::from_checkpoint(value)?)),
        other => Err(Error::UnknownPolicy(other.to_string())),
    }
}
