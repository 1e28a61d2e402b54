//! Static baselines: uniformly random subsets and cyclic round-robin subsets.

use rand::Rng;

use crate::env::{action_space_size, encode_action, SyncAction, SyncState};
use crate::error::Result;
use crate::nn::Transition;
use crate::SimRng;

pub struct RandomPolicy {
    n_domains: usize,
    sb: usize,
    action_count: usize,
    rng: SimRng,
    seed: u64,
}

impl RandomPolicy {
    pub fn new(n_domains: usize, sb: usize, seed: u64) -> Result<Self> {
        let action_count = action_space_size(n_domains, sb)?;
        Ok(Self {
            n_domains,
            sb,
            action_count,
            rng: <SimRng as rand::SeedableRng>::seed_from_u64(seed),
            seed,
        })
    }

    pub fn from_checkpoint(value: &serde_json::Value) -> Result<Self> {
        let n = value["n_domains"].as_u64().unwrap_or(0) as usize;
        let sb = value["sb"].as_u64().unwrap_or(0) as usize;
        let seed = value["seed"].as_u64().unwrap_or(0);
        Self::new(n, sb, seed)
    }
}

impl super::SynchronizerPolicy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&mut self, _state: &SyncState, _explore: bool) -> SyncAction {
        let index = self.rng.random_range(0..self.action_count);
        encode_action(self.n_domains, self.sb, index).expect("index within action space")
    }

    fn observe(&mut self, _transition: Transition) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self, _episode: usize) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({
            "policy": "random",
            "n_domains": self.n_domains,
            "sb": self.sb,
            "seed": self.seed,
        })
    }
}

/// Cycles through {1..N-1} taking the next SB controllers each period.
pub struct RoundRobinPolicy {
    n_domains: usize,
    sb: usize,
    cursor: usize,
}

impl RoundRobinPolicy {
    pub fn new(n_domains: usize, sb: usize) -> Result<Self> {
        action_space_size(n_domains, sb)?;
        Ok(Self {
            n_domains,
            sb,
            cursor: 0,
        })
    }

    pub fn from_checkpoint(value: &serde_json::Value) -> Result<Self> {
        let n = value["n_domains"].as_u64().unwrap_or(0) as usize;
        let sb = value["sb"].as_u64().unwrap_or(0) as usize;
        let mut p = Self::new(n, sb)?;
        p.cursor = value["cursor"].as_u64().unwrap_or(0) as usize;
        Ok(p)
    }
}

impl super::SynchronizerPolicy for RoundRobinPolicy {
    fn name(&self) -> &'static str {
        "round_robin"
    }

    fn act(&mut self, _state: &SyncState, _explore: bool) -> SyncAction {
        let peers = self.n_domains - 1;
        let mut selected: Vec<usize> = (0..self.sb)
            .map(|k| (self.cursor + k) % peers + 1)
            .collect();
        self.cursor = (self.cursor + self.sb) % peers;
        selected.sort_unstable();
        let index = crate::env::decode_action(self.n_domains, self.sb, &selected)
            .expect("round-robin subsets are valid");
        SyncAction { selected, index }
    }

    fn observe(&mut self, _transition: Transition) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self, _episode: usize) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({
            "policy": "round_robin",
            "n_domains": self.n_domains,
            "sb": self.sb,
            "cursor": self.cursor,
        })
    }
}
