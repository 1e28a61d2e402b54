//! Value-based synchronizers: the double-DQN agent and its single-network
//! DQN sibling. Both share the replay buffer, the epsilon schedule, the
//! soft-updated target network and the Adam-trained MLP; they differ only in
//! how the bootstrap target is formed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{action_space_size, encode_action, normalize_state, SyncAction, SyncState};
use crate::error::{Error, Result};
use crate::nn::{adam_step, global_norm_clip, AdamState, Mlp, ReplayBuffer, Transition};
use crate::SimRng;

/// Exploration probability p_e = 1 / (1 + E / epsilon_decay).
pub fn exploration_probability(episode: usize, epsilon_decay: f64) -> f64 {
    1.0 / (1.0 + episode as f64 / epsilon_decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStyle {
    /// Standard double-DQN: select a' on the next observation with the main
    /// network, evaluate it with the target network.
    NextObsDdqn,
    /// Select a' on the *current* state instead of the next observation
    /// (a nonstandard variant kept for comparison studies).
    CurrentStateArgmax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QAgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub batch: usize,
    pub buffer: usize,
    pub epsilon_decay: f64,
    pub kappa: f64,
    pub dropout: f64,
    pub hidden: [usize; 2],
    /// Global-norm gradient clip; None disables.
    pub grad_clip: Option<f64>,
    /// Rewards are multiplied by this before entering the TD target, keeping
    /// Q values at a scale the MLP can track. Metrics always use raw rewards.
    pub reward_scale: f64,
    pub target_style: TargetStyle,
}

impl Default for QAgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            alpha: 0.01,
            batch: 256,
            buffer: 40_000,
            epsilon_decay: 25.0,
            kappa: 0.005,
            dropout: 0.1,
            hidden: [64, 64],
            grad_clip: Some(10.0),
            reward_scale: 1e-4,
            target_style: TargetStyle::NextObsDdqn,
        }
    }
}

pub struct QAgent {
    pub cfg: QAgentConfig,
    pub double_q: bool,
    pub n_domains: usize,
    pub sb: usize,
    pub max_staleness: u32,
    pub action_count: usize,
    pub main: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    pub episode: usize,
    pub last_loss: Option<f64>,
    rng: SimRng,
}

impl QAgent {
    pub fn new_double(
        cfg: QAgentConfig,
        n_domains: usize,
        sb: usize,
        max_staleness: u32,
        seed: u64,
    ) -> Result<Self> {
        Self::new(cfg, true, n_domains, sb, max_staleness, seed)
    }

    pub fn new_single(
        cfg: QAgentConfig,
        n_domains: usize,
        sb: usize,
        max_staleness: u32,
        seed: u64,
    ) -> Result<Self> {
        Self::new(cfg, false, n_domains, sb, max_staleness, seed)
    }

    fn new(
        cfg: QAgentConfig,
        double_q: bool,
        n_domains: usize,
        sb: usize,
        max_staleness: u32,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.gamma) {
            return Err(Error::InvalidConfig("gamma must be in [0, 1)".into()));
        }
        if !(0.0 < cfg.kappa && cfg.kappa <= 1.0) {
            return Err(Error::InvalidConfig("kappa must be in (0, 1]".into()));
        }
        let action_count = action_space_size(n_domains, sb)?;
        let sizes = [n_domains, cfg.hidden[0], cfg.hidden[1], action_count];
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(seed);
        let main = Mlp::new(&sizes, &mut rng);
        let target = main.clone();
        let adam = AdamState::new(&main, cfg.alpha);
        let buffer = ReplayBuffer::new(cfg.buffer);
        Ok(Self {
            cfg,
            double_q,
            n_domains,
            sb,
            max_staleness,
            action_count,
            main,
            target,
            adam,
            buffer,
            episode: 0,
            last_loss: None,
            rng,
        })
    }

    fn greedy_index(&mut self, state: &SyncState) -> usize {
        let x = normalize_state(state, self.max_staleness);
        let (q, _) = self
            .main
            .forward(&x, 1, 0.0, false, &mut self.rng)
            .expect("state dimension fixed at construction");
        argmax(&q)
    }

    /// One TD update on a sampled minibatch; returns the minibatch loss.
    pub fn update_once(&mut self) -> Result<f64> {
        let batch = self.cfg.batch;
        let sampled: Vec<Transition> = self
            .buffer
            .sample(batch, &mut self.rng)?
            .into_iter()
            .cloned()
            .collect();
        let dim = self.n_domains;
        let mut states = Vec::with_capacity(batch * dim);
        let mut next_obs = Vec::with_capacity(batch * dim);
        for t in &sampled {
            states.extend_from_slice(&t.state);
            next_obs.extend_from_slice(&t.next_obs);
        }

        // Bootstrap targets (no dropout on target-side forwards).
        let (q_next_target, _) = self
            .target
            .forward(&next_obs, batch, 0.0, false, &mut self.rng)?;
        let a_prime: Vec<usize> = if self.double_q {
            let selector_input = match self.cfg.target_style {
                TargetStyle::NextObsDdqn => &next_obs,
                TargetStyle::CurrentStateArgmax => &states,
            };
            let (q_sel, _) = self
                .main
                .forward(selector_input, batch, 0.0, false, &mut self.rng)?;
            (0..batch)
                .map(|b| argmax(&q_sel[b * self.action_count..(b + 1) * self.action_count]))
                .collect()
        } else {
            (0..batch)
                .map(|b| argmax(&q_next_target[b * self.action_count..(b + 1) * self.action_count]))
                .collect()
        };
        let targets: Vec<f64> = (0..batch)
            .map(|b| {
                sampled[b].reward * self.cfg.reward_scale
                    + self.cfg.gamma * q_next_target[b * self.action_count + a_prime[b]]
            })
            .collect();

        // Squared TD error on the taken action only.
        let (q_main, cache) =
            self.main
                .forward(&states, batch, self.cfg.dropout, true, &mut self.rng)?;
        let mut grad_out = vec![0.0; batch * self.action_count];
        let mut loss = 0.0;
        for b in 0..batch {
            let a = sampled[b].action_index;
            let td = q_main[b * self.action_count + a] - targets[b];
            loss += td * td;
            grad_out[b * self.action_count + a] = 2.0 * td / batch as f64;
        }
        loss /= batch as f64;

        let mut grads = self.main.backward(&cache, &grad_out);
        if let Some(max_norm) = self.cfg.grad_clip {
            global_norm_clip(&mut grads, max_norm);
        }
        adam_step(&mut self.main, &grads, &mut self.adam)?;

        // Soft target update.
        let kappa = self.cfg.kappa;
        for (tl, ml) in self.target.layers.iter_mut().zip(&self.main.layers) {
            for (tp, mp) in tl.w.iter_mut().zip(&ml.w) {
                *tp = kappa * mp + (1.0 - kappa) * *tp;
            }
            for (tp, mp) in tl.b.iter_mut().zip(&ml.b) {
                *tp = kappa * mp + (1.0 - kappa) * *tp;
            }
        }
        self.last_loss = Some(loss);
        Ok(loss)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl super::SynchronizerPolicy for QAgent {
    fn name(&self) -> &'static str {
        if self.double_q {
            "d2q"
        } else {
            "dqn"
        }
    }

    fn act(&mut self, state: &SyncState, explore: bool) -> SyncAction {
        let index = if explore
            && self.rng.random::<f64>()
                < exploration_probability(self.episode, self.cfg.epsilon_decay)
        {
            self.rng.random_range(0..self.action_count)
        } else {
            self.greedy_index(state)
        };
        encode_action(self.n_domains, self.sb, index).expect("index within action space")
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.buffer.push(transition);
        if self.buffer.len() >= self.cfg.batch {
            self.update_once()?;
        }
        Ok(())
    }

    fn end_episode(&mut self, episode: usize) -> Result<()> {
        self.episode = episode + 1;
        Ok(())
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({
            "policy": self.name(),
            "n_domains": self.n_domains,
            "sb": self.sb,
            "max_staleness": self.max_staleness,
            "episode": self.episode,
            "config": self.cfg,
            "main": self.main,
            "target": self.target,
        })
    }
}

impl QAgent {
    pub fn from_checkpoint(value: &serde_json::Value) -> Result<Self> {
        let get = |k: &str| {
            value
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing `{k}`")))
        };
        let policy = get("policy")?;
        let double_q = policy.as_str() == Some("d2q");
        let cfg: QAgentConfig = serde_json::from_value(get("config")?)?;
        let n_domains = get("n_domains")?.as_u64().unwrap_or(0) as usize;
        let sb = get("sb")?.as_u64().unwrap_or(0) as usize;
        let max_staleness = get("max_staleness")?.as_u64().unwrap_or(64) as u32;
        let episode = get("episode")?.as_u64().unwrap_or(0) as usize;
        let main: Mlp = serde_json::from_value(get("main")?)?;
        let target: Mlp = serde_json::from_value(get("target")?)?;
        let mut agent = Self::new(cfg, double_q, n_domains, sb, max_staleness, 0)?;
        agent.adam = AdamState::new(&main, agent.cfg.alpha);
        agent.main = main;
        agent.target = target;
        agent.episode = episode;
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::SynchronizerPolicy;

    #[test]
    fn epsilon_schedule_values() {
        assert_eq!(exploration_probability(0, 25.0), 1.0);
        assert_eq!(exploration_probability(25, 25.0), 0.5);
        assert_eq!(exploration_probability(50, 25.0), 1.0 / 3.0);
        assert_eq!(exploration_probability(100, 25.0), 0.2);
    }

    fn tiny_agent(double_q: bool, gamma: f64, kappa: f64) -> QAgent {
        // N = 3, SB = 1: two actions ({1} and {2}); single linear layer nets
        // so targets are hand-computable.
        let cfg = QAgentConfig {
            gamma,
            kappa,
            batch: 1,
            dropout: 0.0,
            grad_clip: None,
            reward_scale: 1.0,
            ..Default::default()
        };
        let mut agent = QAgent::new(cfg, double_q, 3, 1, 64, 7).unwrap();
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(0);
        let mut main = Mlp::new(&[3, 2], &mut rng);
        // q(x) = W x + b with hand-set rows.
        main.layers[0].w = vec![1.0, 0.5, -0.25, -1.0, 0.75, 0.5];
        main.layers[0].b = vec![0.1, -0.2];
        let mut target = main.clone();
        target.layers[0].w.iter_mut().for_each(|w| *w *= 0.5);
        agent.adam = AdamState::new(&main, agent.cfg.alpha);
        agent.main = main;
        agent.target = target;
        agent
    }

    fn q_of(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(0);
        net.forward(x, 1, 0.0, false, &mut rng).unwrap().0
    }

    #[test]
    fn ddqn_target_hand_trace() {
        let mut agent = tiny_agent(true, 0.9, 0.005);
        let t = Transition {
            state: vec![0.0, 0.5, 1.0],
            action_index: 0,
            reward: -3.0,
            next_obs: vec![0.0, 1.0, 0.25],
        };
        let q_main_phi = q_of(&agent.main, &t.next_obs);
        let a_prime = if q_main_phi[0] >= q_main_phi[1] { 0 } else { 1 };
        let q_target_phi = q_of(&agent.target, &t.next_obs);
        let y = t.reward + 0.9 * q_target_phi[a_prime];
        let q_s = q_of(&agent.main, &t.state);
        let expected_loss = (q_s[0] - y) * (q_s[0] - y);
        agent.buffer.push(t);
        let loss = agent.update_once().unwrap();
        assert!((loss - expected_loss).abs() < 1e-9);
    }

    #[test]
    fn dqn_target_hand_trace() {
        let mut agent = tiny_agent(false, 0.9, 0.005);
        let t = Transition {
            state: vec![0.25, 0.0, 0.75],
            action_index: 1,
            reward: -1.5,
            next_obs: vec![1.0, 0.0, 0.5],
        };
        let q_target_phi = q_of(&agent.target, &t.next_obs);
        let y = t.reward + 0.9 * q_target_phi[0].max(q_target_phi[1]);
        let q_s = q_of(&agent.main, &t.state);
        let expected_loss = (q_s[1] - y) * (q_s[1] - y);
        agent.buffer.push(t);
        let loss = agent.update_once().unwrap();
        assert!((loss - expected_loss).abs() < 1e-9);
    }

    #[test]
    fn gamma_zero_target_is_reward() {
        let mut agent = tiny_agent(true, 0.0, 0.005);
        let t = Transition {
            state: vec![0.0, 0.0, 0.0],
            action_index: 0,
            reward: -2.0,
            next_obs: vec![1.0, 1.0, 1.0],
        };
        let q_s = q_of(&agent.main, &t.state);
        let expected_loss = (q_s[0] + 2.0) * (q_s[0] + 2.0);
        agent.buffer.push(t);
        let loss = agent.update_once().unwrap();
        assert!((loss - expected_loss).abs() < 1e-9);
    }

    #[test]
    fn kappa_one_makes_hard_copy() {
        let mut agent = tiny_agent(true, 0.9, 1.0);
        agent.buffer.push(Transition {
            state: vec![0.0, 0.5, 0.5],
            action_index: 0,
            reward: -1.0,
            next_obs: vec![0.5, 0.5, 0.0],
        });
        agent.update_once().unwrap();
        for (tl, ml) in agent.target.layers.iter().zip(&agent.main.layers) {
            assert_eq!(tl.w, ml.w);
            assert_eq!(tl.b, ml.b);
        }
    }

    #[test]
    fn soft_update_converges_geometrically() {
        let mut agent = tiny_agent(true, 0.9, 0.1);
        // Freeze theta by never calling update; apply repeated soft updates.
        let diff = |agent: &QAgent| -> f64 {
            agent
                .target
                .layers
                .iter()
                .zip(&agent.main.layers)
                .flat_map(|(t, m)| t.w.iter().zip(&m.w))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let initial = diff(&agent);
        let mut prev = initial;
        for _ in 0..20 {
            let kappa = agent.cfg.kappa;
            for (tl, ml) in agent.target.layers.iter_mut().zip(&agent.main.layers) {
                for (tp, mp) in tl.w.iter_mut().zip(&ml.w) {
                    *tp = kappa * mp + (1.0 - kappa) * *tp;
                }
                for (tp, mp) in tl.b.iter_mut().zip(&ml.b) {
                    *tp = kappa * mp + (1.0 - kappa) * *tp;
                }
            }
            let cur = diff(&agent);
            assert!((cur - prev * 0.9).abs() < 1e-9);
            prev = cur;
        }
        // Geometric decay at rate (1 - kappa) per update.
        assert!((prev - initial * 0.9f64.powi(20)).abs() < 1e-9);
    }

    #[test]
    fn greedy_act_is_deterministic() {
        let mut agent = tiny_agent(true, 0.9, 0.005);
        let state = SyncState {
            staleness: vec![0, 3, 9],
        };
        let a1 = agent.act(&state, false);
        let a2 = agent.act(&state, false);
        assert_eq!(a1, a2);
    }
}
