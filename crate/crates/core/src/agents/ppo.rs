//! PPO baseline over the subset-index action head: categorical actor and
//! scalar critic, clipped-surrogate updates at episode boundaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{action_space_size, encode_action, SyncAction, SyncState};
use crate::error::{Error, Result};
use crate::nn::{adam_step, global_norm_clip, AdamState, Mlp, Transition};
use crate::SimRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub clip: f64,
    pub epochs: usize,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub hidden: [usize; 2],
    pub grad_clip: Option<f64>,
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            alpha: 0.01,
            clip: 0.2,
            epochs: 4,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            hidden: [64, 64],
            grad_clip: Some(10.0),
            reward_scale: 1e-4,
        }
    }
}

/// Clipped surrogate value for one sample: min(r*A, clamp(r, 1±clip)*A).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clamped = ratio.clamp(1.0 - clip, 1.0 + clip);
    (ratio * advantage).min(clamped * advantage)
}

pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub n_domains: usize,
    pub sb: usize,
    pub max_staleness: u32,
    pub action_count: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    adam_actor: AdamState,
    adam_critic: AdamState,
    trajectory: Vec<Transition>,
    rng: SimRng,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl PpoAgent {
    pub fn new(
        cfg: PpoConfig,
        n_domains: usize,
        sb: usize,
        max_staleness: u32,
        seed: u64,
    ) -> Result<Self> {
        let action_count = action_space_size(n_domains, sb)?;
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(seed);
        let actor = Mlp::new(&[n_domains, cfg.hidden[0], cfg.hidden[1], action_count], &mut rng);
        let critic = Mlp::new(&[n_domains, cfg.hidden[0], cfg.hidden[1], 1], &mut rng);
        let adam_actor = AdamState::new(&actor, cfg.alpha);
        let adam_critic = AdamState::new(&critic, cfg.alpha);
        Ok(Self {
            cfg,
            n_domains,
            sb,
            max_staleness,
            action_count,
            actor,
            critic,
            adam_actor,
            adam_critic,
            trajectory: Vec::new(),
            rng,
        })
    }

    fn normalized(&self, state: &SyncState) -> Vec<f64> {
        crate::env::normalize_state(state, self.max_staleness)
    }

    fn logits(&mut self, x: &[f64], batch: usize) -> Vec<f64> {
        self.actor
            .forward(x, batch, 0.0, false, &mut self.rng)
            .expect("actor shapes fixed")
            .0
    }

    fn values(&mut self, x: &[f64], batch: usize) -> Vec<f64> {
        self.critic
            .forward(x, batch, 0.0, false, &mut self.rng)
            .expect("critic shapes fixed")
            .0
    }

    /// One clipped-surrogate update over the finished episode's trajectory.
    /// Returns (actor loss, critic loss) from the final epoch.
    pub fn update(&mut self) -> Result<(f64, f64)> {
        let steps = self.trajectory.len();
        if steps == 0 {
            return Ok((0.0, 0.0));
        }
        let dim = self.n_domains;
        let mut states = Vec::with_capacity(steps * dim);
        let mut next_obs = Vec::with_capacity(steps * dim);
        let mut actions = Vec::with_capacity(steps);
        let mut rewards = Vec::with_capacity(steps);
        for t in &self.trajectory {
            states.extend_from_slice(&t.state);
            next_obs.extend_from_slice(&t.next_obs);
            actions.push(t.action_index);
            rewards.push(t.reward * self.cfg.reward_scale);
        }
        self.trajectory.clear();

        // GAE over the truncated (continuing) episode: always bootstrap.
        let v_s = self.values(&states, steps);
        let v_next = self.values(&next_obs, steps);
        let (gamma, lambda) = (self.cfg.gamma, self.cfg.gae_lambda);
        let mut advantages = vec![0.0; steps];
        let mut acc = 0.0;
        for t in (0..steps).rev() {
            let delta = rewards[t] + gamma * v_next[t] - v_s[t];
            acc = delta + gamma * lambda * acc;
            advantages[t] = acc;
        }
        let returns: Vec<f64> = advantages.iter().zip(&v_s).map(|(a, v)| a + v).collect();
        let mean = advantages.iter().sum::<f64>() / steps as f64;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / steps as f64;
        let std = var.sqrt().max(1e-8);
        let advantages: Vec<f64> = advantages.iter().map(|a| (a - mean) / std).collect();

        // Old log-probabilities, fixed before the first epoch.
        let old_logits = self.logits(&states, steps);
        let logp_old: Vec<f64> = (0..steps)
            .map(|t| {
                let row = &old_logits[t * self.action_count..(t + 1) * self.action_count];
                let p = softmax(row);
                p[actions[t]].max(1e-300).ln()
            })
            .collect();

        let mut losses = (0.0, 0.0);
        for _ in 0..self.cfg.epochs {
            // Actor.
            let (logits, cache) =
                self.actor
                    .forward(&states, steps, 0.0, true, &mut self.rng)?;
            let mut grad_logits = vec![0.0; steps * self.action_count];
            let mut actor_loss = 0.0;
            for t in 0..steps {
                let row = &logits[t * self.action_count..(t + 1) * self.action_count];
                let p = softmax(row);
                let a = actions[t];
                let logp = p[a].max(1e-300).ln();
                let ratio = (logp - logp_old[t]).exp();
                let adv = advantages[t];
                actor_loss -= clipped_surrogate(ratio, adv, self.cfg.clip);
                let entropy: f64 = -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>();
                actor_loss -= self.cfg.entropy_coef * entropy;
                // Gradient flows through the unclipped term only when it is
                // the active branch of the min.
                let clamped = ratio.clamp(1.0 - self.cfg.clip, 1.0 + self.cfg.clip);
                let unclipped_active = ratio * adv <= clamped * adv;
                let g_logp = if unclipped_active { ratio * adv } else { 0.0 };
                let grow = &mut grad_logits[t * self.action_count..(t + 1) * self.action_count];
                for k in 0..self.action_count {
                    let indicator = if k == a { 1.0 } else { 0.0 };
                    // d(-surrogate)/dz_k
                    let mut g = -g_logp * (indicator - p[k]);
                    // d(-c_H * H)/dz_k = c_H * p_k (ln p_k + H)
                    if p[k] > 0.0 {
                        g += self.cfg.entropy_coef * p[k] * (p[k].ln() + entropy);
                    }
                    grow[k] = g / steps as f64;
                }
            }
            actor_loss /= steps as f64;
            let mut grads = self.actor.backward(&cache, &grad_logits);
            if let Some(max_norm) = self.cfg.grad_clip {
                global_norm_clip(&mut grads, max_norm);
            }
            adam_step(&mut self.actor, &grads, &mut self.adam_actor)?;

            // Critic.
            let (v, vcache) = self
                .critic
                .forward(&states, steps, 0.0, true, &mut self.rng)?;
            let mut grad_v = vec![0.0; steps];
            let mut critic_loss = 0.0;
            for t in 0..steps {
                let d = v[t] - returns[t];
                critic_loss += d * d;
                grad_v[t] = 2.0 * d / steps as f64;
            }
            critic_loss /= steps as f64;
            let mut vgrads = self.critic.backward(&vcache, &grad_v);
            if let Some(max_norm) = self.cfg.grad_clip {
                global_norm_clip(&mut vgrads, max_norm);
            }
            adam_step(&mut self.critic, &vgrads, &mut self.adam_critic)?;
            losses = (actor_loss, critic_loss);
        }
        Ok(losses)
    }
}

impl super::SynchronizerPolicy for PpoAgent {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn act(&mut self, state: &SyncState, explore: bool) -> SyncAction {
        let x = self.normalized(state);
        let logits = self.logits(&x, 1);
        let index = if explore {
            let p = softmax(&logits);
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut chosen = self.action_count - 1;
            for (i, &pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            super::q_learning::argmax(&logits)
        };
        encode_action(self.n_domains, self.sb, index).expect("index within action space")
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        self.trajectory.push(transition);
        Ok(())
    }

    fn end_episode(&mut self, _episode: usize) -> Result<()> {
        self.update()?;
        Ok(())
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({
            "policy": "ppo",
            "n_domains": self.n_domains,
            "sb": self.sb,
            "max_staleness": self.max_staleness,
            "config": self.cfg,
            "actor": self.actor,
            "critic": self.critic,
        })
    }
}

impl PpoAgent {
    pub fn from_checkpoint(value: &serde_json::Value) -> Result<Self> {
        let get = |k: &str| {
            value
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing `{k}`")))
        };
        let cfg: PpoConfig = serde_json::from_value(get("config")?)?;
        let n_domains = get("n_domains")?.as_u64().unwrap_or(0) as usize;
        let sb = get("sb")?.as_u64().unwrap_or(0) as usize;
        let max_staleness = get("max_staleness")?.as_u64().unwrap_or(64) as u32;
        let mut agent = Self::new(cfg, n_domains, sb, max_staleness, 0)?;
        agent.actor = serde_json::from_value(get("actor")?)?;
        agent.critic = serde_json::from_value(get("critic")?)?;
        agent.adam_actor = AdamState::new(&agent.actor, agent.cfg.alpha);
        agent.adam_critic = AdamState::new(&agent.critic, agent.cfg.alpha);
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::SynchronizerPolicy;

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), 0.5);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_surrogate(1.0, 2.0, 0.2), 2.0);
    }

    #[test]
    fn uniform_logits_sample_uniformly() {
        let mut agent = PpoAgent::new(PpoConfig::default(), 5, 2, 64, 3).unwrap();
        for l in &mut agent.actor.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let state = SyncState {
            staleness: vec![0, 1, 2, 3, 4],
        };
        let mut counts = vec![0u32; 6];
        let draws = 60_000;
        for _ in 0..draws {
            let a = agent.act(&state, true);
            counts[a.index] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.03, "freq {freq}");
        }
    }

    #[test]
    fn myopic_discount_weights_next_step_weakly() {
        // With gamma = 0.01, the return at t is dominated by r_t.
        let cfg = PpoConfig::default();
        let gamma = cfg.gamma;
        let rewards = [-5.0, -100.0, -1.0];
        // Plain discounted return, no bootstrap, for illustration of weights.
        let ret0: f64 = rewards
            .iter()
            .enumerate()
            .map(|(k, r)| gamma.powi(k as i32) * r)
            .sum();
        assert!((ret0 - (-5.0 - 1.0 - 0.0001)).abs() < 0.1);
    }

    #[test]
    fn update_runs_and_keeps_params_finite() {
        let mut agent = PpoAgent::new(PpoConfig::default(), 5, 2, 64, 11).unwrap();
        let mut rng = <SimRng as rand::SeedableRng>::seed_from_u64(4);
        for ep in 0..3 {
            for _ in 0..40 {
                let s: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
                let phi: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
                let state = SyncState {
                    staleness: vec![0, 1, 1, 2, 3],
                };
                let a = agent.act(&state, true);
                agent
                    .observe(Transition {
                        state: s,
                        action_index: a.index,
                        reward: rng.random_range(-20000.0..0.0),
                        next_obs: phi,
                    })
                    .unwrap();
            }
            agent.end_episode(ep).unwrap();
        }
        assert!(agent
            .actor
            .layers
            .iter()
            .chain(agent.critic.layers.iter())
            .all(|l| l.w.iter().chain(l.b.iter()).all(|p| p.is_finite())));
    }
}
