//! The synchronization MDP: a policy-hosting controller keeps a possibly
//! stale merged view of the network, picks `SB` peers to synchronize each
//! period, allocates offloading tasks on that view, and is scored against the
//! ground truth.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::{
    self, oracle_best_server, realize, select_server, select_server_latency_aware, PathTo,
    RouteGraph, ServerInfo, UNREACHABLE_LATENCY,
};
use crate::topology::{generate_network, GroundTruthNetwork, Link, NetworkConfig};
use crate::{derive_seed, SimRng};

pub const MAX_ACTION_SPACE: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSourceScope {
    /// Tasks originate only in the policy-hosting controller's domain (0).
    PolicyDomain,
    /// Tasks originate in every data-plane device of the network.
    AllDomains,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub network: NetworkConfig,
    /// Synchronization budget: SCMs received per period.
    pub sb: usize,
    /// Per-device Poisson rate, drawn once per episode from this range.
    pub poisson_rate_range: [f64; 2],
    /// Fraction of tasks with the low (strict) deadline.
    pub deadline_mix: f64,
    pub deadline_low_ms: u32,
    pub deadline_high_ms: u32,
    pub lambda_penalty: f64,
    pub r1: f64,
    /// Episode horizon T.
    pub horizon: usize,
    pub max_staleness: u32,
    pub task_source_scope: TaskSourceScope,
    /// Controller-side selection honors deadlines on the view (ablation).
    pub view_latency_aware: bool,
    /// Reward oracle ignores deadlines (plain global cost argmin).
    pub oracle_unconstrained: bool,
    /// Retry deadline-violated tasks once in the next period.
    pub requeue_violations: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            sb: 2,
            poisson_rate_range: [2.0, 5.0],
            deadline_mix: 0.5,
            deadline_low_ms: 10,
            deadline_high_ms: 100,
            lambda_penalty: 80.0,
            r1: 10_000.0,
            horizon: 500,
            max_staleness: 64,
            task_source_scope: TaskSourceScope::PolicyDomain,
            view_latency_aware: false,
            oracle_unconstrained: false,
            requeue_violations: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let n = self.network.n_domains;
        if self.sb == 0 || self.sb > n - 1 {
            return Err(Error::InvalidConfig(format!(
                "sb must be in [1, N-1] = [1, {}], got {}",
                n - 1,
                self.sb
            )));
        }
        action_space_size(n, self.sb)?;
        if self.poisson_rate_range[0] <= 0.0
            || self.poisson_rate_range[0] > self.poisson_rate_range[1]
        {
            return Err(Error::InvalidConfig("poisson_rate_range invalid".into()));
        }
        if !(0.0..=1.0).contains(&self.deadline_mix) {
            return Err(Error::InvalidConfig("deadline_mix outside [0, 1]".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.max_staleness == 0 {
            return Err(Error::InvalidConfig("max_staleness must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-controller staleness vector; entry 0 (own domain) is pinned at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncState {
    pub staleness: Vec<u32>,
}

impl SyncState {
    pub fn zeros(n: usize) -> Self {
        Self {
            staleness: vec![0; n],
        }
    }
}

/// Normalized network input: staleness / max_staleness, clipped to [0, 1].
pub fn normalize_state(s: &SyncState, max_staleness: u32) -> Vec<f64> {
    s.staleness
        .iter()
        .map(|&v| (v as f64 / max_staleness as f64).min(1.0))
        .collect()
}

/// A budget-respecting synchronization choice: `selected` is a sorted subset
/// of {1..N-1} of size SB, `index` its rank in the lexicographic enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncAction {
    pub selected: Vec<usize>,
    pub index: usize,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// C(N-1, SB): the number of budget-respecting subsets of the other peers.
pub fn action_space_size(n_domains: usize, sb: usize) -> Result<usize> {
    if n_domains < 2 || sb == 0 || sb > n_domains - 1 {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= SB <= N-1, got N={n_domains} SB={sb}"
        )));
    }
    let size = binomial(n_domains - 1, sb);
    if size > MAX_ACTION_SPACE {
        return Err(Error::InvalidConfig(format!(
            "action space C({}, {sb}) = {size} exceeds {MAX_ACTION_SPACE}",
            n_domains - 1
        )));
    }
    Ok(size)
}

/// Unrank `index` into the lexicographically ordered SB-subsets of {1..N-1}.
pub fn encode_action(n_domains: usize, sb: usize, index: usize) -> Result<SyncAction> {
    let size = action_space_size(n_domains, sb)?;
    if index >= size {
        return Err(Error::ActionIndex(index, size));
    }
    let mut selected = Vec::with_capacity(sb);
    let mut rank = index;
    let mut next = 1; // smallest candidate domain id
    for remaining in (1..=sb).rev() {
        let mut candidate = next;
        loop {
            // Subsets that start with `candidate` and pick the rest from above.
            let block = binomial(n_domains - 1 - candidate, remaining - 1);
            if rank < block {
                selected.push(candidate);
                next = candidate + 1;
                break;
            }
            rank -= block;
            candidate += 1;
        }
    }
    Ok(SyncAction { selected, index })
}

/// Rank a sorted subset of {1..N-1}; inverse of `encode_action`.
pub fn decode_action(n_domains: usize, sb: usize, selected: &[usize]) -> Result<usize> {
    action_space_size(n_domains, sb)?;
    if selected.len() != sb {
        return Err(Error::BudgetViolation {
            got: selected.len(),
            want: sb,
        });
    }
    let mut prev = 0usize;
    for &d in selected {
        if d == 0 || d >= n_domains || d <= prev {
            return Err(Error::InvalidAction(format!(
                "subset must be strictly increasing over 1..N-1, got {selected:?}"
            )));
        }
        prev = d;
    }
    let mut rank = 0usize;
    let mut next = 1usize;
    for (pos, &d) in selected.iter().enumerate() {
        for candidate in next..d {
            rank += binomial(n_domains - 1 - candidate, sb - pos - 1);
        }
        next = d + 1;
    }
    Ok(rank)
}

/// Per-task utility: 0 when compliant and optimally allocated,
/// a cost-regret penalty when compliant but misallocated, and a flat penalty
/// for every latency violation (including invalid or unreachable paths).
pub fn task_utility(
    compliant: bool,
    correct: bool,
    chosen_cost: u32,
    optimal_cost: u32,
    lambda_penalty: f64,
    r1: f64,
) -> f64 {
    if compliant && correct {
        0.0
    } else if compliant {
        -lambda_penalty * (chosen_cost as f64 - optimal_cost as f64).abs()
    } else {
        -r1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub task_id: u64,
    pub source: (usize, usize),
    pub deadline_ms: u32,
    pub period_created: u64,
    pub retried: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub tasks_total: usize,
    pub tasks_compliant: usize,
    pub tasks_correct_server: usize,
    pub tasks_infeasible: usize,
    /// Sum of ground-truth costs of chosen servers over compliant tasks.
    pub realized_cost_sum: u64,
    pub next_state: SyncState,
}

/// One line of the per-task debug dump (JSON lines schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskRecord {
    pub period: u64,
    pub task_id: u64,
    pub source_domain: usize,
    pub source_node: usize,
    pub deadline_ms: u32,
    pub chosen_server: usize,
    pub oracle_server: usize,
    pub view_latency_ms: Option<u64>,
    pub realized_latency_ms: Option<u64>,
    pub chosen_cost_true: u32,
    pub oracle_cost_true: u32,
    pub compliant: bool,
    pub correct: bool,
    pub infeasible: bool,
    pub utility: f64,
}

/// The controller's merged, possibly stale snapshot of the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerView {
    pub domain_links: Vec<Vec<Link>>,
    pub domain_costs: Vec<Vec<(usize, u32)>>,
    pub domain_period: Vec<u64>,
    pub gateway_latencies: Vec<u32>,
}

impl ControllerView {
    fn full_snapshot(truth: &GroundTruthNetwork) -> Self {
        let n = truth.domains.len();
        let mut view = Self {
            domain_links: Vec::with_capacity(n),
            domain_costs: Vec::with_capacity(n),
            domain_period: vec![truth.period; n],
            gateway_latencies: truth.gateway_links.iter().map(|g| g.latency_ms).collect(),
        };
        for d in &truth.domains {
            view.domain_links.push(d.links.clone());
            view.domain_costs
                .push(d.servers.iter().map(|s| (s.id, s.cost)).collect());
        }
        view
    }

    fn merge_scm(&mut self, scm: &crate::topology::Scm) {
        self.domain_links[scm.domain_id] = scm.topology_snapshot.clone();
        self.domain_costs[scm.domain_id] = scm.server_costs.clone();
        self.domain_period[scm.domain_id] = scm.period_created;
        for &(idx, lat) in &scm.gateway_latencies {
            self.gateway_latencies[idx] = lat;
        }
    }
}

pub struct SdnEnv {
    pub cfg: EnvConfig,
    truth: GroundTruthNetwork,
    view: ControllerView,
    staleness: Vec<u32>,
    sources: Vec<(usize, usize)>,
    rates: Vec<f64>,
    step_count: usize,
    next_task_id: u64,
    carry: Vec<Task>,
    rng: SimRng,
    /// When true, `step` fills `last_task_records`.
    pub record_tasks: bool,
    pub last_task_records: Vec<TaskRecord>,
}

impl SdnEnv {
    /// Build a fresh environment: new ground-truth network, fully synchronized
    /// view, zero staleness. Returns the environment and the initial state.
    pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<(Self, SyncState)> {
        cfg.validate()?;
        let mut net_cfg = cfg.network.clone();
        net_cfg.seed = seed;
        let mut gen_rng = <SimRng as rand::SeedableRng>::seed_from_u64(seed);
        let truth = generate_network(&net_cfg, &mut gen_rng)?;
        let sources = match cfg.task_source_scope {
            TaskSourceScope::PolicyDomain => (0..truth.domains[0].n_nodes)
                .map(|n| (0usize, n))
                .collect::<Vec<_>>(),
            TaskSourceScope::AllDomains => truth
                .domains
                .iter()
                .enumerate()
                .flat_map(|(d, dom)| (0..dom.n_nodes).map(move |n| (d, n)))
                .collect(),
        };
        let mut env = Self {
            cfg: cfg.clone(),
            view: ControllerView::full_snapshot(&truth),
            staleness: vec![0; truth.domains.len()],
            sources,
            rates: Vec::new(),
            step_count: 0,
            next_task_id: 0,
            carry: Vec::new(),
            rng: <SimRng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, 0x5eed)),
            truth,
            record_tasks: false,
            last_task_records: Vec::new(),
        };
        env.draw_episode_rates();
        let state = env.state();
        Ok((env, state))
    }

    fn draw_episode_rates(&mut self) {
        self.rates = (0..self.sources.len())
            .map(|_| {
                self.rng
                    .random_range(self.cfg.poisson_rate_range[0]..=self.cfg.poisson_rate_range[1])
            })
            .collect();
    }

    /// Start a new episode on the same evolving network: re-synchronize the
    /// view in full, zero the staleness, redraw per-device task rates.
    pub fn reset_episode(&mut self) -> SyncState {
        self.view = ControllerView::full_snapshot(&self.truth);
        self.staleness.iter_mut().for_each(|s| *s = 0);
        self.step_count = 0;
        self.carry.clear();
        self.draw_episode_rates();
        env_state(&self.staleness)
    }

    pub fn n_domains(&self) -> usize {
        self.truth.domains.len()
    }

    pub fn state(&self) -> SyncState {
        env_state(&self.staleness)
    }

    pub fn truth(&self) -> &GroundTruthNetwork {
        &self.truth
    }

    pub fn steps_taken(&self) -> usize {
        self.step_count
    }

    fn view_route_graph(&self) -> RouteGraph {
        let sizes: Vec<usize> = self.truth.domains.iter().map(|d| d.n_nodes).collect();
        let mut g = RouteGraph::new(self.truth.config.hop_wait, &sizes, Vec::new());
        let mut servers = Vec::new();
        for (d, domain) in self.truth.domains.iter().enumerate() {
            for link in &self.view.domain_links[d] {
                if !link.failed {
                    let u = g.global_id((d, link.u)).unwrap();
                    let v = g.global_id((d, link.v)).unwrap();
                    g.add_edge(u, v, link.latency_ms);
                }
            }
            // Attach points are static structure; costs come from the view.
            for (pos, s) in domain.servers.iter().enumerate() {
                let (_, view_cost) = self.view.domain_costs[d][pos];
                servers.push(ServerInfo {
                    id: s.id,
                    node: g.global_id((d, s.attach_node)).unwrap(),
                    cost: view_cost,
                });
            }
        }
        for (i, gl) in self.truth.gateway_links.iter().enumerate() {
            let u = g.global_id((gl.domain_a, gl.node_a)).unwrap();
            let v = g.global_id((gl.domain_b, gl.node_b)).unwrap();
            g.add_edge(u, v, self.view.gateway_latencies[i]);
        }
        servers.sort_by_key(|s| s.id);
        g.servers = servers;
        g
    }

    pub fn step(&mut self, action: &SyncAction) -> Result<StepOutcome> {
        if action.selected.len() != self.cfg.sb {
            return Err(Error::BudgetViolation {
                got: action.selected.len(),
                want: self.cfg.sb,
            });
        }
        let n = self.n_domains();
        let mut prev = 0usize;
        for &d in &action.selected {
            if d == 0 || d >= n || d <= prev {
                return Err(Error::InvalidAction(format!(
                    "selected must be a strictly increasing subset of 1..{n}, got {:?}",
                    action.selected
                )));
            }
            prev = d;
        }
        if self.step_count >= self.cfg.horizon {
            return Err(Error::HorizonExhausted(self.cfg.horizon));
        }
        self.step_count += 1;
        self.last_task_records.clear();

        // (1) The world moves.
        self.truth.advance_period(&mut self.rng);

        // (2) Selected peers deliver current-period SCMs.
        for &d in &action.selected {
            let scm = self.truth.make_scm(d)?;
            self.view.merge_scm(&scm);
        }
        for i in 1..n {
            if action.selected.contains(&i) {
                self.staleness[i] = 0;
            } else {
                self.staleness[i] = (self.staleness[i] + 1).min(self.cfg.max_staleness);
            }
        }

        // (3) Task arrivals, plus any carried-over retries.
        let mut tasks: Vec<Task> = std::mem::take(&mut self.carry);
        for (i, &source) in self.sources.iter().enumerate() {
            let count = Poisson::new(self.rates[i])
                .expect("positive rate")
                .sample(&mut self.rng) as u64;
            for _ in 0..count {
                let low = self.rng.random::<f64>() < self.cfg.deadline_mix;
                tasks.push(Task {
                    task_id: self.next_task_id,
                    source,
                    deadline_ms: if low {
                        self.cfg.deadline_low_ms
                    } else {
                        self.cfg.deadline_high_ms
                    },
                    period_created: self.truth.period,
                    retried: false,
                });
                self.next_task_id += 1;
            }
        }

        // (4)-(6) Allocate on the view, score against the truth.
        let view_graph = self.view_route_graph();
        let truth_graph = RouteGraph::from_truth(&self.truth);
        let mut view_paths: Vec<Option<Vec<Option<PathTo>>>> = vec![None; view_graph.n_nodes()];
        let mut truth_paths: Vec<Option<Vec<Option<PathTo>>>> = vec![None; truth_graph.n_nodes()];

        let mut reward = 0.0;
        let mut compliant_count = 0usize;
        let mut correct_count = 0usize;
        let mut infeasible_count = 0usize;
        let mut realized_cost_sum = 0u64;
        let mut requeue: Vec<Task> = Vec::new();
        let tasks_total = tasks.len();

        for task in tasks {
            let src = view_graph
                .global_id(task.source)
                .ok_or(Error::NodeNotFound(task.source.0, task.source.1))?;
            if view_paths[src].is_none() {
                view_paths[src] = Some(routing::shortest_paths_from(&view_graph, src));
            }
            if truth_paths[src].is_none() {
                truth_paths[src] = Some(routing::shortest_paths_from(&truth_graph, src));
            }
            let vp = view_paths[src].as_ref().unwrap();
            let tp = truth_paths[src].as_ref().unwrap();

            let alloc = if self.cfg.view_latency_aware {
                select_server_latency_aware(&view_graph, vp, src, task.task_id, task.deadline_ms as u64)
            } else {
                select_server(&view_graph, vp, src, task.task_id)
            };
            let realized = realize(&truth_graph, &alloc);
            let (oracle_id, feasible) = if self.cfg.oracle_unconstrained {
                let best = truth_graph
                    .servers
                    .iter()
                    .min_by_key(|s| (s.cost, s.id))
                    .expect("servers exist");
                (best.id, true)
            } else {
                oracle_best_server(&truth_graph, tp, task.deadline_ms as u64)
            };
            let oracle_cost = truth_graph
                .servers
                .iter()
                .find(|s| s.id == oracle_id)
                .map(|s| s.cost)
                .unwrap_or(0);

            let compliant = realized.valid && realized.latency_ms < task.deadline_ms as u64;
            let correct = compliant && alloc.server_id == oracle_id;
            let utility = task_utility(
                compliant,
                correct,
                realized.cost,
                oracle_cost,
                self.cfg.lambda_penalty,
                self.cfg.r1,
            );
            reward += utility;
            if compliant {
                compliant_count += 1;
                realized_cost_sum += realized.cost as u64;
            } else if self.cfg.requeue_violations && !task.retried {
                requeue.push(Task {
                    retried: true,
                    ..task.clone()
                });
            }
            if correct {
                correct_count += 1;
            }
            if !feasible {
                infeasible_count += 1;
            }
            if self.record_tasks {
                self.last_task_records.push(TaskRecord {
                    period: self.truth.period,
                    task_id: task.task_id,
                    source_domain: task.source.0,
                    source_node: task.source.1,
                    deadline_ms: task.deadline_ms,
                    chosen_server: alloc.server_id,
                    oracle_server: oracle_id,
                    view_latency_ms: alloc
                        .path
                        .reachable
                        .then_some(alloc.path.latency_ms),
                    realized_latency_ms: (realized.latency_ms != UNREACHABLE_LATENCY)
                        .then_some(realized.latency_ms),
                    chosen_cost_true: realized.cost,
                    oracle_cost_true: oracle_cost,
                    compliant,
                    correct,
                    infeasible: !feasible,
                    utility,
                });
            }
        }
        self.carry = requeue;

        Ok(StepOutcome {
            reward,
            tasks_total,
            tasks_compliant: compliant_count,
            tasks_correct_server: correct_count,
            tasks_infeasible: infeasible_count,
            realized_cost_sum,
            next_state: env_state(&self.staleness),
        })
    }
}

fn env_state(staleness: &[u32]) -> SyncState {
    SyncState {
        staleness: staleness.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> EnvConfig {
        EnvConfig {
            network: NetworkConfig {
                n_domains: 5,
                devices_per_domain: [3, 4],
                intra_edge_prob: 0.7,
                ..Default::default()
            },
            sb: 2,
            horizon: 50,
            ..Default::default()
        }
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(action_space_size(5, 2).unwrap(), 6);
        assert_eq!(action_space_size(7, 3).unwrap(), 20);
        assert_eq!(action_space_size(12, 8).unwrap(), 165);
        assert!(action_space_size(5, 0).is_err());
        assert!(action_space_size(5, 5).is_err());
    }

    #[test]
    fn encode_lexicographic_ends() {
        assert_eq!(encode_action(5, 2, 0).unwrap().selected, vec![1, 2]);
        assert_eq!(encode_action(5, 2, 5).unwrap().selected, vec![3, 4]);
        assert!(encode_action(5, 2, 6).is_err());
    }

    #[test]
    fn encode_decode_bijection() {
        for (n, sb) in [(5, 2), (7, 3), (9, 4), (12, 8)] {
            let size = action_space_size(n, sb).unwrap();
            let mut seen = std::collections::HashSet::new();
            for idx in 0..size {
                let a = encode_action(n, sb, idx).unwrap();
                assert_eq!(a.selected.len(), sb);
                assert!(!a.selected.contains(&0));
                assert_eq!(decode_action(n, sb, &a.selected).unwrap(), idx);
                assert!(seen.insert(a.selected.clone()));
            }
        }
    }

    #[test]
    fn normalize_clips_and_scales() {
        let s = SyncState {
            staleness: vec![0, 32, 64, 200],
        };
        assert_eq!(normalize_state(&s, 64), vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn reward_cases_pin_constants() {
        assert_eq!(task_utility(true, true, 50, 20, 80.0, 10_000.0), 0.0);
        assert_eq!(task_utility(true, false, 50, 20, 80.0, 10_000.0), -2400.0);
        assert_eq!(task_utility(false, false, 50, 20, 80.0, 10_000.0), -10_000.0);
    }

    #[test]
    fn reset_returns_zero_state() {
        let cfg = EnvConfig {
            network: NetworkConfig {
                n_domains: 7,
                devices_per_domain: [3, 4],
                intra_edge_prob: 0.7,
                ..Default::default()
            },
            sb: 3,
            ..Default::default()
        };
        let (_, s) = SdnEnv::reset(&cfg, 9).unwrap();
        assert_eq!(s.staleness, vec![0; 7]);
    }

    #[test]
    fn staleness_update_rule() {
        let cfg = EnvConfig {
            network: NetworkConfig {
                n_domains: 7,
                devices_per_domain: [3, 4],
                intra_edge_prob: 0.7,
                ..Default::default()
            },
            sb: 3,
            ..Default::default()
        };
        let (mut env, _) = SdnEnv::reset(&cfg, 11).unwrap();
        let a = SyncAction {
            selected: vec![1, 2, 3],
            index: decode_action(7, 3, &[1, 2, 3]).unwrap(),
        };
        let out = env.step(&a).unwrap();
        assert_eq!(out.next_state.staleness, vec![0, 0, 0, 0, 1, 1, 1]);
        let out2 = env.step(&a).unwrap();
        assert_eq!(out2.next_state.staleness, vec![0, 0, 0, 0, 2, 2, 2]);
    }

    #[test]
    fn budget_violation_rejected() {
        let cfg = tiny_cfg();
        let (mut env, _) = SdnEnv::reset(&cfg, 3).unwrap();
        let bad = SyncAction {
            selected: vec![1],
            index: 0,
        };
        assert!(matches!(
            env.step(&bad),
            Err(Error::BudgetViolation { got: 1, want: 2 })
        ));
    }

    #[test]
    fn metric_ordering_and_reward_decomposition() {
        let cfg = tiny_cfg();
        let (mut env, _) = SdnEnv::reset(&cfg, 21).unwrap();
        env.record_tasks = true;
        for step in 0..40 {
            let idx = step % action_space_size(5, 2).unwrap();
            let a = encode_action(5, 2, idx).unwrap();
            let out = env.step(&a).unwrap();
            assert!(out.tasks_correct_server <= out.tasks_compliant);
            assert!(out.tasks_compliant <= out.tasks_total);
            assert!(out.reward <= 0.0);
            // Reward recomputable from the per-task dump, exactly.
            let recomputed: f64 = env.last_task_records.iter().map(|r| r.utility).sum();
            assert_eq!(out.reward, recomputed);
            let violations = out.tasks_total - out.tasks_compliant;
            let regret: f64 = env
                .last_task_records
                .iter()
                .filter(|r| r.compliant && !r.correct)
                .map(|r| (r.chosen_cost_true as f64 - r.oracle_cost_true as f64).abs())
                .sum();
            let expect = -cfg.r1 * violations as f64 - cfg.lambda_penalty * regret;
            assert!((out.reward - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_first_step() {
        let cfg = tiny_cfg();
        let (mut a, _) = SdnEnv::reset(&cfg, 5).unwrap();
        let (mut b, _) = SdnEnv::reset(&cfg, 5).unwrap();
        a.record_tasks = true;
        b.record_tasks = true;
        let act = encode_action(5, 2, 3).unwrap();
        let oa = a.step(&act).unwrap();
        let ob = b.step(&act).unwrap();
        assert_eq!(oa.reward, ob.reward);
        assert_eq!(oa.tasks_total, ob.tasks_total);
        assert_eq!(
            serde_json::to_string(&a.last_task_records).unwrap(),
            serde_json::to_string(&b.last_task_records).unwrap()
        );
    }

    #[test]
    fn horizon_exhaustion() {
        let cfg = EnvConfig {
            horizon: 2,
            ..tiny_cfg()
        };
        let (mut env, _) = SdnEnv::reset(&cfg, 1).unwrap();
        let a = encode_action(5, 2, 0).unwrap();
        env.step(&a).unwrap();
        env.step(&a).unwrap();
        assert!(matches!(env.step(&a), Err(Error::HorizonExhausted(2))));
        env.reset_episode();
        assert!(env.step(&a).is_ok());
    }

    #[test]
    fn full_sync_view_matches_truth() {
        // SB = N-1 keeps the view current, so view allocations equal
        // ground-truth cost-argmin allocations at every step.
        let cfg = EnvConfig {
            sb: 4,
            ..tiny_cfg()
        };
        let (mut env, _) = SdnEnv::reset(&cfg, 13).unwrap();
        let a = SyncAction {
            selected: vec![1, 2, 3, 4],
            index: 0,
        };
        env.record_tasks = true;
        for _ in 0..20 {
            let out = env.step(&a).unwrap();
            // With a current view, every compliant task had perfect cost info;
            // the chosen server is the global argmin. It is "correct" exactly
            // when the oracle's constrained choice coincides.
            for r in &env.last_task_records {
                if r.compliant && !r.infeasible {
                    // The chosen cost can never beat the oracle's.
                    assert!(r.chosen_cost_true >= r.oracle_cost_true || r.correct);
                }
            }
            assert!(out.next_state.staleness.iter().all(|&s| s == 0));
        }
    }
}
