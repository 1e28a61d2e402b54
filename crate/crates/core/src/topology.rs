//! Ground-truth multi-domain network: generation, per-period evolution and
//! per-domain synchronization snapshots (SCMs).
//!
//! All link latencies are whole milliseconds. Integer latencies keep path
//! arithmetic exact, which the routing oracle tests rely on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SimRng;

pub const MAX_DOMAINS: usize = 16;
const MAX_GENERATION_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub n_domains: usize,
    /// Inclusive [min, max] range of data-plane devices per domain.
    pub devices_per_domain: [usize; 2],
    pub servers_per_domain: usize,
    pub intra_edge_prob: f64,
    /// Gateway links each domain initially gets to distinct other domains.
    pub inter_gateway_degree: usize,
    pub link_failure_prob: f64,
    /// Inclusive [c_min, c_max] server cost range, in cost units.
    pub cost_range: [u32; 2],
    /// Inclusive latency ranges, in whole milliseconds.
    pub intra_latency_range: [u32; 2],
    pub inter_latency_range: [u32; 2],
    /// Constant per-hop queue waiting time in ms, charged once per node traversed.
    pub hop_wait: u32,
    /// Probability that a server keeps last period's cost instead of resampling.
    /// 0 reproduces i.i.d. per-period costs.
    pub cost_persistence_prob: f64,
    /// When set, only the listed domains evolve after generation; the rest keep
    /// their initial links, latencies and costs. Used for controlled studies.
    pub dynamic_domains: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_domains: 5,
            devices_per_domain: [2, 15],
            servers_per_domain: 4,
            intra_edge_prob: 0.4,
            inter_gateway_degree: 1,
            link_failure_prob: 1.0 / 30.0,
            cost_range: [20, 100],
            intra_latency_range: [1, 10],
            inter_latency_range: [5, 20],
            hop_wait: 1,
            cost_persistence_prob: 0.0,
            dynamic_domains: None,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_domains < 2 || self.n_domains > MAX_DOMAINS {
            return Err(Error::InvalidConfig(format!(
                "n_domains must be in [2, {MAX_DOMAINS}], got {}",
                self.n_domains
            )));
        }
        if self.devices_per_domain[0] < 1 || self.devices_per_domain[0] > self.devices_per_domain[1]
        {
            return Err(Error::InvalidConfig(format!(
                "devices_per_domain range invalid: {:?}",
                self.devices_per_domain
            )));
        }
        if !(0.0..=1.0).contains(&self.intra_edge_prob) {
            return Err(Error::InvalidConfig("intra_edge_prob outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.link_failure_prob) {
            return Err(Error::InvalidConfig("link_failure_prob outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.cost_persistence_prob) {
            return Err(Error::InvalidConfig(
                "cost_persistence_prob outside [0, 1]".into(),
            ));
        }
        if self.cost_range[0] > self.cost_range[1] {
            return Err(Error::InvalidConfig("cost_range inverted".into()));
        }
        if self.intra_latency_range[0] > self.intra_latency_range[1]
            || self.inter_latency_range[0] > self.inter_latency_range[1]
        {
            return Err(Error::InvalidConfig("latency range inverted".into()));
        }
        if self.servers_per_domain == 0 {
            return Err(Error::InvalidConfig("servers_per_domain must be >= 1".into()));
        }
        if self.inter_gateway_degree == 0 {
            return Err(Error::InvalidConfig("inter_gateway_degree must be >= 1".into()));
        }
        if let Some(dyns) = &self.dynamic_domains {
            if dyns.iter().any(|&d| d >= self.n_domains) {
                return Err(Error::InvalidConfig("dynamic_domains index out of range".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub u: usize,
    pub v: usize,
    pub latency_ms: u32,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeServer {
    /// Global server identifier, unique across the whole network.
    pub id: usize,
    pub domain: usize,
    pub attach_node: usize,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub n_nodes: usize,
    pub gateway: Vec<bool>,
    pub links: Vec<Link>,
    pub servers: Vec<EdgeServer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayLink {
    pub domain_a: usize,
    pub node_a: usize,
    pub domain_b: usize,
    pub node_b: usize,
    pub latency_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthNetwork {
    pub config: NetworkConfig,
    pub domains: Vec<Domain>,
    pub gateway_links: Vec<GatewayLink>,
    pub period: u64,
}

/// Snapshot of one domain's synchronizable state at a given period.
/// Fully owned copies; mutating the ground truth never changes an SCM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scm {
    pub domain_id: usize,
    pub period_created: u64,
    /// The domain's intra links with current latencies and failure flags.
    pub topology_snapshot: Vec<Link>,
    /// (gateway link index, current latency) for links incident to the domain.
    pub gateway_latencies: Vec<(usize, u32)>,
    pub server_costs: Vec<(usize, u32)>,
}

fn sample_range_u32(rng: &mut SimRng, range: [u32; 2]) -> u32 {
    rng.random_range(range[0]..=range[1])
}

impl GroundTruthNetwork {
    pub fn total_servers(&self) -> usize {
        self.domains.iter().map(|d| d.servers.len()).sum()
    }

    pub fn total_nodes(&self) -> usize {
        self.domains.iter().map(|d| d.n_nodes).sum()
    }

    pub fn server(&self, id: usize) -> Option<&EdgeServer> {
        self.domains
            .iter()
            .flat_map(|d| d.servers.iter())
            .find(|s| s.id == id)
    }

    fn domain_is_dynamic(&self, d: usize) -> bool {
        match &self.config.dynamic_domains {
            None => true,
            Some(set) => set.contains(&d),
        }
    }

    /// Advance one time period: resample failures, latencies and server costs.
    pub fn advance_period(&mut self, rng: &mut SimRng) {
        self.period += 1;
        let cfg = self.config.clone();
        for (d_idx, domain) in self.domains.iter_mut().enumerate() {
            let dynamic = match &cfg.dynamic_domains {
                None => true,
                Some(set) => set.contains(&d_idx),
            };
            if !dynamic {
                continue;
            }
            for link in &mut domain.links {
                link.failed = rng.random::<f64>() < cfg.link_failure_prob;
                link.latency_ms = sample_range_u32(rng, cfg.intra_latency_range);
            }
            for server in &mut domain.servers {
                let keep =
                    cfg.cost_persistence_prob > 0.0 && rng.random::<f64>() < cfg.cost_persistence_prob;
                if !keep {
                    server.cost = sample_range_u32(rng, cfg.cost_range);
                }
            }
        }
        // Gateway links never fail; only their latency varies. A gateway link
        // evolves when at least one of its endpoint domains is dynamic.
        let dynamic: Vec<bool> = (0..self.domains.len())
            .map(|d| self.domain_is_dynamic(d))
            .collect();
        for gl in &mut self.gateway_links {
            if dynamic[gl.domain_a] || dynamic[gl.domain_b] {
                gl.latency_ms = sample_range_u32(rng, cfg.inter_latency_range);
            }
        }
    }

    pub fn make_scm(&self, domain_id: usize) -> Result<Scm> {
        let domain = self
            .domains
            .get(domain_id)
            .ok_or(Error::DomainIndex(domain_id, self.domains.len()))?;
        let gateway_latencies = self
            .gateway_links
            .iter()
            .enumerate()
            .filter(|(_, gl)| gl.domain_a == domain_id || gl.domain_b == domain_id)
            .map(|(i, gl)| (i, gl.latency_ms))
            .collect();
        Ok(Scm {
            domain_id,
            period_created: self.period,
            topology_snapshot: domain.links.clone(),
            gateway_latencies,
            server_costs: domain.servers.iter().map(|s| (s.id, s.cost)).collect(),
        })
    }
}

/// Generate a connected ground-truth network from the config.
/// Regenerates (up to a bounded number of attempts) until the failure-free
/// global graph is connected.
pub fn generate_network(cfg: &NetworkConfig, rng: &mut SimRng) -> Result<GroundTruthNetwork> {
    cfg.validate()?;
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let net = generate_once(cfg, rng);
        if is_connected(&net) {
            return Ok(net);
        }
    }
    Err(Error::GenerationFailure {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn generate_once(cfg: &NetworkConfig, rng: &mut SimRng) -> GroundTruthNetwork {
    let n = cfg.n_domains;
    let mut domains = Vec::with_capacity(n);
    let mut next_server_id = 0usize;
    for d in 0..n {
        let n_nodes = rng.random_range(cfg.devices_per_domain[0]..=cfg.devices_per_domain[1]);
        let mut links = Vec::new();
        for u in 0..n_nodes {
            for v in (u + 1)..n_nodes {
                if rng.random::<f64>() < cfg.intra_edge_prob {
                    links.push(Link {
                        u,
                        v,
                        latency_ms: sample_range_u32(rng, cfg.intra_latency_range),
                        failed: false,
                    });
                }
            }
        }
        let mut servers = Vec::with_capacity(cfg.servers_per_domain);
        for _ in 0..cfg.servers_per_domain {
            servers.push(EdgeServer {
                id: next_server_id,
                domain: d,
                attach_node: rng.random_range(0..n_nodes),
                cost: sample_range_u32(rng, cfg.cost_range),
            });
            next_server_id += 1;
        }
        domains.push(Domain {
            n_nodes,
            gateway: vec![false; n_nodes],
            links,
            servers,
        });
    }

    // Domain-level connectivity: each domain links to `inter_gateway_degree`
    // distinct peers, then repair links are added until the domain graph is
    // one component.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for d in 0..n {
        let mut targets: Vec<usize> = Vec::new();
        let degree = cfg.inter_gateway_degree.min(n - 1);
        while targets.len() < degree {
            let t = rng.random_range(0..n);
            if t != d && !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            pairs.push((d.min(t), d.max(t)));
        }
    }
    // Union-find over domains for the repair pass.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    loop {
        let roots: Vec<usize> = (0..n).map(|d| find(&mut parent, d)).collect();
        let first = roots[0];
        if roots.iter().all(|&r| r == first) {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            pairs.push((a.min(b), a.max(b)));
            parent[ra] = rb;
        }
    }

    let mut gateway_links = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let node_a = rng.random_range(0..domains[a].n_nodes);
        let node_b = rng.random_range(0..domains[b].n_nodes);
        domains[a].gateway[node_a] = true;
        domains[b].gateway[node_b] = true;
        gateway_links.push(GatewayLink {
            domain_a: a,
            node_a,
            domain_b: b,
            node_b,
            latency_ms: sample_range_u32(rng, cfg.inter_latency_range),
        });
    }

    GroundTruthNetwork {
        config: cfg.clone(),
        domains,
        gateway_links,
        period: 0,
    }
}

/// Connectivity of the failure-free global graph (intra links + gateways).
fn is_connected(net: &GroundTruthNetwork) -> bool {
    let offsets: Vec<usize> = net
        .domains
        .iter()
        .scan(0usize, |acc, d| {
            let o = *acc;
            *acc += d.n_nodes;
            Some(o)
        })
        .collect();
    let total = net.total_nodes();
    if total == 0 {
        return false;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); total];
    for (d, domain) in net.domains.iter().enumerate() {
        for link in &domain.links {
            let (u, v) = (offsets[d] + link.u, offsets[d] + link.v);
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    for gl in &net.gateway_links {
        let u = offsets[gl.domain_a] + gl.node_a;
        let v = offsets[gl.domain_b] + gl.node_b;
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; total];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == total
}
