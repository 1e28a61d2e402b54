//! Shortest-latency path computation, server selection, and the ground-truth
//! oracle for the cost-minimal latency-feasible allocation.
//!
//! Path latency is d(p) = sum of link latencies + hop_wait per node traversed.
//! All arithmetic is on integer milliseconds, so oracle comparisons are exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::GroundTruthNetwork;

/// A node addressed as (domain, node-within-domain).
pub type NodeRef = (usize, usize);

#[derive(Debug, Clone, Copy)]
pub struct ServerInfo {
    pub id: usize,
    pub node: usize, // global node index
    pub cost: u32,
}

/// Flattened routable graph over some information source (ground truth or a
/// controller view). Failed links are excluded at construction time.
#[derive(Debug, Clone)]
pub struct RouteGraph {
    pub hop_wait: u32,
    offsets: Vec<usize>,
    n_nodes: usize,
    adj: Vec<Vec<(usize, u32)>>,
    pub servers: Vec<ServerInfo>,
}

impl RouteGraph {
    pub fn new(
        hop_wait: u32,
        domain_sizes: &[usize],
        servers: Vec<ServerInfo>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(domain_sizes.len());
        let mut acc = 0;
        for &s in domain_sizes {
            offsets.push(acc);
            acc += s;
        }
        Self {
            hop_wait,
            offsets,
            n_nodes: acc,
            adj: vec![Vec::new(); acc],
            servers,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn global_id(&self, node: NodeRef) -> Option<usize> {
        let (d, n) = node;
        let next = if d + 1 < self.offsets.len() {
            self.offsets[d + 1]
        } else {
            self.n_nodes
        };
        let base = *self.offsets.get(d)?;
        let id = base + n;
        (id < next).then_some(id)
    }

    pub fn node_ref(&self, global: usize) -> NodeRef {
        let d = match self.offsets.binary_search(&global) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (d, global - self.offsets[d])
    }

    pub fn add_edge(&mut self, u: usize, v: usize, latency_ms: u32) {
        self.adj[u].push((v, latency_ms));
        self.adj[v].push((u, latency_ms));
    }

    /// Minimum live-edge latency between two adjacent nodes, if any.
    pub fn edge_latency(&self, u: usize, v: usize) -> Option<u32> {
        self.adj[u]
            .iter()
            .filter(|&&(n, _)| n == v)
            .map(|&(_, w)| w)
            .min()
    }

    pub fn from_truth(net: &GroundTruthNetwork) -> Self {
        let sizes: Vec<usize> = net.domains.iter().map(|d| d.n_nodes).collect();
        let mut servers = Vec::new();
        let mut g = Self::new(net.config.hop_wait, &sizes, Vec::new());
        for (d, domain) in net.domains.iter().enumerate() {
            for link in &domain.links {
                if !link.failed {
                    let u = g.global_id((d, link.u)).unwrap();
                    let v = g.global_id((d, link.v)).unwrap();
                    g.add_edge(u, v, link.latency_ms);
                }
            }
            for s in &domain.servers {
                servers.push(ServerInfo {
                    id: s.id,
                    node: g.global_id((d, s.attach_node)).unwrap(),
                    cost: s.cost,
                });
            }
        }
        for gl in &net.gateway_links {
            let u = g.global_id((gl.domain_a, gl.node_a)).unwrap();
            let v = g.global_id((gl.domain_b, gl.node_b)).unwrap();
            g.add_edge(u, v, gl.latency_ms);
        }
        servers.sort_by_key(|s| s.id);
        g.servers = servers;
        g
    }
}

/// Best path label kept per node: total latency (including hop_wait for every
/// node traversed), hop count, and the full node sequence for deterministic
/// lexicographic tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Label {
    latency: u64,
    hops: u32,
    nodes: Vec<usize>,
}

/// Single-source shortest paths; entry i is None when node i is unreachable.
pub fn shortest_paths_from(g: &RouteGraph, source: usize) -> Vec<Option<PathTo>> {
    let mut settled: Vec<Option<PathTo>> = vec![None; g.n_nodes()];
    let mut heap: BinaryHeap<Reverse<Label>> = BinaryHeap::new();
    heap.push(Reverse(Label {
        latency: g.hop_wait as u64,
        hops: 0,
        nodes: vec![source],
    }));
    while let Some(Reverse(label)) = heap.pop() {
        let node = *label.nodes.last().unwrap();
        if settled[node].is_some() {
            continue;
        }
        for &(next, w) in &g.adj[node] {
            if settled[next].is_none() {
                let mut nodes = label.nodes.clone();
                nodes.push(next);
                heap.push(Reverse(Label {
                    latency: label.latency + w as u64 + g.hop_wait as u64,
                    hops: label.hops + 1,
                    nodes,
                }));
            }
        }
        settled[node] = Some(PathTo {
            latency_ms: label.latency,
            nodes: label.nodes,
        });
    }
    settled
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTo {
    pub latency_ms: u64,
    pub nodes: Vec<usize>, // global ids, source..=target
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathResult {
    /// Node sequence source..=target as (domain, node); empty when the target
    /// is unreachable or equals the source.
    pub hops: Vec<NodeRef>,
    /// Total latency in ms; meaningful only when reachable.
    pub latency_ms: u64,
    pub reachable: bool,
}

pub const UNREACHABLE_LATENCY: u64 = u64::MAX;

impl PathResult {
    fn unreachable() -> Self {
        Self {
            hops: Vec::new(),
            latency_ms: UNREACHABLE_LATENCY,
            reachable: false,
        }
    }
}

pub fn shortest_path(g: &RouteGraph, source: NodeRef, target: NodeRef) -> Result<PathResult> {
    let s = g
        .global_id(source)
        .ok_or(Error::NodeNotFound(source.0, source.1))?;
    let t = g
        .global_id(target)
        .ok_or(Error::NodeNotFound(target.0, target.1))?;
    let paths = shortest_paths_from(g, s);
    Ok(path_result(g, &paths, s, t))
}

fn path_result(g: &RouteGraph, paths: &[Option<PathTo>], source: usize, target: usize) -> PathResult {
    match &paths[target] {
        None => PathResult::unreachable(),
        Some(p) => PathResult {
            hops: if source == target {
                Vec::new()
            } else {
                p.nodes.iter().map(|&n| g.node_ref(n)).collect()
            },
            latency_ms: p.latency_ms,
            reachable: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub task_id: u64,
    pub server_id: usize,
    pub path: PathResult,
    /// Cost as believed by the selecting view.
    pub server_cost: u32,
}

/// Server selection on a (possibly stale) view: global cost argmin over all
/// servers, ties broken by smallest id. Latency is not consulted; compliance
/// is judged afterwards against the ground truth.
pub fn select_server(
    g: &RouteGraph,
    source_paths: &[Option<PathTo>],
    source: usize,
    task_id: u64,
) -> Allocation {
    let best = g
        .servers
        .iter()
        .min_by_key(|s| (s.cost, s.id))
        .expect("view contains at least one server");
    Allocation {
        task_id,
        server_id: best.id,
        path: path_result(g, source_paths, source, best.node),
        server_cost: best.cost,
    }
}

/// Latency-aware variant: cheapest server whose view path meets the deadline,
/// falling back to the unconstrained argmin when none does.
pub fn select_server_latency_aware(
    g: &RouteGraph,
    source_paths: &[Option<PathTo>],
    source: usize,
    task_id: u64,
    deadline_ms: u64,
) -> Allocation {
    let feasible = g
        .servers
        .iter()
        .filter(|s| {
            source_paths[s.node]
                .as_ref()
                .is_some_and(|p| p.latency_ms <= deadline_ms)
        })
        .min_by_key(|s| (s.cost, s.id));
    match feasible {
        Some(best) => Allocation {
            task_id,
            server_id: best.id,
            path: path_result(g, source_paths, source, best.node),
            server_cost: best.cost,
        },
        None => select_server(g, source_paths, source, task_id),
    }
}

/// Ground-truth oracle: min-cost server among those whose true shortest path
/// satisfies d(p) <= deadline (ties by id). Falls back to the global argmin
/// with `latency_feasible = false` when no server is feasible.
pub fn oracle_best_server(
    truth: &RouteGraph,
    source_paths: &[Option<PathTo>],
    deadline_ms: u64,
) -> (usize, bool) {
    let feasible = truth
        .servers
        .iter()
        .filter(|s| {
            source_paths[s.node]
                .as_ref()
                .is_some_and(|p| p.latency_ms <= deadline_ms)
        })
        .min_by_key(|s| (s.cost, s.id));
    match feasible {
        Some(s) => (s.id, true),
        None => {
            let best = truth
                .servers
                .iter()
                .min_by_key(|s| (s.cost, s.id))
                .expect("network contains at least one server");
            (best.id, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub latency_ms: u64,
    pub cost: u32,
    pub valid: bool,
}

/// Score a view-derived allocation against the ground truth: walk the chosen
/// path over live truth links, recomputing latency from true values. Any
/// failed or absent link invalidates the allocation.
pub fn realize(truth: &RouteGraph, alloc: &Allocation) -> Realized {
    let true_cost = truth
        .servers
        .iter()
        .find(|s| s.id == alloc.server_id)
        .map(|s| s.cost)
        .unwrap_or(0);
    if !alloc.path.reachable {
        return Realized {
            latency_ms: UNREACHABLE_LATENCY,
            cost: true_cost,
            valid: false,
        };
    }
    if alloc.path.hops.is_empty() {
        // Source co-located with the server's attach node.
        return Realized {
            latency_ms: truth.hop_wait as u64,
            cost: true_cost,
            valid: true,
        };
    }
    let mut latency = truth.hop_wait as u64 * alloc.path.hops.len() as u64;
    for pair in alloc.path.hops.windows(2) {
        let u = match truth.global_id(pair[0]) {
            Some(u) => u,
            None => {
                return Realized {
                    latency_ms: UNREACHABLE_LATENCY,
                    cost: true_cost,
                    valid: false,
                }
            }
        };
        let v = match truth.global_id(pair[1]) {
            Some(v) => v,
            None => {
                return Realized {
                    latency_ms: UNREACHABLE_LATENCY,
                    cost: true_cost,
                    valid: false,
                }
            }
        };
        match truth.edge_latency(u, v) {
            Some(w) => latency += w as u64,
            None => {
                return Realized {
                    latency_ms: UNREACHABLE_LATENCY,
                    cost: true_cost,
                    valid: false,
                }
            }
        }
    }
    Realized {
        latency_ms: latency,
        cost: true_cost,
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph(lat: &[u32], hop_wait: u32) -> RouteGraph {
        let n = lat.len() + 1;
        let mut g = RouteGraph::new(hop_wait, &[n], Vec::new());
        for (i, &w) in lat.iter().enumerate() {
            g.add_edge(i, i + 1, w);
        }
        g
    }

    #[test]
    fn one_edge_latency() {
        let g = line_graph(&[3], 1);
        let p = shortest_path(&g, (0, 0), (0, 1)).unwrap();
        assert!(p.reachable);
        assert_eq!(p.latency_ms, 3 + 2);
        assert_eq!(p.hops, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn self_path_costs_one_hop_wait() {
        let g = line_graph(&[3, 4], 1);
        let p = shortest_path(&g, (0, 1), (0, 1)).unwrap();
        assert!(p.reachable);
        assert_eq!(p.latency_ms, 1);
        assert!(p.hops.is_empty());
    }

    #[test]
    fn unreachable_target() {
        let mut g = RouteGraph::new(1, &[3], Vec::new());
        g.add_edge(0, 1, 2);
        let p = shortest_path(&g, (0, 0), (0, 2)).unwrap();
        assert!(!p.reachable);
        assert_eq!(p.latency_ms, UNREACHABLE_LATENCY);
    }

    #[test]
    fn node_not_found() {
        let g = line_graph(&[1], 1);
        assert!(matches!(
            shortest_path(&g, (0, 0), (0, 9)),
            Err(Error::NodeNotFound(0, 9))
        ));
    }

    #[test]
    fn tie_break_fewer_hops_then_lex() {
        // 0-3 direct with latency 6, or 0-1-3 with 3+3 but an extra hop_wait.
        let mut g = RouteGraph::new(0, &[4], Vec::new());
        g.add_edge(0, 3, 6);
        g.add_edge(0, 1, 3);
        g.add_edge(1, 3, 3);
        g.add_edge(0, 2, 3);
        g.add_edge(2, 3, 3);
        let p = shortest_path(&g, (0, 0), (0, 3)).unwrap();
        assert_eq!(p.latency_ms, 6);
        assert_eq!(p.hops, vec![(0, 0), (0, 3)]);
        // With hop_wait 0 and equal latency, fewer hops wins; among equal-hop
        // equal-latency alternatives the lexicographically smaller sequence
        // wins.
        let mut g2 = RouteGraph::new(0, &[4], Vec::new());
        g2.add_edge(0, 1, 3);
        g2.add_edge(1, 3, 3);
        g2.add_edge(0, 2, 3);
        g2.add_edge(2, 3, 3);
        let p2 = shortest_path(&g2, (0, 0), (0, 3)).unwrap();
        assert_eq!(p2.hops, vec![(0, 0), (0, 1), (0, 3)]);
    }

    fn with_servers(mut g: RouteGraph, servers: &[(usize, usize, u32)]) -> RouteGraph {
        g.servers = servers
            .iter()
            .map(|&(id, node, cost)| ServerInfo { id, node, cost })
            .collect();
        g
    }

    #[test]
    fn select_server_is_cost_argmin_with_id_ties() {
        let g = with_servers(line_graph(&[2, 2, 2], 1), &[(0, 1, 40), (1, 2, 20), (2, 3, 90)]);
        let paths = shortest_paths_from(&g, 0);
        let a = select_server(&g, &paths, 0, 0);
        assert_eq!(a.server_id, 1);

        let g2 = with_servers(line_graph(&[2, 2], 1), &[(0, 1, 20), (1, 2, 20)]);
        let paths2 = shortest_paths_from(&g2, 0);
        assert_eq!(select_server(&g2, &paths2, 0, 0).server_id, 0);
    }

    #[test]
    fn select_server_ignores_reachability() {
        // Cheapest server in a disconnected component.
        let mut g = RouteGraph::new(1, &[4], Vec::new());
        g.add_edge(0, 1, 2);
        let g = with_servers(g, &[(0, 1, 50), (1, 3, 10)]);
        let paths = shortest_paths_from(&g, 0);
        let a = select_server(&g, &paths, 0, 0);
        assert_eq!(a.server_id, 1);
        assert!(!a.path.reachable);
    }

    #[test]
    fn oracle_switches_under_deadline() {
        // Cheapest server 25 ms away, deadline 10 ms, second-cheapest 8 ms away.
        let mut g = RouteGraph::new(0, &[3], Vec::new());
        g.add_edge(0, 1, 25);
        g.add_edge(0, 2, 8);
        let g = with_servers(g, &[(0, 1, 20), (1, 2, 30)]);
        let paths = shortest_paths_from(&g, 0);
        let (e, feasible) = oracle_best_server(&g, &paths, 10);
        assert_eq!(e, 1);
        assert!(feasible);
        // Relaxed deadline: constraint not binding, global argmin wins.
        let (e2, f2) = oracle_best_server(&g, &paths, 100);
        assert_eq!(e2, 0);
        assert!(f2);
        // Impossible deadline: fall back to global argmin, infeasible.
        let (e3, f3) = oracle_best_server(&g, &paths, 1);
        assert_eq!(e3, 0);
        assert!(!f3);
    }

    #[test]
    fn realize_matches_view_when_truth_identical() {
        let g = with_servers(line_graph(&[5, 7], 1), &[(0, 2, 30)]);
        let paths = shortest_paths_from(&g, 0);
        let a = select_server(&g, &paths, 0, 0);
        let r = realize(&g, &a);
        assert!(r.valid);
        assert_eq!(r.latency_ms, a.path.latency_ms);
        assert_eq!(r.cost, 30);
    }

    #[test]
    fn realize_detects_failed_link_and_stale_latency() {
        let view = with_servers(line_graph(&[5], 1), &[(0, 1, 30)]);
        let paths = shortest_paths_from(&view, 0);
        let a = select_server(&view, &paths, 0, 0);

        // Truth where the link is gone entirely.
        let truth_missing = with_servers(
            {
                let g = RouteGraph::new(1, &[2], Vec::new());
                g
            },
            &[(0, 1, 44)],
        );
        let r = realize(&truth_missing, &a);
        assert!(!r.valid);

        // Truth where the link latency drifted from 5 to 9.
        let truth_drift = with_servers(line_graph(&[9], 1), &[(0, 1, 44)]);
        let r2 = realize(&truth_drift, &a);
        assert!(r2.valid);
        assert_eq!(r2.latency_ms, 9 + 2);
        assert_eq!(r2.cost, 44);
    }

    /// Independent all-pairs oracle over integer latencies.
    fn floyd_warshall(g: &RouteGraph) -> Vec<Vec<Option<u64>>> {
        let n = g.n_nodes();
        let mut d: Vec<Vec<Option<u64>>> = vec![vec![None; n]; n];
        for u in 0..n {
            d[u][u] = Some(0);
            for &(v, w) in &g.adj[u] {
                let cand = w as u64 + g.hop_wait as u64;
                d[u][v] = Some(d[u][v].map_or(cand, |x: u64| x.min(cand)));
            }
        }
        for k in 0..n {
            for i in 0..n {
                if let Some(dik) = d[i][k] {
                    for j in 0..n {
                        if let Some(dkj) = d[k][j] {
                            let cand = dik + dkj;
                            d[i][j] = Some(d[i][j].map_or(cand, |x| x.min(cand)));
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn dijkstra_matches_floyd_warshall_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::SimRng::seed_from_u64(1234);
        for _ in 0..200 {
            let n = rng.random_range(2..=10);
            let p: f64 = rng.random_range(0.2..0.9);
            let mut g = RouteGraph::new(1, &[n], Vec::new());
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random::<f64>() < p {
                        g.add_edge(u, v, rng.random_range(1..=20));
                    }
                }
            }
            let fw = floyd_warshall(&g);
            for s in 0..n {
                let paths = shortest_paths_from(&g, s);
                for t in 0..n {
                    let expect = fw[s][t].map(|d| d + g.hop_wait as u64);
                    let got = paths[t].as_ref().map(|p| p.latency_ms);
                    assert_eq!(got, expect, "s={s} t={t}");
                }
            }
        }
    }

    #[test]
    fn removing_a_link_never_shortens_paths() {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::SimRng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.random_range(3..=9);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random::<f64>() < 0.6 {
                        edges.push((u, v, rng.random_range(1..=15u32)));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let build = |es: &[(usize, usize, u32)]| {
                let mut g = RouteGraph::new(1, &[n], Vec::new());
                for &(u, v, w) in es {
                    g.add_edge(u, v, w);
                }
                g
            };
            let full = build(&edges);
            let drop_idx = rng.random_range(0..edges.len());
            let mut fewer = edges.clone();
            fewer.remove(drop_idx);
            let reduced = build(&fewer);
            for s in 0..n {
                let pf = shortest_paths_from(&full, s);
                let pr = shortest_paths_from(&reduced, s);
                for t in 0..n {
                    match (&pf[t], &pr[t]) {
                        (Some(a), Some(b)) => assert!(b.latency_ms >= a.latency_ms),
                        (None, Some(_)) => panic!("removal created a path"),
                        _ => {}
                    }
                }
            }
        }
    }
}
