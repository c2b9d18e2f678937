//! Maximal B-matchings on the bidder–item interest graph via min-cost
//! max-flow.
//!
//! An S-avoid matching is a maximum-cardinality B-matching that, among all
//! maximum ones, assigns as few instances as possible to bidders in S. It is
//! computed as a min-cost max-flow with cost 1 on the supply edges of
//! S-bidders and 0 elsewhere. Capacities are integral and so are all flows.

use std::collections::BTreeSet;

/// Bipartite interest graph: bidders on the left with integer capacities,
/// items (rounds with unsold instances) on the right with instance counts.
#[derive(Debug, Clone)]
pub struct InterestGraph {
    pub bidder_caps: Vec<u64>,
    pub item_caps: Vec<u64>,
    /// `edges[a]` = items bidder `a` may take (0-based).
    pub edges: Vec<BTreeSet<usize>>,
}

impl InterestGraph {
    /// Total unsold instances t̄ = Σ_r c_r.
    pub fn total_instances(&self) -> u64 {
        self.item_caps.iter().sum()
    }
}

/// An integral matching: per-edge loads plus summary counts.
#[derive(Debug, Clone)]
pub struct AvoidMatching {
    /// `loads[a][r]` instances of item `r` assigned to bidder `a`.
    pub loads: Vec<Vec<u64>>,
    /// Total matched instances (the max-flow value).
    pub matched: u64,
    /// Instances assigned to bidders in the avoid set (the min cost).
    pub avoided_load: u64,
    /// Instances per bidder.
    pub per_bidder: Vec<u64>,
}

struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
}

struct FlowNet {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNet {
    fn new(nodes: usize) -> Self {
        FlowNet {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: i64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    /// Successive shortest augmenting paths (Bellman–Ford distances; all
    /// original costs are non-negative, residual arcs may be negative).
    /// Deterministic: edges are relaxed in insertion order.
    fn min_cost_max_flow(&mut self, source: usize, sink: usize) -> (i64, i64) {
        let n = self.adj.len();
        let mut total_flow = 0i64;
        let mut total_cost = 0i64;
        loop {
            let mut dist = vec![i64::MAX; n];
            let mut pred: Vec<Option<usize>> = vec![None; n];
            dist[source] = 0;
            // Bellman–Ford: at most n−1 relaxation sweeps.
            for _ in 0..n {
                let mut changed = false;
                for (idx, e) in self.edges.iter().enumerate() {
                    if e.cap <= 0 {
                        continue;
                    }
                    let from = self.edges[idx ^ 1].to;
                    if dist[from] == i64::MAX {
                        continue;
                    }
                    let cand = dist[from] + e.cost;
                    if cand < dist[e.to] {
                        dist[e.to] = cand;
                        pred[e.to] = Some(idx);
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[sink] == i64::MAX {
                return (total_flow, total_cost);
            }
            // Bottleneck along the path.
            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != source {
                let idx = pred[v].expect("path edge");
                bottleneck = bottleneck.min(self.edges[idx].cap);
                v = self.edges[idx ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let idx = pred[v].expect("path edge");
                self.edges[idx].cap -= bottleneck;
                self.edges[idx ^ 1].cap += bottleneck;
                v = self.edges[idx ^ 1].to;
            }
            total_flow += bottleneck;
            total_cost += bottleneck * dist[sink];
        }
    }
}

/// Among all maximum B-matchings, one assigning the fewest instances to
/// `avoid`-set bidders.
pub fn s_avoid_matching(graph: &InterestGraph, avoid: &BTreeSet<usize>) -> AvoidMatching {
    let nb = graph.bidder_caps.len();
    let ni = graph.item_caps.len();
    let source = nb + ni;
    let sink = nb + ni + 1;
    let mut net = FlowNet::new(nb + ni + 2);
    // Supply edge per bidder carries the avoidance cost; every matched
    // instance of an S-bidder pays 1.
    let mut supply_edge = vec![usize::MAX; nb];
    for a in 0..nb {
        let cost = i64::from(avoid.contains(&a));
        supply_edge[a] = net.edges.len();
        net.add(source, a, graph.bidder_caps[a] as i64, cost);
    }
    let mut load_edge = vec![vec![usize::MAX; ni]; nb];
    for a in 0..nb {
        for &r in &graph.edges[a] {
            // κ = 1 per round: a bidder takes at most one instance of an item.
            load_edge[a][r] = net.edges.len();
            net.add(a, nb + r, 1, 0);
        }
    }
    for r in 0..ni {
        net.add(nb + r, sink, graph.item_caps[r] as i64, 0);
    }
    let (matched, cost) = net.min_cost_max_flow(source, sink);
    let mut loads = vec![vec![0u64; ni]; nb];
    let mut per_bidder = vec![0u64; nb];
    for a in 0..nb {
        for r in 0..ni {
            let idx = load_edge[a][r];
            if idx != usize::MAX {
                // Flow on (a, r) equals the capacity pushed onto the
                // reverse edge.
                let f = net.edges[idx ^ 1].cap;
                loads[a][r] = f as u64;
                per_bidder[a] += f as u64;
            }
        }
    }
    AvoidMatching {
        loads,
        matched: matched as u64,
        avoided_load: cost as u64,
        per_bidder,
    }
}

/// B(¬{i}): instances assigned to bidders other than `i` in the i-avoid
/// matching. Bidder `i` clinches an instance exactly when this falls short
/// of the total unsold count t̄.
pub fn assigned_excluding(graph: &InterestGraph, bidder: usize) -> u64 {
    let avoid: BTreeSet<usize> = [bidder].into_iter().collect();
    let m = s_avoid_matching(graph, &avoid);
    m.matched - m.per_bidder[bidder]
}
