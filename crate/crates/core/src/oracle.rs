//! Brute-force reference implementations.
//!
//! These deliberately share no solver machinery with the production paths
//! they check: vertices are enumerated by Gaussian elimination over column
//! subsets, matchings by exhaustive search, flows by plain augmenting paths,
//! and trading paths by depth-first enumeration of simple paths.

use std::collections::{BTreeSet, VecDeque};

use num_traits::{One, Signed, Zero};

use crate::flow::InterestGraph;
use crate::lp::{Cmp, LinearProgram};
use crate::model::{AuctionInstance, CombinatorialAllocation};
use crate::rational::{rat_u, Rat};

/// Solve the square system `A·x = b` by Gaussian elimination; `None` when
/// singular.
fn solve_square(a: &[Vec<Rat>], b: &[Rat]) -> Option<Vec<Rat>> {
    let n = b.len();
    let mut m: Vec<Vec<Rat>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(rhs.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v /= &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let prow = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(&prow) {
                    *v -= &f * pv;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}

/// Minimum objective over all basic feasible solutions of the program,
/// found by exhausting bases of the slack-extended equality system. `None`
/// when no basic feasible solution exists. Intended for small programs.
pub fn enumerate_basic_optimum(lp: &LinearProgram) -> Option<Rat> {
    let n = lp.num_vars;
    let slacks = lp.constraints.iter().filter(|c| c.cmp != Cmp::Eq).count();
    let cols = n + slacks;
    // Equality system rows: constraint coefficients plus ±1 slack.
    let mut rows: Vec<Vec<Rat>> = Vec::new();
    let mut rhs: Vec<Rat> = Vec::new();
    let mut slack_col = n;
    for c in &lp.constraints {
        let mut row = vec![Rat::zero(); cols];
        row[..n].clone_from_slice(&c.coeffs);
        match c.cmp {
            Cmp::Le => {
                row[slack_col] = Rat::one();
                slack_col += 1;
            }
            Cmp::Ge => {
                row[slack_col] = -Rat::one();
                slack_col += 1;
            }
            Cmp::Eq => {}
        }
        rows.push(row);
        rhs.push(c.rhs.clone());
    }
    // Row-reduce [A|b] to drop dependent rows; an inconsistent row means
    // no solution at all.
    let mut aug: Vec<Vec<Rat>> = rows
        .iter()
        .zip(&rhs)
        .map(|(r, b)| {
            let mut row = r.clone();
            row.push(b.clone());
            row
        })
        .collect();
    let mut rank = 0usize;
    for col in 0..cols {
        let Some(pivot) = (rank..aug.len()).find(|&r| !aug[r][col].is_zero()) else {
            continue;
        };
        aug.swap(rank, pivot);
        let p = aug[rank][col].clone();
        for v in aug[rank].iter_mut() {
            *v /= &p;
        }
        for r in 0..aug.len() {
            if r != rank && !aug[r][col].is_zero() {
                let f = aug[r][col].clone();
                let prow = aug[rank].clone();
                for (v, pv) in aug[r].iter_mut().zip(&prow) {
                    *v -= &f * pv;
                }
            }
        }
        rank += 1;
        if rank == aug.len() {
            break;
        }
    }
    for row in &aug[rank.min(aug.len())..] {
        if !row[cols].is_zero() {
            return None;
        }
    }
    aug.truncate(rank);
    let reduced_rows: Vec<Vec<Rat>> = aug.iter().map(|r| r[..cols].to_vec()).collect();
    let reduced_rhs: Vec<Rat> = aug.iter().map(|r| r[cols].clone()).collect();

    let mut best: Option<Rat> = None;
    let mut subset: Vec<usize> = (0..rank).collect();
    loop {
        // Solve for the basic variables in `subset`.
        let basis_matrix: Vec<Vec<Rat>> = reduced_rows
            .iter()
            .map(|row| subset.iter().map(|&c| row[c].clone()).collect())
            .collect();
        if let Some(values) = solve_square(&basis_matrix, &reduced_rhs) {
            if values.iter().all(|v| !v.is_negative()) {
                let mut full = vec![Rat::zero(); cols];
                for (k, &c) in subset.iter().enumerate() {
                    full[c] = values[k].clone();
                }
                let obj = lp
                    .objective
                    .iter()
                    .zip(&full[..n])
                    .fold(Rat::zero(), |acc, (c, v)| acc + c * v);
                best = Some(match best {
                    None => obj,
                    Some(b) if obj < b => obj,
                    Some(b) => b,
                });
            }
        }
        // Next k-subset of columns in lexicographic order.
        let k = subset.len();
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < cols - (k - i) {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Max-flow value through the interest graph by plain BFS augmenting paths,
/// ignoring avoidance entirely.
pub fn max_matching_value(graph: &InterestGraph) -> u64 {
    let nb = graph.bidder_caps.len();
    let ni = graph.item_caps.len();
    let source = nb + ni;
    let sink = nb + ni + 1;
    let nodes = nb + ni + 2;
    let mut cap = vec![vec![0i64; nodes]; nodes];
    for a in 0..nb {
        cap[source][a] = graph.bidder_caps[a] as i64;
        for &r in &graph.edges[a] {
            cap[a][nb + r] = 1;
        }
    }
    for r in 0..ni {
        cap[nb + r][sink] = graph.item_caps[r] as i64;
    }
    let mut flow = 0i64;
    loop {
        let mut parent = vec![usize::MAX; nodes];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..nodes {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return flow as u64;
        }
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != source {
            bottleneck = bottleneck.min(cap[parent[v]][v]);
            v = parent[v];
        }
        let mut v = sink;
        while v != source {
            cap[parent[v]][v] -= bottleneck;
            cap[v][parent[v]] += bottleneck;
            v = parent[v];
        }
        flow += bottleneck;
    }
}

/// Exhaustively enumerate integral B-matchings (edge loads within both
/// capacities) and return the maximum cardinality plus, among maximum ones,
/// the minimum load on `avoid`-set bidders.
pub fn enumerate_b_matchings(graph: &InterestGraph, avoid: &BTreeSet<usize>) -> (u64, u64) {
    let edges: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .enumerate()
        .flat_map(|(a, items)| items.iter().map(move |&r| (a, r)))
        .collect();
    let mut bidder_load = vec![0u64; graph.bidder_caps.len()];
    let mut item_load = vec![0u64; graph.item_caps.len()];
    let mut best: (u64, u64) = (0, 0);
    fn rec(
        k: usize,
        edges: &[(usize, usize)],
        graph: &InterestGraph,
        avoid: &BTreeSet<usize>,
        bidder_load: &mut Vec<u64>,
        item_load: &mut Vec<u64>,
        total: u64,
        avoided: u64,
        best: &mut (u64, u64),
    ) {
        if k == edges.len() {
            if total > best.0 || (total == best.0 && avoided < best.1) {
                *best = (total, avoided);
            }
            return;
        }
        let (a, r) = edges[k];
        // κ = 1 per round: load on each edge is 0 or 1.
        rec(
            k + 1,
            edges,
            graph,
            avoid,
            bidder_load,
            item_load,
            total,
            avoided,
            best,
        );
        if bidder_load[a] < graph.bidder_caps[a] && item_load[r] < graph.item_caps[r] {
            bidder_load[a] += 1;
            item_load[r] += 1;
            rec(
                k + 1,
                edges,
                graph,
                avoid,
                bidder_load,
                item_load,
                total + 1,
                avoided + u64::from(avoid.contains(&a)),
                best,
            );
            bidder_load[a] -= 1;
            item_load[r] -= 1;
        }
    }
    rec(
        0,
        &edges,
        graph,
        avoid,
        &mut bidder_load,
        &mut item_load,
        0,
        0,
        &mut best,
    );
    best
}

/// Whether any simple trading path exists, by depth-first enumeration of all
/// simple alternating paths (distinct bidders and distinct items).
pub fn trading_path_exists_brute_force(
    inst: &AuctionInstance,
    alloc: &CombinatorialAllocation,
) -> bool {
    let n = inst.n();
    let won: Vec<BTreeSet<usize>> = alloc
        .won
        .iter()
        .map(|rs| rs.iter().map(|&r| r - 1).collect())
        .collect();
    let valuations: Vec<u64> = inst
        .bidders
        .iter()
        .map(|b| b.valuation.flat().expect("flat"))
        .collect();
    fn dfs(
        current: usize,
        start: usize,
        inst: &AuctionInstance,
        won: &[BTreeSet<usize>],
        valuations: &[u64],
        remaining: &[Rat],
        used_bidders: &mut BTreeSet<usize>,
        used_items: &mut BTreeSet<usize>,
    ) -> bool {
        if current != start
            && valuations[current] > valuations[start]
            && remaining[current] >= rat_u(valuations[start])
        {
            return true;
        }
        for &t in &won[current] {
            if used_items.contains(&t) {
                continue;
            }
            for next in 0..inst.n() {
                if used_bidders.contains(&next)
                    || !inst.bidders[next].interest.contains(&(t + 1))
                    || won[next].contains(&t)
                {
                    continue;
                }
                used_items.insert(t);
                used_bidders.insert(next);
                if dfs(
                    next,
                    start,
                    inst,
                    won,
                    valuations,
                    remaining,
                    used_bidders,
                    used_items,
                ) {
                    return true;
                }
                used_bidders.remove(&next);
                used_items.remove(&t);
            }
        }
        false
    }
    (0..n).any(|start| {
        let mut used_bidders: BTreeSet<usize> = [start].into_iter().collect();
        let mut used_items = BTreeSet::new();
        dfs(
            start,
            start,
            inst,
            &won,
            &valuations,
            &alloc.remaining,
            &mut used_bidders,
            &mut used_items,
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, Constraint, LpOutcome};
    use crate::rational::rat_int;

    #[test]
    fn enumeration_matches_simplex_on_small_lp() {
        let lp = LinearProgram {
            num_vars: 2,
            objective: vec![rat_int(-2), rat_int(-3)],
            constraints: vec![
                Constraint {
                    coeffs: vec![rat_u(1), rat_u(2)],
                    cmp: Cmp::Le,
                    rhs: rat_u(4),
                },
                Constraint {
                    coeffs: vec![rat_u(1), rat_u(0)],
                    cmp: Cmp::Le,
                    rhs: rat_u(3),
                },
            ],
        };
        let brute = enumerate_basic_optimum(&lp).unwrap();
        match solve(&lp) {
            LpOutcome::Optimal(sol) => assert_eq!(sol.objective, brute),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn enumeration_detects_infeasible() {
        let lp = LinearProgram {
            num_vars: 1,
            objective: vec![rat_u(1)],
            constraints: vec![
                Constraint {
                    coeffs: vec![rat_u(1)],
                    cmp: Cmp::Ge,
                    rhs: rat_u(2),
                },
                Constraint {
                    coeffs: vec![rat_u(1)],
                    cmp: Cmp::Le,
                    rhs: rat_u(1),
                },
            ],
        };
        assert!(enumerate_basic_optimum(&lp).is_none());
    }

    #[test]
    fn brute_matching_agrees_with_flow_on_a_fixed_graph() {
        let graph = InterestGraph {
            bidder_caps: vec![2, 1],
            item_caps: vec![1, 1, 1],
            edges: vec![
                [0usize, 1].into_iter().collect(),
                [1usize, 2].into_iter().collect(),
            ],
        };
        let avoid: BTreeSet<usize> = [0].into_iter().collect();
        let (total, avoided) = enumerate_b_matchings(&graph, &avoid);
        let m = crate::flow::s_avoid_matching(&graph, &avoid);
        assert_eq!(m.matched, total);
        assert_eq!(m.avoided_load, avoided);
        assert_eq!(max_matching_value(&graph), total);
    }
}
