//! Independent verification of the engines' guarantees.
//!
//! Three routes decide Pareto optimality of a divisible allocation and must
//! agree: the swap-closure valuation condition, the constructive
//! trading-swap witness, and the improvement linear program. Combinatorial
//! outcomes are judged by the sold-out condition plus trading-path search;
//! indivisible and multi-unit outcomes by exact enumeration of integral
//! improvements. Deviation grids check incentive compatibility exhaustively
//! on small valuation grids.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::Zero;

use crate::combinatorial::run_combinatorial;
use crate::divisible::run_divisible;
use crate::error::EngineError;
use crate::lp::solve_improvement_lp;
use crate::model::{
    AuctionInstance, AuctionTrace, CombinatorialAllocation, DivisibleAllocation,
    IndivisibleAllocation, MultiUnitAllocation, TraceEvent, Valuation,
};
use crate::rational::{rat_u, Rat};

/// Slot-exchange structure of a divisible allocation: who could profitably
/// swap with whom, and the transitive closure of those relations.
///
/// Slots are compared by quality rank (ascending quality, ties by id). For
/// bidder i, `highest_held[i]`/`lowest_held[i]` are held slots of maximal
/// and minimal rank and `tie_rank[i]` is the smallest rank carrying the same
/// quality as the highest held slot. `neighbors[i]` is the set of bidders a
/// with `tie_rank[a] > rank(lowest_held[i])` — exactly those whose best slot
/// strictly beats i's worst, so a swap raises i's weighted capacity.
#[derive(Debug, Clone)]
pub struct SwapClosure {
    /// Slot index (into the allocation's slot set) per rank.
    pub rank_to_slot: Vec<usize>,
    /// Rank per slot index.
    pub slot_rank: Vec<usize>,
    /// h′(i): held slot of maximal rank.
    pub highest_held: Vec<Option<usize>>,
    /// l(i): held slot of minimal rank.
    pub lowest_held: Vec<Option<usize>>,
    /// h(i): smallest rank whose quality equals the highest held quality.
    pub tie_rank: Vec<Option<usize>>,
    /// N_i.
    pub neighbors: Vec<BTreeSet<usize>>,
    /// Ñ_i: bidders reachable through neighbor steps, excluding i.
    pub closure: Vec<BTreeSet<usize>>,
    /// ṽ_i = min valuation over Ñ_i; `None` is +∞.
    pub closure_min_valuation: Vec<Option<u64>>,
    /// B: bidders with remaining budget b_i > p_i.
    pub slack_budget: Vec<bool>,
}

/// Compute the swap closure. The characterization is meaningful on slot
/// sets with Σκ_i slots (engine outputs are, by preprocessing).
pub fn swap_closure(inst: &AuctionInstance, alloc: &DivisibleAllocation) -> SwapClosure {
    let n = inst.n();
    let m = inst.m();
    let mut rank_to_slot: Vec<usize> = (0..m).collect();
    rank_to_slot.sort_by(|&a, &b| {
        inst.slots[a]
            .quality
            .cmp(&inst.slots[b].quality)
            .then(a.cmp(&b))
    });
    let mut slot_rank = vec![0usize; m];
    for (rank, &j) in rank_to_slot.iter().enumerate() {
        slot_rank[j] = rank;
    }
    let mut highest_held = vec![None; n];
    let mut lowest_held = vec![None; n];
    let mut tie_rank = vec![None; n];
    for i in 0..n {
        let mut held: Vec<usize> = (0..m).filter(|&j| alloc.x[i][j] > Rat::zero()).collect();
        held.sort_by_key(|&j| slot_rank[j]);
        if let (Some(&lo), Some(&hi)) = (held.first(), held.last()) {
            lowest_held[i] = Some(lo);
            highest_held[i] = Some(hi);
            let q = &inst.slots[hi].quality;
            tie_rank[i] = (0..m)
                .map(|r| rank_to_slot[r])
                .position(|j| &inst.slots[j].quality == q);
        }
    }
    let mut neighbors = vec![BTreeSet::new(); n];
    for i in 0..n {
        let Some(lo) = lowest_held[i] else { continue };
        let lo_rank = slot_rank[lo];
        for a in 0..n {
            if let Some(h) = tie_rank[a] {
                if h > lo_rank {
                    neighbors[i].insert(a);
                }
            }
        }
    }
    // Ñ_i: reachability through neighbor steps (fixed point within n steps).
    let mut closure = vec![BTreeSet::new(); n];
    for i in 0..n {
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut frontier: Vec<usize> = neighbors[i].iter().copied().collect();
        while let Some(a) = frontier.pop() {
            if seen.insert(a) {
                frontier.extend(neighbors[a].iter().copied());
            }
        }
        seen.remove(&i);
        closure[i] = seen;
    }
    let valuations: Vec<u64> = inst
        .bidders
        .iter()
        .map(|b| b.valuation.flat().expect("flat valuations"))
        .collect();
    let closure_min_valuation = closure
        .iter()
        .map(|set| set.iter().map(|&a| valuations[a]).min())
        .collect();
    let slack_budget = inst
        .bidders
        .iter()
        .zip(&alloc.payments)
        .map(|(b, p)| &b.budget > p)
        .collect();
    SwapClosure {
        rank_to_slot,
        slot_rank,
        highest_held,
        lowest_held,
        tie_rank,
        neighbors,
        closure,
        closure_min_valuation,
        slack_budget,
    }
}

/// Sufficient condition for Pareto optimality: every bidder with remaining
/// budget values his capacity no more than everyone he could trade up to,
/// i.e. ṽ_i ≥ v_i for all i ∈ B.
pub fn check_theorem1(inst: &AuctionInstance, alloc: &DivisibleAllocation) -> (bool, SwapClosure) {
    let closure = swap_closure(inst, alloc);
    let verdict = (0..inst.n()).all(|i| {
        if !closure.slack_budget[i] {
            return true;
        }
        match closure.closure_min_valuation[i] {
            None => true,
            Some(min_v) => min_v >= inst.bidders[i].valuation.flat().expect("flat"),
        }
    });
    (verdict, closure)
}

/// A chain of slot exchanges plus a payment transfer that Pareto-improves
/// the allocation.
#[derive(Debug, Clone)]
pub struct TradingSwap {
    /// Bidders a_0..a_k: a_0 gains capacity, a_k sells it.
    pub chain: Vec<usize>,
    /// The traded weighted capacity δ > 0.
    pub delta: Rat,
    /// The resulting Pareto-superior allocation.
    pub improved: DivisibleAllocation,
}

/// Search for a trading swap: a bidder u with slack budget whose closure
/// contains someone cheaper. When found, the constructive witness of the
/// characterization is built: a shortest chain u = a_0, …, a_k with
/// v_{a_k} = ṽ_u, the exchangeable amount δ, the adjusted assignment, and
/// the payment transfer v_{a_k}·δ from a_0 to a_k.
pub fn find_trading_swap(
    inst: &AuctionInstance,
    alloc: &DivisibleAllocation,
) -> Option<TradingSwap> {
    let closure = swap_closure(inst, alloc);
    let n = inst.n();
    let valuations: Vec<u64> = inst
        .bidders
        .iter()
        .map(|b| b.valuation.flat().expect("flat"))
        .collect();
    let source = (0..n).find(|&i| {
        closure.slack_budget[i]
            && closure.closure_min_valuation[i].is_some_and(|min_v| min_v < valuations[i])
    })?;
    let target_value = closure.closure_min_valuation[source].expect("nonempty closure");

    // First-reach BFS over neighbor edges gives the shortest chain; shortest
    // chains are shortcut-free, which keeps the slot exchanges disjoint
    // enough for entrywise feasibility.
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    let mut queue = VecDeque::from([source]);
    depth.insert(source, 0);
    let mut terminal: Option<usize> = None;
    'bfs: while let Some(cur) = queue.pop_front() {
        for &next in &closure.neighbors[cur] {
            if depth.contains_key(&next) {
                continue;
            }
            depth.insert(next, depth[&cur] + 1);
            parent.insert(next, cur);
            if next != source && valuations[next] == target_value {
                terminal = Some(next);
                break 'bfs;
            }
            queue.push_back(next);
        }
    }
    let terminal = terminal?;
    let mut chain = vec![terminal];
    while let Some(&p) = parent.get(chain.last().unwrap()) {
        chain.push(p);
        if p == source {
            break;
        }
    }
    chain.reverse();
    let k = chain.len() - 1;

    // δ bounds: the budget slack of a_0 priced at v_{a_k}, and each edge's
    // exchangeable capacity. Edge p trades slot l(a_p) against the held top
    // slot h′(a_{p+1}).
    let held_top =
        |i: usize| closure.highest_held[i].expect("bidders hold slots in full assignments");
    let held_low = |i: usize| closure.lowest_held[i].expect("bidders hold slots");
    let mut delta = (&inst.bidders[source].budget - &alloc.payments[source]) / rat_u(target_value);
    let mut quality_diffs = Vec::with_capacity(k);
    for p in 0..k {
        let give = held_low(chain[p]);
        let take = held_top(chain[p + 1]);
        let diff = &inst.slots[take].quality - &inst.slots[give].quality;
        debug_assert!(diff > Rat::zero());
        let amount = alloc.x[chain[p]][give]
            .clone()
            .min(alloc.x[chain[p + 1]][take].clone());
        let edge_delta = &amount * &diff;
        if edge_delta < delta {
            delta = edge_delta;
        }
        quality_diffs.push(diff);
    }
    debug_assert!(delta > Rat::zero());

    let mut x = alloc.x.clone();
    for p in 0..k {
        let give = held_low(chain[p]);
        let take = held_top(chain[p + 1]);
        let tau = &delta / &quality_diffs[p];
        x[chain[p]][take] += &tau;
        x[chain[p]][give] -= &tau;
        x[chain[p + 1]][take] -= &tau;
        x[chain[p + 1]][give] += &tau;
    }
    let mut payments = alloc.payments.clone();
    let transfer = rat_u(target_value) * &delta;
    payments[source] += &transfer;
    payments[chain[k]] -= &transfer;
    Some(TradingSwap {
        chain,
        delta,
        improved: DivisibleAllocation { x, payments },
    })
}

/// An alternating bidder/item path whose endpoint can buy out the start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingPath {
    /// Bidders a_1..a_j (0-based).
    pub bidders: Vec<usize>,
    /// Items t_1..t_{j−1} (0-based rounds), one per consecutive bidder pair.
    pub items: Vec<usize>,
}

fn path_edges(inst: &AuctionInstance, won: &[BTreeSet<usize>]) -> Vec<Vec<(usize, usize)>> {
    let n = inst.n();
    let mut edges = vec![Vec::new(); n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            // a → b through item t: a holds t, b wants t but does not hold it.
            let t = won[a]
                .iter()
                .find(|&&t| inst.bidders[b].interest.contains(&(t + 1)) && !won[b].contains(&t));
            if let Some(&t) = t {
                edges[a].push((b, t));
            }
        }
    }
    edges
}

/// Search for a simple trading path in a combinatorial allocation:
/// reachability over alternating-path edges, then cycle excision to emit a
/// simple witness. Returns the witness found from the smallest start bidder.
pub fn find_trading_path(
    inst: &AuctionInstance,
    alloc: &CombinatorialAllocation,
) -> Option<TradingPath> {
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
    let edges = path_edges(inst, &won);
    for start in 0..n {
        let value = rat_u(valuations[start]);
        let mut parent: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut queue = VecDeque::from([start]);
        let mut seen: BTreeSet<usize> = [start].into_iter().collect();
        while let Some(cur) = queue.pop_front() {
            for &(next, item) in &edges[cur] {
                if !seen.insert(next) {
                    continue;
                }
                parent.insert(next, (cur, item));
                queue.push_back(next);
            }
        }
        let mut ends: Vec<usize> = parent
            .keys()
            .copied()
            .filter(|&e| valuations[e] > valuations[start] && alloc.remaining[e] >= value)
            .collect();
        ends.sort();
        if let Some(&end) = ends.first() {
            let mut bidders = vec![end];
            let mut items = Vec::new();
            let mut cur = end;
            while cur != start {
                let (prev, item) = parent[&cur];
                items.push(item);
                bidders.push(prev);
                cur = prev;
            }
            bidders.reverse();
            items.reverse();
            let mut path = TradingPath { bidders, items };
            excise_repeated_items(&mut path);
            return Some(path);
        }
    }
    None
}

/// Remove cycles through repeated items: if t_i = t_k for i < k, the span
/// between them is an item cycle and the shortcut remains alternating.
fn excise_repeated_items(path: &mut TradingPath) {
    loop {
        let mut first: BTreeMap<usize, usize> = BTreeMap::new();
        let mut cut: Option<(usize, usize)> = None;
        for (pos, &t) in path.items.iter().enumerate() {
            match first.get(&t) {
                Some(&prev) => {
                    cut = Some((prev, pos));
                    break;
                }
                None => {
                    first.insert(t, pos);
                }
            }
        }
        let Some((i, k)) = cut else { return };
        // Keep bidders a_1..a_i then a_{k+1}.. and items t_1..t_i then t_{k+1}..
        path.bidders.drain(i + 1..k + 1);
        path.items.drain(i + 1..k + 1);
        let _ = path.items[i];
    }
}

/// Check every clause of the trading-path definition against an allocation.
pub fn validate_trading_path(
    inst: &AuctionInstance,
    alloc: &CombinatorialAllocation,
    path: &TradingPath,
) -> Result<(), String> {
    if path.bidders.len() < 2 || path.items.len() != path.bidders.len() - 1 {
        return Err("path must alternate at least two bidders".into());
    }
    let won: Vec<BTreeSet<usize>> = alloc
        .won
        .iter()
        .map(|rs| rs.iter().map(|&r| r - 1).collect())
        .collect();
    for (idx, &t) in path.items.iter().enumerate() {
        let holder = path.bidders[idx];
        let receiver = path.bidders[idx + 1];
        if !won[holder].contains(&t) {
            return Err(format!(
                "bidder {} does not hold item {}",
                holder + 1,
                t + 1
            ));
        }
        if !inst.bidders[receiver].interest.contains(&(t + 1)) {
            return Err(format!(
                "item {} not in bidder {}'s interest",
                t + 1,
                receiver + 1
            ));
        }
        if won[receiver].contains(&t) {
            return Err(format!(
                "bidder {} already holds item {}",
                receiver + 1,
                t + 1
            ));
        }
    }
    let simple_bidders: BTreeSet<usize> = path.bidders.iter().copied().collect();
    let simple_items: BTreeSet<usize> = path.items.iter().copied().collect();
    if simple_bidders.len() != path.bidders.len() || simple_items.len() != path.items.len() {
        return Err("path is not simple".into());
    }
    let first = path.bidders[0];
    let last = *path.bidders.last().unwrap();
    let v_first = inst.bidders[first].valuation.flat().expect("flat");
    let v_last = inst.bidders[last].valuation.flat().expect("flat");
    if v_last <= v_first {
        return Err("endpoint valuation not strictly higher".into());
    }
    if alloc.remaining[last] < rat_u(v_first) {
        return Err("endpoint budget below start valuation".into());
    }
    Ok(())
}

/// Why an allocation is improvable.
#[derive(Debug, Clone)]
pub enum ImprovementWitness {
    /// Positive total utility gain (divisible LP or integral search).
    Gain(Rat),
    /// A slot instance of this 1-based round is unsold.
    UnsoldInstance { round: usize },
    /// A trading path exists.
    TradingPath(TradingPath),
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Optimal,
    Improvable(ImprovementWitness),
}

impl Verdict {
    pub fn is_optimal(&self) -> bool {
        matches!(self, Verdict::Optimal)
    }
}

/// Judge Pareto optimality of an allocation against its instance; the route
/// depends on the allocation kind.
pub fn pareto_verdict(
    inst: &AuctionInstance,
    alloc: AllocationRef<'_>,
) -> Result<Verdict, EngineError> {
    match alloc {
        AllocationRef::Divisible(a) => {
            let imp = solve_improvement_lp(&inst.bidders, &inst.slots, a)?;
            if imp.gain.is_zero() {
                Ok(Verdict::Optimal)
            } else {
                Ok(Verdict::Improvable(ImprovementWitness::Gain(imp.gain)))
            }
        }
        AllocationRef::Rounds(a) => integral_improvement(inst, a),
        AllocationRef::Combinatorial(a) => {
            let sold: u64 = a.won.iter().map(|w| w.len() as u64).sum();
            let total = inst.m() as u64 * inst.rounds as u64;
            if sold < total {
                let mut counts = vec![0u64; inst.rounds];
                for w in &a.won {
                    for &r in w {
                        counts[r - 1] += 1;
                    }
                }
                let round = counts
                    .iter()
                    .position(|&c| c < inst.m() as u64)
                    .expect("an undersold round exists")
                    + 1;
                return Ok(Verdict::Improvable(ImprovementWitness::UnsoldInstance {
                    round,
                }));
            }
            match find_trading_path(inst, a) {
                Some(p) => Ok(Verdict::Improvable(ImprovementWitness::TradingPath(p))),
                None => Ok(Verdict::Optimal),
            }
        }
        AllocationRef::MultiUnit(a) => multi_unit_improvement(inst, a),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum AllocationRef<'a> {
    Divisible(&'a DivisibleAllocation),
    Rounds(&'a IndivisibleAllocation),
    Combinatorial(&'a CombinatorialAllocation),
    MultiUnit(&'a MultiUnitAllocation),
}

const ENUMERATION_CAP: u64 = 4_000_000;

/// All legal one-round slot-to-bidder columns under the demand caps.
fn legal_columns(n: usize, m: usize, caps: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut column = vec![0usize; m];
    let mut counts = vec![0usize; n];
    fn rec(
        j: usize,
        m: usize,
        n: usize,
        caps: &[usize],
        column: &mut Vec<usize>,
        counts: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if j == m {
            out.push(column.clone());
            return;
        }
        for i in 0..n {
            if counts[i] < caps[i] {
                counts[i] += 1;
                column[j] = i;
                rec(j + 1, m, n, caps, column, counts, out);
                counts[i] -= 1;
            }
        }
    }
    rec(0, m, n, caps, &mut column, &mut counts, &mut out);
    out
}

/// Exact ex-post Pareto check for an indivisible multi-round allocation:
/// enumerate every legal integral assignment, and for each test whether a
/// payment vector (bounded by budgets only) keeps all participants at least
/// whole while total welfare strictly rises.
fn integral_improvement(
    inst: &AuctionInstance,
    alloc: &IndivisibleAllocation,
) -> Result<Verdict, EngineError> {
    let n = inst.n();
    let rounds = alloc.rounds();
    let valuations: Vec<u64> = inst
        .bidders
        .iter()
        .map(|b| b.valuation.flat().expect("flat"))
        .collect();
    let caps: Vec<usize> = inst.bidders.iter().map(|b| b.demand_cap).collect();
    let columns = legal_columns(n, inst.m(), &caps);
    let combos = (columns.len() as u64).checked_pow(rounds as u32);
    if !combos.is_some_and(|c| c <= ENUMERATION_CAP) {
        return Err(EngineError::invariant(format!(
            "integral improvement enumeration too large: {}^{} assignments",
            columns.len(),
            rounds
        )));
    }
    // Per-column capacity contribution per bidder (unscaled by |R|).
    let col_caps: Vec<Vec<Rat>> = columns
        .iter()
        .map(|col| {
            let mut caps = vec![Rat::zero(); n];
            for (j, &i) in col.iter().enumerate() {
                caps[i] += &inst.slots[j].quality;
            }
            caps
        })
        .collect();
    let current_caps = alloc.capacities(&inst.slots, n);
    let utilities: Vec<Rat> = (0..n)
        .map(|i| &current_caps[i] * rat_u(valuations[i]) - &alloc.payments[i])
        .collect();
    let revenue: Rat = alloc.payments.iter().fold(Rat::zero(), |a, p| a + p);
    let welfare: Rat = (0..n).fold(Rat::zero(), |a, i| {
        a + &current_caps[i] * rat_u(valuations[i])
    });

    let mut best_gain = Rat::zero();
    let mut pick = vec![0usize; rounds];
    loop {
        let mut caps_total = vec![Rat::zero(); n];
        for &c in &pick {
            for i in 0..n {
                caps_total[i] += &col_caps[c][i];
            }
        }
        let scale = rat_u(rounds as u64);
        let mut payment_room = Rat::zero();
        let mut welfare_alt = Rat::zero();
        for i in 0..n {
            let cap = &caps_total[i] / &scale;
            let gross = &cap * rat_u(valuations[i]);
            welfare_alt += &gross;
            let room = (&gross - &utilities[i]).min(inst.bidders[i].budget.clone());
            payment_room += room;
        }
        if payment_room >= revenue {
            let gain = &welfare_alt - &welfare;
            if gain > best_gain {
                best_gain = gain;
            }
        }
        // Advance the odometer over column picks.
        let mut pos = 0;
        loop {
            if pos == rounds {
                if best_gain.is_zero() {
                    return Ok(Verdict::Optimal);
                }
                return Ok(Verdict::Improvable(ImprovementWitness::Gain(best_gain)));
            }
            pick[pos] += 1;
            if pick[pos] < columns.len() {
                break;
            }
            pick[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact Pareto check for multi-unit allocations with marginal valuations:
/// enumerate unit splits.
fn multi_unit_improvement(
    inst: &AuctionInstance,
    alloc: &MultiUnitAllocation,
) -> Result<Verdict, EngineError> {
    let n = inst.n();
    let units = inst.rounds;
    let gross = |i: usize, k: usize| inst.bidders[i].valuation.gross(k);
    let utilities: Vec<Rat> = (0..n)
        .map(|i| gross(i, alloc.units[i]) - &alloc.payments[i])
        .collect();
    let revenue: Rat = alloc.payments.iter().fold(Rat::zero(), |a, p| a + p);
    let welfare: Rat = (0..n).fold(Rat::zero(), |a, i| a + gross(i, alloc.units[i]));

    let mut best_gain = Rat::zero();
    let mut split = vec![0usize; n];
    fn rec(
        i: usize,
        left: usize,
        n: usize,
        split: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if i == n - 1 {
            split[i] = left;
            visit(split);
            return;
        }
        for k in 0..=left {
            split[i] = k;
            rec(i + 1, left - k, n, split, visit);
        }
    }
    {
        let mut visit = |split: &[usize]| {
            let mut welfare_alt = Rat::zero();
            let mut payment_room = Rat::zero();
            for i in 0..n {
                let g = gross(i, split[i]);
                welfare_alt += &g;
                payment_room += (&g - &utilities[i]).min(inst.bidders[i].budget.clone());
            }
            if payment_room >= revenue {
                let gain = &welfare_alt - &welfare;
                if gain > best_gain {
                    best_gain = gain;
                }
            }
        };
        rec(0, units, n, &mut split, &mut visit);
    }
    if best_gain.is_zero() {
        Ok(Verdict::Optimal)
    } else {
        Ok(Verdict::Improvable(ImprovementWitness::Gain(best_gain)))
    }
}

/// The engines a deviation grid can exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Divisible,
    /// Randomized rounding: expected utilities equal the divisible ones, so
    /// the grid reuses the divisible outcomes.
    Rounds,
    Combinatorial,
}

/// A profitable misreport found by a deviation grid.
#[derive(Debug, Clone)]
pub struct Deviation {
    /// 1-based deviating bidder.
    pub bidder: usize,
    /// Truthful valuation profile.
    pub truthful_profile: Vec<u64>,
    pub reported: u64,
    pub truthful_utility: Rat,
    pub deviating_utility: Rat,
}

/// Exhaustively compare truthful and misreported runs over all valuation
/// profiles in {1..vmax}^n. Outcomes are cached per profile: the utility of
/// a deviating bidder is his true valuation applied to the misreport run's
/// allocation. Returns every profitable deviation (empty ⇔ incentive
/// compatible on the grid).
pub fn ic_deviation_grid(
    template: &AuctionInstance,
    engine: Engine,
    vmax: u64,
) -> Result<Vec<Deviation>, EngineError> {
    let n = template.n();
    let mut outcomes: BTreeMap<Vec<u64>, (Vec<Rat>, Vec<Rat>)> = BTreeMap::new();
    let mut profiles = vec![vec![]];
    for _ in 0..n {
        profiles = profiles
            .into_iter()
            .flat_map(|p: Vec<u64>| {
                (1..=vmax).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let run = |profile: &[u64]| -> Result<(Vec<Rat>, Vec<Rat>), EngineError> {
        let mut inst = template.clone();
        for (b, &v) in inst.bidders.iter_mut().zip(profile) {
            b.valuation = Valuation::Flat(v);
        }
        match engine {
            Engine::Divisible | Engine::Rounds => {
                let (alloc, _) = run_divisible(&inst)?;
                let pre = crate::divisible::preprocessed_instance(&inst);
                Ok((alloc.capacities(&pre.slots), alloc.payments))
            }
            Engine::Combinatorial => {
                let (alloc, _) = run_combinatorial(&inst)?;
                let counts = alloc.won.iter().map(|w| rat_u(w.len() as u64)).collect();
                Ok((counts, alloc.payments))
            }
        }
    };
    for profile in &profiles {
        let outcome = run(profile)?;
        outcomes.insert(profile.clone(), outcome);
    }
    let mut deviations = Vec::new();
    for profile in &profiles {
        let (truthful_caps, truthful_pay) = &outcomes[profile];
        for bidder in 0..n {
            let true_v = profile[bidder];
            let truthful_utility = &truthful_caps[bidder] * rat_u(true_v) - &truthful_pay[bidder];
            for reported in 1..=vmax {
                if reported == true_v {
                    continue;
                }
                let mut dev_profile = profile.clone();
                dev_profile[bidder] = reported;
                let (dev_caps, dev_pay) = &outcomes[&dev_profile];
                let deviating_utility = &dev_caps[bidder] * rat_u(true_v) - &dev_pay[bidder];
                if deviating_utility > truthful_utility {
                    deviations.push(Deviation {
                        bidder: bidder + 1,
                        truthful_profile: profile.clone(),
                        reported,
                        truthful_utility: truthful_utility.clone(),
                        deviating_utility,
                    });
                }
            }
        }
    }
    Ok(deviations)
}

/// Replay a divisible trace: prices must be non-decreasing, clinch prices
/// within valuations, payments within budgets, capacities non-decreasing.
/// Returns the accumulated capacities and payments.
pub fn replay_divisible(
    inst: &AuctionInstance,
    trace: &AuctionTrace,
) -> Result<(Vec<Rat>, Vec<Rat>), EngineError> {
    let n = inst.n();
    let valuations = inst
        .flat_valuations()
        .map_err(|e| EngineError::Validation(vec![e]))?;
    let mut capacities = vec![Rat::zero(); n];
    let mut payments = vec![Rat::zero(); n];
    let mut last_price: Option<Rat> = None;
    for e in &trace.events {
        match e {
            TraceEvent::PriceAdvanced { price, .. } => {
                if let Some(prev) = &last_price {
                    if price < prev {
                        return Err(EngineError::invariant("clock price decreased in trace"));
                    }
                }
                last_price = Some(price.clone());
            }
            TraceEvent::Clinched {
                bidder,
                amount,
                unit_price,
            } => {
                if *bidder < 1 || *bidder > n {
                    return Err(EngineError::invariant(format!(
                        "trace names unknown bidder {bidder}"
                    )));
                }
                let i = bidder - 1;
                if amount < &Rat::zero() {
                    return Err(EngineError::invariant("negative clinch amount"));
                }
                if unit_price > &rat_u(valuations[i]) {
                    return Err(EngineError::invariant(format!(
                        "bidder {bidder} charged a unit price above his valuation"
                    )));
                }
                capacities[i] += amount;
                payments[i] += amount * unit_price;
                if payments[i] > inst.bidders[i].budget {
                    return Err(EngineError::invariant(format!(
                        "bidder {bidder} exceeded his budget during replay"
                    )));
                }
            }
            _ => {}
        }
    }
    Ok((capacities, payments))
}

/// Replay a combinatorial trace into won-set and payment accumulators.
pub fn replay_combinatorial(
    inst: &AuctionInstance,
    trace: &AuctionTrace,
) -> Result<(Vec<Vec<usize>>, Vec<Rat>), EngineError> {
    let n = inst.n();
    let mut won: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut payments = vec![Rat::zero(); n];
    let mut last_price: Option<Rat> = None;
    for e in &trace.events {
        match e {
            TraceEvent::PriceAdvanced { price, .. } => {
                if let Some(prev) = &last_price {
                    if price < prev {
                        return Err(EngineError::invariant("clock price decreased in trace"));
                    }
                }
                last_price = Some(price.clone());
            }
            TraceEvent::ClinchedRound {
                bidder,
                round,
                price,
            } => {
                if *bidder < 1 || *bidder > n {
                    return Err(EngineError::invariant(format!(
                        "trace names unknown bidder {bidder}"
                    )));
                }
                let i = bidder - 1;
                if !won[i].insert(*round) {
                    return Err(EngineError::invariant(format!(
                        "bidder {bidder} clinched round {round} twice"
                    )));
                }
                payments[i] += price;
                if payments[i] > inst.bidders[i].budget {
                    return Err(EngineError::invariant(format!(
                        "bidder {bidder} exceeded his budget during replay"
                    )));
                }
            }
            _ => {}
        }
    }
    Ok((
        won.into_iter().map(|s| s.into_iter().collect()).collect(),
        payments,
    ))
}
