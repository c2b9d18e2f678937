//! Shared domain types: bidders, slots, instances, allocations, traces, plus
//! instance validation, allocation legality checks, and utility accounting.
//!
//! Conventions: bidders and slots carry 1-based ids equal to their position
//! in the instance (the fixed tie-break order); internal indices are 0-based.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::Zero;

use crate::rational::{fmt_rat, rat_u, Rat};

/// Which engine an instance is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// One round, divisible heterogeneous slots (fractional assignment).
    Divisible,
    /// Multiple identical rounds of indivisible heterogeneous slots,
    /// served by randomized rounding of the divisible outcome.
    IndivisibleRounds,
    /// Single-valued combinatorial: interest sets over rounds, identical
    /// slots within a round, at most one instance per bidder per round.
    Combinatorial,
    /// Multi-unit setting with per-unit (diminishing) marginal valuations;
    /// only the impossibility demo runs on these.
    MultiUnitMarginal,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Divisible => "divisible",
            Mode::IndivisibleRounds => "indivisible-rounds",
            Mode::Combinatorial => "combinatorial",
            Mode::MultiUnitMarginal => "multi-unit-marginal",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "divisible" => Some(Mode::Divisible),
            "indivisible-rounds" => Some(Mode::IndivisibleRounds),
            "combinatorial" => Some(Mode::Combinatorial),
            "multi-unit-marginal" => Some(Mode::MultiUnitMarginal),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bidder's reported valuation: one positive integer per unit of weighted
/// capacity, or a non-increasing sequence of per-unit marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Valuation {
    Flat(u64),
    Marginals(Vec<u64>),
}

impl Valuation {
    /// The flat value, if this is a flat valuation.
    pub fn flat(&self) -> Option<u64> {
        match self {
            Valuation::Flat(v) => Some(*v),
            Valuation::Marginals(_) => None,
        }
    }

    /// Gross value of holding `units` units under this valuation.
    pub fn gross(&self, units: usize) -> Rat {
        match self {
            Valuation::Flat(v) => rat_u(*v) * rat_u(units as u64),
            Valuation::Marginals(m) => rat_u(m.iter().take(units).sum::<u64>()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bidder {
    /// 1-based id; equals position in the instance.
    pub id: usize,
    pub valuation: Valuation,
    pub budget: Rat,
    /// Demand cap κ: maximum number of slots per round.
    pub demand_cap: usize,
    /// Interest set (combinatorial mode): 1-based round ids.
    pub interest: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct Slot {
    /// 1-based id; equals position in the instance.
    pub id: usize,
    /// Quality α (click-through rate); non-negative.
    pub quality: Rat,
}

#[derive(Debug, Clone)]
pub struct AuctionInstance {
    pub mode: Mode,
    pub bidders: Vec<Bidder>,
    pub slots: Vec<Slot>,
    pub rounds: usize,
}

impl AuctionInstance {
    pub fn n(&self) -> usize {
        self.bidders.len()
    }

    pub fn m(&self) -> usize {
        self.slots.len()
    }

    /// Flat valuations of all bidders; error if any bidder reports marginals.
    pub fn flat_valuations(&self) -> Result<Vec<u64>, String> {
        self.bidders
            .iter()
            .map(|b| {
                b.valuation
                    .flat()
                    .ok_or_else(|| format!("bidder {} has a marginal valuation", b.id))
            })
            .collect()
    }

    /// Sum of demand caps Σκ_i.
    pub fn total_demand_cap(&self) -> usize {
        self.bidders.iter().map(|b| b.demand_cap).sum()
    }

    /// Sum of slot qualities Σα_j.
    pub fn total_quality(&self) -> Rat {
        self.slots
            .iter()
            .fold(Rat::zero(), |acc, s| acc + s.quality.clone())
    }

    /// 0-based indices of bidders interested in the 0-based round `r`.
    pub fn interested_in(&self, r: usize) -> Vec<usize> {
        self.bidders
            .iter()
            .enumerate()
            .filter(|(_, b)| b.interest.contains(&(r + 1)))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fractional assignment plus payments for the divisible case.
///
/// `x[i][j]` is the fraction of slot `j` held by bidder `i`; the matrix is
/// indexed over whatever slot set it was produced for (engine outputs refer
/// to the preprocessed slot set).
#[derive(Debug, Clone, PartialEq)]
pub struct DivisibleAllocation {
    pub x: Vec<Vec<Rat>>,
    pub payments: Vec<Rat>,
}

impl DivisibleAllocation {
    /// Weighted capacity c_i = Σ_j α_j x_{i,j}.
    pub fn capacity(&self, slots: &[Slot], bidder: usize) -> Rat {
        self.x[bidder]
            .iter()
            .zip(slots)
            .fold(Rat::zero(), |acc, (f, s)| acc + f * &s.quality)
    }

    pub fn capacities(&self, slots: &[Slot]) -> Vec<Rat> {
        (0..self.x.len()).map(|i| self.capacity(slots, i)).collect()
    }
}

/// Per-round slot-to-bidder assignment for the indivisible case.
///
/// `assignment[j][r]` is the 1-based id of the bidder holding slot `j` in
/// round `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndivisibleAllocation {
    pub assignment: Vec<Vec<usize>>,
    pub payments: Vec<Rat>,
    pub seed: u64,
}

impl IndivisibleAllocation {
    pub fn rounds(&self) -> usize {
        self.assignment.first().map_or(0, Vec::len)
    }

    /// Weighted capacity c_i = Σ_j (α_j/|R|)·|{r : n_{j,r} = i}|.
    pub fn capacity(&self, slots: &[Slot], bidder: usize) -> Rat {
        let rounds = self.rounds();
        if rounds == 0 {
            return Rat::zero();
        }
        let mut acc = Rat::zero();
        for (j, row) in self.assignment.iter().enumerate() {
            let count = row.iter().filter(|&&b| b == bidder + 1).count();
            acc += &slots[j].quality * rat_u(count as u64);
        }
        acc / rat_u(rounds as u64)
    }

    pub fn capacities(&self, slots: &[Slot], n: usize) -> Vec<Rat> {
        (0..n).map(|i| self.capacity(slots, i)).collect()
    }
}

/// Combinatorial outcome: per-bidder sets of won rounds (κ=1, so at most one
/// instance per round per bidder), payments, and leftover budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinatorialAllocation {
    /// `won[i]` lists the 1-based round ids whose instances bidder `i` holds,
    /// sorted ascending.
    pub won: Vec<Vec<usize>>,
    pub payments: Vec<Rat>,
    /// Remaining budgets b*_i = b_i − p_i.
    pub remaining: Vec<Rat>,
}

/// Multi-unit outcome used by the diminishing-marginals demo.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiUnitAllocation {
    /// Units assigned per bidder.
    pub units: Vec<usize>,
    pub payments: Vec<Rat>,
}

/// Ordered audit log of an auction run.
#[derive(Debug, Clone, Default)]
pub struct AuctionTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone)]
pub enum TraceEvent {
    /// The clock price advanced: `price` is now current, `price_next` pending.
    PriceAdvanced { price: Rat, price_next: Rat },
    /// A bidder's standing demand was set (combinatorial downgrades).
    DemandSet { bidder: usize, demand: Rat },
    /// State snapshot immediately before a clinch computation for `target`.
    SellCall {
        target: usize,
        price: Rat,
        price_next: Rat,
        capacities: Vec<Rat>,
        demands: Vec<Rat>,
        payments: Vec<Rat>,
    },
    /// Divisible clinch: `amount` weighted capacity at `unit_price`.
    Clinched {
        bidder: usize,
        amount: Rat,
        unit_price: Rat,
    },
    /// Combinatorial clinch: one instance of `round` at `price`.
    ClinchedRound {
        bidder: usize,
        round: usize,
        price: Rat,
    },
    /// Bidder left the active set.
    Exited { bidder: usize },
}

impl AuctionTrace {
    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }
}

/// Outcome of a legality check: `legal` iff `violations` is empty.
#[derive(Debug, Clone)]
pub struct LegalityReport {
    pub violations: Vec<String>,
}

impl LegalityReport {
    pub fn legal(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validate an instance against all type invariants. The report lists every
/// violation found, not just the first.
pub fn validate_instance(inst: &AuctionInstance) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    if inst.bidders.is_empty() {
        errs.push("instance has no bidders".to_string());
    }
    if inst.slots.is_empty() {
        errs.push("instance has no slots".to_string());
    }
    if inst.rounds == 0 {
        errs.push("round count must be at least 1".to_string());
    }
    for (i, b) in inst.bidders.iter().enumerate() {
        let tag = format!("bidder {}", i + 1);
        if b.id != i + 1 {
            errs.push(format!("{tag}: id {} not dense from 1", b.id));
        }
        match &b.valuation {
            Valuation::Flat(v) => {
                if *v < 1 {
                    errs.push(format!("{tag}: valuation below 1"));
                }
                if inst.mode == Mode::MultiUnitMarginal {
                    errs.push(format!(
                        "{tag}: multi-unit-marginal mode requires a marginal valuation sequence"
                    ));
                }
            }
            Valuation::Marginals(m) => {
                if inst.mode != Mode::MultiUnitMarginal {
                    errs.push(format!(
                        "{tag}: marginal valuations are only allowed in multi-unit-marginal mode"
                    ));
                } else {
                    if m.is_empty() || m.len() != inst.rounds {
                        errs.push(format!(
                            "{tag}: expected {} marginal values, got {}",
                            inst.rounds,
                            m.len()
                        ));
                    }
                    if m.iter().any(|&v| v < 1) {
                        errs.push(format!("{tag}: valuation below 1"));
                    }
                    if m.windows(2).any(|w| w[0] < w[1]) {
                        errs.push(format!("{tag}: marginal values must be non-increasing"));
                    }
                }
            }
        }
        if b.budget < rat_u(1) {
            errs.push(format!("{tag}: budget {} below 1", fmt_rat(&b.budget)));
        }
        if b.demand_cap < 1 {
            errs.push(format!("{tag}: demand cap below 1"));
        }
        if inst.mode == Mode::Combinatorial {
            if b.demand_cap != 1 {
                errs.push(format!("{tag}: combinatorial mode requires demand cap 1"));
            }
            if b.interest.is_empty() {
                errs.push(format!("{tag}: empty interest set in combinatorial mode"));
            }
            for &r in &b.interest {
                if r < 1 || r > inst.rounds {
                    errs.push(format!("{tag}: interest round {r} out of range"));
                }
            }
        } else if !b.interest.is_empty() {
            errs.push(format!(
                "{tag}: interest sets are only allowed in combinatorial mode"
            ));
        }
    }
    for (j, s) in inst.slots.iter().enumerate() {
        let tag = format!("slot {}", j + 1);
        if s.id != j + 1 {
            errs.push(format!("{tag}: id {} not dense from 1", s.id));
        }
        if s.quality < Rat::zero() {
            errs.push(format!("{tag}: negative quality"));
        }
    }
    match inst.mode {
        Mode::Combinatorial => {
            // Every round needs at least m interested bidders so all of its
            // m identical instances can be absorbed under κ = 1.
            let m = inst.m();
            for r in 0..inst.rounds {
                let interested = inst.interested_in(r).len();
                if interested < m {
                    errs.push(format!(
                        "round {}: only {} interested bidders for {} slot instances",
                        r + 1,
                        interested,
                        m
                    ));
                }
            }
            if inst.slots.windows(2).any(|w| w[0].quality != w[1].quality) {
                errs.push("combinatorial mode requires identical slot qualities".to_string());
            }
        }
        Mode::IndivisibleRounds => {
            // Full per-round assignment needs Σκ_i ≥ m, otherwise no legal
            // allocation exists.
            if inst.total_demand_cap() < inst.m() {
                errs.push(format!(
                    "total demand cap {} below slot count {}; slots cannot all be assigned",
                    inst.total_demand_cap(),
                    inst.m()
                ));
            }
        }
        Mode::MultiUnitMarginal => {
            if inst.m() != 1 {
                errs.push(
                    "multi-unit-marginal mode requires exactly one slot per round".to_string(),
                );
            }
            if inst.slots.iter().any(|s| s.quality != rat_u(1)) {
                errs.push("multi-unit-marginal mode requires unit slot qualities".to_string());
            }
        }
        Mode::Divisible => {}
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Legality of a divisible allocation against the given bidders and slots:
/// (1) per-bidder demand caps, (2) full assignment of every slot,
/// (3) payments within budgets. Fractions must be non-negative.
pub fn check_legal_divisible(
    bidders: &[Bidder],
    slots: &[Slot],
    alloc: &DivisibleAllocation,
) -> LegalityReport {
    let mut violations = Vec::new();
    let n = bidders.len();
    let m = slots.len();
    if alloc.x.len() != n || alloc.x.iter().any(|row| row.len() != m) || alloc.payments.len() != n {
        violations.push("dimension mismatch between instance and allocation".to_string());
        return LegalityReport { violations };
    }
    for (i, row) in alloc.x.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            if f < &Rat::zero() {
                violations.push(format!("negative fraction x[{}][{}]", i + 1, j + 1));
            }
        }
        let total: Rat = row.iter().fold(Rat::zero(), |acc, f| acc + f);
        if total > rat_u(bidders[i].demand_cap as u64) {
            violations.push(format!(
                "(1) demand cap exceeded for bidder {}: {} > {}",
                i + 1,
                fmt_rat(&total),
                bidders[i].demand_cap
            ));
        }
    }
    for j in 0..m {
        let total: Rat = alloc.x.iter().fold(Rat::zero(), |acc, row| acc + &row[j]);
        if total != rat_u(1) {
            violations.push(format!(
                "(2) slot {} not fully assigned: column sums to {}",
                j + 1,
                fmt_rat(&total)
            ));
        }
    }
    for (i, p) in alloc.payments.iter().enumerate() {
        if p > &bidders[i].budget {
            violations.push(format!(
                "(3) budget exceeded for bidder {}: {} > {}",
                i + 1,
                fmt_rat(p),
                fmt_rat(&bidders[i].budget)
            ));
        }
    }
    LegalityReport { violations }
}

/// Legality of an indivisible allocation: per-round demand caps, every slot
/// of every round assigned to a known bidder, payments within budgets.
pub fn check_legal_indivisible(
    bidders: &[Bidder],
    slots: &[Slot],
    rounds: usize,
    alloc: &IndivisibleAllocation,
) -> LegalityReport {
    let mut violations = Vec::new();
    let n = bidders.len();
    if alloc.assignment.len() != slots.len()
        || alloc.assignment.iter().any(|row| row.len() != rounds)
        || alloc.payments.len() != n
    {
        violations.push("dimension mismatch between instance and allocation".to_string());
        return LegalityReport { violations };
    }
    for r in 0..rounds {
        let mut counts = vec![0usize; n];
        for (j, row) in alloc.assignment.iter().enumerate() {
            let b = row[r];
            if b < 1 || b > n {
                violations.push(format!(
                    "(2) slot {} of round {} assigned to unknown bidder {}",
                    j + 1,
                    r + 1,
                    b
                ));
            } else {
                counts[b - 1] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > bidders[i].demand_cap {
                violations.push(format!(
                    "(1) demand cap exceeded for bidder {} in round {}: {} > {}",
                    i + 1,
                    r + 1,
                    c,
                    bidders[i].demand_cap
                ));
            }
        }
    }
    for (i, p) in alloc.payments.iter().enumerate() {
        if p > &bidders[i].budget {
            violations.push(format!(
                "(3) budget exceeded for bidder {}: {} > {}",
                i + 1,
                fmt_rat(p),
                fmt_rat(&bidders[i].budget)
            ));
        }
    }
    LegalityReport { violations }
}

/// Per-bidder utilities u_i = c_i·v_i − p_i plus auctioneer revenue Σp_i for
/// a capacity vector already computed against the right slot set.
pub fn utilities_from_capacities(
    valuations: &[u64],
    capacities: &[Rat],
    payments: &[Rat],
) -> (Vec<Rat>, Rat) {
    let utilities = capacities
        .iter()
        .zip(valuations)
        .zip(payments)
        .map(|((c, &v), p)| c * rat_u(v) - p)
        .collect();
    let revenue = payments.iter().fold(Rat::zero(), |acc, p| acc + p);
    (utilities, revenue)
}
