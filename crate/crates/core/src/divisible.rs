//! Ascending clinching auction for divisible heterogeneous slots.
//!
//! The auction raises a per-capacity clock price and, before each bidder's
//! price increase, solves an exact linear program asking how little weighted
//! capacity could go to that bidder. Whatever competitors cannot absorb is
//! clinched. Bidders whose valuation falls below the next price are sold to
//! one final time and removed.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::error::EngineError;
use crate::lp::{solve_sell_lp, SellLp, SellOutcome};
use crate::model::{
    validate_instance, AuctionInstance, AuctionTrace, Bidder, DivisibleAllocation, Mode, Slot,
    TraceEvent,
};
use crate::rational::{floor_int, rat_u, Rat};

/// Mutable state of a divisible auction run.
#[derive(Debug, Clone)]
pub struct DivisibleState {
    /// Active bidders (0-based indices).
    pub active: BTreeSet<usize>,
    /// Current clock price π.
    pub price: Rat,
    /// Pending price π⁺.
    pub price_next: Rat,
    /// Clinched weighted capacity c_i.
    pub capacities: Vec<Rat>,
    /// Payments charged so far p_i.
    pub payments: Vec<Rat>,
    /// Demands d_i at each bidder's individual price.
    pub demands: Vec<Rat>,
    /// Next-price demands d⁺_i = (b_i − p_i)/π⁺.
    pub demands_next: Vec<Rat>,
    /// The constant e: `e + c_i` bounds any bidder's achievable capacity.
    pub capacity_gap: Rat,
}

/// Adjust the slot set so that exactly Σκ_i slots exist: append zero-quality
/// dummy slots when demand caps exceed the slot count, drop the
/// lowest-quality slots when they fall short. Dummy ids continue after the
/// real ones.
pub fn preprocess_slots(inst: &AuctionInstance) -> Vec<Slot> {
    let total_cap = inst.total_demand_cap();
    let m = inst.m();
    if total_cap >= m {
        let mut slots = inst.slots.clone();
        for k in 0..total_cap - m {
            slots.push(Slot {
                id: m + k + 1,
                quality: Rat::zero(),
            });
        }
        slots
    } else {
        // Drop the |J| − Σκ lowest-quality slots, ties broken by id.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            inst.slots[a]
                .quality
                .cmp(&inst.slots[b].quality)
                .then(a.cmp(&b))
        });
        let dropped: BTreeSet<usize> = order[..m - total_cap].iter().copied().collect();
        inst.slots
            .iter()
            .enumerate()
            .filter(|(j, _)| !dropped.contains(j))
            .map(|(_, s)| s.clone())
            .collect()
    }
}

/// The instance with its slot set preprocessed (all engine work and all
/// Pareto verdicts on engine output refer to this instance).
pub fn preprocessed_instance(inst: &AuctionInstance) -> AuctionInstance {
    AuctionInstance {
        mode: inst.mode,
        bidders: inst.bidders.clone(),
        slots: preprocess_slots(inst),
        rounds: inst.rounds,
    }
}

/// Initial auction state for a preprocessed instance: minimal capacities,
/// the capacity gap e, the opening price π = 1/max{1, e} with π⁺ = ⌊π⌋ + 1,
/// and demands b_i/π.
pub fn init_state(inst: &AuctionInstance) -> DivisibleState {
    let n = inst.n();
    let mut sorted: Vec<Rat> = inst.slots.iter().map(|s| s.quality.clone()).collect();
    sorted.sort();
    // c_i = sum of the κ_i smallest qualities: the capacity bidder i cannot
    // avoid receiving in any full assignment.
    let capacities: Vec<Rat> = inst
        .bidders
        .iter()
        .map(|b| {
            sorted[..b.demand_cap]
                .iter()
                .fold(Rat::zero(), |a, q| a + q)
        })
        .collect();
    // e = max over k of (sum of k largest) − (sum of k smallest).
    let mut gap = Rat::zero();
    let m = sorted.len();
    let mut low = Rat::zero();
    let mut high = Rat::zero();
    for k in 1..=m {
        low += &sorted[k - 1];
        high += &sorted[m - k];
        let diff = &high - &low;
        if diff > gap {
            gap = diff;
        }
    }
    let price = if gap > rat_u(1) {
        rat_u(1) / &gap
    } else {
        rat_u(1)
    };
    let price_next = Rat::from_integer(floor_int(&price)) + rat_u(1);
    let demands: Vec<Rat> = inst.bidders.iter().map(|b| &b.budget / &price).collect();
    let demands_next = vec![Rat::zero(); n];
    DivisibleState {
        active: (0..n).collect(),
        price,
        price_next,
        capacities,
        payments: vec![Rat::zero(); n],
        demands,
        demands_next,
        capacity_gap: gap,
    }
}

/// One clinch computation for `target` against the current state. Returns
/// the vertex assignment and the clinched amount s; the caller applies the
/// price-dependent payment update.
pub fn sell_step(
    inst: &AuctionInstance,
    state: &DivisibleState,
    target: usize,
) -> Result<SellOutcome, EngineError> {
    let sell = SellLp {
        qualities: inst.slots.iter().map(|s| s.quality.clone()).collect(),
        demand_caps: inst.bidders.iter().map(|b| b.demand_cap).collect(),
        capacities: state.capacities.clone(),
        demands: state.demands.clone(),
        target,
    };
    solve_sell_lp(&sell)
}

fn snapshot(state: &DivisibleState, target: usize) -> TraceEvent {
    TraceEvent::SellCall {
        target: target + 1,
        price: state.price.clone(),
        price_next: state.price_next.clone(),
        capacities: state.capacities.clone(),
        demands: state.demands.clone(),
        payments: state.payments.clone(),
    }
}

/// Run the full auction. The returned allocation refers to the preprocessed
/// slot set (see [`preprocessed_instance`]).
pub fn run_divisible(
    inst: &AuctionInstance,
) -> Result<(DivisibleAllocation, AuctionTrace), EngineError> {
    if inst.mode != Mode::Divisible && inst.mode != Mode::IndivisibleRounds {
        return Err(EngineError::Validation(vec![format!(
            "divisible engine cannot run {} instances",
            inst.mode
        )]));
    }
    validate_instance(inst).map_err(EngineError::Validation)?;
    let valuations = inst
        .flat_valuations()
        .map_err(|e| EngineError::Validation(vec![e]))?;
    let pre = preprocessed_instance(inst);
    let mut state = init_state(&pre);
    let mut trace = AuctionTrace::default();
    trace.push(TraceEvent::PriceAdvanced {
        price: state.price.clone(),
        price_next: state.price_next.clone(),
    });

    let total_quality = pre.total_quality();
    let max_valuation = *valuations.iter().max().expect("nonempty");
    let mut last_assignment: Option<Vec<Vec<Rat>>> = None;
    let mut iterations = 0usize;

    let total_clinched =
        |state: &DivisibleState| state.capacities.iter().fold(Rat::zero(), |a, c| a + c);

    while total_clinched(&state) < total_quality {
        iterations += 1;
        if iterations as u64 > max_valuation + 2 {
            return Err(EngineError::invariant(format!(
                "price clock exceeded {} iterations without selling out",
                max_valuation + 2
            )));
        }
        // Exiting bidders: active with valuation below the pending price.
        // They clinch once more at the current price, then leave.
        let exiting: Vec<usize> = state
            .active
            .iter()
            .copied()
            .filter(|&i| state.price_next > rat_u(valuations[i]))
            .collect();
        for &i in &exiting {
            trace.push(snapshot(&state, i));
            let out = sell_step(&pre, &state, i)?;
            if !out.clinched.is_zero() {
                trace.push(TraceEvent::Clinched {
                    bidder: i + 1,
                    amount: out.clinched.clone(),
                    unit_price: state.price.clone(),
                });
            }
            state.payments[i] += &out.clinched * &state.price;
            state.capacities[i] += &out.clinched;
            state.demands[i] = Rat::zero();
            last_assignment = Some(out.assignment);
            trace.push(TraceEvent::Exited { bidder: i + 1 });
        }
        for i in &exiting {
            state.active.remove(i);
        }
        for &i in &state.active {
            state.demands_next[i] =
                (&inst.bidders[i].budget - &state.payments[i]) / &state.price_next;
        }
        // Raise the price bidder by bidder; each round the lowest-index
        // bidder still at the old price is raised after everyone else got a
        // chance to clinch against his reduced future demand.
        loop {
            let raise_target = state
                .active
                .iter()
                .copied()
                .find(|&i| state.demands[i] != state.demands_next[i]);
            let Some(target) = raise_target else { break };
            let others: Vec<usize> = state
                .active
                .iter()
                .copied()
                .filter(|&i| i != target)
                .collect();
            for i in others {
                trace.push(snapshot(&state, i));
                let out = sell_step(&pre, &state, i)?;
                let unit_price = if state.demands[i] != state.demands_next[i] {
                    state.price.clone()
                } else {
                    // A bidder whose price was already raised pays π⁺ even
                    // though the clock still shows π.
                    state.price_next.clone()
                };
                if !out.clinched.is_zero() {
                    trace.push(TraceEvent::Clinched {
                        bidder: i + 1,
                        amount: out.clinched.clone(),
                        unit_price: unit_price.clone(),
                    });
                }
                state.payments[i] += &out.clinched * &unit_price;
                state.capacities[i] += &out.clinched;
                state.demands[i] -= &out.clinched;
                state.demands_next[i] =
                    (&inst.bidders[i].budget - &state.payments[i]) / &state.price_next;
            }
            trace.push(snapshot(&state, target));
            let out = sell_step(&pre, &state, target)?;
            if !out.clinched.is_zero() {
                trace.push(TraceEvent::Clinched {
                    bidder: target + 1,
                    amount: out.clinched.clone(),
                    unit_price: state.price.clone(),
                });
            }
            state.payments[target] += &out.clinched * &state.price;
            state.capacities[target] += &out.clinched;
            state.demands_next[target] =
                (&inst.bidders[target].budget - &state.payments[target]) / &state.price_next;
            state.demands[target] = state.demands_next[target].clone();
            last_assignment = Some(out.assignment);
        }
        state.price = state.price_next.clone();
        state.price_next = &state.price + rat_u(1);
        trace.push(TraceEvent::PriceAdvanced {
            price: state.price.clone(),
            price_next: state.price_next.clone(),
        });
    }

    // Degenerate case: everything was pinned by the minimal capacities and
    // no clinch computation ever ran. One run with all clinched amounts
    // forced to zero extracts a consistent vertex assignment.
    let assignment = match last_assignment {
        Some(x) => x,
        None => sell_step(&pre, &state, 0)?.assignment,
    };
    // The last vertex assignment realizes the clinched capacities exactly.
    for i in 0..pre.n() {
        let cap: Rat = assignment[i]
            .iter()
            .zip(&pre.slots)
            .fold(Rat::zero(), |a, (f, s)| a + f * &s.quality);
        if cap != state.capacities[i] {
            return Err(EngineError::invariant(format!(
                "final assignment capacity mismatch for bidder {}",
                i + 1
            )));
        }
    }
    let alloc = DivisibleAllocation {
        x: assignment,
        payments: state.payments.clone(),
    };
    Ok((alloc, trace))
}

/// Bidders and preprocessed slots of an instance, convenience for callers
/// checking legality of engine output.
pub fn preprocessed_parts(inst: &AuctionInstance) -> (Vec<Bidder>, Vec<Slot>) {
    (inst.bidders.clone(), preprocess_slots(inst))
}
