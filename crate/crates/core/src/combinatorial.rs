//! Deterministic single-valued combinatorial clinching auction.
//!
//! Rounds are items with identical slot instances; every bidder wants at
//! most one instance per round from a public interest set. The price clock
//! ascends through exact rational breakpoints; at each price the auction
//! first sells to exiting bidders, then repeatedly either sells a clinched
//! instance (detected through avoid matchings) or downgrades one bidder's
//! standing demand to its right-limit value.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::EngineError;
use crate::flow::{s_avoid_matching, InterestGraph};
use crate::model::{
    validate_instance, AuctionInstance, AuctionTrace, CombinatorialAllocation, Mode, TraceEvent,
};
use crate::rational::{floor_int, rat_u, Rat};

/// Mutable state of a combinatorial auction run.
#[derive(Debug, Clone)]
pub struct CombState {
    /// Current price π.
    pub price: Rat,
    /// Unsold instances per round (0-based rounds).
    pub instance_counts: Vec<u64>,
    /// Remaining budgets.
    pub budgets: Vec<Rat>,
    /// Current interest sets (0-based rounds); won rounds are removed.
    pub interest: Vec<BTreeSet<usize>>,
    /// Whether bidder i's standing demand was downgraded to D⁺ at this price.
    pub raised: Vec<bool>,
    /// Bidders permanently removed after their exit sale.
    pub exited: Vec<bool>,
    /// Rounds won per bidder (0-based).
    pub won: Vec<BTreeSet<usize>>,
    pub payments: Vec<Rat>,
}

impl CombState {
    /// Unsold item count r̄ (rounds with at least one unsold instance).
    pub fn unsold_items(&self) -> u64 {
        self.instance_counts.iter().filter(|&&c| c > 0).count() as u64
    }

    /// Total unsold instances t̄.
    pub fn unsold_instances(&self) -> u64 {
        self.instance_counts.iter().sum()
    }
}

/// D_i(π, r̄, b): how many instances bidder i could clinch at price π. The
/// budget term is vacuous at π = 0.
pub fn demand(price: &Rat, valuation: u64, budget: &Rat, unsold_items: u64, interest: u64) -> u64 {
    if price > &rat_u(valuation) {
        return 0;
    }
    let base = unsold_items.min(interest);
    if price.is_zero() {
        return base;
    }
    let affordable = floor_int(&(budget / price));
    if affordable < BigInt::from(base) {
        affordable.to_u64().unwrap_or(0)
    } else {
        base
    }
}

/// D⁺_i(π, r̄, b): the right limit of the demand as the price grows. Closed
/// form: zero at or above the valuation; otherwise the budget quotient drops
/// by one exactly when b/π is integral.
pub fn demand_plus(
    price: &Rat,
    valuation: u64,
    budget: &Rat,
    unsold_items: u64,
    interest: u64,
) -> u64 {
    if price >= &rat_u(valuation) {
        return 0;
    }
    let base = unsold_items.min(interest);
    if price.is_zero() {
        return if budget.is_zero() { 0 } else { base };
    }
    let quotient = budget / price;
    let affordable = if quotient.is_integer() {
        quotient.to_integer() - BigInt::one()
    } else {
        floor_int(&quotient)
    };
    if affordable < BigInt::from(base) {
        affordable.to_u64().unwrap_or(0)
    } else {
        base
    }
}

struct Auction<'a> {
    inst: &'a AuctionInstance,
    valuations: Vec<u64>,
    state: CombState,
    trace: AuctionTrace,
}

impl Auction<'_> {
    fn demand_of(&self, i: usize) -> u64 {
        demand(
            &self.state.price,
            self.valuations[i],
            &self.state.budgets[i],
            self.state.unsold_items(),
            self.state.interest[i].len() as u64,
        )
    }

    fn demand_plus_of(&self, i: usize) -> u64 {
        demand_plus(
            &self.state.price,
            self.valuations[i],
            &self.state.budgets[i],
            self.state.unsold_items(),
            self.state.interest[i].len() as u64,
        )
    }

    /// Standing demand d_i ∈ {D_i, D⁺_i}.
    fn standing_demand(&self, i: usize) -> u64 {
        if self.state.raised[i] {
            self.demand_plus_of(i)
        } else {
            self.demand_of(i)
        }
    }

    /// Active bidders: not exited and positive demand at the current price.
    fn active(&self) -> Vec<usize> {
        (0..self.inst.n())
            .filter(|&i| !self.state.exited[i] && self.demand_of(i) > 0)
            .collect()
    }

    /// Interest graph over the given bidders with their standing demands.
    fn graph(&self, bidders: &[usize]) -> (InterestGraph, Vec<usize>) {
        let items: Vec<usize> = (0..self.inst.rounds)
            .filter(|&r| self.state.instance_counts[r] > 0)
            .collect();
        let item_index: Vec<Option<usize>> = {
            let mut v = vec![None; self.inst.rounds];
            for (k, &r) in items.iter().enumerate() {
                v[r] = Some(k);
            }
            v
        };
        let graph = InterestGraph {
            bidder_caps: bidders.iter().map(|&i| self.standing_demand(i)).collect(),
            item_caps: items
                .iter()
                .map(|&r| self.state.instance_counts[r])
                .collect(),
            edges: bidders
                .iter()
                .map(|&i| {
                    self.state.interest[i]
                        .iter()
                        .filter_map(|&r| item_index[r])
                        .collect()
                })
                .collect(),
        };
        (graph, items)
    }

    /// B(¬S) over the active bidders: instances that can go to bidders
    /// outside S in an S-avoid matching.
    fn matched_excluding(&self, avoid: &BTreeSet<usize>) -> u64 {
        let bidders = self.active();
        let avoid_local: BTreeSet<usize> = bidders
            .iter()
            .enumerate()
            .filter(|(_, b)| avoid.contains(b))
            .map(|(k, _)| k)
            .collect();
        let (graph, _) = self.graph(&bidders);
        let m = s_avoid_matching(&graph, &avoid_local);
        m.matched - m.avoided_load
    }

    /// Sell instances to bidders in `set` until the rest of the market can
    /// absorb every unsold instance. Picks the smallest bidder index, then
    /// the smallest round id.
    fn sell_to_set(&mut self, set: &BTreeSet<usize>) -> Result<(), EngineError> {
        if set.is_empty() {
            return Ok(());
        }
        loop {
            let bidders = self.active();
            let avoid_local: Vec<usize> = bidders
                .iter()
                .enumerate()
                .filter(|(_, b)| set.contains(b))
                .map(|(k, _)| k)
                .collect();
            let (graph, items) = self.graph(&bidders);
            let matching = s_avoid_matching(&graph, &avoid_local.iter().copied().collect());
            let outside = matching.matched - matching.avoided_load;
            if outside >= self.state.unsold_instances() {
                return Ok(());
            }
            let sale = avoid_local
                .iter()
                .find_map(|&k| {
                    matching.loads[k]
                        .iter()
                        .position(|&l| l > 0)
                        .map(|item| (bidders[k], items[item]))
                })
                .ok_or_else(|| {
                    EngineError::invariant(
                        "unsold instances cannot be absorbed and no clinching sale exists",
                    )
                })?;
            let (bidder, round) = sale;
            self.state.instance_counts[round] -= 1;
            self.state.interest[bidder].remove(&round);
            self.state.won[bidder].insert(round);
            self.state.budgets[bidder] -= &self.state.price;
            self.state.payments[bidder] += &self.state.price;
            self.trace.push(TraceEvent::ClinchedRound {
                bidder: bidder + 1,
                round: round + 1,
                price: self.state.price.clone(),
            });
        }
    }

    /// Smallest breakpoint above the current price at which some active
    /// bidder's demand right-limit differs from its value: candidate prices
    /// are the valuations and the budget quotients b_i/k.
    fn next_price(&self) -> Option<Rat> {
        let active = self.active();
        let unsold = self.state.unsold_items();
        let mut candidates: BTreeSet<Rat> = BTreeSet::new();
        for &i in &active {
            let v = rat_u(self.valuations[i]);
            if v > self.state.price {
                candidates.insert(v);
            }
            let reach = unsold.min(self.state.interest[i].len() as u64);
            for k in 1..=reach {
                let breakpoint = &self.state.budgets[i] / rat_u(k);
                if breakpoint > self.state.price {
                    candidates.insert(breakpoint);
                }
            }
        }
        candidates.into_iter().find(|cand| {
            active.iter().any(|&i| {
                let d = demand(
                    cand,
                    self.valuations[i],
                    &self.state.budgets[i],
                    unsold,
                    self.state.interest[i].len() as u64,
                );
                let dp = demand_plus(
                    cand,
                    self.valuations[i],
                    &self.state.budgets[i],
                    unsold,
                    self.state.interest[i].len() as u64,
                );
                d != dp
            })
        })
    }
}

/// Run the combinatorial auction on a validated instance.
pub fn run_combinatorial(
    inst: &AuctionInstance,
) -> Result<(CombinatorialAllocation, AuctionTrace), EngineError> {
    if inst.mode != Mode::Combinatorial {
        return Err(EngineError::Validation(vec![format!(
            "combinatorial engine cannot run {} instances",
            inst.mode
        )]));
    }
    validate_instance(inst).map_err(EngineError::Validation)?;
    let valuations = inst
        .flat_valuations()
        .map_err(|e| EngineError::Validation(vec![e]))?;
    let n = inst.n();
    let state = CombState {
        price: Rat::zero(),
        instance_counts: vec![inst.m() as u64; inst.rounds],
        budgets: inst.bidders.iter().map(|b| b.budget.clone()).collect(),
        interest: inst
            .bidders
            .iter()
            .map(|b| b.interest.iter().map(|&r| r - 1).collect())
            .collect(),
        raised: vec![false; n],
        exited: vec![false; n],
        won: vec![BTreeSet::new(); n],
        payments: vec![Rat::zero(); n],
    };
    let mut auction = Auction {
        inst,
        valuations,
        state,
        trace: AuctionTrace::default(),
    };
    auction.trace.push(TraceEvent::PriceAdvanced {
        price: Rat::zero(),
        price_next: Rat::zero(),
    });

    loop {
        let active = auction.active();
        if active.is_empty() {
            break;
        }
        // Exiting bidders (valuation equals the price) get one final sale.
        let exiting: BTreeSet<usize> = active
            .iter()
            .copied()
            .filter(|&i| rat_u(auction.valuations[i]) == auction.state.price)
            .collect();
        auction.sell_to_set(&exiting)?;
        for &i in &exiting {
            auction.state.exited[i] = true;
            auction.trace.push(TraceEvent::Exited { bidder: i + 1 });
        }
        // Clinch or downgrade until no bidder can clinch and every standing
        // demand sits at its right limit.
        loop {
            let active = auction.active();
            let clincher = active.iter().copied().find(|&i| {
                auction.matched_excluding(&[i].into_iter().collect())
                    < auction.state.unsold_instances()
            });
            if let Some(i) = clincher {
                auction.sell_to_set(&[i].into_iter().collect())?;
                continue;
            }
            let downgrade = active
                .iter()
                .copied()
                .find(|&i| auction.standing_demand(i) > auction.demand_plus_of(i));
            match downgrade {
                Some(i) => {
                    auction.state.raised[i] = true;
                    auction.trace.push(TraceEvent::DemandSet {
                        bidder: i + 1,
                        demand: rat_u(auction.demand_plus_of(i)),
                    });
                }
                None => break,
            }
        }
        if auction.active().is_empty() {
            break;
        }
        let Some(next) = auction.next_price() else {
            return Err(EngineError::invariant(
                "active bidders remain but no price breakpoint exists",
            ));
        };
        auction.state.price = next.clone();
        auction.state.raised = vec![false; n];
        auction.trace.push(TraceEvent::PriceAdvanced {
            price: next,
            price_next: Rat::zero(),
        });
    }

    let state = auction.state;
    let allocation = CombinatorialAllocation {
        won: state
            .won
            .iter()
            .map(|set| set.iter().map(|&r| r + 1).collect())
            .collect(),
        payments: state.payments.clone(),
        remaining: state.budgets.clone(),
    };
    Ok((allocation, auction.trace))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Bidder, Slot, Valuation};
    use crate::rational::rat;

    pub(crate) fn comb_instance(
        vals: &[u64],
        budgets: &[Rat],
        interests: &[&[usize]],
        slots_per_round: usize,
        rounds: usize,
    ) -> AuctionInstance {
        AuctionInstance {
            mode: Mode::Combinatorial,
            bidders: vals
                .iter()
                .zip(budgets)
                .zip(interests)
                .enumerate()
                .map(|(i, ((&v, b), ints))| Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(v),
                    budget: b.clone(),
                    demand_cap: 1,
                    interest: ints.iter().copied().collect(),
                })
                .collect(),
            slots: (0..slots_per_round)
                .map(|j| Slot {
                    id: j + 1,
                    quality: rat_u(1),
                })
                .collect(),
            rounds,
        }
    }

    #[test]
    fn demand_formula_cases() {
        // π=2, r̄=3, |S_i|=2, b=5, v=3 → min{3,2,⌊5/2⌋} = 2
        assert_eq!(demand(&rat_u(2), 3, &rat_u(5), 3, 2), 2);
        // priced out
        assert_eq!(demand(&rat_u(4), 3, &rat_u(5), 3, 2), 0);
        // free price: budget term vacuous
        assert_eq!(demand(&Rat::zero(), 3, &Rat::zero(), 3, 2), 2);
    }

    #[test]
    fn demand_plus_cases() {
        // Integral budget quotient drops by one: b=4, π=2 → D=2, D⁺=1.
        assert_eq!(demand(&rat_u(2), 3, &rat_u(4), 5, 5), 2);
        assert_eq!(demand_plus(&rat_u(2), 3, &rat_u(4), 5, 5), 1);
        // Non-integral quotient unchanged: b=5, π=2 → D⁺ = D = 2.
        assert_eq!(demand_plus(&rat_u(2), 3, &rat_u(5), 5, 5), 2);
        // Exit boundary: π = v → D⁺ = 0.
        assert_eq!(demand_plus(&rat_u(3), 3, &rat_u(9), 5, 5), 0);
    }

    #[test]
    fn lone_bidder_takes_all_free() {
        let inst = comb_instance(&[4], &[rat_u(5)], &[&[1, 2]], 1, 2);
        let (alloc, _) = run_combinatorial(&inst).unwrap();
        assert_eq!(alloc.won[0], vec![1, 2]);
        assert_eq!(alloc.payments[0], Rat::zero());
    }

    #[test]
    fn two_round_multi_unit_reduction() {
        // Two identical single-instance rounds, full interest, v=(5,2),
        // b=(3,11): one instance each at prices (2, 3/2).
        let inst = comb_instance(&[5, 2], &[rat_u(3), rat_u(11)], &[&[1, 2], &[1, 2]], 1, 2);
        let (alloc, trace) = run_combinatorial(&inst).unwrap();
        assert_eq!(
            alloc.won.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![1, 1]
        );
        assert_eq!(alloc.payments, vec![rat_u(2), rat(3, 2)]);
        assert_eq!(alloc.remaining, vec![rat_u(1), rat(19, 2)]);
        // All sales happen at the clock price in force at the time.
        let mut current = Rat::zero();
        for e in &trace.events {
            match e {
                TraceEvent::PriceAdvanced { price, .. } => current = price.clone(),
                TraceEvent::ClinchedRound { price, .. } => assert_eq!(price, &current),
                _ => {}
            }
        }
    }

    #[test]
    fn keyword_interest_sets_resolve_at_rival_exits() {
        // Three bidders over two single-instance rounds: bidder 1 wants only
        // round 1, bidder 3 only round 2, bidder 2 both. Bidder 2 clinches
        // round 1 at bidder 1's exit price; bidder 3 clinches round 2 when
        // bidder 2's remaining budget stops covering a second instance.
        let inst = comb_instance(
            &[1, 2, 3],
            &[rat_u(2), rat_u(2), rat_u(2)],
            &[&[1], &[1, 2], &[2]],
            1,
            2,
        );
        let (alloc, _) = run_combinatorial(&inst).unwrap();
        assert_eq!(alloc.won, vec![vec![], vec![1], vec![2]]);
        assert_eq!(alloc.payments, vec![rat_u(0), rat_u(1), rat_u(1)]);
    }

    #[test]
    fn all_instances_sold_with_coverage() {
        let inst = comb_instance(
            &[4, 3, 2],
            &[rat_u(6), rat_u(5), rat_u(7)],
            &[&[1, 2], &[1, 2], &[1, 2]],
            2,
            2,
        );
        let (alloc, _) = run_combinatorial(&inst).unwrap();
        let sold: usize = alloc.won.iter().map(Vec::len).sum();
        assert_eq!(sold, 4);
        for (i, p) in alloc.payments.iter().enumerate() {
            assert!(p <= &inst.bidders[i].budget);
        }
    }

    #[test]
    fn next_price_scans_breakpoints() {
        // Budgets (4,6) at π=1 with plenty of instances: candidates include
        // 4/3, 3/2, 2, ... — the smallest with D ≠ D⁺ wins.
        let inst = comb_instance(
            &[6, 6],
            &[rat_u(4), rat_u(6)],
            &[&[1, 2, 3], &[1, 2, 3]],
            1,
            3,
        );
        let valuations = inst.flat_valuations().unwrap();
        let auction = Auction {
            inst: &inst,
            valuations,
            state: CombState {
                price: rat_u(1),
                instance_counts: vec![1; 3],
                budgets: vec![rat_u(4), rat_u(6)],
                interest: vec![
                    [0usize, 1, 2].into_iter().collect(),
                    [0usize, 1, 2].into_iter().collect(),
                ],
                raised: vec![false; 2],
                exited: vec![false; 2],
                won: vec![BTreeSet::new(), BTreeSet::new()],
                payments: vec![Rat::zero(), Rat::zero()],
            },
            trace: AuctionTrace::default(),
        };
        let next = auction.next_price().unwrap();
        assert_eq!(next, rat(4, 3));
        // At the returned price D ≠ D⁺ for bidder 1: 4/(4/3) = 3 integral.
        assert_eq!(demand(&next, 6, &rat_u(4), 3, 3), 3);
        assert_eq!(demand_plus(&next, 6, &rat_u(4), 3, 3), 2);
    }

    #[test]
    fn next_price_falls_back_to_the_valuation_breakpoint() {
        // A lone active bidder with a large budget: only v = 3 qualifies.
        let inst = comb_instance(&[3], &[rat_u(100)], &[&[1]], 1, 1);
        let valuations = inst.flat_valuations().unwrap();
        let auction = Auction {
            inst: &inst,
            valuations,
            state: CombState {
                price: rat_u(2),
                instance_counts: vec![1],
                budgets: vec![rat_u(100)],
                interest: vec![[0usize].into_iter().collect()],
                raised: vec![false],
                exited: vec![false],
                won: vec![BTreeSet::new()],
                payments: vec![Rat::zero()],
            },
            trace: AuctionTrace::default(),
        };
        let next = auction.next_price().unwrap();
        assert_eq!(next, rat_u(3));
        assert!(next > auction.state.price);
    }
}
