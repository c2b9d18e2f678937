//! The diminishing-marginal-valuations impossibility, run as executable
//! evidence.
//!
//! Two bidders, two identical items. Under a flat misreport the outcome of
//! any incentive compatible, individually rational, Pareto optimal auction
//! coincides with the multi-unit clinching auction; under the truthful
//! diminishing report the forced-outcome conditions pin the whole allocation
//! to bidder 1 with zero payment for bidder 2. Comparing the two exhibits a
//! strictly profitable lie, so no such auction exists for private
//! diminishing marginals.

use std::collections::BTreeSet;

use num_traits::Zero;

use crate::combinatorial::run_combinatorial;
use crate::divisible::{preprocessed_instance, run_divisible};
use crate::error::EngineError;
use crate::model::{AuctionInstance, Bidder, Mode, MultiUnitAllocation, Slot, Valuation};
use crate::rational::{rat_u, Rat};

/// Two bidders with per-unit marginal valuations, identical unit items.
#[derive(Debug, Clone)]
pub struct MarginalInstance {
    /// `marginals[i][q]` = value of the (q+1)-th unit for bidder i.
    pub marginals: Vec<Vec<u64>>,
    pub budgets: Vec<Rat>,
    pub units: usize,
}

impl MarginalInstance {
    pub fn gross(&self, bidder: usize, units: usize) -> Rat {
        rat_u(self.marginals[bidder].iter().take(units).sum::<u64>())
    }

    pub fn as_auction_instance(&self) -> AuctionInstance {
        AuctionInstance {
            mode: Mode::MultiUnitMarginal,
            bidders: self
                .marginals
                .iter()
                .zip(&self.budgets)
                .enumerate()
                .map(|(i, (m, b))| Bidder {
                    id: i + 1,
                    valuation: Valuation::Marginals(m.clone()),
                    budget: b.clone(),
                    demand_cap: 1,
                    interest: BTreeSet::new(),
                })
                .collect(),
            slots: vec![Slot {
                id: 1,
                quality: rat_u(1),
            }],
            rounds: self.units,
        }
    }
}

/// The fixed demo instance: v₁ = (5,5), b₁ = 3; bidder 2 truthfully values
/// (2,1) with b₂ = 11 but can report (2,2).
pub fn demo_instance() -> MarginalInstance {
    MarginalInstance {
        marginals: vec![vec![5, 5], vec![2, 1]],
        budgets: vec![rat_u(3), rat_u(11)],
        units: 2,
    }
}

/// Evaluation of the forced-outcome conditions: when bidder 1's last
/// marginal still beats bidder 2's first and bidder 1 can afford bidder 2's
/// whole gross value, every qualifying auction must hand all units to
/// bidder 1.
#[derive(Debug, Clone)]
pub struct ForcedOutcomeCheck {
    /// v₁(|R|) and v₂(1) with the strict comparison result.
    pub last_marginal_first: (u64, u64, bool),
    /// Σ_q v₂(q), b₁, and the comparison result.
    pub gross_vs_budget: (Rat, Rat, bool),
    pub holds: bool,
}

/// Check whether the forced-outcome conditions hold for the given reports.
pub fn forced_outcome_conditions(inst: &MarginalInstance) -> ForcedOutcomeCheck {
    let last = *inst.marginals[0].last().expect("nonempty marginals");
    let first = inst.marginals[1][0];
    let strict = last > first;
    let gross = inst.gross(1, inst.units);
    let budget = inst.budgets[0].clone();
    let affordable = gross <= budget;
    ForcedOutcomeCheck {
        last_marginal_first: (last, first, strict),
        gross_vs_budget: (gross, budget, affordable),
        holds: strict && affordable,
    }
}

/// One branch outcome of the comparison.
#[derive(Debug, Clone)]
pub struct BranchOutcome {
    pub reported_marginals: Vec<Vec<u64>>,
    pub allocation: MultiUnitAllocation,
    pub utilities: Vec<Rat>,
}

/// The full comparison report.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub instance: MarginalInstance,
    /// Reported (2,2): the multi-unit clinching outcome.
    pub misreport: BranchOutcome,
    /// The divisible engine on the same flat reports, for comparison: it
    /// sells fractional capacity and lands on different payments.
    pub misreport_divisible: BranchOutcome,
    /// Whether the divisible engine diverges from the multi-unit clinching
    /// outcome (expected: the mechanisms differ).
    pub divisible_diverges: bool,
    /// Truthful (2,1): the forced outcome.
    pub truthful: BranchOutcome,
    pub forced_conditions: ForcedOutcomeCheck,
    /// Utility bidder 2 gains by lying: u₂(misreport) − u₂(truth).
    pub misreport_gain: Rat,
}

/// Outcome of the multi-unit clinching auction for flat reports: the
/// combinatorial engine on `units` identical single-instance rounds.
pub fn multi_unit_clinching(
    flat_values: &[u64],
    budgets: &[Rat],
    units: usize,
) -> Result<MultiUnitAllocation, EngineError> {
    let interest: BTreeSet<usize> = (1..=units).collect();
    let inst = AuctionInstance {
        mode: Mode::Combinatorial,
        bidders: flat_values
            .iter()
            .zip(budgets)
            .enumerate()
            .map(|(i, (&v, b))| Bidder {
                id: i + 1,
                valuation: Valuation::Flat(v),
                budget: b.clone(),
                demand_cap: 1,
                interest: interest.clone(),
            })
            .collect(),
        slots: vec![Slot {
            id: 1,
            quality: rat_u(1),
        }],
        rounds: units,
    };
    let (alloc, _) = run_combinatorial(&inst)?;
    Ok(MultiUnitAllocation {
        units: alloc.won.iter().map(Vec::len).collect(),
        payments: alloc.payments,
    })
}

/// The outcome the marginal setting forces for a profile, when any auction
/// with the three properties is pinned down at all: flat reports reduce to
/// the multi-unit clinching auction; reports meeting the forced-outcome
/// conditions hand everything to bidder 1 with p₂ = 0. Other profiles are
/// not determined by these arguments.
pub fn pinned_outcome(inst: &MarginalInstance) -> Result<Option<MultiUnitAllocation>, EngineError> {
    let flat: Option<Vec<u64>> = inst
        .marginals
        .iter()
        .map(|m| {
            let v = m[0];
            m.iter().all(|&x| x == v).then_some(v)
        })
        .collect();
    if let Some(values) = flat {
        return Ok(Some(multi_unit_clinching(
            &values,
            &inst.budgets,
            inst.units,
        )?));
    }
    if forced_outcome_conditions(inst).holds {
        // All units to bidder 1; bidder 2 pays nothing. Bidder 1's payment is
        // not pinned by the argument and is reported as zero.
        let mut units = vec![0usize; inst.marginals.len()];
        units[0] = inst.units;
        return Ok(Some(MultiUnitAllocation {
            units,
            payments: vec![Rat::zero(); inst.marginals.len()],
        }));
    }
    Ok(None)
}

fn utilities(inst: &MarginalInstance, alloc: &MultiUnitAllocation) -> Vec<Rat> {
    (0..inst.marginals.len())
        .map(|i| inst.gross(i, alloc.units[i]) - &alloc.payments[i])
        .collect()
}

/// Run the two-branch comparison on the fixed demo instance.
pub fn run_counterexample() -> Result<CounterexampleReport, EngineError> {
    let instance = demo_instance();

    // Misreport branch: bidder 2 reports flat (2,2).
    let reported = MarginalInstance {
        marginals: vec![vec![5, 5], vec![2, 2]],
        budgets: instance.budgets.clone(),
        units: instance.units,
    };
    let clinching = multi_unit_clinching(&[5, 2], &instance.budgets, instance.units)?;
    // Utilities under the truth: bidder 2's real marginals value his units.
    let misreport = BranchOutcome {
        reported_marginals: reported.marginals.clone(),
        utilities: utilities(&instance, &clinching),
        allocation: clinching,
    };

    // The divisible engine on the same flat reports, with unit qualities and
    // per-unit demand caps; it runs a different (fractional) mechanism.
    let flat_inst = AuctionInstance {
        mode: Mode::Divisible,
        bidders: vec![
            Bidder {
                id: 1,
                valuation: Valuation::Flat(5),
                budget: instance.budgets[0].clone(),
                demand_cap: 2,
                interest: BTreeSet::new(),
            },
            Bidder {
                id: 2,
                valuation: Valuation::Flat(2),
                budget: instance.budgets[1].clone(),
                demand_cap: 2,
                interest: BTreeSet::new(),
            },
        ],
        slots: vec![
            Slot {
                id: 1,
                quality: rat_u(1),
            },
            Slot {
                id: 2,
                quality: rat_u(1),
            },
        ],
        rounds: 1,
    };
    let (frac, _) = run_divisible(&flat_inst)?;
    let pre = preprocessed_instance(&flat_inst);
    let frac_caps = frac.capacities(&pre.slots);
    let misreport_divisible = BranchOutcome {
        reported_marginals: reported.marginals.clone(),
        utilities: (0..2)
            .map(|i| {
                // True per-unit values apply to the fractional capacity.
                &frac_caps[i] * rat_u(instance.marginals[i][0]) - &frac.payments[i]
            })
            .collect(),
        allocation: MultiUnitAllocation {
            // Fractional capacities do not form unit counts; retained as 0
            // here, the payments carry the comparison.
            units: vec![0, 0],
            payments: frac.payments.clone(),
        },
    };
    let divisible_diverges = frac.payments != misreport.allocation.payments;

    // Truthful branch: the forced outcome.
    let forced_conditions = forced_outcome_conditions(&instance);
    let truthful_alloc = pinned_outcome(&instance)?.ok_or_else(|| {
        EngineError::invariant("demo instance must satisfy the forced-outcome conditions")
    })?;
    let truthful = BranchOutcome {
        reported_marginals: instance.marginals.clone(),
        utilities: utilities(&instance, &truthful_alloc),
        allocation: truthful_alloc,
    };

    let misreport_gain = &misreport.utilities[1] - &truthful.utilities[1];
    Ok(CounterexampleReport {
        instance,
        misreport,
        misreport_divisible,
        divisible_diverges,
        truthful,
        forced_conditions,
        misreport_gain,
    })
}

/// A profitable marginal-valuation misreport.
#[derive(Debug, Clone)]
pub struct MarginalDeviation {
    pub bidder: usize,
    pub truthful_marginals: Vec<u64>,
    pub reported_marginals: Vec<u64>,
    pub truthful_utility: Rat,
    pub deviating_utility: Rat,
}

/// Deviation grid for the marginal setting: over all non-increasing
/// marginal reports with values in {1..vmax}, compare utilities wherever
/// both the truthful and the deviating profile have pinned outcomes.
pub fn marginal_deviation_grid(
    inst: &MarginalInstance,
    vmax: u64,
) -> Result<Vec<MarginalDeviation>, EngineError> {
    let truthful_outcome = pinned_outcome(inst)?;
    let Some(truthful_outcome) = truthful_outcome else {
        return Ok(Vec::new());
    };
    let truthful_utilities = utilities(inst, &truthful_outcome);
    let mut reports = Vec::new();
    for first in 1..=vmax {
        for second in 1..=first {
            reports.push(vec![first, second]);
        }
    }
    let mut deviations = Vec::new();
    for bidder in 0..inst.marginals.len() {
        for report in &reports {
            if report == &inst.marginals[bidder] {
                continue;
            }
            let mut deviated = inst.clone();
            deviated.marginals[bidder] = report.clone();
            let Some(outcome) = pinned_outcome(&deviated)? else {
                continue;
            };
            // True marginals value the deviating outcome.
            let deviating_utility =
                inst.gross(bidder, outcome.units[bidder]) - &outcome.payments[bidder];
            if deviating_utility > truthful_utilities[bidder] {
                deviations.push(MarginalDeviation {
                    bidder: bidder + 1,
                    truthful_marginals: inst.marginals[bidder].clone(),
                    reported_marginals: report.clone(),
                    truthful_utility: truthful_utilities[bidder].clone(),
                    deviating_utility,
                });
            }
        }
    }
    Ok(deviations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::verify::{pareto_verdict, AllocationRef};

    #[test]
    fn misreport_branch_matches_reported_clinching_values() {
        let report = run_counterexample().unwrap();
        assert_eq!(report.misreport.allocation.units, vec![1, 1]);
        assert_eq!(
            report.misreport.allocation.payments,
            vec![rat_u(2), rat(3, 2)]
        );
        assert_eq!(report.misreport.utilities, vec![rat_u(3), rat(1, 2)]);
    }

    #[test]
    fn truthful_branch_is_forced_outcome() {
        let report = run_counterexample().unwrap();
        assert_eq!(report.truthful.allocation.units, vec![2, 0]);
        assert_eq!(report.truthful.allocation.payments[1], Rat::zero());
        assert_eq!(report.truthful.utilities[1], Rat::zero());
        // The forced outcome is Pareto optimal.
        let inst = report.instance.as_auction_instance();
        assert!(
            pareto_verdict(&inst, AllocationRef::MultiUnit(&report.truthful.allocation))
                .unwrap()
                .is_optimal()
        );
    }

    #[test]
    fn misreport_gain_is_exactly_one_half() {
        let report = run_counterexample().unwrap();
        assert_eq!(report.misreport_gain, rat(1, 2));
    }

    #[test]
    fn divisible_engine_diverges_from_multi_unit_clinching() {
        let report = run_counterexample().unwrap();
        assert!(report.divisible_diverges);
        assert_eq!(
            report.misreport_divisible.allocation.payments,
            vec![rat_u(3), rat(1, 2)]
        );
    }

    #[test]
    fn forced_conditions_evaluated_exactly() {
        let check = forced_outcome_conditions(&demo_instance());
        assert!(check.holds);
        assert_eq!(check.last_marginal_first, (5, 2, true));
        assert_eq!(check.gross_vs_budget.0, rat_u(3));

        // Boundary: gross value one above the budget fails.
        let mut inst = demo_instance();
        inst.marginals[1] = vec![2, 2];
        let check = forced_outcome_conditions(&inst);
        assert!(!check.holds);

        // Strictness: equal marginals fail.
        let mut inst = demo_instance();
        inst.marginals[0] = vec![5, 2];
        inst.marginals[1] = vec![2, 1];
        let check = forced_outcome_conditions(&inst);
        assert!(!check.holds);
    }

    #[test]
    fn deviation_grid_exhibits_the_profitable_lie() {
        let devs = marginal_deviation_grid(&demo_instance(), 6).unwrap();
        let lie = devs
            .iter()
            .find(|d| d.bidder == 2 && d.reported_marginals == vec![2, 2])
            .expect("the flat misreport must appear");
        assert_eq!(&lie.deviating_utility - &lie.truthful_utility, rat(1, 2));
    }
}
