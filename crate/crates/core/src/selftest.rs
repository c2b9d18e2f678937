//! Built-in smoke checks for the `selftest` command: the worked one-item
//! examples, the impossibility demo, a second-price sanity run, and a small
//! randomized sweep through all three engines with their verifiers.

use std::collections::BTreeSet;

use num_traits::Zero;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::combinatorial::run_combinatorial;
use crate::divisible::{preprocessed_instance, run_divisible};
use crate::lp::solve_improvement_lp;
use crate::marginal::run_counterexample;
use crate::model::{
    check_legal_divisible, AuctionInstance, Bidder, CombinatorialAllocation, Mode, Slot, Valuation,
};
use crate::rational::{rat, rat_u, Rat};
use crate::rounding::{expected_capacities, run_rounds, DEFAULT_LAMBDA_CAP};
use crate::verify::{
    check_theorem1, find_trading_path, find_trading_swap, pareto_verdict, AllocationRef,
};

pub struct Check {
    pub name: String,
    pub passed: bool,
}

fn check(name: &str, passed: bool) -> Check {
    Check {
        name: name.to_string(),
        passed,
    }
}

fn one_item_instance(vals: [u64; 2], budgets: [Rat; 2]) -> AuctionInstance {
    AuctionInstance {
        mode: Mode::Combinatorial,
        bidders: (0..2)
            .map(|i| Bidder {
                id: i + 1,
                valuation: Valuation::Flat(vals[i]),
                budget: budgets[i].clone(),
                demand_cap: 1,
                interest: [1].into_iter().collect(),
            })
            .collect(),
        slots: vec![Slot {
            id: 1,
            quality: rat_u(1),
        }],
        rounds: 1,
    }
}

fn random_divisible(rng: &mut ChaCha8Rng) -> AuctionInstance {
    let n = rng.random_range(1..=3usize);
    let m = rng.random_range(1..=3usize);
    AuctionInstance {
        mode: Mode::Divisible,
        bidders: (0..n)
            .map(|i| Bidder {
                id: i + 1,
                valuation: Valuation::Flat(rng.random_range(1..=5)),
                budget: rat_u(rng.random_range(1..=6)),
                demand_cap: rng.random_range(1..=2),
                interest: BTreeSet::new(),
            })
            .collect(),
        slots: (0..m)
            .map(|j| Slot {
                id: j + 1,
                quality: rat_u(rng.random_range(0..=3)),
            })
            .collect(),
        rounds: 1,
    }
}

fn random_combinatorial(rng: &mut ChaCha8Rng) -> AuctionInstance {
    let rounds = rng.random_range(1..=2usize);
    let m = rng.random_range(1..=2usize);
    let n = rng.random_range(m.max(2)..=4usize);
    loop {
        let bidders: Vec<Bidder> = (0..n)
            .map(|i| {
                let mut interest: BTreeSet<usize> = (1..=rounds)
                    .filter(|_| rng.random_range(0..4u8) > 0)
                    .collect();
                if interest.is_empty() {
                    interest.insert(rng.random_range(1..=rounds));
                }
                Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(rng.random_range(1..=5)),
                    budget: rat_u(rng.random_range(1..=7)),
                    demand_cap: 1,
                    interest,
                }
            })
            .collect();
        let inst = AuctionInstance {
            mode: Mode::Combinatorial,
            bidders,
            slots: (0..m)
                .map(|j| Slot {
                    id: j + 1,
                    quality: rat_u(1),
                })
                .collect(),
            rounds,
        };
        if (0..rounds).all(|r| inst.interested_in(r).len() >= m) {
            return inst;
        }
    }
}

/// Run the smoke suite; every check carries a printable name.
pub fn run_selftest() -> Vec<Check> {
    let mut checks = Vec::new();

    // Worked one-item verdicts.
    {
        let inst = one_item_instance([1, 2], [rat_u(1), rat_u(1)]);
        let sold_to_2 = CombinatorialAllocation {
            won: vec![vec![], vec![1]],
            payments: vec![Rat::zero(), rat_u(1)],
            remaining: vec![rat_u(1), Rat::zero()],
        };
        checks.push(check(
            "one-item sale to the high bidder at 1 is optimal",
            pareto_verdict(&inst, AllocationRef::Combinatorial(&sold_to_2))
                .is_ok_and(|v| v.is_optimal()),
        ));
        let inst_low = one_item_instance([1, 2], [rat_u(1), rat(1, 2)]);
        let sold_to_1 = CombinatorialAllocation {
            won: vec![vec![1], vec![]],
            payments: vec![rat_u(1), Rat::zero()],
            remaining: vec![Rat::zero(), rat(1, 2)],
        };
        checks.push(check(
            "one-item sale to the low bidder is optimal when the rival budget is short",
            pareto_verdict(&inst_low, AllocationRef::Combinatorial(&sold_to_1))
                .is_ok_and(|v| v.is_optimal()),
        ));
        let unsold = CombinatorialAllocation {
            won: vec![vec![], vec![]],
            payments: vec![Rat::zero(), Rat::zero()],
            remaining: vec![rat_u(1), rat(1, 2)],
        };
        checks.push(check(
            "an unsold item is improvable",
            pareto_verdict(&inst_low, AllocationRef::Combinatorial(&unsold))
                .is_ok_and(|v| !v.is_optimal()),
        ));
    }

    // The impossibility demo's exact values.
    match run_counterexample() {
        Ok(report) => {
            checks.push(check(
                "demo misreport branch pays (2, 3/2) with utilities (3, 1/2)",
                report.misreport.allocation.payments == vec![rat_u(2), rat(3, 2)]
                    && report.misreport.utilities == vec![rat_u(3), rat(1, 2)],
            ));
            checks.push(check(
                "demo truthful branch zeroes bidder 2",
                report.truthful.utilities[1].is_zero()
                    && report.truthful.allocation.payments[1].is_zero(),
            ));
            checks.push(check(
                "demo misreport gain is exactly 1/2",
                report.misreport_gain == rat(1, 2),
            ));
        }
        Err(_) => checks.push(check("impossibility demo runs", false)),
    }

    // Second-price behaviour on a unit pair.
    {
        let inst = AuctionInstance {
            mode: Mode::Divisible,
            bidders: vec![
                Bidder {
                    id: 1,
                    valuation: Valuation::Flat(3),
                    budget: rat_u(10),
                    demand_cap: 1,
                    interest: BTreeSet::new(),
                },
                Bidder {
                    id: 2,
                    valuation: Valuation::Flat(2),
                    budget: rat_u(10),
                    demand_cap: 1,
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
                    quality: Rat::zero(),
                },
            ],
            rounds: 1,
        };
        let ok = run_divisible(&inst)
            .is_ok_and(|(alloc, _)| alloc.payments == vec![rat_u(2), Rat::zero()]);
        checks.push(check("unit pair resolves to the second price", ok));
    }

    // Random divisible sweep: legality plus all three Pareto routes.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ok = true;
        for _ in 0..10 {
            let inst = random_divisible(&mut rng);
            let Ok((alloc, _)) = run_divisible(&inst) else {
                ok = false;
                break;
            };
            let pre = preprocessed_instance(&inst);
            ok &= check_legal_divisible(&pre.bidders, &pre.slots, &alloc).legal();
            ok &= check_theorem1(&pre, &alloc).0;
            ok &= find_trading_swap(&pre, &alloc).is_none();
            ok &= solve_improvement_lp(&pre.bidders, &pre.slots, &alloc)
                .is_ok_and(|imp| imp.gain.is_zero());
            if !ok {
                break;
            }
        }
        checks.push(check("random divisible outputs are Pareto optimal", ok));
    }

    // Random combinatorial sweep: everything sold, no trading path.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut ok = true;
        for _ in 0..10 {
            let inst = random_combinatorial(&mut rng);
            let Ok((alloc, _)) = run_combinatorial(&inst) else {
                ok = false;
                break;
            };
            let sold: usize = alloc.won.iter().map(Vec::len).sum();
            ok &= sold == inst.m() * inst.rounds;
            ok &= find_trading_path(&inst, &alloc).is_none();
            if !ok {
                break;
            }
        }
        checks.push(check(
            "random combinatorial outputs sell out without trading paths",
            ok,
        ));
    }

    // Rounding pipeline keeps utility equivalence exactly.
    {
        let inst = AuctionInstance {
            mode: Mode::IndivisibleRounds,
            bidders: vec![
                Bidder {
                    id: 1,
                    valuation: Valuation::Flat(5),
                    budget: rat_u(3),
                    demand_cap: 2,
                    interest: BTreeSet::new(),
                },
                Bidder {
                    id: 2,
                    valuation: Valuation::Flat(2),
                    budget: rat_u(11),
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
            rounds: 3,
        };
        let ok = run_rounds(&inst, 7, DEFAULT_LAMBDA_CAP).is_ok_and(|out| {
            let pre = preprocessed_instance(&inst);
            let qualities: Vec<Rat> = pre.slots.iter().map(|s| s.quality.clone()).collect();
            expected_capacities(&out.column_matrix, &qualities, 2)
                == out.divisible.capacities(&pre.slots)
        });
        checks.push(check("rounding preserves expected capacities exactly", ok));
    }

    checks
}
