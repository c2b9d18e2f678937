//! Heavier randomized sweeps, excluded from the default run; execute with
//! `cargo test -p clinch --test deep_fuzz -- --ignored`.

#[allow(dead_code)]
mod common;

use std::collections::BTreeSet;

use num_traits::Zero;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clinch::divisible::preprocessed_instance;
use clinch::lp::solve_improvement_lp;
use clinch::model::{AuctionInstance, Bidder, Mode, Slot, Valuation};
use clinch::rational::{rat, rat_u, Rat};
use clinch::rounding::{run_rounds, DEFAULT_LAMBDA_CAP};
use clinch::verify::{
    check_theorem1, find_trading_swap, ic_deviation_grid, pareto_verdict, AllocationRef, Engine,
};

use common::{random_divisible_instance, random_legal_allocation};

#[test]
#[ignore]
fn deep_ic_grid_with_caps_and_mixed_qualities() {
    // Exercises the pay-at-raised-price rule: κ > 1, fractional budgets,
    // non-unit qualities.
    let template = AuctionInstance {
        mode: Mode::Divisible,
        bidders: vec![
            Bidder {
                id: 1,
                valuation: Valuation::Flat(1),
                budget: rat(7, 2),
                demand_cap: 2,
                interest: BTreeSet::new(),
            },
            Bidder {
                id: 2,
                valuation: Valuation::Flat(1),
                budget: rat(11, 3),
                demand_cap: 1,
                interest: BTreeSet::new(),
            },
        ],
        slots: vec![
            Slot {
                id: 1,
                quality: rat_u(2),
            },
            Slot {
                id: 2,
                quality: rat_u(1),
            },
            Slot {
                id: 3,
                quality: rat(1, 2),
            },
        ],
        rounds: 1,
    };
    let report = ic_deviation_grid(&template, Engine::Divisible, 6).unwrap();
    assert!(report.is_empty(), "{report:#?}");

    let template2 = AuctionInstance {
        mode: Mode::Divisible,
        bidders: vec![
            Bidder {
                id: 1,
                valuation: Valuation::Flat(1),
                budget: rat_u(2),
                demand_cap: 2,
                interest: BTreeSet::new(),
            },
            Bidder {
                id: 2,
                valuation: Valuation::Flat(1),
                budget: rat_u(6),
                demand_cap: 2,
                interest: BTreeSet::new(),
            },
            Bidder {
                id: 3,
                valuation: Valuation::Flat(1),
                budget: rat(5, 2),
                demand_cap: 1,
                interest: BTreeSet::new(),
            },
        ],
        slots: vec![
            Slot {
                id: 1,
                quality: rat_u(3),
            },
            Slot {
                id: 2,
                quality: rat_u(1),
            },
        ],
        rounds: 1,
    };
    let report = ic_deviation_grid(&template2, Engine::Divisible, 5).unwrap();
    assert!(report.is_empty(), "{report:#?}");
}

#[test]
#[ignore]
fn deep_route_agreement_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(40_001);
    let mut improvable = 0usize;
    for case in 0..2000 {
        let inst = preprocessed_instance(&random_divisible_instance(&mut rng));
        let alloc = random_legal_allocation(&mut rng, &inst);
        let (closure_ok, _) = check_theorem1(&inst, &alloc);
        let swap = find_trading_swap(&inst, &alloc);
        let imp = solve_improvement_lp(&inst.bidders, &inst.slots, &alloc).unwrap();
        assert_eq!(closure_ok, swap.is_none(), "case {case}");
        assert_eq!(closure_ok, imp.gain.is_zero(), "case {case}");
        improvable += usize::from(!closure_ok);
    }
    eprintln!("improvable: {improvable}/2000");
    assert!(improvable > 100);
}

/// Brute-force Pareto improvability of a combinatorial allocation:
/// enumerate every feasible assignment (each round's identical instances go
/// to distinct interested bidders), and test whether a budget-bounded
/// payment vector keeps everyone whole while welfare strictly rises.
fn combinatorial_improvable_brute_force(
    inst: &AuctionInstance,
    won: &[Vec<usize>],
    payments: &[Rat],
) -> bool {
    let n = inst.n();
    let m = inst.m();
    let valuations: Vec<u64> = inst
        .bidders
        .iter()
        .map(|b| b.valuation.flat().unwrap())
        .collect();
    let utilities: Vec<Rat> = (0..n)
        .map(|i| rat_u(valuations[i]) * rat_u(won[i].len() as u64) - &payments[i])
        .collect();
    let revenue: Rat = payments.iter().fold(Rat::zero(), |a, p| a + p);
    let welfare: Rat = (0..n).fold(Rat::zero(), |a, i| {
        a + rat_u(valuations[i]) * rat_u(won[i].len() as u64)
    });
    // Subsets (≤ m instances per round) of each round's interested bidders.
    let mut per_round: Vec<Vec<Vec<usize>>> = Vec::new();
    for r in 0..inst.rounds {
        let interested = inst.interested_in(r);
        let mut options = Vec::new();
        for mask in 0u32..(1 << interested.len()) {
            if (mask.count_ones() as usize) <= m {
                options.push(
                    interested
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask >> k & 1 == 1)
                        .map(|(_, &i)| i)
                        .collect(),
                );
            }
        }
        per_round.push(options);
    }
    let mut pick = vec![0usize; inst.rounds];
    loop {
        let mut counts = vec![0u64; n];
        for (r, &p) in pick.iter().enumerate() {
            for &i in &per_round[r][p] {
                counts[i] += 1;
            }
        }
        let welfare_alt: Rat = (0..n).fold(Rat::zero(), |a, i| {
            a + rat_u(valuations[i]) * rat_u(counts[i])
        });
        let payment_room: Rat = (0..n).fold(Rat::zero(), |a, i| {
            let gross = rat_u(valuations[i]) * rat_u(counts[i]);
            a + (gross - &utilities[i]).min(inst.bidders[i].budget.clone())
        });
        if welfare_alt > welfare && payment_room >= revenue {
            return true;
        }
        let mut pos = 0;
        loop {
            if pos == inst.rounds {
                return false;
            }
            pick[pos] += 1;
            if pick[pos] < per_round[pos].len() {
                break;
            }
            pick[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
#[ignore]
fn deep_sold_out_and_path_free_matches_brute_force_optimality() {
    use clinch::model::CombinatorialAllocation;
    use clinch::verify::find_trading_path;

    let mut rng = ChaCha8Rng::seed_from_u64(40_003);
    let mut improvable_count = 0usize;
    let mut optimal_count = 0usize;
    for case in 0..1500 {
        // Small instance with coverage.
        let rounds = rng.random_range(1..=2usize);
        let m = rng.random_range(1..=2usize);
        let n = rng.random_range(m.max(2)..=3usize);
        let bidders: Vec<Bidder> = (0..n)
            .map(|i| {
                let mut interest: BTreeSet<usize> = (1..=rounds)
                    .filter(|_| rng.random_range(0..3u8) > 0)
                    .collect();
                if interest.is_empty() {
                    interest.insert(rng.random_range(1..=rounds));
                }
                Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(rng.random_range(1..=4)),
                    budget: rat_u(rng.random_range(1..=6)),
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
        if (0..rounds).any(|r| inst.interested_in(r).len() < m) {
            continue;
        }
        // Random feasible allocation, not necessarily complete, with
        // individually rational payments within budgets.
        let mut won: Vec<Vec<usize>> = vec![Vec::new(); n];
        for r in 0..rounds {
            let mut interested = inst.interested_in(r);
            for k in (1..interested.len()).rev() {
                interested.swap(k, rng.random_range(0..=k));
            }
            let take = rng.random_range(0..=m.min(interested.len()));
            for &i in interested.iter().take(take) {
                won[i].push(r + 1);
            }
        }
        let payments: Vec<Rat> = (0..n)
            .map(|i| {
                let cap =
                    rat_u(inst.bidders[i].valuation.flat().unwrap()) * rat_u(won[i].len() as u64);
                let cap = cap.min(inst.bidders[i].budget.clone());
                cap * rat(rng.random_range(0..=4), 4)
            })
            .collect();
        let remaining: Vec<Rat> = (0..n)
            .map(|i| &inst.bidders[i].budget - &payments[i])
            .collect();
        let alloc = CombinatorialAllocation {
            won: won.clone(),
            payments: payments.clone(),
            remaining,
        };
        let sold: usize = won.iter().map(Vec::len).sum();
        let all_sold = sold == m * rounds;
        let path = find_trading_path(&inst, &alloc);
        let verdict_optimal = all_sold && path.is_none();
        let brute_improvable = combinatorial_improvable_brute_force(&inst, &won, &payments);
        assert_eq!(
            verdict_optimal, !brute_improvable,
            "case {case}: verdict mismatch on {inst:?} won={won:?} p={payments:?} path={path:?}"
        );
        if verdict_optimal {
            optimal_count += 1;
        } else {
            improvable_count += 1;
        }
    }
    eprintln!("optimal: {optimal_count}, improvable: {improvable_count}");
    assert!(optimal_count > 100 && improvable_count > 100);
}

#[test]
#[ignore]
fn deep_ex_post_optimality_of_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(40_002);
    let mut checked = 0usize;
    for _ in 0..300 {
        let n = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=2usize);
        let rounds = rng.random_range(1..=2usize);
        let inst = AuctionInstance {
            mode: Mode::IndivisibleRounds,
            bidders: (0..n)
                .map(|i| Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(rng.random_range(1..=5)),
                    budget: rat_u(rng.random_range(1..=7)),
                    demand_cap: rng.random_range(1..=2),
                    interest: BTreeSet::new(),
                })
                .collect(),
            slots: (0..m)
                .map(|j| Slot {
                    id: j + 1,
                    quality: rat(rng.random_range(0..=4), rng.random_range(1..=2)),
                })
                .collect(),
            rounds,
        };
        if inst.total_demand_cap() < inst.m() {
            continue;
        }
        let out = run_rounds(&inst, rng.random_range(0..u64::MAX), DEFAULT_LAMBDA_CAP).unwrap();
        let verdict = pareto_verdict(&inst, AllocationRef::Rounds(&out.allocation)).unwrap();
        assert!(
            verdict.is_optimal(),
            "sampled outcome improvable on {inst:?}: {verdict:?}"
        );
        checked += 1;
    }
    eprintln!("checked: {checked}");
    assert!(checked >= 200);
}
