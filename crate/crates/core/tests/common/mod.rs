//! Shared generators for the randomized suites. Everything is seeded, so
//! the corpora are reproducible run to run.

use std::collections::BTreeSet;

use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use clinch::model::{AuctionInstance, Bidder, DivisibleAllocation, Mode, Slot, Valuation};
use clinch::rational::{rat, rat_u, Rat};

/// Budgets are drawn as small rationals ≥ 1 with denominator ≤ 3.
pub fn random_budget(rng: &mut ChaCha8Rng, max: u64) -> Rat {
    let den = *[1i64, 2, 3].get(rng.random_range(0..3usize)).unwrap();
    let num = rng.random_range(den..=(max as i64) * den);
    rat(num, den)
}

fn random_quality(rng: &mut ChaCha8Rng) -> Rat {
    match rng.random_range(0..4u8) {
        0 => rat_u(rng.random_range(0..=4)),
        1 => rat(rng.random_range(1..=8), 2),
        2 => rat(rng.random_range(1..=12), 3),
        _ => rat_u(rng.random_range(1..=3)),
    }
}

/// Random divisible instance: n ≤ 4 bidders, m ≤ 5 slots, v ≤ 6, b ≤ 8.
pub fn random_divisible_instance(rng: &mut ChaCha8Rng) -> AuctionInstance {
    let n = rng.random_range(1..=4usize);
    let m = rng.random_range(1..=5usize);
    AuctionInstance {
        mode: Mode::Divisible,
        bidders: (0..n)
            .map(|i| Bidder {
                id: i + 1,
                valuation: Valuation::Flat(rng.random_range(1..=6)),
                budget: random_budget(rng, 8),
                demand_cap: rng.random_range(1..=2),
                interest: BTreeSet::new(),
            })
            .collect(),
        slots: (0..m)
            .map(|j| Slot {
                id: j + 1,
                quality: random_quality(rng),
            })
            .collect(),
        rounds: 1,
    }
}

/// Random multi-round indivisible instance with Σκ_i ≥ m so full assignment
/// is possible.
pub fn random_rounds_instance(rng: &mut ChaCha8Rng) -> AuctionInstance {
    loop {
        let mut inst = random_divisible_instance(rng);
        inst.mode = Mode::IndivisibleRounds;
        inst.rounds = rng.random_range(1..=4usize);
        if inst.total_demand_cap() >= inst.m() {
            return inst;
        }
    }
}

/// Random combinatorial instance: n ≤ 4 bidders, ≤ 3 rounds, ≤ 2 identical
/// slot instances per round, with the coverage condition enforced.
pub fn random_combinatorial_instance(rng: &mut ChaCha8Rng) -> AuctionInstance {
    loop {
        let rounds = rng.random_range(1..=3usize);
        let m = rng.random_range(1..=2usize);
        let n = rng.random_range(m.max(2)..=4usize);
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
                    valuation: Valuation::Flat(rng.random_range(1..=6)),
                    budget: random_budget(rng, 8),
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

/// Random legal allocation on an instance whose slot count equals Σκ_i:
/// an integral full assignment respecting the demand caps exactly, blurred
/// by random fractional pair swaps, with random payments within budgets
/// (sometimes pinned to the budget to exercise the exhausted-budget gates).
pub fn random_legal_allocation(
    rng: &mut ChaCha8Rng,
    inst: &AuctionInstance,
) -> DivisibleAllocation {
    let n = inst.n();
    let m = inst.m();
    assert_eq!(
        m,
        inst.total_demand_cap(),
        "allocation generator needs Σκ = m"
    );
    // Integral base: deal the slots out so bidder i gets exactly κ_i.
    let mut deck: Vec<usize> = (0..m).collect();
    for k in (1..deck.len()).rev() {
        deck.swap(k, rng.random_range(0..=k));
    }
    let mut x = vec![vec![Rat::zero(); m]; n];
    let mut next = 0;
    for (i, b) in inst.bidders.iter().enumerate() {
        for _ in 0..b.demand_cap {
            x[i][deck[next]] = rat_u(1);
            next += 1;
        }
    }
    // Fractional blur: exchange τ of slots j, j′ between bidders i, i′.
    for _ in 0..rng.random_range(0..6usize) {
        let i = rng.random_range(0..n);
        let i2 = rng.random_range(0..n);
        if i == i2 {
            continue;
        }
        let held_i: Vec<usize> = (0..m).filter(|&j| x[i][j] > Rat::zero()).collect();
        let held_i2: Vec<usize> = (0..m).filter(|&j| x[i2][j] > Rat::zero()).collect();
        let j = held_i[rng.random_range(0..held_i.len())];
        let j2 = held_i2[rng.random_range(0..held_i2.len())];
        if j == j2 {
            continue;
        }
        let available = x[i][j].clone().min(x[i2][j2].clone());
        let tau = available * rat(1, rng.random_range(2..=4));
        x[i][j] -= &tau;
        x[i2][j] += &tau;
        x[i2][j2] -= &tau;
        x[i][j2] += &tau;
    }
    let payments = inst
        .bidders
        .iter()
        .map(|b| match rng.random_range(0..4u8) {
            // Pin to the budget: the bidder drops out of the slack set.
            0 => b.budget.clone(),
            _ => {
                let den = 6;
                let num = rng.random_range(0..=den);
                &b.budget * rat(num, den)
            }
        })
        .collect();
    DivisibleAllocation { x, payments }
}

/// Random occurrence matrix for the swapping suites: every value appears at
/// most `cols` times. At least `rows` distinct values keep the fill
/// possible under that bound.
pub fn random_occurrence_matrix(rng: &mut ChaCha8Rng) -> (Vec<Vec<usize>>, usize) {
    let rows = rng.random_range(1..=6usize);
    let cols = rng.random_range(1..=6usize);
    let values = rng.random_range(rows..=rows * 2);
    let mut quota = vec![cols; values];
    let mut cells = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let available: Vec<usize> = (0..values).filter(|&v| quota[v] > 0).collect();
        let v = available[rng.random_range(0..available.len())];
        quota[v] -= 1;
        cells.push(v);
    }
    let matrix: Vec<Vec<usize>> = cells.chunks(cols).map(<[usize]>::to_vec).collect();
    (matrix, values)
}
