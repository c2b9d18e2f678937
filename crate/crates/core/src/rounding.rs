//! Randomized rounding of a divisible allocation into per-round indivisible
//! assignments.
//!
//! Pipeline: scale the fractional matrix by the least common denominator λ
//! into an occurrence matrix M (slots × λ columns of bidder ids), split each
//! bidder into κ_i pseudo-bidders so every value appears at most λ times,
//! swap entries within rows until every value is column-unique, merge the
//! pseudo-bidders back, and sample |R| columns uniformly. Every column of the
//! final matrix is a legal one-round assignment and the expected weighted
//! capacity per bidder equals the divisible allocation's exactly.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::divisible::{preprocessed_instance, run_divisible};
use crate::error::EngineError;
use crate::model::{
    AuctionInstance, AuctionTrace, DivisibleAllocation, IndivisibleAllocation, Mode,
};
use crate::rational::{lcm_denoms, rat_u, Rat};

/// Default cap on the least common denominator; overridable per call.
pub const DEFAULT_LAMBDA_CAP: u64 = 1_000_000;

/// The discretized allocation: λ, integer counts y = λ·x, and the occurrence
/// matrix M with `matrix[j]` holding λ bidder indices for slot `j`.
#[derive(Debug, Clone)]
pub struct DiscreteMatrix {
    pub lambda: u64,
    /// `counts[i][j]` = y_{i,j}.
    pub counts: Vec<Vec<u64>>,
    /// `matrix[j][c]` = 0-based bidder index.
    pub matrix: Vec<Vec<usize>>,
}

/// The pseudo-bidder expansion of an occurrence matrix.
#[derive(Debug, Clone)]
pub struct PseudoMatrix {
    /// `matrix[j][c]` = 0-based pseudo-bidder index.
    pub matrix: Vec<Vec<usize>>,
    /// Owning bidder per pseudo-bidder.
    pub owner: Vec<usize>,
}

/// Scale a divisible allocation to integers and lay out the occurrence
/// matrix by cumulative thresholds: column c of row j holds the unique
/// bidder whose prefix sum straddles c.
pub fn discretize(
    alloc: &DivisibleAllocation,
    lambda_cap: u64,
) -> Result<DiscreteMatrix, EngineError> {
    let lambda_big: BigInt = lcm_denoms(alloc.x.iter().flatten());
    let lambda =
        lambda_big
            .to_u64()
            .filter(|&l| l <= lambda_cap)
            .ok_or(EngineError::LambdaCap {
                lambda: lambda_big.to_string(),
                cap: lambda_cap,
            })?;
    let n = alloc.x.len();
    let m = alloc.x.first().map_or(0, Vec::len);
    let mut counts = vec![vec![0u64; m]; n];
    for (i, row) in alloc.x.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            let scaled = f * rat_u(lambda);
            debug_assert!(scaled.is_integer());
            counts[i][j] = scaled
                .to_integer()
                .to_u64()
                .ok_or_else(|| EngineError::invariant("negative or oversized count"))?;
        }
    }
    let mut matrix = Vec::with_capacity(m);
    for j in 0..m {
        let mut row = Vec::with_capacity(lambda as usize);
        for i in 0..n {
            row.extend(std::iter::repeat_n(i, counts[i][j] as usize));
        }
        if row.len() != lambda as usize {
            return Err(EngineError::invariant(format!(
                "slot {} occurrence row has length {} instead of λ = {}",
                j + 1,
                row.len(),
                lambda
            )));
        }
        matrix.push(row);
    }
    Ok(DiscreteMatrix {
        lambda,
        counts,
        matrix,
    })
}

/// Replace bidder `i` by κ_i pseudo-bidders: occurrences are numbered in
/// row-major order and chunked λ at a time, so each pseudo-bidder appears at
/// most λ times. Pseudo-bidder ids of bidder i occupy the contiguous range
/// after Σ_{i′<i} κ_{i′}.
pub fn expand_pseudo(
    discrete: &DiscreteMatrix,
    demand_caps: &[usize],
) -> Result<PseudoMatrix, EngineError> {
    let lambda = discrete.lambda as usize;
    let n = demand_caps.len();
    let mut offset = vec![0usize; n];
    for i in 1..n {
        offset[i] = offset[i - 1] + demand_caps[i - 1];
    }
    let mut owner = Vec::new();
    for (i, &k) in demand_caps.iter().enumerate() {
        owner.extend(std::iter::repeat_n(i, k));
    }
    let mut seen = vec![0usize; n];
    let mut matrix = Vec::with_capacity(discrete.matrix.len());
    for row in &discrete.matrix {
        let mut out = Vec::with_capacity(row.len());
        for &i in row {
            let copy = seen[i] / lambda;
            if copy >= demand_caps[i] {
                return Err(EngineError::invariant(format!(
                    "bidder {} appears more than λ·κ = {} times",
                    i + 1,
                    lambda * demand_caps[i]
                )));
            }
            out.push(offset[i] + copy);
            seen[i] += 1;
        }
        matrix.push(out);
    }
    Ok(PseudoMatrix { matrix, owner })
}

/// Count of duplicate appearances of `value` within columns: occurrences
/// minus the number of columns containing the value. Zero iff column-unique.
pub fn badness_of(matrix: &[Vec<usize>], value: usize) -> u64 {
    let cols = matrix.first().map_or(0, Vec::len);
    let mut occurrences = 0u64;
    let mut columns = 0u64;
    for c in 0..cols {
        let in_col = matrix.iter().filter(|row| row[c] == value).count() as u64;
        occurrences += in_col;
        columns += u64::from(in_col > 0);
    }
    occurrences - columns
}

/// Total badness over all values.
pub fn badness(matrix: &[Vec<usize>], num_values: usize) -> u64 {
    (0..num_values).map(|v| badness_of(matrix, v)).sum()
}

/// Swap entries within rows until every value appears at most once per
/// column. Requires every value to appear in at most (number of columns)
/// entries. Row value multisets are preserved.
pub fn swap_columns(matrix: &mut [Vec<usize>], num_values: usize) -> Result<(), EngineError> {
    swap_columns_impl(matrix, num_values, false).map(drop)
}

/// Like [`swap_columns`], additionally returning the total badness after
/// each completed swap path (a strictly decreasing sequence, which is the
/// termination argument). The bookkeeping costs a full matrix scan per
/// path; production callers use [`swap_columns`].
pub fn swap_columns_traced(
    matrix: &mut [Vec<usize>],
    num_values: usize,
) -> Result<Vec<u64>, EngineError> {
    swap_columns_impl(matrix, num_values, true)
}

fn swap_columns_impl(
    matrix: &mut [Vec<usize>],
    num_values: usize,
    record_badness: bool,
) -> Result<Vec<u64>, EngineError> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    for v in 0..num_values {
        let occurrences: usize = matrix
            .iter()
            .map(|row| row.iter().filter(|&&x| x == v).count())
            .sum();
        if occurrences > cols {
            return Err(EngineError::invariant(format!(
                "value {v} appears {occurrences} times in a {cols}-column matrix"
            )));
        }
    }
    let mut badness_after_path = Vec::new();
    for value in 0..num_values {
        // Per-column occurrence counts of `value`, with index sets for the
        // overfull and empty columns so path endpoints are O(log) lookups.
        let mut col_count: Vec<usize> = vec![0; cols];
        for row in matrix.iter() {
            for (c, &v) in row.iter().enumerate() {
                col_count[c] += usize::from(v == value);
            }
        }
        let mut overfull: std::collections::BTreeSet<usize> =
            (0..cols).filter(|&c| col_count[c] > 1).collect();
        let mut empty: std::collections::BTreeSet<usize> =
            (0..cols).filter(|&c| col_count[c] == 0).collect();
        let mut guard = 0usize;
        while let Some(&a) = overfull.first() {
            guard += 1;
            if guard > rows * cols + 1 {
                return Err(EngineError::invariant(
                    "swapping did not terminate; badness failed to decrease",
                ));
            }
            let b = *empty.first().expect("pigeonhole column");
            // Walk an alternating path: pull `current` out of column a into
            // column b, adopt the displaced value, repeat until the displaced
            // value is unique in a or already present in b.
            let mut current = value;
            let mut last_row: Option<usize> = None;
            loop {
                let k = (0..rows)
                    .find(|&j| Some(j) != last_row && matrix[j][a] == current)
                    .ok_or_else(|| EngineError::invariant("swap path lost its value"))?;
                matrix[k].swap(a, b);
                current = matrix[k][a];
                last_row = Some(k);
                let in_a = (0..rows).filter(|&j| matrix[j][a] == current).count();
                let in_b = (0..rows).filter(|&j| matrix[j][b] == current).count();
                if in_a == 1 || in_b > 0 {
                    break;
                }
            }
            col_count[a] -= 1;
            col_count[b] += 1;
            if col_count[a] <= 1 {
                overfull.remove(&a);
            }
            empty.remove(&b);
            if record_badness {
                badness_after_path.push(badness(matrix, num_values));
            }
        }
    }
    Ok(badness_after_path)
}

/// Merge pseudo-bidders back into their owners.
pub fn collapse(pseudo: &PseudoMatrix) -> Vec<Vec<usize>> {
    pseudo
        .matrix
        .iter()
        .map(|row| row.iter().map(|&p| pseudo.owner[p]).collect())
        .collect()
}

/// Draw one column per round i.i.d. uniformly with the seeded generator and
/// keep the rows of the first `real_slots` slots (dummy slots are padding).
pub fn sample_rounds(
    column_matrix: &[Vec<usize>],
    real_slots: usize,
    rounds: usize,
    seed: u64,
    payments: Vec<Rat>,
) -> IndivisibleAllocation {
    let cols = column_matrix.first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = (0..rounds).map(|_| rng.random_range(0..cols)).collect();
    let assignment = column_matrix[..real_slots]
        .iter()
        .map(|row| picks.iter().map(|&c| row[c] + 1).collect())
        .collect();
    IndivisibleAllocation {
        assignment,
        payments,
        seed,
    }
}

/// Everything the rounding pipeline produced, for reports and verification.
#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub divisible: DivisibleAllocation,
    pub lambda: u64,
    /// Column matrix after swapping and collapsing (includes dummy rows).
    pub column_matrix: Vec<Vec<usize>>,
    pub allocation: IndivisibleAllocation,
    pub trace: AuctionTrace,
}

/// Full pipeline: divisible auction, discretization, pseudo expansion,
/// swapping, collapse, and sampling.
pub fn run_rounds(
    inst: &AuctionInstance,
    seed: u64,
    lambda_cap: u64,
) -> Result<RoundingOutcome, EngineError> {
    if inst.mode != Mode::IndivisibleRounds {
        return Err(EngineError::Validation(vec![format!(
            "rounding engine cannot run {} instances",
            inst.mode
        )]));
    }
    let (divisible, trace) = run_divisible(inst)?;
    let pre = preprocessed_instance(inst);
    let caps: Vec<usize> = pre.bidders.iter().map(|b| b.demand_cap).collect();
    let discrete = discretize(&divisible, lambda_cap)?;
    let mut pseudo = expand_pseudo(&discrete, &caps)?;
    let num_pseudo = pseudo.owner.len();
    swap_columns(&mut pseudo.matrix, num_pseudo)?;
    let column_matrix = collapse(&pseudo);
    // Column-uniqueness of pseudo-bidders gives per-column owner counts ≤ κ.
    for c in 0..discrete.lambda as usize {
        let mut owner_count = vec![0usize; pre.n()];
        for row in &column_matrix {
            owner_count[row[c]] += 1;
        }
        if owner_count.iter().zip(&caps).any(|(&cnt, &k)| cnt > k) {
            return Err(EngineError::invariant(format!(
                "column {c} exceeds a demand cap after collapse"
            )));
        }
    }
    let allocation = sample_rounds(
        &column_matrix,
        inst.m(),
        inst.rounds,
        seed,
        divisible.payments.clone(),
    );
    Ok(RoundingOutcome {
        divisible,
        lambda: discrete.lambda,
        column_matrix,
        allocation,
        trace,
    })
}

/// Exact expected weighted capacity of each bidder under uniform column
/// sampling: Σ_j α_j · |{c : m′_{j,c} = i}| / λ.
pub fn expected_capacities(column_matrix: &[Vec<usize>], qualities: &[Rat], n: usize) -> Vec<Rat> {
    let lambda = column_matrix.first().map_or(1, Vec::len) as u64;
    (0..n)
        .map(|i| {
            column_matrix
                .iter()
                .zip(qualities)
                .fold(Rat::zero(), |acc, (row, q)| {
                    let count = row.iter().filter(|&&b| b == i).count() as u64;
                    acc + q * rat_u(count)
                })
                / rat_u(lambda)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn alloc(x: Vec<Vec<Rat>>) -> DivisibleAllocation {
        let n = x.len();
        DivisibleAllocation {
            x,
            payments: vec![Rat::zero(); n],
        }
    }

    #[test]
    fn discretize_symmetric_halves() {
        let d = discretize(
            &alloc(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]]),
            DEFAULT_LAMBDA_CAP,
        )
        .unwrap();
        assert_eq!(d.lambda, 2);
        assert_eq!(d.matrix, vec![vec![0, 1], vec![0, 1]]);
    }

    #[test]
    fn discretize_integral_matrix() {
        let d = discretize(
            &alloc(vec![vec![rat_u(1), rat_u(0)], vec![rat_u(0), rat_u(1)]]),
            DEFAULT_LAMBDA_CAP,
        )
        .unwrap();
        assert_eq!(d.lambda, 1);
        assert_eq!(d.matrix, vec![vec![0], vec![1]]);
    }

    #[test]
    fn discretize_enforces_cap() {
        let err = discretize(
            &alloc(vec![vec![rat(1, 7), rat(6, 7)], vec![rat(6, 7), rat(1, 7)]]),
            5,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::LambdaCap { .. }));
    }

    #[test]
    fn expand_keeps_single_pseudo_when_unsaturated() {
        // Bidder 0 appears λ times with κ = 1: all occurrences share one
        // pseudo-bidder.
        let d = discretize(
            &alloc(vec![vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]]),
            DEFAULT_LAMBDA_CAP,
        )
        .unwrap();
        let p = expand_pseudo(&d, &[1, 1]).unwrap();
        assert_eq!(p.matrix, d.matrix);
        assert_eq!(p.owner, vec![0, 1]);
    }

    #[test]
    fn expand_splits_overflowing_bidder() {
        // λ = 2, bidder 0 appears 3 times with κ = 2: occurrences split
        // across pseudo-bidders 0 and 1 in row-major order.
        let d = DiscreteMatrix {
            lambda: 2,
            counts: vec![vec![2, 1], vec![0, 1]],
            matrix: vec![vec![0, 0], vec![0, 1]],
        };
        let p = expand_pseudo(&d, &[2, 1]).unwrap();
        assert_eq!(p.matrix, vec![vec![0, 0], vec![1, 2]]);
        assert_eq!(p.owner, vec![0, 0, 1]);
    }

    #[test]
    fn expand_rejects_occurrence_overflow() {
        let d = DiscreteMatrix {
            lambda: 1,
            counts: vec![vec![1, 1]],
            matrix: vec![vec![0], vec![0]],
        };
        assert!(expand_pseudo(&d, &[1]).is_err());
    }

    #[test]
    fn collapse_inverts_expand() {
        let d = discretize(
            &alloc(vec![vec![rat(2, 3), rat(1, 3)], vec![rat(1, 3), rat(2, 3)]]),
            DEFAULT_LAMBDA_CAP,
        )
        .unwrap();
        let p = expand_pseudo(&d, &[1, 1]).unwrap();
        assert_eq!(collapse(&p), d.matrix);
    }

    #[test]
    fn swap_fixes_duplicate_column() {
        // The alternating path moves the duplicate out of column 0 and pulls
        // the displaced value back: exactly one swap in row 0.
        let mut m = vec![vec![0, 1], vec![0, 2]];
        let paths = swap_columns_traced(&mut m, 3).unwrap();
        assert_eq!(m, vec![vec![1, 0], vec![0, 2]]);
        assert_eq!(paths, vec![0]);
        assert_eq!(badness(&m, 3), 0);
    }

    #[test]
    fn discretized_engine_output_row_counts_match() {
        use crate::divisible::{preprocessed_instance, run_divisible};
        use crate::model::{AuctionInstance, Bidder, Mode, Slot, Valuation};
        use std::collections::BTreeSet;
        let inst = AuctionInstance {
            mode: Mode::Divisible,
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
            rounds: 1,
        };
        let (alloc, _) = run_divisible(&inst).unwrap();
        let pre = preprocessed_instance(&inst);
        let d = discretize(&alloc, DEFAULT_LAMBDA_CAP).unwrap();
        // Each row contains bidder i exactly y_{i,j} = λ·x_{i,j} times.
        for j in 0..pre.m() {
            for i in 0..pre.n() {
                let count = d.matrix[j].iter().filter(|&&b| b == i).count() as u64;
                assert_eq!(count, d.counts[i][j]);
                assert_eq!(rat_u(count), &alloc.x[i][j] * rat_u(d.lambda));
            }
        }
    }

    #[test]
    fn swap_leaves_clean_matrix_alone() {
        let mut m = vec![vec![0, 1], vec![1, 0]];
        let before = m.clone();
        swap_columns(&mut m, 2).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let cols = vec![vec![0, 1], vec![1, 0]];
        let a = sample_rounds(&cols, 2, 5, 42, vec![Rat::zero(), Rat::zero()]);
        let b = sample_rounds(&cols, 2, 5, 42, vec![Rat::zero(), Rat::zero()]);
        assert_eq!(a, b);
        let c = sample_rounds(&cols, 2, 5, 43, vec![Rat::zero(), Rat::zero()]);
        assert!(c.assignment != a.assignment || c.seed != a.seed);
    }

    #[test]
    fn single_column_sampling_is_constant() {
        let cols = vec![vec![0], vec![1]];
        let a = sample_rounds(&cols, 2, 4, 7, vec![Rat::zero(), Rat::zero()]);
        assert_eq!(a.assignment, vec![vec![1; 4], vec![2; 4]]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]
            // Swapping preserves every row's value multiset and ends with
            // every value column-unique, for any matrix where each value
            // fits its column budget.
            #[test]
            fn swap_postconditions(
                rows in 1usize..5,
                cols in 1usize..5,
                seed in proptest::collection::vec(0usize..64, 20),
            ) {
                let values = rows * 2;
                let mut quota = vec![cols; values];
                let mut cells = Vec::new();
                let mut k = 0;
                for _ in 0..rows * cols {
                    let candidates: Vec<usize> =
                        (0..values).filter(|&v| quota[v] > 0).collect();
                    let v = candidates[seed[k % seed.len()] % candidates.len()];
                    k += 1;
                    quota[v] -= 1;
                    cells.push(v);
                }
                let mut matrix: Vec<Vec<usize>> =
                    cells.chunks(cols).map(<[usize]>::to_vec).collect();
                let before = matrix.clone();
                swap_columns(&mut matrix, values).unwrap();
                prop_assert_eq!(badness(&matrix, values), 0);
                for (a, b) in before.iter().zip(&matrix) {
                    let mut a = a.clone();
                    let mut b = b.clone();
                    a.sort_unstable();
                    b.sort_unstable();
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
