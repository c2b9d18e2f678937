//! Exact linear programming over rationals.
//!
//! A two-phase dense-tableau simplex with Bland's smallest-index pivot rule.
//! Every returned solution is a basic feasible solution, i.e. a vertex of the
//! constraint polytope, which is exactly what the clinch computation needs.
//! All arithmetic is exact; a returned point satisfies each constraint with
//! zero residual.

use num_traits::{One, Signed, Zero};

use crate::error::EngineError;
use crate::model::{Bidder, DivisibleAllocation, Slot};
use crate::rational::{rat_u, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Dense coefficient row over the structural variables.
    pub coeffs: Vec<Rat>,
    pub cmp: Cmp,
    pub rhs: Rat,
}

/// `minimize objective·x  s.t.  constraints, x ≥ 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<Rat>,
    pub constraints: Vec<Constraint>,
}

/// An optimal basic feasible solution.
#[derive(Debug, Clone)]
pub struct VertexSolution {
    /// Values of the structural variables.
    pub values: Vec<Rat>,
    pub objective: Rat,
    /// Indices of the basic variables (structural and slack) of the
    /// terminal simplex basis.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(VertexSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// rows[r][0..cols] coefficients, rows[r][cols] = rhs.
    rows: Vec<Vec<Rat>>,
    cost: Vec<Rat>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col].clone();
        debug_assert!(!piv.is_zero());
        for v in self.rows[row].iter_mut() {
            *v /= &piv;
        }
        let pivot_row = self.rows[row].clone();
        for (r, other) in self.rows.iter_mut().enumerate() {
            if r == row || other[col].is_zero() {
                continue;
            }
            let factor = other[col].clone();
            for (v, p) in other.iter_mut().zip(&pivot_row) {
                *v -= &factor * p;
            }
        }
        if !self.cost[col].is_zero() {
            let factor = self.cost[col].clone();
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= &factor * p;
            }
        }
        self.basis[row] = col;
    }

    fn dump(&self, label: &str, out: &mut String) {
        use std::fmt::Write;
        let _ = writeln!(out, "-- {label} (basis {:?})", self.basis);
        let _ = writeln!(
            out,
            "cost: {}",
            self.cost
                .iter()
                .map(crate::rational::fmt_rat)
                .collect::<Vec<_>>()
                .join(" ")
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "     {}",
                row.iter()
                    .map(crate::rational::fmt_rat)
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
    }

    /// Run Bland-rule simplex on columns `0..active_cols`.
    /// Returns false if unbounded.
    fn run(&mut self, active_cols: usize, log: &mut Option<&mut String>) -> bool {
        if let Some(out) = log.as_deref_mut() {
            self.dump("start", out);
        }
        loop {
            // Entering: smallest-index column with negative reduced cost.
            let entering = (0..active_cols).find(|&j| self.cost[j].is_negative());
            let Some(col) = entering else { return true };
            // Leaving: minimum ratio; ties by smallest basic variable index.
            let mut best: Option<(Rat, usize, usize)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][col];
                if a.is_positive() {
                    let ratio = &self.rows[r][self.cols] / a;
                    let better = match &best {
                        None => true,
                        Some((bratio, bvar, _)) => {
                            ratio < *bratio || (ratio == *bratio && self.basis[r] < *bvar)
                        }
                    };
                    if better {
                        best = Some((ratio, self.basis[r], r));
                    }
                }
            }
            match best {
                Some((_, _, row)) => {
                    self.pivot(row, col);
                    if let Some(out) = log.as_deref_mut() {
                        self.dump(&format!("pivot col {col} row {row}"), out);
                    }
                }
                None => return false,
            }
        }
    }
}

/// Solve `lp` to an optimal vertex with the two-phase simplex.
pub fn solve(lp: &LinearProgram) -> LpOutcome {
    solve_with_log(lp, None)
}

/// Like [`solve`], dumping each pivot's tableau into `log` for debugging.
/// The format is unstable and meant for eyeballs only.
pub fn solve_with_log(lp: &LinearProgram, mut log: Option<&mut String>) -> LpOutcome {
    let n = lp.num_vars;
    debug_assert!(lp.objective.len() == n);
    debug_assert!(lp.constraints.iter().all(|c| c.coeffs.len() == n));

    // Standard form: normalize rhs ≥ 0, add slack/surplus columns, then
    // artificial columns for rows lacking an initial basic variable.
    let num_slacks = lp.constraints.iter().filter(|c| c.cmp != Cmp::Eq).count();
    let main_cols = n + num_slacks;
    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(lp.constraints.len());
    let mut basis: Vec<usize> = Vec::with_capacity(lp.constraints.len());
    let mut needs_artificial: Vec<usize> = Vec::new();
    let mut slack_at = n;
    for c in &lp.constraints {
        let flip = c.rhs.is_negative();
        let sign = if flip { -Rat::one() } else { Rat::one() };
        let cmp = match (c.cmp, flip) {
            (Cmp::Eq, _) => Cmp::Eq,
            (Cmp::Le, false) | (Cmp::Ge, true) => Cmp::Le,
            (Cmp::Ge, false) | (Cmp::Le, true) => Cmp::Ge,
        };
        let mut row = vec![Rat::zero(); main_cols + 1];
        for (j, v) in c.coeffs.iter().enumerate() {
            row[j] = v * &sign;
        }
        row[main_cols] = &c.rhs * &sign;
        match cmp {
            Cmp::Le => {
                row[slack_at] = Rat::one();
                basis.push(slack_at);
                slack_at += 1;
            }
            Cmp::Ge => {
                row[slack_at] = -Rat::one();
                slack_at += 1;
                basis.push(usize::MAX); // artificial, assigned below
                needs_artificial.push(rows.len());
            }
            Cmp::Eq => {
                basis.push(usize::MAX);
                needs_artificial.push(rows.len());
            }
        }
        rows.push(row);
    }
    let num_art = needs_artificial.len();
    let total_cols = main_cols + num_art;
    for row in rows.iter_mut() {
        let rhs = row.pop().unwrap();
        row.extend(std::iter::repeat_with(Rat::zero).take(num_art));
        row.push(rhs);
    }
    for (k, &r) in needs_artificial.iter().enumerate() {
        rows[r][main_cols + k] = Rat::one();
        basis[r] = main_cols + k;
    }

    // Phase 1: minimize the sum of artificials. Canonical cost row is
    // -(sum of artificial rows) on non-artificial columns.
    let mut cost = vec![Rat::zero(); total_cols + 1];
    for j in main_cols..total_cols {
        cost[j] = Rat::one();
    }
    let mut tab = Tableau {
        rows,
        cost,
        basis,
        cols: total_cols,
    };
    for r in 0..tab.rows.len() {
        if tab.basis[r] >= main_cols {
            let row = tab.rows[r].clone();
            for (v, p) in tab.cost.iter_mut().zip(&row) {
                *v -= p;
            }
        }
    }
    if num_art > 0 {
        tab.run(total_cols, &mut log);
        // cost rhs = -(phase-1 objective)
        if tab.cost[total_cols].is_negative() {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials (basic at zero) out of the basis, or
        // drop their rows when redundant.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= main_cols {
                match (0..main_cols).find(|&j| !tab.rows[r][j].is_zero()) {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.rows.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    // Phase 2: drop artificial columns and install the real objective.
    for row in tab.rows.iter_mut() {
        let rhs = row[total_cols].clone();
        row.truncate(main_cols);
        row.push(rhs);
    }
    let mut cost = vec![Rat::zero(); main_cols + 1];
    cost[..n].clone_from_slice(&lp.objective);
    tab.cost = cost;
    tab.cols = main_cols;
    for r in 0..tab.rows.len() {
        let b = tab.basis[r];
        if !tab.cost[b].is_zero() {
            let factor = tab.cost[b].clone();
            let row = tab.rows[r].clone();
            for (v, p) in tab.cost.iter_mut().zip(&row) {
                *v -= &factor * p;
            }
        }
    }
    if !tab.run(main_cols, &mut log) {
        return LpOutcome::Unbounded;
    }

    let mut values = vec![Rat::zero(); main_cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        values[b] = tab.rows[r][main_cols].clone();
    }
    let objective = lp
        .objective
        .iter()
        .zip(&values)
        .fold(Rat::zero(), |acc, (c, v)| acc + c * v);
    debug_assert!(check_residuals(lp, &values[..n]));
    LpOutcome::Optimal(VertexSolution {
        values: values[..n].to_vec(),
        objective,
        basis: tab.basis.clone(),
    })
}

/// Exact residual check: every constraint holds with rational equality or
/// inequality, and all variables are non-negative.
pub fn check_residuals(lp: &LinearProgram, values: &[Rat]) -> bool {
    if values.iter().any(|v| v.is_negative()) {
        return false;
    }
    lp.constraints.iter().all(|c| {
        let lhs = c
            .coeffs
            .iter()
            .zip(values)
            .fold(Rat::zero(), |acc, (a, v)| acc + a * v);
        match c.cmp {
            Cmp::Le => lhs <= c.rhs,
            Cmp::Ge => lhs >= c.rhs,
            Cmp::Eq => lhs == c.rhs,
        }
    })
}

/// The linear program solved to determine how much the designated bidder
/// clinches: minimize γ_{i′} subject to full assignment (a), exact demand
/// caps (b), capacity accounting (c), demand bounds (d), non-negativity.
#[derive(Debug, Clone)]
pub struct SellLp {
    /// Slot qualities α_j of the preprocessed slot set.
    pub qualities: Vec<Rat>,
    /// Demand caps κ_i.
    pub demand_caps: Vec<usize>,
    /// Weighted capacity c_i clinched so far.
    pub capacities: Vec<Rat>,
    /// Demand bounds d_i.
    pub demands: Vec<Rat>,
    /// The bidder i′ whose clinch is being computed (0-based).
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct SellOutcome {
    /// The vertex assignment X, `assignment[i][j]`.
    pub assignment: Vec<Vec<Rat>>,
    /// All γ_i values.
    pub gammas: Vec<Rat>,
    /// The clinched amount s = γ_{i′}.
    pub clinched: Rat,
}

impl SellLp {
    pub fn n(&self) -> usize {
        self.demand_caps.len()
    }

    pub fn m(&self) -> usize {
        self.qualities.len()
    }

    /// Variable layout: x_{i,j} at `i·m + j`, γ_i at `n·m + i`.
    pub fn to_lp(&self) -> LinearProgram {
        let (n, m) = (self.n(), self.m());
        let nv = n * m + n;
        let mut constraints = Vec::with_capacity(m + 3 * n);
        // (a) each slot fully assigned
        for j in 0..m {
            let mut coeffs = vec![Rat::zero(); nv];
            for i in 0..n {
                coeffs[i * m + j] = Rat::one();
            }
            constraints.push(Constraint {
                coeffs,
                cmp: Cmp::Eq,
                rhs: Rat::one(),
            });
        }
        // (b) each bidder's slot count equals the demand cap
        for i in 0..n {
            let mut coeffs = vec![Rat::zero(); nv];
            for j in 0..m {
                coeffs[i * m + j] = Rat::one();
            }
            constraints.push(Constraint {
                coeffs,
                cmp: Cmp::Eq,
                rhs: rat_u(self.demand_caps[i] as u64),
            });
        }
        // (c) capacity accounting: Σ_j α_j x_{i,j} − γ_i = c_i
        for i in 0..n {
            let mut coeffs = vec![Rat::zero(); nv];
            for j in 0..m {
                coeffs[i * m + j] = self.qualities[j].clone();
            }
            coeffs[n * m + i] = -Rat::one();
            constraints.push(Constraint {
                coeffs,
                cmp: Cmp::Eq,
                rhs: self.capacities[i].clone(),
            });
        }
        // (d) γ_i ≤ d_i
        for i in 0..n {
            let mut coeffs = vec![Rat::zero(); nv];
            coeffs[n * m + i] = Rat::one();
            constraints.push(Constraint {
                coeffs,
                cmp: Cmp::Le,
                rhs: self.demands[i].clone(),
            });
        }
        let mut objective = vec![Rat::zero(); nv];
        objective[n * m + self.target] = Rat::one();
        LinearProgram {
            num_vars: nv,
            objective,
            constraints,
        }
    }
}

/// Solve a clinch LP. Infeasibility means the auction state broke its
/// inductive feasibility invariant, which is an engine bug, not user error.
pub fn solve_sell_lp(sell: &SellLp) -> Result<SellOutcome, EngineError> {
    let (n, m) = (sell.n(), sell.m());
    match solve(&sell.to_lp()) {
        LpOutcome::Optimal(sol) => {
            let assignment = (0..n)
                .map(|i| sol.values[i * m..(i + 1) * m].to_vec())
                .collect();
            let gammas: Vec<Rat> = (0..n).map(|i| sol.values[n * m + i].clone()).collect();
            let clinched = gammas[sell.target].clone();
            Ok(SellOutcome {
                assignment,
                gammas,
                clinched,
            })
        }
        LpOutcome::Infeasible => Err(EngineError::invariant(
            "clinch linear program infeasible; auction state violates its feasibility invariant",
        )),
        LpOutcome::Unbounded => Err(EngineError::invariant(
            "clinch linear program unbounded; constraints are malformed",
        )),
    }
}

/// A Pareto improvement found by the improvement linear program.
#[derive(Debug, Clone)]
pub struct Improvement {
    pub gain: Rat,
    /// An improving allocation when `gain > 0`.
    pub better: Option<DivisibleAllocation>,
}

/// Independent Pareto oracle for divisible allocations: maximize the total
/// utility gain of bidders and auctioneer over all legal allocations that
/// leave every participant at least as well off. Returns gain 0 iff no
/// Pareto improvement exists.
///
/// Payments range over (−∞, b_i]: legality bounds payments by budgets only,
/// and improving trades may compensate a bidder below zero. Encoded with
/// q_i := b_i − p′_i ≥ 0 so the program stays in standard form.
pub fn solve_improvement_lp(
    bidders: &[Bidder],
    slots: &[Slot],
    alloc: &DivisibleAllocation,
) -> Result<Improvement, EngineError> {
    let n = bidders.len();
    let m = slots.len();
    let valuations: Vec<u64> = bidders
        .iter()
        .map(|b| {
            b.valuation
                .flat()
                .expect("divisible instances have flat valuations")
        })
        .collect();
    let capacities = alloc.capacities(slots);
    let utilities: Vec<Rat> = (0..n)
        .map(|i| &capacities[i] * rat_u(valuations[i]) - &alloc.payments[i])
        .collect();
    let revenue: Rat = alloc.payments.iter().fold(Rat::zero(), |acc, p| acc + p);
    let total_budget: Rat = bidders.iter().fold(Rat::zero(), |acc, b| acc + &b.budget);

    // Variables: x′_{i,j} at i·m+j, q_i at n·m+i.
    let nv = n * m + n;
    let mut constraints = Vec::new();
    for j in 0..m {
        let mut coeffs = vec![Rat::zero(); nv];
        for i in 0..n {
            coeffs[i * m + j] = Rat::one();
        }
        constraints.push(Constraint {
            coeffs,
            cmp: Cmp::Eq,
            rhs: Rat::one(),
        });
    }
    for i in 0..n {
        let mut coeffs = vec![Rat::zero(); nv];
        for j in 0..m {
            coeffs[i * m + j] = Rat::one();
        }
        constraints.push(Constraint {
            coeffs,
            cmp: Cmp::Le,
            rhs: rat_u(bidders[i].demand_cap as u64),
        });
    }
    // Bidder i keeps at least the current utility:
    //   Σ_j α_j v_i x′_{i,j} − p′_i ≥ u_i  ⇔  Σ_j α_j v_i x′_{i,j} + q_i ≥ u_i + b_i
    for i in 0..n {
        let mut coeffs = vec![Rat::zero(); nv];
        for j in 0..m {
            coeffs[i * m + j] = &slots[j].quality * rat_u(valuations[i]);
        }
        coeffs[n * m + i] = Rat::one();
        constraints.push(Constraint {
            coeffs,
            cmp: Cmp::Ge,
            rhs: &utilities[i] + &bidders[i].budget,
        });
    }
    // Auctioneer keeps at least the current revenue: Σ q_i ≤ Σ b_i − rev.
    {
        let mut coeffs = vec![Rat::zero(); nv];
        for i in 0..n {
            coeffs[n * m + i] = Rat::one();
        }
        constraints.push(Constraint {
            coeffs,
            cmp: Cmp::Le,
            rhs: &total_budget - &revenue,
        });
    }
    // Total gain = Σ_i c′_i v_i − (Σ u_i + rev); payments cancel, so maximize
    // the welfare term (minimize its negation).
    let mut objective = vec![Rat::zero(); nv];
    for i in 0..n {
        for j in 0..m {
            objective[i * m + j] = -(&slots[j].quality * rat_u(valuations[i]));
        }
    }
    let lp = LinearProgram {
        num_vars: nv,
        objective,
        constraints,
    };
    match solve(&lp) {
        LpOutcome::Optimal(sol) => {
            let base: Rat = utilities.iter().fold(Rat::zero(), |acc, u| acc + u) + &revenue;
            let gain = -sol.objective - base;
            let better = if gain.is_positive() {
                let x = (0..n)
                    .map(|i| sol.values[i * m..(i + 1) * m].to_vec())
                    .collect();
                let payments = (0..n)
                    .map(|i| &bidders[i].budget - &sol.values[n * m + i])
                    .collect();
                Some(DivisibleAllocation { x, payments })
            } else {
                None
            };
            Ok(Improvement { gain, better })
        }
        LpOutcome::Infeasible => Err(EngineError::invariant(
            "improvement linear program infeasible although the current allocation is feasible",
        )),
        LpOutcome::Unbounded => Err(EngineError::invariant(
            "improvement linear program unbounded",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Valuation;
    use crate::rational::{rat, rat_int};
    use std::collections::BTreeSet;

    fn lp_min(
        num_vars: usize,
        objective: Vec<Rat>,
        constraints: Vec<(Vec<Rat>, Cmp, Rat)>,
    ) -> LinearProgram {
        LinearProgram {
            num_vars,
            objective,
            constraints: constraints
                .into_iter()
                .map(|(coeffs, cmp, rhs)| Constraint { coeffs, cmp, rhs })
                .collect(),
        }
    }

    #[test]
    fn tiny_lp_optimum() {
        // min -x - y  s.t. x + y ≤ 3, x ≤ 2, y ≤ 2
        let lp = lp_min(
            2,
            vec![rat_int(-1), rat_int(-1)],
            vec![
                (vec![rat_u(1), rat_u(1)], Cmp::Le, rat_u(3)),
                (vec![rat_u(1), rat_u(0)], Cmp::Le, rat_u(2)),
                (vec![rat_u(0), rat_u(1)], Cmp::Le, rat_u(2)),
            ],
        );
        let LpOutcomeOptimal(sol) = outcome(solve(&lp));
        assert_eq!(sol.objective, rat_int(-3));
    }

    struct LpOutcomeOptimal(VertexSolution);
    fn outcome(o: LpOutcome) -> LpOutcomeOptimal {
        match o {
            LpOutcome::Optimal(s) => LpOutcomeOptimal(s),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        // x ≥ 2 and x ≤ 1
        let lp = lp_min(
            1,
            vec![rat_u(1)],
            vec![
                (vec![rat_u(1)], Cmp::Ge, rat_u(2)),
                (vec![rat_u(1)], Cmp::Le, rat_u(1)),
            ],
        );
        assert!(matches!(solve(&lp), LpOutcome::Infeasible));
    }

    #[test]
    fn unbounded_detected() {
        let lp = lp_min(
            1,
            vec![rat_int(-1)],
            vec![(vec![rat_u(1)], Cmp::Ge, rat_u(1))],
        );
        assert!(matches!(solve(&lp), LpOutcome::Unbounded));
    }

    #[test]
    fn redundant_equalities_handled() {
        // x + y = 2 stated twice, minimize x.
        let lp = lp_min(
            2,
            vec![rat_u(1), rat_u(0)],
            vec![
                (vec![rat_u(1), rat_u(1)], Cmp::Eq, rat_u(2)),
                (vec![rat_u(1), rat_u(1)], Cmp::Eq, rat_u(2)),
            ],
        );
        let LpOutcomeOptimal(sol) = outcome(solve(&lp));
        assert_eq!(sol.objective, Rat::zero());
        assert_eq!(sol.values[1], rat_u(2));
    }

    #[test]
    fn negative_rhs_normalized() {
        // -x ≤ -1 ⇔ x ≥ 1
        let lp = lp_min(
            1,
            vec![rat_u(1)],
            vec![(vec![rat_int(-1)], Cmp::Le, rat_int(-1))],
        );
        let LpOutcomeOptimal(sol) = outcome(solve(&lp));
        assert_eq!(sol.values[0], rat_u(1));
    }

    fn sell_two_bidders(demands: [Rat; 2]) -> SellLp {
        SellLp {
            qualities: vec![rat_u(1), rat_u(0)],
            demand_caps: vec![1, 1],
            capacities: vec![Rat::zero(), Rat::zero()],
            demands: demands.to_vec(),
            target: 0,
        }
    }

    #[test]
    fn sell_lp_avoids_when_competitor_absorbs() {
        // Competitor demand slack: bidder 1 can take the dummy slot, γ_1 = 0.
        let sell = sell_two_bidders([rat_u(100), rat_u(100)]);
        let out = solve_sell_lp(&sell).unwrap();
        assert_eq!(out.clinched, Rat::zero());
    }

    #[test]
    fn sell_lp_forces_clinch_when_competitor_capped() {
        // d_2 = 0 forces bidder 1 onto the real slot: γ_1 = 1.
        let sell = sell_two_bidders([rat_u(100), Rat::zero()]);
        let out = solve_sell_lp(&sell).unwrap();
        assert_eq!(out.clinched, rat_u(1));
        assert_eq!(out.assignment[0][0], rat_u(1));
    }

    #[test]
    fn sell_lp_solution_is_exact() {
        let sell = SellLp {
            qualities: vec![rat_u(4), rat_u(2), rat_u(1), rat_u(0)],
            demand_caps: vec![2, 2],
            capacities: vec![rat_u(1), Rat::zero()],
            demands: vec![rat(7, 3), rat(11, 2)],
            target: 1,
        };
        let lp = sell.to_lp();
        let LpOutcomeOptimal(sol) = outcome(solve(&lp));
        assert!(check_residuals(&lp, &sol.values));
    }

    fn improvement_case(
        valuations: [u64; 2],
        budgets: [Rat; 2],
        x: Vec<Vec<Rat>>,
        payments: Vec<Rat>,
    ) -> Improvement {
        let bidders: Vec<Bidder> = (0..2)
            .map(|i| Bidder {
                id: i + 1,
                valuation: Valuation::Flat(valuations[i]),
                budget: budgets[i].clone(),
                demand_cap: 1,
                interest: BTreeSet::new(),
            })
            .collect();
        let slots = vec![Slot {
            id: 1,
            quality: rat_u(1),
        }];
        solve_improvement_lp(&bidders, &slots, &DivisibleAllocation { x, payments }).unwrap()
    }

    #[test]
    fn improvement_zero_for_high_bidder_sale() {
        // Item to bidder 2 at p = 1 with v = (1,2), b = (1,1): optimal.
        let imp = improvement_case(
            [1, 2],
            [rat_u(1), rat_u(1)],
            vec![vec![Rat::zero()], vec![rat_u(1)]],
            vec![Rat::zero(), rat_u(1)],
        );
        assert_eq!(imp.gain, Rat::zero());
        assert!(imp.better.is_none());
    }

    #[test]
    fn improvement_sees_fractional_trades_budget_blocks_integral_ones() {
        // Item to the low bidder with v=(1,2), b=(1,1/2): the whole-item
        // trade is budget-blocked (the indivisible verdict is optimal), but
        // the divisible relaxation still gains 1/2 by selling half the item
        // to bidder 2 at half the price.
        let imp = improvement_case(
            [1, 2],
            [rat_u(1), rat(1, 2)],
            vec![vec![rat_u(1)], vec![Rat::zero()]],
            vec![rat_u(1), Rat::zero()],
        );
        assert_eq!(imp.gain, rat(1, 2));
    }

    #[test]
    fn tableau_log_captures_pivots() {
        let lp = lp_min(
            2,
            vec![rat_int(-1), rat_int(-1)],
            vec![(vec![rat_u(1), rat_u(1)], Cmp::Le, rat_u(3))],
        );
        let mut log = String::new();
        let outcome = solve_with_log(&lp, Some(&mut log));
        assert!(matches!(outcome, LpOutcome::Optimal(_)));
        assert!(log.contains("pivot"), "{log}");
        assert!(log.contains("cost:"), "{log}");
    }

    #[test]
    fn improvement_found_for_misordered_sale() {
        // Item to the low bidder with ample budgets: a trade gains surplus.
        let imp = improvement_case(
            [1, 2],
            [rat_u(1), rat_u(2)],
            vec![vec![rat_u(1)], vec![Rat::zero()]],
            vec![rat_u(1), Rat::zero()],
        );
        assert_eq!(imp.gain, rat_u(1));
        let better = imp.better.unwrap();
        assert_eq!(better.x[1][0], rat_u(1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_rat() -> impl Strategy<Value = Rat> {
            (-6i64..=6, 1i64..=3).prop_map(|(n, d)| rat(n, d))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            // Whatever the simplex returns satisfies every constraint with
            // exact rational residuals, and Bland's rule terminated to get
            // there (no cycling on any sampled program).
            #[test]
            fn solutions_satisfy_constraints_exactly(
                objective in proptest::collection::vec(small_rat(), 3),
                rows in proptest::collection::vec(
                    (proptest::collection::vec(small_rat(), 3), 0u8..3, small_rat()),
                    1..5,
                ),
            ) {
                let lp = LinearProgram {
                    num_vars: 3,
                    objective,
                    constraints: rows
                        .into_iter()
                        .map(|(coeffs, cmp, rhs)| Constraint {
                            coeffs,
                            cmp: match cmp {
                                0 => Cmp::Le,
                                1 => Cmp::Ge,
                                _ => Cmp::Eq,
                            },
                            rhs,
                        })
                        .collect(),
                };
                if let LpOutcome::Optimal(sol) = solve(&lp) {
                    prop_assert!(check_residuals(&lp, &sol.values));
                }
            }
        }
    }
}
