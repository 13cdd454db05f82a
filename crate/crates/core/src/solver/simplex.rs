//! Dense two-phase simplex for `min cᵀx  s.t.  A x = b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule (lowest eligible index for both the entering
//! and leaving variable), so the method cannot cycle. Problems here are tiny
//! (six rows, a few dozen columns), so a full tableau is fine.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    /// Phase one ended with a positive artificial sum.
    Infeasible { phase_one_objective: f64 },
    Unbounded,
}

impl LpOutcome {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, LpOutcome::Infeasible { .. })
    }
}

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let width = self.t.ncols();
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        for r in 0..self.t.nrows() {
            if r == row {
                continue;
            }
            let factor = self.t[(r, col)];
            if factor != 0.0 {
                for j in 0..width {
                    let v = self.t[(row, j)];
                    self.t[(r, j)] -= factor * v;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Minimises `cost·x` over the columns allowed by `eligible`.
    /// Returns false when the problem is unbounded.
    fn optimise(&mut self, cost: &[f64], eligible: usize, tol: f64) -> bool {
        let rows = self.t.nrows();
        let max_pivots = 50 * (rows + eligible).max(1);
        for _ in 0..max_pivots {
            // Reduced cost d_j = c_j - c_B · column_j
            let entering = (0..eligible).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let mut d = cost[j];
                for r in 0..rows {
                    d -= cost[self.basis[r]] * self.t[(r, j)];
                }
                d < -tol
            });
            let Some(col) = entering else {
                return true;
            };
            let rhs = self.rhs_col();
            let mut best: Option<(usize, f64)> = None;
            for r in 0..rows {
                let a = self.t[(r, col)];
                if a > tol {
                    let ratio = self.t[(r, rhs)] / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - tol
                                || ((ratio - bratio).abs() <= tol && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((row, _)) => self.pivot(row, col),
            }
        }
        log::warn!("simplex pivot limit reached");
        true
    }
}

/// Solves the program; `tol` is the feasibility tolerance on the phase-one
/// objective and the pivot threshold.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> LpOutcome {
    let (m, n) = lp.a.shape();
    let mut t = DMatrix::zeros(m, n + m + 1);
    for r in 0..m {
        let sign = if lp.b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(r, j)] = sign * lp.a[(r, j)];
        }
        t[(r, n + r)] = 1.0;
        t[(r, n + m)] = sign * lp.b[r];
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
    };
    let mut phase_one_cost = vec![0.0; n + m];
    for c in phase_one_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    tab.optimise(&phase_one_cost, n + m, tol);
    let rhs = tab.rhs_col();
    let artificial_sum: f64 = (0..m)
        .filter(|&r| tab.basis[r] >= n)
        .map(|r| tab.t[(r, rhs)])
        .sum();
    if artificial_sum > tol {
        return LpOutcome::Infeasible {
            phase_one_objective: artificial_sum,
        };
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < tab.t.nrows() {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| tab.t[(r, j)].abs() > tol) {
                tab.pivot(r, col);
            } else {
                tab.t = tab.t.clone().remove_row(r);
                tab.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }

    let mut cost = vec![0.0; n + m];
    cost[..n].copy_from_slice(lp.c.as_slice());
    if !tab.optimise(&cost, n, tol) {
        return LpOutcome::Unbounded;
    }
    let rhs = tab.rhs_col();
    let mut x = DVector::zeros(n);
    for (row, &var) in tab.basis.iter().enumerate() {
        if var < n {
            x[var] = tab.t[(row, rhs)].max(0.0);
        }
    }
    let objective = lp.c.dot(&x);
    LpOutcome::Optimal { x, objective }
}
