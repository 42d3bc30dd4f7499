//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `minimize cᵀx  s.t.  A x ≤ b,  x ≥ 0` on a full tableau. Intended for the
//! small problems of [`crate::nonparam`]; Bland's rule rules out cycling on the heavily
//! degenerate Lipschitz-constraint systems that arise there.

use crate::error::{check_dim, Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// `minimize cᵀx  s.t.  A x ≤ b,  x ≥ 0` with `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Nonnegative row multipliers `w` with `c + Aᵀw ≥ 0` and `cᵀx* = −bᵀw`.
    pub multipliers: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    objective: f64,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn n_rows(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let piv = self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.n_rows() {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                let row = &mut self.data[r * w..(r + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.reduced[pc];
        if f != 0.0 {
            for (v, p) in self.reduced.iter_mut().zip(&pivot_row[..w - 1]) {
                *v -= f * p;
            }
            self.reduced[pc] = 0.0;
            self.objective -= f * pivot_row[w - 1];
        }
        self.basis[pr] = pc;
    }

    /// Bland's rule iterations until optimal. `allowed(j)` filters entering columns.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool, max_pivots: usize, pivots: &mut usize) -> Result<()> {
        loop {
            let entering = (0..self.width - 1).find(|&j| allowed(j) && self.reduced[j] < -PIVOT_TOL);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.n_rows() {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - PIVOT_TOL
                                || (ratio <= bv + PIVOT_TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((pr, _)) = best else {
                return Err(Error::Solver("linear program is unbounded".into()));
            };
            self.pivot(pr, pc);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::Solver(format!(
                    "simplex exceeded {max_pivots} pivots (objective {})",
                    -self.objective
                )));
            }
        }
    }
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("rhs length vs rows", self.rows.len(), self.rhs.len())?;
        for row in &self.rows {
            check_dim("constraint row width", self.n_vars(), row.len())?;
        }
        let all = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .chain(self.rows.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::input("linear program has non-finite coefficients"));
        }
        Ok(())
    }

    /// Largest violation of `A x ≤ b` and `x ≥ 0`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().zip(&self.rhs).map(|(row, b)| {
            row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b
        });
        let bounds = x.iter().map(|v| -v);
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn solve(&self, max_pivots: usize) -> Result<LpSolution> {
        self.validate()?;
        let n = self.n_vars();
        let r = self.rows.len();
        let flipped: Vec<bool> = self.rhs.iter().map(|&b| b < 0.0).collect();
        let n_art = flipped.iter().filter(|&&f| f).count();
        let slack0 = n;
        let art0 = n + r;
        let width = n + r + n_art + 1;
        let mut data = vec![0.0; r * width];
        let mut basis = vec![0; r];
        let mut art = art0;
        for i in 0..r {
            let sign = if flipped[i] { -1.0 } else { 1.0 };
            let row = &mut data[i * width..(i + 1) * width];
            for j in 0..n {
                row[j] = sign * self.rows[i][j];
            }
            row[slack0 + i] = sign;
            row[width - 1] = sign * self.rhs[i];
            if flipped[i] {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = slack0 + i;
            }
        }
        let mut t = Tableau {
            width,
            data,
            basis,
            reduced: vec![0.0; width - 1],
            objective: 0.0,
        };
        let mut pivots = 0;

        if n_art > 0 {
            // Phase 1: minimise the sum of artificials.
            for j in art0..art0 + n_art {
                t.reduced[j] = 1.0;
            }
            for i in 0..r {
                if t.basis[i] >= art0 {
                    for j in 0..width - 1 {
                        t.reduced[j] -= t.at(i, j);
                    }
                    t.objective -= t.rhs(i);
                }
            }
            t.optimize(|_| true, max_pivots, &mut pivots)?;
            if -t.objective > FEAS_TOL {
                return Err(Error::Solver(format!(
                    "linear program is infeasible (phase-one residual {})",
                    -t.objective
                )));
            }
            // Drive remaining zero-level artificials out of the basis where possible.
            for i in 0..r {
                if t.basis[i] >= art0 {
                    if let Some(j) = (0..art0).find(|&j| t.at(i, j).abs() > 1e-9) {
                        t.pivot(i, j);
                        pivots += 1;
                    }
                }
            }
        }

        // Phase 2.
        t.reduced = vec![0.0; width - 1];
        t.reduced[..n].copy_from_slice(&self.objective);
        t.objective = 0.0;
        for i in 0..r {
            let cb = if t.basis[i] < n { self.objective[t.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..width - 1 {
                    t.reduced[j] -= cb * t.at(i, j);
                }
                t.objective -= cb * t.rhs(i);
            }
        }
        t.optimize(|j| j < art0, max_pivots, &mut pivots)?;

        let mut x = vec![0.0; n];
        for i in 0..r {
            if t.basis[i] < n {
                x[t.basis[i]] = t.rhs(i);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let multipliers = (0..r).map(|i| t.reduced[slack0 + i].max(0.0)).collect();
        Ok(LpSolution {
            x,
            objective,
            multipliers,
            pivots,
        })
    }

    /// Solves through the dual `min bᵀw  s.t. −Aᵀw ≤ c, w ≥ 0`, whose origin is feasible
    /// when `c ≥ 0`, and recovers the primal optimum from the dual's row multipliers.
    ///
    /// Preferable when there are far more rows than variables: the dual tableau has one
    /// row per primal variable.
    pub fn solve_via_dual(&self, max_pivots: usize) -> Result<LpSolution> {
        self.validate()?;
        if self.objective.iter().any(|&c| c < 0.0) {
            return Err(Error::input("dual route needs a nonnegative objective"));
        }
        let n = self.n_vars();
        let dual = LinearProgram {
            objective: self.rhs.clone(),
            rows: (0..n)
                .map(|j| self.rows.iter().map(|row| -row[j]).collect())
                .collect(),
            rhs: self.objective.clone(),
        };
        let d = dual.solve(max_pivots)?;
        let x = d.multipliers;
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            multipliers: d.x,
            pivots: d.pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  →  (2, 6), 36.
        let lp = LinearProgram {
            objective: vec![-3.0, -5.0],
            rows: vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            rhs: vec![4.0, 12.0, 18.0],
        };
        let s = lp.solve(100).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective + 36.0).abs() < 1e-12);
        let dual_obj: f64 = -lp.rhs.iter().zip(&s.multipliers).map(|(b, w)| b * w).sum::<f64>();
        assert!((dual_obj - s.objective).abs() < 1e-12);
    }

    #[test]
    fn phase_one_with_negative_rhs() {
        // min x + y s.t. x + y ≥ 2 (−x − y ≤ −2), x ≤ 3  →  objective 2.
        let lp = LinearProgram {
            objective: vec![1.0, 1.0],
            rows: vec![vec![-1.0, -1.0], vec![1.0, 0.0]],
            rhs: vec![-2.0, 3.0],
        };
        let s = lp.solve(100).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-12);
        let d = lp.solve_via_dual(100).unwrap();
        assert!((d.objective - 2.0).abs() < 1e-12);
        assert!(lp.max_violation(&d.x) < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = LinearProgram {
            objective: vec![1.0],
            rows: vec![vec![1.0], vec![-1.0]],
            rhs: vec![1.0, -2.0],
        };
        assert!(matches!(infeasible.solve(100), Err(Error::Solver(_))));
        let unbounded = LinearProgram {
            objective: vec![-1.0],
            rows: vec![vec![-1.0]],
            rhs: vec![0.0],
        };
        assert!(matches!(unbounded.solve(100), Err(Error::Solver(_))));
    }

    #[test]
    fn redundant_rows_are_handled() {
        // x = y forced twice over, min −x with x ≤ 1.
        let lp = LinearProgram {
            objective: vec![-1.0, 0.0],
            rows: vec![
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, 0.0],
            ],
            rhs: vec![0.0, 0.0, 0.0, 0.0, 1.0],
        };
        let s = lp.solve(100).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-12);
        assert!((s.x[1] - 1.0).abs() < 1e-12);
    }
}
