//! Non-parametric optimal loss values.
//!
//! Given `m` real points followed by `m` generated points, the optimal κ-Lipschitz loss
//! restricted to the sample set is the solution `l*` of a linear program:
//!
//! ```text
//! minimize   (1/m) Σ_{i<m} l_i + (λ/m) Σ_{i<m} s_i
//! subject to s_i ≥ Δ(x_i, x_{m+i}) + l_i − l_{m+i},   s_i ≥ 0
//!            |l_i − l_j| ≤ κ Δ(x_i, x_j)              for all pairs
//!            l_i ≥ 0
//! ```
//!
//! From `l*` two closed-form functions extend the loss to the whole space, a lower cone
//! `max_i (l_i − κΔ(x, x_i))₊` and an upper cone `min_i (l_i + κΔ(x, x_i))`; both attain the
//! LP optimum, as does every convex combination of them, and every optimal κ-Lipschitz loss
//! lies between them.

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::MarginSpec;
use crate::rng::{substream, Stream};
use crate::simplex::LinearProgram;

/// On-disk instance layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub points: Vec<Vec<f64>>,
    pub kappa: f64,
    pub lambda: f64,
    pub margin_order: f64,
    #[serde(default = "one")]
    pub margin_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonparamInstance {
    points: Vec<Vec<f64>>,
    kappa: f64,
    lambda: f64,
    margin: MarginSpec,
    delta: Vec<Vec<f64>>,
}

impl NonparamInstance {
    /// `points` holds the `m` real examples followed by the `m` generated samples.
    pub fn new(points: Vec<Vec<f64>>, kappa: f64, lambda: f64, margin: MarginSpec) -> Result<Self> {
        margin.validate()?;
        if points.is_empty() || !points.len().is_multiple_of(2) {
            return Err(Error::input(format!(
                "need 2m points with m >= 1, got {}",
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::input("points must have at least one coordinate"));
        }
        for p in &points {
            check_dim("point dimension", dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("points must be finite"));
            }
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::input("kappa must be positive"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::input("lambda must be nonnegative"));
        }
        let n = points.len();
        let mut delta = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = margin.distance_unchecked(&points[i], &points[j]);
                delta[i][j] = d;
                delta[j][i] = d;
            }
        }
        Ok(NonparamInstance {
            points,
            kappa,
            lambda,
            margin,
            delta,
        })
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let margin = MarginSpec::new(file.margin_order, file.margin_scale)?;
        Self::new(file.points.clone(), file.kappa, file.lambda, margin)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            points: self.points.clone(),
            kappa: self.kappa,
            lambda: self.lambda,
            margin_order: self.margin.p,
            margin_scale: self.margin.scale,
        }
    }

    pub fn m(&self) -> usize {
        self.points.len() / 2
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn margin(&self) -> &MarginSpec {
        &self.margin
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.delta[i][j]
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Empirical objective `S_m` for loss values `values[i]` at the instance points.
    pub fn objective(&self, values: &[f64]) -> f64 {
        let m = self.m();
        let first: f64 = values[..m].iter().sum();
        let hinge: f64 = (0..m)
            .map(|i| (self.delta[i][m + i] + values[i] - values[m + i]).max(0.0))
            .sum();
        first / m as f64 + self.lambda / m as f64 * hinge
    }

    /// `S_m` of an arbitrary loss function evaluated at the instance points.
    pub fn objective_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let values: Vec<f64> = self.points.iter().map(|p| f(p)).collect();
        self.objective(&values)
    }

    /// Largest violation of `l ≥ 0` and of the pairwise κ-Lipschitz constraints.
    pub fn max_violation(&self, l: &[f64]) -> f64 {
        let n = self.points.len();
        let mut worst = l.iter().fold(0.0_f64, |w, v| w.max(-v));
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((l[i] - l[j]).abs() - self.kappa * self.delta[i][j]);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonparamSolution {
    pub l: Vec<f64>,
    pub objective_value: f64,
}

/// The LP with a breakdown of its constraint families.
#[derive(Debug, Clone, PartialEq)]
pub struct LpDescription {
    pub program: LinearProgram,
    pub num_loss_vars: usize,
    pub num_slack_vars: usize,
    pub num_hinge_rows: usize,
    pub num_lipschitz_rows: usize,
    /// Implicit `x ≥ 0` bounds, one per variable.
    pub num_nonnegativity: usize,
}

/// Variables are ordered `[l_0 … l_{2m−1}, s_0 … s_{m−1}]`.
pub fn build_lp(instance: &NonparamInstance) -> LpDescription {
    let m = instance.m();
    let n_loss = 2 * m;
    let n_vars = n_loss + m;
    let mf = m as f64;
    let mut objective = vec![0.0; n_vars];
    objective[..m].iter_mut().for_each(|c| *c = 1.0 / mf);
    objective[n_loss..].iter_mut().for_each(|c| *c = instance.lambda / mf);

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..m {
        let mut row = vec![0.0; n_vars];
        row[i] = 1.0;
        row[m + i] = -1.0;
        row[n_loss + i] = -1.0;
        rows.push(row);
        rhs.push(-instance.delta[i][m + i]);
    }
    for i in 0..n_loss {
        for j in i + 1..n_loss {
            let bound = instance.kappa * instance.delta[i][j];
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; n_vars];
                row[i] = sign;
                row[j] = -sign;
                rows.push(row);
                rhs.push(bound);
            }
        }
    }
    let num_lipschitz_rows = rows.len() - m;
    LpDescription {
        program: LinearProgram {
            objective,
            rows,
            rhs,
        },
        num_loss_vars: n_loss,
        num_slack_vars: m,
        num_hinge_rows: m,
        num_lipschitz_rows,
        num_nonnegativity: n_vars,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_m: usize,
    pub max_pivots: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_m: 50,
            max_pivots: 200_000,
        }
    }
}

pub fn solve_lp(instance: &NonparamInstance) -> Result<NonparamSolution> {
    solve_lp_with(instance, &SolverConfig::default())
}

pub fn solve_lp_with(instance: &NonparamInstance, cfg: &SolverConfig) -> Result<NonparamSolution> {
    if instance.m() > cfg.max_m {
        return Err(Error::input(format!(
            "instance has m = {} above the solver cap {}",
            instance.m(),
            cfg.max_m
        )));
    }
    let desc = build_lp(instance);
    // Thousands of rows against 3m columns: the dual tableau is far smaller.
    let sol = desc.program.solve_via_dual(cfg.max_pivots).map_err(|e| match e {
        Error::Solver(msg) => Error::Solver(format!(
            "{msg}; the instance is always feasible at l = 0, so this is a pivoting failure"
        )),
        other => other,
    })?;
    let l: Vec<f64> = sol.x[..desc.num_loss_vars].iter().map(|v| v.max(0.0)).collect();
    let objective_value = instance.objective(&l);
    Ok(NonparamSolution { l, objective_value })
}

/// `max_i (l_i − κΔ(x, x_i))₊`
pub fn lower_bound_fn(solution: &NonparamSolution, instance: &NonparamInstance, x: &[f64]) -> f64 {
    instance
        .points
        .iter()
        .zip(&solution.l)
        .map(|(p, &l)| l - instance.kappa * instance.margin.distance_unchecked(x, p))
        .fold(0.0, f64::max)
}

/// `min_i (l_i + κΔ(x, x_i))`
pub fn upper_bound_fn(solution: &NonparamSolution, instance: &NonparamInstance, x: &[f64]) -> f64 {
    instance
        .points
        .iter()
        .zip(&solution.l)
        .map(|(p, &l)| l + instance.kappa * instance.margin.distance_unchecked(x, p))
        .fold(f64::INFINITY, f64::min)
}

/// Random convex combination of the instance points.
pub fn hull_point<R: rand::Rng + ?Sized>(instance: &NonparamInstance, rng: &mut R) -> Vec<f64> {
    let u = Uniform::new(f64::MIN_POSITIVE, 1.0);
    let w: Vec<f64> = (0..instance.points.len()).map(|_| -u.sample(rng).ln()).collect();
    let total: f64 = w.iter().sum();
    let mut x = vec![0.0; instance.dim()];
    for (p, wi) in instance.points.iter().zip(&w) {
        for (xk, pk) in x.iter_mut().zip(p) {
            *xk += wi / total * pk;
        }
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub samples_checked: usize,
    /// `max (L_lower(x) − candidate(x))₊` over checked points.
    pub max_lower_violation: f64,
    /// `max (candidate(x) − L_upper(x))₊` over checked points.
    pub max_upper_violation: f64,
    pub candidate_objective: f64,
    pub lp_objective: f64,
}

impl BoundsReport {
    pub fn objective_gap(&self) -> f64 {
        (self.candidate_objective - self.lp_objective).abs()
    }
}

/// Checks `lower ≤ candidate ≤ upper` at the instance points and at `samples` random points
/// of their convex hull, and compares the candidate's `S_m` with the LP optimum.
pub fn verify_bounds(
    solution: &NonparamSolution,
    instance: &NonparamInstance,
    candidate: &dyn Fn(&[f64]) -> f64,
    samples: usize,
    seed: u64,
) -> BoundsReport {
    let mut rng = substream(seed, Stream::Eval);
    let points: Vec<Vec<f64>> = instance
        .points
        .iter()
        .cloned()
        .chain((0..samples).map(|_| hull_point(instance, &mut rng)))
        .collect();
    let mut lower_v: f64 = 0.0;
    let mut upper_v: f64 = 0.0;
    for x in &points {
        let c = candidate(x);
        lower_v = lower_v.max(lower_bound_fn(solution, instance, x) - c);
        upper_v = upper_v.max(c - upper_bound_fn(solution, instance, x));
    }
    BoundsReport {
        samples_checked: points.len(),
        max_lower_violation: lower_v,
        max_upper_violation: upper_v,
        candidate_objective: instance.objective_of(candidate),
        lp_objective: solution.objective_value,
    }
}

/// Exhaustive search over the grid `{0, step, 2·step, …}^{2m}` up to `κ·max Δ` (an optimum
/// always exists in that box, with its smallest value at 0).
///
/// A grid point counts as feasible when it satisfies the Lipschitz constraints up to one
/// grid step, so that rounding any feasible point to the grid stays admissible and the
/// result is within a few grid steps of the true optimum.
pub fn brute_force_lp(instance: &NonparamInstance, step: f64) -> Result<NonparamSolution> {
    let m = instance.m();
    if m > 2 {
        return Err(Error::input(format!("brute force supports m <= 2, got {m}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::input("grid step must be positive"));
    }
    let n = 2 * m;
    let max_delta = instance
        .delta
        .iter()
        .flatten()
        .fold(0.0_f64, |a, &b| a.max(b));
    let upper = instance.kappa * max_delta;
    let ticks = (upper / step).ceil() as usize + 1;
    if ticks.pow(n as u32) > 200_000_000 {
        return Err(Error::input("grid too fine for brute force"));
    }
    let grid: Vec<f64> = (0..ticks).map(|k| k as f64 * step).collect();
    let mut idx = vec![0usize; n];
    let mut l = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    'outer: loop {
        for (v, &k) in l.iter_mut().zip(&idx) {
            *v = grid[k];
        }
        if instance.max_violation(&l) <= step {
            let obj = instance.objective(&l);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, l.clone()));
            }
        }
        for d in 0..n {
            idx[d] += 1;
            if idx[d] < ticks {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    let (objective_value, l) = best.expect("the zero vector is always feasible");
    Ok(NonparamSolution { l, objective_value })
}
