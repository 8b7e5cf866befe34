//! Dense convex QP with linear inequality constraints.
//!
//! Solves
//!
//! ```text
//!   minimize    ½ uᵀ H u + cᵀ u
//!   subject to  A u + b ≥ 0
//! ```
//!
//! for small problems (a handful of variables, a few dozen rows) and returns
//! the multipliers alongside the optimizer. Feasibility is decided first by a
//! phase-1 slack program; the optimizer is then found with a primal
//! active-set method started from the phase-1 witness.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Tolerance on the phase-1 slack below which the feasible set is nonempty.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-12;
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("cost matrix is not positive definite")]
    NonPsdCost,
    #[error("cost matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `minimize ½ uᵀ H u + cᵀ u  s.t.  A u + b ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    rows: DMatrix<f64>,
    offsets: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        rows: DMatrix<f64>,
        offsets: DVector<f64>,
    ) -> Result<Self, QpError> {
        let m = hessian.nrows();
        if hessian.ncols() != m {
            return Err(QpError::DimensionMismatch(format!(
                "cost matrix is {}x{}",
                m,
                hessian.ncols()
            )));
        }
        if linear.len() != m {
            return Err(QpError::DimensionMismatch(format!(
                "linear term has length {}, expected {m}",
                linear.len()
            )));
        }
        if rows.ncols() != m {
            return Err(QpError::DimensionMismatch(format!(
                "constraint matrix has {} columns, expected {m}",
                rows.ncols()
            )));
        }
        if offsets.len() != rows.nrows() {
            return Err(QpError::DimensionMismatch(format!(
                "{} offsets for {} constraint rows",
                offsets.len(),
                rows.nrows()
            )));
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(Self {
            hessian,
            linear,
            rows,
            offsets,
        })
    }

    /// Unconstrained problem.
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self, QpError> {
        let m = hessian.nrows();
        Self::new(hessian, linear, DMatrix::zeros(0, m), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.hessian * u)) + self.linear.dot(u)
    }

    /// Constraint residuals `A u + b`.
    pub fn slack(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.rows * u + &self.offsets
    }

    /// Copy with row `k` offset replaced.
    pub fn with_offset(&self, k: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.offsets[k] = value;
        out
    }

    /// Copy with row `k` of `(A, b)` multiplied by `factor`.
    pub fn with_scaled_row(&self, k: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.rows.row_mut(k).scale_mut(factor);
        out.offsets[k] *= factor;
        out
    }

    /// Default iteration cap: `50 · (m + q_c)`.
    pub fn default_iteration_cap(&self) -> usize {
        50 * (self.dim() + self.num_constraints())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Optimizer, present iff `Optimal`.
    pub primal: Option<DVector<f64>>,
    /// Multipliers (one per row), present iff `Optimal`.
    pub duals: Option<DVector<f64>>,
    /// Rows with zero slack at the returned point.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

impl QpSolution {
    fn without_point(status: QpStatus, iterations: usize) -> Self {
        Self {
            status,
            primal: None,
            duals: None,
            active_set: Vec::new(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Phase-1 result.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// A point with `A u + b ≥ -FEASIBILITY_TOL`, when `feasible`.
    pub witness: Option<DVector<f64>>,
    /// Optimal value of the phase-1 slack.
    pub min_slack: f64,
}

/// Decide whether `{u : A u + b ≥ 0}` is nonempty.
///
/// Solves `minimize s  s.t.  A u + b + s·1 ≥ 0, s ≥ 0` with a gradient
/// projection method; the set is feasible iff the optimal `s` is below
/// [`FEASIBILITY_TOL`].
pub fn check_feasible(problem: &QpProblem) -> Result<Feasibility, QpError> {
    let m = problem.dim();
    let qc = problem.num_constraints();
    if qc == 0 {
        return Ok(Feasibility {
            feasible: true,
            witness: Some(DVector::zeros(m)),
            min_slack: 0.0,
        });
    }
    // Variables z = (u, s). Rows: [a_k, 1] z + b_k ≥ 0, then [0, 1] z ≥ 0.
    let n = m + 1;
    let mut rows = DMatrix::zeros(qc + 1, n);
    let mut offsets = DVector::zeros(qc + 1);
    for k in 0..qc {
        for j in 0..m {
            rows[(k, j)] = problem.rows[(k, j)];
        }
        rows[(k, m)] = 1.0;
        offsets[k] = problem.offsets[k];
    }
    rows[(qc, m)] = 1.0;

    let mut z = DVector::zeros(n);
    z[m] = problem.offsets.iter().fold(0.0_f64, |acc, &b| acc.max(-b));

    let mut cost = DVector::zeros(n);
    cost[m] = 1.0;

    let scale = 1.0 + problem.offsets.amax();
    let cap = 50 * (n + qc + 1);
    let mut working = initial_working_set(&rows, &offsets, &z, scale);

    for _ in 0..cap {
        let (direction, mult) = project_descent(&rows, &working, &cost);
        if working.len() < n && direction.amax() > 1e-12 {
            // Ratio test along the projected steepest-descent direction.
            let mut step = f64::INFINITY;
            let mut blocking = None;
            for k in 0..rows.nrows() {
                if working.contains(&k) {
                    continue;
                }
                let rate = rows.row(k).dot(&direction.transpose());
                if rate < -1e-14 {
                    let residual = (rows.row(k).dot(&z.transpose()) + offsets[k]).max(0.0);
                    let t = residual / -rate;
                    if t < step {
                        step = t;
                        blocking = Some(k);
                    }
                }
            }
            match blocking {
                Some(k) => {
                    z += direction * step;
                    working.push(k);
                }
                // The slack is bounded below by its own row, so an
                // unblocked direction only appears through round-off.
                None => break,
            }
        } else {
            match most_negative(&mult, &working) {
                Some(pos) => {
                    working.remove(pos);
                }
                None => break,
            }
        }
    }

    let min_slack = z[m].max(0.0);
    let u = z.rows(0, m).into_owned();
    let worst = problem
        .slack(&u)
        .iter()
        .fold(f64::INFINITY, |acc, &r| acc.min(r));
    let feasible = min_slack <= FEASIBILITY_TOL && worst >= -FEASIBILITY_TOL;
    Ok(Feasibility {
        feasible,
        witness: feasible.then_some(u),
        min_slack,
    })
}

/// Solve with the default iteration cap.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_capped(problem, problem.default_iteration_cap())
}

pub fn solve_qp_capped(problem: &QpProblem, max_iterations: usize) -> Result<QpSolution, QpError> {
    let chol = Cholesky::new(problem.hessian.clone()).ok_or(QpError::NonPsdCost)?;
    let m = problem.dim();
    let qc = problem.num_constraints();

    if qc == 0 {
        let u = chol.solve(&(-&problem.linear));
        return Ok(QpSolution {
            status: QpStatus::Optimal,
            primal: Some(u),
            duals: Some(DVector::zeros(0)),
            active_set: Vec::new(),
            iterations: 0,
        });
    }

    let phase1 = check_feasible(problem)?;
    let Some(mut u) = phase1.witness else {
        return Ok(QpSolution::without_point(QpStatus::Infeasible, 0));
    };

    let scale = 1.0 + problem.offsets.amax();
    let mut working = initial_working_set(&problem.rows, &problem.offsets, &u, scale);
    working.truncate(m);

    for iter in 0..max_iterations {
        let grad = &problem.hessian * &u + &problem.linear;
        let (step, mult) = equality_step(&chol, &problem.rows, &working, &grad);
        // m independent working rows pin the point; any computed step is
        // roundoff, and following it lets degenerate vertices cycle.
        let step_tol = 1e-12 * (1.0 + u.amax());
        if working.len() >= m || step.amax() <= step_tol {
            match most_negative(&mult, &working) {
                Some(pos) => {
                    working.remove(pos);
                }
                None => {
                    let mut duals = DVector::zeros(qc);
                    for (i, &k) in working.iter().enumerate() {
                        duals[k] = mult[i].max(0.0);
                    }
                    let active_set = active_rows(problem, &u);
                    return Ok(QpSolution {
                        status: QpStatus::Optimal,
                        primal: Some(u),
                        duals: Some(duals),
                        active_set,
                        iterations: iter + 1,
                    });
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for k in 0..qc {
                if working.contains(&k) {
                    continue;
                }
                let rate = problem.rows.row(k).dot(&step.transpose());
                if rate < -1e-14 {
                    let residual =
                        (problem.rows.row(k).dot(&u.transpose()) + problem.offsets[k]).max(0.0);
                    let t = residual / -rate;
                    // Strict comparison keeps the lowest index among ties.
                    if t < alpha {
                        alpha = t;
                        blocking = Some(k);
                    }
                }
            }
            u += step * alpha;
            if let Some(k) = blocking {
                working.push(k);
            }
        }
    }

    Ok(QpSolution::without_point(QpStatus::MaxIterations, max_iterations))
}

fn active_rows(problem: &QpProblem, u: &DVector<f64>) -> Vec<usize> {
    let slack = problem.slack(u);
    (0..problem.num_constraints())
        .filter(|&k| slack[k].abs() <= ACTIVE_TOL * (1.0 + problem.offsets[k].abs()))
        .collect()
}

/// Rows active at `z`, keeping only a linearly independent subset.
fn initial_working_set(
    rows: &DMatrix<f64>,
    offsets: &DVector<f64>,
    z: &DVector<f64>,
    scale: f64,
) -> Vec<usize> {
    let n = rows.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut working = Vec::new();
    for k in 0..rows.nrows() {
        if basis.len() == n {
            break;
        }
        let row = rows.row(k).transpose();
        let residual = row.dot(z) + offsets[k];
        if residual.abs() > 1e-10 * scale {
            continue;
        }
        let norm = row.norm();
        if norm < 1e-12 {
            continue;
        }
        // Gram-Schmidt against the rows already kept.
        let mut v = row / norm;
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let rest = v.norm();
        if rest > 1e-8 {
            basis.push(v / rest);
            working.push(k);
        }
    }
    working
}

/// Working-set rows as a dense matrix.
fn gather(rows: &DMatrix<f64>, working: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(working.len(), rows.ncols(), |i, j| rows[(working[i], j)])
}

/// Projected steepest descent for a linear objective: `d = -(c - Nᵀμ)` with
/// `μ = (N Nᵀ)⁻¹ N c`.
fn project_descent(
    rows: &DMatrix<f64>,
    working: &[usize],
    cost: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    if working.is_empty() {
        return (-cost, DVector::zeros(0));
    }
    let n_w = gather(rows, working);
    let gram = &n_w * n_w.transpose();
    let rhs = &n_w * cost;
    let mult = solve_spd(gram, &rhs);
    let direction = -(cost - n_w.transpose() * &mult);
    (direction, mult)
}

/// Newton step of the equality-constrained subproblem on the working set,
/// range-space form: `μ = (N H⁻¹ Nᵀ)⁻¹ N H⁻¹ g`, `p = -H⁻¹ (g - Nᵀ μ)`.
fn equality_step(
    chol: &Cholesky<f64, Dyn>,
    rows: &DMatrix<f64>,
    working: &[usize],
    grad: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let h_inv_g = chol.solve(grad);
    if working.is_empty() {
        return (-h_inv_g, DVector::zeros(0));
    }
    let n_w = gather(rows, working);
    let h_inv_nt = chol.solve(&n_w.transpose());
    let schur = &n_w * &h_inv_nt;
    let mult = solve_spd(schur, &(&n_w * &h_inv_g));
    let step = -(h_inv_g - h_inv_nt * &mult);
    (step, mult)
}

/// Solve a small symmetric positive (semi)definite system. Falls back to LU
/// when the Cholesky factorization breaks down on a near-singular matrix.
fn solve_spd(mat: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match Cholesky::new(mat.clone()) {
        Some(c) => c.solve(rhs),
        None => mat
            .lu()
            .solve(rhs)
            .unwrap_or_else(|| DVector::zeros(rhs.len())),
    }
}

/// Position (in `working`) of the most negative multiplier, ties to the
/// lowest row index.
fn most_negative(mult: &DVector<f64>, working: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (pos, &value) in mult.iter().enumerate() {
        if value >= -DUAL_TOL {
            continue;
        }
        let better = match best {
            None => true,
            Some((bp, bv)) => value < bv || (value == bv && working[pos] < working[bp]),
        };
        if better {
            best = Some((pos, value));
        }
    }
    best.map(|(pos, _)| pos)
}
