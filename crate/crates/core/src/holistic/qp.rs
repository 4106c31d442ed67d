//! Dense convex QP solver for small problems.
//!
//! ```text
//!     minimize    ½ xᵀ H x + fᵀ x
//!     subject to  A_eq x  = b_eq
//!                 A_ineq x ≤ b_ineq
//!                 lb ≤ x ≤ ub
//! ```
//!
//! Dual active-set method (Goldfarb–Idnani): start at the unconstrained
//! minimizer and repeatedly add the most violated constraint, dropping
//! active constraints whose multipliers would turn negative. Every
//! iterate is dual feasible, so the first primal-feasible iterate is
//! optimal. Projections are recomputed from scratch each step, which is
//! cheap for the dozen variables used here.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not positive semidefinite")]
    NotConvex,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    /// Use `-INFINITY` / `INFINITY` for unbounded variables.
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem of dimension `n`.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        QpProblem {
            h,
            f,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    /// Appends one inequality row `a·x ≤ b`.
    pub fn push_inequality(&mut self, a: &[f64], b: f64) {
        let m = self.a_ineq.nrows();
        let n = self.dim();
        let mut rows = self.a_ineq.clone().resize_vertically(m + 1, 0.0);
        for j in 0..n {
            rows[(m, j)] = a[j];
        }
        self.a_ineq = rows;
        self.b_ineq = self.b_ineq.clone().resize_vertically(m + 1, b);
    }

    pub fn check_dimensions(&self) -> Result<(), QpError> {
        let n = self.dim();
        let err = |what: &str| Err(QpError::Dimension(what.to_string()));
        if self.h.nrows() != n || self.h.ncols() != n {
            return err("H must be n×n");
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return err("A_eq / b_eq");
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return err("A_ineq / b_ineq");
        }
        if self.lb.len() != n || self.ub.len() != n {
            return err("bounds");
        }
        if (0..n).any(|i| self.lb[i] > self.ub[i]) {
            return Err(QpError::Infeasible);
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// Largest violation over equalities, inequalities and bounds.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.a_eq.nrows() > 0 {
            worst = worst.max((&self.a_eq * x - &self.b_eq).amax());
        }
        if self.a_ineq.nrows() > 0 {
            let r = &self.a_ineq * x - &self.b_ineq;
            worst = worst.max(r.max().max(0.0));
        }
        for i in 0..self.dim() {
            worst = worst.max(self.lb[i] - x[i]).max(x[i] - self.ub[i]);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Active inequality rows (indices into `a_ineq`).
    pub active_inequalities: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iterations: usize,
    /// Primal feasibility tolerance.
    pub tolerance: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings { max_iterations: 100, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Equality(usize),
    Inequality(usize),
    Lower(usize),
    Upper(usize),
}

/// One constraint in the normalized form `nᵀx ≥ b` (or `= b`).
struct Row {
    normal: DVector<f64>,
    rhs: f64,
    origin: Origin,
}

impl Row {
    fn slack(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.rhs
    }

    fn is_equality(&self) -> bool {
        matches!(self.origin, Origin::Equality(_))
    }
}

pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_with(p, &QpSettings::default())
}

pub fn solve_qp_with(p: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    p.check_dimensions()?;
    let n = p.dim();
    let g = symmetrize(&p.h);
    let g_inv = invert_spd(&g)?;

    let mut rows = Vec::new();
    for i in 0..p.a_eq.nrows() {
        rows.push(Row { normal: p.a_eq.row(i).transpose(), rhs: p.b_eq[i], origin: Origin::Equality(i) });
    }
    for i in 0..p.a_ineq.nrows() {
        rows.push(Row { normal: -p.a_ineq.row(i).transpose(), rhs: -p.b_ineq[i], origin: Origin::Inequality(i) });
    }
    for i in 0..n {
        if p.lb[i].is_finite() {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            rows.push(Row { normal: e, rhs: p.lb[i], origin: Origin::Lower(i) });
        }
        if p.ub[i].is_finite() {
            let mut e = DVector::zeros(n);
            e[i] = -1.0;
            rows.push(Row { normal: e, rhs: -p.ub[i], origin: Origin::Upper(i) });
        }
    }

    let mut state = ActiveSet { x: -(&g_inv * &p.f), active: Vec::new(), u: Vec::new(), iterations: 0 };
    let max_iter = settings.max_iterations;

    for k in 0..rows.len() {
        if !rows[k].is_equality() {
            break;
        }
        if rows[k].slack(&state.x) > 0.0 {
            rows[k].normal = -rows[k].normal.clone();
            rows[k].rhs = -rows[k].rhs;
        }
        state.add_constraint(&rows, k, &g_inv, max_iter)?;
    }

    loop {
        let mut worst = None;
        let mut worst_slack = 0.0;
        for (k, row) in rows.iter().enumerate() {
            if row.is_equality() || state.active.contains(&k) {
                continue;
            }
            let scale = 1.0 + row.rhs.abs();
            let s = row.slack(&state.x);
            if s < -settings.tolerance * scale && s / scale < worst_slack {
                worst_slack = s / scale;
                worst = Some(k);
            }
        }
        let Some(p_idx) = worst else { break };
        state.add_constraint(&rows, p_idx, &g_inv, max_iter)?;
    }

    let active_inequalities = state
        .active
        .iter()
        .filter_map(|&k| match rows[k].origin {
            Origin::Inequality(i) => Some(i),
            _ => None,
        })
        .collect();
    Ok(QpSolution { objective: p.objective(&state.x), x: state.x, iterations: state.iterations, active_inequalities })
}

struct ActiveSet {
    x: DVector<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    iterations: usize,
}

impl ActiveSet {
    fn add_constraint(&mut self, rows: &[Row], p: usize, g_inv: &DMatrix<f64>, max_iter: usize) -> Result<(), QpError> {
        let np = &rows[p].normal;
        let mut u_p = 0.0;
        loop {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let (z, r) = self.directions(rows, np, g_inv)?;

            // Largest dual step keeping active inequality multipliers ≥ 0.
            let mut t_dual = f64::INFINITY;
            let mut drop_at = None;
            for (j, &k) in self.active.iter().enumerate() {
                if rows[k].is_equality() || r[j] <= 0.0 {
                    continue;
                }
                let t = self.u[j] / r[j];
                if t < t_dual {
                    t_dual = t;
                    drop_at = Some(j);
                }
            }

            let curvature = z.dot(np);
            let reference = np.dot(&(g_inv * np)).abs().max(f64::MIN_POSITIVE);
            let t_primal = if curvature > 1e-12 * reference { -rows[p].slack(&self.x) / curvature } else { f64::INFINITY };

            let t = t_dual.min(t_primal);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            for (uj, rj) in self.u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            u_p += t;
            if t_primal.is_finite() {
                self.x += &z * t;
            }
            if t_primal <= t_dual {
                self.active.push(p);
                self.u.push(u_p);
                return Ok(());
            }
            let j = drop_at.expect("finite dual step has a blocking constraint");
            self.active.remove(j);
            self.u.remove(j);
        }
    }

    /// Primal direction `z` (projection of `G⁻¹ n_p` off the active normals)
    /// and dual direction `r`.
    fn directions(&self, rows: &[Row], np: &DVector<f64>, g_inv: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let gn = g_inv * np;
        let q = self.active.len();
        if q == 0 {
            return Ok((gn, DVector::zeros(0)));
        }
        let n = np.len();
        let mut normals = DMatrix::zeros(n, q);
        for (j, &k) in self.active.iter().enumerate() {
            normals.set_column(j, &rows[k].normal);
        }
        let g_inv_n = g_inv * &normals;
        let m = normals.transpose() * &g_inv_n;
        let r = m.lu().solve(&(normals.transpose() * &gn)).ok_or(QpError::Infeasible)?;
        let z = gn - g_inv_n * &r;
        Ok((z, r))
    }
}

fn symmetrize(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

/// Inverse of a symmetric positive semidefinite matrix; semidefinite
/// matrices get a small Tikhonov shift so the dual method applies.
fn invert_spd(g: &DMatrix<f64>) -> Result<DMatrix<f64>, QpError> {
    let n = g.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if let Some(ch) = g.clone().cholesky() {
        return Ok(ch.inverse());
    }
    let eig = g.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.min() < -1e-9 * scale {
        return Err(QpError::NotConvex);
    }
    let shifted = g + DMatrix::identity(n, n) * (1e-9 * scale);
    shifted.cholesky().map(|c| c.inverse()).ok_or(QpError::NotConvex)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_identity() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -1.0]));
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_active_bound() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -1.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DVector::from_vec(vec![0.5]));
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.active_inequalities, vec![0]);

        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -1.0])).with_bounds(
            DVector::from_vec(vec![f64::NEG_INFINITY, f64::NEG_INFINITY]),
            DVector::from_vec(vec![0.5, f64::INFINITY]),
        );
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equality_constraint() {
        // min ½|x|² s.t. x0 + x1 = 2 → (1, 1)
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0]));
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        let p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_inequalities(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, -1.0]));
        assert_eq!(solve_qp(&p), Err(QpError::Infeasible));
    }

    #[test]
    fn rejects_bad_dimensions_and_indefinite_cost() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve_qp(&p), Err(QpError::Dimension(_))));
        let p = QpProblem::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2));
        assert_eq!(solve_qp(&p), Err(QpError::NotConvex));
    }

    #[test]
    fn semidefinite_cost_with_bounds() {
        // min -x0 with x0 ≤ 1 and a flat second coordinate.
        let mut h = DMatrix::zeros(2, 2);
        h[(1, 1)] = 1.0;
        let p = QpProblem::new(h, DVector::from_vec(vec![-1.0, 0.0]))
            .with_bounds(DVector::from_vec(vec![-1.0, -1.0]), DVector::from_vec(vec![1.0, 1.0]));
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9 && s.x[1].abs() < 1e-9);
    }
}
