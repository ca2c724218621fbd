//! Aggregation of regression coefficients: the tree-regularized
//! rare-feature estimator, scaled-lasso noise estimation, and the debiased
//! quadratic-form statistic that yields a p-value per internal node.
//!
//! The rare-feature objective over latent node coefficients `gamma` (with
//! leaf coefficients `theta = A gamma`) is
//!
//! ```text
//! (1/2n) |y - X A gamma|^2 + lambda nu |gamma_(not root)|_1
//!                          + lambda (1 - nu) |A gamma|_1
//! ```
//!
//! solved by two-block operator splitting: one auxiliary block per l1 term,
//! a fixed penalty parameter, and soft-threshold proximal steps. The
//! returned iterate is the best-objective candidate seen, so the recorded
//! objective history is non-increasing.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HatError, Result};
use crate::pvalues::{PValueAssignment, Provenance};
use crate::special::normal_cdf;
use crate::tree::{NodeId, Tree};

/// Design matrix and response. Columns follow the tree's leaf order.
#[derive(Debug, Clone)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<RegressionData> {
        if x.nrows() != y.len() {
            return Err(HatError::InvalidInput(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(HatError::InvalidInput("non-finite regression data".into()));
        }
        Ok(RegressionData { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Binary leaf-by-node ancestry matrix: entry `(i, j)` is 1 iff leaf `i`
/// descends from (or equals) node `j`. Column order is node id (DFS), so
/// each column is a contiguous run of ones in the leaf order.
#[derive(Debug, Clone)]
pub struct TreeExpansion {
    pub a: DMatrix<f64>,
    /// Per-node contiguous leaf range `(start, len)`; the sparse form of the
    /// columns.
    ranges: Vec<(usize, usize)>,
    root: NodeId,
}

impl TreeExpansion {
    pub fn n_leaves(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.a.ncols()
    }

    pub fn root_column(&self) -> usize {
        self.root
    }

    /// `A gamma` using the contiguous column ranges.
    pub fn apply(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_leaves());
        for (j, &(start, len)) in self.ranges.iter().enumerate() {
            let g = gamma[j];
            if g != 0.0 {
                for i in start..start + len {
                    out[i] += g;
                }
            }
        }
        out
    }

    /// `A^T v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_nodes());
        for (j, &(start, len)) in self.ranges.iter().enumerate() {
            out[j] = v.rows(start, len).sum();
        }
        out
    }

    /// Dense `A^T A`: pairwise leaf-range overlaps.
    fn gram(&self) -> DMatrix<f64> {
        let m = self.n_nodes();
        DMatrix::from_fn(m, m, |i, j| {
            let (si, li) = self.ranges[i];
            let (sj, lj) = self.ranges[j];
            let lo = si.max(sj);
            let hi = (si + li).min(sj + lj);
            hi.saturating_sub(lo) as f64
        })
    }
}

/// Ancestry expansion of a tree.
pub fn build_expansion(tree: &Tree) -> TreeExpansion {
    let p = tree.p();
    let m = tree.n_nodes();
    let ranges: Vec<(usize, usize)> = (0..m).map(|u| tree.leaf_range(u)).collect();
    let mut a = DMatrix::zeros(p, m);
    for (j, &(start, len)) in ranges.iter().enumerate() {
        for i in start..start + len {
            a[(i, j)] = 1.0;
        }
    }
    TreeExpansion {
        a,
        ranges,
        root: tree.root(),
    }
}

/// Solver knobs for [`fit_rare`].
#[derive(Debug, Clone, Copy)]
pub struct RareFitOptions {
    /// Splitting penalty parameter.
    pub rho: f64,
    pub max_iter: usize,
    /// Tolerance on scaled primal/dual residuals.
    pub tol: f64,
}

impl Default for RareFitOptions {
    fn default() -> Self {
        RareFitOptions {
            rho: 1.0,
            max_iter: 5000,
            tol: 1e-7,
        }
    }
}

/// Fitted rare-feature estimator with solver diagnostics.
#[derive(Debug, Clone)]
pub struct RareFit {
    pub gamma_hat: DVector<f64>,
    pub theta_hat: DVector<f64>,
    pub lambda: f64,
    pub nu: f64,
    /// Objective at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Max of the stationarity residual (with the splitting duals as l1
    /// subgradient certificates) and the primal residual.
    pub kkt_residual: f64,
    /// Best objective after each iteration; non-increasing by construction.
    pub objective_history: Vec<f64>,
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fit the rare-feature estimator at fixed `(lambda, nu)`.
///
/// Non-convergence within `opts.max_iter` is flagged on the result, not an
/// error; the best iterate seen is returned either way.
pub fn fit_rare(
    data: &RegressionData,
    expansion: &TreeExpansion,
    lambda: f64,
    nu: f64,
    opts: &RareFitOptions,
) -> Result<RareFit> {
    if lambda < 0.0 || !(0.0..=1.0).contains(&nu) {
        return Err(HatError::InvalidInput(format!(
            "need lambda >= 0 and nu in [0, 1], got ({lambda}, {nu})"
        )));
    }
    if data.p() != expansion.n_leaves() {
        return Err(HatError::InvalidInput(
            "design matrix width != expansion leaf count".into(),
        ));
    }
    let n = data.n();
    let m = expansion.n_nodes();
    let p = data.p();
    let rho = opts.rho;
    let root = expansion.root_column();

    let b = &data.x * &expansion.a; // n x m
    let bty = b.tr_mul(&data.y) / n as f64;
    let mut sys = b.tr_mul(&b) / n as f64 + expansion.gram() * rho;
    for j in 0..m {
        sys[(j, j)] += rho;
    }
    let chol = nalgebra::linalg::Cholesky::new(sys)
        .ok_or_else(|| HatError::Internal("splitting system not positive definite".into()))?;

    let objective = |g: &DVector<f64>| -> f64 {
        let resid = &data.y - &b * g;
        let theta = expansion.apply(g);
        let mut l1_gamma = 0.0;
        for j in 0..m {
            if j != root {
                l1_gamma += g[j].abs();
            }
        }
        resid.norm_squared() / (2.0 * n as f64)
            + lambda * nu * l1_gamma
            + lambda * (1.0 - nu) * theta.abs().sum()
    };

    let mut z1 = DVector::zeros(m);
    let mut z2 = DVector::zeros(p);
    let mut u1 = DVector::zeros(m);
    let mut u2 = DVector::zeros(p);

    let mut best_obj = objective(&z1);
    let mut best_z1 = z1.clone();
    let mut history = Vec::with_capacity(opts.max_iter.min(4096));
    let mut converged = false;
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;

    let t1 = lambda * nu / rho;
    let t2 = lambda * (1.0 - nu) / rho;
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let rhs = &bty + (&z1 - &u1) * rho + expansion.apply_transpose(&(&z2 - &u2)) * rho;
        let gamma = chol.solve(&rhs);
        let ag = expansion.apply(&gamma);

        let z1_old = z1.clone();
        let z2_old = z2.clone();
        for j in 0..m {
            let v = gamma[j] + u1[j];
            z1[j] = if j == root { v } else { soft(v, t1) };
        }
        for i in 0..p {
            z2[i] = soft(ag[i] + u2[i], t2);
        }
        u1 += &gamma - &z1;
        u2 += &ag - &z2;

        let obj = objective(&z1);
        if obj < best_obj {
            best_obj = obj;
            best_z1.copy_from(&z1);
        }
        history.push(best_obj);

        primal_residual = (&gamma - &z1)
            .amax()
            .max((&ag - &z2).amax());
        let dz = (&z1_old - &z1) + expansion.apply_transpose(&(&z2_old - &z2));
        dual_residual = rho * dz.amax();
        let scale = gamma.amax().max(z1.amax()).max(ag.amax()).max(z2.amax());
        let dual_scale = rho * u1.amax().max(u2.amax());
        if primal_residual <= opts.tol * (1.0 + scale)
            && dual_residual <= opts.tol * (1.0 + dual_scale)
        {
            converged = true;
            break;
        }
    }

    // Stationarity with rho*u as the subgradient certificates; exact as the
    // residuals vanish.
    let stat = {
        let grad = b.tr_mul(&(&b * &z1 - &data.y)) / n as f64;
        let full = grad + &u1 * rho + expansion.apply_transpose(&u2) * rho;
        full.amax()
    };
    let kkt_residual = stat.max(primal_residual);

    let theta_hat = expansion.apply(&best_z1);
    Ok(RareFit {
        gamma_hat: best_z1,
        theta_hat,
        lambda,
        nu,
        objective: best_obj,
        iterations,
        converged,
        primal_residual,
        dual_residual,
        kkt_residual,
        objective_history: history,
    })
}

/// Cross-validation pick over a `(lambda, nu)` grid.
#[derive(Debug, Clone)]
pub struct CvSelection {
    pub lambda: f64,
    pub nu: f64,
    /// Mean held-out squared error per grid point, aligned to the input grid.
    pub cv_errors: Vec<f64>,
}

/// K-fold cross-validation over the grid; rows are assigned to folds by a
/// seeded shuffle, and ties break toward the earliest grid point.
pub fn cross_validate_rare(
    data: &RegressionData,
    expansion: &TreeExpansion,
    grid: &[(f64, f64)],
    folds: usize,
    seed: u64,
    opts: &RareFitOptions,
) -> Result<CvSelection> {
    if grid.is_empty() {
        return Err(HatError::InvalidInput("empty cross-validation grid".into()));
    }
    if folds < 2 {
        return Err(HatError::InvalidInput("need at least 2 folds".into()));
    }
    let n = data.n();
    if n < folds {
        return Err(HatError::InvalidInput(format!(
            "cannot split {n} rows into {folds} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (pos, &row) in order.iter().enumerate() {
            f[row] = pos % folds;
        }
        f
    };

    let mut sse = vec![0.0f64; grid.len()];
    for fold in 0..folds {
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let x_train = data.x.select_rows(train_rows.iter());
        let y_train = DVector::from_iterator(
            train_rows.len(),
            train_rows.iter().map(|&i| data.y[i]),
        );
        let train = RegressionData::new(x_train, y_train)?;
        for (g, &(lambda, nu)) in grid.iter().enumerate() {
            let fit = fit_rare(&train, expansion, lambda, nu, opts)?;
            for &i in &test_rows {
                let pred = data.x.row(i).transpose().dot(&fit.theta_hat);
                sse[g] += (data.y[i] - pred).powi(2);
            }
        }
    }
    for v in &mut sse {
        *v /= n as f64;
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if sse[g] < sse[best] {
            best = g;
        }
    }
    Ok(CvSelection {
        lambda: grid[best].0,
        nu: grid[best].1,
        cv_errors: sse,
    })
}

/// Scaled-lasso estimate of the noise level.
#[derive(Debug, Clone)]
pub struct ScaledLassoFit {
    pub sigma_hat: f64,
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the residual collapses toward zero and the noise level is
    /// not identified.
    pub degenerate: bool,
}

/// Alternating minimization of the scaled-lasso objective: a lasso step at
/// penalty `lambda0 * sigma` followed by the residual update
/// `sigma = |y - X beta| / sqrt(n)`, iterated until sigma moves less than
/// 1e-6. `lambda0` defaults to `sqrt(2 log(p) / n)`.
pub fn scaled_lasso_sigma(data: &RegressionData, lambda0: Option<f64>) -> Result<ScaledLassoFit> {
    let n = data.n();
    let p = data.p();
    if n < 2 {
        return Err(HatError::InvalidInput("scaled lasso needs n >= 2".into()));
    }
    let lambda0 = lambda0.unwrap_or_else(|| (2.0 * (p as f64).ln() / n as f64).sqrt());
    let sqrt_n = (n as f64).sqrt();

    let mut beta = DVector::zeros(p);
    let mut sigma = data.y.norm() / sqrt_n;
    if sigma < 1e-12 {
        return Ok(ScaledLassoFit {
            sigma_hat: sigma,
            beta,
            iterations: 0,
            converged: true,
            degenerate: true,
        });
    }
    let col_sq: Vec<f64> = (0..p)
        .map(|j| data.x.column(j).norm_squared() / n as f64)
        .collect();
    let mut residual = data.y.clone();
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    for outer in 1..=100 {
        iterations = outer;
        lasso_cd(data, &col_sq, lambda0 * sigma, &mut beta, &mut residual);
        let sigma_new = residual.norm() / sqrt_n;
        if sigma_new < 1e-12 {
            sigma = sigma_new;
            degenerate = true;
            converged = true;
            break;
        }
        let done = (sigma_new - sigma).abs() < 1e-6;
        sigma = sigma_new;
        if done {
            converged = true;
            break;
        }
    }
    Ok(ScaledLassoFit {
        sigma_hat: sigma,
        beta,
        iterations,
        converged,
        degenerate,
    })
}

/// Cyclic coordinate descent for
/// `(1/2n) |y - X beta|^2 + lambda |beta|_1`, warm-started from `beta`,
/// maintaining `residual = y - X beta`.
fn lasso_cd(
    data: &RegressionData,
    col_sq: &[f64],
    lambda: f64,
    beta: &mut DVector<f64>,
    residual: &mut DVector<f64>,
) {
    let n = data.n() as f64;
    for _cycle in 0..2000 {
        let mut max_delta = 0.0f64;
        for j in 0..data.p() {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = data.x.column(j);
            let z = xj.dot(residual) / n + col_sq[j] * beta[j];
            let new = soft(z, lambda) / col_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &xj, 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-9 {
            break;
        }
    }
}

/// Centered sum of squares `sum_i (v_i - mean)^2`, i.e. the quadratic form
/// of the centering matrix `I - (1/l) 1 1^T`.
pub fn centering_quadratic(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum()
}

/// Knobs for the projection-direction solver.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    pub max_iter: usize,
    /// Target feasibility slack on the constraints.
    pub feas_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            max_iter: 200_000,
            feas_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub b: DVector<f64>,
    /// `b^T Sigma b` at the returned point.
    pub objective: f64,
    /// Worst constraint violation beyond the radius.
    pub max_violation: f64,
    pub iterations: usize,
}

/// Solve the projection-direction program
///
/// ```text
/// min b^T Sigma b   s.t.  |<omega, Sigma b - w>| <= kappa * lambda_n
///                         for omega in {e_1, ..., e_p, w / kappa}
/// ```
///
/// via accelerated projected gradient on the nonnegative dual (one
/// multiplier pair per two-sided constraint), warm-started from zero. When
/// `kappa` vanishes the zero vector is feasible and optimal.
pub fn solve_projection_qp(
    sigma: &DMatrix<f64>,
    w: &DVector<f64>,
    kappa: f64,
    lambda_n: f64,
    opts: &ProjectionOptions,
) -> Result<ProjectionResult> {
    let p = sigma.nrows();
    if sigma.ncols() != p || w.len() != p {
        return Err(HatError::InvalidInput("projection dimensions disagree".into()));
    }
    if kappa <= 1e-12 {
        return Ok(ProjectionResult {
            b: DVector::zeros(p),
            objective: 0.0,
            max_violation: 0.0,
            iterations: 0,
        });
    }
    let eps = kappa * lambda_n;
    let dim = p + 1;
    let wk = w / kappa;
    let s = sigma * &wk;
    // M = Omega^T Sigma Omega with Omega = [I | w/kappa].
    let mut mm = DMatrix::zeros(dim, dim);
    mm.view_mut((0, 0), (p, p)).copy_from(sigma);
    for i in 0..p {
        mm[(i, p)] = s[i];
        mm[(p, i)] = s[i];
    }
    mm[(p, p)] = wk.dot(&s);
    let mut c = DVector::zeros(dim);
    c.rows_mut(0, p).copy_from(w);
    c[p] = kappa;

    // Lipschitz constant of the dual gradient: lambda_max(M).
    let lip = {
        let mut v = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
        let mut lam = 1.0f64;
        for _ in 0..80 {
            let mv = &mm * &v;
            lam = mv.norm();
            if lam <= 1e-30 {
                break;
            }
            v = mv / lam;
        }
        lam.max(1e-12) * 1.02
    };
    let step = 1.0 / lip;

    // Dual objective (to minimize):
    // q(mu) = 1/4 eta^T M eta + c^T eta + eps * 1^T (mu+ + mu-), eta = mu+ - mu-.
    let qval = |mp: &DVector<f64>, mn: &DVector<f64>| -> f64 {
        let eta = mp - mn;
        0.25 * (&mm * &eta).dot(&eta) + c.dot(&eta) + eps * (mp.sum() + mn.sum())
    };
    let primal_from = |mp: &DVector<f64>, mn: &DVector<f64>| -> DVector<f64> {
        let eta = mp - mn;
        let mut b = DVector::zeros(p);
        for i in 0..p {
            b[i] = -0.5 * eta[i];
        }
        b.axpy(-0.5 * eta[p], &wk, 1.0);
        b
    };
    let violation = |b: &DVector<f64>| -> f64 {
        let resid = sigma * b - w;
        let mut v: f64 = resid.amax() - eps;
        v = v.max(wk.dot(&resid).abs() - eps);
        v.max(0.0)
    };

    let mut mp = DVector::zeros(dim);
    let mut mn = DVector::zeros(dim);
    let mut yp = mp.clone();
    let mut yn = mn.clone();
    let mut t_acc = 1.0f64;
    let mut q_prev = qval(&mp, &mn);
    let mut iterations = 0;
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let eta_y = &yp - &yn;
        let g = &mm * &eta_y * 0.5 + &c;
        let mut mp_new = DVector::zeros(dim);
        let mut mn_new = DVector::zeros(dim);
        for i in 0..dim {
            mp_new[i] = (yp[i] - step * (g[i] + eps)).max(0.0);
            mn_new[i] = (yn[i] - step * (-g[i] + eps)).max(0.0);
        }
        let q_new = qval(&mp_new, &mn_new);
        if q_new > q_prev {
            // Restart momentum.
            t_acc = 1.0;
            yp.copy_from(&mp);
            yn.copy_from(&mn);
            let eta_y = &yp - &yn;
            let g = &mm * &eta_y * 0.5 + &c;
            for i in 0..dim {
                mp_new[i] = (yp[i] - step * (g[i] + eps)).max(0.0);
                mn_new[i] = (yn[i] - step * (-g[i] + eps)).max(0.0);
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        let mom = (t_acc - 1.0) / t_next;
        yp = &mp_new + (&mp_new - &mp) * mom;
        yn = &mn_new + (&mn_new - &mn) * mom;
        mp = mp_new;
        mn = mn_new;
        t_acc = t_next;

        if iter % 50 == 0 || iter == opts.max_iter {
            let q_now = qval(&mp, &mn);
            let b = primal_from(&mp, &mn);
            let viol = violation(&b);
            let gap = (b.dot(&(sigma * &b)) + q_now).abs();
            if viol <= opts.feas_tol && gap <= 1e-7 * (1.0 + q_now.abs()) {
                let objective = b.dot(&(sigma * &b));
                return Ok(ProjectionResult {
                    b,
                    objective,
                    max_violation: viol,
                    iterations,
                });
            }
            if mp.amax().max(mn.amax()) > 1e14 {
                return Err(HatError::NonConvergence(
                    "projection program appears infeasible (diverging dual)".into(),
                ));
            }
            q_prev = q_now;
        }
    }
    // Accept a mildly looser feasibility slack before giving up.
    let b = primal_from(&mp, &mn);
    let viol = violation(&b);
    if viol <= 1e-7 {
        let objective = b.dot(&(sigma * &b));
        return Ok(ProjectionResult {
            b,
            objective,
            max_violation: viol,
            iterations,
        });
    }
    Err(HatError::NonConvergence(format!(
        "projection solver stalled with constraint violation {viol:.3e}"
    )))
}

/// Shared state for debiasing every node of one fitted model.
pub struct DebiasContext<'a> {
    pub tree: &'a Tree,
    pub data: &'a RegressionData,
    pub fit: &'a RareFit,
    pub sigma_hat: f64,
    pub tau: f64,
    pub lambda_n: f64,
    pub projection: ProjectionOptions,
    sigma_mat: DMatrix<f64>,
    xt_residual: DVector<f64>,
}

impl<'a> DebiasContext<'a> {
    pub fn new(
        tree: &'a Tree,
        data: &'a RegressionData,
        fit: &'a RareFit,
        sigma_hat: f64,
        tau: f64,
        lambda_n: f64,
    ) -> Result<DebiasContext<'a>> {
        if tau <= 0.0 {
            return Err(HatError::InvalidInput("tau must be positive".into()));
        }
        if data.p() != tree.p() {
            return Err(HatError::InvalidInput(
                "design width != number of leaves".into(),
            ));
        }
        let n = data.n() as f64;
        let sigma_mat = data.x.tr_mul(&data.x) / n;
        let xt_residual = data.x.tr_mul(&(&data.y - &data.x * &fit.theta_hat));
        Ok(DebiasContext {
            tree,
            data,
            fit,
            sigma_hat,
            tau,
            lambda_n,
            projection: ProjectionOptions::default(),
            sigma_mat,
            xt_residual,
        })
    }

    pub fn sigma_matrix(&self) -> &DMatrix<f64> {
        &self.sigma_mat
    }

    /// The constraint target `w` for node `u`: the centered coefficient
    /// slice placed on the node's leaf coordinates, zero elsewhere; returned
    /// with its norm.
    pub fn node_weight_vector(&self, u: NodeId) -> (DVector<f64>, f64) {
        let (start, len) = self.tree.leaf_range(u);
        let slice = self.fit.theta_hat.rows(start, len);
        let mean = slice.sum() / len as f64;
        let mut w = DVector::zeros(self.data.p());
        for i in 0..len {
            w[start + i] = slice[i] - mean;
        }
        let kappa = w.norm();
        (w, kappa)
    }
}

/// Debiased quadratic-form inference at one node.
#[derive(Debug, Clone)]
pub struct DebiasResult {
    pub node: NodeId,
    /// Plug-in quadratic form of the fitted slice.
    pub q_hat: f64,
    pub b_hat: DVector<f64>,
    /// Debiased estimate.
    pub q_debiased: f64,
    pub var_hat: f64,
    pub pvalue: f64,
    pub tau: f64,
    pub lambda_n: f64,
}

/// Projection direction for node `u` (zero when the fitted slice is already
/// constant).
pub fn solve_projection(ctx: &DebiasContext<'_>, u: NodeId) -> Result<ProjectionResult> {
    let (w, kappa) = ctx.node_weight_vector(u);
    solve_projection_qp(&ctx.sigma_mat, &w, kappa, ctx.lambda_n, &ctx.projection)
}

/// Debias the plug-in quadratic form at node `u` and convert it to a
/// two-sided p-value. The variance floor `tau / n` keeps the p-value
/// defined when the projection direction vanishes.
pub fn debias_node(ctx: &DebiasContext<'_>, u: NodeId) -> Result<DebiasResult> {
    if ctx.tree.is_leaf(u) {
        return Err(HatError::InvalidInput("debiasing requested at a leaf".into()));
    }
    let n = ctx.data.n() as f64;
    let (start, len) = ctx.tree.leaf_range(u);
    let slice: Vec<f64> = ctx.fit.theta_hat.rows(start, len).iter().copied().collect();
    let q_hat = centering_quadratic(&slice);
    let (w, kappa) = ctx.node_weight_vector(u);
    let b = if kappa <= 1e-12 {
        DVector::zeros(ctx.data.p())
    } else {
        solve_projection_qp(&ctx.sigma_mat, &w, kappa, ctx.lambda_n, &ctx.projection)?.b
    };
    let q_debiased = q_hat + 2.0 / n * b.dot(&ctx.xt_residual);
    let bsb = b.dot(&(&ctx.sigma_mat * &b));
    let var_hat = 4.0 * ctx.sigma_hat * ctx.sigma_hat / n * bsb + ctx.tau / n;
    let pvalue = (2.0 * (1.0 - normal_cdf(q_debiased.abs() / var_hat.sqrt()))).clamp(0.0, 1.0);
    Ok(DebiasResult {
        node: u,
        q_hat,
        b_hat: b,
        q_debiased,
        var_hat,
        pvalue,
        tau: ctx.tau,
        lambda_n: ctx.lambda_n,
    })
}

/// Configuration of the full per-node p-value pipeline.
#[derive(Debug, Clone)]
pub struct RegressionPipelineConfig {
    /// Explicit `(lambda, nu)` grid; default is 10 log-spaced lambdas for
    /// each of two nu values.
    pub grid: Option<Vec<(f64, f64)>>,
    pub folds: usize,
    pub seed: u64,
    /// `lambda_n = lambda_n_c * sqrt(log(p) / n)`.
    pub lambda_n_c: f64,
    pub tau: f64,
    pub fit: RareFitOptions,
}

impl Default for RegressionPipelineConfig {
    fn default() -> Self {
        RegressionPipelineConfig {
            grid: None,
            folds: 10,
            seed: 0,
            lambda_n_c: 1.0,
            tau: 1.0,
            fit: RareFitOptions::default(),
        }
    }
}

/// Per-node diagnostic row of the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct NodeDiagnostics {
    pub node_id: NodeId,
    pub q_debiased: f64,
    pub var_hat: f64,
    pub pvalue: f64,
}

/// Summary of one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionDiagnostics {
    pub sigma_hat: f64,
    pub lambda: f64,
    pub nu: f64,
    pub lambda_n: f64,
    pub tau: f64,
    pub fit_iterations: usize,
    pub fit_converged: bool,
    pub fit_objective: f64,
    pub per_node: Vec<NodeDiagnostics>,
}

/// Default cross-validation grid: for each of two mixing weights, ten
/// log-spaced penalties below the data-driven maximum.
pub fn default_grid(data: &RegressionData, expansion: &TreeExpansion) -> Vec<(f64, f64)> {
    let n = data.n() as f64;
    let ata_y = expansion.apply_transpose(&data.x.tr_mul(&data.y));
    let base = ata_y.amax() / n;
    let mut grid = Vec::with_capacity(20);
    for &nu in &[0.5f64, 0.9] {
        let lam_max = base / nu.max(1.0 - nu);
        for k in 0..10 {
            let frac = 10f64.powf(-3.0 + 3.0 * k as f64 / 9.0);
            grid.push((lam_max * frac, nu));
        }
    }
    grid
}

/// Full pipeline: cross-validated rare-feature fit, scaled-lasso noise
/// level, then a debiased p-value for every internal node. Deterministic
/// given the seed; nodes are debiased in parallel.
pub fn node_pvalues_regression(
    tree: &Tree,
    data: &RegressionData,
    cfg: &RegressionPipelineConfig,
) -> Result<(PValueAssignment, RegressionDiagnostics)> {
    let expansion = build_expansion(tree);
    if data.p() != tree.p() {
        return Err(HatError::InvalidInput(
            "design width != number of leaves".into(),
        ));
    }
    let grid = match &cfg.grid {
        Some(g) => g.clone(),
        None => default_grid(data, &expansion),
    };
    let pick = cross_validate_rare(data, &expansion, &grid, cfg.folds, cfg.seed, &cfg.fit)?;
    let fit = fit_rare(data, &expansion, pick.lambda, pick.nu, &cfg.fit)?;
    // The noise level is estimated in the node-expanded basis, where the
    // coefficient vector is sparse when the truth aggregates on branches;
    // in the raw leaf basis it is dense and the residual would keep
    // unexplained signal.
    let expanded = RegressionData::new(&data.x * &expansion.a, data.y.clone())?;
    let scaled = scaled_lasso_sigma(&expanded, None)?;
    let lambda_n = cfg.lambda_n_c * ((tree.p() as f64).ln() / data.n() as f64).sqrt();
    let ctx = DebiasContext::new(tree, data, &fit, scaled.sigma_hat, cfg.tau, lambda_n)?;

    let internal: Vec<NodeId> = tree.internal_nodes().collect();
    let results: Vec<DebiasResult> = internal
        .par_iter()
        .map(|&u| debias_node(&ctx, u))
        .collect::<Result<_>>()?;

    let mut by_node = vec![None; tree.n_nodes()];
    let mut per_node = Vec::with_capacity(results.len());
    for r in &results {
        by_node[r.node] = Some(r.pvalue);
        per_node.push(NodeDiagnostics {
            node_id: r.node,
            q_debiased: r.q_debiased,
            var_hat: r.var_hat,
            pvalue: r.pvalue,
        });
    }
    let pv = PValueAssignment::from_fn(tree, Provenance::Debiased, |u| {
        by_node[u].ok_or_else(|| HatError::Internal(format!("node {u} missed by debias pass")))
    })?;
    let diagnostics = RegressionDiagnostics {
        sigma_hat: scaled.sigma_hat,
        lambda: pick.lambda,
        nu: pick.nu,
        lambda_n,
        tau: cfg.tau,
        fit_iterations: fit.iterations,
        fit_converged: fit.converged,
        fit_objective: fit.objective,
        per_node,
    };
    Ok((pv, diagnostics))
}
