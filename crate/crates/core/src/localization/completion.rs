//! Low-rank completion of a partially observed symmetric matrix.
//!
//! Minimizes `f(X) = ½‖P_Ω(X − T)‖²` over symmetric matrices of fixed rank
//! `r` with Riemannian conjugate gradients. Points are kept factored as
//! `X = U·diag(λ)·Uᵀ` with orthonormal `U`; tangent vectors at `X` are
//! `U·A·Uᵀ + B·Uᵀ + U·Bᵀ` with `Uᵀ·B = 0`, stored densely.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const DEFAULT_RANK: usize = 4;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-6;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
pub const DEFAULT_STALL_FRACTION: f64 = 1e-6;
const STALL_WINDOW: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionOptions {
    pub target_rank: usize,
    pub max_iters: usize,
    /// Relative masked residual at which the iteration stops.
    pub tol: f64,
    /// Stop when the residual improved by less than this fraction over the
    /// last 25 steps.
    pub stall_fraction: f64,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions {
            target_rank: DEFAULT_RANK,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            stall_fraction: DEFAULT_STALL_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// The line search found no decrease, or progress flattened out.
    Stalled,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Completion {
    /// Completed symmetric matrix of rank at most `target_rank`.
    pub matrix: DMatrix<f64>,
    /// Accepted CG steps.
    pub iterations: usize,
    /// Final relative masked residual `‖P_Ω(X − T)‖ / ‖P_Ω(T)‖`.
    pub residual: f64,
    /// Relative masked residual before the first step and after each one.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

impl Completion {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Symmetric rank-r matrix `U·diag(λ)·Uᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct FixedRank {
    u: DMatrix<f64>,
    lambda: DVector<f64>,
}

impl FixedRank {
    /// Best rank-r approximation of a symmetric matrix.
    pub(crate) fn truncate(x: &DMatrix<f64>, r: usize) -> Self {
        let sym = (x + x.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let order = top_by_magnitude(&eig.eigenvalues, r);
        FixedRank { u: eig.eigenvectors.select_columns(&order), lambda: eig.eigenvalues.select_rows(&order) }
    }

    pub(crate) fn dense(&self) -> DMatrix<f64> {
        let scaled = &self.u * DMatrix::from_diagonal(&self.lambda);
        scaled * self.u.transpose()
    }

    fn components(&self, z: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let zu = z * &self.u;
        let a = self.u.transpose() * &zu;
        let a = (&a + a.transpose()) * 0.5;
        let b = &zu - &self.u * &a;
        (a, b)
    }

    /// Orthogonal projection of a symmetric matrix onto the tangent space.
    pub(crate) fn project(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let (a, b) = self.components(z);
        let mut out = &self.u * a * self.u.transpose();
        let bu = b * self.u.transpose();
        out += &bu;
        out += bu.transpose();
        out
    }

    /// Rank-r truncation of `X + t·ξ`, computed from a `2r × 2r` core.
    pub(crate) fn retract(&self, xi: &DMatrix<f64>, t: f64) -> Self {
        let r = self.lambda.len();
        let (a, b) = self.components(xi);
        let qr = b.qr();
        let mut q = qr.q();
        // keep Q orthogonal to U even when B is rank deficient
        q -= &self.u * (self.u.transpose() * &q);
        let rr = qr.r() * t;

        let mut core = DMatrix::zeros(2 * r, 2 * r);
        core.view_mut((0, 0), (r, r)).copy_from(&(DMatrix::from_diagonal(&self.lambda) + a * t));
        core.view_mut((r, 0), (r, r)).copy_from(&rr);
        core.view_mut((0, r), (r, r)).copy_from(&rr.transpose());

        let eig = core.symmetric_eigen();
        let order = top_by_magnitude(&eig.eigenvalues, r);
        let m = self.u.nrows();
        let mut basis = DMatrix::zeros(m, 2 * r);
        basis.columns_mut(0, r).copy_from(&self.u);
        basis.columns_mut(r, r).copy_from(&q.columns(0, r));
        FixedRank { u: basis * eig.eigenvectors.select_columns(&order), lambda: eig.eigenvalues.select_rows(&order) }
    }
}

fn top_by_magnitude(values: &DVector<f64>, r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].abs().total_cmp(&values[i].abs()).then(i.cmp(&j)));
    order.truncate(r);
    order
}

fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// `P_Ω(X − T)`.
pub fn masked_residual(x: &DMatrix<f64>, target: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| if mask[(i, j)] { x[(i, j)] - target[(i, j)] } else { 0.0 })
}

/// `½‖P_Ω(X − T)‖²`.
pub fn masked_objective(x: &DMatrix<f64>, target: &DMatrix<f64>, mask: &DMatrix<bool>) -> f64 {
    0.5 * masked_residual(x, target, mask).norm_squared()
}

/// Euclidean gradient of [`masked_objective`], which is the masked residual.
pub fn masked_gradient(x: &DMatrix<f64>, target: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    masked_residual(x, target, mask)
}

/// Completes `target` on the symmetric `mask`, starting from the rank-r
/// truncation of `init`. Entries of `target` off the mask are ignored.
pub fn complete_symmetric(
    target: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    init: &DMatrix<f64>,
    options: &CompletionOptions,
) -> Result<Completion> {
    let m = target.nrows();
    if target.shape() != (m, m) || mask.shape() != (m, m) || init.shape() != (m, m) {
        return Err(Error::domain("matrix", "target, mask and init must be square and equally sized"));
    }
    let r = options.target_rank;
    if r == 0 || r > m {
        return Err(Error::domain("target_rank", format!("{r} must be in 1..={m}")));
    }
    if !(options.tol >= 0.0) {
        return Err(Error::domain("tol", format!("{} must be >= 0", options.tol)));
    }
    if (0..m).any(|i| (0..m).any(|j| mask[(i, j)] != mask[(j, i)])) {
        return Err(Error::domain("mask", "observation mask must be symmetric"));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("init", "initial matrix has non-finite entries"));
    }

    let target = DMatrix::from_fn(m, m, |i, j| if mask[(i, j)] { target[(i, j)] } else { 0.0 });
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("target", "observed entries must be finite"));
    }
    let scale = match target.norm() {
        n if n > 0.0 => n,
        _ => 1.0,
    };

    let observed = mask.iter().filter(|&&b| b).count();
    let guidance = (m as f64).powf(1.2) * r as f64 * (m as f64).ln();
    if (observed as f64) < guidance {
        log::warn!(
            "{observed} observed entries is below the {guidance:.0} suggested for rank {r} completion of size {m}"
        );
    }

    let mut x = FixedRank::truncate(init, r);
    let mut res = masked_residual(&x.dense(), &target, mask);
    let mut f = 0.5 * res.norm_squared();
    let mut history = vec![res.norm() / scale];
    let mut grad = x.project(&res);
    let mut dir = -&grad;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < options.max_iters {
        if *history.last().unwrap() < options.tol {
            stop = StopReason::Converged;
            break;
        }
        let mut slope = frobenius_dot(&grad, &dir);
        if !(slope < 0.0) {
            dir = -&grad;
            slope = -grad.norm_squared();
        }
        if !(slope < 0.0) {
            stop = StopReason::Stalled;
            break;
        }

        // exact minimizer of the objective along the linearized step
        let masked_dir = masked_residual(&dir, &DMatrix::zeros(m, m), mask);
        let curvature = masked_dir.norm_squared();
        let mut t = if curvature > 0.0 { -frobenius_dot(&masked_dir, &res) / curvature } else { 1.0 };
        if !(t > 0.0 && t.is_finite()) {
            t = 1.0;
        }

        let mut best: Option<(FixedRank, DMatrix<f64>, f64)> = None;
        let mut armijo_met = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = x.retract(&dir, t);
            let cand_res = masked_residual(&cand.dense(), &target, mask);
            let cand_f = 0.5 * cand_res.norm_squared();
            if cand_f.is_finite() && best.as_ref().is_none_or(|b| cand_f < b.2) {
                best = Some((cand, cand_res, cand_f));
            }
            if cand_f <= f + ARMIJO * t * slope {
                armijo_met = true;
                break;
            }
            t *= 0.5;
        }
        let (cand, cand_res, cand_f) = match best {
            Some(b) if armijo_met || b.2 < f => b,
            _ => {
                stop = StopReason::Stalled;
                break;
            }
        };

        let old_grad = grad;
        let old_dir = dir;
        x = cand;
        res = cand_res;
        f = cand_f;
        iterations += 1;
        history.push(res.norm() / scale);

        grad = x.project(&res);
        let moved_grad = x.project(&old_grad);
        let moved_dir = x.project(&old_dir);
        let beta = (frobenius_dot(&grad, &(&grad - &moved_grad)) / old_grad.norm_squared()).max(0.0);
        dir = -&grad + moved_dir * if beta.is_finite() { beta } else { 0.0 };

        let n = history.len();
        if n > STALL_WINDOW {
            let before = history[n - 1 - STALL_WINDOW];
            if before - history[n - 1] <= options.stall_fraction * before {
                stop = StopReason::Stalled;
                break;
            }
        }
    }
    let residual = *history.last().unwrap();
    if residual < options.tol {
        stop = StopReason::Converged;
    }

    let dense = x.dense();
    Ok(Completion { matrix: (&dense + dense.transpose()) * 0.5, iterations, residual, history, stop })
}
