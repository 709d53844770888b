//! Least-squares surrogate of the profile objective and the penalized
//! coefficient updates built on it: broken adaptive ridge (BAR), LASSO and
//! adaptive LASSO.
//!
//! With `X` the upper Cholesky factor of `-H` and `W = X^{-T}(-H beta + u)`,
//! `||W - X b||^2 / 2` is the second-order model of `-l*_p` around `beta`
//! (up to a constant). The updates work with the Gram form `Q = X^T X`,
//! `c = X^T W` throughout, which avoids forming `W` back from `X`.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

/// Jitter levels tried in turn when `-H` is not numerically positive definite.
const JITTER: [f64; 8] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_PSI: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("-H is not positive definite even with jitter 1e-2")]
    IndefiniteHessian,
    #[error("penalized normal equations are singular")]
    Singular,
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize, last: DVector<f64> },
    #[error("adaptive weight of coefficient {index} is infinite (reference is 0)")]
    InfiniteWeight { index: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    /// Upper triangular, `X^T X = -H + jitter I`.
    pub x: DMatrix<f64>,
    pub w: DVector<f64>,
    /// Diagonal jitter that was needed for the factorization (0 normally).
    pub jitter: f64,
    gram: DMatrix<f64>,
    xtw: DVector<f64>,
}

impl Surrogate {
    /// `X^T X`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `X^T W = -H beta + u`.
    pub fn xtw(&self) -> &DVector<f64> {
        &self.xtw
    }

    pub fn dim(&self) -> usize {
        self.xtw.len()
    }

    /// `||W - X b||^2 / 2`.
    pub fn loss(&self, b: &DVector<f64>) -> f64 {
        0.5 * (&self.w - &self.x * b).norm_squared()
    }

    /// Gradient of [`Self::loss`]: `X^T X b - X^T W`.
    pub fn loss_gradient(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.gram * b - &self.xtw
    }

    /// Unpenalized minimizer (the Newton step when no jitter was added).
    pub fn least_squares(&self) -> Result<DVector<f64>, PenaltyError> {
        Cholesky::new(self.gram.clone())
            .map(|c| c.solve(&self.xtw))
            .ok_or(PenaltyError::Singular)
    }
}

pub fn build_surrogate(h: &DMatrix<f64>, u: &DVector<f64>, beta: &DVector<f64>) -> Result<Surrogate, PenaltyError> {
    let p = beta.len();
    if h.shape() != (p, p) || u.len() != p {
        return Err(PenaltyError::Dimension(format!(
            "H {:?}, u {}, beta {}",
            h.shape(),
            u.len(),
            p
        )));
    }
    let neg_h = -h;
    let xtw = &neg_h * beta + u;
    for eps in JITTER {
        let mut q = neg_h.clone();
        for a in 0..p {
            q[(a, a)] += eps;
        }
        if let Some(chol) = Cholesky::new(q.clone()) {
            let x = chol.l().transpose();
            let w = chol
                .l()
                .solve_lower_triangular(&xtw)
                .ok_or(PenaltyError::IndefiniteHessian)?;
            return Ok(Surrogate {
                x,
                w,
                jitter: eps,
                gram: q,
                xtw,
            });
        }
    }
    Err(PenaltyError::IndefiniteHessian)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    Bar { delta: f64 },
    Lasso,
    Alasso { psi: f64, reference: DVector<f64> },
}

impl PenaltyKind {
    pub fn bar() -> Self {
        PenaltyKind::Bar { delta: DEFAULT_DELTA }
    }

    pub fn alasso(reference: DVector<f64>) -> Self {
        PenaltyKind::Alasso {
            psi: DEFAULT_PSI,
            reference,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PenaltyKind::Bar { .. } => "BAR",
            PenaltyKind::Lasso => "LASSO",
            PenaltyKind::Alasso { .. } => "ALASSO",
        }
    }
}

/// `{X^T X + tau D}^{-1} X^T W` with `D = diag(1 / (beta_prev^2 + delta^2))`.
///
/// Solved as `G (G Q G + tau I)^{-1} G c` with `G = D^{-1/2}`, which stays
/// well conditioned when some entries of `beta_prev` are tiny.
pub fn bar_step(s: &Surrogate, beta_prev: &DVector<f64>, tau: f64, delta: f64) -> Result<DVector<f64>, PenaltyError> {
    let p = s.dim();
    if beta_prev.len() != p {
        return Err(PenaltyError::Dimension(format!("beta_prev {} vs {p}", beta_prev.len())));
    }
    let g = beta_prev.map(|b| (b * b + delta * delta).sqrt());
    let mut m = DMatrix::from_fn(p, p, |a, b| g[a] * s.gram[(a, b)] * g[b]);
    for a in 0..p {
        m[(a, a)] += tau;
    }
    let rhs = g.component_mul(&s.xtw);
    let y = match Cholesky::new(m.clone()) {
        Some(c) => c.solve(&rhs),
        None => m.lu().solve(&rhs).ok_or(PenaltyError::Singular)?,
    };
    Ok(g.component_mul(&y))
}

/// Result of iterating [`bar_step`] to its fixed point.
#[derive(Debug, Clone)]
pub struct BarFixedPoint {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// `max |bar_step(beta) - beta|` at the returned point.
    pub residual: f64,
}

pub fn bar_fixed_point(
    s: &Surrogate,
    start: &DVector<f64>,
    tau: f64,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BarFixedPoint, PenaltyError> {
    let mut beta = start.clone();
    for it in 1..=max_iter {
        let next = bar_step(s, &beta, tau, delta)?;
        let change = (&next - &beta).amax();
        beta = next;
        if change < tol {
            return Ok(BarFixedPoint {
                residual: (bar_step(s, &beta, tau, delta)? - &beta).amax(),
                beta,
                iterations: it,
            });
        }
    }
    Err(PenaltyError::NoConvergence {
        iterations: max_iter,
        last: beta,
    })
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `||W - X b||^2 / 2 + tau sum_a weights_a |b_a|`.
pub fn l1_objective(s: &Surrogate, b: &DVector<f64>, tau: f64, weights: &DVector<f64>) -> f64 {
    s.loss(b) + tau * b.iter().zip(weights.iter()).map(|(x, w)| w * x.abs()).sum::<f64>()
}

/// Largest violation of the weighted-L1 optimality conditions at `b`.
pub fn kkt_residual(s: &Surrogate, b: &DVector<f64>, tau: f64, weights: &DVector<f64>) -> f64 {
    let g = s.loss_gradient(b);
    (0..b.len())
        .map(|a| {
            let t = tau * weights[a];
            if b[a] != 0.0 {
                (g[a] + t * b[a].signum()).abs()
            } else {
                (g[a].abs() - t).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// One ascending-order coordinate sweep of soft-thresholding updates.
pub fn shooting_sweep(s: &Surrogate, tau: f64, weights: &DVector<f64>, b: &mut DVector<f64>) {
    let q = &s.gram;
    let mut g = s.loss_gradient(b);
    for a in 0..b.len() {
        let qaa = q[(a, a)];
        let z = qaa * b[a] - g[a];
        let next = soft(z, tau * weights[a]) / qaa;
        let step = next - b[a];
        if step != 0.0 {
            g.axpy(step, &q.column(a), 1.0);
            b[a] = next;
        }
    }
}

fn weighted_shooting(
    s: &Surrogate,
    tau: f64,
    weights: &DVector<f64>,
    beta_init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, PenaltyError> {
    if beta_init.len() != s.dim() || weights.len() != s.dim() {
        return Err(PenaltyError::Dimension("shooting inputs".into()));
    }
    let mut b = beta_init.clone();
    for _ in 0..max_iter {
        shooting_sweep(s, tau, weights, &mut b);
        if kkt_residual(s, &b, tau, weights) < tol {
            return Ok(b);
        }
    }
    Err(PenaltyError::NoConvergence {
        iterations: max_iter,
        last: b,
    })
}

pub fn lasso_shooting(
    s: &Surrogate,
    tau: f64,
    beta_init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, PenaltyError> {
    weighted_shooting(s, tau, &DVector::from_element(s.dim(), 1.0), beta_init, tol, max_iter)
}

pub fn alasso_shooting(
    s: &Surrogate,
    tau: f64,
    weights: &DVector<f64>,
    beta_init: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, PenaltyError> {
    if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
        return Err(PenaltyError::InfiniteWeight { index });
    }
    weighted_shooting(s, tau, weights, beta_init, tol, max_iter)
}

/// `1 / |reference_a|^psi`.
pub fn adaptive_weights(reference: &DVector<f64>, psi: f64) -> Result<DVector<f64>, PenaltyError> {
    if let Some(index) = reference.iter().position(|&r| r == 0.0) {
        return Err(PenaltyError::InfiniteWeight { index });
    }
    Ok(reference.map(|r| r.abs().powf(-psi)))
}

/// Penalty at `beta`. For BAR, `beta_ref` is the current reweighting point.
pub fn penalty_value(
    kind: &PenaltyKind,
    beta: &DVector<f64>,
    tau: f64,
    beta_ref: &DVector<f64>,
) -> Result<f64, PenaltyError> {
    Ok(match kind {
        PenaltyKind::Lasso => tau * beta.iter().map(|b| b.abs()).sum::<f64>(),
        PenaltyKind::Alasso { psi, reference } => {
            let w = adaptive_weights(reference, *psi)?;
            tau * beta.iter().zip(w.iter()).map(|(b, w)| w * b.abs()).sum::<f64>()
        }
        PenaltyKind::Bar { delta } => {
            tau * beta
                .iter()
                .zip(beta_ref.iter())
                .map(|(b, r)| b * b / (r * r + delta * delta))
                .sum::<f64>()
        }
    })
}
