//! Fitting drivers: the unpenalized EM / one-step-Newton fit used as the
//! initializer, the penalized loops (BAR, LASSO, ALASSO) on top of it, GCV
//! tuning of `tau`, the transformation-parameter grid search and the oracle
//! fit with a known support.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::emcore::{EmError, Model, ModelState};
use crate::penalty::{
    adaptive_weights, alasso_shooting, bar_fixed_point, bar_step, build_surrogate, lasso_shooting, PenaltyError,
    PenaltyKind, Surrogate,
};
use crate::transform::{DomainError, TransformationSpec};

/// Step halvings tried when a proposal leaves the feasible region.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Em(#[from] EmError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("no convergence after {} outer iterations", .0.iterations)]
    NoConvergence(Box<FitResult>),
    #[error("effective number of parameters {s} is not below n = {n}")]
    DegenerateGcv { s: f64, n: usize },
    #[error("every candidate failed: {}", .0.join("; "))]
    AllFailed(Vec<String>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Stop when `||beta^(m+1) - beta^(m)||_2` falls below this.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Convergence of the BAR fixed-point iteration at a fixed surrogate.
    pub bar_tol: f64,
    pub bar_max_iter: usize,
    /// KKT tolerance of the shooting solvers.
    pub shooting_tol: f64,
    pub shooting_max_iter: usize,
    /// Coefficients at or below this in magnitude are reported as zero.
    pub zero_threshold: f64,
    /// Starting baseline jump; `None` means `1/n`.
    pub lambda_init: Option<f64>,
    /// Ridge strength of the fallback initializer.
    pub ridge_tau: f64,
    /// Consecutive objective increases tolerated before the step is halved.
    pub patience: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            max_outer: 5000,
            bar_tol: 1e-8,
            bar_max_iter: 500,
            shooting_tol: 1e-8,
            shooting_max_iter: 10_000,
            zero_threshold: 1e-5,
            lambda_init: None,
            ridge_tau: 1.0,
            patience: 10,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<(), SolverError> {
        let tols = [self.outer_tol, self.bar_tol, self.shooting_tol, self.zero_threshold];
        if tols.iter().any(|t| !(*t > 0.0)) || self.max_outer == 0 || self.bar_max_iter == 0 {
            return Err(SolverError::Config("tolerances and iteration caps must be positive".into()));
        }
        if matches!(self.lambda_init, Some(l) if !(l > 0.0)) || !(self.ridge_tau > 0.0) {
            return Err(SolverError::Config("lambda_init and ridge_tau must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `K x d`, entries within the zero threshold set to exactly 0.
    pub beta_hat: DMatrix<f64>,
    /// Per-risk indices of the nonzero coefficients.
    pub support: Vec<Vec<usize>>,
    /// Final model state (unthresholded `beta`, jumps, weights).
    pub state: ModelState,
    pub loglik_observed: f64,
    pub profile_objective: f64,
    pub gcv: Option<f64>,
    pub tau: f64,
    pub penalty: Option<&'static str>,
    pub iterations: usize,
    pub converged: bool,
    /// `||beta^(m+1) - beta^(m)||_2` per outer iteration.
    pub trace: Vec<f64>,
    /// `max |bar_step(beta*) - beta*|` with the surrogate at the final state.
    pub bar_residual: Option<f64>,
    /// The fit started from the ridge initializer because the unpenalized
    /// fit failed.
    pub ridge_initialized: bool,
}

impl FitResult {
    pub fn lambda_hat(&self) -> &[Vec<f64>] {
        &self.state.lambda
    }
}

/// How `beta` is moved once the surrogate at the current point is built.
#[derive(Debug, Clone)]
enum Rule {
    /// Newton step restricted to the coordinates flagged `true`.
    Newton(Vec<bool>),
    /// Fixed ridge: `{X^T X + tau I}^{-1} X^T W`.
    Ridge(f64),
    Bar { tau: f64, delta: f64 },
    /// Weighted L1 (weights 1 for LASSO).
    L1 { tau: f64, weights: DVector<f64>, adaptive: bool },
}

impl Rule {
    fn label(&self) -> Option<&'static str> {
        match self {
            Rule::Newton(_) | Rule::Ridge(_) => None,
            Rule::Bar { .. } => Some("BAR"),
            Rule::L1 { adaptive: false, .. } => Some("LASSO"),
            Rule::L1 { adaptive: true, .. } => Some("ALASSO"),
        }
    }

    fn tau(&self) -> f64 {
        match self {
            Rule::Newton(_) => 0.0,
            Rule::Ridge(t) | Rule::Bar { tau: t, .. } | Rule::L1 { tau: t, .. } => *t,
        }
    }

    fn propose(&self, s: &Surrogate, beta: &DVector<f64>, cfg: &FitConfig) -> Result<DVector<f64>, SolverError> {
        Ok(match self {
            Rule::Newton(mask) => {
                let idx: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
                let mut out = DVector::zeros(beta.len());
                if !idx.is_empty() {
                    let q = s.gram().select_rows(&idx).select_columns(&idx);
                    let c = DVector::from_iterator(idx.len(), idx.iter().map(|&a| s.xtw()[a]));
                    let sol = Cholesky::new(q).ok_or(PenaltyError::Singular)?.solve(&c);
                    for (t, &a) in idx.iter().enumerate() {
                        out[a] = sol[t];
                    }
                }
                out
            }
            Rule::Ridge(tau) => bar_step(s, &DVector::from_element(beta.len(), 1.0), *tau, 0.0)?,
            Rule::Bar { tau, delta } => {
                match bar_fixed_point(s, beta, *tau, *delta, cfg.bar_tol, cfg.bar_max_iter) {
                    Ok(fp) => fp.beta,
                    // slow tail of a coefficient on its way to zero; the outer loop continues from here
                    Err(PenaltyError::NoConvergence { last, .. }) => last,
                    Err(e) => return Err(e.into()),
                }
            }
            Rule::L1 {
                tau,
                weights,
                adaptive,
            } => {
                if *adaptive {
                    alasso_shooting(s, *tau, weights, beta, cfg.shooting_tol, cfg.shooting_max_iter)?
                } else {
                    lasso_shooting(s, *tau, beta, cfg.shooting_tol, cfg.shooting_max_iter)?
                }
            }
        })
    }

    /// Penalty matching the quadratic model the proposal minimizes, used by
    /// the divergence guard. `reference` is the expansion point.
    fn guard_penalty(&self, b: &DVector<f64>, reference: &DVector<f64>) -> f64 {
        match self {
            Rule::Newton(_) => 0.0,
            Rule::Ridge(tau) => 0.5 * tau * b.norm_squared(),
            Rule::Bar { tau, delta } => {
                0.5 * tau
                    * b.iter()
                        .zip(reference.iter())
                        .map(|(x, r)| x * x / (r * r + delta * delta))
                        .sum::<f64>()
            }
            Rule::L1 { tau, weights, .. } => tau * b.iter().zip(weights.iter()).map(|(x, w)| w * x.abs()).sum::<f64>(),
        }
    }
}

fn blend(from: &[Vec<f64>], to: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    from.iter()
        .zip(to)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect())
        .collect()
}

fn lambda_start(model: &Model, cfg: &FitConfig) -> f64 {
    cfg.lambda_init.unwrap_or(1.0 / model.data().len() as f64)
}

/// The EM loop shared by every fit: profile terms, surrogate, proposal,
/// damping, baseline update, E-step.
fn run(model: &Model, init: ModelState, rule: &Rule, cfg: &FitConfig) -> Result<FitResult, SolverError> {
    let mut state = init;
    let mut trace = Vec::new();
    let mut alpha = 1.0;
    let mut worse_streak = 0;
    let mut converged = false;
    for _ in 0..cfg.max_outer {
        let terms = model.profile_terms(&state)?;
        let beta = state.beta_vec();
        let s = build_surrogate(terms.hessian.as_ref().expect("hessian"), &terms.gradient, &beta)?;
        let proposal = rule.propose(&s, &beta, cfg)?;
        let mut next = &beta + (&proposal - &beta) * alpha;

        // Step back towards beta until the profile objective, the baseline
        // update and the E-step all stay feasible.
        let advance = |b: &DVector<f64>| -> Result<(f64, ModelState), SolverError> {
            let mut trial = state.clone();
            trial.set_beta_vec(b);
            let value = model.profile_objective(&trial)?;
            let target = model.update_lambda(&trial)?;
            // A full baseline update can overshoot when beta moved a lot; pull
            // it back towards the previous jumps until the E-step is defined.
            let mut t = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let lambda = blend(&state.lambda, &target, t);
                let candidate = ModelState { lambda, ..trial.clone() };
                if let Ok(omega) = model.e_step(&candidate) {
                    let candidate = ModelState { omega, ..candidate };
                    if model.profile_objective(&candidate).is_ok() {
                        return Ok((value, candidate));
                    }
                }
                t *= 0.5;
            }
            trial.lambda = target;
            trial.omega = model.e_step(&trial)?;
            model.profile_objective(&trial)?;
            Ok((value, trial))
        };
        let mut attempt = advance(&next);
        let mut halvings = 0;
        while attempt.is_err() && halvings < MAX_HALVINGS {
            next = &beta + (&next - &beta) * 0.5;
            attempt = advance(&next);
            halvings += 1;
        }
        let (value, moved) = attempt?;
        let before = -terms.value + rule.guard_penalty(&beta, &beta);
        let after = -value + rule.guard_penalty(&next, &beta);
        if after > before {
            worse_streak += 1;
            if worse_streak >= cfg.patience {
                alpha *= 0.5;
                worse_streak = 0;
            }
        } else {
            worse_streak = 0;
        }

        state = moved;
        trace.push((&next - &beta).norm());
        // A damped step can be tiny while beta is still far from the
        // proposal, so convergence is judged on the undamped distance.
        if (&proposal - &beta).norm() < cfg.outer_tol {
            converged = true;
            break;
        }
    }
    finish(model, state, rule, cfg, trace, converged)
}

fn finish(
    model: &Model,
    state: ModelState,
    rule: &Rule,
    cfg: &FitConfig,
    trace: Vec<f64>,
    converged: bool,
) -> Result<FitResult, SolverError> {
    let bar_residual = match rule {
        Rule::Bar { tau, delta } => {
            let terms = model.profile_terms(&state)?;
            let beta = state.beta_vec();
            let s = build_surrogate(terms.hessian.as_ref().expect("hessian"), &terms.gradient, &beta)?;
            Some((bar_step(&s, &beta, *tau, *delta)? - &beta).amax())
        }
        _ => None,
    };
    let beta_hat = state.beta.map(|b| if b.abs() > cfg.zero_threshold { b } else { 0.0 });
    let support = (0..beta_hat.nrows())
        .map(|k| (0..beta_hat.ncols()).filter(|&a| beta_hat[(k, a)] != 0.0).collect())
        .collect();
    let mut reported = state.clone();
    reported.beta = beta_hat.clone();
    Ok(FitResult {
        beta_hat,
        support,
        loglik_observed: model.observed_loglik(&reported)?,
        profile_objective: model.profile_objective(&state)?,
        gcv: None,
        tau: rule.tau(),
        penalty: rule.label(),
        iterations: trace.len(),
        converged,
        trace,
        bar_residual,
        ridge_initialized: false,
        state,
    })
}

fn require_converged(fit: FitResult) -> Result<FitResult, SolverError> {
    if fit.converged {
        Ok(fit)
    } else {
        Err(SolverError::NoConvergence(Box::new(fit)))
    }
}

fn newton_fit(model: &Model, mask: Vec<bool>, cfg: &FitConfig) -> Result<FitResult, SolverError> {
    cfg.validate()?;
    let init = model.initial_state(
        DMatrix::zeros(model.n_risks(), model.n_covariates()),
        lambda_start(model, cfg),
    )?;
    require_converged(run(model, init, &Rule::Newton(mask), cfg)?)
}

/// Unpenalized fit on an existing model (see [`fit_unpenalized`]).
pub fn fit_unpenalized_model(model: &Model, cfg: &FitConfig) -> Result<FitResult, SolverError> {
    newton_fit(model, vec![true; model.n_params()], cfg)
}

/// EM with one Newton step in `beta` per iteration, from `beta = 0` and
/// `lambda = 1/n`.
pub fn fit_unpenalized(
    dataset: &Dataset,
    specs: &[TransformationSpec],
    cfg: &FitConfig,
) -> Result<FitResult, SolverError> {
    let model = Model::new(dataset, specs.to_vec())?;
    fit_unpenalized_model(&model, cfg)
}

/// Unpenalized fit with every coefficient outside `support` (per-risk
/// covariate indices) held at zero.
pub fn oracle_fit(
    dataset: &Dataset,
    specs: &[TransformationSpec],
    support: &[Vec<usize>],
    cfg: &FitConfig,
) -> Result<FitResult, SolverError> {
    let model = Model::new(dataset, specs.to_vec())?;
    let d = model.n_covariates();
    if support.len() != model.n_risks() || support.iter().flatten().any(|&a| a >= d) {
        return Err(SolverError::Config("support does not match the data dimensions".into()));
    }
    let mut mask = vec![false; model.n_params()];
    for (k, idx) in support.iter().enumerate() {
        for &a in idx {
            mask[k * d + a] = true;
        }
    }
    newton_fit(&model, mask, cfg)
}

/// Starting state for the penalized loops: the unpenalized fit, or a
/// fixed-ridge fit when that fails.
pub fn initializer(model: &Model, cfg: &FitConfig) -> Result<FitResult, SolverError> {
    match fit_unpenalized_model(model, cfg) {
        Ok(fit) => Ok(fit),
        Err(first) => {
            let init = model.initial_state(
                DMatrix::zeros(model.n_risks(), model.n_covariates()),
                lambda_start(model, cfg),
            )?;
            match run(model, init, &Rule::Ridge(cfg.ridge_tau), cfg).and_then(require_converged) {
                Ok(mut fit) => {
                    fit.ridge_initialized = true;
                    Ok(fit)
                }
                Err(_) => Err(first),
            }
        }
    }
}

fn penalty_rule(kind: &PenaltyKind, tau: f64, p: usize) -> Result<Rule, SolverError> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(SolverError::Config(format!("tau must be finite and nonnegative, got {tau}")));
    }
    Ok(match kind {
        PenaltyKind::Bar { delta } => {
            if !(*delta > 0.0) {
                return Err(SolverError::Config("BAR delta must be positive".into()));
            }
            Rule::Bar { tau, delta: *delta }
        }
        PenaltyKind::Lasso => Rule::L1 {
            tau,
            weights: DVector::from_element(p, 1.0),
            adaptive: false,
        },
        PenaltyKind::Alasso { psi, reference } => {
            if !(*psi > 0.0) {
                return Err(SolverError::Config("ALASSO psi must be positive".into()));
            }
            Rule::L1 {
                tau,
                weights: adaptive_weights(reference, *psi)?,
                adaptive: true,
            }
        }
    })
}

/// Penalized fit at a fixed `tau`, starting from `init` (normally the
/// unpenalized fit on the same model).
pub fn fit_penalized_from(
    model: &Model,
    init: &FitResult,
    kind: &PenaltyKind,
    tau: f64,
    cfg: &FitConfig,
) -> Result<FitResult, SolverError> {
    cfg.validate()?;
    let rule = penalty_rule(kind, tau, model.n_params())?;
    let mut fit = require_converged(run(model, init.state.clone(), &rule, cfg)?)?;
    fit.ridge_initialized = init.ridge_initialized;
    fit.gcv = Some(gcv_score(model, &fit, kind)?);
    Ok(fit)
}

pub fn fit_penalized(
    dataset: &Dataset,
    specs: &[TransformationSpec],
    kind: &PenaltyKind,
    tau: f64,
    cfg: &FitConfig,
) -> Result<FitResult, SolverError> {
    let model = Model::new(dataset, specs.to_vec())?;
    let init = initializer(&model, cfg)?;
    fit_penalized_from(&model, &init, kind, tau, cfg)
}

/// Effective number of parameters `tr{(Q + eta)^{-1} Q}` with `Q = -H` at the
/// fit and `eta = tau diag(p_tau'(|b|) / |b|)`. LASSO and ALASSO count only
/// the nonzero coefficients; BAR keeps every coefficient, its `delta` making
/// `eta` finite at zero.
pub fn effective_parameters(q: &DMatrix<f64>, beta: &DVector<f64>, kind: &PenaltyKind, tau: f64) -> f64 {
    let active: Vec<usize> = match kind {
        PenaltyKind::Bar { .. } => (0..beta.len()).collect(),
        _ => (0..beta.len()).filter(|&a| beta[a] != 0.0).collect(),
    };
    if active.is_empty() {
        return 0.0;
    }
    let qa = q.select_rows(&active).select_columns(&active);
    let m = active.len();
    // BAR: eta_aa = 2 tau^2 / (b_a^2 + delta^2). In the scaled form
    // G (G Q G + 2 tau^2 I)^{-1} G, G = diag(sqrt(b^2 + delta^2)), it stays bounded.
    let (scaled, shift) = match kind {
        PenaltyKind::Bar { delta } => {
            let g: Vec<f64> = active.iter().map(|&a| (beta[a] * beta[a] + delta * delta).sqrt()).collect();
            (
                DMatrix::from_fn(m, m, |i, j| g[i] * qa[(i, j)] * g[j]),
                DVector::from_element(m, 2.0 * tau * tau),
            )
        }
        PenaltyKind::Lasso => (
            qa.clone(),
            DVector::from_iterator(m, active.iter().map(|&a| tau * tau / beta[a].abs())),
        ),
        PenaltyKind::Alasso { psi, reference } => (
            qa.clone(),
            DVector::from_iterator(
                m,
                active
                    .iter()
                    .map(|&a| tau * tau * reference[a].abs().powf(-psi) / beta[a].abs()),
            ),
        ),
    };
    let mut lhs = scaled.clone();
    for i in 0..m {
        lhs[(i, i)] += shift[i];
    }
    let solved = match Cholesky::new(lhs.clone()) {
        Some(c) => c.solve(&scaled),
        None => match lhs.lu().solve(&scaled) {
            Some(s) => s,
            None => return m as f64,
        },
    };
    solved.trace()
}

/// `-l*_p(beta) / (n (1 - s/n)^2)` at a penalized fit.
pub fn gcv_score(model: &Model, fit: &FitResult, kind: &PenaltyKind) -> Result<f64, SolverError> {
    let n = model.data().len();
    let mut state = fit.state.clone();
    state.beta = fit.beta_hat.clone();
    let terms = model.profile_terms(&state)?;
    let beta = state.beta_vec();
    let q = build_surrogate(terms.hessian.as_ref().expect("hessian"), &terms.gradient, &beta)?
        .gram()
        .clone();
    let s = effective_parameters(&q, &beta, kind, fit.tau);
    if s >= n as f64 {
        return Err(SolverError::DegenerateGcv { s, n });
    }
    let shrink = 1.0 - s / n as f64;
    Ok(-fit.profile_objective / (n as f64 * shrink * shrink))
}

/// 20 log-spaced values spanning `[1e-2, 1e2] * sqrt(n)`.
pub fn default_tau_grid(n: usize) -> Vec<f64> {
    let scale = (n as f64).sqrt();
    (0..20).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 19.0) * scale).collect()
}

/// One candidate of a tuning grid.
#[derive(Debug, Clone)]
pub struct TauCandidate {
    pub tau: f64,
    pub gcv: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TauSelection {
    pub tau: f64,
    pub fit: FitResult,
    pub candidates: Vec<TauCandidate>,
}

/// Fits every `tau` of the grid from `init` and keeps the GCV minimizer
/// (smallest `tau` on ties). For ALASSO the reference is taken from `init`
/// when the kind carries an empty one.
pub fn select_tau_from(
    model: &Model,
    init: &FitResult,
    kind: &PenaltyKind,
    grid: &[f64],
    cfg: &FitConfig,
) -> Result<TauSelection, SolverError> {
    if grid.is_empty() {
        return Err(SolverError::Config("empty tau grid".into()));
    }
    let kind = match kind {
        PenaltyKind::Alasso { psi, reference } if reference.is_empty() => PenaltyKind::Alasso {
            psi: *psi,
            reference: init.state.beta_vec(),
        },
        k => k.clone(),
    };
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fits: Vec<Result<FitResult, SolverError>> = sorted
        .par_iter()
        .map(|&tau| fit_penalized_from(model, init, &kind, tau, cfg))
        .collect();
    let mut best: Option<(f64, FitResult)> = None;
    let mut candidates = Vec::with_capacity(sorted.len());
    let mut errors = Vec::new();
    for (tau, res) in sorted.iter().zip(fits) {
        match res {
            Ok(fit) => {
                let g = fit.gcv.expect("gcv set by fit_penalized_from");
                candidates.push(TauCandidate {
                    tau: *tau,
                    gcv: Some(g),
                    error: None,
                });
                if best.as_ref().is_none_or(|(bg, _)| g < *bg) {
                    best = Some((g, fit));
                }
            }
            Err(e) => {
                errors.push(format!("tau={tau}: {e}"));
                candidates.push(TauCandidate {
                    tau: *tau,
                    gcv: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((_, fit)) => Ok(TauSelection {
            tau: fit.tau,
            fit,
            candidates,
        }),
        None => Err(SolverError::AllFailed(errors)),
    }
}

pub fn select_tau(
    dataset: &Dataset,
    specs: &[TransformationSpec],
    kind: &PenaltyKind,
    grid: &[f64],
    cfg: &FitConfig,
) -> Result<TauSelection, SolverError> {
    let model = Model::new(dataset, specs.to_vec())?;
    let init = initializer(&model, cfg)?;
    select_tau_from(&model, &init, kind, grid, cfg)
}

/// Pairs `(i step, j step)` for `i, j = 1..=round(rmax / step)`.
pub fn pair_grid(rmax: f64, step: f64) -> Result<Vec<Vec<f64>>, SolverError> {
    if !(step > 0.0) || !(rmax >= step) {
        return Err(SolverError::Config(format!("need 0 < rstep <= rmax, got {step}, {rmax}")));
    }
    let m = (rmax / step).round() as usize;
    let vals: Vec<f64> = (1..=m).map(|i| i as f64 * step).collect();
    Ok(vals
        .iter()
        .flat_map(|&a| vals.iter().map(move |&b| vec![a, b]))
        .collect())
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub r: Vec<f64>,
    pub loglik: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TransformationSelection {
    pub best: Vec<f64>,
    pub loglik: f64,
    pub table: Vec<GridCell>,
}

/// Unpenalized fit per grid cell; keeps the largest observed log-likelihood,
/// ties going to the lexicographically smaller parameter vector.
pub fn select_transformation(
    dataset: &Dataset,
    r_grid: &[Vec<f64>],
    cfg: &FitConfig,
) -> Result<TransformationSelection, SolverError> {
    if r_grid.is_empty() {
        return Err(SolverError::Config("empty transformation grid".into()));
    }
    let table: Vec<GridCell> = r_grid
        .par_iter()
        .map(|r| {
            let res = r
                .iter()
                .map(|&v| TransformationSpec::new(v).map_err(SolverError::from))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|specs| fit_unpenalized(dataset, &specs, cfg));
            match res {
                Ok(fit) => GridCell {
                    r: r.clone(),
                    loglik: Some(fit.loglik_observed),
                    error: None,
                },
                Err(e) => GridCell {
                    r: r.clone(),
                    loglik: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&a, &b| {
        table[a]
            .r
            .iter()
            .zip(&table[b].r)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut best: Option<usize> = None;
    for &i in &order {
        if let Some(l) = table[i].loglik {
            if best.is_none_or(|b| l > table[b].loglik.expect("scored")) {
                best = Some(i);
            }
        }
    }
    match best {
        Some(i) => Ok(TransformationSelection {
            best: table[i].r.clone(),
            loglik: table[i].loglik.expect("scored"),
            table,
        }),
        None => Err(SolverError::AllFailed(
            table.iter().filter_map(|c| c.error.clone()).collect(),
        )),
    }
}
