//! Likelihood machinery for the transformation model on a per-risk jump grid:
//! cumulative loads, subdistribution increments, the observed log-likelihood,
//! the E-step weights, the closed-form baseline update, and the profile
//! objective in `beta` with its analytic gradient and Hessian.
//!
//! Covariates are step functions with a handful of pieces per subject, so every
//! load decomposes as `A = sum_s a_s` with `a_s = exp(beta_k . z_s) * (baseline
//! mass of piece s)`. Gradients and Hessians are accumulated as small
//! per-subject coefficient matrices over pieces and scattered onto `z_s z_s'^T`
//! once per subject.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{build_jump_grid, DataError, Dataset, JumpGrid, Outcome};
use crate::transform::TransformationSpec;

/// `S(L)` at or below this is treated as a degenerate state.
pub const SURVIVAL_FLOOR: f64 = 1e-12;
/// Smallest admissible per-subject likelihood factor / E-step normalizer.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;
/// A jump below this whose weights have all underflowed is set to zero.
pub const VANISHED_JUMP: f64 = 1e-250;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmError {
    #[error("overall survival at L of subject {subject} is {value:e}")]
    NonPositiveSurvival { subject: usize, value: f64 },
    #[error("likelihood factor of subject {subject} is not positive (log = {log_value})")]
    NonPositiveLikelihoodTerm { subject: usize, log_value: f64 },
    #[error("E-step normalizer of subject {subject} vanished")]
    ZeroDenominator { subject: usize },
    #[error("baseline jump {index} of risk {risk} updated to a non-positive value")]
    NonPositiveLambda { risk: usize, index: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// E-step weights `omega[i][k][j - lo]` over the grid indices of risk `k`
/// inside subject `i`'s censoring interval.
pub type Weights = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// `K x d`; row `k` is `beta_k`.
    pub beta: DMatrix<f64>,
    /// Jump sizes aligned with the grid of each risk.
    pub lambda: Vec<Vec<f64>>,
    pub omega: Weights,
}

impl ModelState {
    /// Stacked risk-major coefficient vector `(beta_1', ..., beta_K')'`.
    pub fn beta_vec(&self) -> DVector<f64> {
        stack(&self.beta)
    }

    pub fn set_beta_vec(&mut self, v: &DVector<f64>) {
        self.beta = unstack(v, self.beta.nrows(), self.beta.ncols());
    }
}

pub fn stack(beta: &DMatrix<f64>) -> DVector<f64> {
    let (k, d) = beta.shape();
    DVector::from_fn(k * d, |idx, _| beta[(idx / d, idx % d)])
}

pub fn unstack(v: &DVector<f64>, k: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, d, |r, c| v[r * d + c])
}

/// Value, gradient and (optionally) Hessian of the profile objective.
#[derive(Debug, Clone)]
pub struct ProfileTerms {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// A dataset bound to transformation parameters and its jump grid.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    data: &'a Dataset,
    grid: JumpGrid,
    specs: Vec<TransformationSpec>,
    /// `starts[i][k]`: first grid index of each covariate piece, plus `m_k`.
    starts: Vec<Vec<Vec<usize>>>,
}

impl<'a> Model<'a> {
    pub fn new(data: &'a Dataset, specs: Vec<TransformationSpec>) -> Result<Self, DataError> {
        if specs.len() != data.n_risks() {
            return Err(DataError::Schema(format!(
                "{} transformation parameters for {} risks",
                specs.len(),
                data.n_risks()
            )));
        }
        let grid = build_jump_grid(data)?;
        let starts = data
            .subjects()
            .iter()
            .map(|s| {
                grid.times
                    .iter()
                    .map(|t| {
                        let mut st = vec![0];
                        st.extend(s.covariates.knots().iter().map(|&u| t.partition_point(|&x| x <= u)));
                        st.push(t.len());
                        st
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            data,
            grid,
            specs,
            starts,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn grid(&self) -> &JumpGrid {
        &self.grid
    }

    pub fn specs(&self) -> &[TransformationSpec] {
        &self.specs
    }

    pub fn n_risks(&self) -> usize {
        self.data.n_risks()
    }

    pub fn n_covariates(&self) -> usize {
        self.data.n_covariates()
    }

    pub fn n_params(&self) -> usize {
        self.n_risks() * self.n_covariates()
    }

    /// `beta = beta`, `lambda_kj = lambda0` everywhere, weights from one E-step.
    pub fn initial_state(&self, beta: DMatrix<f64>, lambda0: f64) -> Result<ModelState, EmError> {
        if beta.shape() != (self.n_risks(), self.n_covariates()) {
            return Err(EmError::Dimension(format!("beta is {:?}", beta.shape())));
        }
        let lambda = self.grid.times.iter().map(|t| vec![lambda0; t.len()]).collect();
        let mut state = ModelState {
            beta,
            lambda,
            omega: self.zero_weights(),
        };
        state.omega = self.e_step(&state)?;
        Ok(state)
    }

    pub fn zero_weights(&self) -> Weights {
        (0..self.data.len())
            .map(|i| (0..self.n_risks()).map(|k| vec![0.0; self.grid.in_interval[k][i].len()]).collect())
            .collect()
    }

    fn prefix_sums(&self, state: &ModelState) -> Vec<Vec<f64>> {
        state
            .lambda
            .iter()
            .map(|l| {
                let mut p = Vec::with_capacity(l.len() + 1);
                let mut acc = 0.0;
                p.push(0.0);
                for &v in l {
                    acc += v;
                    p.push(acc);
                }
                p
            })
            .collect()
    }

    fn loads<'s>(&'s self, state: &ModelState, prefix: &'s [f64], i: usize, k: usize) -> Loads<'s> {
        let pieces = self.data.subjects()[i].covariates.pieces();
        let beta_k = state.beta.row(k);
        let eta: Vec<f64> = pieces
            .iter()
            .map(|z| z.iter().zip(beta_k.iter()).map(|(a, b)| a * b).sum())
            .collect();
        Loads {
            exp_eta: eta.iter().map(|e| e.exp()).collect(),
            eta,
            starts: &self.starts[i][k],
            prefix,
        }
    }

    // ------------------------------------------------------------------
    // Pointwise quantities
    // ------------------------------------------------------------------

    /// `sum_{t_kj <= t} lambda_kj exp(beta_k . Z_i(t_kj))`.
    pub fn cum_load(&self, state: &ModelState, i: usize, k: usize, t: f64) -> f64 {
        let prefix = self.prefix_sums(state);
        let count = self.grid.times[k].partition_point(|&x| x <= t);
        self.loads(state, &prefix[k], i, k).total(count)
    }

    pub fn subdist_f(&self, state: &ModelState, i: usize, k: usize, t: f64) -> f64 {
        let a = self.cum_load(state, i, k, t);
        -(-self.specs[k].g_raw(a)).exp_m1()
    }

    pub fn survival_s(&self, state: &ModelState, i: usize, t: f64) -> Result<f64, EmError> {
        let s = 1.0 - (0..self.n_risks()).map(|k| self.subdist_f(state, i, k, t)).sum::<f64>();
        if s <= SURVIVAL_FLOOR {
            return Err(EmError::NonPositiveSurvival { subject: i, value: s });
        }
        Ok(s)
    }

    /// Jump of `F_k(.; Z_i)` at grid point `j` of risk `k`.
    pub fn delta_f_exact(&self, state: &ModelState, i: usize, k: usize, j: usize) -> f64 {
        let prefix = self.prefix_sums(state);
        let loads = self.loads(state, &prefix[k], i, k);
        let before = loads.total(j);
        let inc = state.lambda[k][j] * loads.exp_eta[loads.piece_of(j)];
        let spec = &self.specs[k];
        (-spec.g_raw(before)).exp() * -(-spec.g_increment_raw(before, inc)).exp_m1()
    }

    /// First-order approximation `G~(A_j) exp(beta_k . Z_ikj) lambda_kj`.
    pub fn delta_f_approx(&self, state: &ModelState, i: usize, k: usize, j: usize) -> f64 {
        let prefix = self.prefix_sums(state);
        let loads = self.loads(state, &prefix[k], i, k);
        let a = loads.total(j + 1);
        self.specs[k].g_tilde_raw(a) * loads.exp_eta[loads.piece_of(j)] * state.lambda[k][j]
    }

    // ------------------------------------------------------------------
    // Observed likelihood
    // ------------------------------------------------------------------

    pub fn observed_loglik(&self, state: &ModelState) -> Result<f64, EmError> {
        let prefix = self.prefix_sums(state);
        let k_total = self.n_risks();
        let mut total = 0.0;
        for (i, subject) in self.data.subjects().iter().enumerate() {
            let term = match subject.outcome {
                Outcome::RightCensored => {
                    let mut s = 1.0;
                    for k in 0..k_total {
                        let count = self.grid.at_or_below_left[k][i];
                        let a = self.loads(state, &prefix[k], i, k).total(count);
                        s += (-self.specs[k].g_raw(a)).exp_m1();
                    }
                    if s <= LIKELIHOOD_FLOOR {
                        f64::NEG_INFINITY
                    } else {
                        s.ln()
                    }
                }
                Outcome::Event { .. } => {
                    let logs: Vec<f64> = (0..k_total)
                        .filter(|&k| self.data.relevant_to(i, k))
                        .map(|k| {
                            let loads = self.loads(state, &prefix[k], i, k);
                            let range = self.grid.in_interval[k][i].clone();
                            let a_left = loads.total(range.start);
                            let a_right = loads.total(range.end);
                            let spec = &self.specs[k];
                            let dg = spec.g_increment_raw(a_left, a_right - a_left);
                            -spec.g_raw(a_left) + (-(-dg).exp_m1()).ln()
                        })
                        .collect();
                    log_sum_exp(&logs)
                }
            };
            if !(term > LIKELIHOOD_FLOOR.ln()) {
                return Err(EmError::NonPositiveLikelihoodTerm {
                    subject: i,
                    log_value: term,
                });
            }
            total += term;
        }
        Ok(total)
    }

    // ------------------------------------------------------------------
    // EM steps
    // ------------------------------------------------------------------

    /// Conditional probabilities of failing from cause `k` in each grid cell
    /// of the censoring interval, using exact subdistribution jumps.
    pub fn e_step(&self, state: &ModelState) -> Result<Weights, EmError> {
        let prefix = self.prefix_sums(state);
        let k_total = self.n_risks();
        let mut omega = self.zero_weights();
        for (i, subject) in self.data.subjects().iter().enumerate() {
            if let Outcome::RightCensored = subject.outcome {
                continue;
            }
            // Per risk: log of the subdistribution at the interval start, and
            // the cell masses relative to it.
            let mut offsets = vec![f64::NEG_INFINITY; k_total];
            let mut cells: Vec<Vec<f64>> = vec![Vec::new(); k_total];
            for k in 0..k_total {
                let range = self.grid.in_interval[k][i].clone();
                if range.is_empty() {
                    continue;
                }
                let loads = self.loads(state, &prefix[k], i, k);
                let spec = &self.specs[k];
                let mut a = loads.total(range.start);
                let mut piece = loads.piece_of(range.start);
                offsets[k] = -spec.g_raw(a);
                let mut surv = 1.0;
                let slot = &mut cells[k];
                slot.reserve(range.len());
                for j in range {
                    while j >= loads.starts[piece + 1] {
                        piece += 1;
                    }
                    let inc = state.lambda[k][j] * loads.exp_eta[piece];
                    let em = (-spec.g_increment_raw(a, inc)).exp_m1();
                    slot.push(-surv * em);
                    surv *= 1.0 + em;
                    a += inc;
                }
            }
            let top = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scales: Vec<f64> = offsets.iter().map(|o| (o - top).exp()).collect();
            let total: f64 = cells
                .iter()
                .zip(&scales)
                .map(|(c, sc)| sc * c.iter().sum::<f64>())
                .sum();
            if !(total > 0.0 && total.ln() + top >= LIKELIHOOD_FLOOR.ln()) {
                return Err(EmError::ZeroDenominator { subject: i });
            }
            for (k, slot) in cells.into_iter().enumerate() {
                let f = scales[k] / total;
                omega[i][k] = slot.into_iter().map(|v| v * f).collect();
            }
        }
        Ok(omega)
    }

    /// Closed-form update of the baseline jumps at fixed `beta` and weights.
    ///
    /// The denominator uses `-G~'/G~ > 0`, which for `r = 0` gives the usual
    /// Poisson-EM update `sum omega / sum exp(beta . Z)`. Grid points outside
    /// every relevant censoring interval get zero mass, as do jumps that have
    /// already vanished numerically.
    pub fn update_lambda(&self, state: &ModelState) -> Result<Vec<Vec<f64>>, EmError> {
        let prefix = self.prefix_sums(state);
        let k_total = self.n_risks();
        let n = self.data.len();

        // Right-censored subjects: G~_k(A_k(L)) / S(L), shared across risks.
        let mut censor_coef: Vec<Vec<f64>> = vec![Vec::new(); n];
        for (i, subject) in self.data.subjects().iter().enumerate() {
            if subject.outcome != Outcome::RightCensored {
                continue;
            }
            let loads: Vec<f64> = (0..k_total)
                .map(|k| self.loads(state, &prefix[k], i, k).total(self.grid.at_or_below_left[k][i]))
                .collect();
            let s = 1.0
                + loads
                    .iter()
                    .zip(&self.specs)
                    .map(|(&a, spec)| (-spec.g_raw(a)).exp_m1())
                    .sum::<f64>();
            if s <= SURVIVAL_FLOOR {
                return Err(EmError::NonPositiveSurvival { subject: i, value: s });
            }
            censor_coef[i] = loads.iter().zip(&self.specs).map(|(&a, spec)| spec.g_tilde_raw(a) / s).collect();
        }

        let mut out = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let m = self.grid.len(k);
            let spec = &self.specs[k];
            let mut num = vec![0.0; m];
            let mut den = vec![0.0; m];
            // diff[j] accumulates contributions constant over a run of indices
            let mut diff = vec![0.0; m + 1];
            for i in 0..n {
                let loads = self.loads(state, &prefix[k], i, k);
                let range = self.grid.in_interval[k][i].clone();
                if !range.is_empty() {
                    let w = &state.omega[i][k];
                    // tail[t] = sum_{j' >= lo + t} omega_j' * (-rho(A_j'))
                    let mut tail = vec![0.0; range.len() + 1];
                    let mut a = loads.total(range.start);
                    let mut piece = loads.piece_of(range.start);
                    let mut contrib = Vec::with_capacity(range.len());
                    for (t, j) in range.clone().enumerate() {
                        while j >= loads.starts[piece + 1] {
                            piece += 1;
                        }
                        a += state.lambda[k][j] * loads.exp_eta[piece];
                        num[j] += w[t];
                        contrib.push(-w[t] * spec.rho_raw(a));
                    }
                    for t in (0..range.len()).rev() {
                        tail[t] = tail[t + 1] + contrib[t];
                    }
                    // indices before the interval see the whole tail
                    loads.add_piecewise(&mut diff, 0, range.start, tail[0]);
                    let mut piece = loads.piece_of(range.start);
                    for (t, j) in range.enumerate() {
                        while j >= loads.starts[piece + 1] {
                            piece += 1;
                        }
                        den[j] += loads.exp_eta[piece] * tail[t];
                    }
                }
                if let Some(&c) = censor_coef[i].get(k) {
                    loads.add_piecewise(&mut diff, 0, self.grid.at_or_below_left[k][i], c);
                }
            }
            let mut run = 0.0;
            for j in 0..m {
                run += diff[j];
                den[j] += run;
            }
            let mut lam = vec![0.0; m];
            for j in 0..m {
                if !self.grid.covered[k][j] {
                    continue;
                }
                // EM drives jumps outside the NPMLE support to zero geometrically;
                // once their weights underflow they stay at zero.
                let v = num[j] / den[j];
                if state.lambda[k][j] < VANISHED_JUMP && (0.0..VANISHED_JUMP).contains(&v) {
                    continue;
                }
                if !(v > 0.0 && v.is_finite()) {
                    return Err(EmError::NonPositiveLambda { risk: k, index: j });
                }
                lam[j] = v;
            }
            out.push(lam);
        }
        Ok(out)
    }

    // ------------------------------------------------------------------
    // Profile objective in beta
    // ------------------------------------------------------------------

    pub fn profile_objective(&self, state: &ModelState) -> Result<f64, EmError> {
        Ok(self.profile_terms_impl(state, Need::Value)?.value)
    }

    pub fn gradient_u(&self, state: &ModelState) -> Result<DVector<f64>, EmError> {
        Ok(self.profile_terms_impl(state, Need::Gradient)?.gradient)
    }

    pub fn hessian_h(&self, state: &ModelState) -> Result<DMatrix<f64>, EmError> {
        Ok(self
            .profile_terms_impl(state, Need::Hessian)?
            .hessian
            .expect("requested"))
    }

    pub fn profile_terms(&self, state: &ModelState) -> Result<ProfileTerms, EmError> {
        self.profile_terms_impl(state, Need::Hessian)
    }

    fn profile_terms_impl(&self, state: &ModelState, need: Need) -> Result<ProfileTerms, EmError> {
        let prefix = self.prefix_sums(state);
        let k_total = self.n_risks();
        let d = self.n_covariates();
        let p = k_total * d;
        let mut value = 0.0;
        let mut grad = DVector::zeros(p);
        let mut hess = DMatrix::zeros(p, p);
        let want_grad = need >= Need::Gradient;
        let want_hess = need >= Need::Hessian;

        for (i, subject) in self.data.subjects().iter().enumerate() {
            let pieces = subject.covariates.pieces();
            let n_pc = pieces.len();
            let width = k_total * n_pc;
            let mut gamma = vec![0.0; width];
            let mut coef = vec![0.0; if want_hess { width * width } else { 0 }];
            let all_loads: Vec<Loads> = (0..k_total).map(|k| self.loads(state, &prefix[k], i, k)).collect();
            let mut a_s = vec![0.0; n_pc];

            if subject.outcome == Outcome::RightCensored {
                let mut a_k = vec![vec![0.0; n_pc]; k_total];
                let mut s = 1.0;
                for k in 0..k_total {
                    all_loads[k].coeffs(self.grid.at_or_below_left[k][i], &mut a_k[k]);
                    let a: f64 = a_k[k].iter().sum();
                    s += (-self.specs[k].g_raw(a)).exp_m1();
                }
                if s <= SURVIVAL_FLOOR {
                    return Err(EmError::NonPositiveSurvival { subject: i, value: s });
                }
                value += s.ln();
                if want_grad {
                    let g: Vec<f64> = (0..k_total)
                        .map(|k| self.specs[k].g_tilde_raw(a_k[k].iter().sum()))
                        .collect();
                    for k in 0..k_total {
                        for sp in 0..n_pc {
                            gamma[k * n_pc + sp] -= g[k] / s * a_k[k][sp];
                        }
                    }
                    if want_hess {
                        for k in 0..k_total {
                            let a: f64 = a_k[k].iter().sum();
                            let gp = self.specs[k].rho_raw(a) * g[k];
                            for k2 in 0..k_total {
                                let cross = g[k] * g[k2] / (s * s);
                                for s1 in 0..n_pc {
                                    for s2 in 0..n_pc {
                                        let mut c = -cross * a_k[k][s1] * a_k[k2][s2];
                                        if k == k2 {
                                            c -= gp / s * a_k[k][s1] * a_k[k][s2];
                                        }
                                        coef[(k * n_pc + s1) * width + k2 * n_pc + s2] += c;
                                    }
                                }
                            }
                            for s1 in 0..n_pc {
                                coef[(k * n_pc + s1) * width + k * n_pc + s1] -= g[k] / s * a_k[k][s1];
                            }
                        }
                    }
                }
            } else {
                for k in 0..k_total {
                    let range = self.grid.in_interval[k][i].clone();
                    if range.is_empty() {
                        continue;
                    }
                    let loads = &all_loads[k];
                    let spec = &self.specs[k];
                    let w = &state.omega[i][k];
                    let mut piece = loads.piece_of(range.start);
                    for (t, j) in range.enumerate() {
                        while j >= loads.starts[piece + 1] {
                            piece += 1;
                        }
                        let om = w[t];
                        if om == 0.0 {
                            continue;
                        }
                        loads.coeffs(j + 1, &mut a_s);
                        let a: f64 = a_s.iter().sum();
                        value += om * (state.lambda[k][j].ln() + loads.eta[piece] + spec.log_g_tilde_raw(a));
                        if !want_grad {
                            continue;
                        }
                        let rho = spec.rho_raw(a);
                        gamma[k * n_pc + piece] += om;
                        for sp in 0..n_pc {
                            gamma[k * n_pc + sp] += om * rho * a_s[sp];
                        }
                        if want_hess {
                            let rho_p = spec.rho_prime_raw(a);
                            for s1 in 0..n_pc {
                                let row = (k * n_pc + s1) * width + k * n_pc;
                                if rho_p != 0.0 {
                                    for s2 in 0..n_pc {
                                        coef[row + s2] += om * rho_p * a_s[s1] * a_s[s2];
                                    }
                                }
                                coef[row + s1] += om * rho * a_s[s1];
                            }
                        }
                    }
                }
            }

            if want_grad {
                for k in 0..k_total {
                    for (sp, z) in pieces.iter().enumerate() {
                        let gm = gamma[k * n_pc + sp];
                        if gm != 0.0 {
                            for (a, &zv) in z.iter().enumerate() {
                                grad[k * d + a] += gm * zv;
                            }
                        }
                    }
                }
            }
            if want_hess {
                scatter_hessian(&mut hess, &coef, pieces, k_total, d);
            }
        }
        if want_hess {
            // only the upper triangle was accumulated
            for c in 0..p {
                for r in (c + 1)..p {
                    hess[(r, c)] = hess[(c, r)];
                }
            }
        }
        Ok(ProfileTerms {
            value,
            gradient: grad,
            hessian: want_hess.then_some(hess),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Need {
    Value,
    Gradient,
    Hessian,
}

/// `H[(k,a),(k',b)] += sum_{s,s'} coef[(k,s),(k',s')] z_s[a] z_s'[b]`, upper triangle only.
fn scatter_hessian(hess: &mut DMatrix<f64>, coef: &[f64], pieces: &[Vec<f64>], k_total: usize, d: usize) {
    let n_pc = pieces.len();
    let width = k_total * n_pc;
    let p = k_total * d;
    let data = hess.as_mut_slice();
    for k1 in 0..k_total {
        for k2 in k1..k_total {
            for s1 in 0..n_pc {
                for s2 in 0..n_pc {
                    let mut c = coef[(k1 * n_pc + s1) * width + k2 * n_pc + s2];
                    if k1 == k2 && s1 != s2 {
                        // fold the symmetric partner (s2, s1) in when both land in one block
                        if s2 < s1 {
                            continue;
                        }
                        c += coef[(k1 * n_pc + s2) * width + k1 * n_pc + s1];
                        let (z1, z2) = (&pieces[s1], &pieces[s2]);
                        for b in 0..d {
                            let col = k2 * d + b;
                            let base = col * p + k1 * d;
                            for a in 0..=b {
                                data[base + a] += 0.5 * c * (z1[a] * z2[b] + z2[a] * z1[b]);
                            }
                        }
                        continue;
                    }
                    if c == 0.0 {
                        continue;
                    }
                    let (z1, z2) = (&pieces[s1], &pieces[s2]);
                    for b in 0..d {
                        let col = k2 * d + b;
                        let base = col * p + k1 * d;
                        let cz = c * z2[b];
                        if cz == 0.0 {
                            continue;
                        }
                        let upto = if k1 == k2 { b + 1 } else { d };
                        for a in 0..upto {
                            data[base + a] += cz * z1[a];
                        }
                    }
                }
            }
        }
    }
}

/// Per-(subject, risk) view of the cumulative load split over covariate pieces.
struct Loads<'s> {
    eta: Vec<f64>,
    exp_eta: Vec<f64>,
    starts: &'s [usize],
    prefix: &'s [f64],
}

impl Loads<'_> {
    /// `a_s` restricted to grid indices `< count`.
    fn coeffs(&self, count: usize, out: &mut [f64]) {
        for (sp, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.starts[sp], self.starts[sp + 1]);
            *o = if count > lo {
                self.exp_eta[sp] * (self.prefix[count.min(hi)] - self.prefix[lo])
            } else {
                0.0
            };
        }
    }

    fn total(&self, count: usize) -> f64 {
        (0..self.exp_eta.len())
            .map(|sp| {
                let (lo, hi) = (self.starts[sp], self.starts[sp + 1]);
                if count > lo {
                    self.exp_eta[sp] * (self.prefix[count.min(hi)] - self.prefix[lo])
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Piece containing grid index `j` (or the last piece when `j == m`).
    fn piece_of(&self, j: usize) -> usize {
        let n_pc = self.exp_eta.len();
        (0..n_pc).find(|&sp| j < self.starts[sp + 1]).unwrap_or(n_pc - 1)
    }

    /// `diff`-encoded addition of `value * exp(eta_s)` over grid indices `[from, to)`.
    fn add_piecewise(&self, diff: &mut [f64], from: usize, to: usize, value: f64) {
        for sp in 0..self.exp_eta.len() {
            let lo = self.starts[sp].max(from);
            let hi = self.starts[sp + 1].min(to);
            if lo < hi {
                let v = value * self.exp_eta[sp];
                diff[lo] += v;
                diff[hi] -= v;
            }
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
