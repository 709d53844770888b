//! Synthetic interval-censored competing risks data: AR(1)-correlated normal
//! covariates, a categorical cause draw, inverse-CDF event times under the
//! transformation model with baseline `scale (1 - e^{-t})`, two examination
//! times, and optional masking of the cause.
//!
//! Every random draw comes from a ChaCha stream keyed by (seed, subject,
//! role), so a dataset does not depend on how subjects are scheduled.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cause, CovariatePath, DataError, Dataset, Outcome, SubjectRecord};
use crate::transform::{DomainError, TransformationSpec};

/// Floor for the log argument of the event-time formula.
const LOG_ARG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cause probabilities of subject {subject} sum to {total} >= 1")]
    ProbabilityOverflow { subject: usize, total: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// What to do when the cause probabilities of a subject sum to 1 or more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Draw causes in order from the cumulative probabilities clipped at 1;
    /// later causes lose the excess mass. The count is reported.
    #[default]
    Truncate,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub d_n: usize,
    #[serde(rename = "K", default = "two")]
    pub k: usize,
    pub rho: f64,
    pub r: Vec<f64>,
    /// `K x d_n`; defaults to `(0.8, 0.6, 0.8, 0, ...)` and its negative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_true: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_scale")]
    pub baseline_scale: f64,
    #[serde(default = "default_exam1")]
    pub exam1_range: (f64, f64),
    #[serde(default = "default_gap")]
    pub gap_range: (f64, f64),
    #[serde(default)]
    pub missing_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overflow: OverflowPolicy,
}

fn two() -> usize {
    2
}
fn default_scale() -> f64 {
    0.2
}
fn default_exam1() -> (f64, f64) {
    (0.1, 1.5)
}
fn default_gap() -> (f64, f64) {
    (0.1, 1.6)
}

impl Scenario {
    /// Two risks, the default coefficients and examination scheme.
    pub fn standard(n: usize, d_n: usize, rho: f64, r: [f64; 2], seed: u64) -> Self {
        Self {
            n,
            d_n,
            k: 2,
            rho,
            r: r.to_vec(),
            beta_true: None,
            baseline_scale: default_scale(),
            exam1_range: default_exam1(),
            gap_range: default_gap(),
            missing_prob: 0.0,
            seed,
            overflow: OverflowPolicy::default(),
        }
    }

    pub fn beta_true(&self) -> DMatrix<f64> {
        match &self.beta_true {
            Some(rows) => DMatrix::from_fn(self.k, self.d_n, |k, a| rows[k][a]),
            None => {
                let head = [0.8, 0.6, 0.8];
                DMatrix::from_fn(self.k, self.d_n, |k, a| {
                    let v = head.get(a).copied().unwrap_or(0.0);
                    if k % 2 == 0 {
                        v
                    } else {
                        -v
                    }
                })
            }
        }
    }

    pub fn specs(&self) -> Result<Vec<TransformationSpec>, SimError> {
        Ok(self
            .r
            .iter()
            .map(|&r| TransformationSpec::new(r))
            .collect::<Result<_, _>>()?)
    }

    /// Per-risk indices of the nonzero true coefficients.
    pub fn true_support(&self) -> Vec<Vec<usize>> {
        let b = self.beta_true();
        (0..self.k)
            .map(|k| (0..self.d_n).filter(|&a| b[(k, a)] != 0.0).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.into()));
        if self.n == 0 || self.d_n == 0 || self.k == 0 {
            return bad("n, d_n and K must be positive");
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad("rho must lie in (-1, 1)");
        }
        if self.r.len() != self.k {
            return bad("r needs one entry per risk");
        }
        if let Some(rows) = &self.beta_true {
            if rows.len() != self.k || rows.iter().any(|r| r.len() != self.d_n) {
                return bad("beta_true must be K x d_n");
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return bad("beta_true must be finite");
            }
        }
        if !(self.baseline_scale > 0.0) {
            return bad("baseline_scale must be positive");
        }
        let (a, b) = self.exam1_range;
        let (g0, g1) = self.gap_range;
        if !(a > 0.0 && a <= b && g0 > 0.0 && g0 <= g1) {
            return bad("examination ranges must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.missing_prob) {
            return bad("missing_prob must lie in [0, 1]");
        }
        self.specs()?;
        Ok(())
    }
}

/// Independent random stream per subject and purpose.
#[derive(Debug, Clone, Copy)]
pub enum Role {
    Covariates = 0,
    Cause = 1,
    EventTime = 2,
    Exams = 3,
    Mask = 4,
}

pub fn keyed_rng(seed: u64, subject: usize, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64 * 8 + role as u64);
    rng
}

/// Seed of replication `rep` derived from a base seed (splitmix64 finalizer).
pub fn replication_seed(base: u64, rep: usize) -> u64 {
    let mut z = base.wrapping_add((rep as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One row with `Var = 1`, `Corr(z_a, z_b) = rho^|a - b|`.
pub fn gen_covariate_row<R: Rng>(d: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let scale = (1.0 - rho * rho).sqrt();
    let mut z = Vec::with_capacity(d);
    let mut prev: f64 = rng.sample(StandardNormal);
    z.push(prev);
    for _ in 1..d {
        let e: f64 = rng.sample(StandardNormal);
        prev = rho * prev + scale * e;
        z.push(prev);
    }
    z
}

pub fn gen_covariates<R: Rng>(n: usize, d: usize, rho: f64, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = gen_covariate_row(d, rho, rng);
        for (a, v) in row.into_iter().enumerate() {
            out[(i, a)] = v;
        }
    }
    out
}

fn linear(beta_k: &[f64], z: &[f64]) -> f64 {
    beta_k.iter().zip(z).map(|(b, v)| b * v).sum()
}

/// `1 - exp(-G_k(scale e^{beta_k . z}))`: the total probability of cause `k`.
pub fn event_probability(spec: &TransformationSpec, beta_k: &[f64], z: &[f64], scale: f64) -> f64 {
    let load = scale * linear(beta_k, z).exp();
    -(-spec.g_raw(load)).exp_m1()
}

/// Cause probabilities of one subject, failing when they leave no room for
/// "no event".
pub fn cause_probabilities(
    specs: &[TransformationSpec],
    beta: &DMatrix<f64>,
    z: &[f64],
    scale: f64,
) -> Result<Vec<f64>, SimError> {
    let p: Vec<f64> = specs
        .iter()
        .enumerate()
        .map(|(k, s)| event_probability(s, beta.row(k).transpose().as_slice(), z, scale))
        .collect();
    let total: f64 = p.iter().sum();
    if total >= 1.0 {
        return Err(SimError::ProbabilityOverflow { subject: 0, total });
    }
    Ok(p)
}

/// Inverse of the conditional CDF `F_k(t) / p_k` at `v`, for a subject with
/// `load = scale e^{beta_k . z}`. Returns the time and whether the log
/// argument had to be clamped.
pub fn event_time(spec: &TransformationSpec, p_k: f64, v: f64, load: f64) -> (f64, bool) {
    let x = -(-p_k * v).ln_1p();
    let y = spec.g_inverse(x).unwrap_or(f64::INFINITY);
    let arg = 1.0 - y / load;
    if arg < LOG_ARG_FLOOR {
        (-LOG_ARG_FLOOR.ln(), true)
    } else {
        (-arg.ln(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDraw {
    /// 0 for no event, otherwise the 1-based cause.
    pub cause: usize,
    pub time: Option<f64>,
    /// Cause probabilities summed to 1 or more and were clipped.
    pub truncated: bool,
    pub clamped: bool,
}

/// Cause from `(p_1, ..., p_K, 1 - sum p)`, then the time given the cause.
pub fn gen_event(
    specs: &[TransformationSpec],
    beta: &DMatrix<f64>,
    z: &[f64],
    scale: f64,
    policy: OverflowPolicy,
    cause_rng: &mut impl Rng,
    time_rng: &mut impl Rng,
) -> Result<EventDraw, SimError> {
    let p: Vec<f64> = specs
        .iter()
        .enumerate()
        .map(|(k, s)| event_probability(s, beta.row(k).transpose().as_slice(), z, scale))
        .collect();
    let total: f64 = p.iter().sum();
    let truncated = total >= 1.0;
    if truncated && policy == OverflowPolicy::Error {
        return Err(SimError::ProbabilityOverflow { subject: 0, total });
    }
    let u: f64 = cause_rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc.min(1.0) {
            let load = scale * linear(beta.row(k).transpose().as_slice(), z).exp();
            let v: f64 = time_rng.random();
            let (t, clamped) = event_time(&specs[k], pk, v, load);
            return Ok(EventDraw {
                cause: k + 1,
                time: Some(t),
                truncated,
                clamped,
            });
        }
    }
    Ok(EventDraw {
        cause: 0,
        time: None,
        truncated,
        clamped: false,
    })
}

pub fn gen_examinations(exam1_range: (f64, f64), gap_range: (f64, f64), rng: &mut impl Rng) -> (f64, f64) {
    let u1 = rng.random_range(exam1_range.0..=exam1_range.1);
    let gap = rng.random_range(gap_range.0..=gap_range.1);
    (u1, u1 + gap)
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    /// Latent cause (0 none) and time of every subject.
    pub latent: Vec<(usize, Option<f64>)>,
    /// Subjects whose cause probabilities had to be clipped.
    pub truncated: usize,
    /// Event times whose log argument was clamped.
    pub clamped: usize,
}

pub fn gen_dataset(scenario: &Scenario) -> Result<SimulatedData, SimError> {
    scenario.validate()?;
    let specs = scenario.specs()?;
    let beta = scenario.beta_true();
    let mut subjects = Vec::with_capacity(scenario.n);
    let mut latent = Vec::with_capacity(scenario.n);
    let (mut truncated, mut clamped) = (0, 0);
    for i in 0..scenario.n {
        let key = |role| keyed_rng(scenario.seed, i, role);
        let z = gen_covariate_row(scenario.d_n, scenario.rho, &mut key(Role::Covariates));
        let draw = gen_event(
            &specs,
            &beta,
            &z,
            scenario.baseline_scale,
            scenario.overflow,
            &mut key(Role::Cause),
            &mut key(Role::EventTime),
        )
        .map_err(|e| match e {
            SimError::ProbabilityOverflow { total, .. } => SimError::ProbabilityOverflow { subject: i, total },
            e => e,
        })?;
        truncated += draw.truncated as usize;
        clamped += draw.clamped as usize;
        let (u1, u2) = gen_examinations(scenario.exam1_range, scenario.gap_range, &mut key(Role::Exams));
        let masked = scenario.missing_prob > 0.0 && key(Role::Mask).random_bool(scenario.missing_prob);
        let outcome = match draw.time {
            Some(t) if t <= u2 => Outcome::Event {
                interval: if t <= u1 { 1 } else { 2 },
                cause: if masked { Cause::Missing } else { Cause::Known(draw.cause) },
            },
            _ => Outcome::RightCensored,
        };
        latent.push((draw.cause, draw.time));
        subjects.push(SubjectRecord {
            id: (i + 1).to_string(),
            exam_times: vec![u1, u2],
            outcome,
            covariates: CovariatePath::constant(z),
        });
    }
    Ok(SimulatedData {
        dataset: Dataset::new(subjects, scenario.k)?,
        latent,
        truncated,
        clamped,
    })
}

#[cfg(test)]
mod tests;
