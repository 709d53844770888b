//! Small random datasets and states shared by unit tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Cause, CovariatePath, Dataset, Outcome, SubjectRecord};
use crate::emcore::{Model, ModelState};

/// `n` subjects, `k` risks, `d` covariates; roughly a quarter right-censored,
/// some missing causes, and time-varying covariates for every other subject.
/// Each risk gets at least one known-cause event.
pub(crate) fn random_toy(seed: u64, n: usize, k: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..n)
        .map(|i| {
            let n_exams = rng.random_range(1..=4);
            let mut t = 0.0;
            let exams: Vec<f64> = (0..n_exams)
                .map(|_| {
                    t += rng.random_range(0.1..0.8);
                    t
                })
                .collect();
            let outcome = if i < k {
                Outcome::Event {
                    interval: rng.random_range(1..=n_exams),
                    cause: Cause::Known(i + 1),
                }
            } else if rng.random_bool(0.25) {
                Outcome::RightCensored
            } else {
                let cause = if rng.random_bool(0.2) {
                    Cause::Missing
                } else {
                    Cause::Known(rng.random_range(1..=k))
                };
                Outcome::Event {
                    interval: rng.random_range(1..=n_exams),
                    cause,
                }
            };
            let mut draw = || (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let covariates = if i % 2 == 0 {
                CovariatePath::constant(draw())
            } else {
                let per: Vec<Vec<f64>> = exams.iter().map(|_| draw()).collect();
                CovariatePath::stepwise(&exams, per)
            };
            SubjectRecord {
                id: format!("s{i}"),
                exam_times: exams,
                outcome,
                covariates,
            }
        })
        .collect();
    Dataset::new(subjects, k).unwrap()
}

/// Small random `beta` and jumps whose total mass per risk is at most 0.25,
/// with weights from one E-step.
pub(crate) fn toy_state(model: &Model, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (k, d) = (model.n_risks(), model.n_covariates());
    let beta = DMatrix::from_fn(k, d, |_, _| rng.random_range(-0.3..0.3));
    let lambda = (0..k)
        .map(|r| {
            let m = model.grid().len(r);
            (0..m)
                .map(|j| {
                    if model.grid().covered[r][j] {
                        0.25 / m as f64 * rng.random_range(0.2..1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut state = ModelState {
        beta,
        lambda,
        omega: model.zero_weights(),
    };
    state.omega = model.e_step(&state).unwrap();
    state
}
