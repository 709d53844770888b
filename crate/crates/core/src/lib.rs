//! Penalized estimation for interval-censored competing risks data under
//! semiparametric transformation models.

pub mod data;
pub mod emcore;
pub mod harness;
pub mod penalty;
pub mod simgen;
pub mod solver;
pub mod transform;

#[cfg(test)]
pub(crate) mod testutil;
