//! Interval-censored competing-risks records, censoring intervals, per-risk
//! jump grids, and the dataset CSV format.
//!
//! Main file header: `id,n_exams,U1,...,Umax,event,event_j,cause,z1,...,zd`.
//! `cause = 0` on an event row marks a missing cause. An optional long-format
//! companion `id,exam_index,z1,...,zd` overrides the covariate vector on exam
//! interval `exam_index` (1-based), which makes covariates time-varying.
//!
//! The loader also accepts the interval layout `id,L,R,cause,z1,...,zd`, where
//! `R = inf` marks a right-censored subject.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("subject {id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("no subject with an observed event; jump grid would be empty")]
    EmptyGrid,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failure cause of an observed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cause {
    /// 1-based cause label.
    Known(usize),
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    RightCensored,
    /// Event inside exam interval `interval` (1-based): `(U_{j-1}, U_j]`.
    Event { interval: usize, cause: Cause },
}

/// Left-continuous covariate step function anchored at exam times.
///
/// `values[s]` applies on `(knots[s-1], knots[s]]`; the last piece extends
/// to infinity. Consecutive identical pieces are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    knots: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl CovariatePath {
    pub fn constant(z: Vec<f64>) -> Self {
        Self {
            knots: Vec::new(),
            values: vec![z],
        }
    }

    /// One vector per exam interval `(U_{j-1}, U_j]`, `j = 1..=J`.
    pub fn stepwise(exam_times: &[f64], per_interval: Vec<Vec<f64>>) -> Self {
        assert_eq!(exam_times.len(), per_interval.len());
        let mut knots = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (j, z) in per_interval.into_iter().enumerate() {
            match values.last() {
                Some(prev) if *prev == z => {}
                Some(_) => {
                    knots.push(exam_times[j - 1]);
                    values.push(z);
                }
                None => values.push(z),
            }
        }
        Self { knots, values }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        let idx = self.knots.partition_point(|&u| u < t);
        &self.values[idx]
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Breakpoints between pieces.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub exam_times: Vec<f64>,
    pub outcome: Outcome,
    pub covariates: CovariatePath,
}

/// `(left, right]`; `right` is `+inf` for right-censored subjects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoringInterval {
    pub left: f64,
    pub right: f64,
}

impl CensoringInterval {
    pub fn is_right_censored(&self) -> bool {
        self.right.is_infinite()
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.left && t <= self.right
    }
}

impl SubjectRecord {
    pub fn event_observed(&self) -> bool {
        matches!(self.outcome, Outcome::Event { .. })
    }

    pub fn event_interval_index(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Event { interval, .. } => Some(interval),
            Outcome::RightCensored => None,
        }
    }

    pub fn cause(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Event {
                cause: Cause::Known(k),
                ..
            } => Some(k),
            _ => None,
        }
    }

    pub fn cause_missing(&self) -> bool {
        matches!(
            self.outcome,
            Outcome::Event {
                cause: Cause::Missing,
                ..
            }
        )
    }

    pub fn covariate_at(&self, t: f64) -> &[f64] {
        self.covariates.at(t)
    }

    pub fn validate(&self, n_risks: usize) -> Result<(), DataError> {
        let bad = |msg: String| DataError::Invalid {
            id: self.id.clone(),
            msg,
        };
        if self.exam_times.is_empty() {
            return Err(bad("no examination times".into()));
        }
        let mut prev = 0.0;
        for &u in &self.exam_times {
            if !u.is_finite() || u <= prev {
                return Err(bad(format!(
                    "examination times must be positive and strictly increasing: {:?}",
                    self.exam_times
                )));
            }
            prev = u;
        }
        if let Outcome::Event { interval, cause } = self.outcome {
            if interval == 0 || interval > self.exam_times.len() {
                return Err(bad(format!("event interval {interval} out of range")));
            }
            if let Cause::Known(k) = cause {
                if k == 0 || k > n_risks {
                    return Err(bad(format!("cause {k} outside 1..={n_risks}")));
                }
            }
        }
        if self.covariates.pieces().iter().any(|z| z.iter().any(|v| !v.is_finite())) {
            return Err(bad("non-finite covariate".into()));
        }
        Ok(())
    }
}

pub fn build_interval(subject: &SubjectRecord) -> Result<CensoringInterval, DataError> {
    subject.validate(usize::MAX)?;
    let u = &subject.exam_times;
    Ok(match subject.outcome {
        Outcome::Event { interval, .. } => CensoringInterval {
            left: if interval == 1 { 0.0 } else { u[interval - 2] },
            right: u[interval - 1],
        },
        Outcome::RightCensored => CensoringInterval {
            left: *u.last().unwrap(),
            right: f64::INFINITY,
        },
    })
}

/// A validated collection of subjects sharing `n_risks` and covariate dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    subjects: Vec<SubjectRecord>,
    intervals: Vec<CensoringInterval>,
    n_risks: usize,
    n_covariates: usize,
}

impl Dataset {
    pub fn new(subjects: Vec<SubjectRecord>, n_risks: usize) -> Result<Self, DataError> {
        if n_risks == 0 {
            return Err(DataError::Schema("at least one risk is required".into()));
        }
        let Some(first) = subjects.first() else {
            return Err(DataError::Schema("dataset has no subjects".into()));
        };
        let d = first.covariates.dim();
        let mut intervals = Vec::with_capacity(subjects.len());
        for s in &subjects {
            s.validate(n_risks)?;
            if s.covariates.pieces().iter().any(|z| z.len() != d) {
                return Err(DataError::Invalid {
                    id: s.id.clone(),
                    msg: format!("covariate dimension differs from {d}"),
                });
            }
            intervals.push(build_interval(s)?);
        }
        Ok(Self {
            subjects,
            intervals,
            n_risks,
            n_covariates: d,
        })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn intervals(&self) -> &[CensoringInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_risks(&self) -> usize {
        self.n_risks
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event_observed()).count()
    }

    /// Whether subject `i` carries information about risk `k` (0-based) in its
    /// event interval: known cause `k` or missing cause.
    pub fn relevant_to(&self, i: usize, k: usize) -> bool {
        match self.subjects[i].outcome {
            Outcome::Event {
                cause: Cause::Known(c),
                ..
            } => c == k + 1,
            Outcome::Event {
                cause: Cause::Missing,
                ..
            } => true,
            Outcome::RightCensored => false,
        }
    }
}

/// Per-risk support points of the baseline step functions.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpGrid {
    /// `times[k]`: strictly increasing `t_{k1} < ... < t_{k m_k}`.
    pub times: Vec<Vec<f64>>,
    /// `in_interval[k][i]`: grid indices with `t_kj` in `(L_i, R_i]`; empty
    /// unless subject `i` is relevant to risk `k`.
    pub in_interval: Vec<Vec<Range<usize>>>,
    /// `at_or_below_left[k][i]`: number of grid points `<= L_i`.
    pub at_or_below_left: Vec<Vec<usize>>,
    /// `covered[k][j]`: some relevant subject has `t_kj` inside `(L_i, R_i]`.
    /// Uncovered points carry no mass in the maximizer.
    pub covered: Vec<Vec<bool>>,
}

impl JumpGrid {
    pub fn len(&self, k: usize) -> usize {
        self.times[k].len()
    }

    pub fn is_empty(&self, k: usize) -> bool {
        self.times[k].is_empty()
    }
}

pub fn build_jump_grid(dataset: &Dataset) -> Result<JumpGrid, DataError> {
    if dataset.n_events() == 0 {
        return Err(DataError::EmptyGrid);
    }
    let k_total = dataset.n_risks();
    let n = dataset.len();
    let mut times = Vec::with_capacity(k_total);
    let mut in_interval = Vec::with_capacity(k_total);
    let mut at_or_below_left = Vec::with_capacity(k_total);
    let mut covered = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let mut pts: Vec<f64> = (0..n)
            .filter(|&i| dataset.relevant_to(i, k))
            .flat_map(|i| {
                let iv = dataset.intervals()[i];
                [iv.left, iv.right]
            })
            .filter(|t| *t > 0.0 && t.is_finite())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut ranges = Vec::with_capacity(n);
        let mut below = Vec::with_capacity(n);
        let mut cov = vec![false; pts.len()];
        for i in 0..n {
            let iv = dataset.intervals()[i];
            let lo = pts.partition_point(|&t| t <= iv.left);
            below.push(lo);
            if dataset.relevant_to(i, k) {
                let hi = pts.partition_point(|&t| t <= iv.right);
                cov[lo..hi].iter_mut().for_each(|c| *c = true);
                ranges.push(lo..hi);
            } else {
                ranges.push(lo..lo);
            }
        }
        times.push(pts);
        in_interval.push(ranges);
        at_or_below_left.push(below);
        covered.push(cov);
    }
    Ok(JumpGrid {
        times,
        in_interval,
        at_or_below_left,
        covered,
    })
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Resolved column positions of a dataset header.
#[derive(Debug, Clone)]
enum ColumnMap {
    Exams {
        id: usize,
        n_exams: usize,
        exams: Vec<usize>,
        event: usize,
        event_j: usize,
        cause: usize,
        z: Vec<usize>,
    },
    Intervals {
        id: usize,
        left: usize,
        right: usize,
        cause: usize,
        z: Vec<usize>,
    },
}

impl ColumnMap {
    fn from_header(header: &csv::StringRecord) -> Result<Self, DataError> {
        let pos: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let need = |name: &str| {
            pos.get(name)
                .copied()
                .ok_or_else(|| DataError::Schema(format!("missing column `{name}`")))
        };
        let numbered = |prefix: &str| -> Vec<usize> {
            (1..)
                .map_while(|j| pos.get(format!("{prefix}{j}").as_str()).copied())
                .collect()
        };
        let z = numbered("z");
        if z.is_empty() {
            return Err(DataError::Schema("no covariate columns z1..zd".into()));
        }
        if pos.contains_key("L") && pos.contains_key("R") {
            return Ok(Self::Intervals {
                id: need("id")?,
                left: need("L")?,
                right: need("R")?,
                cause: need("cause")?,
                z,
            });
        }
        let exams = numbered("U");
        if exams.is_empty() {
            return Err(DataError::Schema("no examination columns U1..Umax".into()));
        }
        Ok(Self::Exams {
            id: need("id")?,
            n_exams: need("n_exams")?,
            exams,
            event: need("event")?,
            event_j: need("event_j")?,
            cause: need("cause")?,
            z,
        })
    }

    fn parse(&self, row: usize, rec: &csv::StringRecord) -> Result<SubjectRecord, DataError> {
        let err = |msg: String| DataError::Parse { row, msg };
        let field = |c: usize| -> Result<&str, DataError> {
            rec.get(c).map(str::trim).ok_or_else(|| err(format!("missing field {}", c + 1)))
        };
        let num = |c: usize| -> Result<f64, DataError> {
            let s = field(c)?;
            parse_f64(s).ok_or_else(|| err(format!("non-numeric value `{s}`")))
        };
        let int = |c: usize| -> Result<usize, DataError> {
            let s = field(c)?;
            s.parse::<usize>().map_err(|_| err(format!("expected a nonnegative integer, got `{s}`")))
        };
        let covs = |cols: &[usize]| cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>();
        let cause_of = |c: usize| -> Result<Cause, DataError> {
            Ok(match int(c)? {
                0 => Cause::Missing,
                k => Cause::Known(k),
            })
        };
        let record = match self {
            Self::Exams {
                id,
                n_exams,
                exams,
                event,
                event_j,
                cause,
                z,
            } => {
                let j_count = int(*n_exams)?;
                if j_count == 0 || j_count > exams.len() {
                    return Err(err(format!("n_exams = {j_count} outside 1..={}", exams.len())));
                }
                let exam_times = exams[..j_count].iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
                let outcome = match int(*event)? {
                    0 => Outcome::RightCensored,
                    1 => Outcome::Event {
                        interval: int(*event_j)?,
                        cause: cause_of(*cause)?,
                    },
                    e => return Err(err(format!("event flag must be 0 or 1, got {e}"))),
                };
                SubjectRecord {
                    id: field(*id)?.to_string(),
                    exam_times,
                    outcome,
                    covariates: CovariatePath::constant(covs(z)?),
                }
            }
            Self::Intervals {
                id,
                left,
                right,
                cause,
                z,
            } => {
                let (l, r) = (num(*left)?, num(*right)?);
                let (exam_times, outcome) = if r.is_infinite() {
                    (vec![l], Outcome::RightCensored)
                } else if l == 0.0 {
                    (
                        vec![r],
                        Outcome::Event {
                            interval: 1,
                            cause: cause_of(*cause)?,
                        },
                    )
                } else {
                    (
                        vec![l, r],
                        Outcome::Event {
                            interval: 2,
                            cause: cause_of(*cause)?,
                        },
                    )
                };
                SubjectRecord {
                    id: field(*id)?.to_string(),
                    exam_times,
                    outcome,
                    covariates: CovariatePath::constant(covs(z)?),
                }
            }
        };
        Ok(record)
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

/// Reads a dataset CSV. Row numbers in errors count the header as row 1.
pub fn load_dataset<R: Read>(source: R, n_risks: usize) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let map = ColumnMap::from_header(rdr.headers()?)?;
    let mut subjects = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let subject = map.parse(row, &rec?)?;
        subject.validate(n_risks).map_err(|e| DataError::Parse {
            row,
            msg: e.to_string(),
        })?;
        subjects.push(subject);
    }
    Dataset::new(subjects, n_risks)
}

/// Applies a long-format `id,exam_index,z1,...,zd` companion file.
pub fn apply_covariate_overrides<R: Read>(dataset: Dataset, source: R) -> Result<Dataset, DataError> {
    let mut rdr = csv::Reader::from_reader(source);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::Schema(format!("companion file lacks `{name}`")))
    };
    let (id_col, j_col) = (col("id")?, col("exam_index")?);
    let z_cols: Vec<usize> = (1..).map_while(|j| col(&format!("z{j}")).ok()).collect();
    if z_cols.len() != dataset.n_covariates() {
        return Err(DataError::Schema(format!(
            "companion has {} covariates, dataset has {}",
            z_cols.len(),
            dataset.n_covariates()
        )));
    }
    let index: HashMap<String, usize> = dataset
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.clone(), i))
        .collect();
    let mut per_interval: Vec<Vec<Vec<f64>>> = dataset
        .subjects()
        .iter()
        .map(|s| s.exam_times.iter().map(|&u| s.covariate_at(u).to_vec()).collect())
        .collect();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 2;
        let rec = rec?;
        let err = |msg: String| DataError::Parse { row, msg };
        let id = rec.get(id_col).unwrap_or("").trim();
        let &i = index.get(id).ok_or_else(|| err(format!("unknown subject `{id}`")))?;
        let j: usize = rec
            .get(j_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err("bad exam_index".into()))?;
        if j == 0 || j > per_interval[i].len() {
            return Err(err(format!("exam_index {j} out of range for `{id}`")));
        }
        let z = z_cols
            .iter()
            .map(|&c| rec.get(c).and_then(|s| parse_f64(s.trim())).ok_or_else(|| err("non-numeric covariate".into())))
            .collect::<Result<Vec<_>, _>>()?;
        per_interval[i][j - 1] = z;
    }
    let n_risks = dataset.n_risks();
    let subjects = dataset
        .subjects
        .into_iter()
        .zip(per_interval)
        .map(|(mut s, pieces)| {
            s.covariates = CovariatePath::stepwise(&s.exam_times, pieces);
            s
        })
        .collect();
    Dataset::new(subjects, n_risks)
}

/// Writes the main dataset file. Time-varying covariates are written as the
/// first-interval values; use [`write_covariate_overrides`] for the rest.
pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<(), DataError> {
    let max_exams = dataset.subjects().iter().map(|s| s.exam_times.len()).max().unwrap_or(1);
    let d = dataset.n_covariates();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "n_exams".to_string()];
    header.extend((1..=max_exams).map(|j| format!("U{j}")));
    header.extend(["event", "event_j", "cause"].map(String::from));
    header.extend((1..=d).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for s in dataset.subjects() {
        let mut row = vec![s.id.clone(), s.exam_times.len().to_string()];
        row.extend((0..max_exams).map(|j| s.exam_times.get(j).map(|u| u.to_string()).unwrap_or_default()));
        match s.outcome {
            Outcome::RightCensored => row.extend(["0".into(), String::new(), "0".into()]),
            Outcome::Event { interval, cause } => {
                let c = match cause {
                    Cause::Known(k) => k,
                    Cause::Missing => 0,
                };
                row.extend(["1".into(), interval.to_string(), c.to_string()]);
            }
        }
        row.extend(s.covariates.pieces()[0].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariate_overrides<W: Write>(dataset: &Dataset, out: W) -> Result<(), DataError> {
    let d = dataset.n_covariates();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "exam_index".to_string()];
    header.extend((1..=d).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for s in dataset.subjects().iter().filter(|s| !s.covariates.is_constant()) {
        for (j, &u) in s.exam_times.iter().enumerate().skip(1) {
            let mut row = vec![s.id.clone(), (j + 1).to_string()];
            row.extend(s.covariate_at(u).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(id: &str, exams: &[f64], outcome: Outcome) -> SubjectRecord {
        SubjectRecord {
            id: id.into(),
            exam_times: exams.to_vec(),
            outcome,
            covariates: CovariatePath::constant(vec![0.0]),
        }
    }

    fn event(interval: usize, cause: usize) -> Outcome {
        Outcome::Event {
            interval,
            cause: if cause == 0 { Cause::Missing } else { Cause::Known(cause) },
        }
    }

    #[test]
    fn intervals() {
        let iv = build_interval(&subject("a", &[0.5, 1.2], event(2, 1))).unwrap();
        assert_eq!((iv.left, iv.right), (0.5, 1.2));
        let iv = build_interval(&subject("b", &[0.5, 1.2], Outcome::RightCensored)).unwrap();
        assert_eq!(iv.left, 1.2);
        assert!(iv.is_right_censored());
        let iv = build_interval(&subject("c", &[0.8], event(1, 2))).unwrap();
        assert_eq!((iv.left, iv.right), (0.0, 0.8));
        assert!(build_interval(&subject("d", &[1.2, 0.5], event(1, 1))).is_err());
    }

    #[test]
    fn grid_union_per_risk() {
        let ds = Dataset::new(
            vec![
                subject("a", &[0.5, 1.2], event(2, 1)),
                subject("b", &[1.2, 2.0], event(2, 1)),
                subject("c", &[0.7, 0.9], event(2, 2)),
            ],
            2,
        )
        .unwrap();
        let g = build_jump_grid(&ds).unwrap();
        assert_eq!(g.times[0], vec![0.5, 1.2, 2.0]);
        assert_eq!(g.times[1], vec![0.7, 0.9]);
        assert_eq!(g.in_interval[0][0], 1..2);
        assert_eq!(g.in_interval[0][1], 2..3);
        assert!(g.in_interval[0][2].is_empty());
        assert_eq!(g.at_or_below_left[0][1], 2);
        assert_eq!(g.covered[0], vec![false, true, true]);
    }

    #[test]
    fn missing_cause_enters_every_grid() {
        let ds = Dataset::new(
            vec![subject("a", &[0.3, 0.9], event(2, 0)), subject("b", &[1.5], event(1, 1))],
            2,
        )
        .unwrap();
        let g = build_jump_grid(&ds).unwrap();
        assert_eq!(g.times[0], vec![0.3, 0.9, 1.5]);
        assert_eq!(g.times[1], vec![0.3, 0.9]);
    }

    #[test]
    fn grid_requires_event() {
        let ds = Dataset::new(vec![subject("a", &[1.0], Outcome::RightCensored)], 2).unwrap();
        assert!(matches!(build_jump_grid(&ds), Err(DataError::EmptyGrid)));
    }

    #[test]
    fn grid_order_independent_and_idempotent() {
        let subs = vec![
            subject("a", &[0.4, 1.1], event(2, 1)),
            subject("b", &[0.2, 0.6], event(1, 2)),
            subject("c", &[0.9, 1.7], event(2, 0)),
            subject("d", &[0.3, 1.0], Outcome::RightCensored),
        ];
        let g1 = build_jump_grid(&Dataset::new(subs.clone(), 2).unwrap()).unwrap();
        let g2 = build_jump_grid(&Dataset::new(subs.clone(), 2).unwrap()).unwrap();
        assert_eq!(g1, g2);
        let mut rev = subs;
        rev.reverse();
        let g3 = build_jump_grid(&Dataset::new(rev, 2).unwrap()).unwrap();
        assert_eq!(g1.times, g3.times);
    }

    #[test]
    fn covariate_steps() {
        let s = subject("a", &[1.0, 2.0], Outcome::RightCensored);
        assert_eq!(s.covariate_at(0.3), &[0.0]);
        let path = CovariatePath::stepwise(&[1.0, 2.0], vec![vec![1.0, -0.5], vec![3.0, 3.0]]);
        assert_eq!(path.at(0.5), &[1.0, -0.5]);
        assert_eq!(path.at(1.0), &[1.0, -0.5]);
        assert_eq!(path.at(1.0001), &[3.0, 3.0]);
        assert_eq!(path.at(50.0), &[3.0, 3.0]);
        let flat = CovariatePath::stepwise(&[1.0, 2.0], vec![vec![1.0], vec![1.0]]);
        assert!(flat.is_constant());
    }

    const CSV3: &str = "id,n_exams,U1,U2,event,event_j,cause,z1,z2\n\
        s1,2,0.5,1.2,1,2,1,1.0,-0.5\n\
        s2,1,0.8,,1,1,0,0.1,0.2\n\
        s3,2,0.4,1.9,0,,0,0.0,3.5\n";

    #[test]
    fn load_three_rows() {
        let ds = load_dataset(CSV3.as_bytes(), 2).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.subjects()[0].cause(), Some(1));
        assert!(ds.subjects()[1].cause_missing());
        assert!(!ds.subjects()[2].event_observed());
        assert_eq!(ds.intervals()[1].left, 0.0);
        assert_eq!(ds.n_covariates(), 2);
    }

    #[test]
    fn load_interval_layout_inf() {
        let text = "id,L,R,cause,z1\na,0.5,inf,0,1.0\nb,0,0.7,2,0.0\n";
        let ds = load_dataset(text.as_bytes(), 2).unwrap();
        assert!(ds.intervals()[0].is_right_censored());
        assert_eq!(ds.intervals()[0].left, 0.5);
        assert_eq!(ds.intervals()[1].right, 0.7);
    }

    #[test]
    fn load_rejects_decreasing_exams_with_row() {
        let text = "id,n_exams,U1,U2,event,event_j,cause,z1\na,2,0.5,1.0,0,,0,1\nb,2,1.5,1.0,0,,0,1\n";
        let e = load_dataset(text.as_bytes(), 2).unwrap_err();
        assert!(matches!(e, DataError::Parse { row: 3, .. }), "{e}");
    }

    #[test]
    fn load_rejects_non_numeric_and_schema() {
        let text = "id,n_exams,U1,event,event_j,cause,z1\na,1,abc,0,,0,1\n";
        assert!(matches!(load_dataset(text.as_bytes(), 2), Err(DataError::Parse { row: 2, .. })));
        let text = "id,U1,event,z1\na,1,0,1\n";
        assert!(matches!(load_dataset(text.as_bytes(), 2), Err(DataError::Schema(_))));
    }

    #[test]
    fn write_then_load_with_overrides() {
        let ds = load_dataset(CSV3.as_bytes(), 2).unwrap();
        let comp = "id,exam_index,z1,z2\ns1,2,9.0,9.0\n";
        let ds = apply_covariate_overrides(ds, comp.as_bytes()).unwrap();
        let s1 = &ds.subjects()[0];
        assert_eq!(s1.covariate_at(0.5), &[1.0, -0.5]);
        assert_eq!(s1.covariate_at(0.6), &[9.0, 9.0]);
        let mut main = Vec::new();
        let mut side = Vec::new();
        write_dataset(&ds, &mut main).unwrap();
        write_covariate_overrides(&ds, &mut side).unwrap();
        let back = load_dataset(main.as_slice(), 2).unwrap();
        let back = apply_covariate_overrides(back, side.as_slice()).unwrap();
        assert_eq!(back, ds);
    }
}
