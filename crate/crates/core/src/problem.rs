//! JSON problem files and the bundled benchmarks.
//!
//! Matrices are row-major, either nested (`[[1, 2], [3, 4]]`) or flat
//! (`[1, 2, 3, 4]`); a bare number is accepted for `1 x 1` entries.
//! Time-varying coefficients are built from constant, polynomial or
//! sinusoidal specifications.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::lqdef::{make_partition, Horizon, LqProblem, MatFn, PartitionSpec, TimePartition};
use crate::oracle::random_autonomous;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixJson {
    Scalar(f64),
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl MatrixJson {
    pub fn to_mat(&self, rows: usize, cols: usize, what: &str) -> Result<Mat> {
        let bad = |got: String| Error::Parse(format!("{what} must be {rows}x{cols}, got {got}"));
        match self {
            MatrixJson::Scalar(v) if rows == 1 && cols == 1 => Ok(Mat::from_element(1, 1, *v)),
            MatrixJson::Scalar(_) => Err(bad("a scalar".into())),
            MatrixJson::Flat(v) if v.len() == rows * cols => Ok(Mat::from_row_slice(rows, cols, v)),
            MatrixJson::Flat(v) => Err(bad(format!("{} entries", v.len()))),
            MatrixJson::Nested(rows_v) => {
                if rows_v.len() != rows || rows_v.iter().any(|r| r.len() != cols) {
                    let shape = rows_v.iter().map(|r| r.len().to_string()).collect::<Vec<_>>();
                    return Err(bad(format!("rows of lengths [{}]", shape.join(", "))));
                }
                Ok(Mat::from_fn(rows, cols, |i, j| rows_v[i][j]))
            }
        }
    }

    pub fn from_mat(m: &Mat) -> Self {
        MatrixJson::Nested((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
    }
}

/// One coefficient as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientJson {
    Constant(MatrixJson),
    /// `Σ_k C_k t^k`.
    Polynomial { polynomial: Vec<MatrixJson> },
    /// `base + amplitude sin(frequency t + phase)`.
    Sinusoidal {
        base: MatrixJson,
        amplitude: MatrixJson,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl CoefficientJson {
    fn constant(&self) -> Option<&MatrixJson> {
        match self {
            CoefficientJson::Constant(m) => Some(m),
            _ => None,
        }
    }

    fn to_fn(&self, rows: usize, cols: usize, what: &str) -> Result<MatFn> {
        match self {
            CoefficientJson::Constant(m) => {
                let m = m.to_mat(rows, cols, what)?;
                Ok(Arc::new(move |_| m.clone()))
            }
            CoefficientJson::Polynomial { polynomial } => {
                if polynomial.is_empty() {
                    return Err(Error::Parse(format!("{what}: empty polynomial")));
                }
                let cs = polynomial
                    .iter()
                    .map(|c| c.to_mat(rows, cols, what))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Arc::new(move |t| {
                    // Horner
                    let mut acc = cs[cs.len() - 1].clone();
                    for c in cs.iter().rev().skip(1) {
                        acc = acc * t + c;
                    }
                    acc
                }))
            }
            CoefficientJson::Sinusoidal {
                base,
                amplitude,
                frequency,
                phase,
            } => {
                let b = base.to_mat(rows, cols, what)?;
                let a = amplitude.to_mat(rows, cols, what)?;
                let (w, ph) = (*frequency, *phase);
                Ok(Arc::new(move |t| &b + &a * (w * t + ph).sin()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Autonomous,
    Timevarying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonJson {
    Finite(f64),
    /// Only `"infinite"` is accepted.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionJson {
    Uniform(f64),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub mode: Mode,
    #[serde(rename = "A")]
    pub a: CoefficientJson,
    #[serde(rename = "B")]
    pub b: CoefficientJson,
    #[serde(rename = "Q")]
    pub q: CoefficientJson,
    #[serde(rename = "R")]
    pub r: CoefficientJson,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub assume_optimizable: bool,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn horizon(&self) -> Result<Option<Horizon>> {
        match &self.horizon {
            None => Ok(None),
            Some(HorizonJson::Finite(t)) => Ok(Some(Horizon::Finite(*t))),
            Some(HorizonJson::Named(s)) if s == "infinite" => Ok(Some(Horizon::Infinite)),
            Some(HorizonJson::Named(s)) => Err(Error::Parse(format!("unknown horizon {s:?}"))),
        }
    }

    /// Builds the problem. Autonomous files default to an infinite horizon;
    /// time-varying files need a finite one.
    pub fn to_problem(&self) -> Result<LqProblem> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::Parse("n and m must be positive".into()));
        }
        let horizon = self.horizon()?;
        let mut problem = match self.mode {
            Mode::Autonomous => {
                let get = |c: &CoefficientJson, r: usize, k: usize, what: &str| -> Result<Mat> {
                    c.constant()
                        .ok_or_else(|| Error::Parse(format!("{what} must be constant in autonomous mode")))?
                        .to_mat(r, k, what)
                };
                let p = LqProblem::autonomous(
                    get(&self.a, n, n, "A")?,
                    get(&self.b, n, m, "B")?,
                    get(&self.q, n, n, "Q")?,
                    get(&self.r, m, m, "R")?,
                )?;
                match horizon {
                    Some(h) => p.with_horizon(h)?,
                    None => p,
                }
            }
            Mode::Timevarying => {
                let t_final = match horizon {
                    Some(Horizon::Finite(t)) => t,
                    _ => {
                        return Err(Error::Validation(
                            "time-varying problems need a finite horizon".into(),
                        ))
                    }
                };
                LqProblem::time_varying(
                    n,
                    m,
                    self.a.to_fn(n, n, "A")?,
                    self.b.to_fn(n, m, "B")?,
                    self.q.to_fn(n, n, "Q")?,
                    self.r.to_fn(m, m, "R")?,
                    t_final,
                )?
            }
        };
        if let Some(p) = &self.p {
            problem = problem.with_terminal(p.to_mat(n, n, "P")?)?;
        }
        problem.assume_optimizable = self.assume_optimizable;
        Ok(problem)
    }

    pub fn partition(&self, t_final: f64) -> Result<Option<TimePartition>> {
        match &self.partition {
            None => Ok(None),
            Some(PartitionJson::Uniform(h)) => make_partition(t_final, &PartitionSpec::Uniform(*h)).map(Some),
            Some(PartitionJson::Times(ts)) => make_partition(t_final, &PartitionSpec::Explicit(ts.clone())).map(Some),
        }
    }

    pub fn x0(&self) -> Result<Option<Vector>> {
        match &self.x0 {
            None => Ok(None),
            Some(v) if v.len() == self.n => Ok(Some(Vector::from_column_slice(v))),
            Some(v) => Err(Error::Parse(format!("x0 must have {} entries, got {}", self.n, v.len()))),
        }
    }
}

// ---------------------------------------------------------------------------
// Benchmarks
// ---------------------------------------------------------------------------

/// Seed of the bundled 3x3 random instance.
pub const RANDOM3_SEED: u64 = 20_240_611;

pub const BENCHMARKS: [&str; 3] = ["scalar", "double-integrator", "random3"];

fn constant(m: &Mat) -> CoefficientJson {
    CoefficientJson::Constant(MatrixJson::from_mat(m))
}

fn autonomous_file(name: &str, a: &Mat, b: &Mat, q: &Mat, r: &Mat, x0: Vec<f64>) -> ProblemFile {
    ProblemFile {
        name: Some(name.into()),
        n: a.nrows(),
        m: b.ncols(),
        mode: Mode::Autonomous,
        a: constant(a),
        b: constant(b),
        q: constant(q),
        r: constant(r),
        p: None,
        horizon: None,
        partition: None,
        x0: Some(x0),
        assume_optimizable: false,
    }
}

/// `scalar`: A = 0, B = Q = R = 1. `double-integrator`: A = [[0, 1], [0, 0]],
/// B = [0, 1]^T, Q = I, R = 1. `random3`: seeded 3x3 instance with two inputs.
pub fn benchmark(name: &str) -> Result<ProblemFile> {
    match name {
        "scalar" => {
            let one = Mat::from_element(1, 1, 1.0);
            Ok(autonomous_file("scalar", &Mat::zeros(1, 1), &one, &one, &one, vec![1.0]))
        }
        "double-integrator" => Ok(autonomous_file(
            "double-integrator",
            &Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            &Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            &Mat::identity(2, 2),
            &Mat::identity(1, 1),
            vec![1.0, 0.0],
        )),
        "random3" => {
            let mut rng = ChaCha8Rng::seed_from_u64(RANDOM3_SEED);
            let p = random_autonomous(&mut rng, 3, 2)?;
            let (a, b, q, r) = p.constant()?;
            Ok(autonomous_file("random3", a, b, q, r, vec![1.0, -1.0, 0.5]))
        }
        other => Err(Error::Parse(format!(
            "unknown benchmark {other:?}; expected one of {}",
            BENCHMARKS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqdef::validate;
    use crate::tolerances::Tolerances;

    #[test]
    fn flat_and_nested_agree() {
        let flat = MatrixJson::Flat(vec![1.0, 2.0, 3.0, 4.0]).to_mat(2, 2, "A").unwrap();
        let nested = MatrixJson::Nested(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).to_mat(2, 2, "A").unwrap();
        assert_eq!(flat, nested);
        assert_eq!(flat[(0, 1)], 2.0);
        assert!(MatrixJson::Flat(vec![1.0; 3]).to_mat(2, 2, "A").is_err());
    }

    #[test]
    fn parses_autonomous_file() {
        let text = r#"{"n": 2, "m": 1, "mode": "autonomous",
            "A": [[0, 1], [0, 0]], "B": [0, 1], "Q": [1, 0, 0, 1], "R": 1,
            "horizon": 3.0, "partition": {"uniform": 0.5}, "x0": [1, 0]}"#;
        let f = ProblemFile::parse(text).unwrap();
        let p = f.to_problem().unwrap();
        assert_eq!(p.final_time().unwrap(), 3.0);
        assert_eq!(f.partition(3.0).unwrap().unwrap().len(), 6);
        assert_eq!(p.b(0.0)[(1, 0)], 1.0);
    }

    #[test]
    fn parses_time_varying_file() {
        let text = r#"{"n": 1, "m": 1, "mode": "timevarying",
            "A": {"polynomial": [0, 1]},
            "B": {"base": 1, "amplitude": 0.5, "frequency": 2.0},
            "Q": 1, "R": 1, "horizon": 2.0}"#;
        let p = ProblemFile::parse(text).unwrap().to_problem().unwrap();
        assert_eq!(p.a(3.0)[(0, 0)], 3.0);
        assert!((p.b(1.0)[(0, 0)] - (1.0 + 0.5 * 2f64.sin())).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_horizon() {
        let text = r#"{"n": 1, "m": 1, "mode": "autonomous", "A": 0, "B": 1, "Q": 1, "R": 1, "oops": 1}"#;
        assert!(matches!(ProblemFile::parse(text), Err(Error::Parse(_))));
        let text = r#"{"n": 1, "m": 1, "mode": "timevarying", "A": 0, "B": 1, "Q": 1, "R": 1}"#;
        assert!(ProblemFile::parse(text).unwrap().to_problem().is_err());
    }

    #[test]
    fn benchmarks_round_trip_and_validate() {
        let tol = Tolerances::default();
        for name in BENCHMARKS {
            let f = benchmark(name).unwrap();
            let again = ProblemFile::parse(&f.to_json()).unwrap();
            assert_eq!(f, again);
            let report = validate(&again.to_problem().unwrap(), &[], &tol).unwrap();
            assert!(report.q_pd && report.optimizable(), "{name}");
        }
    }
}
