//! Problem model: coefficients, horizon, time partitions and the
//! assumption validators (positivity, Kalman rank, PBH).

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    check_shape, check_square, is_pd, is_psd, numerical_rank, symmetry_defect, Mat,
};
use crate::matfun;
use crate::tolerances::Tolerances;

/// A continuous matrix-valued function of time.
pub type MatFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;

#[derive(Clone)]
pub enum Coefficients {
    Autonomous { a: Mat, b: Mat, q: Mat, r: Mat },
    TimeVarying { a: MatFn, b: MatFn, q: MatFn, r: MatFn },
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficients::Autonomous { a, b, q, r } => f
                .debug_struct("Autonomous")
                .field("a", a)
                .field("b", b)
                .field("q", q)
                .field("r", r)
                .finish(),
            Coefficients::TimeVarying { .. } => f.write_str("TimeVarying { .. }"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone)]
pub struct LqProblem {
    n: usize,
    m: usize,
    coeffs: Coefficients,
    p: Mat,
    horizon: Horizon,
    /// The caller vouches for optimizability when the algebraic tests fail.
    pub assume_optimizable: bool,
}

fn check_sym(m: &Mat, what: &str) -> Result<()> {
    if symmetry_defect(m) > 1e-12 {
        return Err(Error::Validation(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl LqProblem {
    /// Autonomous problem with infinite horizon and zero terminal weight.
    pub fn autonomous(a: Mat, b: Mat, q: Mat, r: Mat) -> Result<Self> {
        check_square(&a, "A")?;
        let n = a.nrows();
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must have {n} rows and at least one column, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        check_shape(&q, n, n, "Q")?;
        check_shape(&r, m, m, "R")?;
        check_sym(&q, "Q")?;
        check_sym(&r, "R")?;
        let tol = Tolerances::default();
        if !is_psd(&q, tol.psd) {
            return Err(Error::Validation("Q must be positive semi-definite".into()));
        }
        if !is_pd(&r, tol.pd) {
            return Err(Error::Validation("R must be positive definite".into()));
        }
        Ok(Self {
            n,
            m,
            coeffs: Coefficients::Autonomous { a, b, q, r },
            p: Mat::zeros(n, n),
            horizon: Horizon::Infinite,
            assume_optimizable: false,
        })
    }

    /// Time-varying problem on `[0, t_final]` with zero terminal weight.
    /// Shapes are checked at `t = 0`; positivity is checked by [`validate`].
    pub fn time_varying(
        n: usize,
        m: usize,
        a: MatFn,
        b: MatFn,
        q: MatFn,
        r: MatFn,
        t_final: f64,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and control dimensions must be positive".into()));
        }
        check_shape(&a(0.0), n, n, "A(0)")?;
        check_shape(&b(0.0), n, m, "B(0)")?;
        check_shape(&q(0.0), n, n, "Q(0)")?;
        check_shape(&r(0.0), m, m, "R(0)")?;
        let mut p = Self {
            n,
            m,
            coeffs: Coefficients::TimeVarying { a, b, q, r },
            p: Mat::zeros(n, n),
            horizon: Horizon::Infinite,
            assume_optimizable: false,
        };
        p = p.with_horizon(Horizon::Finite(t_final))?;
        Ok(p)
    }

    pub fn with_terminal(mut self, p: Mat) -> Result<Self> {
        check_shape(&p, self.n, self.n, "P")?;
        check_sym(&p, "P")?;
        if !is_psd(&p, Tolerances::default().psd) {
            return Err(Error::Validation("P must be positive semi-definite".into()));
        }
        self.p = p;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Result<Self> {
        match horizon {
            Horizon::Finite(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::Validation(format!("horizon must be positive, got {t}")));
            }
            Horizon::Infinite if !self.is_autonomous() => {
                return Err(Error::Validation(
                    "infinite horizon requires autonomous coefficients".into(),
                ));
            }
            _ => {}
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// Re-expresses constant coefficients through the time-varying interface.
    pub fn as_time_varying(&self, t_final: f64) -> Result<Self> {
        let (a, b, q, r) = match &self.coeffs {
            Coefficients::Autonomous { a, b, q, r } => (a.clone(), b.clone(), q.clone(), r.clone()),
            Coefficients::TimeVarying { .. } => return Ok(self.clone()),
        };
        let tv = Self::time_varying(
            self.n,
            self.m,
            Arc::new(move |_| a.clone()),
            Arc::new(move |_| b.clone()),
            Arc::new(move |_| q.clone()),
            Arc::new(move |_| r.clone()),
            t_final,
        )?;
        tv.with_terminal(self.p.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn terminal(&self) -> &Mat {
        &self.p
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn is_autonomous(&self) -> bool {
        matches!(self.coeffs, Coefficients::Autonomous { .. })
    }

    /// Final time of a finite-horizon problem.
    pub fn final_time(&self) -> Result<f64> {
        match self.horizon {
            Horizon::Finite(t) => Ok(t),
            Horizon::Infinite => Err(Error::Validation("problem has an infinite horizon".into())),
        }
    }

    /// Constant coefficients `(A, B, Q, R)` of an autonomous problem.
    pub fn constant(&self) -> Result<(&Mat, &Mat, &Mat, &Mat)> {
        match &self.coeffs {
            Coefficients::Autonomous { a, b, q, r } => Ok((a, b, q, r)),
            Coefficients::TimeVarying { .. } => Err(Error::Validation(
                "operation requires autonomous coefficients".into(),
            )),
        }
    }

    pub fn a(&self, t: f64) -> Mat {
        match &self.coeffs {
            Coefficients::Autonomous { a, .. } => a.clone(),
            Coefficients::TimeVarying { a, .. } => a(t),
        }
    }

    pub fn b(&self, t: f64) -> Mat {
        match &self.coeffs {
            Coefficients::Autonomous { b, .. } => b.clone(),
            Coefficients::TimeVarying { b, .. } => b(t),
        }
    }

    pub fn q(&self, t: f64) -> Mat {
        match &self.coeffs {
            Coefficients::Autonomous { q, .. } => q.clone(),
            Coefficients::TimeVarying { q, .. } => q(t),
        }
    }

    pub fn r(&self, t: f64) -> Mat {
        match &self.coeffs {
            Coefficients::Autonomous { r, .. } => r.clone(),
            Coefficients::TimeVarying { r, .. } => r(t),
        }
    }

    /// `Φ(t, τ)`; the exponential in the autonomous case.
    pub fn transition(&self, t: f64, tau: f64, tol: f64) -> Result<Mat> {
        match &self.coeffs {
            Coefficients::Autonomous { a, .. } => matfun::expm(a, t - tau),
            Coefficients::TimeVarying { a, .. } => matfun::transition(t, tau, |s| a(s), tol),
        }
    }

    /// Sup of `|A(s)|` and `|Q(s)|` over `[t, T]`, sampled for time-varying data.
    pub(crate) fn sup_norms(&self, t: f64, t_final: f64) -> (f64, f64) {
        use crate::linalg::opnorm;
        match &self.coeffs {
            Coefficients::Autonomous { a, q, .. } => (opnorm(a), opnorm(q)),
            Coefficients::TimeVarying { a, q, .. } => {
                let mut na: f64 = 0.0;
                let mut nq: f64 = 0.0;
                for s in chebyshev_points(t, t_final, 65) {
                    na = na.max(opnorm(&a(s)));
                    nq = nq.max(opnorm(&q(s)));
                }
                (na, nq)
            }
        }
    }
}

/// `count` Chebyshev–Lobatto points on `[a, b]`, ascending.
pub fn chebyshev_points(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.5 * (a + b)];
    }
    let mut pts: Vec<f64> = (0..count)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / (count - 1) as f64;
            0.5 * (a + b) - 0.5 * (b - a) * theta.cos()
        })
        .collect();
    pts[0] = a;
    pts[count - 1] = b;
    pts
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    Uniform(f64),
    Explicit(Vec<f64>),
}

/// Sampling times `0 = t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimePartition {
    times: Vec<f64>,
    uniform: Option<f64>,
}

impl TimePartition {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of intervals `N`.
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Step `h_i = t_i - t_{i-1}` for `i = 1..=N`.
    pub fn step(&self, i: usize) -> f64 {
        self.times[i] - self.times[i - 1]
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Mesh `|Δ| = max h_i`.
    pub fn mesh(&self) -> f64 {
        self.steps().into_iter().fold(0.0, f64::max)
    }

    /// Common step when the partition is uniform.
    pub fn uniform_step(&self) -> Option<f64> {
        self.uniform
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("partition has at least two nodes")
    }

    /// `N` uniform steps of length `h` starting at zero.
    pub fn uniform_steps(h: f64, count: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || count == 0 {
            return Err(Error::Partition(format!(
                "need positive step and at least one interval (h = {h}, N = {count})"
            )));
        }
        Ok(Self {
            times: (0..=count).map(|i| i as f64 * h).collect(),
            uniform: Some(h),
        })
    }

    /// Splits every interval into `factor` equal parts.
    pub fn refine(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let mut times = Vec::with_capacity(self.len() * factor + 1);
        for w in self.times.windows(2) {
            for k in 0..factor {
                times.push(w[0] + (w[1] - w[0]) * k as f64 / factor as f64);
            }
        }
        times.push(self.final_time());
        Self {
            times,
            uniform: self.uniform.map(|h| h / factor as f64),
        }
    }
}

pub fn make_partition(t_final: f64, spec: &PartitionSpec) -> Result<TimePartition> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Partition(format!("horizon must be positive, got {t_final}")));
    }
    match spec {
        PartitionSpec::Uniform(h) => {
            if !(*h > 0.0 && h.is_finite()) {
                return Err(Error::Partition(format!("step must be positive, got {h}")));
            }
            let count = (t_final / h).round();
            if count < 1.0 {
                return Err(Error::Partition(format!("step {h} exceeds horizon {t_final}")));
            }
            let slack = 4.0 * count * f64::EPSILON * t_final;
            if (count * h - t_final).abs() > slack {
                return Err(Error::Partition(format!(
                    "horizon {t_final} is not a multiple of step {h}"
                )));
            }
            let count = count as usize;
            let mut times: Vec<f64> = (0..=count).map(|i| i as f64 * h).collect();
            times[count] = t_final;
            Ok(TimePartition {
                times,
                uniform: Some(*h),
            })
        }
        PartitionSpec::Explicit(times) => {
            if times.len() < 2 {
                return Err(Error::Partition("need at least two sampling times".into()));
            }
            if times[0] != 0.0 {
                return Err(Error::Partition(format!("first time must be 0, got {}", times[0])));
            }
            if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
                return Err(Error::Partition(format!(
                    "times must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
            let last = *times.last().expect("len >= 2");
            if (last - t_final).abs() > 4.0 * f64::EPSILON * t_final {
                return Err(Error::Partition(format!(
                    "last time {last} differs from horizon {t_final}"
                )));
            }
            let mut times = times.clone();
            *times.last_mut().expect("len >= 2") = t_final;
            let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let uniform = if steps.iter().all(|&h| h == steps[0]) {
                Some(steps[0])
            } else {
                None
            };
            Ok(TimePartition { times, uniform })
        }
    }
}

// ---------------------------------------------------------------------------
// Assumptions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionReport {
    /// Q positive definite at every checked time.
    pub q_pd: bool,
    pub kalman: bool,
    pub pbh: bool,
    /// Kalman or PBH holds, which is sufficient for optimizability.
    pub h2_sufficient: bool,
    pub user_asserted: bool,
}

impl AssumptionReport {
    pub fn optimizable(&self) -> bool {
        self.h2_sufficient || self.user_asserted
    }
}

/// True iff `rank [B, AB, ..., A^{n-1}B] = n`.
pub fn kalman_rank(a: &Mat, b: &Mat, rank_tol: f64) -> bool {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return false;
    }
    let m = b.ncols();
    let mut ctrb = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    numerical_rank(&ctrb, rank_tol) == n
}

/// Stabilizability form of the Popov–Belevitch–Hautus test: every eigenvalue
/// with nonnegative real part satisfies `rank [A - λI, B] = n`.
pub fn pbh_test(a: &Mat, b: &Mat, rank_tol: f64) -> bool {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return false;
    }
    let m = b.ncols();
    let eigs = a.clone().complex_eigenvalues();
    let scale = 1.0 + crate::linalg::opnorm(a);
    for lambda in eigs.iter() {
        if lambda.re < -1e-10 * scale {
            continue;
        }
        // real embedding of the complex matrix [A - λI, B]
        let mut emb = Mat::zeros(2 * n, 2 * (n + m));
        for i in 0..n {
            for j in 0..n {
                let re = a[(i, j)] - if i == j { lambda.re } else { 0.0 };
                let im = if i == j { -lambda.im } else { 0.0 };
                emb[(i, j)] = re;
                emb[(i + n, j + n + m)] = re;
                emb[(i, j + n + m)] = -im;
                emb[(i + n, j)] = im;
            }
            for j in 0..m {
                emb[(i, n + j)] = b[(i, j)];
                emb[(i + n, 2 * n + m + j)] = b[(i, j)];
            }
        }
        if numerical_rank(&emb, rank_tol) < 2 * n {
            return false;
        }
    }
    true
}

/// Checks positivity of `Q` and `R` at `sample_times` (once for autonomous
/// problems) and the algebraic sufficient conditions for optimizability.
pub fn validate(problem: &LqProblem, sample_times: &[f64], tol: &Tolerances) -> Result<AssumptionReport> {
    let mut q_pd = true;
    let check_at = |t: f64, q_pd: &mut bool| -> Result<()> {
        let r = problem.r(t);
        if !crate::linalg::all_finite(&r) || !is_pd(&r, tol.pd) {
            return Err(Error::Validation(format!("R(t) is not positive definite at t = {t}")));
        }
        let q = problem.q(t);
        if !crate::linalg::all_finite(&q) || !is_psd(&q, tol.psd) {
            return Err(Error::Validation(format!(
                "Q(t) is not positive semi-definite at t = {t}"
            )));
        }
        if !is_pd(&q, tol.pd) {
            *q_pd = false;
        }
        Ok(())
    };
    let (kalman, pbh) = match problem.coefficients() {
        Coefficients::Autonomous { a, b, .. } => {
            check_at(0.0, &mut q_pd)?;
            (kalman_rank(a, b, tol.rank), pbh_test(a, b, tol.rank))
        }
        Coefficients::TimeVarying { .. } => {
            let defaults;
            let times = if sample_times.is_empty() {
                defaults = chebyshev_points(0.0, problem.final_time()?, 65);
                &defaults[..]
            } else {
                sample_times
            };
            for &t in times {
                check_at(t, &mut q_pd)?;
            }
            (false, false)
        }
    };
    Ok(AssumptionReport {
        q_pd,
        kalman,
        pbh,
        h2_sufficient: kalman || pbh,
        user_asserted: problem.assume_optimizable,
    })
}
