//! Feedback synthesis and closed-loop simulation with exact costs.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmap::IntervalKernel;
use crate::linalg::{max_eigenvalue, min_eigenvalue, quad_form, spd_solve, Mat, Vector};
use crate::lqdef::{Horizon, LqProblem};
use crate::matfun::{integrate, van_loan, OdeOptions};
use crate::riccati::{partition_kernels, AreSolution, RiccatiFlow, RiccatiSeq};
use crate::tolerances::Tolerances;

/// States larger than this abort a simulation.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Infinite-horizon runs stop early once `|x| <= NEGLIGIBLE |x0|`; the tail
/// estimate carries the remainder.
pub const NEGLIGIBLE: f64 = 1e-13;
const MAX_STEPS: usize = 20_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Sampled loops: the control held on `[t_i, t_{i+1})`, one fewer than
    /// `times`. Permanent loops: `u(t_i)` at every node.
    pub controls: Vec<Vector>,
    /// Running cost accumulated up to each node.
    pub running_cost: Vec<f64>,
    /// Terminal penalty `<P x(T), x(T)>`, zero for infinite horizons.
    pub terminal_cost: f64,
    /// Running plus terminal cost.
    pub cost: f64,
    pub sampled: bool,
    pub infinite_horizon: bool,
    /// Cost-to-go estimate at the truncation time of an infinite-horizon run.
    pub tail_estimate: Option<f64>,
}

impl Trajectory {
    fn start(x0: &Vector, sampled: bool, infinite_horizon: bool) -> Self {
        Self {
            times: vec![0.0],
            states: vec![x0.clone()],
            controls: Vec::new(),
            running_cost: vec![0.0],
            terminal_cost: 0.0,
            cost: 0.0,
            sampled,
            infinite_horizon,
            tail_estimate: None,
        }
    }

    fn push(&mut self, t: f64, x: Vector, increment: f64) -> Result<()> {
        let nx = x.norm();
        if !(nx <= OVERFLOW_GUARD) {
            return Err(Error::Divergence { time: t, norm: nx });
        }
        let c = self.running_cost.last().copied().unwrap_or(0.0) + increment;
        self.times.push(t);
        self.states.push(x);
        self.running_cost.push(c);
        Ok(())
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory has a start")
    }

    /// Cost including the tail estimate when the run was truncated.
    pub fn cost_with_tail(&self) -> f64 {
        self.cost + self.tail_estimate.unwrap_or(0.0)
    }

    /// Writes `t, x_1..x_n, u_1..u_m, running_cost`. For sampled loops the
    /// control column holds the value applied from that node on; it is left
    /// empty at the last node.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states[0].len();
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|j| format!("u_{j}")));
        header.push("running_cost".into());
        w.write_record(&header).map_err(csv_err)?;
        for (i, (&t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut rec = vec![format!("{t:.17e}")];
            rec.extend(x.iter().map(|v| format!("{v:.17e}")));
            match self.controls.get(i) {
                Some(u) => rec.extend(u.iter().map(|v| format!("{v:.17e}"))),
                None => rec.extend((0..m).map(|_| String::new())),
            }
            rec.push(format!("{:.17e}", self.running_cost[i]));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

/// Interval cost `h (<g1 x, x> + 2 <m2 u, x> + <(n1 + n2) u, u>)`.
fn interval_cost(kernel: &IntervalKernel, x: &Vector, u: &Vector) -> f64 {
    let h = kernel.h;
    let n12 = &kernel.n1 + &kernel.n2;
    h * (quad_form(&kernel.g1, x) + 2.0 * x.dot(&(&kernel.m2 * u)) + quad_form(&n12, u))
}

fn propagate(kernel: &IntervalKernel, x: &Vector, u: &Vector) -> Vector {
    &kernel.phi * x + kernel.gamma() * u
}

/// Horizon used for infinite-horizon runs: `max(40 ρmax(E) / ρmin(Q), 10)`.
pub fn simulation_horizon(einf: &Mat, q: &Mat) -> f64 {
    let rq = min_eigenvalue(q);
    if rq > 0.0 {
        (40.0 * max_eigenvalue(einf) / rq).max(10.0)
    } else {
        10.0
    }
}

// ---------------------------------------------------------------------------
// Sampled-data loops
// ---------------------------------------------------------------------------

/// Feedback law for a sampled-data loop.
#[derive(Debug, Clone, Copy)]
pub enum SampledFeedback<'a> {
    /// Finite horizon, `u_i = -K(t_{i+1}, E_{i+1}, h_{i+1}) x(t_i)`.
    Sequence(&'a RiccatiSeq),
    /// Infinite horizon, `u_i = -K(E^{∞,Δ}, h) x(t_i)`.
    Stationary(&'a AreSolution),
    /// Infinite horizon with a given gain `K` and step `h`.
    Fixed { gain: &'a Mat, h: f64 },
}

/// Closed-loop simulation with exact zero-order-hold propagation.
///
/// `steps` caps the number of intervals; infinite-horizon loops default to
/// `ceil(T_sim / h)`.
pub fn simulate_sampled(
    problem: &LqProblem,
    feedback: SampledFeedback<'_>,
    x0: &Vector,
    steps: Option<usize>,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if x0.len() != problem.n() || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::Dimension(format!(
            "x0 must be a finite vector of length {}",
            problem.n()
        )));
    }
    match feedback {
        SampledFeedback::Sequence(seq) => {
            let kernels = partition_kernels(problem, &seq.partition, tol)?;
            let count = steps.unwrap_or(kernels.len()).min(kernels.len());
            let times = seq.partition.times();
            let mut traj = Trajectory::start(x0, true, false);
            let mut x = x0.clone();
            for i in 0..count {
                let k = kernels[i].parts(&seq.values[i + 1]).gain()?;
                let u = -(&k * &x);
                let c = interval_cost(&kernels[i], &x, &u);
                x = propagate(&kernels[i], &x, &u);
                traj.controls.push(u);
                traj.push(times[i + 1], x.clone(), c)?;
            }
            let running = *traj.running_cost.last().expect("non-empty");
            if count == kernels.len() {
                traj.terminal_cost = quad_form(problem.terminal(), &x);
            }
            traj.cost = running + traj.terminal_cost;
            Ok(traj)
        }
        SampledFeedback::Stationary(are) => {
            let kernel = IntervalKernel::new(problem, 0.0, are.h, tol)?;
            let k = kernel.parts(&are.e).gain()?;
            let (_, _, q, _) = problem.constant()?;
            let count = steps.unwrap_or_else(|| (simulation_horizon(&are.e, q) / are.h).ceil() as usize);
            let mut traj = run_fixed(&kernel, &k, x0, count)?;
            traj.tail_estimate = Some(quad_form(&are.e, traj.final_state()));
            Ok(traj)
        }
        SampledFeedback::Fixed { gain, h } => {
            let kernel = IntervalKernel::new(problem, 0.0, h, tol)?;
            if gain.nrows() != problem.m() || gain.ncols() != problem.n() {
                return Err(Error::Dimension("gain must be m x n".into()));
            }
            // an unstable loop has no value matrix; it then runs to the guard
            let value = fixed_gain_value_from(&kernel, gain).ok();
            let count = match (steps, &value) {
                (Some(c), _) => c,
                (None, Some(x)) => {
                    let (_, _, q, _) = problem.constant()?;
                    (simulation_horizon(x, q) / h).ceil() as usize
                }
                (None, None) => (10.0 / h).ceil() as usize,
            };
            let mut traj = run_fixed(&kernel, gain, x0, count)?;
            traj.tail_estimate = value.map(|x| quad_form(&x, traj.final_state()));
            Ok(traj)
        }
    }
}

fn run_fixed(kernel: &IntervalKernel, k: &Mat, x0: &Vector, count: usize) -> Result<Trajectory> {
    if count > MAX_STEPS {
        return Err(Error::Validation(format!(
            "simulation would need {count} steps (limit {MAX_STEPS}); increase h"
        )));
    }
    let mut traj = Trajectory::start(x0, true, true);
    let mut x = x0.clone();
    let negligible = NEGLIGIBLE * x0.norm();
    for i in 0..count {
        if x.norm() <= negligible {
            break;
        }
        let u = -(k * &x);
        let c = interval_cost(kernel, &x, &u);
        x = propagate(kernel, &x, &u);
        traj.controls.push(u);
        traj.push((i + 1) as f64 * kernel.h, x.clone(), c)?;
    }
    traj.cost = *traj.running_cost.last().expect("non-empty");
    Ok(traj)
}

/// The ZOH controller built from the permanent root, `K = R^{-1} B^T E∞`.
pub fn threshold_gain(problem: &LqProblem, einf: &AreSolution) -> Result<Mat> {
    let (_, b, _, r) = problem.constant()?;
    spd_solve(r, &(b.transpose() * &einf.e), "R")
}

/// Value matrix `X` of the ZOH loop `u_i = -K x(t_i)` on an infinite
/// horizon: the total cost from `x0` is `<X x0, x0>`. Solves the discrete
/// Lyapunov equation `X = Φ_K^T X Φ_K + W_K`.
pub fn fixed_gain_value(problem: &LqProblem, gain: &Mat, h: f64, tol: &Tolerances) -> Result<Mat> {
    let kernel = IntervalKernel::new(problem, 0.0, h, tol)?;
    fixed_gain_value_from(&kernel, gain)
}

fn fixed_gain_value_from(kernel: &IntervalKernel, k: &Mat) -> Result<Mat> {
    let n = kernel.phi.nrows();
    let phi_k = &kernel.phi - kernel.gamma() * k;
    let radius = phi_k
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::Solver(format!(
            "sampled loop is not stable (spectral radius {radius})"
        )));
    }
    let n12 = &kernel.n1 + &kernel.n2;
    let w = (&kernel.g1 - (&kernel.m2 * k) * 2.0 + k.transpose() * n12 * k) * kernel.h;
    let w = crate::linalg::symmetrize(&w);
    let pt = phi_k.transpose();
    let op = Mat::identity(n * n, n * n) - pt.kronecker(&pt);
    let x = op
        .lu()
        .solve(&crate::matfun::mat_to_vec(&w))
        .ok_or_else(|| Error::Solver("singular Stein operator".into()))?;
    Ok(crate::linalg::symmetrize(&crate::matfun::vec_to_mat(x.as_slice(), n, n)))
}

/// `h <W_1 x_i, x_i>`: the exact running cost of one interval under the
/// feedback built from `E` and `h`.
pub fn exact_interval_cost(problem: &LqProblem, e: &Mat, h: f64, x: &Vector, tol: &Tolerances) -> Result<f64> {
    if !problem.is_autonomous() {
        return Err(Error::Validation("exact interval cost needs constant coefficients".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Validation(format!("sampling step must be positive, got {h}")));
    }
    let parts = IntervalKernel::new(problem, 0.0, h, tol)?.parts(e);
    Ok(h * quad_form(&parts.running_cost_weight()?, x))
}

// ---------------------------------------------------------------------------
// Permanent loops
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum PermanentFeedback<'a> {
    /// Finite horizon, `u(t) = -R^{-1} B^T E^T(t) x(t)`.
    Flow(&'a RiccatiFlow),
    /// Infinite horizon, `u = -R^{-1} B^T E∞ x`.
    Stationary(&'a AreSolution),
}

/// Permanent feedback loop reported every `grid_step`.
pub fn simulate_permanent(
    problem: &LqProblem,
    feedback: PermanentFeedback<'_>,
    x0: &Vector,
    grid_step: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    let n = problem.n();
    if x0.len() != n || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::Dimension(format!("x0 must be a finite vector of length {n}")));
    }
    if !(grid_step > 0.0) {
        return Err(Error::Validation(format!("grid step must be positive, got {grid_step}")));
    }
    match feedback {
        PermanentFeedback::Flow(flow) => {
            if !matches!(problem.horizon(), Horizon::Finite(_)) {
                return Err(Error::Validation("flow feedback needs a finite horizon".into()));
            }
            let t_final = flow.t_final;
            let gain_at = |t: f64| -> Result<Mat> {
                spd_solve(&problem.r(t), &(problem.b(t).transpose() * flow.at(t)), "R")
            };
            // state and the running cost integrated together
            let rhs = |t: f64, y: &Vector| -> Result<Vector> {
                let x = y.rows(0, n).into_owned();
                let k = gain_at(t)?;
                let u = -(&k * &x);
                let dx = problem.a(t) * &x + problem.b(t) * &u;
                let dc = quad_form(&problem.q(t), &x) + quad_form(&problem.r(t), &u);
                let mut dy = Vector::zeros(n + 1);
                dy.rows_mut(0, n).copy_from(&dx);
                dy[n] = dc;
                Ok(dy)
            };
            let cells = (t_final / grid_step).ceil().max(1.0) as usize;
            let mut outputs: Vec<f64> = (1..cells).map(|i| i as f64 * grid_step).collect();
            outputs.push(t_final);
            let mut y0 = Vector::zeros(n + 1);
            y0.rows_mut(0, n).copy_from(x0);
            let opts = OdeOptions::with_tol(tol.ode.min(1e-10));
            let guard = |t: f64, y: &mut Vector| -> Result<()> {
                let nx = y.rows(0, n).norm();
                if !(nx <= OVERFLOW_GUARD) {
                    return Err(Error::Divergence { time: t, norm: nx });
                }
                Ok(())
            };
            let states = integrate(rhs, 0.0, y0, &outputs, &opts, guard)?;
            let mut traj = Trajectory::start(x0, false, false);
            traj.controls.push(-(gain_at(0.0)? * x0));
            for (&t, y) in outputs.iter().zip(&states) {
                let x = y.rows(0, n).into_owned();
                let prev = *traj.running_cost.last().expect("non-empty");
                traj.controls.push(-(gain_at(t)? * &x));
                traj.push(t, x, y[n] - prev)?;
            }
            traj.terminal_cost = quad_form(problem.terminal(), traj.final_state());
            traj.cost = *traj.running_cost.last().expect("non-empty") + traj.terminal_cost;
            Ok(traj)
        }
        PermanentFeedback::Stationary(are) => {
            let (a, b, q, r) = problem.constant()?;
            let k = spd_solve(r, &(b.transpose() * &are.e), "R")?;
            let acl = a - b * &k;
            let weight = q + k.transpose() * r * &k;
            let t_sim = simulation_horizon(&are.e, q);
            let cells = (t_sim / grid_step).ceil() as usize;
            if cells > MAX_STEPS {
                return Err(Error::Validation(format!(
                    "simulation would need {cells} cells (limit {MAX_STEPS}); increase the grid step"
                )));
            }
            // exact step map and exact cost gram over one cell
            let (step, gram) = van_loan(&acl, &weight, grid_step)?;
            let mut traj = Trajectory::start(x0, false, true);
            let mut x = x0.clone();
            traj.controls.push(-(&k * &x));
            let negligible = NEGLIGIBLE * x0.norm();
            for i in 0..cells {
                if x.norm() <= negligible {
                    break;
                }
                let c = quad_form(&gram, &x);
                x = &step * &x;
                traj.controls.push(-(&k * &x));
                traj.push((i + 1) as f64 * grid_step, x.clone(), c)?;
            }
            traj.cost = *traj.running_cost.last().expect("non-empty");
            traj.tail_estimate = Some(quad_form(&are.e, &x));
            Ok(traj)
        }
    }
}

/// Open-loop propagation `x(t) = e^{tA} x0` on a grid, zero control.
pub fn simulate_open_loop(problem: &LqProblem, x0: &Vector, grid_step: f64, cells: usize) -> Result<Trajectory> {
    let (a, _, q, _) = problem.constant()?;
    let (step, gram) = van_loan(a, q, grid_step)?;
    let mut traj = Trajectory::start(x0, false, true);
    let m = problem.m();
    let mut x = x0.clone();
    traj.controls.push(Vector::zeros(m));
    for i in 0..cells {
        let c = quad_form(&gram, &x);
        x = &step * &x;
        traj.controls.push(Vector::zeros(m));
        traj.push((i + 1) as f64 * grid_step, x.clone(), c)?;
    }
    traj.cost = *traj.running_cost.last().expect("non-empty");
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Decay diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub decayed: bool,
    pub threshold: f64,
    pub final_norm: f64,
    /// First node where `|x| <= threshold`.
    pub crossing_time: Option<f64>,
    /// `-ln(|x(t)|^2 / |x0|^2) / t` at the crossing (or final) node.
    pub empirical_rate: Option<f64>,
    /// Rate the weighted norm was checked against, if any.
    pub bound_rate: Option<f64>,
    /// `<E x(t), x(t)> <= <E x0, x0> e^{-rate t}` at every node.
    pub within_bound: Option<bool>,
}

impl DecayReport {
    pub fn pass(&self) -> bool {
        self.decayed && self.within_bound.unwrap_or(true)
    }
}

/// Checks that the state falls below `1e-6 |x0|`; with a weight `E` and a
/// rate it also checks the exponential envelope of `<E x, x>`.
pub fn decay_check(traj: &Trajectory, envelope: Option<(&Mat, f64)>) -> DecayReport {
    let n0 = traj.states[0].norm();
    let threshold = 1e-6 * n0;
    let final_norm = traj.final_state().norm();
    if n0 == 0.0 {
        return DecayReport {
            decayed: true,
            threshold,
            final_norm,
            crossing_time: Some(0.0),
            empirical_rate: None,
            bound_rate: envelope.map(|e| e.1),
            within_bound: envelope.map(|_| true),
        };
    }
    let crossing = traj
        .times
        .iter()
        .zip(&traj.states)
        .find(|(_, x)| x.norm() <= threshold)
        .map(|(&t, _)| t);
    let (t_ref, x_ref) = match crossing {
        Some(t) => {
            let i = traj.times.iter().position(|&s| s == t).expect("crossing node");
            (t, traj.states[i].norm())
        }
        None => (*traj.times.last().expect("non-empty"), final_norm),
    };
    let empirical_rate = (t_ref > 0.0 && x_ref > 0.0).then(|| -2.0 * (x_ref / n0).ln() / t_ref);
    let within_bound = envelope.map(|(e, rate)| {
        let v0 = quad_form(e, &traj.states[0]);
        traj.times.iter().zip(&traj.states).all(|(&t, x)| {
            quad_form(e, x) <= v0 * (-rate * t).exp() * (1.0 + 1e-9) + 1e-300
        })
    });
    DecayReport {
        decayed: crossing.is_some(),
        threshold,
        final_norm,
        crossing_time: crossing,
        empirical_rate,
        bound_rate: envelope.map(|e| e.1),
        within_bound,
    }
}
