//! The four Riccati solvers (permanent/sampled, differential/algebraic),
//! the uniform bound diagnostic and the sampling-threshold constants.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmap::IntervalKernel;
use crate::linalg::{
    max_eigenvalue, min_eigenvalue, opnorm, quad_form, spd_solve, symmetrize, symmetrize_mut,
    Mat, Vector,
};
use crate::lqdef::{validate, LqProblem, TimePartition};
use crate::matfun::{integrate, mat_to_vec, vec_to_mat, OdeOptions};
use crate::tolerances::Tolerances;

/// Seed of the probe vectors used by the monotonicity check.
pub const PROBE_SEED: u64 = 0x5eed_0f_d1ce;
const PROBE_COUNT: usize = 20;
const DIVERGENCE_GUARD: f64 = 1e12;

// ---------------------------------------------------------------------------
// Solution types
// ---------------------------------------------------------------------------

/// Solution of the permanent differential equation on an ascending grid.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiFlow {
    pub times: Vec<f64>,
    pub values: Vec<Mat>,
    /// `dE/dt` at each grid point, used for Hermite interpolation.
    pub rates: Vec<Mat>,
    pub t_final: f64,
}

impl RiccatiFlow {
    /// `E^T(0)`.
    pub fn initial(&self) -> &Mat {
        &self.values[0]
    }

    /// Cubic Hermite interpolation between grid points.
    pub fn at(&self, t: f64) -> Mat {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0].clone();
        }
        if t >= *times.last().expect("non-empty") {
            return self.values.last().expect("non-empty").clone();
        }
        let k = times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (times[k], times[k + 1]);
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        &self.values[k] * h00
            + &self.rates[k] * (h10 * dt)
            + &self.values[k + 1] * h01
            + &self.rates[k + 1] * (h11 * dt)
    }
}

/// Solution of the sampled-data difference equation on a partition.
/// Index `i` holds `E_i`, attached to `t_i`.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSeq {
    pub partition: TimePartition,
    pub values: Vec<Mat>,
}

impl RiccatiSeq {
    pub fn initial(&self) -> &Mat {
        &self.values[0]
    }
}

/// Root of an algebraic Riccati equation `F(E, h) = 0`; `h = 0` is permanent.
#[derive(Debug, Clone, Serialize)]
pub struct AreSolution {
    pub e: Mat,
    pub h: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Largest real part of the closed-loop spectrum (continuous time) or
    /// log of the spectral radius divided by `h` (sampled).
    pub closed_loop_abscissa: f64,
    /// Smallest increment of the probe quadratic forms along the forward
    /// induction (sampled solver only).
    pub min_probe_increment: Option<f64>,
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn psd_violation(e: &Mat, tol: &Tolerances) -> Option<f64> {
    let lo = min_eigenvalue(e);
    (lo < -tol.psd * (1.0 + opnorm(e))).then_some(lo)
}

fn require_infinite_assumptions(problem: &LqProblem, tol: &Tolerances) -> Result<()> {
    let report = validate(problem, &[], tol)?;
    if !report.q_pd {
        return Err(Error::Validation(
            "(H1) violated: Q must be positive definite for infinite-horizon problems".into(),
        ));
    }
    if !report.optimizable() {
        return Err(Error::Validation(
            "(H2) not established: (A, B) fails both the Kalman and PBH tests".into(),
        ));
    }
    Ok(())
}

fn spectral_abscissa(a: &Mat) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn spectral_radius(a: &Mat) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solves `a^T X + X a + c = 0` through the Kronecker form.
pub fn lyapunov(a: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let at = a.transpose();
    let ident = Mat::identity(n, n);
    let op = ident.kronecker(&at) + at.kronecker(&ident);
    let rhs = -mat_to_vec(c);
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&vec_to_mat(x.as_slice(), n, n)))
}

// ---------------------------------------------------------------------------
// Permanent differential equation
// ---------------------------------------------------------------------------

/// Backward integration of `dE/dt = F(t, E, 0)`, `E(T) = P`, reported on a
/// uniform grid of step `grid_step` (the last cell may be shorter).
pub fn solve_pdre(problem: &LqProblem, grid_step: f64, tol: &Tolerances) -> Result<RiccatiFlow> {
    let t_final = problem.final_time()?;
    if !(grid_step > 0.0) {
        return Err(Error::Validation(format!("grid step must be positive, got {grid_step}")));
    }
    let cells = (t_final / grid_step).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..cells).map(|i| i as f64 * grid_step).collect();
    times.push(t_final);
    solve_pdre_at(problem, &times, tol)
}

/// Same as [`solve_pdre`] but reports the flow at the given times in
/// `[0, T]` (the final time is always included).
pub fn solve_pdre_at(problem: &LqProblem, times: &[f64], tol: &Tolerances) -> Result<RiccatiFlow> {
    let t_final = problem.final_time()?;
    let mut grid: Vec<f64> = times.iter().copied().filter(|t| *t >= 0.0 && *t <= t_final).collect();
    grid.push(t_final);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 {
        grid.insert(0, 0.0);
    }
    let n = problem.n();
    let rhs = |t: f64, y: &Vector| -> Result<Vector> {
        let e = vec_to_mat(y.as_slice(), n, n);
        let f = IntervalKernel::new(problem, t, 0.0, tol)?.parts(&e).f()?;
        Ok(mat_to_vec(&f))
    };
    let post = |t: f64, y: &mut Vector| -> Result<()> {
        let mut e = vec_to_mat(y.as_slice(), n, n);
        symmetrize_mut(&mut e);
        if let Some(lo) = psd_violation(&e, tol) {
            return Err(Error::Solver(format!(
                "Riccati flow left the PSD cone at t = {t} (min eigenvalue {lo:e})"
            )));
        }
        y.copy_from_slice(e.as_slice());
        Ok(())
    };
    let outputs: Vec<f64> = grid.iter().rev().copied().collect();
    let y0 = mat_to_vec(problem.terminal());
    let opts = OdeOptions::with_tol(tol.ode);
    let states = integrate(rhs, t_final, y0, &outputs, &opts, post)?;
    let mut values: Vec<Mat> = states
        .iter()
        .rev()
        .map(|y| vec_to_mat(y.as_slice(), n, n))
        .collect();
    *values.last_mut().expect("non-empty") = problem.terminal().clone();
    let rates = grid
        .iter()
        .zip(&values)
        .map(|(&t, e)| IntervalKernel::new(problem, t, 0.0, tol)?.parts(e).f())
        .collect::<Result<Vec<_>>>()?;
    Ok(RiccatiFlow {
        times: grid,
        values,
        rates,
        t_final,
    })
}

// ---------------------------------------------------------------------------
// Sampled-data difference equation
// ---------------------------------------------------------------------------

/// Kernels for every interval of a partition, reused across intervals of
/// equal length in the autonomous case.
pub(crate) fn partition_kernels(
    problem: &LqProblem,
    partition: &TimePartition,
    tol: &Tolerances,
) -> Result<Vec<IntervalKernel>> {
    let times = partition.times();
    let mut cache: HashMap<u64, IntervalKernel> = HashMap::new();
    (1..times.len())
        .map(|i| {
            let h = partition.uniform_step().unwrap_or_else(|| partition.step(i));
            if problem.is_autonomous() {
                if let Some(k) = cache.get(&h.to_bits()) {
                    let mut k = k.clone();
                    k.t = times[i];
                    return Ok(k);
                }
                let k = IntervalKernel::new(problem, times[i], h, tol)?;
                cache.insert(h.to_bits(), k.clone());
                Ok(k)
            } else {
                IntervalKernel::new(problem, times[i], h, tol)
            }
        })
        .collect()
}

/// Backward recursion `E_i = E_{i+1} - h_{i+1} F(t_{i+1}, E_{i+1}, h_{i+1})`,
/// `E_N = P`.
pub fn solve_sddre(problem: &LqProblem, partition: &TimePartition, tol: &Tolerances) -> Result<RiccatiSeq> {
    let t_final = problem.final_time()?;
    if (partition.final_time() - t_final).abs() > 4.0 * f64::EPSILON * t_final {
        return Err(Error::Partition(format!(
            "partition ends at {} but the horizon is {t_final}",
            partition.final_time()
        )));
    }
    let kernels = partition_kernels(problem, partition, tol)?;
    let count = partition.len();
    let mut values = vec![Mat::zeros(0, 0); count + 1];
    values[count] = problem.terminal().clone();
    for i in (0..count).rev() {
        let next = &values[i + 1];
        let kernel = &kernels[i];
        let f = kernel.parts(next).f()?;
        let mut e = next - f * kernel.h;
        symmetrize_mut(&mut e);
        if let Some(lo) = psd_violation(&e, tol) {
            return Err(Error::Solver(format!(
                "difference Riccati recursion left the PSD cone at index {i} (min eigenvalue {lo:e})"
            )));
        }
        values[i] = e;
    }
    Ok(RiccatiSeq {
        partition: partition.clone(),
        values,
    })
}

// ---------------------------------------------------------------------------
// Permanent algebraic equation
// ---------------------------------------------------------------------------

/// Newton–Kleinman iteration seeded by the permanent flow from `P = 0`,
/// with long-horizon integration as fallback.
pub fn solve_pare(problem: &LqProblem, tol: &Tolerances) -> Result<AreSolution> {
    require_infinite_assumptions(problem, tol)?;
    let (a, b, q, r) = problem.constant()?;
    let n = problem.n();
    let kernel0 = IntervalKernel::new(problem, 0.0, 0.0, tol)?;
    let residual_of = |e: &Mat| -> Result<f64> { Ok(opnorm(&kernel0.parts(e).f()?)) };
    let gain_of = |e: &Mat| spd_solve(r, &(b.transpose() * e), "R");

    // E(s) = E^s(0) for P = 0 solves dE/ds = -F(E, 0) forward in s.
    let rhs = |_: f64, y: &Vector| -> Result<Vector> {
        let e = vec_to_mat(y.as_slice(), n, n);
        Ok(-mat_to_vec(&kernel0.parts(&e).f()?))
    };
    let sym_post = |_: f64, y: &mut Vector| -> Result<()> {
        let mut e = vec_to_mat(y.as_slice(), n, n);
        symmetrize_mut(&mut e);
        y.copy_from_slice(e.as_slice());
        Ok(())
    };
    let chunk = 1.0 / (1.0 + opnorm(a));
    let opts = OdeOptions::with_tol(tol.ode);
    let mut s = 0.0;
    let mut e = Mat::zeros(n, n);
    let mut seeded = false;
    let max_horizon = 1e4 * chunk.max(1.0);
    while s < max_horizon {
        let y = integrate(rhs, s, mat_to_vec(&e), &[s + chunk], &opts, sym_post)?
            .pop()
            .expect("one output");
        s += chunk;
        e = vec_to_mat(y.as_slice(), n, n);
        if opnorm(&e) > DIVERGENCE_GUARD {
            return Err(Error::Solver("seed flow diverged".into()));
        }
        if residual_of(&e)? <= 1e-4 {
            let k = gain_of(&e)?;
            if spectral_abscissa(&(a - b * &k)) < 0.0 {
                seeded = true;
                break;
            }
        }
    }
    if !seeded {
        return Err(Error::Solver(format!(
            "permanent flow did not settle within horizon {max_horizon}"
        )));
    }

    let mut iterations = 0;
    let mut best = e.clone();
    let mut best_res = residual_of(&e)?;
    let newton_ok = loop {
        if best_res <= tol.are * (1.0 + opnorm(&best)) {
            break true;
        }
        if iterations >= 60 {
            break false;
        }
        iterations += 1;
        let k = gain_of(&e)?;
        let acl = a - b * &k;
        let c = q + k.transpose() * r * &k;
        let next = match lyapunov(&acl, &c) {
            Ok(x) => x,
            Err(_) => break false,
        };
        let res = residual_of(&next)?;
        e = next;
        if res < best_res {
            best_res = res;
            best = e.clone();
        } else if iterations > 8 {
            // quadratic phase is over; roundoff floor reached
            break best_res <= tol.are * (1.0 + opnorm(&best));
        }
    };
    if !newton_ok {
        // fallback: keep integrating the flow
        e = best.clone();
        while s < max_horizon && best_res > tol.are * (1.0 + opnorm(&e)) {
            let y = integrate(rhs, s, mat_to_vec(&e), &[s + chunk], &opts, sym_post)?
                .pop()
                .expect("one output");
            s += chunk;
            e = vec_to_mat(y.as_slice(), n, n);
            best_res = residual_of(&e)?;
            iterations += 1;
        }
        if best_res > tol.are * (1.0 + opnorm(&e)) {
            return Err(Error::Solver(format!(
                "permanent ARE residual stalled at {best_res:e}"
            )));
        }
        best = e;
    }
    if min_eigenvalue(&best) < tol.pd * (1.0 + opnorm(&best)) {
        return Err(Error::Solver("permanent ARE root is not positive definite".into()));
    }
    let k = gain_of(&best)?;
    Ok(AreSolution {
        closed_loop_abscissa: spectral_abscissa(&(a - b * &k)),
        e: best,
        h: 0.0,
        residual: best_res,
        iterations,
        min_probe_increment: None,
    })
}

// ---------------------------------------------------------------------------
// Sampled-data algebraic equation
// ---------------------------------------------------------------------------

/// Forward induction `D_{k+1} = D_k - h F(D_k, h)` from `D_0 = 0`.
///
/// The probe quadratic forms `<D_k x, x>` must be nondecreasing; a drop
/// larger than `mono * (1 + |D_k|)` aborts the solve.
pub fn solve_sdare(problem: &LqProblem, h: f64, tol: &Tolerances) -> Result<AreSolution> {
    solve_sdare_traced(problem, h, tol, |_, _| {})
}

/// [`solve_sdare`] with a callback on every iterate `(k, D_k)`.
pub fn solve_sdare_traced<C>(problem: &LqProblem, h: f64, tol: &Tolerances, mut trace: C) -> Result<AreSolution>
where
    C: FnMut(usize, &Mat),
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Validation(format!("sampling step must be positive, got {h}")));
    }
    require_infinite_assumptions(problem, tol)?;
    let n = problem.n();
    let kernel = IntervalKernel::new(problem, 0.0, h, tol)?;
    let probes = unit_probes(n, PROBE_COUNT, PROBE_SEED);
    let mut d = Mat::zeros(n, n);
    let mut forms: Vec<f64> = vec![0.0; PROBE_COUNT];
    let mut min_incr = f64::INFINITY;
    trace(0, &d);
    for k in 0..tol.max_iters {
        let f = kernel.parts(&d).f()?;
        let residual = opnorm(&f);
        let scale = 1.0 + opnorm(&d);
        if residual * h <= tol.stop * scale && residual <= tol.are * scale {
            if min_eigenvalue(&d) < tol.pd * scale {
                return Err(Error::Solver("sampled ARE root is not positive definite".into()));
            }
            let gain = kernel.parts(&d).gain()?;
            let discrete = &kernel.phi - kernel.gamma() * gain;
            return Ok(AreSolution {
                closed_loop_abscissa: spectral_radius(&discrete).ln() / h,
                e: d,
                h,
                residual,
                iterations: k,
                min_probe_increment: Some(min_incr),
            });
        }
        let mut next = &d - f * h;
        symmetrize_mut(&mut next);
        if let Some(lo) = psd_violation(&next, tol) {
            return Err(Error::Solver(format!(
                "forward induction left the PSD cone at step {} (min eigenvalue {lo:e})",
                k + 1
            )));
        }
        for (x, form) in probes.iter().zip(forms.iter_mut()) {
            let v = quad_form(&next, x);
            let incr = v - *form;
            min_incr = min_incr.min(incr);
            if incr < -tol.mono * scale {
                return Err(Error::Solver(format!(
                    "forward induction is not monotone at step {} (drop {:e})",
                    k + 1,
                    -incr
                )));
            }
            *form = v;
        }
        if opnorm(&next) > DIVERGENCE_GUARD {
            return Err(Error::Solver(format!(
                "forward induction diverged at step {}; (H2^h) may fail for h = {h}",
                k + 1
            )));
        }
        d = next;
        trace(k + 1, &d);
    }
    Err(Error::Solver(format!(
        "forward induction did not converge in {} iterations",
        tol.max_iters
    )))
}

// ---------------------------------------------------------------------------
// Uniform bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub holds: bool,
    /// Smallest `bound(t) - |E(t)|` over the nodes.
    pub min_slack: f64,
    /// Largest `bound(t) - |E(t)|` over the nodes.
    pub max_slack: f64,
    pub worst_time: f64,
}

/// Checks `|E(t)| <= (|P| + (T - t)|Q|_∞) e^{2 |A|_∞ (T - t)}` at each node.
pub fn bound_check<'a, I>(problem: &LqProblem, nodes: I) -> Result<BoundReport>
where
    I: IntoIterator<Item = (f64, &'a Mat)>,
{
    let t_final = problem.final_time()?;
    let np = opnorm(problem.terminal());
    let mut report = BoundReport {
        holds: true,
        min_slack: f64::INFINITY,
        max_slack: f64::NEG_INFINITY,
        worst_time: t_final,
    };
    for (t, e) in nodes {
        let (na, nq) = problem.sup_norms(t, t_final);
        let rem = t_final - t;
        let bound = (np + rem * nq) * (2.0 * na * rem).exp();
        let slack = bound - opnorm(e);
        // equality at t = T up to roundoff
        if slack < -1e-12 * (1.0 + bound) {
            report.holds = false;
        }
        if slack < report.min_slack {
            report.min_slack = slack;
            report.worst_time = t;
        }
        report.max_slack = report.max_slack.max(slack);
    }
    Ok(report)
}

impl RiccatiFlow {
    pub fn bound_check(&self, problem: &LqProblem) -> Result<BoundReport> {
        bound_check(problem, self.times.iter().copied().zip(self.values.iter()))
    }
}

impl RiccatiSeq {
    pub fn bound_check(&self, problem: &LqProblem) -> Result<BoundReport> {
        bound_check(
            problem,
            self.partition.times().iter().copied().zip(self.values.iter()),
        )
    }
}

// ---------------------------------------------------------------------------
// Sampling threshold and cost inflation constant
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct StabilityConstants {
    /// `B R^{-1} B^T E∞`.
    pub w: Mat,
    pub hbar: f64,
    pub cbar: f64,
    pub norm_a: f64,
    pub norm_a_minus_w: f64,
    pub rho_max_ew: f64,
    pub rho_min_q: f64,
    pub rho_max_e: f64,
    pub rho_min_e: f64,
}

/// Upper end of the bisection for the threshold.
pub const HBAR_SEARCH_MAX: f64 = 10.0;

impl StabilityConstants {
    fn growth(&self, h: f64) -> f64 {
        h * self.norm_a_minus_w * (h * self.norm_a).exp()
    }

    /// Both threshold inequalities at `h`, the first with strict margin.
    pub fn admissible(&self, h: f64, margin: f64) -> bool {
        let g = self.growth(h);
        if !(g < 1.0 - margin) {
            return false;
        }
        2.0 * self.rho_max_ew * g / (1.0 - g) <= self.rho_min_q / 2.0
    }

    /// Decay rate of `<E∞ x, x>` guaranteed under the threshold.
    pub fn decay_rate(&self) -> f64 {
        self.rho_min_q / (2.0 * self.rho_max_e)
    }
}

pub fn stability_constants(problem: &LqProblem, einf: &AreSolution, tol: &Tolerances) -> Result<StabilityConstants> {
    let (a, b, q, r) = problem.constant()?;
    let e = &einf.e;
    let rinv_bt_e = spd_solve(r, &(b.transpose() * e), "R")?;
    let w = b * &rinv_bt_e;
    let rho_min_q = min_eigenvalue(q);
    if !(rho_min_q > 0.0) {
        return Err(Error::Validation(
            "(H1) violated: Q must be positive definite".into(),
        ));
    }
    let mut sc = StabilityConstants {
        norm_a: opnorm(a),
        norm_a_minus_w: opnorm(&(a - &w)),
        rho_max_ew: max_eigenvalue(&symmetrize(&(e * &w))).max(0.0),
        rho_min_q,
        rho_max_e: max_eigenvalue(e),
        rho_min_e: min_eigenvalue(e),
        w,
        hbar: 0.0,
        cbar: 0.0,
    };
    if !(sc.rho_min_e > 0.0) {
        return Err(Error::Degenerate("E∞ is not positive definite".into()));
    }
    let hbar = if sc.admissible(HBAR_SEARCH_MAX, tol.margin) {
        HBAR_SEARCH_MAX
    } else {
        let (mut lo, mut hi) = (0.0, HBAR_SEARCH_MAX);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sc.admissible(mid, tol.margin) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if !(hbar > 0.0) {
        return Err(Error::Degenerate(
            "no sampling step in (0, 10] satisfies the threshold inequalities".into(),
        ));
    }
    sc.hbar = hbar;
    let rho_max_r = max_eigenvalue(r);
    let gain_norm = opnorm(&rinv_bt_e);
    sc.cbar = 2.0 * sc.rho_max_e / (sc.rho_min_q * sc.rho_min_e)
        * (max_eigenvalue(q) + rho_max_r * gain_norm * gain_norm * (sc.decay_rate() * hbar).exp());
    Ok(sc)
}

/// Random unit probes shared by monotonicity checks elsewhere.
pub(crate) fn unit_probes(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let nv = v.norm();
            if nv > 0.0 { v / nv } else { Vector::from_element(n, 1.0) }
        })
        .collect()
}
