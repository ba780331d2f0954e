//! The unified Riccati map `F(t, E, h) = M N^{-1} M^T - G` and its seven
//! blocks, for both permanent (`h = 0`) and sampled (`h > 0`) settings.
//!
//! Everything that does not depend on `E` is gathered in an
//! [`IntervalKernel`] for the interval `[t - h, t]`, so iterative solvers
//! pay for the matrix integrals once per interval. The kernel stores
//! `(Φ - I)/h` and `Γ/h` rather than `Φ` and `Γ`, which keeps every block
//! free of cancellation as `h → 0` and makes `h = 0` the same code path.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{is_psd, spd_factor, symmetrize, symmetrize_mut, Mat, Vector};
use crate::lqdef::{Coefficients, LqProblem};
use crate::matfun::{self, integrate, OdeOptions};
use crate::tolerances::Tolerances;

/// The `E`-independent part of the map on the interval `[t - h, t]`.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalKernel {
    pub t: f64,
    pub h: f64,
    /// `Φ(t, t - h)`.
    pub phi: Mat,
    /// `(Φ(t, t - h) - I) / h`, equal to `A(t)` at `h = 0`.
    pub psi_h: Mat,
    /// `(1/h) ∫ Φ(t, τ) B(τ) dτ`, equal to `B(t)` at `h = 0`.
    pub gamma_h: Mat,
    pub g1: Mat,
    pub m2: Mat,
    pub n1: Mat,
    pub n2: Mat,
}

impl IntervalKernel {
    pub fn new(problem: &LqProblem, t: f64, h: f64, tol: &Tolerances) -> Result<Self> {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(Error::Validation(format!("sampling step must be nonnegative, got {h}")));
        }
        let n = problem.n();
        let m = problem.m();
        if h == 0.0 {
            return Ok(Self {
                t,
                h,
                phi: Mat::identity(n, n),
                psi_h: problem.a(t),
                gamma_h: problem.b(t),
                g1: problem.q(t),
                m2: Mat::zeros(n, m),
                n1: problem.r(t),
                n2: Mat::zeros(m, m),
            });
        }
        match problem.coefficients() {
            Coefficients::Autonomous { a, b, q, r } => {
                let z = matfun::zoh_integrals(a, q, h)?;
                Ok(Self {
                    t,
                    h,
                    psi_h: a * &z.i1 / h,
                    gamma_h: &z.i1 * b / h,
                    g1: &z.i2 / h,
                    m2: &z.i3 * b / h,
                    n1: r.clone(),
                    n2: symmetrize(&(b.transpose() * &z.i4 * b / h)),
                    phi: z.phi,
                })
            }
            Coefficients::TimeVarying { .. } => Self::time_varying(problem, t, h, tol),
        }
    }

    /// Integrates the kernel ODE in normalized time `s ∈ [0, 1]`,
    /// `τ = t - h + s h`, with every state scaled to be O(1).
    fn time_varying(problem: &LqProblem, t: f64, h: f64, tol: &Tolerances) -> Result<Self> {
        let n = problem.n();
        let m = problem.m();
        let sizes = [n * n, n * m, n * n, n * m, m * m, m * m];
        let offs: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let total: usize = sizes.iter().sum();
        let ident = Mat::identity(n, n);
        let take = |y: &Vector, k: usize, r: usize, c: usize| {
            matfun::vec_to_mat(&y.as_slice()[offs[k]..offs[k] + sizes[k]], r, c)
        };
        let rhs = |s: f64, y: &Vector| -> Result<Vector> {
            let tau = t - h + s * h;
            let (a, b, q, r) = (problem.a(tau), problem.b(tau), problem.q(tau), problem.r(tau));
            let y1 = take(y, 0, n, n);
            let y2 = take(y, 1, n, m);
            let phi = &ident + &y1 * h;
            let s_mat = &y2 * h;
            let qphi = &q * &phi;
            let parts = [
                &a * &phi,
                &a * &y2 * h + &b,
                phi.transpose() * &qphi,
                phi.transpose() * &q * &s_mat,
                r,
                s_mat.transpose() * &q * &s_mat,
            ];
            let mut out = Vector::zeros(total);
            for (k, p) in parts.iter().enumerate() {
                out.as_mut_slice()[offs[k]..offs[k] + sizes[k]].copy_from_slice(p.as_slice());
            }
            Ok(out)
        };
        let opts = OdeOptions::with_tol(tol.quad.max(1e-13));
        let y = integrate(rhs, 0.0, Vector::zeros(total), &[1.0], &opts, |_, _| Ok(()))?
            .pop()
            .expect("one output");
        let psi_h = take(&y, 0, n, n);
        Ok(Self {
            t,
            h,
            phi: &ident + &psi_h * h,
            psi_h,
            gamma_h: take(&y, 1, n, m),
            g1: symmetrize(&take(&y, 2, n, n)),
            m2: take(&y, 3, n, m),
            n1: symmetrize(&take(&y, 4, m, m)),
            n2: symmetrize(&take(&y, 5, m, m)),
        })
    }

    /// `Γ = ∫ Φ(t, τ) B(τ) dτ` over the interval.
    pub fn gamma(&self) -> Mat {
        &self.gamma_h * self.h
    }

    pub fn parts(&self, e: &Mat) -> FMapParts {
        let h = self.h;
        let e_gamma = e * &self.gamma_h;
        let e_psi = e * &self.psi_h;
        let mut g2 = self.psi_h.transpose() * e + &e_psi;
        if h > 0.0 {
            g2 += self.psi_h.transpose() * &e_psi * h;
        }
        symmetrize_mut(&mut g2);
        FMapParts {
            m1: self.phi.transpose() * &e_gamma,
            m2: self.m2.clone(),
            n1: self.n1.clone(),
            n2: self.n2.clone(),
            n3: symmetrize(&(self.gamma_h.transpose() * &e_gamma * h)),
            g1: self.g1.clone(),
            g2,
        }
    }
}

/// The seven blocks of the map at one `(t, E, h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FMapParts {
    pub m1: Mat,
    pub m2: Mat,
    pub n1: Mat,
    pub n2: Mat,
    pub n3: Mat,
    pub g1: Mat,
    pub g2: Mat,
}

impl FMapParts {
    pub fn m(&self) -> Mat {
        &self.m1 + &self.m2
    }

    pub fn n(&self) -> Mat {
        &self.n1 + &self.n2 + &self.n3
    }

    pub fn g(&self) -> Mat {
        &self.g1 + &self.g2
    }

    /// `N^{-1} M^T` through a Cholesky factorization of `N`.
    pub fn gain(&self) -> Result<Mat> {
        let chol = spd_factor(&self.n(), "N(t, E, h)")?;
        Ok(chol.solve(&self.m().transpose()))
    }

    /// `M N^{-1} M^T - G`, symmetrized.
    pub fn f(&self) -> Result<Mat> {
        let m = self.m();
        let k = self.gain()?;
        let mut f = &m * k - self.g();
        symmetrize_mut(&mut f);
        Ok(f)
    }

    /// Weight `W_1` with `∫ (|x|_Q^2 + |u|_R^2) = h <W_1 x_i, x_i>` on one
    /// interval under the feedback `u = -N^{-1} M^T x_i`.
    pub fn running_cost_weight(&self) -> Result<Mat> {
        let k = self.gain()?;
        let w = &self.g1 + k.transpose() * &self.n2 * &k - (&self.m2 * &k) * 2.0
            + k.transpose() * &self.n1 * &k;
        Ok(symmetrize(&w))
    }

    /// Weight `W_2` with `<E x_i, x_i> - <E x_{i+1}, x_{i+1}> = h <W_2 x_i, x_i>`
    /// under the same feedback.
    pub fn value_decrease_weight(&self) -> Result<Mat> {
        let k = self.gain()?;
        let w = -&self.g2 + (&self.m1 * &k) * 2.0 - k.transpose() * &self.n3 * &k;
        Ok(symmetrize(&w))
    }
}

fn check_e(problem: &LqProblem, e: &Mat, tol: &Tolerances) -> Result<()> {
    let n = problem.n();
    if e.nrows() != n || e.ncols() != n {
        return Err(Error::Dimension(format!("E must be {n}x{n}")));
    }
    if !is_psd(e, tol.psd) {
        return Err(Error::Contract("E is not positive semi-definite".into()));
    }
    Ok(())
}

pub fn eval_parts(problem: &LqProblem, t: f64, e: &Mat, h: f64, tol: &Tolerances) -> Result<FMapParts> {
    check_e(problem, e, tol)?;
    let parts = IntervalKernel::new(problem, t, h, tol)?.parts(e);
    // N = N1 + N2 + N3 with N1 PD and N2, N3 PSD
    spd_factor(&parts.n(), "N(t, E, h)")?;
    Ok(parts)
}

pub fn eval_f(problem: &LqProblem, t: f64, e: &Mat, h: f64, tol: &Tolerances) -> Result<Mat> {
    eval_parts(problem, t, e, h, tol)?.f()
}

/// Feedback gain `K = N^{-1} M^T`; the control law is `u = -K x`.
pub fn gain(problem: &LqProblem, t: f64, e: &Mat, h: f64, tol: &Tolerances) -> Result<Mat> {
    eval_parts(problem, t, e, h, tol)?.gain()
}

/// Classical permanent Riccati right-hand side `E B R^{-1} B^T E - Q - A^T E - E A`.
pub fn classical_rhs(problem: &LqProblem, t: f64, e: &Mat) -> Result<Mat> {
    let (a, b, q, r) = (problem.a(t), problem.b(t), problem.q(t), problem.r(t));
    let rinv_bt_e = crate::linalg::spd_solve(&r, &(b.transpose() * e), "R")?;
    Ok(symmetrize(&(e * &b * rinv_bt_e - q - a.transpose() * e - e * a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    fn s(v: f64) -> Mat {
        m(1, 1, &[v])
    }

    fn scalar() -> LqProblem {
        LqProblem::autonomous(s(0.0), s(1.0), s(1.0), s(1.0)).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn permanent_scalar_blocks() {
        let p = eval_parts(&scalar(), 0.0, &s(1.0), 0.0, &tol()).unwrap();
        assert_eq!(p.m(), s(1.0));
        assert_eq!(p.n(), s(1.0));
        assert_eq!(p.g(), s(1.0));
        assert_eq!(p.f().unwrap(), s(0.0));
        assert_eq!(gain(&scalar(), 0.0, &s(1.0), 0.0, &tol()).unwrap(), s(1.0));
    }

    #[test]
    fn permanent_scalar_map_is_e_squared_minus_one() {
        for e in [0.0, 0.3, 1.7, 12.0] {
            let f = eval_f(&scalar(), 0.0, &s(e), 0.0, &tol()).unwrap();
            assert!((f[(0, 0)] - (e * e - 1.0)).abs() < 1e-13 * (1.0 + e * e));
        }
    }

    #[test]
    fn sampled_scalar_blocks_by_hand() {
        for (e, h) in [(0.0, 1.0), (1.0, 0.1), (2.5, 0.7)] {
            let p = eval_parts(&scalar(), 0.0, &s(e), h, &tol()).unwrap();
            let close = |x: &Mat, v: f64| (x[(0, 0)] - v).abs() < 1e-14 * (1.0 + v.abs());
            assert!(close(&p.m1, e));
            assert!(close(&p.m2, h / 2.0));
            assert!(close(&p.n1, 1.0));
            assert!(close(&p.n2, h * h / 3.0));
            assert!(close(&p.n3, h * e));
            assert!(close(&p.g1, 1.0));
            assert!(p.g2[(0, 0)].abs() < 1e-15);
        }
        let f = eval_f(&scalar(), 0.0, &s(0.0), 1.0, &tol()).unwrap();
        assert!((f[(0, 0)] + 0.8125).abs() < 1e-14);
        let k = gain(&scalar(), 0.0, &s(1.0), 1.0, &tol()).unwrap();
        assert!((k[(0, 0)] - 9.0 / 14.0).abs() < 1e-14);
    }

    #[test]
    fn vanishing_blocks_without_input_or_weight() {
        let a = m(2, 2, &[0.3, 1.0, -1.0, 0.2]);
        let prob =
            LqProblem::autonomous(a, Mat::zeros(2, 1), Mat::zeros(2, 2), s(1.0)).unwrap();
        let e = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = eval_parts(&prob, 0.0, &e, 0.4, &tol()).unwrap();
        assert!(p.m().norm() < 1e-15);
        assert!((p.n() - s(1.0)).norm() < 1e-15);
        assert!((p.g() - &p.g2).norm() < 1e-15);
        assert!(gain(&prob, 0.0, &e, 0.4, &tol()).unwrap().norm() < 1e-15);
    }

    #[test]
    fn output_is_exactly_symmetric() {
        let a = m(3, 3, &[0.1, 2.0, -0.3, 0.0, -1.0, 0.7, 1.1, 0.2, 0.4]);
        let b = m(3, 2, &[1.0, 0.0, 0.3, 1.0, -0.5, 0.2]);
        let prob = LqProblem::autonomous(a, b, Mat::identity(3, 3), Mat::identity(2, 2)).unwrap();
        let e = m(3, 3, &[3.0, 0.2, 0.1, 0.2, 2.0, -0.4, 0.1, -0.4, 1.5]);
        for h in [0.0, 0.05, 0.8] {
            let f = eval_f(&prob, 0.0, &e, h, &tol()).unwrap();
            assert_eq!(f, f.transpose());
        }
    }

    #[test]
    fn rejects_indefinite_e() {
        let err = eval_f(&scalar(), 0.0, &s(-1.0), 0.1, &tol()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn classical_form_at_zero_step() {
        let a = m(2, 2, &[0.0, 1.0, -2.0, 0.5]);
        let b = m(2, 1, &[0.0, 1.0]);
        let prob = LqProblem::autonomous(a, b, Mat::identity(2, 2), s(2.0)).unwrap();
        let e = m(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let f = eval_f(&prob, 0.0, &e, 0.0, &tol()).unwrap();
        let c = classical_rhs(&prob, 0.0, &e).unwrap();
        assert!((f - c).norm() < 1e-13);
    }

    #[test]
    fn time_varying_kernel_reproduces_autonomous() {
        let a = m(2, 2, &[0.0, 1.0, -1.5, -0.3]);
        let b = m(2, 1, &[0.2, 1.0]);
        let q = m(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let prob = LqProblem::autonomous(a, b, q, s(0.7)).unwrap();
        let tv = prob.as_time_varying(5.0).unwrap();
        let e = m(2, 2, &[1.3, -0.2, -0.2, 0.8]);
        for h in [1e-3, 0.1, 0.5] {
            let fa = eval_f(&prob, 1.0, &e, h, &tol()).unwrap();
            let ft = eval_f(&tv, 1.0, &e, h, &tol()).unwrap();
            assert!((&fa - &ft).norm() <= 10.0 * tol().quad, "h = {h}: {:e}", (fa - ft).norm());
        }
    }
}
