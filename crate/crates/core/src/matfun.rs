//! Matrix functions and matrix-valued integrals: the exponential, state
//! transition matrices, the zero-order-hold integrals of the autonomous
//! table, adaptive Gauss–Kronrod quadrature and an embedded Runge–Kutta
//! integrator for matrix ODEs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{check_square, Mat, Vector};

// ---------------------------------------------------------------------------
// Exponential
// ---------------------------------------------------------------------------

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA13: f64 = 5.371920351148152;

fn norm1(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &Mat, coeffs: &[f64]) -> (Mat, Mat) {
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    // powers of A^2
    let mut pow = ident.clone();
    let mut u_inner = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for k in 0..coeffs.len() / 2 {
        v += &pow * coeffs[2 * k];
        u_inner += &pow * coeffs[2 * k + 1];
        pow = &pow * &a2;
    }
    (a * u_inner, v)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_hi = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

fn pade_solve(u: Mat, v: Mat) -> Result<Mat> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Accuracy("singular Pade denominator in expm".into()))
}

/// `e^{sA}` by scaling and squaring with a diagonal Padé approximant.
pub fn expm(a: &Mat, s: f64) -> Result<Mat> {
    check_square(a, "expm argument")?;
    let scaled = a * s;
    let nrm = norm1(&scaled);
    if !nrm.is_finite() {
        return Err(Error::Accuracy("non-finite matrix passed to expm".into()));
    }
    if nrm == 0.0 {
        return Ok(Mat::identity(a.nrows(), a.nrows()));
    }
    for &(m, theta) in THETA.iter() {
        if nrm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&scaled, coeffs);
            return pade_solve(u, v);
        }
    }
    let squarings = (nrm / THETA13).log2().ceil().max(0.0) as i32;
    let reduced = scaled / 2f64.powi(squarings);
    let (u, v) = pade13(&reduced);
    let mut r = pade_solve(u, v)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// Van Loan block integrals
// ---------------------------------------------------------------------------

/// Returns `(e^{hF}, ∫_0^h e^{τF^T} W e^{τF} dτ)` from one block exponential.
pub fn van_loan(f: &Mat, w: &Mat, h: f64) -> Result<(Mat, Mat)> {
    check_square(f, "Van Loan generator")?;
    let k = f.nrows();
    if w.nrows() != k || w.ncols() != k {
        return Err(Error::Dimension("Van Loan weight must match generator".into()));
    }
    let mut block = Mat::zeros(2 * k, 2 * k);
    block.view_mut((0, 0), (k, k)).copy_from(&(-f.transpose()));
    block.view_mut((0, k), (k, k)).copy_from(w);
    block.view_mut((k, k), (k, k)).copy_from(f);
    let e = expm(&block, h)?;
    let f22 = e.view((k, k), (k, k)).into_owned();
    let f12 = e.view((0, k), (k, k)).into_owned();
    let gram = f22.transpose() * f12;
    Ok((f22, gram))
}

/// Zero-order-hold integrals of the autonomous table.
///
/// With `S(τ) = ∫_0^τ e^{ξA} dξ`:
/// `i1 = S(h)`, `i2 = ∫ e^{τA^T} Q e^{τA}`, `i3 = ∫ e^{τA^T} Q S(τ)`,
/// `i4 = ∫ S(τ)^T Q S(τ)`, all over `[0, h]`; `phi = e^{hA}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZohIntegrals {
    pub phi: Mat,
    pub i1: Mat,
    pub i2: Mat,
    pub i3: Mat,
    pub i4: Mat,
}

/// Computes the four integrals with a single exponential of the augmented
/// generator `[[A, I], [0, 0]]` weighted by `diag(Q, 0)`.
pub fn zoh_integrals(a: &Mat, q: &Mat, h: f64) -> Result<ZohIntegrals> {
    check_square(a, "A")?;
    let n = a.nrows();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension("Q must match A".into()));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Validation(format!("sampling step must be positive, got {h}")));
    }
    let mut gen = Mat::zeros(2 * n, 2 * n);
    gen.view_mut((0, 0), (n, n)).copy_from(a);
    gen.view_mut((0, n), (n, n)).fill_with_identity();
    let mut weight = Mat::zeros(2 * n, 2 * n);
    weight.view_mut((0, 0), (n, n)).copy_from(q);
    let (e, gram) = van_loan(&gen, &weight, h)?;
    let sym = |m: Mat| (&m + m.transpose()) * 0.5;
    Ok(ZohIntegrals {
        phi: e.view((0, 0), (n, n)).into_owned(),
        i1: e.view((0, n), (n, n)).into_owned(),
        i2: sym(gram.view((0, 0), (n, n)).into_owned()),
        i3: gram.view((0, n), (n, n)).into_owned(),
        i4: sym(gram.view((n, n), (n, n)).into_owned()),
    })
}

/// The same integrals by nested adaptive quadrature of exponentials.
/// Slow; used to cross-check [`zoh_integrals`].
pub fn zoh_integrals_quadrature(a: &Mat, q: &Mat, h: f64, tol: f64) -> Result<ZohIntegrals> {
    check_square(a, "A")?;
    let inner = |tau: f64| -> Result<Mat> {
        if tau == 0.0 {
            return Ok(Mat::zeros(a.nrows(), a.ncols()));
        }
        quad_matrix(|xi| expm(a, xi), 0.0, tau, tol * 0.1)
    };
    let i1 = quad_matrix(|tau| expm(a, tau), 0.0, h, tol)?;
    let i2 = quad_matrix(
        |tau| {
            let e = expm(a, tau)?;
            Ok(e.transpose() * q * e)
        },
        0.0,
        h,
        tol,
    )?;
    let i3 = quad_matrix(
        |tau| {
            let e = expm(a, tau)?;
            Ok(e.transpose() * q * inner(tau)?)
        },
        0.0,
        h,
        tol,
    )?;
    let i4 = quad_matrix(
        |tau| {
            let s = inner(tau)?;
            Ok(s.transpose() * q * s)
        },
        0.0,
        h,
        tol,
    )?;
    Ok(ZohIntegrals {
        phi: expm(a, h)?,
        i1,
        i2,
        i3,
        i4,
    })
}

// ---------------------------------------------------------------------------
// Adaptive Gauss–Kronrod quadrature
// ---------------------------------------------------------------------------

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_SEGMENTS: usize = 4000;

struct Segment {
    a: f64,
    b: f64,
    value: Mat,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<Mat>,
{
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron = &fc * WGK[7];
    let mut gauss = &fc * WG[3];
    for j in 0..7 {
        let dx = r * XGK[j];
        let sum = f(c - dx)? + f(c + dx)?;
        kron += &sum * WGK[j];
        if j % 2 == 1 {
            gauss += &sum * WG[j / 2];
        }
    }
    kron *= r;
    gauss *= r;
    let err = (&kron - &gauss).norm();
    Ok(Segment {
        a,
        b,
        value: kron,
        err,
    })
}

/// Adaptive 7/15-point Gauss–Kronrod quadrature of a matrix-valued function.
/// The Frobenius-norm error estimate of the result is at most `tol`, or the
/// roundoff floor of the sum when that is larger.
pub fn quad_matrix<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Mat>
where
    F: FnMut(f64) -> Result<Mat>,
{
    if !(a <= b) {
        return Err(Error::Validation(format!("quadrature interval [{a}, {b}] is reversed")));
    }
    if a == b {
        let probe = f(a)?;
        return Ok(DMatrix::zeros(probe.nrows(), probe.ncols()));
    }
    let first = gk15(&mut f, a, b)?;
    let mut total = first.value.clone();
    let mut total_err = first.err;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        let floor = 50.0 * f64::EPSILON * total.norm();
        if total_err <= tol.max(floor) {
            return Ok(total);
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Accuracy(format!(
                "quadrature on [{a}, {b}] stalled at error {total_err:e} (tol {tol:e})"
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        total = total - &worst.value + &left.value + &right.value;
        total_err = total_err - worst.err + left.err + right.err;
        heap.push(left);
        heap.push(right);
        // re-sum the error periodically to shed cancellation in the running total
        if heap.len() % 64 == 0 {
            total_err = heap.iter().map(|s| s.err).sum();
        }
    }
}

// ---------------------------------------------------------------------------
// Embedded Runge–Kutta (Dormand–Prince 5(4))
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self::with_tol(1e-10)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn error_norm(err: &Vector, y0: &Vector, y1: &Vector, opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` through each time in `outputs`
/// (monotone, in either direction) and returns the state at each of them.
///
/// Steps are clipped to land exactly on output times. `post` runs on every
/// accepted state and may project it (for instance onto symmetric matrices)
/// or abort the integration.
pub fn integrate<F, P>(
    mut f: F,
    t0: f64,
    y0: Vector,
    outputs: &[f64],
    opts: &OdeOptions,
    mut post: P,
) -> Result<Vec<Vector>>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
    P: FnMut(f64, &mut Vector) -> Result<()>,
{
    let mut out = Vec::with_capacity(outputs.len());
    if outputs.is_empty() {
        return Ok(out);
    }
    let t_end = *outputs.last().expect("non-empty");
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    for w in outputs.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::Validation("ODE output times are not monotone".into()));
        }
    }
    if (outputs[0] - t0) * dir < 0.0 {
        return Err(Error::Validation("ODE output times precede the initial time".into()));
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let span = (t_end - t0).abs();

    // Hairer's starting step heuristic
    let mut h = {
        let scale = |v: &Vector| {
            let n = v.len().max(1) as f64;
            (v.iter()
                .zip(y.iter())
                .map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        };
        let d0 = scale(&y);
        let d1 = scale(&k1);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span.max(f64::MIN_POSITIVE));
        let y1 = &y + &k1 * (dir * h0);
        let k2 = f(t + dir * h0, &y1)?;
        let d2 = scale(&(&k2 - &k1)) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span.max(f64::MIN_POSITIVE))
    };

    let mut next_out = 0usize;
    while next_out < outputs.len() && outputs[next_out] == t {
        out.push(y.clone());
        next_out += 1;
    }
    let mut steps = 0usize;
    while next_out < outputs.len() {
        let target = outputs[next_out];
        let remaining = (target - t).abs();
        let proposed = h;
        let landing = h >= remaining * (1.0 - 1e-12);
        if landing {
            h = remaining;
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Accuracy(format!(
                "ODE step budget exhausted near t = {t}"
            )));
        }
        let hs = dir * h;
        let k2 = f(t + C2 * hs, &(&y + &k1 * (A21 * hs)))?;
        let k3 = f(t + C3 * hs, &(&y + (&k1 * A31 + &k2 * A32) * hs))?;
        let k4 = f(
            t + C4 * hs,
            &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs),
        )?;
        let k5 = f(
            t + C5 * hs,
            &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs),
        )?;
        let k6 = f(
            t + hs,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs),
        )?;
        let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * hs;
        let t_new = if landing { target } else { t + hs };
        let k7 = f(t_new, &y_new)?;
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
        let err = error_norm(&err_vec, &y, &y_new, opts);
        if !err.is_finite() {
            h *= 0.1;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Accuracy(format!("non-finite ODE state near t = {t}")));
            }
            continue;
        }
        if err <= 1.0 {
            t = t_new;
            y = y_new.clone();
            post(t, &mut y)?;
            k1 = if y == y_new { k7 } else { f(t, &y)? };
            while next_out < outputs.len() && outputs[next_out] == t {
                out.push(y.clone());
                next_out += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = if landing { proposed.max(h * fac) } else { h * fac };
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Accuracy(format!("ODE step size underflow near t = {t}")));
            }
        }
    }
    Ok(out)
}

pub(crate) fn mat_to_vec(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub(crate) fn vec_to_mat(v: &[f64], rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v)
}

/// State-transition matrix `Φ(t, τ)` of `x' = A(s) x`, by adaptive
/// Runge–Kutta on `Φ' = A Φ`, `Φ(τ, τ) = I`.
pub fn transition<F>(t: f64, tau: f64, a_of: F, tol: f64) -> Result<Mat>
where
    F: Fn(f64) -> Mat,
{
    let a0 = a_of(tau);
    check_square(&a0, "A(t)")?;
    let n = a0.nrows();
    if t == tau {
        return Ok(Mat::identity(n, n));
    }
    let rhs = |s: f64, y: &Vector| -> Result<Vector> {
        let phi = vec_to_mat(y.as_slice(), n, n);
        Ok(mat_to_vec(&(a_of(s) * phi)))
    };
    let y0 = mat_to_vec(&Mat::identity(n, n));
    let out = integrate(rhs, tau, y0, &[t], &OdeOptions::with_tol(tol), |_, _| Ok(()))?;
    Ok(vec_to_mat(out[0].as_slice(), n, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    #[test]
    fn expm_zero_is_identity() {
        let r = expm(&Mat::zeros(2, 2), 1.0).unwrap();
        assert_eq!(r, Mat::identity(2, 2));
    }

    #[test]
    fn expm_nilpotent() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for h in [1e-3, 0.7, 5.0, 300.0] {
            let r = expm(&a, h).unwrap();
            let expect = m(2, 2, &[1.0, h, 0.0, 1.0]);
            assert!((r - expect).norm() <= 1e-13 * (1.0 + h), "h = {h}");
        }
    }

    #[test]
    fn expm_rotation_quarter_turn() {
        let a = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let r = expm(&a, FRAC_PI_2).unwrap();
        assert!((r - m(2, 2, &[0.0, 1.0, -1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn expm_rejects_rectangular() {
        assert!(matches!(expm(&Mat::zeros(2, 3), 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn expm_large_norm_diagonal() {
        let a = m(2, 2, &[-20.0, 0.0, 0.0, 3.0]);
        let r = expm(&a, 1.0).unwrap();
        assert!((r[(0, 0)] - (-20f64).exp()).abs() < 1e-20);
        assert!((r[(1, 1)] / 3f64.exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn quad_constant_linear_exponential() {
        let c = m(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = quad_matrix(|_| Ok(c.clone()), 0.5, 2.0, 1e-12).unwrap();
        assert!((r - &c * 1.5).norm() < 1e-13);
        let r = quad_matrix(|t| Ok(m(1, 1, &[t])), 0.0, 1.0, 1e-12).unwrap();
        assert!((r[(0, 0)] - 0.5).abs() < 1e-14);
        let r = quad_matrix(|t| Ok(m(1, 1, &[t.exp()])), 0.0, 1.0, 1e-12).unwrap();
        assert!((r[(0, 0)] - (E - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn quad_adapts_to_peaked_integrand() {
        let r = quad_matrix(|t| Ok(m(1, 1, &[1.0 / (1e-4 + t * t)])), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0 / 1e-4f64.sqrt()) * (1.0 / 1e-4f64.sqrt()).atan();
        assert!((r[(0, 0)] - exact).abs() < 1e-8);
    }

    #[test]
    fn zoh_integrals_scalar_zero_dynamics() {
        let h = 0.3;
        let z = zoh_integrals(&Mat::zeros(1, 1), &Mat::identity(1, 1), h).unwrap();
        assert!((z.i1[(0, 0)] - h).abs() < 1e-15);
        assert!((z.i2[(0, 0)] - h).abs() < 1e-15);
        assert!((z.i3[(0, 0)] - h * h / 2.0).abs() < 1e-15);
        assert!((z.i4[(0, 0)] - h * h * h / 3.0).abs() < 1e-15);
        assert!((z.phi[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zoh_integrals_vanish_with_zero_weight() {
        let a = m(2, 2, &[0.1, 1.0, -2.0, 0.3]);
        let z = zoh_integrals(&a, &Mat::zeros(2, 2), 0.4).unwrap();
        assert_eq!(z.i2.norm() + z.i3.norm() + z.i4.norm(), 0.0);
    }

    #[test]
    fn zoh_integrals_small_step_limits() {
        let a = m(2, 2, &[0.0, 1.0, -2.0, -0.5]);
        let q = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-4, 1e-6] {
            let z = zoh_integrals(&a, &q, h).unwrap();
            let dev = (&z.i1 / h - Mat::identity(2, 2)).norm()
                + (&z.i2 / h - &q).norm()
                + (&z.i3 / h).norm()
                + (&z.i4 / h).norm();
            assert!(dev < prev);
            prev = dev;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn zoh_integrals_rejects_nonpositive_step() {
        assert!(zoh_integrals(&Mat::zeros(1, 1), &Mat::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn transition_zero_and_constant() {
        let phi = transition(2.0, -1.0, |_| Mat::zeros(2, 2), 1e-10).unwrap();
        assert!((phi - Mat::identity(2, 2)).norm() < 1e-14);
        let a = m(2, 2, &[0.0, 1.0, -1.0, -0.2]);
        let phi = transition(1.3, 0.2, |_| a.clone(), 1e-12).unwrap();
        let expect = expm(&a, 1.1).unwrap();
        assert!((phi - expect).norm() < 1e-10);
    }

    #[test]
    fn transition_scalar_time_varying() {
        let phi = transition(1.0, 0.0, |t| m(1, 1, &[t]), 1e-12).unwrap();
        assert!((phi[(0, 0)] - 0.5f64.exp()).abs() < 1e-10);
        assert!((phi[(0, 0)] - 1.64872).abs() < 1e-5);
        // backward in time
        let back = transition(0.0, 1.0, |t| m(1, 1, &[t]), 1e-12).unwrap();
        assert!((back[(0, 0)] * phi[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn integrate_hits_every_output() {
        let outs = [0.25, 0.5, 0.5, 1.0];
        let ys = integrate(
            |_, y| Ok(-y.clone()),
            0.0,
            Vector::from_element(1, 1.0),
            &outs,
            &OdeOptions::with_tol(1e-12),
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(ys.len(), 4);
        for (t, y) in outs.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-11);
        }
    }
}
