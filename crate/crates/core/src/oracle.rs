//! Brute-force verification: the sampled finite-horizon problem as a dense
//! quadratic program in the controls, plus a mesh-refinement estimate of
//! the permanent cost. Nothing here goes through the map's kernel.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{mat_vec_blocks, quad_form, spd_factor, symmetrize, Mat, Vector};
use crate::lqdef::{make_partition, Coefficients, Horizon, LqProblem, PartitionSpec, TimePartition};
use crate::matfun::{integrate, mat_to_vec, van_loan, vec_to_mat, OdeOptions};
use crate::tolerances::Tolerances;

/// Per-interval dynamics `x_{i+1} = Φ_i x_i + Γ_i u_i` and exact cost
/// kernels `<Qxx x, x> + 2 <Qxu u, x> + <Quu u, u>`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteLqData {
    pub phi: Vec<Mat>,
    pub gamma: Vec<Mat>,
    pub qxx: Vec<Mat>,
    pub qxu: Vec<Mat>,
    pub quu: Vec<Mat>,
    pub p: Mat,
}

impl DiscreteLqData {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn interval_cost(&self, i: usize, x: &Vector, u: &Vector) -> f64 {
        quad_form(&self.qxx[i], x) + 2.0 * x.dot(&(&self.qxu[i] * u)) + quad_form(&self.quu[i], u)
    }

    /// Cost of a control sequence from `x0`, by forward propagation.
    pub fn cost_of(&self, x0: &Vector, controls: &[Vector]) -> f64 {
        let mut x = x0.clone();
        let mut c = 0.0;
        for (i, u) in controls.iter().enumerate() {
            c += self.interval_cost(i, &x, u);
            x = &self.phi[i] * &x + &self.gamma[i] * u;
        }
        c + quad_form(&self.p, &x)
    }
}

struct Block {
    phi: Mat,
    gamma: Mat,
    qxx: Mat,
    qxu: Mat,
    quu: Mat,
}

/// `e^{h [[A, B], [0, 0]]}` and its gram against `diag(Q, R)`.
fn autonomous_block(a: &Mat, b: &Mat, q: &Mat, r: &Mat, h: f64) -> Result<Block> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut gen = Mat::zeros(n + m, n + m);
    gen.view_mut((0, 0), (n, n)).copy_from(a);
    gen.view_mut((0, n), (n, m)).copy_from(b);
    let mut w = Mat::zeros(n + m, n + m);
    w.view_mut((0, 0), (n, n)).copy_from(q);
    w.view_mut((n, n), (m, m)).copy_from(r);
    let (e, gram) = van_loan(&gen, &w, h)?;
    Ok(Block {
        phi: e.view((0, 0), (n, n)).into_owned(),
        gamma: e.view((0, n), (n, m)).into_owned(),
        qxx: symmetrize(&gram.view((0, 0), (n, n)).into_owned()),
        qxu: gram.view((0, n), (n, m)).into_owned(),
        quu: symmetrize(&gram.view((n, n), (m, m)).into_owned()),
    })
}

/// Integrates `Φ' = AΦ`, `S' = AS + B` in physical time together with the
/// three cost kernels.
fn time_varying_block(problem: &LqProblem, t0: f64, t1: f64, tol: &Tolerances) -> Result<Block> {
    let (n, m) = (problem.n(), problem.m());
    let sizes = [n * n, n * m, n * n, n * m, m * m];
    let offs: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let total: usize = sizes.iter().sum();
    let rhs = |t: f64, y: &Vector| -> Result<Vector> {
        let phi = vec_to_mat(&y.as_slice()[offs[0]..offs[1]], n, n);
        let s = vec_to_mat(&y.as_slice()[offs[1]..offs[2]], n, m);
        let (a, b, q, r) = (problem.a(t), problem.b(t), problem.q(t), problem.r(t));
        let qphi = &q * &phi;
        let qs = &q * &s;
        let parts = [
            &a * &phi,
            &a * &s + b,
            phi.transpose() * &qphi,
            phi.transpose() * &qs,
            s.transpose() * &qs + r,
        ];
        let mut dy = Vector::zeros(total);
        for (k, p) in parts.iter().enumerate() {
            dy.rows_mut(offs[k], sizes[k]).copy_from(&mat_to_vec(p));
        }
        Ok(dy)
    };
    let mut y0 = Vector::zeros(total);
    y0.rows_mut(0, n * n).copy_from(&mat_to_vec(&Mat::identity(n, n)));
    let opts = OdeOptions::with_tol(tol.quad.max(1e-13));
    let y = integrate(rhs, t0, y0, &[t1], &opts, |_, _| Ok(()))?
        .pop()
        .expect("one output");
    let get = |k: usize, r: usize, c: usize| vec_to_mat(&y.as_slice()[offs[k]..offs[k] + sizes[k]], r, c);
    Ok(Block {
        phi: get(0, n, n),
        gamma: get(1, n, m),
        qxx: symmetrize(&get(2, n, n)),
        qxu: get(3, n, m),
        quu: symmetrize(&get(4, m, m)),
    })
}

pub fn build_discrete(problem: &LqProblem, partition: &TimePartition, tol: &Tolerances) -> Result<DiscreteLqData> {
    let t_final = problem.final_time()?;
    if (partition.final_time() - t_final).abs() > 4.0 * f64::EPSILON * t_final {
        return Err(Error::Partition(format!(
            "partition ends at {} but the horizon is {t_final}",
            partition.final_time()
        )));
    }
    let times = partition.times();
    let mut data = DiscreteLqData {
        phi: Vec::new(),
        gamma: Vec::new(),
        qxx: Vec::new(),
        qxu: Vec::new(),
        quu: Vec::new(),
        p: problem.terminal().clone(),
    };
    let mut cache: HashMap<u64, usize> = HashMap::new();
    for i in 0..partition.len() {
        let block = match problem.coefficients() {
            Coefficients::Autonomous { a, b, q, r } => {
                let h = partition.uniform_step().unwrap_or(times[i + 1] - times[i]);
                if let Some(&j) = cache.get(&h.to_bits()) {
                    Block {
                        phi: data.phi[j].clone(),
                        gamma: data.gamma[j].clone(),
                        qxx: data.qxx[j].clone(),
                        qxu: data.qxu[j].clone(),
                        quu: data.quu[j].clone(),
                    }
                } else {
                    cache.insert(h.to_bits(), i);
                    autonomous_block(a, b, q, r, h)?
                }
            }
            Coefficients::TimeVarying { .. } => time_varying_block(problem, times[i], times[i + 1], tol)?,
        };
        data.phi.push(block.phi);
        data.gamma.push(block.gamma);
        data.qxx.push(block.qxx);
        data.qxu.push(block.qxu);
        data.quu.push(block.quu);
    }
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    pub controls: Vec<Vector>,
    /// Cost of the minimizer by forward propagation.
    pub cost: f64,
    /// `c - g^T H^{-1} g` from the normal equations.
    pub normal_equation_cost: f64,
    /// `|H u + g|`.
    pub kkt_residual: f64,
    pub rhs_norm: f64,
}

/// Exact minimizer of the condensed quadratic program in the stacked
/// controls (states eliminated through the dynamics).
pub fn qp_minimal_cost(data: &DiscreteLqData, x0: &Vector) -> Result<QpSolution> {
    let count = data.len();
    if count == 0 {
        return Err(Error::Partition("no intervals".into()));
    }
    let n = data.p.nrows();
    let m = data.gamma[0].ncols();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 must have length {n}")));
    }
    let dim = count * m;
    // x_k = F x0 + G u; walk forward keeping F and G
    let mut f = Mat::identity(n, n);
    let mut g = Mat::zeros(n, dim);
    let mut hess = Mat::zeros(dim, dim);
    let mut lin = Vector::zeros(dim);
    let mut c = 0.0;
    for k in 0..count {
        let fx = &f * x0;
        let cols = k * m;
        // state part
        let gq = g.transpose() * &data.qxx[k];
        hess += &gq * &g;
        lin += &gq * &fx;
        c += quad_form(&data.qxx[k], &fx);
        // cross part 2 <Qxu u_k, x_k>
        let cross = g.transpose() * &data.qxu[k];
        let mut hk = hess.columns_mut(cols, m);
        hk += &cross;
        let mut hk = hess.rows_mut(cols, m);
        hk += cross.transpose();
        let mut lk = lin.rows_mut(cols, m);
        lk += data.qxu[k].transpose() * &fx;
        // control part
        let mut hkk = hess.view_mut((cols, cols), (m, m));
        hkk += &data.quu[k];
        // advance
        f = &data.phi[k] * &f;
        g = &data.phi[k] * &g;
        let mut gk = g.columns_mut(cols, m);
        gk += &data.gamma[k];
    }
    let fx = &f * x0;
    let gp = g.transpose() * &data.p;
    hess += &gp * &g;
    lin += &gp * &fx;
    c += quad_form(&data.p, &fx);
    let hess = symmetrize(&hess);
    let chol = spd_factor(&hess, "QP Hessian")
        .map_err(|_| Error::Contract("QP Hessian is not positive definite".into()))?;
    let u = -chol.solve(&lin);
    let kkt_residual = (&hess * &u + &lin).norm();
    let controls: Vec<Vector> = mat_vec_blocks(&u, m);
    let cost = data.cost_of(x0, &controls);
    Ok(QpSolution {
        normal_equation_cost: c + lin.dot(&u),
        cost,
        kkt_residual,
        rhs_norm: lin.norm(),
        controls,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PermanentCostEstimate {
    pub meshes: Vec<f64>,
    pub costs: Vec<f64>,
    pub limit: f64,
    pub error_estimate: f64,
    /// Set when a finer mesh produced a larger cost beyond tolerance.
    pub non_monotone: bool,
}

/// Richardson limit of sampled minimal costs as the mesh shrinks,
/// assuming second-order convergence.
pub fn permanent_cost_oracle(
    problem: &LqProblem,
    x0: &Vector,
    meshes: &[TimePartition],
    tol: &Tolerances,
) -> Result<PermanentCostEstimate> {
    if meshes.is_empty() {
        return Err(Error::Partition("need at least one mesh".into()));
    }
    let mut costs = Vec::with_capacity(meshes.len());
    for part in meshes {
        let data = build_discrete(problem, part, tol)?;
        costs.push(qp_minimal_cost(&data, x0)?.cost);
    }
    let sizes: Vec<f64> = meshes.iter().map(TimePartition::mesh).collect();
    let last = costs.len() - 1;
    let (limit, error_estimate) = if last == 0 {
        (costs[0], f64::NAN)
    } else {
        let r = sizes[last - 1] / sizes[last];
        let corr = (costs[last] - costs[last - 1]) / (r * r - 1.0);
        (costs[last] + corr, corr.abs())
    };
    let non_monotone = costs
        .windows(2)
        .any(|w| w[1] > w[0] + 1e-10 * (1.0 + w[0].abs()));
    Ok(PermanentCostEstimate {
        meshes: sizes,
        costs,
        limit,
        error_estimate,
        non_monotone,
    })
}

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

fn uniform_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn gram_plus(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    let f = uniform_mat(rng, n, n);
    symmetrize(&(f.transpose() * f + Mat::identity(n, n) * shift))
}

/// Autonomous instance with `A, B` uniform in `[-1, 1]`, `Q = F^T F + 1e-3 I`
/// and `R = F^T F + I`.
pub fn random_autonomous(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<LqProblem> {
    let a = uniform_mat(rng, n, n);
    let b = uniform_mat(rng, n, m);
    let q = gram_plus(rng, n, 1e-3);
    let r = gram_plus(rng, m, 1.0);
    LqProblem::autonomous(a, b, q, r)
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub seed: u64,
    pub problem: LqProblem,
    pub partition: TimePartition,
    pub x0: Vector,
}

/// Finite-horizon instance with `n <= max_n`, `m <= max_m`, a random PSD
/// terminal weight and a random non-uniform partition of at most
/// `max_intervals` cells.
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, max_intervals: usize) -> Result<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n.max(1));
    let m = rng.random_range(1..=max_m.max(1));
    let t_final: f64 = rng.random_range(0.5..3.0);
    let p = {
        let f = uniform_mat(&mut rng, n, n);
        symmetrize(&(f.transpose() * f))
    };
    let problem = random_autonomous(&mut rng, n, m)?
        .with_horizon(Horizon::Finite(t_final))?
        .with_terminal(p)?;
    let count = rng.random_range(1..=max_intervals.max(1));
    let partition = random_partition(&mut rng, t_final, count)?;
    let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    Ok(RandomInstance {
        seed,
        problem,
        partition,
        x0,
    })
}

/// Partition of `[0, t_final]` into `count` cells with random lengths whose
/// ratios stay within a factor of four.
pub fn random_partition(rng: &mut ChaCha8Rng, t_final: f64, count: usize) -> Result<TimePartition> {
    let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.25..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut times = Vec::with_capacity(count + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for w in &weights[..count - 1] {
        acc += w;
        times.push(t_final * acc / total);
    }
    times.push(t_final);
    make_partition(t_final, &PartitionSpec::Explicit(times))
}
