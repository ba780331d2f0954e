//! Convergence harness for the four limits linking the finite/infinite and
//! permanent/sampled Riccati matrices, with empirical orders.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::closedloop::{threshold_gain, simulate_sampled, SampledFeedback};
use crate::linalg::{opnorm, quad_form, Mat, Vector};
use crate::lqdef::{Horizon, LqProblem, TimePartition};
use crate::oracle::random_partition;
use crate::riccati::{
    solve_pare, solve_pdre_at, solve_sdare, solve_sddre, stability_constants, unit_probes, AreSolution,
    StabilityConstants,
};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrow {
    Left,
    Bottom,
    Top,
    Right,
}

impl Arrow {
    pub fn name(self) -> &'static str {
        match self {
            Arrow::Left => "left",
            Arrow::Bottom => "bottom",
            Arrow::Top => "top",
            Arrow::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub arrow: Arrow,
    /// `mesh`, `T`, `N` or `h`.
    pub parameter: &'static str,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Slope of `log error` against `log parameter` (mesh arrows).
    pub estimated_order: Option<f64>,
    /// Slope of `-log error` against the parameter (horizon arrows).
    pub decay_rate: Option<f64>,
    pub threshold: f64,
    pub monotone: bool,
    pub pass: bool,
    /// Arrow-specific diagnostics, e.g. the order of probe quadratic forms.
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.parameter, "error"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (v, e) in self.values.iter().zip(&self.errors) {
            w.write_record([format!("{v:.17e}"), format!("{e:.17e}")])
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Least-squares slope of `ys` against `xs` over the last half of the
/// points (at least two), skipping non-finite entries.
fn tail_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x, y))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let take = (pts.len() / 2).max(2);
    let pts = &pts[pts.len() - take..];
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Order of `error ~ C param^p` from the finest half of the points.
/// The parameters must be listed from coarse to fine.
pub fn estimate_order(params: &[f64], errors: &[f64]) -> Option<f64> {
    let lx: Vec<f64> = params.iter().map(|p| p.ln()).collect();
    let ly: Vec<f64> = errors
        .iter()
        .map(|&e| if e > 0.0 { e.ln() } else { f64::NAN })
        .collect();
    tail_slope(&lx, &ly)
}

/// Rate `r` of `error ~ C e^{-r param}` from the last half of the points.
pub fn estimate_rate(params: &[f64], errors: &[f64]) -> Option<f64> {
    let ly: Vec<f64> = errors
        .iter()
        .map(|&e| if e > 0.0 { e.ln() } else { f64::NAN })
        .collect();
    tail_slope(params, &ly).map(|s| -s)
}

/// Nonincreasing, except that the two finest points may wobble once they
/// are below `floor`.
fn is_monotone(errors: &[f64], floor: f64) -> bool {
    let len = errors.len();
    errors
        .windows(2)
        .enumerate()
        .all(|(k, w)| w[1] <= w[0] || (k + 1 >= len.saturating_sub(2) && w[1] <= floor))
}

fn infinite_tol(einf: &Mat) -> f64 {
    1e-6 * (1.0 + opnorm(einf))
}

fn require_zero_terminal(problem: &LqProblem, arrow: &str) -> Result<()> {
    if problem.terminal().iter().any(|&v| v != 0.0) {
        return Err(Error::Validation(format!(
            "the {arrow} arrow needs a zero terminal weight P"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Arrows
// ---------------------------------------------------------------------------

/// Sampled finite-horizon matrices against the permanent flow, as meshes
/// are refined. Meshes must be listed from coarse to fine.
pub fn arrow_left(problem: &LqProblem, meshes: &[TimePartition], tol: &Tolerances) -> Result<ConvergenceReport> {
    problem.final_time()?;
    let mut nodes: Vec<f64> = meshes.iter().flat_map(|m| m.times().iter().copied()).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let ref_tol = tol.with_ode(tol.ode.min(1e-12));
    let flow = solve_pdre_at(problem, &nodes, &ref_tol)?;
    let reference = |t: f64| -> &Mat {
        let k = flow.times.partition_point(|&s| s < t);
        &flow.values[k]
    };
    let errors = meshes
        .par_iter()
        .map(|part| -> Result<f64> {
            let seq = solve_sddre(problem, part, tol)?;
            Ok(part
                .times()
                .iter()
                .zip(&seq.values)
                .map(|(&t, e)| opnorm(&(reference(t) - e)))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = meshes.iter().map(TimePartition::mesh).collect();
    let estimated_order = estimate_order(&values, &errors);
    let all_zero = errors.iter().all(|&e| e == 0.0);
    let monotone = is_monotone(&errors, 1e-9);
    let threshold = 0.9;
    Ok(ConvergenceReport {
        arrow: Arrow::Left,
        parameter: "mesh",
        pass: all_zero || (monotone && estimated_order.is_some_and(|p| p >= threshold)),
        values,
        errors,
        estimated_order,
        decay_rate: None,
        threshold,
        monotone,
        notes: Vec::new(),
    })
}

/// Uniform meshes of the given steps on `[0, T]`.
pub fn uniform_meshes(t_final: f64, steps: &[f64]) -> Result<Vec<TimePartition>> {
    steps
        .iter()
        .map(|&h| crate::lqdef::make_partition(t_final, &crate::lqdef::PartitionSpec::Uniform(h)))
        .collect()
}

/// A random base partition and its dyadic refinements.
pub fn random_meshes(t_final: f64, base_cells: usize, levels: usize, seed: u64) -> Result<Vec<TimePartition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_partition(&mut rng, t_final, base_cells.max(1))?;
    Ok((0..levels).map(|k| base.refine(1 << k)).collect())
}

/// Finite-horizon permanent matrices `E^T(0)` against `E∞` as `T` grows.
pub fn arrow_bottom(problem: &LqProblem, horizons: &[f64], tol: &Tolerances) -> Result<ConvergenceReport> {
    require_zero_terminal(problem, "bottom")?;
    let einf = solve_pare(problem, tol)?;
    arrow_bottom_with(problem, horizons, &einf, tol)
}

fn arrow_bottom_with(
    problem: &LqProblem,
    horizons: &[f64],
    einf: &AreSolution,
    tol: &Tolerances,
) -> Result<ConvergenceReport> {
    require_zero_terminal(problem, "bottom")?;
    let finite = horizons
        .par_iter()
        .map(|&t| -> Result<Mat> {
            let p = problem.clone().with_horizon(Horizon::Finite(t))?;
            Ok(solve_pdre_at(&p, &[0.0], tol)?.values[0].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = finite.iter().map(|e| opnorm(&(e - &einf.e))).collect();
    // truncated problems cost less than the infinite one
    let probes = unit_probes(problem.n(), 20, crate::riccati::PROBE_SEED);
    let below = finite.iter().all(|e| {
        probes
            .iter()
            .all(|x| quad_form(e, x) <= quad_form(&einf.e, x) + tol.mono * (1.0 + opnorm(&einf.e)))
    });
    let threshold = infinite_tol(&einf.e);
    let monotone = is_monotone(&errors, threshold);
    let last_ok = errors.last().is_some_and(|&e| e <= threshold);
    Ok(ConvergenceReport {
        arrow: Arrow::Bottom,
        parameter: "T",
        decay_rate: estimate_rate(horizons, &errors),
        estimated_order: None,
        values: horizons.to_vec(),
        pass: monotone && last_ok,
        errors,
        threshold,
        monotone,
        notes: vec![format!("E^T(0) <= E_inf on probes: {below}")],
    })
}

/// Sampled matrices `E_0` on `N` uniform steps of length `h` against the
/// sampled algebraic root as `N` grows.
pub fn arrow_top(problem: &LqProblem, h: f64, counts: &[usize], tol: &Tolerances) -> Result<ConvergenceReport> {
    require_zero_terminal(problem, "top")?;
    let einf = solve_pare(problem, tol)?;
    let sc = stability_constants(problem, &einf, tol)?;
    if h > sc.hbar && !problem.assume_optimizable {
        return Err(Error::Validation(format!(
            "h = {h} exceeds the sampling threshold hbar = {}; assert optimizability to proceed",
            sc.hbar
        )));
    }
    let root = solve_sdare(problem, h, tol)?;
    arrow_top_with(problem, h, counts, &root, tol)
}

fn arrow_top_with(
    problem: &LqProblem,
    h: f64,
    counts: &[usize],
    root: &AreSolution,
    tol: &Tolerances,
) -> Result<ConvergenceReport> {
    let finite = counts
        .par_iter()
        .map(|&count| -> Result<Mat> {
            let part = TimePartition::uniform_steps(h, count)?;
            let p = problem.clone().with_horizon(Horizon::Finite(part.final_time()))?;
            Ok(solve_sddre(&p, &part, tol)?.values[0].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = finite.iter().map(|e| opnorm(&(e - &root.e))).collect();
    let probes = unit_probes(problem.n(), 20, crate::riccati::PROBE_SEED);
    let increasing = finite.windows(2).all(|w| {
        probes
            .iter()
            .all(|x| quad_form(&w[1], x) >= quad_form(&w[0], x) - 1e-9)
    });
    let threshold = infinite_tol(&root.e);
    let monotone = is_monotone(&errors, threshold);
    let last_ok = errors.last().is_some_and(|&e| e <= threshold);
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(ConvergenceReport {
        arrow: Arrow::Top,
        parameter: "N",
        decay_rate: estimate_rate(&values, &errors),
        estimated_order: None,
        values,
        pass: monotone && last_ok && increasing,
        errors,
        threshold,
        monotone,
        notes: vec![format!("probe forms nondecreasing in N: {increasing}")],
    })
}

/// Sampled algebraic roots against `E∞` as `h` decreases. Every `h` must
/// lie below the computed threshold.
pub fn arrow_right(problem: &LqProblem, steps: &[f64], tol: &Tolerances) -> Result<ConvergenceReport> {
    let einf = solve_pare(problem, tol)?;
    let sc = stability_constants(problem, &einf, tol)?;
    arrow_right_with(problem, steps, &einf, &sc, tol).map(|(r, _)| r)
}

fn arrow_right_with(
    problem: &LqProblem,
    steps: &[f64],
    einf: &AreSolution,
    sc: &StabilityConstants,
    tol: &Tolerances,
) -> Result<(ConvergenceReport, Vec<Mat>)> {
    if let Some(&h) = steps.iter().find(|&&h| h > sc.hbar) {
        return Err(Error::Validation(format!(
            "h = {h} exceeds the sampling threshold hbar = {}",
            sc.hbar
        )));
    }
    let roots = steps
        .par_iter()
        .map(|&h| solve_sdare(problem, h, tol).map(|s| s.e))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = roots.iter().map(|e| opnorm(&(e - &einf.e))).collect();
    let threshold = infinite_tol(&einf.e);
    let monotone = is_monotone(&errors, threshold);
    let last_ok = errors.last().is_some_and(|&e| e <= threshold);
    Ok((
        ConvergenceReport {
            arrow: Arrow::Right,
            parameter: "h",
            estimated_order: estimate_order(steps, &errors),
            decay_rate: None,
            values: steps.to_vec(),
            pass: monotone && last_ok,
            errors,
            threshold,
            monotone,
            notes: vec![format!("hbar = {}", sc.hbar)],
        },
        roots,
    ))
}

// ---------------------------------------------------------------------------
// Full diagram
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DiagramConfig {
    /// Horizon of the left arrow.
    pub left_horizon: f64,
    pub left_steps: Vec<f64>,
    pub bottom_horizons: Vec<f64>,
    /// Step of the top arrow; clipped to the threshold.
    pub top_step: f64,
    pub top_counts: Vec<usize>,
    /// Steps of the right arrow as fractions of the threshold.
    pub right_fractions: Vec<f64>,
    pub diagram_tol: f64,
    pub seed: u64,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        Self {
            left_horizon: 1.0,
            left_steps: vec![0.1, 0.05, 0.025, 0.0125],
            bottom_horizons: vec![5.0, 10.0, 20.0, 40.0],
            top_step: 0.1,
            top_counts: vec![25, 50, 100, 200, 400],
            right_fractions: vec![0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625],
            diagram_tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CornerCheck {
    pub e_inf: Mat,
    /// `h -> 0` at fixed large `T`, then compared with `E∞`.
    pub mesh_then_horizon: Mat,
    /// `N -> ∞` at fixed `h`, then `h -> 0`.
    pub horizon_then_mesh: Mat,
    pub discrepancy: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramBundle {
    pub arrows: Vec<ConvergenceReport>,
    pub corner: CornerCheck,
    pub hbar: f64,
    pub cbar: f64,
    pub pass: bool,
    pub failing: Vec<String>,
    pub config: DiagramConfig,
    pub tolerances: Tolerances,
}

/// Second-order Richardson extrapolation from steps `h1 > h2`.
fn richardson(coarse: &Mat, fine: &Mat, h1: f64, h2: f64) -> Mat {
    let r2 = (h1 / h2).powi(2);
    fine + (fine - coarse) / (r2 - 1.0)
}

pub fn full_diagram(problem: &LqProblem, config: &DiagramConfig, tol: &Tolerances) -> Result<DiagramBundle> {
    if !problem.is_autonomous() {
        return Err(Error::Validation("the full diagram needs constant coefficients".into()));
    }
    require_zero_terminal(problem, "full diagram")?;
    let einf = solve_pare(problem, tol)?;
    let sc = stability_constants(problem, &einf, tol)?;
    let top_h = if problem.assume_optimizable {
        config.top_step
    } else {
        config.top_step.min(sc.hbar)
    };
    let right_steps: Vec<f64> = config.right_fractions.iter().map(|f| f * sc.hbar).collect();
    let left_problem = problem.clone().with_horizon(Horizon::Finite(config.left_horizon))?;
    let meshes = uniform_meshes(config.left_horizon, &config.left_steps)?;

    let ((left, bottom), (top, right)) = rayon::join(
        || {
            rayon::join(
                || arrow_left(&left_problem, &meshes, tol),
                || arrow_bottom_with(problem, &config.bottom_horizons, &einf, tol),
            )
        },
        || {
            rayon::join(
                || {
                    solve_sdare(problem, top_h, tol)
                        .and_then(|root| arrow_top_with(problem, top_h, &config.top_counts, &root, tol))
                },
                || arrow_right_with(problem, &right_steps, &einf, &sc, tol),
            )
        },
    );
    let (left, bottom, top) = (left?, bottom?, top?);
    let (right, roots) = right?;

    // corner: N -> ∞ is exact in the sampled roots; extrapolate h -> 0
    let k = roots.len();
    let horizon_then_mesh = if k >= 2 {
        richardson(&roots[k - 2], &roots[k - 1], right_steps[k - 2], right_steps[k - 1])
    } else {
        roots[0].clone()
    };
    // corner: h -> 0 at the longest bottom horizon, by extrapolation
    let t_long = config.bottom_horizons.iter().copied().fold(config.left_horizon, f64::max);
    let long = problem.clone().with_horizon(Horizon::Finite(t_long))?;
    let h1 = *config.left_steps.last().unwrap_or(&0.0125);
    let pair = [h1, h1 / 2.0]
        .par_iter()
        .map(|&h| {
            let cells = (t_long / h).round() as usize;
            let part = crate::lqdef::make_partition(t_long, &crate::lqdef::PartitionSpec::Uniform(t_long / cells as f64))?;
            Ok((t_long / cells as f64, solve_sddre(&long, &part, tol)?.values[0].clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mesh_then_horizon = richardson(&pair[0].1, &pair[1].1, pair[0].0, pair[1].0);
    let d1 = opnorm(&(&mesh_then_horizon - &einf.e));
    let d2 = opnorm(&(&horizon_then_mesh - &einf.e));
    let discrepancy = opnorm(&(&mesh_then_horizon - &horizon_then_mesh)).max(d1).max(d2);
    let corner = CornerCheck {
        e_inf: einf.e.clone(),
        mesh_then_horizon,
        horizon_then_mesh,
        discrepancy,
        pass: discrepancy <= config.diagram_tol,
    };
    let arrows = vec![left, bottom, top, right];
    let mut failing: Vec<String> = arrows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.arrow.name().to_string())
        .collect();
    if !corner.pass {
        failing.push("corner".into());
    }
    Ok(DiagramBundle {
        pass: failing.is_empty(),
        arrows,
        corner,
        hbar: sc.hbar,
        cbar: sc.cbar,
        failing,
        config: config.clone(),
        tolerances: *tol,
    })
}

// ---------------------------------------------------------------------------
// Sampling threshold end to end
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdRow {
    pub h: f64,
    pub x0: Vec<f64>,
    /// Simulated cost of the ZOH loop with gain `R^{-1} B^T E∞`, tail included.
    pub cost: f64,
    /// `cbar <E∞ x0, x0>`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdCheck {
    pub hbar: f64,
    pub cbar: f64,
    pub rows: Vec<ThresholdRow>,
    pub pass: bool,
}

/// Simulates the ZOH controller built from `E∞` for each step and initial
/// state and compares its cost with `cbar <E∞ x0, x0>`.
pub fn threshold_check(problem: &LqProblem, steps: &[f64], x0s: &[Vector], tol: &Tolerances) -> Result<ThresholdCheck> {
    let einf = solve_pare(problem, tol)?;
    let sc = stability_constants(problem, &einf, tol)?;
    let gain = threshold_gain(problem, &einf)?;
    let jobs: Vec<(f64, &Vector)> = steps
        .iter()
        .flat_map(|&h| x0s.iter().map(move |x| (h, x)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(h, x0)| -> Result<ThresholdRow> {
            let tr = simulate_sampled(problem, SampledFeedback::Fixed { gain: &gain, h }, x0, None, tol)?;
            let cost = tr.cost_with_tail();
            let bound = sc.cbar * quad_form(&einf.e, x0);
            Ok(ThresholdRow {
                h,
                x0: x0.iter().copied().collect(),
                cost,
                bound,
                pass: tr.tail_estimate.is_some() && cost <= bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdCheck {
        hbar: sc.hbar,
        cbar: sc.cbar,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> LqProblem {
        let m = |v| Mat::from_element(1, 1, v);
        LqProblem::autonomous(m(0.0), m(1.0), m(1.0), m(1.0)).unwrap()
    }

    #[test]
    fn order_of_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let es: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        assert!((estimate_order(&hs, &es).unwrap() - 2.0).abs() < 1e-12);
        assert!(estimate_order(&hs, &[0.0; 4]).is_none());
        let ts = [2.0, 4.0, 6.0];
        let es: Vec<f64> = ts.iter().map(|t: &f64| (-2.0 * t).exp()).collect();
        assert!((estimate_rate(&ts, &es).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_allows_floor_wobble() {
        assert!(is_monotone(&[1.0, 0.5, 0.25], 0.0));
        assert!(is_monotone(&[1.0, 0.5, 1e-12, 2e-12], 1e-10));
        assert!(!is_monotone(&[1.0, 2.0, 0.1, 0.05], 1e-10));
    }

    #[test]
    fn left_arrow_is_second_order_on_scalar() {
        let tol = Tolerances::default();
        let p = scalar().with_horizon(Horizon::Finite(1.0)).unwrap();
        let meshes = uniform_meshes(1.0, &[0.1, 0.05, 0.025]).unwrap();
        let r = arrow_left(&p, &meshes, &tol).unwrap();
        assert!(r.pass);
        assert!(r.estimated_order.unwrap() > 1.8);
    }

    #[test]
    fn left_arrow_without_weights_is_exact() {
        let tol = Tolerances::default();
        let m = |v| Mat::from_element(1, 1, v);
        let p = LqProblem::autonomous(m(0.3), m(1.0), m(0.0), m(1.0))
            .unwrap()
            .with_horizon(Horizon::Finite(1.0))
            .unwrap();
        let meshes = uniform_meshes(1.0, &[0.1, 0.05]).unwrap();
        let r = arrow_left(&p, &meshes, &tol).unwrap();
        assert!(r.errors.iter().all(|&e| e == 0.0));
        assert!(r.pass);
    }

    #[test]
    fn bottom_arrow_tanh_tail() {
        let tol = Tolerances::default();
        let r = arrow_bottom(&scalar(), &[2.0, 4.0, 6.0, 8.0], &tol).unwrap();
        for (t, e) in r.values.iter().zip(&r.errors) {
            assert!((e - (1.0 - t.tanh())).abs() < 1e-8);
        }
        assert!(r.monotone);
        assert!((r.decay_rate.unwrap() - 2.0).abs() < 0.01);
    }

    #[test]
    fn bottom_arrow_rejects_terminal_weight() {
        let tol = Tolerances::default();
        let p = scalar()
            .with_horizon(Horizon::Finite(1.0))
            .unwrap()
            .with_terminal(Mat::from_element(1, 1, 1.0))
            .unwrap();
        assert!(matches!(arrow_bottom(&p, &[1.0], &tol), Err(Error::Validation(_))));
    }

    #[test]
    fn right_arrow_rejects_large_step() {
        let tol = Tolerances::default();
        match arrow_right(&scalar(), &[0.3], &tol) {
            Err(Error::Validation(msg)) => assert!(msg.contains("hbar")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn right_arrow_lyapunov_limit() {
        let tol = Tolerances::default();
        let m = |v| Mat::from_element(1, 1, v);
        let p = LqProblem::autonomous(m(-1.0), m(0.0), m(1.0), m(1.0)).unwrap();
        let r = arrow_right(&p, &[0.1, 0.05, 0.025], &tol).unwrap();
        assert!(r.monotone);
        assert!(r.errors[2] < 1e-4);
    }

    #[test]
    fn top_arrow_scalar() {
        let tol = Tolerances::default();
        let r = arrow_top(&scalar(), 0.1, &[1, 10, 100, 400], &tol).unwrap();
        assert!(r.pass, "{r:?}");
        let h: f64 = 0.1;
        let root = (1.0 + h * h / 12.0).sqrt();
        let first = h * (1.0 + h * h / 12.0) / (1.0 + h * h / 3.0);
        assert!((r.errors[0] - (root - first)).abs() < 1e-12);
    }

    #[test]
    fn scalar_diagram_commutes() {
        let tol = Tolerances::default();
        let b = full_diagram(&scalar(), &DiagramConfig::default(), &tol).unwrap();
        assert!(b.pass, "{:?}", b.failing);
        assert!(b.corner.discrepancy < 1e-5);
    }

    #[test]
    fn scalar_threshold_check() {
        let tol = Tolerances::default();
        let x0s = vec![Vector::from_element(1, 1.0), Vector::from_element(1, -3.0)];
        let c = threshold_check(&scalar(), &[0.2, 0.1], &x0s, &tol).unwrap();
        assert!(c.pass);
    }

    #[test]
    fn double_integrator_diagram_commutes() {
        let tol = Tolerances::default();
        let p = LqProblem::autonomous(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
        )
        .unwrap();
        let b = full_diagram(&p, &DiagramConfig::default(), &tol).unwrap();
        assert!(b.pass, "{:?}", b.failing);
    }
}
