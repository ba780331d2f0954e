//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riccati_core::closedloop::{
    decay_check, threshold_gain, simulate_permanent, simulate_sampled, simulation_horizon, PermanentFeedback,
    SampledFeedback,
};
use riccati_core::diagram::{
    arrow_bottom, arrow_left, arrow_right, arrow_top, full_diagram, threshold_check, random_meshes, uniform_meshes,
    DiagramConfig,
};
use riccati_core::linalg::{min_eigenvalue, opnorm, quad_form};
use riccati_core::oracle::{build_discrete, qp_minimal_cost, random_autonomous, random_instance};
use riccati_core::riccati::stability_constants;
use riccati_core::{
    solve_pare, solve_pdre, solve_sdare, solve_sddre, Horizon, LqProblem, Mat, Tolerances, Vector,
};

type Outcome = Result<String, String>;

fn scalar() -> LqProblem {
    let m = |v| Mat::from_element(1, 1, v);
    LqProblem::autonomous(m(0.0), m(1.0), m(1.0), m(1.0)).unwrap()
}

fn double_integrator() -> LqProblem {
    LqProblem::autonomous(
        Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
        Mat::identity(1, 1),
    )
    .unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn c1() -> Outcome {
    let tol = Tolerances::default();
    let start = Instant::now();
    let p = scalar().with_horizon(Horizon::Finite(5.0)).map_err(fail)?;
    let flow = solve_pdre(&p, 0.01, &tol).map_err(fail)?;
    let err = flow
        .times
        .iter()
        .zip(&flow.values)
        .map(|(t, e)| (e[(0, 0)] - (5.0 - t).tanh()).abs())
        .fold(0.0, f64::max);
    let dt = start.elapsed();
    check(
        err <= 1e-8 && dt < Duration::from_secs(1),
        format!("max |E(t) - tanh(T - t)| = {err:.2e} (<= 1e-8) over {} nodes in {dt:.2?} (< 1 s)", flow.times.len()),
    )
}

fn c2() -> Outcome {
    let tol = Tolerances::default();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for h in [0.5, 0.1, 0.01] {
        let sol = solve_sdare(&scalar(), h, &tol).map_err(fail)?;
        worst = worst.max((sol.e[(0, 0)] - (1.0 + h * h / 12.0f64).sqrt()).abs());
    }
    let dt = start.elapsed();
    check(
        worst <= 1e-10 && dt < Duration::from_secs(1),
        format!("max |E - sqrt(1 + h^2/12)| = {worst:.2e} (<= 1e-10) for h in {{0.5, 0.1, 0.01}} in {dt:.2?} (< 1 s)"),
    )
}

fn c3() -> Outcome {
    let tol = Tolerances::default();
    let start = Instant::now();
    let (mut worst_cost, mut worst_u, mut worst_kkt) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let inst = random_instance(1000 + seed, 4, 2, 25).map_err(fail)?;
        let data = build_discrete(&inst.problem, &inst.partition, &tol).map_err(fail)?;
        let qp = qp_minimal_cost(&data, &inst.x0).map_err(fail)?;
        worst_kkt = worst_kkt.max(qp.kkt_residual / (1.0 + qp.rhs_norm));
        let seq = solve_sddre(&inst.problem, &inst.partition, &tol).map_err(fail)?;
        let value = quad_form(seq.initial(), &inst.x0);
        worst_cost = worst_cost.max((qp.cost - value).abs() / (1.0 + qp.cost));
        let tr = simulate_sampled(&inst.problem, SampledFeedback::Sequence(&seq), &inst.x0, None, &tol)
            .map_err(fail)?;
        let scale: f64 = qp.controls.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt();
        let diff: f64 = qp
            .controls
            .iter()
            .zip(&tr.controls)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        worst_u = worst_u.max(if scale > 0.0 { diff / scale } else { diff });
    }
    let dt = start.elapsed();
    check(
        worst_cost <= 1e-8 && worst_u <= 1e-6 && worst_kkt <= 1e-10 && dt < Duration::from_secs(30),
        format!(
            "50 instances: cost gap {worst_cost:.2e} (<= 1e-8 rel), control gap {worst_u:.2e} (<= 1e-6 rel), KKT {worst_kkt:.2e}, {dt:.2?} (< 30 s)"
        ),
    )
}

fn c4() -> Outcome {
    let tol = Tolerances::default();
    let p = scalar().with_horizon(Horizon::Finite(1.0)).map_err(fail)?;
    let uniform = arrow_left(&p, &uniform_meshes(1.0, &[0.1, 0.05, 0.025, 0.0125]).map_err(fail)?, &tol)
        .map_err(fail)?;
    let mut random_orders = Vec::new();
    let mut random_ok = true;
    for seed in 0..3 {
        let r = arrow_left(&p, &random_meshes(1.0, 8, 4, 77 + seed).map_err(fail)?, &tol).map_err(fail)?;
        let order = r.estimated_order.unwrap_or(f64::NAN);
        random_ok &= r.monotone && order >= 0.9;
        random_orders.push(order);
    }
    let uo = uniform.estimated_order.unwrap_or(f64::NAN);
    check(
        uniform.monotone && uo >= 1.8 && random_ok,
        format!(
            "uniform errors {:?} order {uo:.3} (>= 1.8); non-uniform orders {:?} (>= 0.9)",
            uniform.errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            random_orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn c5() -> Outcome {
    let tol = Tolerances::default();
    let ts = [2.0, 4.0, 6.0, 8.0];
    let r = arrow_bottom(&scalar(), &ts, &tol).map_err(fail)?;
    let tanh_ok = ts
        .iter()
        .zip(&r.errors)
        .all(|(t, e)| *e <= 1.1 * 2.0 * (-2.0 * t).exp());
    let fine = tol.with_ode(1e-12);
    let di = arrow_bottom(&double_integrator(), &[5.0, 10.0, 20.0, 40.0], &fine).map_err(fail)?;
    let last = *di.errors.last().unwrap();
    check(
        tanh_ok && r.monotone && di.monotone && last <= 1e-6,
        format!(
            "scalar errors {:?} within 1.1*2e^(-2T); double integrator errors {:?}, monotone {} (floor wobble allowed), final {last:.2e} (<= 1e-6)",
            r.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            di.errors.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            di.monotone
        ),
    )
}

fn c6() -> Outcome {
    let tol = Tolerances::default();
    let h: f64 = 0.1;
    let counts: Vec<usize> = (1..=400).collect();
    let r = arrow_top(&scalar(), h, &counts, &tol).map_err(fail)?;
    let root = (1.0 + h * h / 12.0).sqrt();
    let part = riccati_core::TimePartition::uniform_steps(h, 400).map_err(fail)?;
    let p400 = scalar().with_horizon(Horizon::Finite(part.final_time())).map_err(fail)?;
    let e400 = solve_sddre(&p400, &part, &tol).map_err(fail)?.values[0][(0, 0)];
    let closed = (e400 - root).abs();
    let increasing = r.notes.iter().any(|n| n.ends_with("true"));
    check(
        closed <= 1e-8 && increasing,
        format!("|E_0(N = 400) - sqrt(1 + h^2/12)| <= {closed:.2e} (<= 1e-8); probe forms nondecreasing for N = 1..400: {increasing}"),
    )
}

fn c7() -> Outcome {
    let tol = Tolerances::default();
    let hs = [0.1, 0.05, 0.025];
    let r = arrow_right(&scalar(), &hs, &tol).map_err(fail)?;
    let einf = solve_pare(&scalar(), &tol).map_err(fail)?;
    let sc = stability_constants(&scalar(), &einf, &tol).map_err(fail)?;
    let ratios: Vec<f64> = hs.iter().zip(&r.errors).map(|(h, e)| e / (h * h / 24.0)).collect();
    let order = r.estimated_order.unwrap_or(f64::NAN);
    check(
        ratios.iter().all(|q| (q - 1.0).abs() <= 0.05)
            && (1.8..=2.2).contains(&order)
            && hs.iter().all(|&h| h <= sc.hbar),
        format!("error/(h^2/24) = {:?} (within 5%), order {order:.4} (in [1.8, 2.2]), hbar = {:.6}", ratios.iter().map(|q| format!("{q:.5}")).collect::<Vec<_>>(), sc.hbar),
    )
}

fn c8() -> Outcome {
    let tol = Tolerances::default();
    let einf = solve_pare(&scalar(), &tol).map_err(fail)?;
    let sc = stability_constants(&scalar(), &einf, &tol).map_err(fail)?;
    let want = 2.0 * (1.0 + 0.1f64.exp());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0s: Vec<Vector> = (0..5).map(|_| Vector::from_element(1, rng.random_range(-2.0..2.0))).collect();
    let lc = threshold_check(&scalar(), &[0.2, 0.1, 0.05], &x0s, &tol).map_err(fail)?;
    let worst = lc.rows.iter().map(|r| r.cost / r.bound).fold(0.0, f64::max);
    check(
        (sc.hbar - 0.2).abs() <= 1e-6 && (sc.cbar - want).abs() <= 1e-6 && lc.pass,
        format!(
            "hbar = {:.9}, cbar = {:.9} (target {want:.9}); 15 simulated costs, worst cost/bound = {worst:.4}",
            sc.hbar, sc.cbar
        ),
    )
}

fn c9() -> Outcome {
    let tol = Tolerances::default();
    let mut psd_worst = f64::INFINITY;
    let mut bounds_ok = true;
    // finite horizon: flows and sequences on random instances
    for seed in 0..20u64 {
        let inst = random_instance(5000 + seed, 4, 2, 25).map_err(fail)?;
        let flow = solve_pdre(&inst.problem, 0.05, &tol).map_err(fail)?;
        let seq = solve_sddre(&inst.problem, &inst.partition, &tol).map_err(fail)?;
        for e in flow.values.iter().chain(&seq.values) {
            psd_worst = psd_worst.min(min_eigenvalue(e) / (1.0 + opnorm(e)));
        }
        bounds_ok &= flow.bound_check(&inst.problem).map_err(fail)?.holds;
        bounds_ok &= seq.bound_check(&inst.problem).map_err(fail)?.holds;
    }
    // infinite horizon: residuals, telescoping and decay
    let mut res_worst: f64 = 0.0;
    let mut tele_worst: f64 = 0.0;
    let mut decays = 0usize;
    let mut loops = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut problems = vec![scalar(), double_integrator()];
    while problems.len() < 12 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=2);
        problems.push(random_autonomous(&mut rng, n, m).map_err(fail)?);
    }
    for p in &problems {
        let n = p.n();
        let x0 = Vector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
        let pare = solve_pare(p, &tol).map_err(fail)?;
        res_worst = res_worst.max(pare.residual / (1.0 + opnorm(&pare.e)));
        let sc = stability_constants(p, &pare, &tol).map_err(fail)?;
        let h = 0.1;
        let sdare = solve_sdare(p, h, &tol).map_err(fail)?;
        res_worst = res_worst.max(sdare.residual / (1.0 + opnorm(&sdare.e)));
        psd_worst = psd_worst.min(min_eigenvalue(&sdare.e) / (1.0 + opnorm(&sdare.e)));

        let tr = simulate_sampled(p, SampledFeedback::Stationary(&sdare), &x0, None, &tol).map_err(fail)?;
        let value = quad_form(&sdare.e, &x0);
        tele_worst = tele_worst.max((tr.cost_with_tail() - value).abs() / (1.0 + value));
        loops += 1;
        decays += decay_check(&tr, None).pass() as usize;

        let (_, _, q, _) = p.constant().map_err(fail)?;
        let t_sim = simulation_horizon(&pare.e, q);
        let tr = simulate_permanent(p, PermanentFeedback::Stationary(&pare), &x0, t_sim / 4000.0, &tol)
            .map_err(fail)?;
        loops += 1;
        decays += decay_check(&tr, Some((&pare.e, sc.decay_rate()))).pass() as usize;

        // the threshold is very conservative on ill-conditioned instances;
        // sampled runs at h = hbar are only tractable when it is not tiny
        if sc.hbar >= 1e-3 {
            let k = threshold_gain(p, &pare).map_err(fail)?;
            let tr = simulate_sampled(p, SampledFeedback::Fixed { gain: &k, h: sc.hbar }, &x0, None, &tol)
                .map_err(fail)?;
            loops += 1;
            decays += decay_check(&tr, Some((&pare.e, sc.decay_rate()))).pass() as usize;
        }
    }
    check(
        psd_worst >= -1e-10 && bounds_ok && res_worst <= 1e-10 && tele_worst <= 1e-8 && decays == loops,
        format!(
            "min scaled eigenvalue {psd_worst:.2e} (>= -1e-10); norm bounds hold: {bounds_ok}; ARE residual {res_worst:.2e} (<= 1e-10); telescoping gap {tele_worst:.2e} (<= 1e-8); decay {decays}/{loops}"
        ),
    )
}

fn c10() -> Outcome {
    let tol = Tolerances::default();
    let cfg = DiagramConfig::default();
    let a = full_diagram(&scalar(), &cfg, &tol).map_err(fail)?;
    let b = full_diagram(&double_integrator(), &cfg, &tol).map_err(fail)?;
    check(
        a.pass && b.pass,
        format!(
            "scalar corner gap {:.2e}, failing {:?}; double integrator corner gap {:.2e}, failing {:?} (tol 1e-5)",
            a.corner.discrepancy, a.failing, b.corner.discrepancy, b.failing
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("scalar permanent differential closed form", c1),
        ("scalar sampled algebraic closed form", c2),
        ("QP oracle equivalence", c3),
        ("left arrow orders", c4),
        ("bottom arrow", c5),
        ("top arrow", c6),
        ("right arrow", c7),
        ("threshold constants and sampled controller cost", c8),
        ("invariant suites", c9),
        ("full diagram commutation", c10),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}  {name}: {detail} [{dt:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {detail} [{dt:.2?}]", i + 1)
            }
        }
    }
    let total = start.elapsed();
    let budget_ok = total < Duration::from_secs(300);
    println!(
        "{}  suite runtime {total:.2?} (< 5 min)",
        if budget_ok { "PASS" } else { "FAIL" }
    );
    if failed > 0 || !budget_ok {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
