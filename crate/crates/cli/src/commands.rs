use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde_json::{json, Value};

use riccati_core::closedloop::{
    decay_check, simulate_permanent, simulate_sampled, simulation_horizon, PermanentFeedback,
    SampledFeedback, Trajectory,
};
use riccati_core::diagram::{
    arrow_bottom, arrow_left, arrow_right, arrow_top, full_diagram, uniform_meshes, ConvergenceReport,
    DiagramConfig,
};
use riccati_core::linalg::quad_form;
use riccati_core::oracle::{build_discrete, qp_minimal_cost, random_instance};
use riccati_core::problem::{benchmark, HorizonJson, ProblemFile, BENCHMARKS};
use riccati_core::riccati::stability_constants;
use riccati_core::{
    make_partition, solve_pare, solve_pdre, solve_sdare, solve_sddre, validate, Error, Horizon, LqProblem, Mat,
    PartitionSpec, TimePartition, Tolerances, Vector,
};

use crate::{Cli, Command, Which};

/// Why a command did not succeed.
enum Failure {
    /// Bad input: exit 2.
    Input(String),
    /// Numerical failure: exit 3.
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

/// A finished command: the JSON report, CSV attachments keyed by file
/// suffix, a summary line and the verdict.
struct Outcome {
    report: Value,
    csv: Vec<(String, Vec<u8>)>,
    summary: String,
    pass: bool,
}

impl Outcome {
    fn ok(report: Value, summary: String) -> Self {
        Self {
            report,
            csv: Vec::new(),
            summary,
            pass: true,
        }
    }
}

pub fn run(cli: &Cli) -> ExitCode {
    let result = dispatch(cli).and_then(|o| emit(cli, o));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: &Cli) -> Res<Outcome> {
    let tol = tolerances(cli)?;
    let mut out = match &cli.command {
        Command::SolvePdre => solve_pdre_cmd(cli, &tol)?,
        Command::SolveSddre => solve_sddre_cmd(cli, &tol)?,
        Command::SolvePare => solve_pare_cmd(cli, &tol)?,
        Command::SolveSdare => solve_sdare_cmd(cli, &tol)?,
        Command::Simulate => simulate_cmd(cli, &tol)?,
        Command::OracleCheck => oracle_cmd(cli, &tol)?,
        Command::Diagram { which } => diagram_cmd(cli, *which, &tol)?,
        Command::Constants => constants_cmd(cli, &tol)?,
    };
    if let Value::Object(map) = &mut out.report {
        map.insert("seed".into(), json!(cli.seed));
        map.insert("tolerances".into(), json!(tol));
        map.insert("pass".into(), json!(out.pass));
    }
    Ok(out)
}

fn emit(cli: &Cli, out: Outcome) -> Res<bool> {
    let text = serde_json::to_string_pretty(&out.report).expect("reports serialize") + "\n";
    match &cli.out {
        Some(path) => {
            write(path, text.as_bytes())?;
            for (suffix, bytes) in &out.csv {
                write(&sibling(path, suffix), bytes)?;
            }
        }
        None => print!("{text}"),
    }
    eprintln!("{}", out.summary);
    Ok(out.pass)
}

fn write(path: &Path, bytes: &[u8]) -> Res<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::Solver(format!("cannot write {}: {e}", path.display())))
}

/// `run.json` + `trajectory` -> `run.trajectory.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

fn tolerances(cli: &Cli) -> Res<Tolerances> {
    let mut tol = Tolerances::default();
    for (name, value, slot) in [
        ("--tol-ode", cli.tol_ode, &mut tol.ode),
        ("--tol-quad", cli.tol_quad, &mut tol.quad),
        ("--tol-are", cli.tol_are, &mut tol.are),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v < 1.0) {
                return Err(Failure::Input(format!("{name} must lie in (0, 1), got {v}")));
            }
            *slot = v;
        }
    }
    Ok(tol)
}

fn load_file(cli: &Cli) -> Res<(ProblemFile, String)> {
    let spec = cli
        .problem
        .as_deref()
        .ok_or_else(|| Failure::Input("--problem is required for this command".into()))?;
    let path = Path::new(spec);
    // A missing `scalar.json` falls back to the bundled `scalar`.
    let bundled = spec.strip_suffix(".json").unwrap_or(spec);
    let mut file = if path.exists() {
        ProblemFile::load(path)?
    } else if BENCHMARKS.contains(&bundled) {
        benchmark(bundled)?
    } else {
        return Err(Failure::Input(format!(
            "{spec}: no such file or bundled benchmark ({})",
            BENCHMARKS.join(", ")
        )));
    };
    if let Some(t) = cli.t_final {
        file.horizon = Some(HorizonJson::Finite(t));
    }
    let name = file.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(spec)
            .to_string()
    });
    Ok((file, name))
}

fn load(cli: &Cli) -> Res<(ProblemFile, String, LqProblem)> {
    let (file, name) = load_file(cli)?;
    let problem = file.to_problem()?;
    Ok((file, name, problem))
}

fn initial_state(cli: &Cli, file: &ProblemFile, n: usize) -> Res<Vector> {
    let x0 = match (&cli.x0, file.x0()?) {
        (Some(v), _) => Vector::from_column_slice(v),
        (None, Some(v)) => v,
        (None, None) => Vector::from_element(n, 1.0),
    };
    if x0.len() != n {
        return Err(Failure::Input(format!("x0 must have {n} entries, got {}", x0.len())));
    }
    Ok(x0)
}

fn partition(cli: &Cli, file: &ProblemFile, t_final: f64) -> Res<TimePartition> {
    if let Some(count) = cli.count {
        if count == 0 {
            return Err(Failure::Input("--N must be positive".into()));
        }
        return Ok(make_partition(t_final, &PartitionSpec::Uniform(t_final / count as f64))?);
    }
    if let Some(h) = cli.h {
        return Ok(make_partition(t_final, &PartitionSpec::Uniform(h))?);
    }
    file.partition(t_final)?
        .ok_or_else(|| Failure::Input("need --h, --N or a partition in the problem file".into()))
}

fn sampling_step(cli: &Cli, file: &ProblemFile) -> Res<f64> {
    if let Some(h) = cli.h {
        return Ok(h);
    }
    if let Some(riccati_core::problem::PartitionJson::Uniform(h)) = &file.partition {
        return Ok(*h);
    }
    Err(Failure::Input("need --h (or a uniform partition in the problem file)".into()))
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

fn rows(m: &Mat) -> Value {
    json!((0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect::<Vec<f64>>())
        .collect::<Vec<_>>())
}

fn vector(v: &Vector) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn header(command: &str, name: &str) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("command".into(), json!(command));
    map.insert("problem".into(), json!(name));
    map
}

fn arrow_json(r: &ConvergenceReport) -> Value {
    json!({
        "arrow": r.arrow.name(),
        "parameter": r.parameter,
        "values": r.values,
        "errors": r.errors,
        "estimated_order": r.estimated_order,
        "decay_rate": r.decay_rate,
        "threshold": r.threshold,
        "monotone": r.monotone,
        "pass": r.pass,
        "notes": r.notes,
    })
}

fn arrow_csv(r: &ConvergenceReport) -> Res<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    Ok((r.arrow.name().to_string(), buf))
}

fn trajectory_csv(tr: &Trajectory) -> Res<(String, Vec<u8>)> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf)?;
    Ok(("trajectory".into(), buf))
}

fn fmt_mat(m: &Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let r: Vec<String> = m.row(i).iter().map(|v| format!("{v:.10}")).collect();
            format!("[{}]", r.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn solve_pdre_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (_, name, problem) = load(cli)?;
    let t_final = problem.final_time()?;
    let step = cli.h.unwrap_or(t_final / 100.0);
    let flow = solve_pdre(&problem, step, tol)?;
    let bound = flow.bound_check(&problem)?;
    let mut r = header("solve-pdre", &name);
    r.insert("t_final".into(), json!(t_final));
    r.insert("initial".into(), rows(flow.initial()));
    r.insert("times".into(), json!(flow.times));
    r.insert("values".into(), json!(flow.values.iter().map(rows).collect::<Vec<_>>()));
    r.insert("bound_check".into(), json!(bound));
    let summary = format!("E^T(0) = {}", fmt_mat(flow.initial()));
    Ok(Outcome::ok(Value::Object(r), summary))
}

fn solve_sddre_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (file, name, problem) = load(cli)?;
    let t_final = problem.final_time()?;
    let part = partition(cli, &file, t_final)?;
    let seq = solve_sddre(&problem, &part, tol)?;
    let bound = seq.bound_check(&problem)?;
    let mut r = header("solve-sddre", &name);
    r.insert("t_final".into(), json!(t_final));
    r.insert("initial".into(), rows(seq.initial()));
    r.insert("times".into(), json!(part.times()));
    r.insert("values".into(), json!(seq.values.iter().map(rows).collect::<Vec<_>>()));
    r.insert("bound_check".into(), json!(bound));
    let summary = format!("E_0 = {} ({} intervals)", fmt_mat(seq.initial()), part.len());
    Ok(Outcome::ok(Value::Object(r), summary))
}

fn solve_pare_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (_, name, problem) = load(cli)?;
    let assumptions = validate(&problem, &[], tol)?;
    let sol = solve_pare(&problem, tol)?;
    let mut r = header("solve-pare", &name);
    r.insert("assumptions".into(), json!(assumptions));
    r.insert("E".into(), rows(&sol.e));
    r.insert("residual".into(), json!(sol.residual));
    r.insert("iterations".into(), json!(sol.iterations));
    r.insert("closed_loop_abscissa".into(), json!(sol.closed_loop_abscissa));
    let summary = format!("E_inf = {} (residual {:.2e})", fmt_mat(&sol.e), sol.residual);
    Ok(Outcome::ok(Value::Object(r), summary))
}

fn solve_sdare_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (file, name, problem) = load(cli)?;
    let h = sampling_step(cli, &file)?;
    let sol = solve_sdare(&problem, h, tol)?;
    let mut r = header("solve-sdare", &name);
    r.insert("h".into(), json!(h));
    r.insert("E".into(), rows(&sol.e));
    r.insert("residual".into(), json!(sol.residual));
    r.insert("iterations".into(), json!(sol.iterations));
    r.insert("closed_loop_abscissa".into(), json!(sol.closed_loop_abscissa));
    r.insert("min_probe_increment".into(), json!(sol.min_probe_increment));
    let summary = format!(
        "E_inf(h = {h}) = {} (residual {:.2e}, {} iterations)",
        fmt_mat(&sol.e),
        sol.residual,
        sol.iterations
    );
    Ok(Outcome::ok(Value::Object(r), summary))
}

fn simulate_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (file, name, problem) = load(cli)?;
    let x0 = initial_state(cli, &file, problem.n())?;
    let sampled = cli.h.is_some() || cli.count.is_some() || file.partition.is_some();
    let (kind, tr, value, decay) = match (problem.horizon(), sampled) {
        (Horizon::Finite(t), true) => {
            let part = partition(cli, &file, t)?;
            let seq = solve_sddre(&problem, &part, tol)?;
            let tr = simulate_sampled(&problem, SampledFeedback::Sequence(&seq), &x0, None, tol)?;
            ("sampled finite", tr, quad_form(seq.initial(), &x0), None)
        }
        (Horizon::Finite(t), false) => {
            let flow = solve_pdre(&problem, t / 200.0, tol)?;
            let tr = simulate_permanent(&problem, PermanentFeedback::Flow(&flow), &x0, t / 100.0, tol)?;
            ("permanent finite", tr, quad_form(flow.initial(), &x0), None)
        }
        (Horizon::Infinite, true) => {
            let h = sampling_step(cli, &file)?;
            let are = solve_sdare(&problem, h, tol)?;
            let tr = simulate_sampled(&problem, SampledFeedback::Stationary(&are), &x0, None, tol)?;
            let d = decay_check(&tr, None);
            ("sampled infinite", tr, quad_form(&are.e, &x0), Some(d))
        }
        (Horizon::Infinite, false) => {
            let are = solve_pare(&problem, tol)?;
            let (_, _, q, _) = problem.constant()?;
            let step = simulation_horizon(&are.e, q) / 2000.0;
            let tr = simulate_permanent(&problem, PermanentFeedback::Stationary(&are), &x0, step, tol)?;
            let d = decay_check(&tr, None);
            ("permanent infinite", tr, quad_form(&are.e, &x0), Some(d))
        }
    };
    let total = tr.cost_with_tail();
    let gap = (total - value).abs() / (1.0 + value.abs());
    let mut r = header("simulate", &name);
    r.insert("kind".into(), json!(kind));
    r.insert("x0".into(), vector(&x0));
    r.insert("final_time".into(), json!(tr.times.last()));
    r.insert("final_state".into(), vector(tr.final_state()));
    r.insert("running_cost".into(), json!(tr.running_cost.last()));
    r.insert("terminal_cost".into(), json!(tr.terminal_cost));
    r.insert("tail_estimate".into(), json!(tr.tail_estimate));
    r.insert("cost".into(), json!(total));
    r.insert("value".into(), json!(value));
    r.insert("relative_gap".into(), json!(gap));
    r.insert("truncated".into(), json!(tr.infinite_horizon));
    if let Some(d) = &decay {
        r.insert("decay".into(), json!(d));
    }
    let pass = decay.as_ref().is_none_or(|d| d.pass());
    let summary = format!("{kind}: cost {total:.10} vs value {value:.10} (relative gap {gap:.2e})");
    Ok(Outcome {
        report: Value::Object(r),
        csv: vec![trajectory_csv(&tr)?],
        summary,
        pass,
    })
}

struct OracleRow {
    label: String,
    qp_cost: f64,
    value: f64,
    cost_gap: f64,
    control_gap: f64,
    kkt: f64,
}

fn oracle_row(label: String, problem: &LqProblem, part: &TimePartition, x0: &Vector, tol: &Tolerances) -> Res<OracleRow> {
    let data = build_discrete(problem, part, tol)?;
    let qp = qp_minimal_cost(&data, x0)?;
    let seq = solve_sddre(problem, part, tol)?;
    let value = quad_form(seq.initial(), x0);
    let tr = simulate_sampled(problem, SampledFeedback::Sequence(&seq), x0, None, tol)?;
    let norm = |us: &[Vector]| us.iter().map(|u| u.norm_squared()).sum::<f64>().sqrt();
    let diff: Vec<Vector> = qp.controls.iter().zip(&tr.controls).map(|(a, b)| a - b).collect();
    let scale = norm(&qp.controls);
    Ok(OracleRow {
        label,
        qp_cost: qp.cost,
        value,
        cost_gap: (qp.cost - value).abs() / (1.0 + qp.cost),
        control_gap: if scale > 0.0 { norm(&diff) / scale } else { norm(&diff) },
        kkt: qp.kkt_residual / (1.0 + qp.rhs_norm),
    })
}

fn oracle_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (name, rows_out) = if cli.problem.is_some() {
        let (file, name, problem) = load(cli)?;
        let t_final = problem.final_time()?;
        let part = partition(cli, &file, t_final)?;
        let x0 = initial_state(cli, &file, problem.n())?;
        (name.clone(), vec![oracle_row(name, &problem, &part, &x0, tol)?])
    } else {
        let count = cli.count.unwrap_or(50);
        let mut out = Vec::with_capacity(count);
        for i in 0..count as u64 {
            let seed = cli.seed.wrapping_add(i);
            let inst = random_instance(seed, 4, 2, 25)?;
            out.push(oracle_row(format!("seed {seed}"), &inst.problem, &inst.partition, &inst.x0, tol)?);
        }
        ("random".to_string(), out)
    };
    let pass = rows_out
        .iter()
        .all(|r| r.cost_gap <= 1e-8 && r.control_gap <= 1e-6 && r.kkt <= 1e-10);
    let worst = rows_out.iter().map(|r| r.cost_gap).fold(0.0, f64::max);
    let worst_u = rows_out.iter().map(|r| r.control_gap).fold(0.0, f64::max);
    let mut r = header("oracle-check", &name);
    r.insert(
        "instances".into(),
        json!(rows_out
            .iter()
            .map(|r| json!({
                "instance": r.label,
                "qp_cost": r.qp_cost,
                "riccati_value": r.value,
                "relative_cost_gap": r.cost_gap,
                "relative_control_gap": r.control_gap,
                "kkt_residual": r.kkt,
            }))
            .collect::<Vec<_>>()),
    );
    let summary = format!(
        "{} instance(s): worst cost gap {worst:.2e}, worst control gap {worst_u:.2e}: {}",
        rows_out.len(),
        if pass { "pass" } else { "FAIL" }
    );
    Ok(Outcome {
        report: Value::Object(r),
        csv: Vec::new(),
        summary,
        pass,
    })
}

fn halvings(h: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| h / f64::powi(2.0, k as i32)).collect()
}

fn diagram_cmd(cli: &Cli, which: Which, tol: &Tolerances) -> Res<Outcome> {
    let (file, name) = load_file(cli)?;
    let mut base = file.clone();
    base.horizon = None;
    let problem = base.to_problem()?;
    let finite_t = match file.horizon()? {
        Some(Horizon::Finite(t)) => Some(t),
        _ => None,
    };
    let defaults = DiagramConfig::default();
    let mut r = header("diagram", &name);
    let (reports, pass, summary) = match which {
        Which::Left => {
            let t = finite_t.unwrap_or(defaults.left_horizon);
            let steps = cli.h.map_or(defaults.left_steps.clone(), |h| halvings(h, 4));
            let p = problem.with_horizon(Horizon::Finite(t))?;
            let rep = arrow_left(&p, &uniform_meshes(t, &steps)?, tol)?;
            let s = format!("left arrow: order {:?}", rep.estimated_order);
            (vec![rep.clone()], rep.pass, s)
        }
        Which::Bottom => {
            let ts = finite_t.map_or(defaults.bottom_horizons.clone(), |t| vec![t / 8.0, t / 4.0, t / 2.0, t]);
            let rep = arrow_bottom(&problem, &ts, tol)?;
            let s = format!("bottom arrow: final error {:.2e}", rep.errors.last().unwrap_or(&f64::NAN));
            (vec![rep.clone()], rep.pass, s)
        }
        Which::Top => {
            let h = match cli.h {
                Some(h) => h,
                None if problem.assume_optimizable => defaults.top_step,
                None => {
                    let einf = solve_pare(&problem, tol)?;
                    defaults.top_step.min(stability_constants(&problem, &einf, tol)?.hbar)
                }
            };
            let n = cli.count.unwrap_or(400).max(16);
            let counts = vec![n / 16, n / 8, n / 4, n / 2, n];
            let rep = arrow_top(&problem, h, &counts, tol)?;
            let s = format!("top arrow (h = {h}): final error {:.2e}", rep.errors.last().unwrap_or(&f64::NAN));
            (vec![rep.clone()], rep.pass, s)
        }
        Which::Right => {
            let steps = match cli.h {
                Some(h) => halvings(h, 6),
                None => {
                    let einf = solve_pare(&problem, tol)?;
                    let hbar = stability_constants(&problem, &einf, tol)?.hbar;
                    defaults.right_fractions.iter().map(|f| f * hbar).collect()
                }
            };
            let rep = arrow_right(&problem, &steps, tol)?;
            let s = format!("right arrow: order {:?}", rep.estimated_order);
            (vec![rep.clone()], rep.pass, s)
        }
        Which::All => {
            let mut cfg = DiagramConfig {
                seed: cli.seed,
                ..DiagramConfig::default()
            };
            if let Some(t) = finite_t {
                cfg.left_horizon = t;
            }
            if let Some(h) = cli.h {
                cfg.top_step = h;
            }
            let bundle = full_diagram(&problem, &cfg, tol)?;
            r.insert(
                "corner".into(),
                json!({
                    "e_inf": rows(&bundle.corner.e_inf),
                    "mesh_then_horizon": rows(&bundle.corner.mesh_then_horizon),
                    "horizon_then_mesh": rows(&bundle.corner.horizon_then_mesh),
                    "discrepancy": bundle.corner.discrepancy,
                    "pass": bundle.corner.pass,
                }),
            );
            r.insert("hbar".into(), json!(bundle.hbar));
            r.insert("cbar".into(), json!(bundle.cbar));
            r.insert("failing".into(), json!(bundle.failing));
            r.insert("config".into(), json!(bundle.config));
            r.insert("verdict".into(), json!(if bundle.pass { "pass" } else { "fail" }));
            let s = format!(
                "diagram: {} (corner discrepancy {:.2e})",
                if bundle.pass { "pass" } else { "fail" },
                bundle.corner.discrepancy
            );
            (bundle.arrows, bundle.pass, s)
        }
    };
    r.insert("arrows".into(), json!(reports.iter().map(arrow_json).collect::<Vec<_>>()));
    let csv = reports.iter().map(arrow_csv).collect::<Res<Vec<_>>>()?;
    Ok(Outcome {
        report: Value::Object(r),
        csv,
        summary,
        pass,
    })
}

fn constants_cmd(cli: &Cli, tol: &Tolerances) -> Res<Outcome> {
    let (_, name, problem) = load(cli)?;
    let einf = solve_pare(&problem, tol)?;
    let sc = stability_constants(&problem, &einf, tol)?;
    let mut r = header("constants", &name);
    r.insert("hbar".into(), json!(sc.hbar));
    r.insert("cbar".into(), json!(sc.cbar));
    r.insert("E_inf".into(), rows(&einf.e));
    r.insert("W".into(), rows(&sc.w));
    r.insert("norm_a".into(), json!(sc.norm_a));
    r.insert("norm_a_minus_w".into(), json!(sc.norm_a_minus_w));
    r.insert("rho_max_ew".into(), json!(sc.rho_max_ew));
    r.insert("rho_min_q".into(), json!(sc.rho_min_q));
    r.insert("rho_max_e".into(), json!(sc.rho_max_e));
    r.insert("rho_min_e".into(), json!(sc.rho_min_e));
    r.insert("decay_rate".into(), json!(sc.decay_rate()));
    let summary = format!("hbar = {:.6}, cbar = {:.6}", sc.hbar, sc.cbar);
    Ok(Outcome::ok(Value::Object(r), summary))
}
