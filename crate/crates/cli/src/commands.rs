use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slc_core::geometry::{curvature_field, default_j, DEFAULT_EPSILON};
use slc_core::identities::{algebraic_suites, on_phase_suites, IdentityOptions};
use slc_core::jacobi::{verify_jacobi as run_jacobi, SamplingMode};
use slc_core::ot2d::{assignment_consistency, cell_centers, mtw_scan, ot_map};
use slc_core::output::{fmt17, write_csv, write_file, write_heatmap_svg};
use slc_core::solver::{
    cap_radius, max_abs, max_difference, probe_gradient_estimate, probe_interior_curvature, residual_grid,
    run_estimate_probe, solve as run_solver, sphere_cap_reference, DirichletProblem, SolveReport, SolverOptions,
};
use slc_core::symfunc::Phase;
use slc_core::GraphPatch;

use crate::solution::{read_solution, write_solution, ExtraColumn};
use crate::Context;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] slc_core::Error),
    #[error("solution file {} does not exist", .0.display())]
    MissingSolution(PathBuf),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Core(_) => 2,
            Self::MissingSolution(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Violated,
    NotConverged,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Self::Passed => 0,
            Self::Violated => 1,
            Self::NotConverged => 3,
        }
    }

    fn from_checks(ok: bool) -> Self {
        if ok {
            Self::Passed
        } else {
            Self::Violated
        }
    }
}

type CmdResult = Result<Outcome, CliError>;

fn emit(
    ctx: &Context,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    Ok(write_file(&ctx.out.join(name), body)?)
}

pub fn verify_identities(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let (lo, hi) = (cfg.usize_or("n_min", 2)?, cfg.usize_or("n_max", 6)?);
    if !(2 <= lo && lo <= hi && hi <= 12) {
        return Err(slc_core::Error::Config(format!("need 2 <= n_min <= n_max <= 12, got {lo}..{hi}")).into());
    }
    let opts = IdentityOptions {
        samples: cfg.usize_or("samples", 10_000)?,
        dimensions: lo..=hi,
        seed: ctx.seed,
        inject_fault: cfg.bool_or("inject_fault", false)?,
    };
    let mut ok = true;
    for suite in algebraic_suites(&opts).into_iter().chain(on_phase_suites(&opts)) {
        emit(ctx, &format!("identities_{}.csv", suite.name), |w| suite.write_csv(w))?;
        println!(
            "{}: {} samples, max error {:e} (tolerance {:e}), {} violations, {:.2?}",
            suite.name,
            suite.rows.len(),
            suite.max_error(),
            suite.tolerance,
            suite.violations(),
            suite.elapsed
        );
        if let Some(row) = suite.first_counterexample() {
            ok = false;
            let data: Vec<String> = row.data.iter().map(|v| fmt17(*v)).collect();
            println!(
                "counterexample in {}: sample {}, n = {}, error = {:e}, data = [{}]",
                suite.name,
                row.sample,
                row.n,
                row.error,
                data.join(", ")
            );
        }
    }
    Ok(Outcome::from_checks(ok))
}

pub fn verify_jacobi(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let n = cfg.usize_or("n", 3)?;
    let mode: SamplingMode = cfg.str_or("mode", "critical").parse()?;
    let default_theta = match mode {
        SamplingMode::Critical => (n as f64 - 2.0) * FRAC_PI_2,
        SamplingMode::Convex => (n as f64 - 1.0) * FRAC_PI_2,
    };
    let phase = Phase::new(cfg.f64_or("theta", default_theta)?, n)?;
    let report = run_jacobi(
        &phase,
        mode,
        cfg.usize_or("samples", 10_000)?,
        cfg.f64_or("epsilon", DEFAULT_EPSILON)?,
        cfg.f64_or("j", default_j(n))?,
        ctx.seed,
    )?;
    emit(ctx, "jacobi.csv", |w| report.write_csv(w))?;
    println!("{}", report.summary());
    if let Some(&id) = report.failures.first() {
        let row = &report.rows[id];
        println!("first failure: sample {id}, kappa = {:?}, slack = {:e}", row.kappa, row.slack);
    }
    Ok(Outcome::from_checks(report.failures.is_empty()))
}

fn write_history(ctx: &Context, report: &SolveReport) -> Result<(), CliError> {
    emit(ctx, "history.csv", |w| report.write_history_csv(w))
}

/// `κ₁` per grid index, NaN on the boundary ring.
fn largest_curvature(patch: &GraphPatch) -> Result<Vec<f64>, CliError> {
    let field = curvature_field(patch)?;
    let mut out = vec![f64::NAN; patch.len()];
    for p in field.points() {
        out[p.index] = p.kappa.max();
    }
    Ok(out)
}

/// Heat map of a grid field; in three dimensions the middle `x₃` slice.
fn write_field_svg(ctx: &Context, name: &str, patch: &GraphPatch, values: &[f64], title: &str) -> Result<(), CliError> {
    let e = patch.extents();
    let slice: Vec<f64> = match patch.n() {
        2 => values.to_vec(),
        _ => {
            let mid = e[2] / 2;
            (0..e[0])
                .flat_map(|i| (0..e[1]).map(move |j| [i, j, mid]))
                .map(|m| values[patch.flat_index(&m)])
                .collect()
        }
    };
    emit(ctx, name, |w| write_heatmap_svg(w, e[0], e[1], &slice, title))
}

pub fn solve(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let n = cfg.usize_or("n", 2)?;
    let theta = cfg.require_f64("theta")?;
    let phase = Phase::new(theta, n)?;
    let spacing = cfg.f64_or("spacing", 1.0 / 32.0)?;
    let half = cfg.f64_or("half_width", 0.375)?;
    let center = vec![0.0; n];
    let (start, exact) = match cfg.str_or("boundary", "cap") {
        "cap" => {
            let radius = match cfg.f64("radius")? {
                Some(r) => r,
                None => cap_radius(theta, n)?,
            };
            let exact = sphere_cap_reference(radius, &center, half, spacing)?;
            (exact.clone(), Some(exact))
        }
        "flat" => (GraphPatch::centered(&center, half, spacing, |_| 0.0)?, None),
        other => return Err(slc_core::Error::Config(format!("unknown boundary {other:?}")).into()),
    };
    let defaults = SolverOptions::default();
    let options = SolverOptions {
        tolerance: cfg.f64_or("tolerance", defaults.tolerance)?,
        max_newton_iterations: cfg.usize_or("max_newton_iterations", defaults.max_newton_iterations)?,
        continuation_steps: cfg.usize_or("continuation_steps", defaults.continuation_steps)?.max(1),
        min_phase_step: cfg.f64_or("min_phase_step", defaults.min_phase_step)?,
        ..defaults
    };
    let mut problem = DirichletProblem::new(start, phase.theta())?.with_options(options);
    if cfg.bool_or("warm_start", false)? {
        problem = problem.with_warm_start();
    }
    let report = run_solver(&problem);
    write_history(ctx, &report)?;
    println!(
        "{} after {} Newton iterations, residual {:e}",
        report.status,
        report.newton_iterations(),
        report.final_residual
    );
    if !report.is_converged() {
        return Ok(Outcome::NotConverged);
    }
    let patch = &report.solution;
    let residual = residual_grid(patch, &phase)?;
    let kappa1 = largest_curvature(patch)?;
    let admissible: Vec<f64> = report
        .admissible
        .iter()
        .map(|a| a.map_or(f64::NAN, |b| f64::from(u8::from(b))))
        .collect();
    let mut extra = vec![
        ExtraColumn {
            name: "residual",
            values: &residual,
        },
        ExtraColumn {
            name: "kappa_1",
            values: &kappa1,
        },
        ExtraColumn {
            name: "admissible",
            values: &admissible,
        },
    ];
    let (exact_u, error): (Vec<f64>, Vec<f64>) = match &exact {
        Some(e) => {
            println!("max error vs exact cap {:e}", max_difference(patch, e)?);
            e.u().iter().zip(patch.u()).map(|(x, u)| (*x, u - x)).unzip()
        }
        None => (Vec::new(), Vec::new()),
    };
    if exact.is_some() {
        extra.push(ExtraColumn {
            name: "exact",
            values: &exact_u,
        });
        extra.push(ExtraColumn {
            name: "error",
            values: &error,
        });
    }
    emit(ctx, "solution.csv", |w| write_solution(patch, &extra, w))?;
    println!("max |residual| {:e}", max_abs(&residual));
    if ctx.svg {
        write_field_svg(ctx, "kappa_1.svg", patch, &kappa1, "kappa_1")?;
    }
    Ok(Outcome::Passed)
}

fn load_solution(path: PathBuf) -> Result<GraphPatch, CliError> {
    if !path.exists() {
        return Err(CliError::MissingSolution(path));
    }
    Ok(read_solution(&path)?)
}

const PROBE_HEADER: [&str; 8] = [
    "amplitude",
    "spacing",
    "converged",
    "sup_kappa",
    "oscillation",
    "curvature_ratio",
    "gradient_norm",
    "gradient_ratio",
];

pub fn probe(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let theta = cfg.f64_or("theta", FRAC_PI_2)?;
    Phase::new(theta, 2)?;
    let inner = cfg.f64_or("inner_radius", 0.2)?;
    if let Some(path) = cfg.path("solution") {
        let patch = load_solution(path)?;
        let c = probe_interior_curvature(&patch, &vec![0.0; patch.n()], inner)?;
        let g = probe_gradient_estimate(&patch)?;
        let row = vec![
            f64::NAN,
            patch.spacing(),
            1.0,
            c.sup_kappa,
            c.oscillation,
            c.ratio,
            g.gradient_norm,
            g.ratio,
        ];
        emit(ctx, "probe.csv", |w| write_csv(w, &PROBE_HEADER, &[row]))?;
        println!("sup|kappa| = {:e}, |Du(0)|/osc u = {:e}", c.sup_kappa, g.ratio);
        return Ok(Outcome::Passed);
    }
    let radius = match cfg.f64("radius")? {
        Some(r) => r,
        None => cap_radius(theta, 2)?,
    };
    let amplitudes = cfg.f64_list("amplitudes")?.unwrap_or_else(|| vec![0.02, 0.04, 0.06, 0.08, 0.1]);
    let spacings = cfg.f64_list("spacings")?.unwrap_or_else(|| vec![1.0 / 32.0, 1.0 / 64.0]);
    let half = cfg.f64_or("half_width", 0.375)?;
    let max_drift = cfg.f64_or("max_drift", 0.1)?;
    let mut rows = Vec::new();
    let mut drift_rows = Vec::new();
    let mut converged = true;
    let mut worst_drift: f64 = 0.0;
    for &a in &amplitudes {
        let probes = spacings
            .iter()
            .map(|&h| run_estimate_probe(theta, radius, a, half, h, inner))
            .collect::<slc_core::Result<Vec<_>>>()?;
        for p in &probes {
            converged &= p.status == slc_core::solver::SolveStatus::Converged;
            rows.push(vec![
                a,
                p.spacing,
                f64::from(u8::from(p.status == slc_core::solver::SolveStatus::Converged)),
                p.curvature.sup_kappa,
                p.curvature.oscillation,
                p.curvature.ratio,
                p.gradient.gradient_norm,
                p.gradient.ratio,
            ]);
        }
        if let (Some(first), Some(last)) = (probes.first(), probes.last()) {
            let rel = |x: f64, y: f64| (y - x).abs() / x.abs().max(f64::MIN_POSITIVE);
            let dk = rel(first.curvature.sup_kappa, last.curvature.sup_kappa);
            let dg = rel(first.gradient.ratio, last.gradient.ratio);
            worst_drift = worst_drift.max(dk).max(dg);
            drift_rows.push(vec![a, dk, dg]);
        }
    }
    emit(ctx, "probe.csv", |w| write_csv(w, &PROBE_HEADER, &rows))?;
    emit(ctx, "probe_drift.csv", |w| {
        write_csv(w, &["amplitude", "sup_kappa_drift", "gradient_ratio_drift"], &drift_rows)
    })?;
    println!("{} probes, worst drift {:.3}%", rows.len(), 100.0 * worst_drift);
    if !converged {
        return Ok(Outcome::NotConverged);
    }
    Ok(Outcome::from_checks(worst_drift < max_drift))
}

pub fn ot(ctx: &Context) -> CmdResult {
    let cfg = &ctx.config;
    let theta = cfg.f64_or("theta", FRAC_PI_3)?;
    let phase = Phase::new(theta, 2)?;
    let patch = match cfg.path("solution") {
        Some(path) => load_solution(path)?,
        None => {
            let spacing = cfg.f64_or("spacing", 1.0 / 128.0)?;
            let half = cfg.f64_or("half_width", 0.375)?;
            let exact = sphere_cap_reference(cap_radius(theta, 2)?, &[0.0, 0.0], half, spacing)?;
            let report = run_solver(&DirichletProblem::new(exact, theta)?);
            if !report.is_converged() {
                write_history(ctx, &report)?;
                println!("{}", report.status);
                return Ok(Outcome::NotConverged);
            }
            report.solution
        }
    };
    let map = ot_map(&patch, &phase)?;
    let defect_half = cfg.f64_or("defect_half", 0.35)?;
    let defect_tol = cfg.f64_or("defect_tolerance", 5e-2)?;
    let defect = map.max_measure_defect(&patch, &phase, [0.0, 0.0], defect_half);
    let target = 1.0 / theta.cos().powi(2);
    let rows: Vec<Vec<f64>> = (0..patch.len())
        .map(|f| {
            let x = patch.coords(f);
            let t = map.map[f].unwrap_or([f64::NAN; 2]);
            let d = map.jacobian[f];
            vec![x[0], x[1], t[0], t[1], d, d - target]
        })
        .collect();
    emit(ctx, "ot_map.csv", |w| {
        write_csv(w, &["x1", "x2", "T1", "T2", "det_DT", "measure_residual"], &rows)
    })?;
    println!("max |det DT - 1/cos^2 theta| = {defect:e} (tolerance {defect_tol:e})");

    let sources = cell_centers(cfg.f64_or("sample_half", 0.2)?, cfg.usize_or("per_side", 10)?);
    let consistency = assignment_consistency(&patch, &map, &phase, sources)?;
    emit(ctx, "ot_assignment.csv", |w| {
        consistency.instance.write_csv(&consistency.assignment.target, w)
    })?;
    let min_agreement = cfg.f64_or("min_agreement", 0.95)?;
    println!(
        "assignment oracle agrees with T_u on {:.1}% of {} points",
        100.0 * consistency.agreement,
        consistency.assignment.target.len()
    );

    let thetas = cfg
        .f64_list("mtw_thetas")?
        .unwrap_or_else(|| (1..=5).map(|k| k as f64 * PI / 12.0).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let scan = mtw_scan(&thetas, cfg.usize_or("mtw_trials", 1000)?, &mut rng)?;
    let scan_rows: Vec<Vec<f64>> = scan.iter().map(|&(t, m)| vec![t, m]).collect();
    emit(ctx, "mtw.csv", |w| write_csv(w, &["theta", "max_mtw"], &scan_rows))?;
    let mtw_negative = scan.iter().all(|&(_, m)| m < 0.0);
    println!("MTW tensor negative on all trials: {mtw_negative}");
    if ctx.svg {
        write_field_svg(ctx, "det_dt.svg", &patch, &map.jacobian, "det DT")?;
    }
    Ok(Outcome::from_checks(
        defect < defect_tol && consistency.agreement >= min_agreement && mtw_negative,
    ))
}
