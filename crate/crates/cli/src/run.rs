use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use lspia::io::{load_points, write_controls, write_dataset, write_trace, PointFile};
use lspia::oracle::{densify, pinv_solution, projector_check, spectral_report, SpectralOptions};
use lspia::synth::synthesize;
use lspia::{assemble, fit as run_solver, parameterize, BasisSpace, FitProblem, ParamMode, PointMatrix, Termination};
use serde::Serialize;

use crate::config::{ParamChoice, Settings};
use crate::{exit, Failure};

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> lspia::Result<()>) -> Result<(), Failure> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Writes a status line; a closed stdout (e.g. piped into `head`) is not an error.
fn say(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

#[derive(Serialize)]
struct Summary {
    termination: Termination,
    iterations_used: usize,
    final_residual: f64,
    final_delta: f64,
    wall_ms: Option<f64>,
    variant: lspia::Variant,
    alpha: Option<f64>,
    tol_delta: f64,
    samples: usize,
    controls: usize,
    dim: usize,
    frozen: Vec<usize>,
}

#[derive(Serialize)]
struct Flags {
    real_01: bool,
    zero_count: bool,
    rank_match: bool,
}

/// Numbers behind the boolean flags.
#[derive(Serialize)]
struct Evidence {
    flag_tol: f64,
    zero_eigenvalues: usize,
    rank_weighted: usize,
    path_discrepancy: f64,
}

#[derive(Serialize)]
struct Projector {
    trace: f64,
    expected_trace: usize,
    idempotency: f64,
    symmetry: f64,
    eigen_deviation: f64,
    passed: bool,
}

#[derive(Serialize)]
struct Report {
    rank: usize,
    n0: usize,
    eig_min: f64,
    eig_max: f64,
    max_imag: f64,
    flags: Flags,
    penrose_residuals: [f64; 4],
    size: usize,
    evidence: Evidence,
    projector: Projector,
    frozen: Vec<usize>,
    eigenvalues: Vec<f64>,
    pinv_solution: Option<String>,
}

fn load_data(s: &Settings) -> Result<PointFile, Failure> {
    match s.generator()? {
        Some(spec) => {
            let data = synthesize(&spec).map_err(Failure::config)?;
            Ok(PointFile { points: data.points().clone(), params: Some(data.params().to_vec()) })
        }
        None => Ok(load_points(s.input.as_deref().expect("generator() checked the input"))?),
    }
}

fn load_problem(s: &Settings) -> Result<(BasisSpace, FitProblem), Failure> {
    let file = load_data(s)?;
    let data_dim = file.params.as_ref().and_then(|p| p.first()).map(|t| t.dim());
    let space = s.basis(data_dim)?;
    let mode = s.param.unwrap_or(if file.params.is_some() { ParamChoice::Given } else { ParamChoice::Chord });
    let mode = match mode {
        ParamChoice::Chord => ParamMode::Chord,
        ParamChoice::Uniform => ParamMode::Uniform,
        ParamChoice::Given => {
            let params = file
                .params
                .ok_or_else(|| Failure::config("--param given needs parameter columns u[,v[,w]] in the input"))?;
            if data_dim != Some(space.dim()) {
                return Err(Failure::config(format!(
                    "input has {}-D parameters but the basis is {}-D",
                    data_dim.unwrap_or(0),
                    space.dim()
                )));
            }
            ParamMode::Given(params)
        }
    };
    let data = parameterize(file.points, mode, &space)?;
    let problem = assemble(&space, &data, s.policy())?;
    Ok((space, problem))
}

fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::Converged => exit::CONVERGED,
        Termination::MaxIters => exit::MAX_ITERS,
        Termination::Stagnated => exit::STAGNATED,
    }
}

pub fn fit(s: &Settings) -> Result<i32, Failure> {
    let cfg = s.solver()?;
    let paths = [s.out_path("controls.csv")?, s.out_path("trace.csv")?, s.out_path("summary.json")?];
    let start = Instant::now();
    let (space, problem) = load_problem(s)?;
    let result = run_solver(&problem, &s.initial_controls(), &cfg)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    write_with(&paths[0], |w| write_controls(w, &space, &result.controls))?;
    write_with(&paths[1], |w| write_trace(w, &result.trace))?;
    let last = result.trace.last().expect("trace holds the initial state");
    let summary = Summary {
        termination: result.termination,
        iterations_used: result.iterations_used,
        final_residual: last.residual_norm,
        final_delta: last.delta_norm,
        wall_ms: cfg.record_timing.then_some(wall_ms),
        variant: cfg.variant,
        alpha: result.alpha,
        tol_delta: cfg.tol_delta,
        samples: problem.samples(),
        controls: problem.controls(),
        dim: problem.dim(),
        frozen: problem.weights().frozen_indices(),
    };
    write_json(&paths[2], &summary)?;

    say(&format!(
        "{:?} after {} iterations: residual {:.6e}, last update {:.3e} ({} controls, {} samples)",
        result.termination,
        result.iterations_used,
        last.residual_norm,
        last.delta_norm,
        problem.controls(),
        problem.samples()
    ));
    Ok(termination_code(result.termination))
}

pub fn diagnose(s: &Settings) -> Result<i32, Failure> {
    let with_pinv = s.with_pinv.unwrap_or(false);
    let pinv_path = if with_pinv { Some(s.out_path("pinv.csv")?) } else { None };
    let (space, problem) = load_problem(s)?;
    let opts = SpectralOptions {
        dense_limit: s.dense_limit.unwrap_or(SpectralOptions::default().dense_limit),
        ..Default::default()
    };
    let report = spectral_report(problem.collocation(), problem.weights(), &opts)?;
    let a = densify(problem.collocation());
    let projector = projector_check(&a)?;

    if let Some(path) = &pinv_path {
        let zero = PointMatrix::zeros(problem.controls(), problem.dim());
        let star = pinv_solution(&a, problem.data(), &zero)?;
        write_with(path, |w| write_controls(w, &space, &star))?;
    }

    let value = Report {
        rank: report.rank,
        n0: report.n0,
        eig_min: report.eig_min,
        eig_max: report.eig_max,
        max_imag: report.max_imag,
        flags: Flags {
            real_01: report.flags.real_01,
            zero_count: report.flags.zero_count,
            rank_match: report.flags.rank_match,
        },
        penrose_residuals: report.penrose_residuals,
        size: report.size,
        evidence: Evidence {
            flag_tol: opts.flag_tol,
            zero_eigenvalues: report.zero_count,
            rank_weighted: report.rank_weighted,
            path_discrepancy: report.path_discrepancy,
        },
        projector: Projector {
            trace: projector.trace,
            expected_trace: report.rank,
            idempotency: projector.idempotency,
            symmetry: projector.symmetry,
            eigen_deviation: projector.eigen_deviation,
            passed: projector.passed(opts.flag_tol),
        },
        frozen: problem.weights().frozen_indices(),
        eigenvalues: report.eigenvalues,
        pinv_solution: pinv_path.as_ref().map(|p| p.display().to_string()),
    };
    match &s.out_prefix {
        Some(_) => {
            let path = s.out_path("report.json")?;
            write_json(&path, &value)?;
            say(&format!(
                "rank {} of {} (n0 {}), flags {}",
                value.rank,
                value.size,
                value.n0,
                if report.flags.all() { "pass" } else { "FAIL" }
            ));
        }
        None => say(&serde_json::to_string_pretty(&value).expect("report serializes")),
    }
    Ok(exit::CONVERGED)
}

pub fn synth(s: &Settings) -> Result<i32, Failure> {
    if s.input.is_some() {
        return Err(Failure::config("synth generates data and takes no --input"));
    }
    let path = s.out_path("points.csv")?;
    let spec = s.generator()?.expect("no input given");
    let data = synthesize(&spec).map_err(Failure::config)?;
    write_with(&path, |w| write_dataset(w, &data))?;
    say(&format!("{} samples written to {}", data.points().rows(), path.display()));
    Ok(exit::CONVERGED)
}
