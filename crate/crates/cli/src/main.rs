//! Command-line frontend: configuration-driven, reproducible runs of the
//! solver, the eigenvalue path, the data checker, the mesh exporter, and
//! the sigma_k property suite.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 verification failure -- so CI can tell the three apart.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hessphere::continuation::{continuation_solve, eigen_solve};
use hessphere::geometry::{embed, export_obj};
use hessphere::pde::check_assumption;
use hessphere::sphere::{build_grid, fmt_f64, read_csv_file, write_csv_file};
use hessphere::symmfunc::property_suite;
use hessphere::verify::{check_bounds, collect_violations, default_slack};

use config::Resolved;

#[derive(Parser)]
#[command(name = "hessphere", version, about = "sigma_k Hessian equations on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized suites.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the p > q problem by the data homotopy.
    Solve(RunArgs),
    /// Solve the p = q > 1 eigenvalue problem by the epsilon path.
    Eigen(RunArgs),
    /// Check the curvature condition on the data phi.
    Check(RunArgs),
    /// Embed a solution CSV and export a Wavefront OBJ mesh.
    Export(RunArgs),
    /// Run the randomized sigma_k identity suite.
    Props(RunArgs),
}

/// Failure category, mapped onto the exit-code contract.
enum Failure {
    Config(String),
    Solver(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Verification(m) => m,
        }
    }
}

fn io_fail(e: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("i/o: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Eigen(args) => cmd_eigen(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Export(args) => cmd_export(&args),
        Command::Props(args) => cmd_props(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load(args: &RunArgs) -> Result<Resolved, Failure> {
    let resolved = config::load(&args.config, args.out.clone()).map_err(Failure::Config)?;
    std::fs::create_dir_all(&resolved.out_dir).map_err(io_fail)?;
    Ok(resolved)
}

fn write_json(path: &std::path::Path, value: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io_fail)
}

fn echo_config(resolved: &Resolved, seed: u64) -> Result<(), Failure> {
    write_json(&resolved.out_path("resolved_config.json"), &resolved.echo_json(seed))
}

fn cmd_solve(args: &RunArgs) -> Result<(), Failure> {
    let resolved = load(args)?;
    let spec = &resolved.spec;
    if spec.epsilon != 0.0 || spec.p <= spec.q {
        return Err(Failure::Config(format!(
            "solve requires epsilon = 0 and p > q (got p = {}, q = {}, epsilon = {})",
            spec.p, spec.q, spec.epsilon
        )));
    }
    echo_config(&resolved, args.seed)?;
    let grid = build_grid(resolved.n_lat).map_err(|e| Failure::Config(e.to_string()))?;
    let (u, trace) =
        continuation_solve(spec, &grid, &resolved.settings, resolved.n_steps_init)
            .map_err(|e| Failure::Solver(e.to_string()))?;

    write_csv_file(&u, &resolved.out_path(&resolved.config.output.solution_csv))
        .map_err(io_fail)?;
    write_json(&resolved.out_path(&resolved.config.output.trace_json), &trace.to_json())?;

    let slack = default_slack(resolved.n_lat);
    let report = check_bounds(&u, spec, slack).map_err(|e| Failure::Solver(e.to_string()))?;
    write_json(&resolved.out_path(&resolved.config.output.bounds_json), &report.to_json())?;

    println!(
        "solve: {} steps, residual {:.3e}, u in [{:.6}, {:.6}], min eig W {:.3e}",
        trace.steps.len(),
        trace.steps.last().map(|s| s.residual_inf).unwrap_or(f64::NAN),
        u.min_value(),
        u.max_value(),
        trace.steps.last().map(|s| s.min_eig_w).unwrap_or(f64::NAN),
    );
    if !report.all_pass() {
        write_violations(&resolved, &u, &report)?;
        return Err(Failure::Verification(format!(
            "bound checks failed (c0: {}, c1: {}, convexity: {}); see {}",
            report.c0_pass,
            report.c1_pass,
            report.convexity_pass,
            resolved.out_path(&resolved.config.output.violations_csv).display()
        )));
    }
    println!("bounds: all checks pass (slack {slack:.3e})");
    Ok(())
}

fn write_violations(
    resolved: &Resolved,
    u: &hessphere::ScalarField,
    report: &hessphere::BoundsReport,
) -> Result<(), Failure> {
    let rows = collect_violations(u, report);
    let path = resolved.out_path(&resolved.config.output.violations_csv);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_fail)?);
    writeln!(out, "theta,phi,check,violation").map_err(io_fail)?;
    for r in rows {
        writeln!(out, "{},{},{},{}", fmt_f64(r.theta), fmt_f64(r.phi), r.check, fmt_f64(r.violation))
            .map_err(io_fail)?;
    }
    Ok(())
}

fn cmd_eigen(args: &RunArgs) -> Result<(), Failure> {
    let resolved = load(args)?;
    let spec = &resolved.spec;
    if !(spec.p == spec.q && spec.p > 1.0) {
        return Err(Failure::Config(format!(
            "eigen requires p = q > 1 (got p = {}, q = {})",
            spec.p, spec.q
        )));
    }
    echo_config(&resolved, args.seed)?;
    let grid = build_grid(resolved.n_lat).map_err(|e| Failure::Config(e.to_string()))?;
    let result = eigen_solve(
        spec,
        &grid,
        &resolved.settings,
        resolved.n_steps_init,
        &resolved.eps_sequence,
    )
    .map_err(|e| Failure::Solver(e.to_string()))?;

    write_json(&resolved.out_path(&resolved.config.output.eigen_json), &result.to_json())?;
    write_csv_file(
        &result.u_normalized,
        &resolved.out_path(&resolved.config.output.solution_csv),
    )
    .map_err(io_fail)?;
    write_json(&resolved.out_path(&resolved.config.output.trace_json), &result.trace.to_json())?;

    println!(
        "eigen: gamma = {:.8} in [{:.6}, {:.6}], {} path points",
        result.gamma,
        result.bracket.0,
        result.bracket.1,
        result.gamma_sequence.len()
    );

    // the raw solution at the smallest epsilon obeys the u^eps sandwich
    let eps_min = *resolved.eps_sequence.last().expect("validated non-empty");
    let eps_spec = spec.with_epsilon(eps_min);
    let scale = result.gamma_sequence.last().map(|&(e, g)| g.powf(1.0 / e)).unwrap();
    let u_raw = result.u_normalized.scaled(scale);
    let slack = default_slack(resolved.n_lat);
    let report =
        check_bounds(&u_raw, &eps_spec, slack).map_err(|e| Failure::Solver(e.to_string()))?;
    write_json(&resolved.out_path(&resolved.config.output.bounds_json), &report.to_json())?;
    if !report.all_pass() {
        write_violations(&resolved, &u_raw, &report)?;
        return Err(Failure::Verification(format!(
            "bound checks failed on the smallest-epsilon solution (c0: {}, c1: {}, convexity: {})",
            report.c0_pass, report.c1_pass, report.convexity_pass
        )));
    }
    println!("bounds: all checks pass at eps = {eps_min}");
    Ok(())
}

fn cmd_check(args: &RunArgs) -> Result<(), Failure> {
    let resolved = load(args)?;
    echo_config(&resolved, args.seed)?;
    let grid = build_grid(resolved.n_lat).map_err(|e| Failure::Config(e.to_string()))?;
    let phi =
        resolved.spec.phi_field(&grid).map_err(|e| Failure::Config(e.to_string()))?;
    let report = check_assumption(&phi, &resolved.spec, resolved.tol_assume);
    write_json(
        &resolved.out_path(&resolved.config.output.assumption_json),
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    println!(
        "assumption: case {}, min eigenvalue {:.6e} (tolerance {:.3e}) -> {}",
        report.case_tag,
        report.min_eig,
        report.tol_assume,
        if report.satisfied { "satisfied" } else { "NOT satisfied" }
    );
    if report.satisfied {
        Ok(())
    } else {
        Err(Failure::Verification("curvature condition on phi not satisfied".into()))
    }
}

fn cmd_export(args: &RunArgs) -> Result<(), Failure> {
    let resolved = load(args)?;
    echo_config(&resolved, args.seed)?;
    let csv_path = resolved.out_path(&resolved.config.output.solution_csv);
    let u = read_csv_file(&csv_path)
        .map_err(|e| Failure::Config(format!("{}: {e}", csv_path.display())))?;
    let surface = embed(&u).map_err(|e| Failure::Verification(e.to_string()))?;
    let obj_path = resolved.out_path(&resolved.config.output.surface_obj);
    export_obj(&surface, &obj_path).map_err(io_fail)?;
    let k_min = surface.gauss.iter().cloned().fold(f64::INFINITY, f64::min);
    let k_max = surface.gauss.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "export: {} vertices -> {} (Gauss curvature in [{:.6}, {:.6}])",
        surface.points.len() + 2,
        obj_path.display(),
        k_min,
        k_max
    );
    Ok(())
}

fn cmd_props(args: &RunArgs) -> Result<(), Failure> {
    let resolved = load(args)?;
    echo_config(&resolved, args.seed)?;
    let report = property_suite(args.seed, 10_000, 8);
    write_json(
        &resolved.out_path(&resolved.config.output.props_json),
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    let mut ok = true;
    for check in &report.checks {
        println!(
            "props: {:<32} {:>7} samples  max err {:.3e}  {}",
            check.name,
            check.samples,
            check.max_err,
            if check.pass { "pass" } else { "FAIL" }
        );
        if !check.pass {
            ok = false;
            if let Some(w) = &check.counterexample {
                println!("  counterexample: {w}");
            }
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification("sigma_k property suite found a violation".into()))
    }
}
