use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qmm_core::export::{export_solution, load_solution, write_verification};
use qmm_core::hemisphere::{
    anchor_diagnostics, build_surface, convex_hull, export_mesh, local_convexity_check, mesh_format, vertex_identity_error,
    Polygon2D,
};
use qmm_core::oracle::oracle;
use qmm_core::problem::ProblemSpec;
use qmm_core::solver::{solve, SolveReport};
use qmm_core::verification::{verify, VerificationReport, VerifyOptions};
use qmm_core::Error;

const CONFIG_SCHEMA: &str = "qmm-config-v1";

/// Exit codes.
const OK: u8 = 0;
const FAILURE: u8 = 1;
const NOT_CONVERGED: u8 = 2;
const CHECKS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "qmm", version, about = "q-moment measure solver")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for randomized checks (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem in a config file and write solution, grid and verification files.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all checks on a solution file or directory.
    Verify {
        solution: PathBuf,
        /// Config whose `verification` options are used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for verification.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a reference oracle (lp, quantile1d, cmu) on an instance file.
    Oracle { kind: String, instance: PathBuf },
    /// Export the q = 2 surface {(x/phi, 1/phi)} as a mesh.
    Hemisphere {
        solution: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "obj")]
        format: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    schema: String,
    problem: ProblemSpec,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default = "yes")]
    verify: bool,
    #[serde(default)]
    verification: VerifyOptions,
    #[serde(default)]
    seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("qmm-out")
}

fn yes() -> bool {
    true
}

fn read_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    if cfg.schema != CONFIG_SCHEMA {
        bail!("unsupported config schema '{}' (expected '{CONFIG_SCHEMA}')", cfg.schema);
    }
    Ok(cfg)
}

fn emit(json_mode: bool, value: &Value) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
    }
}

fn print_checks(report: &VerificationReport) {
    println!("{:<26} {:>14} {:>14}  result", "check", "value", "slack");
    for c in &report.checks {
        println!(
            "{:<26} {:>14.6e} {:>14.6e}  {}",
            c.check,
            c.value,
            c.slack,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
}

fn summary(report: &SolveReport) -> Value {
    let d = &report.diagnostics;
    json!({
        "converged": report.solution.converged,
        "iterations": d.iterations,
        "J": d.values.j,
        "F": d.values.f,
        "T": d.values.t,
        "c": report.solution.potential.c(),
        "residual": d.residual,
        "pushforward_tv": d.pushforward_tv,
        "whole_space": d.whole_space,
        "notes": d.notes,
    })
}

fn cmd_solve(cli: &Cli, config: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = read_config(config)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.clone());
    let mut vopts = cfg.verification;
    vopts.seed = cli.seed.unwrap_or(cfg.seed);

    let (report, code) = match solve(&cfg.problem) {
        Ok(r) => (r, OK),
        Err(Error::Nonconvergence(r)) => (*r, NOT_CONVERGED),
        Err(e) => return Err(e.into()),
    };
    let path = export_solution(&report, &dir)?;
    info!("wrote {}", path.display());

    let mut out = summary(&report);
    out["solution"] = json!(path);
    if cfg.verify && code == OK {
        let v = verify(&report, &vopts)?;
        write_verification(&v, &dir)?;
        out["verification_passed"] = json!(v.passed());
        if !cli.json {
            print_checks(&v);
        }
    }
    if cli.json {
        emit(true, &out);
    } else {
        let d = &report.diagnostics;
        println!(
            "{} after {} iterations: J = {:.6}  F = {:.6}  T = {:.6}  residual = {:.2e}  TV = {:.2e}",
            if code == OK { "converged" } else { "NOT converged" },
            d.iterations,
            d.values.j,
            d.values.f,
            d.values.t,
            d.residual,
            d.pushforward_tv
        );
        if let Some(w) = &d.whole_space {
            if let (Some(f), Some(t), Some(j)) = (w.f, w.t, w.j) {
                println!("whole space: J = {j:.6}  F = {f:.6}  T = {t:.6}  tail mass = {:.2e}", w.tail_mass);
            }
        }
        for n in &d.notes {
            println!("note: {n}");
        }
        println!("solution written to {}", path.display());
    }
    Ok(code)
}

fn cmd_verify(cli: &Cli, solution: &Path, config: Option<&Path>, out: Option<&Path>) -> anyhow::Result<u8> {
    let report = load_solution(solution).with_context(|| format!("cannot load solution {}", solution.display()))?;
    let mut vopts = match config {
        Some(c) => {
            let cfg = read_config(c)?;
            let mut o = cfg.verification;
            o.seed = cfg.seed;
            o
        }
        None => VerifyOptions::default(),
    };
    if let Some(s) = cli.seed {
        vopts.seed = s;
    }
    let v = verify(&report, &vopts)?;
    if let Some(dir) = out {
        write_verification(&v, dir)?;
    }
    if cli.json {
        emit(true, &serde_json::to_value(&v)?);
    } else {
        print_checks(&v);
    }
    Ok(if v.passed() { OK } else { CHECKS_FAILED })
}

fn cmd_oracle(kind: &str, instance: &Path) -> anyhow::Result<u8> {
    let o = oracle(kind)?;
    let text = fs::read_to_string(instance).with_context(|| format!("cannot read instance {}", instance.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("invalid instance {}", instance.display()))?;
    let out = o.run(&value)?;
    // oracle output is always JSON
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(OK)
}

fn cmd_hemisphere(cli: &Cli, solution: &Path, out: &Path, format: &str) -> anyhow::Result<u8> {
    mesh_format(format)?;
    let report = load_solution(solution).with_context(|| format!("cannot load solution {}", solution.display()))?;
    let mesh = build_surface(&report)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    export_mesh(&mesh, out, format)?;
    let mut result = json!({
        "path": out,
        "format": format,
        "vertices": mesh.len(),
        "faces": mesh.faces.len(),
        "segments": mesh.segments.len(),
        "identity_error": vertex_identity_error(&mesh, &report),
    });
    if report.solution.dimension == 2 {
        let seed = cli.seed.unwrap_or(0);
        if let Ok(c) = local_convexity_check(&mesh, &report, 1000, seed, 1e-6) {
            result["local_convexity"] = serde_json::to_value(c)?;
        }
        let mu = &report.solution.target;
        let atoms: Vec<[f64; 2]> = mu.atoms().map(|(y, _)| [y[0], y[1]]).collect();
        if let Ok(l) = Polygon2D::new(convex_hull(&atoms)) {
            match anchor_diagnostics(&l, mu, &report) {
                Ok(a) => result["anchor"] = serde_json::to_value(a)?,
                Err(e) => result["anchor_error"] = json!(e.to_string()),
            }
        }
    }
    if cli.json {
        emit(true, &result);
    } else {
        println!(
            "wrote {} vertices, {} faces, {} segments to {}",
            mesh.len(),
            mesh.faces.len(),
            mesh.segments.len(),
            out.display()
        );
        for key in ["local_convexity", "anchor", "anchor_error"] {
            if let Some(v) = result.get(key) {
                println!("{key}: {v}");
            }
        }
    }
    Ok(OK)
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("cannot configure thread pool")?;
    }
    match &cli.command {
        Command::Solve { config, out } => cmd_solve(cli, config, out.as_deref()),
        Command::Verify { solution, config, out } => cmd_verify(cli, solution, config.as_deref(), out.as_deref()),
        Command::Oracle { kind, instance } => cmd_oracle(kind, instance),
        Command::Hemisphere { solution, out, format } => cmd_hemisphere(cli, solution, out, format),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("QMM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = format!("{e:#}");
            if cli.json {
                emit(true, &json!({ "error": msg }));
            }
            eprintln!("error: {msg}");
            ExitCode::from(FAILURE)
        }
    }
}
