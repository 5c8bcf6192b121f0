//! Solution files: `solution.json` (potential, diagnostics, history) next to
//! `grid.csv` (cell centers, `phi`, `rho`), plus `verification.json`.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{GridDensity, GridSpec};
use crate::measure::DiscreteMeasure;
use crate::potential::PiecewiseAffinePotential;
use crate::solver::{Diagnostics, IterationRecord, SolveReport, Solution, Timing};
use crate::verification::VerificationReport;
use crate::{Error, Result};

pub const SOLUTION_SCHEMA: &str = "qmm-solution-v1";
pub const SOLUTION_FILE: &str = "solution.json";
pub const GRID_FILE: &str = "grid.csv";
pub const VERIFICATION_FILE: &str = "verification.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionFile {
    schema: String,
    dimension: usize,
    q: f64,
    converged: bool,
    outside_existence_theory: bool,
    grid: GridSpec,
    target: DiscreteMeasure,
    potential: PiecewiseAffinePotential,
    diagnostics: Diagnostics,
    history: Vec<IterationRecord>,
    timing: Timing,
}

fn out_dir(dir: &Path) -> Result<()> {
    if dir.as_os_str().is_empty() {
        return Err(Error::Io(io::Error::new(io::ErrorKind::NotFound, "empty output path")));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// The JSON document written to `solution.json`.
pub fn solution_json(report: &SolveReport) -> Result<String> {
    let s = &report.solution;
    let file = SolutionFile {
        schema: SOLUTION_SCHEMA.into(),
        dimension: s.dimension,
        q: s.q,
        converged: s.converged,
        outside_existence_theory: s.outside_existence_theory,
        grid: s.grid().clone(),
        target: s.target.clone(),
        potential: s.potential.clone(),
        diagnostics: report.diagnostics.clone(),
        history: report.history.clone(),
        timing: report.timing.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

pub fn write_grid_csv<W: Write>(solution: &Solution, writer: W) -> Result<()> {
    let grid = solution.grid();
    let n = grid.dim();
    let phi = solution.phi_values();
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..n).map(|a| format!("x{}", a + 1)).collect();
    header.extend(["phi".into(), "rho".into()]);
    w.write_record(&header)?;
    let mut x = vec![0.0; n];
    for (cell, rho) in solution.density.values().iter().enumerate() {
        grid.cell_center(cell, &mut x);
        let mut row: Vec<String> = x.iter().map(|c| format!("{c:?}")).collect();
        row.push(format!("{:?}", phi[cell]));
        row.push(format!("{rho:?}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `solution.json` and `grid.csv` into `dir`; returns the JSON path.
pub fn export_solution(report: &SolveReport, dir: &Path) -> Result<PathBuf> {
    out_dir(dir)?;
    let json = dir.join(SOLUTION_FILE);
    fs::write(&json, solution_json(report)?)?;
    let mut csv = BufWriter::new(File::create(dir.join(GRID_FILE))?);
    write_grid_csv(&report.solution, &mut csv)?;
    csv.flush()?;
    Ok(json)
}

pub fn write_verification(report: &VerificationReport, dir: &Path) -> Result<PathBuf> {
    out_dir(dir)?;
    let path = dir.join(VERIFICATION_FILE);
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Load a report from `solution.json` (or its directory) and the adjacent `grid.csv`.
pub fn load_solution(path: &Path) -> Result<SolveReport> {
    let json = if path.is_dir() { path.join(SOLUTION_FILE) } else { path.to_path_buf() };
    let file: SolutionFile = serde_json::from_reader(BufReader::new(File::open(&json)?))?;
    if file.schema != SOLUTION_SCHEMA {
        return Err(Error::Format(format!("unsupported schema '{}'", file.schema)));
    }
    let dir = json.parent().unwrap_or(Path::new("."));
    let grid = file.grid.clone();
    let density = GridDensity::read_csv(grid, BufReader::new(File::open(dir.join(GRID_FILE))?), "rho")?;
    Ok(SolveReport {
        solution: Solution {
            dimension: file.dimension,
            q: file.q,
            target: file.target,
            potential: file.potential,
            density,
            converged: file.converged,
            outside_existence_theory: file.outside_existence_theory,
        },
        diagnostics: file.diagnostics,
        history: file.history,
        timing: file.timing,
    })
}
