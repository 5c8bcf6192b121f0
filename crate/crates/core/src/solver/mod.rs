//! Alternating minimization of `J(ρ) = F(ρ) + T(ρ, μ)`.
//!
//! Each outer step solves the semi-discrete dual for the current density,
//! pins `c` by unit mass, forms `ρ* = (u - c)^{-(n+q)}` and moves toward it
//! with a damping factor chosen by backtracking on `J`. Before damping, a
//! descent on the offsets of the reduced objective (see [`reduced`]) proposes
//! a candidate that is accepted under the same descent test.
//!
//! Grid values of `u` are exact cell averages, so that `int u dρ` of a
//! piecewise-constant density is the same sum that defines `T`.

mod extension;
mod reduced;

use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::functionals::{eval_f, FunctionalValues};
use crate::grid::{GridDensity, GridSpec};
use crate::laguerre::{cell_averages, laguerre_moments};
use crate::measure::DiscreteMeasure;
use crate::numeric::{norm, par_sum};
use crate::potential::PiecewiseAffinePotential;
use crate::problem::{ProblemSpec, SolverOptions};
use crate::transport::{semi_discrete_dual, total_variation, DualSolveResult};
use crate::{Error, Result};

pub use extension::{whole_space_extension, WholeSpaceValues};
use reduced::reduced_descent;

/// Unit-mass tolerance for `normalize_c`.
pub const MASS_EQUATION_TOLERANCE: f64 = 1e-10;
/// Slack allowed in the descent test on `J`.
pub const DESCENT_SLACK: f64 = 1e-9;
/// Densities below this fraction of the maximum count as zero in the residual.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// The converged (or last) iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub dimension: usize,
    pub q: f64,
    pub target: DiscreteMeasure,
    /// Offsets, slopes and `c`; `φ = u - c`.
    pub potential: PiecewiseAffinePotential,
    pub density: GridDensity,
    pub converged: bool,
    pub outside_existence_theory: bool,
}

impl Solution {
    pub fn grid(&self) -> &GridSpec {
        self.density.spec()
    }

    pub fn exponent(&self) -> f64 {
        self.dimension as f64 + self.q
    }

    /// `φ = u - c` averaged over every cell.
    pub fn phi_values(&self) -> Vec<f64> {
        potential_values(self.grid(), &self.potential)
            .into_iter()
            .map(|u| u - self.potential.c())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub c: f64,
    pub residual: f64,
    pub pushforward_tv: f64,
    /// Damping factor accepted after this iterate (0 on the last one).
    pub damping: f64,
    /// The step came from the reduced-objective descent.
    pub reduced_step: bool,
    pub dual_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub pushforward_tv: f64,
    pub dual_gap: f64,
    /// Functional values of the final density on the grid box.
    pub values: FunctionalValues,
    /// Mass of `(u - c)^{-(n+q)}` outside the box, `c` fixed on the whole space.
    pub tail_mass: Option<f64>,
    pub whole_space: Option<WholeSpaceValues>,
    pub half_width: f64,
    pub grid_enlarged: bool,
    pub notes: Vec<String>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub dual: f64,
    pub density: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Solution,
    pub diagnostics: Diagnostics,
    pub history: Vec<IterationRecord>,
    pub timing: Timing,
}

/// Exact average of `u` over every cell.
pub(crate) fn potential_values(spec: &GridSpec, u: &PiecewiseAffinePotential) -> Vec<f64> {
    cell_averages(spec, u)
}

/// Find `c` with `sum (u_i - c)^{-p} w_i + extra(c) = 1`, where `u_i` are
/// values with quadrature weights `w_i`. The mass is decreasing in `min u - c`,
/// so bisection runs on `log(min u - c)`.
pub(crate) fn solve_mass_equation<M>(u_min: f64, u_spread: f64, mass: M) -> Result<f64>
where
    M: Fn(f64) -> f64,
{
    let eps = 1e-12 * if u_spread > 0.0 { u_spread } else { u_min.abs() + 1.0 };
    let top = mass(u_min - eps);
    if !(top >= 1.0) {
        return Err(Error::MassUnreachable { mass: top });
    }
    let mut d_hi = 1.0f64;
    while mass(u_min - d_hi) > 1.0 {
        d_hi *= 2.0;
        if !d_hi.is_finite() {
            return Err(Error::Domain("mass equation has no root".into()));
        }
    }
    let (mut lo, mut hi) = (eps.ln(), d_hi.ln());
    let mut best = (f64::INFINITY, u_min - d_hi);
    for _ in 0..400 {
        let t = 0.5 * (lo + hi);
        let c = u_min - t.exp();
        let m = mass(c);
        let err = (m - 1.0).abs();
        if err < best.0 {
            best = (err, c);
        }
        if err <= MASS_EQUATION_TOLERANCE {
            return Ok(c);
        }
        if m > 1.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    debug!("mass equation stopped at error {:e}", best.0);
    Ok(best.1)
}

/// The constant `c < min u` with `int_grid (u - c)^{-(n+q)} = 1`.
pub fn normalize_c(u: &PiecewiseAffinePotential, grid: &GridSpec, n: usize, q: f64) -> Result<f64> {
    let values = potential_values(grid, u);
    normalize_c_values(&values, grid.cell_volume(), n as f64 + q)
}

pub(crate) fn normalize_c_values(values: &[f64], vol: f64, p: f64) -> Result<f64> {
    let (lo, hi) = min_max(values);
    solve_mass_equation(lo, hi - lo, |c| {
        vol * par_sum(values.len(), |i| (values[i] - c).powf(-p))
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// `ρ = (u - c)^{-(n+q)}` cellwise, renormalized.
pub fn density_update(
    u: &PiecewiseAffinePotential,
    c: f64,
    grid: &GridSpec,
    n: usize,
    q: f64,
) -> Result<GridDensity> {
    let p = n as f64 + q;
    let values = potential_values(grid, u)
        .into_iter()
        .map(|v| (v - c).powf(-p))
        .collect();
    GridDensity::new(grid.clone(), values)?.normalized()
}

/// `max |φ - ρ^{-1/(n+q)}| / (|c| + 1)` over cells with `ρ > floor * max ρ`.
/// This is `|u + f'(ρ) - c|` since `f'(ρ) = -ρ^{α - 1}`.
pub fn relative_residual(phi: &[f64], rho: &[f64], p: f64, c: f64) -> f64 {
    let floor = DENSITY_FLOOR * rho.iter().fold(0.0f64, |a, &b| a.max(b));
    phi.iter()
        .zip(rho)
        .filter(|(_, r)| **r > floor)
        .map(|(f, r)| (f - r.powf(-1.0 / p)).abs())
        .fold(0.0, f64::max)
        / (c.abs() + 1.0)
}

/// `Z (1 + |x - center|)^{-(n+q)}`.
pub fn initial_density(grid: &GridSpec, p: f64) -> Result<GridDensity> {
    let center = grid.center.clone();
    GridDensity::from_fn(grid.clone(), |x| {
        let d: Vec<f64> = x.iter().zip(&center).map(|(a, b)| a - b).collect();
        (1.0 + norm(&d)).powf(-p)
    })?
    .normalized()
}

fn mix(a: &GridDensity, b: &GridDensity, theta: f64) -> Result<GridDensity> {
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (1.0 - theta) * x + theta * y)
        .collect();
    GridDensity::new(a.spec().clone(), values)?.normalized()
}

/// Solve the problem described by `spec`.
///
/// On `MassUnreachable` the box is doubled once. An iteration cap or a
/// stalled line search yields `Error::Nonconvergence` carrying the last
/// report.
pub fn solve(spec: &ProblemSpec) -> Result<SolveReport> {
    let validation = spec.validate()?;
    let mu = spec.prepared_target();
    let mut grid = spec.grid_spec()?;
    let mut enlarged = false;
    let mut report = loop {
        match run(spec, &mu, &grid) {
            Err(Error::MassUnreachable { mass }) if !enlarged => {
                warn!("unit mass unreachable (mass {mass:e}); doubling the box");
                grid.half_width.iter_mut().for_each(|r| *r *= 2.0);
                enlarged = true;
            }
            other => break other?,
        }
    };
    report.diagnostics.grid_enlarged = enlarged;
    if validation.outside_existence_theory {
        report.solution.outside_existence_theory = true;
        report
            .diagnostics
            .notes
            .push("outside existence theory: q <= 1".into());
    }
    if report.solution.converged {
        Ok(report)
    } else {
        Err(Error::Nonconvergence(Box::new(report)))
    }
}

struct Iterate {
    rho: GridDensity,
    dual: DualSolveResult,
    f: f64,
}

impl Iterate {
    fn new(rho: GridDensity, mu: &DiscreteMeasure, opts: &SolverOptions, alpha: f64, warm: Option<&[f64]>) -> Result<Self> {
        let dual = semi_discrete_dual(&rho, mu, &opts.dual, warm)?;
        let f = eval_f(&rho, alpha);
        Ok(Self { rho, dual, f })
    }

    fn j(&self) -> f64 {
        self.f + self.dual.dual
    }
}

fn run(spec: &ProblemSpec, mu: &DiscreteMeasure, grid: &GridSpec) -> Result<SolveReport> {
    let start = Instant::now();
    let opts = &spec.solver;
    let n = spec.dimension;
    let (q, p, alpha) = (spec.q, spec.exponent(), spec.alpha());
    let mut timing = Timing::default();
    let mut history = Vec::new();

    let clock = Instant::now();
    let mut cur = Iterate::new(initial_density(grid, p)?, mu, opts, alpha, None)?;
    timing.dual += clock.elapsed().as_secs_f64();

    let mut converged = None;
    let mut last = None;
    for k in 0..opts.max_iterations {
        let clock = Instant::now();
        let mut u = cur.dual.potential.clone();
        let c = normalize_c(&u, grid, n, q)?;
        u.set_c(c);
        let u_values = potential_values(grid, &u);
        let phi: Vec<f64> = u_values.iter().map(|v| v - c).collect();
        let residual = relative_residual(&phi, cur.rho.values(), p, c);
        let star_values: Vec<f64> = phi.iter().map(|f| f.powf(-p)).collect();
        let star = GridDensity::new(grid.clone(), star_values)?;
        let masses = laguerre_moments(grid, star.values(), &u).mass;
        let tv = total_variation(&masses, mu.weights());
        timing.density += clock.elapsed().as_secs_f64();

        let mut record = IterationRecord {
            iteration: k,
            j: cur.j(),
            f: cur.f,
            t: cur.dual.dual,
            c,
            residual,
            pushforward_tv: tv,
            damping: 0.0,
            reduced_step: false,
            dual_iterations: cur.dual.iterations,
        };
        debug!("iteration {k}: J = {}, residual {residual:e}, TV {tv:e}", record.j);
        if residual <= opts.tolerance && tv <= opts.tv_tolerance {
            history.push(record);
            converged = Some((u, star, residual, tv));
            break;
        }

        let clock = Instant::now();
        let mut accepted = None;
        let mut theta = 1.0;
        match reduced_descent(grid, mu, p, &u, &opts.dual) {
            Ok(r) => {
                let trial = Iterate::new(
                    GridDensity::new(grid.clone(), r.density)?.normalized()?,
                    mu,
                    opts,
                    alpha,
                    Some(r.potential.offsets()),
                )?;
                if trial.j() <= cur.j() + DESCENT_SLACK {
                    record.reduced_step = true;
                    accepted = Some(trial);
                } else {
                    debug!("reduced step rejected: J {} -> {}", cur.j(), trial.j());
                }
            }
            Err(e) => debug!("reduced descent failed: {e}"),
        }
        let normalized = star.clone().normalized()?;
        if accepted.is_none() {
            theta = opts.initial_damping;
        }
        while accepted.is_none() && theta >= opts.min_damping {
            let trial = Iterate::new(
                mix(&cur.rho, &normalized, theta)?,
                mu,
                opts,
                alpha,
                Some(cur.dual.potential.offsets()),
            )?;
            if trial.j() <= cur.j() + DESCENT_SLACK {
                accepted = Some(trial);
                break;
            }
            theta *= 0.5;
        }
        timing.dual += clock.elapsed().as_secs_f64();
        last = Some((u, star, residual, tv));
        match accepted {
            Some(next) => {
                record.damping = theta;
                history.push(record);
                cur = next;
            }
            None => {
                history.push(record);
                warn!("line search stalled at iteration {k}");
                break;
            }
        }
    }

    let is_converged = converged.is_some();
    let (potential, density, residual, tv) = match converged.or(last) {
        Some(state) => state,
        None => {
            // no iteration ran: report the initial iterate
            let mut u = cur.dual.potential.clone();
            let c = normalize_c(&u, grid, n, q)?;
            u.set_c(c);
            let phi: Vec<f64> = potential_values(grid, &u).iter().map(|v| v - c).collect();
            let residual = relative_residual(&phi, cur.rho.values(), p, c);
            let tv = cur.dual.pushforward_tv(mu);
            (u, cur.rho.clone(), residual, tv)
        }
    };

    // T of the reported density: its own dual solve, warm-started.
    let clock = Instant::now();
    let final_dual = semi_discrete_dual(&density, mu, &opts.dual, Some(potential.offsets()))?;
    timing.dual += clock.elapsed().as_secs_f64();
    let f = eval_f(&density, alpha);
    let m1 = density.first_moment();
    let mut values = FunctionalValues::new(f, final_dual.dual, m1);
    if q > 1.0 {
        values = values.with_lower_bound(n, q);
    }
    let whole = whole_space_extension(&potential, grid, mu, n, q)?;
    timing.total = start.elapsed().as_secs_f64();
    info!(
        "solve finished: converged = {is_converged}, {} iterations, J = {}",
        history.len(),
        values.j
    );
    Ok(SolveReport {
        solution: Solution {
            dimension: n,
            q,
            target: mu.clone(),
            potential,
            density,
            converged: is_converged,
            outside_existence_theory: false,
        },
        diagnostics: Diagnostics {
            iterations: history.len(),
            residual,
            pushforward_tv: tv,
            dual_gap: final_dual.gap(),
            values,
            tail_mass: whole.as_ref().map(|w| w.tail_mass),
            whole_space: whole,
            half_width: grid.half_width[0],
            grid_enlarged: false,
            notes: Vec::new(),
        },
        history,
        timing,
    })
}
