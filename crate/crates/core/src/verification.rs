//! Independent checks of a solution: the lower bound on `T`, the inequality
//! relating `φ` and `ρ`, displacement convexity along 1D geodesics, the
//! optimality residual, and random competitor spot checks.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::functionals::{alpha, eval_f, lower_bound_f};
use crate::grid::{GridDensity, MASS_TOLERANCE};
use crate::laguerre::laguerre_moments;
use crate::measure::DiscreteMeasure;
use crate::numeric::{dot, par_sum, weighted_median_deviation};
use crate::quadrature::sphere_directions;
use crate::solver::{whole_space_extension, SolveReport, Solution, DENSITY_FLOOR};
use crate::transport::{
    lp_max_correlation, semi_discrete_dual, total_variation, DualOptions, Quantile,
};
use crate::{Error, Result};

/// Mean absolute deviation of `y . e` about its weighted median.
fn spread(mu: &DiscreteMeasure, e: &[f64]) -> f64 {
    let z: Vec<f64> = mu.atoms().map(|(y, _)| dot(y, e)).collect();
    weighted_median_deviation(&z, mu.weights()).1
}

fn polar_direction(n: usize, angles: &[f64]) -> Vec<f64> {
    match n {
        2 => vec![angles[0].cos(), angles[0].sin()],
        _ => {
            let (t, p) = (angles[0], angles[1]);
            vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
        }
    }
}

struct Spread<'a> {
    mu: &'a DiscreteMeasure,
}

impl CostFunction for Spread<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, angles: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(spread(self.mu, &polar_direction(self.mu.dim(), angles)))
    }
}

fn refine(mu: &DiscreteMeasure, start: Vec<f64>, step: f64) -> Option<f64> {
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).ok()?;
    let res = Executor::new(Spread { mu }, solver)
        .configure(|s| s.max_iters(400))
        .run()
        .ok()?;
    res.state.best_cost.is_finite().then_some(res.state.best_cost)
}

/// `c(μ) = 1/(2n) inf_{e, l} int |y . e - l| dμ`.
///
/// Exact in one dimension; otherwise a direction grid (1 degree in the
/// plane, 512 sphere points in space) followed by Nelder-Mead.
pub fn c_mu(mu: &DiscreteMeasure) -> f64 {
    let n = mu.dim();
    let best = match n {
        1 => spread(mu, &[1.0]),
        2 => {
            let (mut best, mut at) = (f64::INFINITY, 0.0);
            for k in 0..180 {
                let t = (k as f64).to_radians();
                let v = spread(mu, &[t.cos(), t.sin()]);
                if v < best {
                    best = v;
                    at = t;
                }
            }
            refine(mu, vec![at], 1f64.to_radians()).map_or(best, |r| r.min(best))
        }
        _ => {
            let (mut best, mut at) = (f64::INFINITY, vec![0.0, 0.0]);
            for (e, _) in sphere_directions(3, 512).unwrap_or_default() {
                let v = spread(mu, &e);
                if v < best {
                    best = v;
                    at = vec![e[2].clamp(-1.0, 1.0).acos(), e[1].atan2(e[0])];
                }
            }
            refine(mu, at, 0.05).map_or(best, |r| r.min(best))
        }
    };
    best / (2.0 * n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TLowerBound {
    pub c_mu: f64,
    /// First moment of ρ about its barycenter.
    pub m1: f64,
    pub t: f64,
    pub slack: f64,
}

/// Slack of `T >= c(μ) M_1(ρ)`. `T` is translation invariant for centered μ,
/// so `M_1` is taken about the barycenter of ρ.
pub fn check_t_lower_bound(rho: &GridDensity, mu: &DiscreteMeasure, t: f64) -> TLowerBound {
    let c = c_mu(mu);
    let m1 = rho.centered_first_moment();
    TLowerBound {
        c_mu: c,
        m1,
        t,
        slack: t - c * m1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B1Check {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Whether the sides were integrated over the whole space or only the box.
    pub whole_space: bool,
}

/// Both sides of `n/(n+q-1) int φ^{-(n+q-1)} >= int x . grad φ dρ` over the
/// grid box, with `grad φ` the slope of the maximizing piece.
pub fn b1_on_box(solution: &Solution) -> B1Check {
    let n = solution.dimension;
    let p = solution.exponent();
    let grid = solution.grid();
    let phi = solution.phi_values();
    let lhs = n as f64 / (p - 1.0) * grid.cell_volume() * par_sum(phi.len(), |i| phi[i].powf(1.0 - p));
    let rhs = laguerre_moments(grid, solution.density.values(), &solution.potential)
        .correlation(&solution.potential);
    B1Check {
        lhs,
        rhs,
        slack: lhs - rhs,
        whole_space: false,
    }
}

/// The inequality on the whole space when the extension exists, else on the box.
pub fn check_b1(solution: &Solution) -> Result<B1Check> {
    let ext = whole_space_extension(
        &solution.potential,
        solution.grid(),
        &solution.target,
        solution.dimension,
        solution.q,
    )?;
    if let Some((lhs, rhs)) = ext.and_then(|w| w.b1_lhs.zip(w.b1_rhs)) {
        return Ok(B1Check {
            lhs,
            rhs,
            slack: lhs - rhs,
            whole_space: true,
        });
    }
    Ok(b1_on_box(solution))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub t: Vec<f64>,
    #[serde(rename = "J")]
    pub j: Vec<f64>,
    pub min_second_difference: f64,
    /// `max |J|`, the scale for the tolerance.
    pub scale: f64,
}

fn second_differences(t: Vec<f64>, j: Vec<f64>) -> ConvexityProbe {
    let min = j
        .windows(3)
        .map(|w| w[0] - 2.0 * w[1] + w[2])
        .fold(f64::INFINITY, f64::min);
    let scale = j.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    ConvexityProbe {
        t,
        j,
        min_second_difference: if min.is_finite() { min } else { 0.0 },
        scale,
    }
}

/// `J(ρ_t)` along the quantile geodesic between two one-dimensional
/// densities, at `t = i/k`.
pub fn displacement_convexity_probe(
    rho0: &GridDensity,
    rho1: &GridDensity,
    mu: &DiscreteMeasure,
    q: f64,
    k: usize,
) -> Result<ConvexityProbe> {
    if rho0.dim() != 1 || rho1.dim() != 1 || mu.dim() != 1 {
        return Err(Error::UnsupportedDimension(rho0.dim().max(rho1.dim())));
    }
    let a = alpha(1, q);
    let (q0, q1, qm) = (Quantile::from_grid(rho0)?, Quantile::from_grid(rho1)?, Quantile::from_atoms(mu)?);
    let ts: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    let js = ts
        .iter()
        .map(|&t| {
            let qt = q0.interpolate(&q1, t);
            qt.internal_energy(a) + qt.correlation(&qm)
        })
        .collect();
    Ok(second_differences(ts, js))
}

/// `T(ρ_t, μ)` along the geodesic between two discrete measures, with ρ_t
/// carried by an optimal plan between the endpoints.
pub fn discrete_convexity_probe(
    nu0: &DiscreteMeasure,
    nu1: &DiscreteMeasure,
    mu: &DiscreteMeasure,
    k: usize,
) -> Result<ConvexityProbe> {
    let (plan, _) = lp_max_correlation(nu0, nu1)?;
    let n = nu0.dim();
    let mut ts = Vec::with_capacity(k + 1);
    let mut js = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let t = i as f64 / k as f64;
        let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = plan
            .entries
            .iter()
            .map(|&(a, b, m)| {
                let x: Vec<f64> = (0..n)
                    .map(|d| (1.0 - t) * nu0.atom(a)[d] + t * nu1.atom(b)[d])
                    .collect();
                (x, m)
            })
            .unzip();
        let rho_t = DiscreteMeasure::normalized(n, points, weights)?;
        ts.push(t);
        js.push(lp_max_correlation(&rho_t, mu)?.1);
    }
    Ok(second_differences(ts, js))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProfile {
    /// `u + f'(ρ) - c` per cell; `null` where ρ is below the floor.
    pub per_cell: Vec<Option<f64>>,
    pub max_abs: f64,
    /// `max_abs / (1 + |c|)`.
    pub relative: f64,
    /// Minimum of `u + f'(floor) - c` over cells below the floor.
    pub zero_set_min: Option<f64>,
}

/// Residual of `u + f'(ρ) = c` on `{ρ > floor}` and of `u + f'(ρ) >= c` elsewhere.
pub fn optimality_residual(solution: &Solution) -> ResidualProfile {
    let p = solution.exponent();
    let c = solution.potential.c();
    let phi = solution.phi_values();
    let rho = solution.density.values();
    let floor = DENSITY_FLOOR * rho.iter().fold(0.0f64, |a, &b| a.max(b));
    // f'(t) = -t^{alpha - 1} = -t^{-1/p}
    let f_floor = -floor.powf(-1.0 / p);
    let mut max_abs = 0.0f64;
    let mut zero_set_min: Option<f64> = None;
    let per_cell = phi
        .iter()
        .zip(rho)
        .map(|(&f, &r)| {
            if r > floor {
                let v = f - r.powf(-1.0 / p);
                max_abs = max_abs.max(v.abs());
                Some(v)
            } else {
                let v = f + f_floor;
                zero_set_min = Some(zero_set_min.map_or(v, |m| m.min(v)));
                None
            }
        })
        .collect();
    ResidualProfile {
        per_cell,
        max_abs,
        relative: max_abs / (1.0 + c.abs()),
        zero_set_min,
    }
}

/// `1/2 sum_j |ρ(cell_j) - μ_j|` with the cells of the solution potential.
pub fn pushforward_tv(solution: &Solution) -> f64 {
    let m = laguerre_moments(solution.grid(), solution.density.values(), &solution.potential).mass;
    total_variation(&m, solution.target.weights())
}

/// `F + T` of a grid density, with `T` from a semi-discrete solve.
pub fn objective(rho: &GridDensity, mu: &DiscreteMeasure, q: f64, opts: &DualOptions, warm: Option<&[f64]>) -> Result<f64> {
    let t = semi_discrete_dual(rho, mu, opts, warm)?.dual;
    Ok(eval_f(rho, alpha(rho.dim(), q)) + t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyCheck {
    #[serde(rename = "J_solution")]
    pub j_solution: f64,
    /// `J(competitor) - J(solution)` per competitor.
    pub gaps: Vec<f64>,
    pub min_gap: f64,
}

/// Random compactly supported competitor on the solution grid: either a
/// perturbation of the solution cut to a ball, or a sum of tent bumps.
pub fn random_competitor(solution: &Solution, rng: &mut impl Rng, index: usize) -> Result<GridDensity> {
    let grid = solution.grid().clone();
    let n = grid.dim();
    let r_box = grid.half_width.iter().cloned().fold(f64::INFINITY, f64::min);
    let center = grid.center.clone();
    let dist = move |x: &[f64]| -> f64 {
        x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    if index % 2 == 0 {
        let cut = r_box * rng.gen_range(0.5..0.95);
        let eps = rng.gen_range(0.01..0.3);
        let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let phase = rng.gen_range(0.0..2.0 * PI);
        let shift: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let base = &solution.density;
        let values = (0..grid.cell_count())
            .map(|cell| {
                let mut x = vec![0.0; n];
                grid.cell_center(cell, &mut x);
                if dist(&x) > cut {
                    return 0.0;
                }
                let wave = (dot(&freq, &x) + phase).sin();
                let tilt = 1.0 + dot(&shift, &x) / (1.0 + dist(&x));
                base.values()[cell] * (1.0 + eps * wave).max(0.0) * tilt.max(0.0)
            })
            .collect();
        GridDensity::new(grid.clone(), values)?.normalized()
    } else {
        let bumps = rng.gen_range(1..4);
        let specs: Vec<(Vec<f64>, f64, f64)> = (0..bumps)
            .map(|_| {
                let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3) * r_box.min(10.0)).collect();
                (c, rng.gen_range(0.3..0.3 * r_box.min(20.0)), rng.gen_range(0.2..1.0))
            })
            .collect();
        GridDensity::from_fn(grid, |x| {
            specs
                .iter()
                .map(|(c, w, h)| {
                    let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    h * (1.0 - d / w).max(0.0)
                })
                .sum()
        })?
        .normalized()
    }
}

/// `J(ρ) - J(ρ̄)` for `count` random competitors on the solution grid.
pub fn sufficiency_spot_check(solution: &Solution, count: usize, seed: u64) -> Result<SufficiencyCheck> {
    let opts = DualOptions::default();
    let q = solution.q;
    let warm = Some(solution.potential.offsets());
    let j_solution = objective(&solution.density, &solution.target, q, &opts, warm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = Vec::with_capacity(count);
    for i in 0..count {
        let rho = random_competitor(solution, &mut rng, i)?;
        gaps.push(objective(&rho, &solution.target, q, &opts, warm)? - j_solution);
    }
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SufficiencyCheck {
        j_solution,
        gaps,
        min_gap,
    })
}

/// `(J(ρ_t) - J(ρ̄)) / t` at `t = 1/k` along quantile geodesics from the
/// one-dimensional solution to each target.
pub fn forward_differences(solution: &Solution, targets: &[GridDensity], k: usize) -> Result<Vec<f64>> {
    if solution.dimension != 1 {
        return Err(Error::UnsupportedDimension(solution.dimension));
    }
    let a = alpha(1, solution.q);
    let q0 = Quantile::from_grid(&solution.density)?;
    let qm = Quantile::from_atoms(&solution.target)?;
    let j0 = q0.internal_energy(a) + q0.correlation(&qm);
    let t = 1.0 / k as f64;
    targets
        .iter()
        .map(|rho| {
            let qt = q0.interpolate(&Quantile::from_grid(rho)?, t);
            Ok((qt.internal_energy(a) + qt.correlation(&qm) - j0) / t)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub residual_tolerance: f64,
    pub tv_tolerance: f64,
    pub b1_tolerance: f64,
    pub t_bound_tolerance: f64,
    pub convexity_tolerance: f64,
    pub competitor_tolerance: f64,
    pub competitors: usize,
    pub convexity_samples: usize,
    pub derivative_k: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            residual_tolerance: 1e-4,
            tv_tolerance: 1e-3,
            b1_tolerance: 1e-3,
            t_bound_tolerance: 1e-6,
            convexity_tolerance: 1e-4,
            competitor_tolerance: 1e-3,
            competitors: 20,
            convexity_samples: 20,
            derivative_k: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub c_mu: f64,
    pub t_lower_bound: TLowerBound,
    pub b1: B1Check,
    pub convexity: Option<ConvexityProbe>,
    pub residual: ResidualProfile,
    pub pushforward_tv: f64,
    pub sufficiency: SufficiencyCheck,
    pub forward_differences: Option<Vec<f64>>,
    pub f_lower_bound: Option<f64>,
    pub checks: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn row(check: &str, value: f64, slack: f64) -> CheckRow {
    CheckRow {
        check: check.into(),
        value,
        slack,
        pass: slack >= 0.0,
    }
}

/// Run every applicable check on a report.
pub fn verify(report: &SolveReport, opts: &VerifyOptions) -> Result<VerificationReport> {
    let stored = &report.solution;
    let residual = optimality_residual(stored);
    let tv = pushforward_tv(stored);
    let mass_error = (stored.density.mass() - 1.0).abs();
    // checks that need a probability density run on a normalized copy
    let normalized;
    let s = if stored.density.is_normalized() {
        stored
    } else {
        normalized = Solution {
            density: stored.density.clone().normalized()?,
            ..stored.clone()
        };
        &normalized
    };
    let mu = &s.target;
    let t = report.diagnostics.values.t;
    let tb = check_t_lower_bound(&s.density, mu, t);
    let b1 = check_b1(s)?;
    let sufficiency = sufficiency_spot_check(s, opts.competitors, opts.seed)?;

    let mut checks = vec![
        row("unit mass", mass_error, MASS_TOLERANCE - mass_error),
        row("T lower bound", tb.slack, tb.slack + opts.t_bound_tolerance),
        row("b1 inequality", b1.slack, b1.slack + opts.b1_tolerance),
        row("optimality residual", residual.relative, opts.residual_tolerance - residual.relative),
    ];
    if let Some(z) = residual.zero_set_min {
        checks.push(row("zero-set inequality", z, z + opts.residual_tolerance));
    }
    checks.push(row("pushforward TV", tv, opts.tv_tolerance - tv));
    checks.push(row(
        "sufficiency spot check",
        sufficiency.min_gap,
        sufficiency.min_gap + opts.competitor_tolerance,
    ));

    let f = report.diagnostics.values.f;
    let f_lower_bound = if s.q > 1.0 {
        let (lo, hi) = crate::functionals::delta_window(s.dimension, s.q);
        let delta = 0.5 * (lo + hi);
        let bound = lower_bound_f(s.density.first_moment(), delta, s.dimension, s.q)?;
        checks.push(row("F lower bound", f, f - bound));
        Some(bound)
    } else {
        None
    };

    let (convexity, forward) = if s.dimension == 1 {
        let shifted = s.density.translated(&[0.5]);
        let probe = displacement_convexity_probe(&s.density, &shifted, mu, s.q, opts.convexity_samples)?;
        checks.push(row(
            "displacement convexity",
            probe.min_second_difference,
            probe.min_second_difference + opts.convexity_tolerance * probe.scale.max(1.0),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
        let targets = (0..opts.competitors)
            .map(|i| random_competitor(s, &mut rng, i))
            .collect::<Result<Vec<_>>>()?;
        let fd = forward_differences(s, &targets, opts.derivative_k)?;
        let min = fd.iter().cloned().fold(f64::INFINITY, f64::min);
        checks.push(row("forward difference", min, min + opts.competitor_tolerance));
        (Some(probe), Some(fd))
    } else {
        (None, None)
    };

    Ok(VerificationReport {
        c_mu: tb.c_mu,
        t_lower_bound: tb,
        b1,
        convexity,
        residual,
        pushforward_tv: tv,
        sufficiency,
        forward_differences: forward,
        f_lower_bound,
        checks,
    })
}
