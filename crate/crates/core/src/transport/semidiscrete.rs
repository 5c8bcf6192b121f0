//! Semi-discrete maximal correlation: grid density against a discrete measure.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::grid::GridDensity;
use crate::laguerre::{center_assignment, laguerre_moments, LaguerreMoments};
use crate::measure::DiscreteMeasure;
use crate::potential::PiecewiseAffinePotential;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualOptions {
    /// Stop when `max_j |m_j - mu_j| <= marginal_tolerance * max_j mu_j`.
    pub marginal_tolerance: f64,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            marginal_tolerance: 1e-6,
            gap_tolerance: 1e-5,
            max_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualSolveResult {
    pub potential: PiecewiseAffinePotential,
    /// `int x . grad u dρ`.
    pub primal: f64,
    /// `G(v) = int u dρ + sum_j mu_j v_j`.
    pub dual: f64,
    pub cell_masses: Vec<f64>,
    pub moments: LaguerreMoments,
    pub iterations: usize,
    /// `max_j |m_j - mu_j|`.
    pub final_gradient_norm: f64,
    /// Atoms with positive weight that received no mass.
    pub empty_cells: usize,
}

impl DualSolveResult {
    pub fn gap(&self) -> f64 {
        (self.primal - self.dual).abs()
    }

    /// `1/2 sum_j |m_j - mu_j|`.
    pub fn pushforward_tv(&self, mu: &DiscreteMeasure) -> f64 {
        total_variation(&self.cell_masses, mu.weights())
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

struct Eval {
    g: f64,
    grad: Vec<f64>,
    moments: LaguerreMoments,
}

fn evaluate(rho: &GridDensity, mu: &DiscreteMeasure, pot: &PiecewiseAffinePotential) -> Eval {
    let moments = laguerre_moments(rho.spec(), rho.values(), pot);
    let g = moments.integral_of_potential(pot)
        + mu.weights().iter().zip(pot.offsets()).map(|(w, v)| w * v).sum::<f64>();
    let grad = mu
        .weights()
        .iter()
        .zip(&moments.mass)
        .map(|(w, m)| w - m)
        .collect();
    Eval { g, grad, moments }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Minimize `G(v)` over the offsets by Barzilai-Borwein steps with a
/// nonmonotone Armijo line search. `warm` supplies starting offsets.
pub fn semi_discrete_dual(
    rho: &GridDensity,
    mu: &DiscreteMeasure,
    opts: &DualOptions,
    warm: Option<&[f64]>,
) -> Result<DualSolveResult> {
    if rho.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: rho.dim(),
        });
    }
    let k = mu.len();
    let mut pot = PiecewiseAffinePotential::for_measure(mu);
    if let Some(v) = warm {
        if v.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: v.len(),
            });
        }
        pot.set_offsets(v);
    }
    pot.fix_gauge(mu.weights());
    let tol = opts.marginal_tolerance * mu.weights().iter().fold(0.0f64, |a, &w| a.max(w));

    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let mut cur = evaluate(rho, mu, &pot);
    let mut recent = vec![cur.g];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut trial = pot.clone();
    let mut v_new = vec![0.0; k];
    while max_abs(&cur.grad) > tol {
        if iterations == opts.max_iterations {
            return Err(Error::DualNonconvergence {
                iterations,
                gradient: max_abs(&cur.grad),
            });
        }
        iterations += 1;
        let g2: f64 = cur.grad.iter().map(|g| g * g).sum();
        let reference = recent.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut s = step;
        let next = loop {
            for j in 0..k {
                v_new[j] = pot.offsets()[j] - s * cur.grad[j];
            }
            trial.set_offsets(&v_new);
            let e = evaluate(rho, mu, &trial);
            if e.g <= reference - ARMIJO * s * g2 {
                break e;
            }
            // Below roundoff the objective cannot certify progress; accept a
            // step that still shrinks the gradient.
            let noise = 1e-13 * (cur.g.abs() + 1.0);
            if e.g <= cur.g + noise && max_abs(&e.grad) < max_abs(&cur.grad) {
                break e;
            }
            s *= 0.5;
            if s < 1e-20 {
                return Err(Error::DualNonconvergence {
                    iterations,
                    gradient: max_abs(&cur.grad),
                });
            }
        };
        // BB1 step from the accepted pair.
        let mut sy = 0.0;
        let mut ss = 0.0;
        for j in 0..k {
            let dv = v_new[j] - pot.offsets()[j];
            let dg = next.grad[j] - cur.grad[j];
            ss += dv * dv;
            sy += dv * dg;
        }
        step = if sy > 0.0 && (ss / sy).is_finite() {
            ss / sy
        } else {
            2.0 * s
        };
        std::mem::swap(&mut pot, &mut trial);
        cur = next;
        let shift = pot.fix_gauge(mu.weights());
        let mass = cur.moments.total_mass();
        cur.g += shift * (mass - 1.0);
        recent.push(cur.g);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
    }
    let primal = cur.moments.correlation(&pot);
    let empty_cells = mu
        .weights()
        .iter()
        .zip(&cur.moments.mass)
        .filter(|(w, m)| **w > 0.0 && **m == 0.0)
        .count();
    if empty_cells > 0 {
        warn!("{empty_cells} atoms received no grid mass; the grid may be too coarse");
    }
    let gap = (primal - cur.g).abs();
    if gap > opts.gap_tolerance {
        warn!("duality gap {gap:e} above tolerance {:e}", opts.gap_tolerance);
    }
    debug!(
        "dual solve: {iterations} iterations, gradient {:e}, T = {}",
        max_abs(&cur.grad),
        cur.g
    );
    Ok(DualSolveResult {
        primal,
        dual: cur.g,
        cell_masses: cur.moments.mass.clone(),
        final_gradient_norm: max_abs(&cur.grad),
        potential: pot,
        moments: cur.moments,
        iterations,
        empty_cells,
    })
}

/// `int u dρ + sum_j mu_j v_j` for an arbitrary potential on the atoms of `mu`.
pub fn eval_t(rho: &GridDensity, mu: &DiscreteMeasure, u: &PiecewiseAffinePotential) -> f64 {
    evaluate(rho, mu, u).g
}

/// Per-cell index of the atom whose affine piece is maximal at the cell center.
pub fn map_assignment(rho: &GridDensity, u: &PiecewiseAffinePotential) -> Vec<usize> {
    center_assignment(rho.spec(), u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn symmetric_two_point() -> DiscreteMeasure {
        DiscreteMeasure::new(1, vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn uniform_interval_against_two_points() {
        let rho = GridDensity::from_fn(GridSpec::cube(1, 1.0, 101).unwrap(), |_| 0.5).unwrap();
        let r = semi_discrete_dual(&rho, &symmetric_two_point(), &DualOptions::default(), None).unwrap();
        assert!((r.dual - 0.5).abs() < 1e-6, "{}", r.dual);
        assert!(r.gap() < 1e-6);
        assert!((r.potential.offsets()[0] - r.potential.offsets()[1]).abs() < 1e-6);
    }

    #[test]
    fn power_law_fixture_has_unit_correlation() {
        let spec = GridSpec::cube(1, 50.0, 5000).unwrap();
        let rho = GridDensity::from_fn(spec, |x| (1.0 + x[0].abs()).powi(-3))
            .unwrap()
            .normalized()
            .unwrap();
        let r = semi_discrete_dual(&rho, &symmetric_two_point(), &DualOptions::default(), None).unwrap();
        // truncated to [-50, 50] and renormalized: T = (1 - 1/51)^2 / (1 - 1/51^2)
        let exact = (50.0f64 / 51.0).powi(2) / (1.0 - 1.0 / 2601.0);
        assert!((r.dual - exact).abs() < 5e-4, "{} vs {exact}", r.dual);
        let a = map_assignment(&rho, &r.potential);
        assert_eq!(a[0], 0);
        assert_eq!(a[4999], 1);
    }

    #[test]
    fn unequal_masses_move_the_boundary_to_the_quantile() {
        let rho = GridDensity::from_fn(GridSpec::cube(1, 1.0, 200).unwrap(), |_| 0.5).unwrap();
        let mu = DiscreteMeasure::new(1, vec![vec![-2.0], vec![3.0]], vec![0.25, 0.75]).unwrap();
        let r = semi_discrete_dual(&rho, &mu, &DualOptions::default(), None).unwrap();
        // boundary at the 1/4 quantile x = -1/2: x (y1 - y0) = v1 - v0
        let v = r.potential.offsets();
        assert!(((v[1] - v[0]) / 5.0 + 0.5).abs() < 1e-5);
        assert!((r.cell_masses[0] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn two_dimensional_marginals_converge() {
        let spec = GridSpec::cube(2, 3.0, 60).unwrap();
        let rho = GridDensity::from_fn(spec, |x| (1.0 + (x[0] * x[0] + x[1] * x[1]).sqrt()).powi(-4))
            .unwrap()
            .normalized()
            .unwrap();
        let pts: Vec<Vec<f64>> = (0..7)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 7.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let mu = DiscreteMeasure::uniform(2, pts).unwrap();
        let r = semi_discrete_dual(&rho, &mu, &DualOptions::default(), None).unwrap();
        assert!(r.pushforward_tv(&mu) < 1e-5);
        assert!(r.gap() < 1e-5);
        assert!((r.cell_masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gauge_shift_leaves_value_unchanged() {
        let rho = GridDensity::from_fn(GridSpec::cube(1, 2.0, 40).unwrap(), |x| 1.0 + 0.3 * x[0])
            .unwrap()
            .normalized()
            .unwrap();
        let mu = symmetric_two_point();
        let u = PiecewiseAffinePotential::with_offsets(&mu, vec![0.2, -0.1]).unwrap();
        let mut shifted = PiecewiseAffinePotential::with_offsets(&mu, vec![1.2, 0.9]).unwrap();
        shifted.fix_gauge(mu.weights());
        assert!((eval_t(&rho, &mu, &u) - eval_t(&rho, &mu, &shifted)).abs() < 1e-13);
    }

    #[test]
    fn shifting_an_offset_moves_the_boundary() {
        let spec = GridSpec::cube(1, 4.0, 8).unwrap();
        let rho = GridDensity::from_fn(spec, |_| 0.125).unwrap();
        let u = PiecewiseAffinePotential::new(1, vec![-1.0, 1.0], vec![-1.0, 0.0]).unwrap();
        // boundary at x = (v1 - v0) / (y1 - y0) = 0.5
        let a = map_assignment(&rho, &u);
        assert_eq!(a, vec![0, 0, 0, 0, 0, 1, 1, 1]);
    }
}
