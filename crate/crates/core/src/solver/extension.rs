//! Extension of a solved potential from the grid box to all of R^n.
//!
//! The optimal density decays like `|x|^{-(n+q)}`, so in one dimension the
//! box misses `O(1/R)` of both `F` and `T`. Keeping `u` and re-pinning `c`
//! with the exterior included gives whole-space values of the functionals.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::laguerre::laguerre_moments;
use crate::measure::DiscreteMeasure;
use crate::numeric::{dot, pairwise_sum};
use crate::potential::PiecewiseAffinePotential;
use crate::quadrature::{ExteriorRule, UnitRule};
use crate::{Error, Result};

use super::{min_max, potential_values, solve_mass_equation};
use crate::functionals::alpha;
use crate::numeric::par_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholeSpaceValues {
    /// `c` with `int_{R^n} (u - c)^{-(n+q)} = 1`.
    pub c: f64,
    /// Mass outside the box.
    pub tail_mass: f64,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    /// `n/(n+q-1) int φ^{-(n+q-1)}`.
    pub b1_lhs: Option<f64>,
    /// `int x . grad φ dρ`.
    pub b1_rhs: Option<f64>,
}

fn exterior_rule(grid: &GridSpec, q: f64) -> Result<ExteriorRule> {
    let directions = match grid.dim() {
        1 => 2,
        _ => 2048,
    };
    // With r = R / w^gamma the mass integrand of a q-tail becomes w^{gamma q - 1}
    // and the moment integrand w^{gamma (q - 1) - 1}.
    let stretch = if q > 1.0 && q < 2.0 { 1.0 / (q - 1.0) } else { 1.0 };
    ExteriorRule::new(grid, directions, stretch, &UnitRule::composite(16, 12))
}

/// Whole-space `c`, tail mass and, for `q > 1`, `F`, `T`, `J` and both sides of
/// the inequality `n/(n+q-1) int φ^{-(n+q-1)} >= int x . grad φ dρ`.
///
/// Returns `None` if the mass equation has no root.
pub fn whole_space_extension(
    u: &PiecewiseAffinePotential,
    grid: &GridSpec,
    mu: &DiscreteMeasure,
    n: usize,
    q: f64,
) -> Result<Option<WholeSpaceValues>> {
    let p = n as f64 + q;
    let vol = grid.cell_volume();
    let inner = potential_values(grid, u);
    let rule = exterior_rule(grid, q)?;
    let mut outer = Vec::with_capacity(rule.len());
    let mut weights = Vec::with_capacity(rule.len());
    let mut slopes = Vec::with_capacity(rule.len());
    for (x, w) in rule.iter() {
        let (v, j) = u.eval_argmax(x);
        outer.push(v);
        weights.push(w);
        slopes.push(dot(x, mu.atom(j)));
    }
    let (lo_in, hi_in) = min_max(&inner);
    let (lo_out, hi_out) = min_max(&outer);
    let (lo, hi) = (lo_in.min(lo_out), hi_in.max(hi_out));
    let exterior = |c: f64, power: f64| -> Vec<f64> {
        outer
            .iter()
            .zip(&weights)
            .map(|(v, w)| w * (v - c).powf(-power))
            .collect()
    };
    let mass = |c: f64| {
        vol * par_sum(inner.len(), |i| (inner[i] - c).powf(-p)) + pairwise_sum(&exterior(c, p))
    };
    let c = match solve_mass_equation(lo, hi - lo, mass) {
        Ok(c) => c,
        Err(Error::MassUnreachable { .. } | Error::Domain(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let tail_mass = pairwise_sum(&exterior(c, p));
    let mut out = WholeSpaceValues {
        c,
        tail_mass,
        f: None,
        t: None,
        j: None,
        b1_lhs: None,
        b1_rhs: None,
    };
    if q <= 1.0 {
        return Ok(Some(out));
    }
    // int φ^{-(p-1)} = int ρ^alpha
    let power_integral = vol * par_sum(inner.len(), |i| (inner[i] - c).powf(1.0 - p))
        + pairwise_sum(&exterior(c, p - 1.0));
    let a = alpha(n, q);
    let f = -power_integral / a;
    let rho: Vec<f64> = inner.iter().map(|v| (v - c).powf(-p)).collect();
    let t_inner = laguerre_moments(grid, &rho, u).correlation(u);
    let t_outer: Vec<f64> = exterior(c, p)
        .iter()
        .zip(&slopes)
        .map(|(m, s)| m * s)
        .collect();
    let t = t_inner + pairwise_sum(&t_outer);
    out.f = Some(f);
    out.t = Some(t);
    out.j = Some(f + t);
    out.b1_lhs = Some(n as f64 / (p - 1.0) * power_integral);
    out.b1_rhs = Some(t);
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_value_recovers_the_closed_forms() {
        let grid = GridSpec::cube(1, 50.0, 5000).unwrap();
        let mu = DiscreteMeasure::new(1, vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let u = PiecewiseAffinePotential::for_measure(&mu);
        let w = whole_space_extension(&u, &grid, &mu, 1, 2.0).unwrap().unwrap();
        assert!((w.c + 1.0).abs() < 1e-4, "{}", w.c);
        assert!((w.tail_mass - 51f64.powi(-2)).abs() < 1e-6);
        assert!((w.f.unwrap() + 3.0).abs() < 1e-4);
        assert!((w.t.unwrap() - 1.0).abs() < 1e-4);
        assert!((w.j.unwrap() + 2.0).abs() < 1e-4);
        assert!((w.b1_lhs.unwrap() - w.b1_rhs.unwrap()).abs() < 1e-4);
    }

    #[test]
    fn slow_tails_use_the_stretched_rule() {
        // q = 1.5: F and T converge only like R^{-1/2}
        let grid = GridSpec::cube(1, 20.0, 4000).unwrap();
        let mu = DiscreteMeasure::new(1, vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let u = PiecewiseAffinePotential::for_measure(&mu);
        let q = 1.5;
        let w = whole_space_extension(&u, &grid, &mu, 1, q).unwrap().unwrap();
        // int (|x| + b)^{-(1+q)} = 2 b^{-q} / q = 1
        let b = (2.0 / q).powf(1.0 / q);
        assert!((w.c + b).abs() < 1e-4, "{} vs {}", w.c, -b);
        // T = int |x| (|x| + b)^{-(1+q)} = 2 b^{1-q} / (q (q - 1))
        let t = 2.0 * b.powf(1.0 - q) / (q * (q - 1.0));
        assert!((w.t.unwrap() - t).abs() < 1e-3, "{} vs {t}", w.t.unwrap());
    }

    #[test]
    fn q_at_most_one_reports_only_the_mass_split() {
        let grid = GridSpec::cube(1, 20.0, 400).unwrap();
        let mu = DiscreteMeasure::new(1, vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let u = PiecewiseAffinePotential::for_measure(&mu);
        let w = whole_space_extension(&u, &grid, &mu, 1, 0.8).unwrap().unwrap();
        assert!(w.f.is_none() && w.t.is_none());
        assert!(w.tail_mass > 0.0 && w.tail_mass < 1.0);
    }
}
