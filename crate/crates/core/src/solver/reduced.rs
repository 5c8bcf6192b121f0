//! Descent on the offsets for the reduced objective
//!
//! `Ψ(v) = sum_j μ_j v_j + c(v) - 1/(p-1) int (ū_v - c(v))^{-(p-1)}`,
//!
//! the minimum of `F(ρ) + int u_v dρ + sum_j μ_j v_j` over unit-mass
//! densities, attained at `ρ_v = (ū_v - c(v))^{-p}` with `ū_v` the cell
//! averages of `u_v`. Its gradient is `μ - m(v)`, `m` being the masses of
//! `ρ_v` over the cells of `u_v`. Since `J(ρ_v) <= Ψ(v)` and `Ψ` at the
//! optimal offsets of `ρ` is at most `J(ρ)`, any decrease of `Ψ` from there
//! yields a density with smaller `J`.

use log::debug;

use crate::grid::GridSpec;
use crate::laguerre::{cell_averages, laguerre_moments};
use crate::measure::DiscreteMeasure;
use crate::numeric::par_sum;
use crate::potential::PiecewiseAffinePotential;
use crate::transport::DualOptions;
use crate::Result;

use super::normalize_c_values;

const MAX_ITERATIONS: usize = 500;

pub(crate) struct ReducedPoint {
    /// Offsets and `c`.
    pub potential: PiecewiseAffinePotential,
    /// `ρ_v` cell values.
    pub density: Vec<f64>,
}

struct Eval {
    c: f64,
    rho: Vec<f64>,
    psi: f64,
    grad: Vec<f64>,
}

fn evaluate(grid: &GridSpec, mu: &DiscreteMeasure, p: f64, pot: &PiecewiseAffinePotential) -> Result<Eval> {
    let vol = grid.cell_volume();
    let ubar = cell_averages(grid, pot);
    let c = normalize_c_values(&ubar, vol, p)?;
    let rho: Vec<f64> = ubar.iter().map(|u| (u - c).powf(-p)).collect();
    let power = vol * par_sum(rho.len(), |i| rho[i] * (ubar[i] - c));
    let masses = laguerre_moments(grid, &rho, pot).mass;
    let linear: f64 = mu.weights().iter().zip(pot.offsets()).map(|(w, v)| w * v).sum();
    Ok(Eval {
        c,
        psi: linear + c - power / (p - 1.0),
        grad: mu.weights().iter().zip(&masses).map(|(w, m)| w - m).collect(),
        rho,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Barzilai-Borwein descent on `Ψ` from `start` with a nonmonotone Armijo
/// search, stopping at the dual marginal tolerance or the iteration cap.
pub(crate) fn reduced_descent(
    grid: &GridSpec,
    mu: &DiscreteMeasure,
    p: f64,
    start: &PiecewiseAffinePotential,
    opts: &DualOptions,
) -> Result<ReducedPoint> {
    const MEMORY: usize = 10;
    const ARMIJO: f64 = 1e-4;
    let k = mu.len();
    let tol = opts.marginal_tolerance * mu.weights().iter().fold(0.0f64, |a, &w| a.max(w));
    let mut pot = start.clone();
    pot.fix_gauge(mu.weights());
    let mut cur = evaluate(grid, mu, p, &pot)?;
    let mut recent = vec![cur.psi];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut trial = pot.clone();
    let mut v_new = vec![0.0; k];
    'outer: while max_abs(&cur.grad) > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        let g2: f64 = cur.grad.iter().map(|g| g * g).sum();
        let reference = recent.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut s = step;
        let next = loop {
            for j in 0..k {
                v_new[j] = pot.offsets()[j] - s * cur.grad[j];
            }
            trial.set_offsets(&v_new);
            if let Ok(e) = evaluate(grid, mu, p, &trial) {
                if e.psi <= reference - ARMIJO * s * g2 {
                    break e;
                }
                let noise = 1e-13 * (cur.psi.abs() + 1.0);
                if e.psi <= cur.psi + noise && max_abs(&e.grad) < max_abs(&cur.grad) {
                    break e;
                }
            }
            s *= 0.5;
            if s < 1e-20 {
                break 'outer;
            }
        };
        let mut sy = 0.0;
        let mut ss = 0.0;
        for j in 0..k {
            let dv = v_new[j] - pot.offsets()[j];
            ss += dv * dv;
            sy += dv * (next.grad[j] - cur.grad[j]);
        }
        step = if sy > 0.0 && (ss / sy).is_finite() { ss / sy } else { 2.0 * s };
        std::mem::swap(&mut pot, &mut trial);
        cur = next;
        // Ψ is invariant under a common shift of the offsets
        let shift = pot.fix_gauge(mu.weights());
        cur.c += shift;
        recent.push(cur.psi);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
    }
    debug!(
        "reduced descent: {iterations} iterations, gradient {:e}, value {}",
        max_abs(&cur.grad),
        cur.psi
    );
    pot.set_c(cur.c);
    Ok(ReducedPoint {
        potential: pot,
        density: cur.rho,
    })
}
