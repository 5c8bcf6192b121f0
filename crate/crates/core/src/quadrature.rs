//! Gauss rules on the unit interval, radial integrals, and an exterior rule
//! that integrates over the complement of a grid box.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::grid::GridSpec;
use crate::{Error, Result};

/// Composite Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct UnitRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl UnitRule {
    pub fn composite(panels: usize, order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        let base = GaussLegendre::new(order);
        let h = 1.0 / panels.max(1) as f64;
        let mut nodes = Vec::with_capacity(panels * order.get());
        let mut weights = Vec::with_capacity(panels * order.get());
        for p in 0..panels.max(1) {
            let a = p as f64 * h;
            for (x, w) in base.nodes().zip(base.weights()) {
                nodes.push(a + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Integrate over `[a, b]`.
    pub fn integrate_on<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        (b - a) * self.integrate(|s| f(a + (b - a) * s))
    }
}

/// Surface area of the unit sphere `S^{n-1}`.
pub fn sphere_area(n: usize) -> Result<f64> {
    match n {
        1 => Ok(2.0),
        2 => Ok(2.0 * PI),
        3 => Ok(4.0 * PI),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Unit directions with weights summing to the sphere area.
pub fn sphere_directions(n: usize, count: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match n {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            let w = 2.0 * PI / count as f64;
            Ok((0..count)
                .map(|k| {
                    let t = 2.0 * PI * (k as f64 + 0.5) / count as f64;
                    (vec![t.cos(), t.sin()], w)
                })
                .collect())
        }
        3 => {
            // Fibonacci lattice: equal-area points.
            let w = 4.0 * PI / count as f64;
            let golden = PI * (3.0 - 5f64.sqrt());
            Ok((0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    (vec![r * t.cos(), r * t.sin(), z], w)
                })
                .collect())
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Quadrature nodes covering `R^n` minus the grid box.
///
/// Rays leave the box center in each direction; along a ray the radius is
/// `r = r_box / s` with `s = w^stretch`, `w` in `(0, 1]`. A stretch larger
/// than one flattens integrands that decay like a power of `r`.
#[derive(Debug, Clone)]
pub struct ExteriorRule {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ExteriorRule {
    pub fn new(spec: &GridSpec, directions: usize, stretch: f64, rule: &UnitRule) -> Result<Self> {
        let n = spec.dim();
        let dirs = sphere_directions(n, directions)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (e, dw) in &dirs {
            let r_box = e
                .iter()
                .zip(&spec.half_width)
                .filter(|(ei, _)| ei.abs() > 0.0)
                .map(|(ei, r)| r / ei.abs())
                .fold(f64::INFINITY, f64::min);
            for (w, ww) in rule.iter() {
                let s = w.powf(stretch);
                let ds = stretch * w.powf(stretch - 1.0);
                let r = r_box / s;
                let jac = r.powi(n as i32 - 1) * r_box / (s * s) * ds;
                for a in 0..n {
                    points.push(spec.center[a] + r * e[a]);
                }
                weights.push(dw * ww * jac);
            }
        }
        Ok(Self {
            dim: n,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}
