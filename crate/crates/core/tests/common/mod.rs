//! Oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qmm_core::grid::{GridDensity, GridSpec};
use qmm_core::measure::DiscreteMeasure;

/// Best vertex of the transportation polytope, by trying every support of
/// size `a + b - 1` and solving the marginal equations on it.
pub fn enumerate_vertices(rho: &DiscreteMeasure, mu: &DiscreteMeasure) -> f64 {
    let (a, b) = (rho.len(), mu.len());
    let cells: Vec<(usize, usize)> = (0..a).flat_map(|i| (0..b).map(move |j| (i, j))).collect();
    let k = a + b - 1;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << cells.len()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let support: Vec<(usize, usize)> = (0..cells.len()).filter(|c| mask >> c & 1 == 1).map(|c| cells[c]).collect();
        let mut m = DMatrix::<f64>::zeros(a + b, k);
        let mut rhs = DVector::<f64>::zeros(a + b);
        for (col, &(i, j)) in support.iter().enumerate() {
            m[(i, col)] = 1.0;
            m[(a + j, col)] = 1.0;
        }
        for i in 0..a {
            rhs[i] = rho.weight(i);
        }
        for j in 0..b {
            rhs[a + j] = mu.weight(j);
        }
        let svd = m.clone().svd(true, true);
        if svd.singular_values.iter().filter(|s| **s > 1e-9).count() < k {
            continue;
        }
        let Ok(g) = svd.solve(&rhs, 1e-12) else { continue };
        if (&m * &g - &rhs).amax() > 1e-12 || g.iter().any(|v| *v < -1e-14) {
            continue;
        }
        let value: f64 = support
            .iter()
            .zip(g.iter())
            .map(|(&(i, j), w)| w * rho.atom(i).iter().zip(mu.atom(j)).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        best = best.max(value);
    }
    best
}

pub fn measure(n: usize, raw: &[(Vec<f64>, f64)]) -> DiscreteMeasure {
    DiscreteMeasure::normalized(n, raw.iter().map(|(p, _)| p.clone()).collect(), raw.iter().map(|(_, w)| *w).collect()).unwrap()
}

pub fn grid_density(n: usize, m: usize, r: f64, values: Vec<f64>) -> GridDensity {
    GridDensity::new(GridSpec::cube(n, r, m).unwrap(), values).unwrap().normalized().unwrap()
}

/// Cell centers weighted by cell mass.
pub fn as_atoms(rho: &GridDensity) -> DiscreteMeasure {
    let spec = rho.spec();
    let n = spec.dim();
    let vol = spec.cell_volume();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (cell, v) in rho.values().iter().enumerate() {
        let mut x = vec![0.0; n];
        spec.cell_center(cell, &mut x);
        points.push(x);
        weights.push(v * vol);
    }
    DiscreteMeasure::normalized(n, points, weights).unwrap()
}

/// Xorshift stream in `[0, 1)`.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(seed | 1)
    }

    pub fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}
