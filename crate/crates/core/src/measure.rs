//! Finitely supported probability measures.

use serde::{Deserialize, Serialize};

use crate::numeric::{dot, norm};
use crate::{Error, Result};

/// Tolerance on `sum_j w_j = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Atoms `y_j` in R^n with nonnegative weights summing to one.
///
/// Serialized as `{"dimension": n, "atoms": [[y_1, ..., y_n, weight], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    dimension: usize,
    atoms: Vec<Vec<f64>>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        let mut points = Vec::with_capacity(raw.atoms.len());
        let mut weights = Vec::with_capacity(raw.atoms.len());
        for (j, row) in raw.atoms.into_iter().enumerate() {
            if row.len() != raw.dimension + 1 {
                return Err(Error::InvalidMeasure(format!(
                    "atom {j} has {} entries, expected {} coordinates and a weight",
                    row.len(),
                    raw.dimension
                )));
            }
            weights.push(row[raw.dimension]);
            points.push(row[..raw.dimension].to_vec());
        }
        DiscreteMeasure::new(raw.dimension, points, weights)
    }
}

impl From<DiscreteMeasure> for RawMeasure {
    fn from(m: DiscreteMeasure) -> Self {
        let atoms = (0..m.len())
            .map(|j| {
                let mut row = m.atom(j).to_vec();
                row.push(m.weights[j]);
                row
            })
            .collect();
        RawMeasure {
            dimension: m.dim,
            atoms,
        }
    }
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (j, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMeasure(format!("atom {j} is not finite")));
            }
            flat.extend_from_slice(p);
        }
        if let Some(j) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "weight {j} = {} is negative or not finite",
                weights[j]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            dim,
            points: flat,
            weights,
        })
    }

    /// Like [`DiscreteMeasure::new`] but rescales positive weights to unit mass first.
    pub fn normalized(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMeasure(format!("total weight {total} is not positive")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::new(dim, points, weights)
    }

    /// Equal weights on the given atoms.
    pub fn uniform(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let k = points.len().max(1);
        Self::normalized(dim, points, vec![1.0 / k as f64; k])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Flattened atom coordinates, `len() * dim()` entries.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim];
        for (y, w) in self.atoms() {
            for (bi, yi) in b.iter_mut().zip(y) {
                *bi += w * yi;
            }
        }
        b
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms().map(|(y, w)| w * dot(y, y)).sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.atoms().map(|(y, w)| w * norm(y)).sum()
    }

    pub fn max_atom_norm(&self) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }

    pub fn translated(&self, t: &[f64]) -> Self {
        let mut out = self.clone();
        for p in out.points.chunks_exact_mut(self.dim) {
            for (pi, ti) in p.iter_mut().zip(t) {
                *pi += ti;
            }
        }
        out
    }

    /// Translate so the barycenter sits at the origin; weights are untouched.
    pub fn centered(&self) -> Self {
        let b = self.barycenter();
        if b.iter().all(|&x| x == 0.0) {
            return self.clone();
        }
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        let mut out = self.translated(&neg);
        // One correction pass absorbs the rounding left by the first shift.
        let r = out.barycenter();
        if r.iter().any(|&x| x != 0.0) {
            let neg: Vec<f64> = r.iter().map(|x| -x).collect();
            out = out.translated(&neg);
        }
        out
    }

    /// Smallest singular value of the matrix with rows `sqrt(w_j) (y_j - barycenter)`.
    pub fn smallest_weighted_singular_value(&self) -> f64 {
        let b = self.barycenter();
        let k = self.len();
        if k < self.dim {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_fn(k, self.dim, |j, i| {
            self.weights[j].sqrt() * (self.atom(j)[i] - b[i])
        });
        m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
    }
}
