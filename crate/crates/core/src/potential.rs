//! Piecewise-affine convex potentials `u(x) = max_j (x . y_j - v_j)`.

use serde::{Deserialize, Serialize};

use crate::measure::DiscreteMeasure;
use crate::numeric::dot;
use crate::{Error, Result};

/// Convex potential with slopes shared with the target atoms, offsets `v_j`
/// (the values `u*(y_j)`), and the gauge constant `c` so that `phi = u - c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub struct PiecewiseAffinePotential {
    dim: usize,
    slopes: Vec<f64>,
    offsets: Vec<f64>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    slopes: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    c: f64,
}

impl TryFrom<RawPotential> for PiecewiseAffinePotential {
    type Error = Error;

    fn try_from(raw: RawPotential) -> Result<Self> {
        let dim = raw.slopes.first().map(Vec::len).unwrap_or(0);
        if dim == 0 || raw.slopes.iter().any(|s| s.len() != dim) {
            return Err(Error::Format("potential slopes must share a positive dimension".into()));
        }
        let mut p = Self::new(dim, raw.slopes.concat(), raw.offsets)?;
        p.c = raw.c;
        Ok(p)
    }
}

impl From<PiecewiseAffinePotential> for RawPotential {
    fn from(p: PiecewiseAffinePotential) -> Self {
        RawPotential {
            slopes: p.slopes.chunks_exact(p.dim).map(<[f64]>::to_vec).collect(),
            offsets: p.offsets,
            c: p.c,
        }
    }
}

impl PiecewiseAffinePotential {
    /// `slopes` is flattened, `offsets.len() * dim` entries.
    pub fn new(dim: usize, slopes: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if dim == 0 || offsets.is_empty() || slopes.len() != offsets.len() * dim {
            return Err(Error::Format(format!(
                "{} slope entries do not match {} offsets in dimension {dim}",
                slopes.len(),
                offsets.len()
            )));
        }
        if slopes.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::Format("potential slopes and offsets must be finite".into()));
        }
        Ok(Self {
            dim,
            slopes,
            offsets,
            c: 0.0,
        })
    }

    /// Zero offsets on the atoms of `mu`.
    pub fn for_measure(mu: &DiscreteMeasure) -> Self {
        Self {
            dim: mu.dim(),
            slopes: mu.points().to_vec(),
            offsets: vec![0.0; mu.len()],
            c: 0.0,
        }
    }

    pub fn with_offsets(mu: &DiscreteMeasure, offsets: Vec<f64>) -> Result<Self> {
        Self::new(mu.dim(), mu.points().to_vec(), offsets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn slope(&self, j: usize) -> &[f64] {
        &self.slopes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn set_offsets(&mut self, offsets: &[f64]) {
        self.offsets.copy_from_slice(offsets);
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn set_c(&mut self, c: f64) {
        self.c = c;
    }

    /// Affine piece `j` at `x`.
    #[inline]
    pub fn piece(&self, j: usize, x: &[f64]) -> f64 {
        dot(x, self.slope(j)) - self.offsets[j]
    }

    /// `u(x)` and the maximizing index (lowest index on ties).
    pub fn eval_argmax(&self, x: &[f64]) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for j in 0..self.len() {
            let v = self.piece(j, x);
            if v > best {
                best = v;
                arg = j;
            }
        }
        (best, arg)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_argmax(x).0
    }

    pub fn argmax(&self, x: &[f64]) -> usize {
        self.eval_argmax(x).1
    }

    /// `phi(x) = u(x) - c`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        self.eval(x) - self.c
    }

    /// Shift offsets so `sum_j w_j v_j = 0`; `u` moves by the same constant,
    /// which is returned (`u_new = u_old + shift`).
    pub fn fix_gauge(&mut self, weights: &[f64]) -> f64 {
        let mean: f64 = weights.iter().zip(&self.offsets).map(|(w, v)| w * v).sum();
        for v in &mut self.offsets {
            *v -= mean;
        }
        mean
    }
}
