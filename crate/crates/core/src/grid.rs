//! Truncated rectangular grids and piecewise-constant densities on them.
//!
//! A [`GridSpec`] covers the box `center ± half_width` with `m` cells per
//! axis. Cells are numbered with axis 0 varying slowest. Integrals use the
//! midpoint rule: a cell contributes `value(center) * cell_volume`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::numeric::{norm, par_sum};
use crate::{Error, Result};

/// Mass tolerance accepted after normalization.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub cells_per_axis: usize,
}

impl GridSpec {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, cells_per_axis: usize) -> Result<Self> {
        let spec = Self {
            center,
            half_width,
            cells_per_axis,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Cube `[c - r, c + r]^n` centered at the origin.
    pub fn cube(dim: usize, half_width: f64, cells_per_axis: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![half_width; dim], cells_per_axis)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.center.len();
        if n == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if self.half_width.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.half_width.len(),
            });
        }
        if self.cells_per_axis == 0 {
            return Err(Error::InvalidGrid("cells_per_axis must be positive".into()));
        }
        if self.center.iter().any(|c| !c.is_finite())
            || self.half_width.iter().any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(Error::InvalidGrid("center must be finite and half widths positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.pow(self.dim() as u32)
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        2.0 * self.half_width[axis] / self.cells_per_axis as f64
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.cell_width(a)).collect()
    }

    pub fn max_cell_width(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_width(a)).fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.cell_width(a)).product()
    }

    /// Coordinate of the `k`-th cell center along `axis`.
    pub fn axis_center(&self, axis: usize, k: usize) -> f64 {
        self.center[axis] - self.half_width[axis] + (k as f64 + 0.5) * self.cell_width(axis)
    }

    pub fn multi_index(&self, mut cell: usize, out: &mut [usize]) {
        let m = self.cells_per_axis;
        for a in (0..self.dim()).rev() {
            out[a] = cell % m;
            cell /= m;
        }
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.cells_per_axis + i)
    }

    pub fn cell_center(&self, cell: usize, out: &mut [f64]) {
        let m = self.cells_per_axis;
        let mut rest = cell;
        for a in (0..self.dim()).rev() {
            out[a] = self.axis_center(a, rest % m);
            rest /= m;
        }
    }

    /// All cell centers, flattened (`cell_count() * dim()` values).
    pub fn centers(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.cell_count() * n];
        for (cell, c) in out.chunks_exact_mut(n).enumerate() {
            self.cell_center(cell, c);
        }
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_width)
            .all(|((xi, ci), ri)| (xi - ci).abs() <= *ri)
    }

    pub fn translated(&self, t: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, ti) in out.center.iter_mut().zip(t) {
            *c += ti;
        }
        out
    }
}

/// Nonnegative cell values (a density w.r.t. Lebesgue measure) on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.check()?;
        if values.len() != spec.cell_count() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                spec.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "cell {i} has invalid value {}",
                values[i]
            )));
        }
        Ok(Self { spec, values })
    }

    /// Sample `f` at the cell centers.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = spec.dim();
        let values = spec.centers().chunks_exact(n).map(f).collect();
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn mass(&self) -> f64 {
        let vol = self.spec.cell_volume();
        par_sum(self.values.len(), |i| self.values[i]) * vol
    }

    /// Rescale to unit midpoint mass.
    pub fn normalized(mut self) -> Result<Self> {
        let mass = self.mass();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidGrid(format!("cannot normalize mass {mass}")));
        }
        for v in &mut self.values {
            *v /= mass;
        }
        Ok(self)
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= MASS_TOLERANCE
    }

    /// Midpoint quadrature of `g(x) * rho(x)`.
    pub fn integrate<G>(&self, g: G) -> f64
    where
        G: Fn(&[f64]) -> f64 + Sync,
    {
        let n = self.dim();
        let vol = self.spec.cell_volume();
        par_sum(self.values.len(), |i| {
            let v = self.values[i];
            if v == 0.0 {
                return 0.0;
            }
            let mut x = [0.0; 3];
            self.spec.cell_center(i, &mut x[..n]);
            g(&x[..n]) * v
        }) * vol
    }

    /// `M_1 = int |x| d rho`.
    pub fn first_moment(&self) -> f64 {
        self.integrate(norm)
    }

    /// `int |x - b| d rho` with `b` the barycenter.
    pub fn centered_first_moment(&self) -> f64 {
        let b = self.barycenter();
        self.integrate(|x| {
            x.iter()
                .zip(&b)
                .map(|(xi, bi)| (xi - bi) * (xi - bi))
                .sum::<f64>()
                .sqrt()
        }) / self.mass()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let mass = self.mass();
        (0..self.dim())
            .map(|a| self.integrate(|x| x[a]) / mass)
            .collect()
    }

    /// Same cell values on a shifted box: the density translated by `t`.
    pub fn translated(&self, t: &[f64]) -> Self {
        Self {
            spec: self.spec.translated(t),
            values: self.values.clone(),
        }
    }

    /// Mass-preserving dilation `x -> lambda^n rho(lambda x)`.
    pub fn dilated(&self, lambda: f64) -> Result<Self> {
        let n = self.dim() as i32;
        let spec = GridSpec::new(
            self.spec.center.iter().map(|c| c / lambda).collect(),
            self.spec.half_width.iter().map(|r| r / lambda).collect(),
            self.spec.cells_per_axis,
        )?;
        let scale = lambda.powi(n);
        Self::new(spec, self.values.iter().map(|v| v * scale).collect())
    }

    /// One row per cell: center coordinates then value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..n).map(|a| format!("x{}", a + 1)).collect();
        header.push("value".into());
        w.write_record(&header)?;
        let mut x = vec![0.0; n];
        for (cell, v) in self.values.iter().enumerate() {
            self.spec.cell_center(cell, &mut x);
            let mut row: Vec<String> = x.iter().map(|c| format!("{c:?}")).collect();
            row.push(format!("{v:?}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read values written by [`GridDensity::write_csv`] (or any CSV whose
    /// column `column` holds cell values in grid order).
    pub fn read_csv<R: Read>(spec: GridSpec, reader: R, column: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::Format(format!("missing column '{column}'")))?;
        let mut values = Vec::with_capacity(spec.cell_count());
        for rec in r.records() {
            let rec = rec?;
            let field = rec
                .get(col)
                .ok_or_else(|| Error::Format("short CSV row".into()))?;
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad value '{field}': {e}")))?,
            );
        }
        Self::new(spec, values)
    }
}
