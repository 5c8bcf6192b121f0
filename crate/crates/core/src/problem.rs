//! Problem specification and validation of the standing assumptions on μ.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::functionals::alpha;
use crate::grid::GridSpec;
use crate::measure::DiscreteMeasure;
use crate::numeric::{dot, norm};
use crate::quadrature::{sphere_area, sphere_directions};
use crate::transport::DualOptions;
use crate::verification::c_mu;
use crate::{Error, Result};

/// Barycenter norm above which validation fails without auto-centering.
pub const BARYCENTER_TOLERANCE: f64 = 1e-9;
/// Smallest weighted singular value below which μ counts as flat.
pub const HYPERPLANE_TOLERANCE: f64 = 1e-10;
/// Target tail mass outside the default box.
pub const DEFAULT_TAIL_MASS: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Box half-width; derived from the tail estimate when absent.
    pub half_width: Option<f64>,
    pub cells_per_axis: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on the relative optimality residual.
    pub tolerance: f64,
    /// Bound on the pushforward total variation.
    pub tv_tolerance: f64,
    pub max_iterations: usize,
    /// First damping factor tried in the backtracking search.
    pub initial_damping: f64,
    /// Backtracking gives up below this damping factor.
    pub min_damping: f64,
    pub dual: DualOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            tv_tolerance: 1e-3,
            max_iterations: 200,
            initial_damping: 1.0,
            min_damping: 1.0 / 1024.0,
            dual: DualOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub q: f64,
    pub target: DiscreteMeasure,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub auto_center: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub barycenter_norm: f64,
    pub smallest_singular_value: f64,
    pub alpha: f64,
    /// `q <= 1`: the solver runs, but existence is not guaranteed.
    pub outside_existence_theory: bool,
    pub c_mu: f64,
    pub centered: bool,
}

impl ProblemSpec {
    pub fn new(q: f64, target: DiscreteMeasure) -> Self {
        Self {
            dimension: target.dim(),
            q,
            target,
            grid: GridConfig::default(),
            solver: SolverOptions::default(),
            auto_center: false,
        }
    }

    pub fn with_grid(mut self, half_width: f64, cells_per_axis: usize) -> Self {
        self.grid = GridConfig {
            half_width: Some(half_width),
            cells_per_axis: Some(cells_per_axis),
        };
        self
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.dimension, self.q)
    }

    /// `n + q`, the decay exponent of the optimal density.
    pub fn exponent(&self) -> f64 {
        self.dimension as f64 + self.q
    }

    /// The target after optional centering.
    pub fn prepared_target(&self) -> DiscreteMeasure {
        if self.auto_center {
            self.target.centered()
        } else {
            self.target.clone()
        }
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        let n = self.dimension;
        if !(1..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if self.target.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.target.dim(),
            });
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidExponent(self.q));
        }
        let mu = self.prepared_target();
        let barycenter_norm = norm(&mu.barycenter());
        if barycenter_norm > BARYCENTER_TOLERANCE {
            return Err(Error::NonzeroBarycenter(barycenter_norm));
        }
        let sigma = mu.smallest_weighted_singular_value();
        if sigma < HYPERPLANE_TOLERANCE {
            return Err(Error::HyperplaneSupported(sigma));
        }
        if let Some(r) = self.grid.half_width {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidGrid(format!("half width {r} must be positive")));
            }
        }
        if self.grid.cells_per_axis == Some(0) {
            return Err(Error::InvalidGrid("cells_per_axis must be positive".into()));
        }
        let outside = self.q <= 1.0;
        if outside {
            warn!("q = {} <= 1 lies outside the existence theory", self.q);
        }
        Ok(ValidationReport {
            barycenter_norm,
            smallest_singular_value: sigma,
            alpha: self.alpha(),
            outside_existence_theory: outside,
            c_mu: c_mu(&mu),
            centered: self.auto_center,
        })
    }

    pub fn default_cells(&self) -> usize {
        match self.dimension {
            1 => 5000,
            2 => 256,
            _ => 48,
        }
    }

    /// Half-width so that the power-law tail `(s |x|)^{-(n+q)}` outside the
    /// box carries `DEFAULT_TAIL_MASS`, with `s` the smallest support slope of μ.
    pub fn default_half_width(&self) -> Result<f64> {
        let n = self.dimension;
        let mu = self.prepared_target();
        let s = min_support_slope(&mu)?;
        if s <= 0.0 {
            return Err(Error::HyperplaneSupported(s));
        }
        let p = self.exponent();
        Ok((sphere_area(n)? * s.powf(-p) / (self.q * DEFAULT_TAIL_MASS)).powf(1.0 / self.q))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let r = match self.grid.half_width {
            Some(r) => r,
            None => self.default_half_width()?,
        };
        let m = self.grid.cells_per_axis.unwrap_or_else(|| self.default_cells());
        GridSpec::cube(self.dimension, r, m)
    }
}

/// `min_e max_j y_j . e` over unit directions.
pub fn min_support_slope(mu: &DiscreteMeasure) -> Result<f64> {
    let n = mu.dim();
    let count = match n {
        1 => 2,
        2 => 3600,
        _ => 4000,
    };
    let dirs = if n == 2 {
        (0..count)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / count as f64;
                (vec![t.cos(), t.sin()], 0.0)
            })
            .collect()
    } else {
        sphere_directions(n, count)?
    };
    Ok(dirs
        .iter()
        .map(|(e, _)| {
            mu.atoms()
                .map(|(y, _)| dot(y, e))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::INFINITY, f64::min))
}
