//! One-dimensional transport through quantile functions.
//!
//! A quantile function here is piecewise linear on `[0, 1]`; flat pieces
//! are atoms, sloped pieces carry a constant density `ds / dx`.

use serde::Serialize;

use crate::grid::GridDensity;
use crate::measure::DiscreteMeasure;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub s0: f64,
    pub s1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl Segment {
    fn at(&self, s: f64) -> f64 {
        if self.s1 == self.s0 {
            return self.x0;
        }
        self.x0 + (self.x1 - self.x0) * (s - self.s0) / (self.s1 - self.s0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantile {
    segments: Vec<Segment>,
}

impl Quantile {
    /// Quantile of a one-dimensional grid density; empty cells are skipped.
    pub fn from_grid(rho: &GridDensity) -> Result<Self> {
        if rho.dim() != 1 {
            return Err(Error::UnsupportedDimension(rho.dim()));
        }
        let spec = rho.spec();
        let h = spec.cell_width(0);
        let total = rho.mass();
        let mut segments = Vec::new();
        let mut s = 0.0;
        for (k, &v) in rho.values().iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let m = v * h / total;
            let x0 = spec.axis_center(0, k) - 0.5 * h;
            segments.push(Segment {
                s0: s,
                s1: s + m,
                x0,
                x1: x0 + h,
            });
            s += m;
        }
        Self::finish(segments)
    }

    /// Step quantile of a one-dimensional discrete measure.
    pub fn from_atoms(mu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != 1 {
            return Err(Error::UnsupportedDimension(mu.dim()));
        }
        let mut atoms: Vec<(f64, f64)> = mu.atoms().map(|(p, w)| (p[0], w)).filter(|a| a.1 > 0.0).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut segments = Vec::with_capacity(atoms.len());
        let mut s = 0.0;
        for (x, w) in atoms {
            segments.push(Segment {
                s0: s,
                s1: s + w,
                x0: x,
                x1: x,
            });
            s += w;
        }
        Self::finish(segments)
    }

    fn finish(mut segments: Vec<Segment>) -> Result<Self> {
        let Some(last) = segments.last_mut() else {
            return Err(Error::InvalidMeasure("no mass".into()));
        };
        last.s1 = 1.0;
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(self.segments.iter().map(|s| s.s1))
    }

    fn merged(&self, other: &Self) -> Vec<f64> {
        let mut s: Vec<f64> = self.breakpoints().chain(other.breakpoints()).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// Value and segment on the open piece `(a, b)` of a merged partition.
    fn piece(&self, cursor: &mut usize, a: f64, b: f64) -> (f64, f64) {
        let mid = 0.5 * (a + b);
        while *cursor + 1 < self.segments.len() && self.segments[*cursor].s1 <= mid {
            *cursor += 1;
        }
        let seg = &self.segments[*cursor];
        (seg.at(a), seg.at(b))
    }

    /// `int_0^1 Q_self(s) Q_other(s) ds`, exact for piecewise-linear quantiles.
    pub fn correlation(&self, other: &Self) -> f64 {
        let s = self.merged(other);
        let (mut ca, mut cb) = (0, 0);
        let mut total = 0.0;
        for w in s.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (p0, p1) = self.piece(&mut ca, a, b);
            let (q0, q1) = other.piece(&mut cb, a, b);
            // product of two linear functions: Simpson is exact
            let pm = 0.5 * (p0 + p1);
            let qm = 0.5 * (q0 + q1);
            total += (b - a) * (p0 * q0 + 4.0 * pm * qm + p1 * q1) / 6.0;
        }
        total
    }

    /// `(1 - t) Q_self + t Q_other`.
    pub fn interpolate(&self, other: &Self, t: f64) -> Self {
        let s = self.merged(other);
        let (mut ca, mut cb) = (0, 0);
        let mut segments = Vec::with_capacity(s.len());
        for w in s.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (p0, p1) = self.piece(&mut ca, a, b);
            let (q0, q1) = other.piece(&mut cb, a, b);
            segments.push(Segment {
                s0: a,
                s1: b,
                x0: (1.0 - t) * p0 + t * q0,
                x1: (1.0 - t) * p1 + t * q1,
            });
        }
        Self { segments }
    }

    /// `int f(rho) dx` of the absolutely continuous part:
    /// `-(1/alpha) sum ds^alpha dx^(1 - alpha)`.
    pub fn internal_energy(&self, alpha: f64) -> f64 {
        -self
            .segments
            .iter()
            .filter(|g| g.x1 > g.x0 && g.s1 > g.s0)
            .map(|g| (g.s1 - g.s0).powf(alpha) * (g.x1 - g.x0).powf(1.0 - alpha))
            .sum::<f64>()
            / alpha
    }

    /// `int |x - center| dρ`.
    pub fn first_moment_about(&self, center: f64) -> f64 {
        self.segments
            .iter()
            .map(|g| {
                let ds = g.s1 - g.s0;
                let (a, b) = (g.x0 - center, g.x1 - center);
                if a * b >= 0.0 {
                    ds * 0.5 * (a.abs() + b.abs())
                } else {
                    // linear through zero inside the piece
                    ds * (a * a + b * b) / (2.0 * (b - a).abs())
                }
            })
            .sum()
    }
}

/// Maximal correlation of a one-dimensional grid density against atoms,
/// by the co-monotone coupling.
pub fn comonotone_correlation(rho: &GridDensity, mu: &DiscreteMeasure) -> Result<f64> {
    Ok(Quantile::from_grid(rho)?.correlation(&Quantile::from_atoms(mu)?))
}
