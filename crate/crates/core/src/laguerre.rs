//! Exact integration of piecewise-constant grid densities over the cells of
//! a piecewise-affine potential.
//!
//! The region where piece `j` attains `max_k (x . y_k - v_k)` is a convex
//! polyhedron. Each grid cell is intersected with these regions; cells
//! that lie inside a single region are handled without clipping. Because
//! the density is constant on each cell, masses and first moments of the
//! regions are exact up to rounding, so the dual objective is continuously
//! differentiable in the offsets.

use rayon::prelude::*;

use crate::grid::GridSpec;
use crate::numeric::CHUNK;
use crate::potential::PiecewiseAffinePotential;

/// Per-atom mass and first moment of a density restricted to each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreMoments {
    dim: usize,
    pub mass: Vec<f64>,
    first_moment: Vec<f64>,
}

impl LaguerreMoments {
    /// `int_{cell j} x d rho`.
    pub fn first_moment(&self, j: usize) -> &[f64] {
        &self.first_moment[j * self.dim..(j + 1) * self.dim]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// `int x . grad u(x) d rho = sum_j y_j . int_{cell j} x d rho`.
    pub fn correlation(&self, pot: &PiecewiseAffinePotential) -> f64 {
        (0..self.mass.len())
            .map(|j| {
                pot.slope(j)
                    .iter()
                    .zip(self.first_moment(j))
                    .map(|(y, x)| y * x)
                    .sum::<f64>()
            })
            .sum()
    }

    /// `int u d rho`.
    pub fn integral_of_potential(&self, pot: &PiecewiseAffinePotential) -> f64 {
        self.correlation(pot)
            - self
                .mass
                .iter()
                .zip(pot.offsets())
                .map(|(m, v)| m * v)
                .sum::<f64>()
    }
}

/// Masses and first moments of `values` (one per grid cell) over the cells of `pot`.
pub fn laguerre_moments(
    spec: &GridSpec,
    values: &[f64],
    pot: &PiecewiseAffinePotential,
) -> LaguerreMoments {
    let n = spec.dim();
    let k = pot.len();
    let vol = spec.cell_volume();
    let width = k * (n + 1);
    let cells = spec.cell_count();
    let partials: Vec<Vec<f64>> = (0..cells.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; width];
            let mut scratch = Scratch::new(spec, k);
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(cells);
            for cell in lo..hi {
                let rho = values[cell];
                if rho == 0.0 {
                    continue;
                }
                spec.cell_center(cell, &mut scratch.center[..n]);
                let center = scratch.center;
                visit_pieces(pot, &mut scratch, |j, frac, local| {
                    let m = rho * vol * frac;
                    acc[j] += m;
                    for a in 0..n {
                        acc[k + j * n + a] += m * (center[a] + local[a]);
                    }
                });
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let first_moment = total.split_off(k);
    LaguerreMoments {
        dim: n,
        mass: total,
        first_moment,
    }
}

/// Exact average of `u = max_j (x . y_j - v_j)` over every grid cell.
pub fn cell_averages(spec: &GridSpec, pot: &PiecewiseAffinePotential) -> Vec<f64> {
    let n = spec.dim();
    let cells = spec.cell_count();
    let chunks: Vec<Vec<f64>> = (0..cells.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut scratch = Scratch::new(spec, pot.len());
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(cells);
            (lo..hi)
                .map(|cell| {
                    spec.cell_center(cell, &mut scratch.center[..n]);
                    let center = scratch.center;
                    let mut avg = 0.0;
                    visit_pieces(pot, &mut scratch, |j, frac, local| {
                        let y = pot.slope(j);
                        let at: f64 = (0..n).map(|a| y[a] * (center[a] + local[a])).sum();
                        avg += frac * (at - pot.offsets()[j]);
                    });
                    avg
                })
                .collect()
        })
        .collect();
    chunks.concat()
}

/// Index of the maximizing piece at every cell center (lowest index on ties).
pub fn center_assignment(spec: &GridSpec, pot: &PiecewiseAffinePotential) -> Vec<usize> {
    let n = spec.dim();
    (0..spec.cell_count())
        .into_par_iter()
        .map(|cell| {
            let mut x = [0.0; 3];
            spec.cell_center(cell, &mut x[..n]);
            pot.argmax(&x[..n])
        })
        .collect()
}

pub(crate) struct Scratch {
    dim: usize,
    half: [f64; 3],
    pub(crate) center: [f64; 3],
    level: Vec<f64>,
    spread: Vec<f64>,
    candidates: Vec<usize>,
}

impl Scratch {
    pub(crate) fn new(spec: &GridSpec, atoms: usize) -> Self {
        let mut half = [0.0; 3];
        for (a, h) in half.iter_mut().enumerate().take(spec.dim()) {
            *h = 0.5 * spec.cell_width(a);
        }
        Self {
            dim: spec.dim(),
            half,
            center: [0.0; 3],
            level: vec![0.0; atoms],
            spread: vec![0.0; atoms],
            candidates: Vec::with_capacity(atoms),
        }
    }
}

/// Split the cell around `scratch.center` among the pieces of `pot`.
///
/// `emit(j, fraction, centroid)` receives the volume fraction of the cell
/// owned by piece `j` and the centroid of that part relative to the center.
pub(crate) fn visit_pieces<E>(pot: &PiecewiseAffinePotential, scratch: &mut Scratch, mut emit: E)
where
    E: FnMut(usize, f64, &[f64]),
{
    let n = scratch.dim;
    let x = &scratch.center[..n];
    let mut floor = f64::NEG_INFINITY;
    for j in 0..pot.len() {
        let y = pot.slope(j);
        let l = pot.piece(j, x);
        let r: f64 = (0..n).map(|a| y[a].abs() * scratch.half[a]).sum();
        scratch.level[j] = l;
        scratch.spread[j] = r;
        floor = floor.max(l - r);
    }
    scratch.candidates.clear();
    for j in 0..pot.len() {
        if scratch.level[j] + scratch.spread[j] >= floor {
            scratch.candidates.push(j);
        }
    }
    if scratch.candidates.len() == 1 {
        emit(scratch.candidates[0], 1.0, &[0.0; 3][..n]);
        return;
    }
    let full: f64 = scratch.half[..n].iter().map(|h| 2.0 * h).product();
    let mut normal = [0.0; 3];
    for &j in &scratch.candidates {
        let mut cell = ConvexCell::cube(&scratch.half[..n]);
        for &k in &scratch.candidates {
            if k == j {
                continue;
            }
            // piece j dominates piece k:  xi . (y_k - y_j) <= l_j - l_k
            let (yj, yk) = (pot.slope(j), pot.slope(k));
            for a in 0..n {
                normal[a] = yk[a] - yj[a];
            }
            cell.clip(&normal[..n], scratch.level[j] - scratch.level[k]);
            if cell.is_empty() {
                break;
            }
        }
        if cell.is_empty() {
            continue;
        }
        let (vol, centroid) = cell.volume_centroid();
        if vol > 0.0 {
            emit(j, vol / full, &centroid[..n]);
        }
    }
}

/// Convex cell in local coordinates, clipped by half-spaces `a . xi <= b`.
#[derive(Debug, Clone)]
pub(crate) enum ConvexCell {
    Interval(f64, f64),
    Polygon(Vec<[f64; 2]>),
    Polyhedron(Vec<Vec<[f64; 3]>>),
}

impl ConvexCell {
    pub(crate) fn cube(half: &[f64]) -> Self {
        match half.len() {
            1 => Self::Interval(-half[0], half[0]),
            2 => {
                let (hx, hy) = (half[0], half[1]);
                Self::Polygon(vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
            }
            3 => {
                let (hx, hy, hz) = (half[0], half[1], half[2]);
                let v = |sx: f64, sy: f64, sz: f64| [sx * hx, sy * hy, sz * hz];
                Self::Polyhedron(vec![
                    vec![v(-1., -1., -1.), v(-1., 1., -1.), v(1., 1., -1.), v(1., -1., -1.)],
                    vec![v(-1., -1., 1.), v(1., -1., 1.), v(1., 1., 1.), v(-1., 1., 1.)],
                    vec![v(-1., -1., -1.), v(1., -1., -1.), v(1., -1., 1.), v(-1., -1., 1.)],
                    vec![v(-1., 1., -1.), v(-1., 1., 1.), v(1., 1., 1.), v(1., 1., -1.)],
                    vec![v(-1., -1., -1.), v(-1., -1., 1.), v(-1., 1., 1.), v(-1., 1., -1.)],
                    vec![v(1., -1., -1.), v(1., 1., -1.), v(1., 1., 1.), v(1., -1., 1.)],
                ])
            }
            n => panic!("cells of dimension {n} are not supported"),
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        match self {
            Self::Interval(lo, hi) => hi <= lo,
            Self::Polygon(p) => p.len() < 3,
            Self::Polyhedron(f) => f.len() < 4,
        }
    }

    pub(crate) fn clip(&mut self, a: &[f64], b: f64) {
        match self {
            Self::Interval(lo, hi) => {
                let s = a[0];
                if s > 0.0 {
                    *hi = hi.min(b / s);
                } else if s < 0.0 {
                    *lo = lo.max(b / s);
                } else if b < 0.0 {
                    *hi = *lo;
                }
            }
            Self::Polygon(poly) => {
                let a = [a[0], a[1]];
                *poly = clip_polygon(poly, |p| a[0] * p[0] + a[1] * p[1] - b, |p, q, t| {
                    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
                })
                .0;
            }
            Self::Polyhedron(faces) => {
                let a = [a[0], a[1], a[2]];
                let side = |p: &[f64; 3]| a[0] * p[0] + a[1] * p[1] + a[2] * p[2] - b;
                let lerp = |p: &[f64; 3], q: &[f64; 3], t: f64| {
                    [
                        p[0] + t * (q[0] - p[0]),
                        p[1] + t * (q[1] - p[1]),
                        p[2] + t * (q[2] - p[2]),
                    ]
                };
                let mut out = Vec::with_capacity(faces.len() + 1);
                let mut cap = Vec::new();
                for face in faces.iter() {
                    let (clipped, on_plane) = clip_polygon(face, side, lerp);
                    cap.extend(on_plane);
                    if clipped.len() >= 3 {
                        out.push(clipped);
                    }
                }
                if cap.len() >= 3 && !out.is_empty() {
                    out.push(order_around(cap, a));
                }
                *faces = out;
            }
        }
    }

    /// Volume and centroid (local coordinates).
    pub(crate) fn volume_centroid(&self) -> (f64, [f64; 3]) {
        match self {
            Self::Interval(lo, hi) => ((hi - lo).max(0.0), [0.5 * (lo + hi), 0.0, 0.0]),
            Self::Polygon(p) => {
                let mut area2 = 0.0;
                let (mut cx, mut cy) = (0.0, 0.0);
                for i in 0..p.len() {
                    let (a, b) = (p[i], p[(i + 1) % p.len()]);
                    let cross = a[0] * b[1] - b[0] * a[1];
                    area2 += cross;
                    cx += (a[0] + b[0]) * cross;
                    cy += (a[1] + b[1]) * cross;
                }
                let area = 0.5 * area2.abs();
                if area2 == 0.0 {
                    return (0.0, [0.0; 3]);
                }
                (area, [cx / (3.0 * area2), cy / (3.0 * area2), 0.0])
            }
            Self::Polyhedron(faces) => {
                let mut count = 0.0;
                let mut p0 = [0.0; 3];
                for f in faces {
                    for v in f {
                        for a in 0..3 {
                            p0[a] += v[a];
                        }
                        count += 1.0;
                    }
                }
                for c in &mut p0 {
                    *c /= count;
                }
                let mut vol = 0.0;
                let mut cen = [0.0; 3];
                for f in faces {
                    for i in 1..f.len().saturating_sub(1) {
                        let (a, b, c) = (f[0], f[i], f[i + 1]);
                        let d = |v: [f64; 3]| [v[0] - p0[0], v[1] - p0[1], v[2] - p0[2]];
                        let (u, v, w) = (d(a), d(b), d(c));
                        let det = u[0] * (v[1] * w[2] - v[2] * w[1])
                            - u[1] * (v[0] * w[2] - v[2] * w[0])
                            + u[2] * (v[0] * w[1] - v[1] * w[0]);
                        let t = det.abs() / 6.0;
                        vol += t;
                        for k in 0..3 {
                            cen[k] += t * (p0[k] + a[k] + b[k] + c[k]) / 4.0;
                        }
                    }
                }
                if vol == 0.0 {
                    return (0.0, [0.0; 3]);
                }
                (vol, [cen[0] / vol, cen[1] / vol, cen[2] / vol])
            }
        }
    }
}

/// One Sutherland-Hodgman pass. Returns the clipped polygon and the points
/// of the result that lie on the clipping plane.
fn clip_polygon<P: Copy>(
    poly: &[P],
    side: impl Fn(&P) -> f64,
    lerp: impl Fn(&P, &P, f64) -> P,
) -> (Vec<P>, Vec<P>) {
    let mut out = Vec::with_capacity(poly.len() + 2);
    let mut on_plane = Vec::new();
    for i in 0..poly.len() {
        let p = &poly[i];
        let q = &poly[(i + 1) % poly.len()];
        let (dp, dq) = (side(p), side(q));
        if dp <= 0.0 {
            out.push(*p);
            if dp == 0.0 {
                on_plane.push(*p);
            }
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let x = lerp(p, q, dp / (dp - dq));
            out.push(x);
            on_plane.push(x);
        }
    }
    (out, on_plane)
}

/// Sort coplanar points by angle around their mean in the plane with normal `a`.
fn order_around(mut pts: Vec<[f64; 3]>, a: [f64; 3]) -> Vec<[f64; 3]> {
    let k = pts.len() as f64;
    let mut m = [0.0; 3];
    for p in &pts {
        for i in 0..3 {
            m[i] += p[i] / k;
        }
    }
    let helper = if a[0].abs() < 0.9 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let e1 = cross(a, helper);
    let e2 = cross(a, e1);
    let angle = |p: &[f64; 3]| {
        let d = [p[0] - m[0], p[1] - m[1], p[2] - m[2]];
        let x = d[0] * e1[0] + d[1] * e1[1] + d[2] * e1[2];
        let y = d[0] * e2[0] + d[1] * e2[1] + d[2] * e2[2];
        y.atan2(x)
    };
    pts.sort_by(|p, q| angle(p).total_cmp(&angle(q)));
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDensity;

    /// Brute-force moments from a fine sub-sampling of each cell.
    fn sampled_moments(
        spec: &GridSpec,
        values: &[f64],
        pot: &PiecewiseAffinePotential,
        sub: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = spec.dim();
        let k = pot.len();
        let mut mass = vec![0.0; k];
        let mut mom = vec![0.0; k * n];
        let h = spec.cell_widths();
        let subcells = sub.pow(n as u32);
        let w = spec.cell_volume() / subcells as f64;
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        for cell in 0..spec.cell_count() {
            spec.cell_center(cell, &mut c);
            for s in 0..subcells {
                let mut rest = s;
                for a in 0..n {
                    let i = rest % sub;
                    rest /= sub;
                    x[a] = c[a] - 0.5 * h[a] + (i as f64 + 0.5) * h[a] / sub as f64;
                }
                let j = pot.argmax(&x);
                mass[j] += values[cell] * w;
                for a in 0..n {
                    mom[j * n + a] += values[cell] * w * x[a];
                }
            }
        }
        (mass, mom)
    }

    fn check_against_sampling(spec: GridSpec, pot: PiecewiseAffinePotential, sub: usize, tol: f64) {
        let rho = GridDensity::from_fn(spec.clone(), |x| 1.0 + 0.5 * x[0].sin() + 0.1 * x.iter().sum::<f64>().cos())
            .unwrap()
            .normalized()
            .unwrap();
        let exact = laguerre_moments(&spec, rho.values(), &pot);
        let (mass, mom) = sampled_moments(&spec, rho.values(), &pot, sub);
        assert!((exact.total_mass() - 1.0).abs() < 1e-12);
        for j in 0..pot.len() {
            assert!((exact.mass[j] - mass[j]).abs() < tol, "mass {j}: {} vs {}", exact.mass[j], mass[j]);
            for (a, b) in exact.first_moment(j).iter().zip(&mom[j * spec.dim()..]) {
                assert!((a - b).abs() < tol, "moment {j}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn one_dimensional_split_is_exact() {
        // boundary at x = 0.3 inside a cell
        let spec = GridSpec::cube(1, 1.0, 10).unwrap();
        let pot = PiecewiseAffinePotential::new(1, vec![-1.0, 1.0], vec![0.3, -0.3]).unwrap();
        let rho = GridDensity::from_fn(spec.clone(), |_| 0.5).unwrap();
        let m = laguerre_moments(&spec, rho.values(), &pot);
        assert!((m.mass[0] - 0.5 * 0.7).abs() < 1e-15);
        assert!((m.mass[1] - 0.5 * 1.3).abs() < 1e-15);
        // int_{-0.3}^{1} x / 2 dx
        assert!((m.first_moment(1)[0] - 0.25 * (1.0 - 0.09)).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_matches_sampling() {
        let spec = GridSpec::cube(2, 2.0, 12).unwrap();
        let pot = PiecewiseAffinePotential::new(
            2,
            vec![1.0, 0.0, -0.5, 0.8, -0.5, -0.8, 0.1, 0.05],
            vec![0.1, -0.2, 0.05, -0.4],
        )
        .unwrap();
        check_against_sampling(spec, pot, 200, 2e-4);
    }

    #[test]
    fn three_dimensional_matches_sampling() {
        let spec = GridSpec::cube(3, 1.0, 6).unwrap();
        let pot = PiecewiseAffinePotential::new(
            3,
            vec![1.0, 0.0, 0.0, -0.5, 0.9, 0.1, -0.5, -0.8, 0.3, 0.0, 0.2, -1.0],
            vec![0.05, -0.1, 0.0, 0.12],
        )
        .unwrap();
        check_against_sampling(spec, pot, 40, 2e-3);
    }

    #[test]
    fn polyhedron_clip_halves_the_cube() {
        let mut c = ConvexCell::cube(&[1.0, 1.0, 1.0]);
        c.clip(&[1.0, 1.0, 1.0], 0.0);
        let (v, cen) = c.volume_centroid();
        assert!((v - 4.0).abs() < 1e-12);
        assert!(cen.iter().all(|x| *x < 0.0));
        c.clip(&[-1.0, 0.0, 0.0], -5.0);
        assert!(c.is_empty() || c.volume_centroid().0 == 0.0);
    }

    #[test]
    fn integral_of_potential_matches_pointwise_quadrature_in_one_cell_regions() {
        let spec = GridSpec::cube(1, 3.0, 6).unwrap();
        let pot = PiecewiseAffinePotential::new(1, vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let rho = GridDensity::from_fn(spec.clone(), |x| (1.0 + x[0].abs()).powi(-3)).unwrap();
        let m = laguerre_moments(&spec, rho.values(), &pot);
        let direct = rho.integrate(|x| x[0].abs());
        assert!((m.integral_of_potential(&pot) - direct).abs() < 1e-14);
    }
}
