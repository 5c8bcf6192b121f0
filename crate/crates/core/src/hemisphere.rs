//! Surfaces `{(x/φ(x), 1/φ(x))}` built from q = 2 solutions, polar bodies of
//! convex polygons, and mesh export.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::laguerre::laguerre_moments;
use crate::measure::DiscreteMeasure;
use crate::solver::SolveReport;
use crate::{Error, Result};

/// Fraction of the density mass kept by default.
pub const DEFAULT_COVERAGE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    /// Coordinates per vertex: `n + 1`.
    pub width: usize,
    pub vertices: Vec<f64>,
    /// Triangles (n = 2).
    pub faces: Vec<[usize; 3]>,
    /// Polyline pieces (n = 1).
    pub segments: Vec<[usize; 2]>,
    /// Grid cell of each vertex.
    pub source: Vec<usize>,
}

impl SurfaceMesh {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertices[i * self.width..(i + 1) * self.width]
    }
}

/// Mesh over the cells carrying `DEFAULT_COVERAGE` of the density mass.
pub fn build_surface(report: &SolveReport) -> Result<SurfaceMesh> {
    build_surface_with_coverage(report, DEFAULT_COVERAGE)
}

pub fn build_surface_with_coverage(report: &SolveReport, coverage: f64) -> Result<SurfaceMesh> {
    let s = &report.solution;
    if s.q != 2.0 {
        return Err(Error::WrongExponent(s.q));
    }
    if !s.converged {
        return Err(Error::NotConverged);
    }
    let n = s.dimension;
    if n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let grid = s.grid();
    let phi = s.phi_values();
    if let Some(i) = phi.iter().position(|f| !(*f > 0.0)) {
        return Err(Error::Domain(format!("φ = {} is not positive at cell {i}", phi[i])));
    }
    let rho = s.density.values();

    // φ is convex, so the heaviest cells form a sublevel set of φ.
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    let total: f64 = rho.iter().sum();
    let mut keep = vec![false; rho.len()];
    let mut acc = 0.0;
    for &i in &order {
        if acc >= coverage * total {
            break;
        }
        keep[i] = true;
        acc += rho[i];
    }

    let mut index = vec![usize::MAX; rho.len()];
    let mut mesh = SurfaceMesh {
        width: n + 1,
        vertices: Vec::new(),
        faces: Vec::new(),
        segments: Vec::new(),
        source: Vec::new(),
    };
    let mut x = vec![0.0; n];
    for cell in 0..rho.len() {
        if !keep[cell] {
            continue;
        }
        grid.cell_center(cell, &mut x);
        let inv = 1.0 / phi[cell];
        index[cell] = mesh.source.len();
        mesh.vertices.extend(x.iter().map(|v| v * inv));
        mesh.vertices.push(inv);
        mesh.source.push(cell);
    }
    let m = grid.cells_per_axis;
    if n == 1 {
        for k in 0..m.saturating_sub(1) {
            if keep[k] && keep[k + 1] {
                mesh.segments.push([index[k], index[k + 1]]);
            }
        }
    } else {
        for i in 0..m.saturating_sub(1) {
            for j in 0..m - 1 {
                let c = [i * m + j, i * m + j + 1, (i + 1) * m + j + 1, (i + 1) * m + j];
                if c.iter().all(|&k| keep[k]) {
                    let v = c.map(|k| index[k]);
                    mesh.faces.push([v[0], v[1], v[2]]);
                    mesh.faces.push([v[0], v[2], v[3]]);
                }
            }
        }
    }
    Ok(mesh)
}

/// Largest deviation from `p_{n+1} φ(x) = 1` and `p_i = x_i p_{n+1}`.
pub fn vertex_identity_error(mesh: &SurfaceMesh, report: &SolveReport) -> f64 {
    let s = &report.solution;
    let grid = s.grid();
    let n = s.dimension;
    let values = s.phi_values();
    let mut x = vec![0.0; n];
    let mut worst = 0.0f64;
    for (i, &cell) in mesh.source.iter().enumerate() {
        let p = mesh.vertex(i);
        grid.cell_center(cell, &mut x);
        let phi = values[cell];
        let last = p[n];
        worst = worst.max((last * phi - 1.0).abs());
        for a in 0..n {
            worst = worst.max((p[a] - x[a] * last).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub samples: usize,
    pub min_distance: f64,
    pub max_distance: f64,
    /// All offsets are nonnegative up to the tolerance.
    pub consistent: bool,
}

/// The surface bounds the convex set `{(p, s) : s φ(p/s) <= 1}`, which
/// contains `o = (0, 1/(2 φ(0)))`. For random interior vertices of a 2D mesh,
/// the offset of the vertex beyond the plane of each triangle of three grid
/// neighbours that the ray from `o` crosses; convexity makes it nonnegative.
/// Vertices whose ray misses all four triangles are redrawn.
pub fn local_convexity_check(mesh: &SurfaceMesh, report: &SolveReport, samples: usize, seed: u64, tol: f64) -> Result<ConvexityCheck> {
    if mesh.width != 3 {
        return Err(Error::UnsupportedDimension(mesh.width - 1));
    }
    let m = report.solution.grid().cells_per_axis;
    let by_cell: BTreeMap<usize, usize> = mesh.source.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let interior: Vec<(usize, [usize; 4])> = mesh
        .source
        .iter()
        .enumerate()
        .filter_map(|(v, &c)| {
            let (i, j) = (c / m, c % m);
            if i == 0 || j == 0 || i + 1 == m || j + 1 == m {
                return None;
            }
            let nb = [c - m, c + m, c - 1, c + 1];
            let idx: Vec<usize> = nb.iter().filter_map(|k| by_cell.get(k).copied()).collect();
            (idx.len() == 4).then(|| (v, [idx[0], idx[1], idx[2], idx[3]]))
        })
        .collect();
    if interior.is_empty() {
        return Err(Error::Domain("mesh has no interior vertices".into()));
    }
    let phi0 = report.solution.potential.phi(&[0.0, 0.0]);
    let origin = [0.0, 0.0, 0.5 / phi0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut taken = 0;
    for _ in 0..20 * samples {
        if taken == samples {
            break;
        }
        let (v, nb) = interior[rng.gen_range(0..interior.len())];
        let p = mesh.vertex(v);
        let mut used = false;
        for skip in 0..4 {
            let tri: Vec<&[f64]> = (0..4).filter(|&k| k != skip).map(|k| mesh.vertex(nb[k])).collect();
            let Some(d) = offset_beyond_triangle(&origin, p, &tri) else {
                continue;
            };
            lo = lo.min(d);
            hi = hi.max(d);
            used = true;
        }
        taken += used as usize;
    }
    if taken == 0 {
        return Err(Error::Domain("no vertex projects inside its neighbours".into()));
    }
    Ok(ConvexityCheck {
        samples: taken,
        min_distance: lo,
        max_distance: hi,
        consistent: lo >= -tol,
    })
}

/// Where the ray from `o` through `p` meets the plane of `tri`: returns
/// `(1 - t) |p - o|` for the hit `o + t (p - o)` inside the triangle.
fn offset_beyond_triangle(o: &[f64; 3], p: &[f64], tri: &[&[f64]]) -> Option<f64> {
    let v = |x: &[f64]| nalgebra::Vector3::new(x[0], x[1], x[2]);
    let (o, p, a, b, c) = (v(o), v(p), v(tri[0]), v(tri[1]), v(tri[2]));
    let m = nalgebra::Matrix3::from_columns(&[p - o, a - b, a - c]);
    let sol = m.lu().solve(&(a - o))?;
    let (t, l1, l2) = (sol[0], sol[1], sol[2]);
    (t > 0.0 && l1 >= 0.0 && l2 >= 0.0 && l1 + l2 <= 1.0).then(|| (1.0 - t) * (p - o).norm())
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon2D {
    vertices: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Polygon2D {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let k = vertices.len();
        if k < 3 {
            return Err(Error::NotConvex);
        }
        let scale = vertices.iter().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        let tol = 1e-12 * scale * scale;
        for i in 0..k {
            if cross(vertices[i], vertices[(i + 1) % k], vertices[(i + 2) % k]) < -tol {
                return Err(Error::NotConvex);
            }
        }
        let p = Self { vertices };
        if p.area() <= 0.0 {
            return Err(Error::NotConvex);
        }
        Ok(p)
    }

    pub fn regular(k: usize, radius: f64) -> Result<Self> {
        Self::new(
            (0..k)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                    [radius * t.cos(), radius * t.sin()]
                })
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let k = self.vertices.len();
        0.5 * (0..k)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % k]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    pub fn centroid(&self) -> [f64; 2] {
        let k = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..k {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % k]);
            let c = a[0] * b[1] - b[0] * a[1];
            a2 += c;
            cx += (a[0] + b[0]) * c;
            cy += (a[1] + b[1]) * c;
        }
        [cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    /// Largest vertex distance to `other`, minimized over cyclic relabelings.
    pub fn vertex_distance(&self, other: &Self) -> f64 {
        let k = self.vertices.len();
        if other.vertices.len() != k {
            return f64::INFINITY;
        }
        (0..k)
            .map(|shift| {
                (0..k)
                    .map(|i| {
                        let (a, b) = (self.vertices[i], other.vertices[(i + shift) % k]);
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn translated(&self, t: [f64; 2]) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| [v[0] + t[0], v[1] + t[1]]).collect(),
        }
    }
}

/// `L° = {x : <x, s> <= 1 for all s in L}`; each edge line `n . x = d` of `L`
/// gives the vertex `n / d`.
pub fn polar_body(l: &Polygon2D) -> Result<Polygon2D> {
    let v = l.vertices();
    let k = v.len();
    let scale = v.iter().fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(k);
    for i in 0..k {
        let (a, b) = (v[i], v[(i + 1) % k]);
        let normal = [b[1] - a[1], a[0] - b[0]];
        let d = normal[0] * a[0] + normal[1] * a[1];
        let len = normal[0].hypot(normal[1]);
        if len == 0.0 {
            continue;
        }
        if d <= 1e-12 * len * scale {
            return Err(Error::OriginOutside);
        }
        let p = [normal[0] / d, normal[1] / d];
        // collinear edges give the same polar vertex
        if let Some(last) = out.last() {
            if (last[0] - p[0]).abs() <= 1e-12 * (1.0 + p[0].abs()) && (last[1] - p[1]).abs() <= 1e-12 * (1.0 + p[1].abs()) {
                continue;
            }
        }
        out.push(p);
    }
    if out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f[0] - l[0]).abs() <= 1e-12 * (1.0 + f[0].abs()) && (f[1] - l[1]).abs() <= 1e-12 * (1.0 + f[1].abs()) {
            out.pop();
        }
    }
    Polygon2D::new(out)
}

/// Convex hull (counterclockwise, no collinear points) by the monotone chain.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorDiagnostics {
    pub polar_barycenter: [f64; 2],
    pub polar_barycenter_norm: f64,
    pub l_area: f64,
    /// Area of the hull of atoms that receive mass.
    pub assigned_hull_area: f64,
    pub coverage: f64,
}

/// Barycenter of `L°` and how much of `L` the gradient image covers.
pub fn anchor_diagnostics(l: &Polygon2D, mu: &DiscreteMeasure, report: &SolveReport) -> Result<AnchorDiagnostics> {
    if mu.dim() != 2 {
        return Err(Error::UnsupportedDimension(mu.dim()));
    }
    let polar = polar_body(l)?;
    let b = polar.centroid();
    let s = &report.solution;
    let masses = laguerre_moments(s.grid(), s.density.values(), &s.potential).mass;
    let assigned: Vec<[f64; 2]> = (0..mu.len())
        .filter(|&j| masses[j] > 0.0)
        .map(|j| [mu.atom(j)[0], mu.atom(j)[1]])
        .collect();
    let hull = convex_hull(&assigned);
    let hull_area = if hull.len() >= 3 {
        Polygon2D { vertices: hull }.area()
    } else {
        0.0
    };
    let area = l.area();
    Ok(AnchorDiagnostics {
        polar_barycenter: b,
        polar_barycenter_norm: b[0].hypot(b[1]),
        l_area: area,
        assigned_hull_area: hull_area,
        coverage: hull_area / area,
    })
}

/// Atoms of the `k x k` tensor trapezoid rule on `[-1, 1]^2`: a discretization
/// of the uniform measure on the square.
pub fn square_lattice(k: usize) -> Result<DiscreteMeasure> {
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    let w1 = |i: usize| if i == 0 || i + 1 == k { 0.5 } else { 1.0 };
    for i in 0..k {
        for j in 0..k {
            let x = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (k - 1) as f64;
            points.push(vec![x, y]);
            weights.push(w1(i) * w1(j));
        }
    }
    Ok(DiscreteMeasure::normalized(2, points, weights)?.centered())
}

/// A mesh file format.
pub trait MeshFormat: Send + Sync {
    fn name(&self) -> &'static str;
    fn extension(&self) -> &'static str;
    fn write(&self, mesh: &SurfaceMesh, out: &mut dyn Write) -> Result<()>;
    /// Vertices (and whatever connectivity the format keeps).
    fn read(&self, input: &mut dyn Read) -> Result<SurfaceMesh>;
}

pub struct Obj;
pub struct Csv;

impl MeshFormat for Obj {
    fn name(&self) -> &'static str {
        "obj"
    }

    fn extension(&self) -> &'static str {
        "obj"
    }

    fn write(&self, mesh: &SurfaceMesh, out: &mut dyn Write) -> Result<()> {
        for i in 0..mesh.len() {
            let p = mesh.vertex(i);
            let z = if mesh.width == 2 { 0.0 } else { p[2] };
            writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], z)?;
        }
        for f in &mesh.faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        for s in &mesh.segments {
            writeln!(out, "l {} {}", s[0] + 1, s[1] + 1)?;
        }
        Ok(())
    }

    fn read(&self, input: &mut dyn Read) -> Result<SurfaceMesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut segments = Vec::new();
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad OBJ number '{s}': {e}")));
        let idx = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .and_then(|i| i.checked_sub(1))
                .ok_or_else(|| Error::Format(format!("bad OBJ index '{s}'")))
        };
        for line in BufReader::new(input).lines() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.first() {
                Some(&"v") if f.len() == 4 => {
                    for s in &f[1..] {
                        vertices.push(num(s)?);
                    }
                }
                Some(&"f") if f.len() == 4 => faces.push([idx(f[1])?, idx(f[2])?, idx(f[3])?]),
                Some(&"l") if f.len() == 3 => segments.push([idx(f[1])?, idx(f[2])?]),
                None => {}
                _ => return Err(Error::Format(format!("unsupported OBJ record '{line}'"))),
            }
        }
        let count = vertices.len() / 3;
        // polylines are written with a zero third coordinate
        let width = if faces.is_empty() && !segments.is_empty() { 2 } else { 3 };
        if width == 2 {
            vertices = vertices.chunks_exact(3).flat_map(|c| [c[0], c[1]]).collect();
        }
        Ok(SurfaceMesh {
            width,
            vertices,
            faces,
            segments,
            source: (0..count).collect(),
        })
    }
}

impl MeshFormat for Csv {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn extension(&self) -> &'static str {
        "csv"
    }

    fn write(&self, mesh: &SurfaceMesh, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..mesh.width).map(|a| format!("p{}", a + 1)).collect();
        header.push("cell".into());
        w.write_record(&header)?;
        for i in 0..mesh.len() {
            let mut row: Vec<String> = mesh.vertex(i).iter().map(|v| format!("{v:?}")).collect();
            row.push(mesh.source[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn read(&self, input: &mut dyn Read) -> Result<SurfaceMesh> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len().saturating_sub(1);
        if width == 0 {
            return Err(Error::Format("mesh CSV needs coordinate columns".into()));
        }
        let mut vertices = Vec::new();
        let mut source = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for a in 0..width {
                let s = &rec[a];
                vertices.push(s.parse::<f64>().map_err(|e| Error::Format(format!("bad value '{s}': {e}")))?);
            }
            let s = &rec[width];
            source.push(s.parse::<usize>().map_err(|e| Error::Format(format!("bad cell '{s}': {e}")))?);
        }
        Ok(SurfaceMesh {
            width,
            vertices,
            faces: Vec::new(),
            segments: Vec::new(),
            source,
        })
    }
}

pub fn mesh_formats() -> Vec<Box<dyn MeshFormat>> {
    vec![Box::new(Obj), Box::new(Csv)]
}

pub fn mesh_format(name: &str) -> Result<Box<dyn MeshFormat>> {
    mesh_formats()
        .into_iter()
        .find(|f| f.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Unknown {
            kind: "mesh format",
            name: name.into(),
        })
}

pub fn export_mesh(mesh: &SurfaceMesh, path: &Path, format: &str) -> Result<()> {
    let fmt = mesh_format(format)?;
    let mut out = BufWriter::new(File::create(path)?);
    fmt.write(mesh, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_mesh(path: &Path, format: &str) -> Result<SurfaceMesh> {
    let fmt = mesh_format(format)?;
    fmt.read(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon2D {
        Polygon2D::new(vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn square_polar_is_the_diamond() {
        let d = polar_body(&square()).unwrap();
        let diamond = Polygon2D::new(vec![[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert!(d.vertex_distance(&diamond) < 1e-15);
        assert!(polar_body(&d).unwrap().vertex_distance(&square()) < 1e-15);
    }

    #[test]
    fn inscribed_polygon_has_circumscribed_polar() {
        let l = Polygon2D::regular(64, 1.0).unwrap();
        let p = polar_body(&l).unwrap();
        let r = 1.0 / (std::f64::consts::PI / 64.0).cos();
        for v in p.vertices() {
            assert!((v[0].hypot(v[1]) - r).abs() < 1e-12);
        }
        assert!(polar_body(&p).unwrap().vertex_distance(&l) < 1e-12);
    }

    #[test]
    fn origin_outside_and_nonconvex_inputs() {
        assert!(matches!(polar_body(&square().translated([2.0, 0.0])), Err(Error::OriginOutside)));
        assert!(matches!(
            Polygon2D::new(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [1.0, 2.0]]),
            Err(Error::NotConvex)
        ));
    }

    #[test]
    fn collinear_edges_are_merged() {
        let l = Polygon2D::new(vec![[-1.0, -1.0], [0.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]).unwrap();
        assert_eq!(polar_body(&l).unwrap().vertices().len(), 4);
    }

    #[test]
    fn hull_of_lattice_is_the_square() {
        let mu = square_lattice(9).unwrap();
        let pts: Vec<[f64; 2]> = mu.atoms().map(|(y, _)| [y[0], y[1]]).collect();
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((Polygon2D::new(h).unwrap().area() - 4.0).abs() < 1e-14);
        assert!((mu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!(matches!(mesh_format("stl"), Err(Error::Unknown { .. })));
        assert_eq!(mesh_format("OBJ").unwrap().name(), "obj");
    }
}
