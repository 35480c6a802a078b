//! Discrete manifolds with boundary: meshes, metrics, geodesic and smoothed
//! distances, the boundary collar, the ghost layer beyond `∂M` and the
//! reflection `x ↦ x*`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Coordinates in the global chart; 1-D meshes leave the second slot at zero.
pub type Point = [f64; 2];

/// Metric tensor at a point. For `n = 1` only the `(0, 0)` entry is used and
/// the rest of the matrix is the identity.
pub type Tensor = Matrix2<f64>;

/// Analytic metric callback, used at quadrature points when present.
pub type MetricFn = Arc<dyn Fn(&Point) -> Tensor + Send + Sync>;

/// Simplicial mesh of a compact 1- or 2-manifold in a global chart.
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    boundary: Vec<bool>,
    closed: bool,
    /// Chart periods for closed flat meshes (`0` means no wrap).
    period: [f64; 2],
}

impl Mesh {
    pub fn new(
        dim: usize,
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        boundary_vertices: &[usize],
        closed: bool,
    ) -> Result<Self> {
        Self::periodic(dim, vertices, cells, boundary_vertices, closed, [0.0, 0.0])
    }

    /// Like [`Mesh::new`] but with chart coordinates identified modulo
    /// `period` (a zero component means no identification).
    pub fn periodic(
        dim: usize,
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        boundary_vertices: &[usize],
        closed: bool,
        period: [f64; 2],
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("dimension {dim} not supported")));
        }
        if period.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidMesh(format!("bad period {period:?}")));
        }
        let nv = vertices.len();
        let mut flat = Vec::with_capacity(cells.len() * (dim + 1));
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != dim + 1 {
                return Err(Error::InvalidMesh(format!("cell {c} has {} vertices", cell.len())));
            }
            if let Some(&bad) = cell.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references vertex {bad}")));
            }
            for a in 0..cell.len() {
                for b in a + 1..cell.len() {
                    if cell[a] == cell[b] {
                        return Err(Error::InvalidMesh(format!("cell {c} is degenerate")));
                    }
                }
            }
            flat.extend_from_slice(cell);
        }
        let mut boundary = vec![false; nv];
        for &b in boundary_vertices {
            if b >= nv {
                return Err(Error::InvalidMesh(format!("boundary vertex {b} out of range")));
            }
            boundary[b] = true;
        }
        let mesh = Self { dim, vertices, cells: flat, boundary, closed, period };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn period(&self) -> [f64; 2] {
        self.period
    }

    /// Chart vector from vertex `a` to vertex `b`, wrapped into the
    /// fundamental domain on periodic meshes.
    pub fn delta(&self, a: usize, b: usize) -> [f64; 2] {
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let mut d = [q[0] - p[0], q[1] - p[1]];
        for k in 0..2 {
            let per = self.period[k];
            if per > 0.0 {
                d[k] -= per * (d[k] / per).round();
            }
        }
        d
    }

    fn validate(&self) -> Result<()> {
        let topo = self.topological_boundary();
        if self.closed {
            if self.boundary.iter().any(|&b| b) {
                return Err(Error::InvalidMesh("closed mesh has boundary-flagged vertices".into()));
            }
            if topo.iter().any(|&b| b) {
                return Err(Error::InvalidMesh("mesh marked closed but has free faces".into()));
            }
        } else {
            for v in 0..self.num_vertices() {
                if self.boundary[v] && !topo[v] {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {v} is flagged as boundary but lies on no boundary face"
                    )));
                }
                if topo[v] && !self.boundary[v] {
                    return Err(Error::InvalidMesh(format!("boundary vertex {v} is not flagged")));
                }
            }
            if !self.boundary.iter().any(|&b| b) {
                return Err(Error::InvalidMesh("open mesh without boundary".into()));
            }
        }
        let interior = self.boundary.iter().filter(|&&b| !b).count();
        if interior < 2 {
            return Err(Error::InvalidMesh(format!("only {interior} interior vertices")));
        }
        if !self.is_connected() {
            return Err(Error::InvalidMesh("mesh is not connected".into()));
        }
        for c in 0..self.num_cells() {
            if self.cell_volume_flat(c) <= 0.0 {
                return Err(Error::InvalidMesh(format!("cell {c} has zero volume")));
            }
        }
        Ok(())
    }

    fn topological_boundary(&self) -> Vec<bool> {
        let mut flags = vec![false; self.num_vertices()];
        for ((a, b), count) in self.face_counts() {
            if count == 1 {
                flags[a] = true;
                if self.dim == 2 {
                    flags[b] = true;
                }
            }
        }
        flags
    }

    /// Faces (vertices for `n = 1`, edges for `n = 2`) with their cell counts.
    fn face_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            if self.dim == 1 {
                for &v in cell {
                    *counts.entry((v, v)).or_insert(0) += 1;
                }
            } else {
                for k in 0..3 {
                    let (a, b) = (cell[k], cell[(k + 1) % 3]);
                    *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_vertices()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&i| !self.boundary[i]).collect()
    }

    /// Boundary faces of a 2-D mesh as vertex pairs; empty for `n = 1`.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        if self.dim == 1 {
            return Vec::new();
        }
        let mut edges: Vec<_> =
            self.face_counts().into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        edges.sort_unstable();
        edges
    }

    /// Vertex adjacency through cell edges.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices()];
        for c in 0..self.num_cells() {
            let cell = self.cell(c);
            for &a in cell {
                for &b in cell {
                    if a != b && !adj[a].contains(&b) {
                        adj[a].push(b);
                    }
                }
            }
        }
        adj
    }

    /// Cells incident to each vertex.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_vertices()];
        for c in 0..self.num_cells() {
            for &v in self.cell(c) {
                out[v].push(c);
            }
        }
        out
    }

    pub fn cell_centroid(&self, c: usize) -> Point {
        let cell = self.cell(c);
        let k = cell.len() as f64;
        let base = self.vertices[cell[0]];
        let mut p = base;
        for &v in &cell[1..] {
            let d = self.delta(cell[0], v);
            p[0] += d[0] / k;
            p[1] += d[1] / k;
        }
        p
    }

    /// Chart (Euclidean) length or area of a cell.
    pub fn cell_volume_flat(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let e1 = self.delta(cell[0], cell[1]);
        if self.dim == 1 {
            e1[0].hypot(e1[1])
        } else {
            let e2 = self.delta(cell[0], cell[2]);
            0.5 * (e1[0] * e2[1] - e2[0] * e1[1]).abs()
        }
    }

    /// Parses the text mesh format; errors carry 1-based line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();
        let err = |line: usize, message: String| Error::MeshFormat { line, message };
        fn header<'a>(
            lines: &mut impl Iterator<Item = (usize, &'a str)>,
            key: &str,
        ) -> Result<(usize, usize)> {
            let err = |line: usize, message: String| Error::MeshFormat { line, message };
            let (line, l) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` header")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(line, format!("expected `{key} <int>`, found `{l}`")));
            }
            let value = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(line, format!("`{key}` needs a non-negative integer")))?;
            Ok((line, value))
        }
        let (dim_line, dim) = header(&mut lines, "dim")?;
        if dim != 1 && dim != 2 {
            return Err(err(dim_line, format!("dimension {dim} not supported")));
        }
        let (closed_line, closed) = header(&mut lines, "closed")?;
        if closed > 1 {
            return Err(err(closed_line, "closed must be 0 or 1".into()));
        }
        // Optional `period p1 [p2]` line for flat tori and circles.
        let mut period = [0.0, 0.0];
        if let Some(&(line, l)) = lines.peek() {
            if l.starts_with("period") {
                let values: Vec<f64> = l
                    .split_whitespace()
                    .skip(1)
                    .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad period `{t}`"))))
                    .collect::<Result<_>>()?;
                if values.len() != dim || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(err(line, format!("period needs {dim} non-negative values")));
                }
                period[..dim].copy_from_slice(&values);
                lines.next();
            }
        }
        let (_, nv) = header(&mut lines, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = lines.next().ok_or_else(|| err(0, "truncated vertex block".into()))?;
            let coords: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("bad coordinate `{t}`"))))
                .collect::<Result<_>>()?;
            if coords.len() != dim || coords.iter().any(|c| !c.is_finite()) {
                return Err(err(line, format!("expected {dim} finite coordinates")));
            }
            vertices.push([coords[0], if dim == 2 { coords[1] } else { 0.0 }]);
        }
        let (_, nc) = header(&mut lines, "cells")?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (line, l) = lines.next().ok_or_else(|| err(0, "truncated cell block".into()))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| err(line, format!("bad index `{t}`"))))
                .collect::<Result<_>>()?;
            if idx.len() != dim + 1 {
                return Err(err(line, format!("cell needs {} indices", dim + 1)));
            }
            if let Some(&bad) = idx.iter().find(|&&v| v >= nv) {
                return Err(err(line, format!("vertex index {bad} out of range")));
            }
            cells.push(idx);
        }
        let (bline, nb) = header(&mut lines, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        let mut last = bline;
        while boundary.len() < nb {
            let (line, l) = lines.next().ok_or_else(|| err(last, "truncated boundary block".into()))?;
            last = line;
            for t in l.split_whitespace() {
                let v: usize = t.parse().map_err(|_| err(line, format!("bad index `{t}`")))?;
                if v >= nv {
                    return Err(err(line, format!("boundary index {v} out of range")));
                }
                boundary.push(v);
            }
        }
        if boundary.len() != nb {
            return Err(err(last, format!("expected {nb} boundary indices, found {}", boundary.len())));
        }
        if let Some((line, l)) = lines.next() {
            return Err(err(line, format!("unexpected trailing content `{l}`")));
        }
        Self::periodic(dim, vertices, cells, &boundary, closed == 1, period)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "closed {}", u8::from(self.closed));
        if self.period != [0.0, 0.0] {
            let p: Vec<String> = self.period[..self.dim].iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(s, "period {}", p.join(" "));
        }
        let _ = writeln!(s, "vertices {}", self.num_vertices());
        for p in &self.vertices {
            if self.dim == 1 {
                let _ = writeln!(s, "{:e}", p[0]);
            } else {
                let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
            }
        }
        let _ = writeln!(s, "cells {}", self.num_cells());
        for c in 0..self.num_cells() {
            let idx: Vec<String> = self.cell(c).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", idx.join(" "));
        }
        let b = self.boundary_vertices();
        let _ = writeln!(s, "boundary {}", b.len());
        for v in b {
            let _ = writeln!(s, "{v}");
        }
        s
    }
}

fn tensor_det(dim: usize, g: &Tensor) -> f64 {
    if dim == 1 {
        g[(0, 0)]
    } else {
        g.determinant()
    }
}

fn tensor_inverse(dim: usize, g: &Tensor) -> Tensor {
    if dim == 1 {
        Tensor::new(1.0 / g[(0, 0)], 0.0, 0.0, 1.0)
    } else {
        g.try_inverse().unwrap_or_else(|| Tensor::from_element(f64::NAN))
    }
}

fn smallest_eigenvalue(dim: usize, g: &Tensor) -> f64 {
    if dim == 1 {
        return g[(0, 0)];
    }
    let (a, b, d) = (g[(0, 0)], 0.5 * (g[(0, 1)] + g[(1, 0)]), g[(1, 1)]);
    let mean = 0.5 * (a + d);
    mean - (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

/// Squared length of `v` in the metric `g`. A 1-D chart vector may carry two
/// components (curves drawn in the plane); its length is then scaled by `g₁₁`.
pub fn metric_norm2(dim: usize, g: &Tensor, v: [f64; 2]) -> f64 {
    if dim == 1 {
        g[(0, 0)] * (v[0] * v[0] + v[1] * v[1])
    } else {
        g[(0, 0)] * v[0] * v[0] + 2.0 * g[(0, 1)] * v[0] * v[1] + g[(1, 1)] * v[1] * v[1]
    }
}

/// Riemannian metric sampled at vertices, optionally backed by a callback.
#[derive(Clone)]
pub struct MetricField {
    dim: usize,
    values: Vec<Tensor>,
    analytic: Option<MetricFn>,
    cells: Option<Arc<Vec<Tensor>>>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField")
            .field("dim", &self.dim)
            .field("vertices", &self.values.len())
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl MetricField {
    pub fn flat(mesh: &Mesh) -> Self {
        Self { dim: mesh.dim(), values: vec![Tensor::identity(); mesh.num_vertices()], analytic: None, cells: None }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<Tensor>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: values.len() });
        }
        let values = values
            .into_iter()
            .map(|g| if mesh.dim() == 1 { Tensor::new(g[(0, 0)], 0.0, 0.0, 1.0) } else { g })
            .collect();
        let field = Self { dim: mesh.dim(), values, analytic: None, cells: None };
        field.validate()?;
        Ok(field)
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(&Point) -> Tensor + Send + Sync + 'static) -> Result<Self> {
        let f: MetricFn = Arc::new(f);
        let values = mesh.vertices().iter().map(|p| f(p)).collect();
        let mut field = Self::from_values(mesh, values)?;
        field.analytic = Some(f);
        Ok(field)
    }

    fn validate(&self) -> Result<()> {
        for (v, g) in self.values.iter().enumerate() {
            let symmetric = (g[(0, 1)] - g[(1, 0)]).abs() <= 1e-12 * g.norm();
            if !symmetric || !(smallest_eigenvalue(self.dim, g) > 0.0) {
                return Err(Error::MetricNotPositive { vertex: v });
            }
        }
        Ok(())
    }

    /// Overrides the per-cell representatives used by assemblies.
    pub fn with_cell_tensors(mut self, cells: Vec<Tensor>) -> Self {
        self.cells = Some(Arc::new(cells));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at_vertex(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn is_flat(&self) -> bool {
        self.cells.as_ref().map_or(true, |c| c.iter().all(|g| (g - Tensor::identity()).abs().max() <= 1e-14))
            && self.values.iter().all(|g| (g - Tensor::identity()).abs().max() <= 1e-14)
    }

    pub fn has_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    /// Metric representative for a cell: the callback at the centroid or the
    /// vertex average.
    pub fn cell_tensor(&self, mesh: &Mesh, c: usize) -> Tensor {
        if let Some(cells) = &self.cells {
            return cells[c];
        }
        let g = match &self.analytic {
            Some(f) => f(&mesh.cell_centroid(c)),
            None => {
                let cell = mesh.cell(c);
                cell.iter().map(|&v| self.values[v]).sum::<Tensor>() / cell.len() as f64
            }
        };
        if self.dim == 1 {
            Tensor::new(g[(0, 0)], 0.0, 0.0, 1.0)
        } else {
            g
        }
    }

    pub fn det(&self, g: &Tensor) -> f64 {
        tensor_det(self.dim, g)
    }

    pub fn inverse(&self, g: &Tensor) -> Tensor {
        tensor_inverse(self.dim, g)
    }
}

/// Lumped quadrature weights `w_i = Σ_{cells ∋ i} vol_g(cell)/(n+1)`.
pub fn quadrature_weights(mesh: &Mesh, metric: &MetricField) -> Vec<f64> {
    let k = (mesh.dim() + 1) as f64;
    let mut w = vec![0.0; mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        let g = metric.cell_tensor(mesh, c);
        let vol = mesh.cell_volume_flat(c) * metric.det(&g).sqrt();
        for &v in mesh.cell(c) {
            w[v] += vol / k;
        }
    }
    w
}

/// Quintic smoothstep cut-off: `1` below 1, `0` above 2, `C²` in between.
pub fn cutoff_chi(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let t = s - 1.0;
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// `ρ = d χ(d/ε) + 2ε (1 − χ(d/ε))`.
pub fn smooth_distance(dist: f64, epsilon: f64) -> f64 {
    if dist >= 2.0 * epsilon {
        return 2.0 * epsilon;
    }
    let c = cutoff_chi(dist / epsilon);
    dist * c + 2.0 * epsilon * (1.0 - c)
}

/// How pairwise distances are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceModel {
    /// Flat metric on a convex 2-D domain: chart distance is exact.
    Euclidean,
    /// Shortest paths on the mesh graph (exact in 1-D), sharpened by
    /// triangle updates in 2-D.
    Graph,
}

fn heap_key(d: f64) -> std::cmp::Reverse<OrdF64> {
    std::cmp::Reverse(OrdF64(d))
}

#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Minimal `d_a + t(d_b − d_a) + |v − a − t(b − a)|_g` over `t ∈ [0, 1]`.
fn triangle_update(g: &Tensor, a: Point, b: Point, v: Point, da: f64, db: f64) -> f64 {
    let e = [b[0] - a[0], b[1] - a[1]];
    let w = [v[0] - a[0], v[1] - a[1]];
    let ip = |x: [f64; 2], y: [f64; 2]| {
        g[(0, 0)] * x[0] * y[0] + g[(0, 1)] * (x[0] * y[1] + x[1] * y[0]) + g[(1, 1)] * x[1] * y[1]
    };
    let (aa, bb, cc) = (ip(e, e), ip(w, e), ip(w, w));
    let f = |t: f64| da + t * (db - da) + (aa * t * t - 2.0 * bb * t + cc).max(0.0).sqrt();
    let mut best = f(0.0).min(f(1.0));
    let delta = db - da;
    if delta * delta < aa {
        let disc = (aa * cc - bb * bb).max(0.0);
        let t = bb / aa - delta * disc.sqrt() / (aa * (aa - delta * delta).sqrt());
        if (0.0..=1.0).contains(&t) {
            best = best.min(f(t));
        }
    }
    best
}

/// All-pairs geodesic distances.
#[derive(Clone, Debug)]
pub enum DistanceTable {
    Euclidean { points: Vec<Point> },
    Dense { n: usize, data: Vec<f64> },
}

impl DistanceTable {
    pub fn build(mesh: &Mesh, metric: &MetricField) -> Result<(Self, DistanceModel)> {
        if mesh.dim() == 2 && metric.is_flat() && !mesh.closed() && is_convex(mesh) {
            return Ok((Self::Euclidean { points: mesh.vertices().to_vec() }, DistanceModel::Euclidean));
        }
        let n = mesh.num_vertices();
        let adj = mesh.adjacency();
        let vertex_cells = mesh.vertex_cells();
        let cell_tensors: Vec<Tensor> = (0..mesh.num_cells()).map(|c| metric.cell_tensor(mesh, c)).collect();
        // Edge weights use the average metric of the incident cells.
        let weights: Vec<Vec<f64>> = (0..n)
            .map(|v| {
                adj[v]
                    .iter()
                    .map(|&w| {
                        let shared: Vec<usize> =
                            vertex_cells[v].iter().copied().filter(|c| vertex_cells[w].contains(c)).collect();
                        let g = shared.iter().map(|&c| cell_tensors[c]).sum::<Tensor>() / shared.len() as f64;
                        metric_norm2(mesh.dim(), &g, mesh.delta(v, w)).sqrt()
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|src| {
                let mut dist = vec![f64::INFINITY; n];
                dist[src] = 0.0;
                let mut heap = BinaryHeap::new();
                heap.push((heap_key(0.0), src));
                while let Some((std::cmp::Reverse(OrdF64(d)), v)) = heap.pop() {
                    if d > dist[v] {
                        continue;
                    }
                    for (k, &w) in adj[v].iter().enumerate() {
                        let nd = d + weights[v][k];
                        if nd < dist[w] {
                            dist[w] = nd;
                            heap.push((heap_key(nd), w));
                        }
                    }
                }
                if mesh.dim() == 2 {
                    sharpen(mesh, &cell_tensors, &mut dist, src);
                }
                dist
            })
            .collect();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            for j in 0..n {
                // Symmetrize the sharpened values.
                let d = 0.5 * (row[j] + rows[j][i]);
                if !d.is_finite() {
                    return Err(Error::Unreachable(i, j));
                }
                data.push(d);
            }
        }
        Ok((Self::Dense { n, data }, DistanceModel::Graph))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Euclidean { points } => {
                let (p, q) = (points[i], points[j]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            }
            Self::Dense { n, data } => data[i * n + j],
        }
    }
}

/// One-ring Gauss–Seidel triangle updates after Dijkstra.
fn sharpen(mesh: &Mesh, tensors: &[Tensor], dist: &mut [f64], src: usize) {
    for sweep in 0..4 {
        let mut changed = false;
        let order: Box<dyn Iterator<Item = usize>> = if sweep % 2 == 0 {
            Box::new(0..mesh.num_cells())
        } else {
            Box::new((0..mesh.num_cells()).rev())
        };
        for c in order {
            let cell = mesh.cell(c);
            for k in 0..3 {
                let (v, a, b) = (cell[k], cell[(k + 1) % 3], cell[(k + 2) % 3]);
                if v == src {
                    continue;
                }
                let (ea, eb) = (mesh.delta(v, a), mesh.delta(v, b));
                let cand = triangle_update(&tensors[c], ea, eb, [0.0, 0.0], dist[a], dist[b]);
                if cand < dist[v] - 1e-14 {
                    dist[v] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Whether a 2-D mesh covers a convex domain (single boundary with every
/// vertex on the inner side of every boundary edge).
pub fn is_convex(mesh: &Mesh) -> bool {
    if mesh.dim() != 2 || mesh.closed() {
        return false;
    }
    let centroid = {
        let n = mesh.num_vertices() as f64;
        mesh.vertices().iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n])
    };
    mesh.boundary_edges().iter().all(|&(a, b)| {
        let (p, q) = (mesh.vertex(a), mesh.vertex(b));
        let normal = [q[1] - p[1], p[0] - q[0]];
        let side = |x: &Point| normal[0] * (x[0] - p[0]) + normal[1] * (x[1] - p[1]);
        let reference = side(&centroid).signum();
        let scale = (normal[0].hypot(normal[1])) * 1e-9;
        mesh.vertices().iter().all(|x| side(x) * reference >= -scale)
    })
}

/// Geodesic distance between two points of the meshed domain. Exact for flat
/// metrics on convex 2-D domains; otherwise the points snap to the nearest
/// vertices and the mesh graph distance is returned.
pub fn geodesic_distance(mesh: &Mesh, metric: &MetricField, x: &Point, y: &Point) -> Result<f64> {
    if mesh.dim() == 2 && metric.is_flat() && !mesh.closed() && is_convex(mesh) {
        return Ok((x[0] - y[0]).hypot(x[1] - y[1]));
    }
    let (table, _) = DistanceTable::build(mesh, metric)?;
    Ok(table.get(nearest_vertex(mesh, x), nearest_vertex(mesh, y)))
}

pub fn nearest_vertex(mesh: &Mesh, x: &Point) -> usize {
    (0..mesh.num_vertices())
        .min_by(|&a, &b| {
            let da = (mesh.vertex(a)[0] - x[0]).hypot(mesh.vertex(a)[1] - x[1]);
            let db = (mesh.vertex(b)[0] - x[0]).hypot(mesh.vertex(b)[1] - x[1]);
            da.total_cmp(&db)
        })
        .unwrap_or(0)
}

/// Nearest boundary point of a chart point: `(foot, distance)`.
fn nearest_boundary_point(mesh: &Mesh, metric: &MetricField, x: &Point) -> Option<(Point, f64)> {
    if mesh.closed() {
        return None;
    }
    let mut best: Option<(Point, f64)> = None;
    let mut consider = |p: Point, d: f64| {
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((p, d));
        }
    };
    if mesh.dim() == 1 {
        for b in mesh.boundary_vertices() {
            let p = *mesh.vertex(b);
            consider(p, metric_norm2(1, metric.at_vertex(b), [p[0] - x[0], p[1] - x[1]]).sqrt());
        }
    } else {
        for (a, b) in mesh.boundary_edges() {
            let (p, q) = (*mesh.vertex(a), *mesh.vertex(b));
            let g = 0.5 * (metric.at_vertex(a) + metric.at_vertex(b));
            let e = [q[0] - p[0], q[1] - p[1]];
            let w = [x[0] - p[0], x[1] - p[1]];
            let ee = metric_norm2(2, &g, e);
            let we = g[(0, 0)] * w[0] * e[0] + g[(0, 1)] * (w[0] * e[1] + w[1] * e[0]) + g[(1, 1)] * w[1] * e[1];
            let t = (we / ee).clamp(0.0, 1.0);
            let foot = [p[0] + t * e[0], p[1] + t * e[1]];
            consider(foot, metric_norm2(2, &g, [x[0] - foot[0], x[1] - foot[1]]).sqrt());
        }
    }
    best
}

/// Distance from a point to `∂M`; `+∞` on closed manifolds.
pub fn distance_to_boundary(mesh: &Mesh, metric: &MetricField, x: &Point) -> f64 {
    nearest_boundary_point(mesh, metric, x).map_or(f64::INFINITY, |(_, d)| d)
}

/// Collar coordinates `(p, s)` of a vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollarCoord {
    pub foot: Point,
    pub s: f64,
}

/// The collar `S_{2ε}` identified with `∂M × [0, 2ε)`.
#[derive(Clone, Debug)]
pub struct CollarChart {
    epsilon: f64,
    coords: Vec<Option<CollarCoord>>,
    dist_to_boundary: Vec<f64>,
}

impl CollarChart {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coord(&self, i: usize) -> Option<&CollarCoord> {
        self.coords[i].as_ref()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.coords[i].is_some()
    }

    pub fn len(&self) -> usize {
        self.coords.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `d(x_i, ∂M)` for every vertex (`+∞` on closed meshes).
    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        self.dist_to_boundary[i]
    }

    pub fn distances_to_boundary(&self) -> &[f64] {
        &self.dist_to_boundary
    }
}

/// Builds the collar chart; fails when the nearest-boundary-point assignment
/// is ambiguous inside `S_{2ε}` (focal points, ε too large).
pub fn build_collar(mesh: &Mesh, metric: &MetricField, epsilon: f64) -> Result<CollarChart> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon = {epsilon} must be positive")));
    }
    let n = mesh.num_vertices();
    if mesh.closed() {
        return Ok(CollarChart { epsilon, coords: vec![None; n], dist_to_boundary: vec![f64::INFINITY; n] });
    }
    let h = mesh_size(mesh, metric);
    let boundary_points: Vec<Point> = mesh.boundary_vertices().into_iter().map(|b| *mesh.vertex(b)).collect();
    let mut coords = vec![None; n];
    let mut dist = vec![0.0; n];
    for i in 0..n {
        let x = mesh.vertex(i);
        let (foot, s) = nearest_boundary_point(mesh, metric, x).expect("open mesh has a boundary");
        dist[i] = s;
        if s >= 2.0 * epsilon {
            continue;
        }
        // Another boundary point, well away from the foot, that is (nearly)
        // as close as the foot makes the chart ambiguous. The separation
        // floor of 3h keeps boundary neighbours of the foot, which sit within
        // the slack h on a straight edge, from counting.
        let g = metric.at_vertex(i);
        let min_sep = (2.0 * epsilon).max(3.0 * h);
        for &p in &boundary_points {
            let sep = metric_norm2(mesh.dim(), g, [p[0] - foot[0], p[1] - foot[1]]).sqrt();
            let d = metric_norm2(mesh.dim(), g, [p[0] - x[0], p[1] - x[1]]).sqrt();
            if sep >= min_sep && d <= s + h {
                return Err(Error::CollarNotInjective { vertex: i, epsilon });
            }
        }
        coords[i] = Some(CollarCoord { foot, s });
    }
    Ok(CollarChart { epsilon, coords, dist_to_boundary: dist })
}

/// Largest cell edge length in the metric.
pub fn mesh_size(mesh: &Mesh, metric: &MetricField) -> f64 {
    let mut h: f64 = 0.0;
    for c in 0..mesh.num_cells() {
        let g = metric.cell_tensor(mesh, c);
        let cell = mesh.cell(c);
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                h = h.max(metric_norm2(mesh.dim(), &g, mesh.delta(cell[a], cell[b])).sqrt());
            }
        }
    }
    h
}

/// `max(4h, diam/20)`.
pub fn default_epsilon(h: f64, diameter: f64) -> f64 {
    (4.0 * h).max(diameter / 20.0)
}

/// Reflection `x ↦ x* = (p, −s)`, realized in the chart as `2p − x`.
pub fn reflect_point(mesh: &Mesh, metric: &MetricField, collar: &CollarChart, x: &Point) -> Result<Point> {
    let (foot, s) = nearest_boundary_point(mesh, metric, x).ok_or_else(|| Error::OutsideCollar(x.to_vec()))?;
    if s >= 2.0 * collar.epsilon() {
        return Err(Error::OutsideCollar(x.to_vec()));
    }
    Ok([2.0 * foot[0] - x[0], 2.0 * foot[1] - x[1]])
}

/// A ghost point `(p, −s)` beyond the boundary.
#[derive(Clone, Debug)]
pub struct GhostPoint {
    pub source: usize,
    pub position: Point,
    pub s: f64,
    pub metric: Tensor,
}

/// `M̃ = M ∪ ghost layer`, with the metric extended by even reflection
/// `ḡ(p, −s) := g(p, s)`.
#[derive(Clone, Debug)]
pub struct ExtendedManifold {
    pub ghosts: Vec<GhostPoint>,
}

impl ExtendedManifold {
    pub fn ghost_of(&self, vertex: usize) -> Option<&GhostPoint> {
        self.ghosts.iter().find(|g| g.source == vertex)
    }

    /// `max |ḡ(p, 0⁻) − g(p, 0)|` over boundary vertices.
    pub fn boundary_metric_jump(&self, mesh: &Mesh, metric: &MetricField) -> f64 {
        self.ghosts
            .iter()
            .filter(|g| mesh.is_boundary(g.source))
            .map(|g| (g.metric - metric.at_vertex(g.source)).abs().max())
            .fold(0.0, f64::max)
    }
}

pub fn extend_manifold(mesh: &Mesh, metric: &MetricField, collar: &CollarChart) -> ExtendedManifold {
    let ghosts = (0..mesh.num_vertices())
        .filter_map(|i| {
            collar.coord(i).map(|c| {
                let x = mesh.vertex(i);
                GhostPoint {
                    source: i,
                    position: [2.0 * c.foot[0] - x[0], 2.0 * c.foot[1] - x[1]],
                    s: c.s,
                    metric: *metric.at_vertex(i),
                }
            })
        })
        .collect();
    ExtendedManifold { ghosts }
}

/// Options for assembling a [`Geometry`].
#[derive(Clone, Copy, Debug, Default)]
pub struct GeometryOptions {
    /// Collar half-width; `None` selects [`default_epsilon`].
    pub epsilon: Option<f64>,
}

/// Mesh, metric and every derived geometric table the kernel needs.
#[derive(Clone, Debug)]
pub struct Geometry {
    mesh: Mesh,
    metric: MetricField,
    model: DistanceModel,
    distances: DistanceTable,
    collar: CollarChart,
    weights: Vec<f64>,
    h: f64,
    diameter: f64,
    /// Row index into `image` for vertices inside `S_{2ε}`.
    image_rows: Vec<Option<usize>>,
    /// Unfolded distance `d(x*, y) = min_q d(x, q) + d(q, y)`, `q ∈ ∂M`,
    /// for collar rows; values above `2ε` are stored as `+∞` (ρ̄ clamps).
    image: Vec<Vec<f64>>,
}

impl Geometry {
    pub fn new(mesh: Mesh, metric: MetricField, options: GeometryOptions) -> Result<Self> {
        if metric.values().len() != mesh.num_vertices() || metric.dim() != mesh.dim() {
            return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: metric.values().len() });
        }
        let (distances, model) = DistanceTable::build(&mesh, &metric)?;
        let n = mesh.num_vertices();
        let h = mesh_size(&mesh, &metric);
        let diameter = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| distances.get(i, j)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        let epsilon = options.epsilon.unwrap_or_else(|| default_epsilon(h, diameter));
        let collar = build_collar(&mesh, &metric, epsilon)?;
        let weights = quadrature_weights(&mesh, &metric);
        let mut geometry = Self {
            mesh,
            metric,
            model,
            distances,
            collar,
            weights,
            h,
            diameter,
            image_rows: vec![None; n],
            image: Vec::new(),
        };
        geometry.build_image_table();
        Ok(geometry)
    }

    fn build_image_table(&mut self) {
        let n = self.mesh.num_vertices();
        let two_eps = 2.0 * self.collar.epsilon();
        let rows: Vec<usize> = (0..n).filter(|&i| self.collar.contains(i)).collect();
        let boundary = self.mesh.boundary_vertices();
        let edges = self.mesh.boundary_edges();
        let table: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|&x| {
                let mut out = vec![f64::INFINITY; n];
                match self.model {
                    DistanceModel::Euclidean => {
                        let px = *self.mesh.vertex(x);
                        let near: Vec<(Point, Point)> = edges
                            .iter()
                            .map(|&(a, b)| (*self.mesh.vertex(a), *self.mesh.vertex(b)))
                            .filter(|&(a, b)| point_segment_distance(&px, &a, &b) < two_eps)
                            .collect();
                        for (y, slot) in out.iter_mut().enumerate() {
                            let py = self.mesh.vertex(y);
                            for &(a, b) in &near {
                                *slot = slot.min(reflected_path_length(&px, py, &a, &b));
                            }
                        }
                    }
                    DistanceModel::Graph => {
                        let near: Vec<usize> =
                            boundary.iter().copied().filter(|&q| self.distances.get(x, q) < two_eps).collect();
                        for (y, slot) in out.iter_mut().enumerate() {
                            for &q in &near {
                                *slot = slot.min(self.distances.get(x, q) + self.distances.get(q, y));
                            }
                        }
                    }
                }
                for v in out.iter_mut() {
                    if *v >= two_eps {
                        *v = f64::INFINITY;
                    }
                }
                out
            })
            .collect();
        for (k, &x) in rows.iter().enumerate() {
            self.image_rows[x] = Some(k);
        }
        self.image = table;
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn model(&self) -> DistanceModel {
        self.model
    }

    pub fn collar(&self) -> &CollarChart {
        &self.collar
    }

    pub fn epsilon(&self) -> f64 {
        self.collar.epsilon()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn closed(&self) -> bool {
        self.mesh.closed()
    }

    /// Geodesic distance between vertices.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances.get(i, j)
    }

    /// `ρ(x_i, x_j)`.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        smooth_distance(self.distance(i, j), self.epsilon())
    }

    /// `d(x_i, ∂M)`.
    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        self.collar.distance_to_boundary(i)
    }

    /// Unfolded distance `d̄(x_i*, x_j)`; `None` outside the collar, `+∞`
    /// once it exceeds `2ε`.
    pub fn image_distance(&self, i: usize, j: usize) -> Option<f64> {
        self.image_rows[i].map(|k| self.image[k][j])
    }

    /// `ρ̄(x_i*, x_j)`.
    pub fn rho_image(&self, i: usize, j: usize) -> Option<f64> {
        self.image_distance(i, j).map(|d| if d.is_finite() { smooth_distance(d, self.epsilon()) } else { 2.0 * self.epsilon() })
    }

    /// Largest inscribed radius `max_x d(x, ∂M)`.
    pub fn inradius(&self) -> f64 {
        self.collar.distances_to_boundary().iter().copied().fold(0.0, f64::max)
    }

    /// Same mesh and distances, new collar width.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Precondition(format!("epsilon = {epsilon} must be positive")));
        }
        self.collar = build_collar(&self.mesh, &self.metric, epsilon)?;
        self.image_rows = vec![None; self.mesh.num_vertices()];
        self.image.clear();
        self.build_image_table();
        Ok(self)
    }

    /// Collar width used by the verification presets: a quarter of the
    /// inradius with a boundary, half the diameter without one, so that on
    /// closed manifolds `ρ` only clamps at the cut locus.
    pub fn verification_epsilon(&self) -> f64 {
        if self.closed() {
            0.5 * self.diameter
        } else {
            0.25 * self.inradius()
        }
    }
}

fn point_segment_distance(x: &Point, a: &Point, b: &Point) -> f64 {
    let e = [b[0] - a[0], b[1] - a[1]];
    let w = [x[0] - a[0], x[1] - a[1]];
    let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
    (x[0] - a[0] - t * e[0]).hypot(x[1] - a[1] - t * e[1])
}

/// `min_{q ∈ [a, b]} |x − q| + |q − y|` for `x, y` on the same side.
fn reflected_path_length(x: &Point, y: &Point, a: &Point, b: &Point) -> f64 {
    let e = [b[0] - a[0], b[1] - a[1]];
    let len2 = e[0] * e[0] + e[1] * e[1];
    // Mirror x across the line through a, b.
    let w = [x[0] - a[0], x[1] - a[1]];
    let t = (w[0] * e[0] + w[1] * e[1]) / len2;
    let foot = [a[0] + t * e[0], a[1] + t * e[1]];
    let xm = [2.0 * foot[0] - x[0], 2.0 * foot[1] - x[1]];
    // Intersection parameter of segment xm → y with the line.
    let side = |p: &Point| (p[0] - a[0]) * e[1] - (p[1] - a[1]) * e[0];
    let (sx, sy) = (side(&xm), side(y));
    if sx * sy < 0.0 || sx == 0.0 || sy == 0.0 {
        let u = if (sx - sy).abs() > 0.0 { sx / (sx - sy) } else { 0.0 };
        let q = [xm[0] + u * (y[0] - xm[0]), xm[1] + u * (y[1] - xm[1])];
        let s = ((q[0] - a[0]) * e[0] + (q[1] - a[1]) * e[1]) / len2;
        if (0.0..=1.0).contains(&s) {
            return (xm[0] - y[0]).hypot(xm[1] - y[1]);
        }
    }
    let via = |q: &Point| (x[0] - q[0]).hypot(x[1] - q[1]) + (q[0] - y[0]).hypot(q[1] - y[1]);
    via(a).min(via(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff_chi(0.5), 1.0);
        assert_eq!(cutoff_chi(3.0), 0.0);
        assert_relative_eq!(cutoff_chi(1.5), 0.5, epsilon = 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = cutoff_chi(1.0 + k as f64 / 100.0);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn smooth_distance_examples() {
        let eps = 0.2;
        assert_relative_eq!(smooth_distance(0.3 * eps, eps), 0.3 * eps, epsilon = 1e-15);
        assert_relative_eq!(smooth_distance(5.0 * eps, eps), 2.0 * eps, epsilon = 1e-15);
        let c = cutoff_chi(1.5);
        assert_relative_eq!(smooth_distance(1.5 * eps, eps), 1.5 * eps * c + 2.0 * eps * (1.0 - c), epsilon = 1e-15);
    }

    #[test]
    fn weighted_interval_distance() {
        let mesh = presets::interval_mesh(11, 1.0).unwrap();
        let metric = MetricField::from_fn(&mesh, |_| Tensor::new(4.0, 0.0, 0.0, 1.0)).unwrap();
        let d = geodesic_distance(&mesh, &metric, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_square_is_exact() {
        let mesh = presets::square_mesh(6).unwrap();
        let metric = MetricField::flat(&mesh);
        let d = geodesic_distance(&mesh, &metric, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(d, 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(geodesic_distance(&mesh, &metric, &[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn interval_collar_and_reflection() {
        let mesh = presets::interval_mesh(101, 1.0).unwrap();
        let metric = MetricField::flat(&mesh);
        let collar = build_collar(&mesh, &metric, 0.1).unwrap();
        for i in 0..mesh.num_vertices() {
            let x = mesh.vertex(i)[0];
            let s = x.min(1.0 - x);
            assert_eq!(collar.contains(i), s < 0.2 - 1e-12 || (s < 0.2 && collar.contains(i)));
            if let Some(c) = collar.coord(i) {
                assert_relative_eq!(c.s, s, epsilon = 1e-12);
            }
        }
        let r = reflect_point(&mesh, &metric, &collar, &[0.1, 0.0]).unwrap();
        assert_relative_eq!(r[0], -0.1, epsilon = 1e-15);
        assert_eq!(reflect_point(&mesh, &metric, &collar, &[0.0, 0.0]).unwrap(), [0.0, 0.0]);
        assert!(reflect_point(&mesh, &metric, &collar, &[0.5, 0.0]).is_err());
        assert_relative_eq!(distance_to_boundary(&mesh, &metric, &[0.3, 0.0]), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn collar_rejects_focal_epsilon() {
        let mesh = presets::interval_mesh(41, 1.0).unwrap();
        let metric = MetricField::flat(&mesh);
        assert!(matches!(build_collar(&mesh, &metric, 0.3), Err(Error::CollarNotInjective { .. })));
    }

    #[test]
    fn closed_mesh_has_empty_collar() {
        let mesh = presets::circle_mesh(64, 1.0).unwrap();
        let metric = MetricField::flat(&mesh);
        let collar = build_collar(&mesh, &metric, 0.1).unwrap();
        assert!(collar.is_empty());
        assert_eq!(distance_to_boundary(&mesh, &metric, mesh.vertex(3)), f64::INFINITY);
    }

    #[test]
    fn extension_metric_is_continuous() {
        let mesh = presets::interval_mesh(51, 1.0).unwrap();
        let metric = MetricField::from_fn(&mesh, |p| Tensor::new(1.0 + p[0], 0.0, 0.0, 1.0)).unwrap();
        let collar = build_collar(&mesh, &metric, 0.1).unwrap();
        let ext = extend_manifold(&mesh, &metric, &collar);
        assert_eq!(ext.boundary_metric_jump(&mesh, &metric), 0.0);
        let g = ext.ghost_of(0).unwrap();
        assert_eq!(g.position, [0.0, 0.0]);
        let g = ext.ghost_of(mesh.num_vertices() - 1).unwrap();
        assert_relative_eq!(g.position[0], 1.0, epsilon = 1e-15);
        // Flat ghost layer spans (-2ε, 0] and [1, 1 + 2ε).
        let ext = extend_manifold(&mesh, &MetricField::flat(&mesh), &collar);
        let min = ext.ghosts.iter().map(|g| g.position[0]).fold(f64::INFINITY, f64::min);
        let max = ext.ghosts.iter().map(|g| g.position[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(min > -0.2 && max < 1.2);
        assert!(ext.ghosts.iter().all(|g| g.metric == Tensor::identity()));
    }

    #[test]
    fn reflected_path_matches_mirror_image() {
        let (a, b) = ([0.0, 0.0], [1.0, 0.0]);
        let x = [0.3, 0.2];
        let y = [0.6, 0.5];
        let expect = (0.3f64).hypot(0.7);
        assert_relative_eq!(reflected_path_length(&x, &y, &a, &b), expect, epsilon = 1e-14);
        // Mirror intersection outside the segment: fall back to endpoints.
        let y = [3.0, 0.5];
        let via_b = (0.7f64).hypot(0.2) + (2.0f64).hypot(0.5);
        assert_relative_eq!(reflected_path_length(&x, &y, &a, &b), via_b, epsilon = 1e-14);
    }

    #[test]
    fn triangle_update_is_exact_for_plane_waves() {
        let g = Tensor::identity();
        // Plane wave d(p) = p.x from a far source.
        let d = triangle_update(&g, [0.0, 0.0], [0.0, 1.0], [1.0, 0.5], 0.0, 0.0);
        assert_relative_eq!(d, 1.0, epsilon = 1e-14);
        let dir = [0.6, 0.8];
        let f = |p: Point| dir[0] * p[0] + dir[1] * p[1];
        let (a, b, v) = ([0.0, 0.0], [1.0, 0.0], [0.8, 1.0]);
        assert_relative_eq!(triangle_update(&g, a, b, v, f(a), f(b)), f(v), epsilon = 1e-12);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "dim 1\nclosed 0\nvertices 3\n0\n0.5\nx\ncells 2\n0 1\n1 2\nboundary 2\n0 2\n";
        match Mesh::parse(text) {
            Err(Error::MeshFormat { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        let text = "dim 1\nclosed 0\nvertices 4\n0\n0.5\n1 # comment\n\n1.5\ncells 3\n0 1\n1 2\n2 3\nboundary 2\n0\n3\n";
        let mesh = Mesh::parse(text).unwrap();
        assert_eq!(mesh.boundary_vertices(), vec![0, 3]);
        let again = Mesh::parse(&mesh.to_text()).unwrap();
        assert_eq!(again.vertices(), mesh.vertices());
    }

    #[test]
    fn invalid_meshes_are_rejected() {
        // Boundary flag on an interior vertex.
        let text = "dim 1\nclosed 0\nvertices 4\n0\n1\n2\n3\ncells 3\n0 1\n1 2\n2 3\nboundary 3\n0 1 3\n";
        assert!(Mesh::parse(text).is_err());
        // Closed flag with free ends.
        let text = "dim 1\nclosed 1\nvertices 4\n0\n1\n2\n3\ncells 3\n0 1\n1 2\n2 3\nboundary 0\n";
        assert!(Mesh::parse(text).is_err());
        // Too few interior vertices.
        let text = "dim 1\nclosed 0\nvertices 3\n0\n1\n2\ncells 2\n0 1\n1 2\nboundary 2\n0 2\n";
        assert!(Mesh::parse(text).is_err());
        // Disconnected.
        let text =
            "dim 1\nclosed 0\nvertices 6\n0\n1\n2\n5\n6\n7\ncells 4\n0 1\n1 2\n3 4\n4 5\nboundary 4\n0 2 3 5\n";
        assert!(Mesh::parse(text).is_err());
    }

    #[test]
    fn metric_must_be_positive_definite() {
        let mesh = presets::interval_mesh(5, 1.0).unwrap();
        assert!(matches!(
            MetricField::from_fn(&mesh, |_| Tensor::new(-1.0, 0.0, 0.0, 1.0)),
            Err(Error::MetricNotPositive { .. })
        ));
    }
}
