//! Piecewise-linear discretizations of the Laplace–Beltrami operator and of
//! divergence-form elliptic operators with lower-order terms.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Mesh, MetricField, Point, Tensor};

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            values.push(v);
            row_ptr[r + 1] = cols.len();
        }
        for r in 1..=n {
            row_ptr[r] = row_ptr[r].max(row_ptr[r - 1]);
        }
        Self { n, row_ptr, cols, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn apply_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| x[j] * v).sum()).collect()
    }

    /// Dense copy of the block `rows × cols`.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    out[(a, pos[j])] += v;
                }
            }
        }
        out
    }
}

/// A discretized operator: `L` on interior rows, identity on Dirichlet rows.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    matrix: CsrMatrix,
    stiffness: CsrMatrix,
    mass: Vec<f64>,
    boundary: Vec<bool>,
}

impl OperatorMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Unmasked stiffness matrix `S` (the second-order part is `−M⁻¹S`).
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Lumped mass, i.e. the quadrature weights of the inner product.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.boundary[i]).collect()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.apply(f)
    }

    pub fn apply_complex(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.matrix.apply_complex(f)
    }

    /// Interior block of `L` as a dense matrix.
    pub fn interior_dense(&self) -> DMatrix<f64> {
        let idx = self.interior();
        self.matrix.dense_block(&idx, &idx)
    }

    /// Adds `P` to the interior rows.
    pub fn with_perturbation(&self, p: &CsrMatrix) -> Self {
        let mut triplets = Vec::with_capacity(self.matrix.nnz() + p.nnz());
        for i in 0..self.dim() {
            triplets.extend(self.matrix.row(i).map(|(j, v)| (i, j, v)));
            if !self.boundary[i] {
                triplets.extend(p.row(i).map(|(j, v)| (i, j, v)));
            }
        }
        Self {
            matrix: CsrMatrix::from_triplets(self.dim(), triplets),
            stiffness: self.stiffness.clone(),
            mass: self.mass.clone(),
            boundary: self.boundary.clone(),
        }
    }
}

/// Chart gradients of the barycentric hat functions on a cell.
fn hat_gradients(mesh: &Mesh, c: usize) -> Vec<[f64; 2]> {
    let cell = mesh.cell(c);
    if mesh.dim() == 1 {
        let e = mesh.delta(cell[0], cell[1]);
        let l2 = e[0] * e[0] + e[1] * e[1];
        let g = [e[0] / l2, e[1] / l2];
        vec![[-g[0], -g[1]], g]
    } else {
        let e1 = mesh.delta(cell[0], cell[1]);
        let e2 = mesh.delta(cell[0], cell[2]);
        let det = e1[0] * e2[1] - e2[0] * e1[1];
        let g1 = [e2[1] / det, -e2[0] / det];
        let g2 = [-e1[1] / det, e1[0] / det];
        vec![[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
    }
}

/// Per-cell data of a divergence-form operator: weight `ω` (density of the
/// measure) and contravariant tensor `K` in `(1/ω) ∂_k (ω K^{kl} ∂_l)`.
fn assemble_weighted(mesh: &Mesh, cell_data: impl Fn(usize) -> Result<(f64, Tensor)>) -> Result<OperatorMatrix> {
    let n = mesh.num_vertices();
    let k = (mesh.dim() + 1) as f64;
    let mut triplets = Vec::with_capacity(mesh.num_cells() * (mesh.dim() + 1).pow(2));
    let mut mass = vec![0.0; n];
    for c in 0..mesh.num_cells() {
        let (omega, tensor) = cell_data(c)?;
        let vol = mesh.cell_volume_flat(c);
        let grads = hat_gradients(mesh, c);
        let cell = mesh.cell(c);
        for (a, &va) in cell.iter().enumerate() {
            mass[va] += omega * vol / k;
            for (b, &vb) in cell.iter().enumerate() {
                let (ga, gb) = (grads[a], grads[b]);
                let form = if mesh.dim() == 1 {
                    tensor[(0, 0)] * (ga[0] * gb[0] + ga[1] * gb[1])
                } else {
                    ga[0] * (tensor[(0, 0)] * gb[0] + tensor[(0, 1)] * gb[1])
                        + ga[1] * (tensor[(1, 0)] * gb[0] + tensor[(1, 1)] * gb[1])
                };
                triplets.push((va, vb, omega * vol * form));
            }
        }
    }
    let stiffness = CsrMatrix::from_triplets(n, triplets);
    let boundary = mesh.boundary_flags().to_vec();
    let mut lt = Vec::with_capacity(stiffness.nnz());
    for i in 0..n {
        if boundary[i] {
            lt.push((i, i, 1.0));
        } else {
            lt.extend(stiffness.row(i).map(|(j, v)| (i, j, -v / mass[i])));
        }
    }
    Ok(OperatorMatrix { matrix: CsrMatrix::from_triplets(n, lt), stiffness, mass, boundary })
}

/// Dirichlet Laplace–Beltrami operator `(1/√|g|) ∂_j(√|g| g^{jk} ∂_k)`.
pub fn assemble_laplace_beltrami(mesh: &Mesh, metric: &MetricField) -> Result<OperatorMatrix> {
    if metric.values().len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: metric.values().len() });
    }
    assemble_weighted(mesh, |c| {
        let g = metric.cell_tensor(mesh, c);
        let det = metric.det(&g);
        if !(det > 0.0) {
            return Err(Error::MetricNotPositive { vertex: mesh.cell(c)[0] });
        }
        Ok((det.sqrt(), metric.inverse(&g)))
    })
}

/// Analytic coefficient callbacks.
pub type TensorFn = Arc<dyn Fn(&Point) -> Tensor + Send + Sync>;

/// Coefficients `(a, b, c)` of `A₀ f = √|a| div_g(a ∇f / √|a|) + ⟨b, ∇f⟩ + c f`.
#[derive(Clone)]
pub struct EllipticCoefficients {
    dim: usize,
    a: Vec<Tensor>,
    b: Vec<[f64; 2]>,
    c: Vec<f64>,
    analytic_a: Option<TensorFn>,
}

impl std::fmt::Debug for EllipticCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticCoefficients")
            .field("dim", &self.dim)
            .field("vertices", &self.a.len())
            .field("analytic_a", &self.analytic_a.is_some())
            .finish()
    }
}

fn pad_tensor(dim: usize, t: Tensor) -> Tensor {
    if dim == 1 {
        Tensor::new(t[(0, 0)], 0.0, 0.0, 1.0)
    } else {
        t
    }
}

impl EllipticCoefficients {
    pub fn new(mesh: &Mesh, a: Vec<Tensor>, b: Vec<[f64; 2]>, c: Vec<f64>) -> Result<Self> {
        let n = mesh.num_vertices();
        for len in [a.len(), b.len(), c.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        let dim = mesh.dim();
        let a: Vec<Tensor> = a.into_iter().map(|t| pad_tensor(dim, t)).collect();
        for (v, t) in a.iter().enumerate() {
            if dim == 2 && (t[(0, 1)] - t[(1, 0)]).abs() > 1e-12 * t.norm() {
                return Err(Error::Ellipticity { vertex: v });
            }
        }
        Ok(Self { dim, a, b, c, analytic_a: None })
    }

    pub fn constant(mesh: &Mesh, a: Tensor, b: [f64; 2], c: f64) -> Result<Self> {
        let n = mesh.num_vertices();
        let mut out = Self::new(mesh, vec![a; n], vec![b; n], vec![c; n])?;
        let a = pad_tensor(mesh.dim(), a);
        out.analytic_a = Some(Arc::new(move |_| a));
        Ok(out)
    }

    pub fn identity(mesh: &Mesh) -> Self {
        Self::constant(mesh, Tensor::identity(), [0.0, 0.0], 0.0).expect("identity coefficients are valid")
    }

    pub fn from_fn(
        mesh: &Mesh,
        a: impl Fn(&Point) -> Tensor + Send + Sync + 'static,
        b: impl Fn(&Point) -> [f64; 2],
        c: impl Fn(&Point) -> f64,
    ) -> Result<Self> {
        let verts = mesh.vertices();
        let mut out = Self::new(
            mesh,
            verts.iter().map(&a).collect(),
            verts.iter().map(b).collect(),
            verts.iter().map(c).collect(),
        )?;
        let dim = mesh.dim();
        out.analytic_a = Some(Arc::new(move |p| pad_tensor(dim, a(p))));
        Ok(out)
    }

    /// Reads per-vertex rows `i a11 a12 a21 a22 b1 b2 c` (2-D) or
    /// `i a11 b1 c` (1-D); `#` starts a comment.
    pub fn load(path: &Path, mesh: &Mesh) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, mesh)
    }

    pub fn parse(text: &str, mesh: &Mesh) -> Result<Self> {
        let n = mesh.num_vertices();
        let dim = mesh.dim();
        let width = if dim == 1 { 4 } else { 8 };
        let mut a = vec![None; n];
        let mut b = vec![[0.0; 2]; n];
        let mut c = vec![0.0; n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::MeshFormat { line: lineno + 1, message };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != width {
                return Err(err(format!("expected {width} columns, found {}", tokens.len())));
            }
            let i: usize = tokens[0].parse().map_err(|_| err(format!("bad vertex index `{}`", tokens[0])))?;
            if i >= n {
                return Err(err(format!("vertex index {i} out of range")));
            }
            let v: Vec<f64> = tokens[1..]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if dim == 1 {
                a[i] = Some(Tensor::new(v[0], 0.0, 0.0, 1.0));
                b[i] = [v[1], 0.0];
                c[i] = v[2];
            } else {
                a[i] = Some(Tensor::new(v[0], v[1], v[2], v[3]));
                b[i] = [v[4], v[5]];
                c[i] = v[6];
            }
        }
        let a = a
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| Error::Config(format!("coefficient file has no row for vertex {i}"))))
            .collect::<Result<_>>()?;
        Self::new(mesh, a, b, c)
    }

    pub fn a(&self, i: usize) -> &Tensor {
        &self.a[i]
    }

    pub fn b(&self, i: usize) -> [f64; 2] {
        self.b[i]
    }

    pub fn c(&self, i: usize) -> f64 {
        self.c[i]
    }

    pub fn has_lower_order(&self) -> bool {
        self.b.iter().any(|b| b[0] != 0.0 || b[1] != 0.0) || self.c.iter().any(|&c| c != 0.0)
    }

    fn cell_tensor(&self, mesh: &Mesh, c: usize) -> Tensor {
        match &self.analytic_a {
            Some(f) => f(&mesh.cell_centroid(c)),
            None => {
                let cell = mesh.cell(c);
                cell.iter().map(|&v| self.a[v]).sum::<Tensor>() / cell.len() as f64
            }
        }
    }
}

fn det_n(dim: usize, t: &Tensor) -> f64 {
    if dim == 1 {
        t[(0, 0)]
    } else {
        t.determinant()
    }
}

fn inverse_n(dim: usize, t: &Tensor) -> Tensor {
    if dim == 1 {
        Tensor::new(1.0 / t[(0, 0)], 0.0, 0.0, 1.0)
    } else {
        t.try_inverse().unwrap_or_else(|| Tensor::from_element(f64::NAN))
    }
}

/// Eigenvalues of the symmetric part of `a g⁻¹` are all positive.
fn strictly_elliptic(dim: usize, a: &Tensor, g: &Tensor) -> bool {
    let m = a * inverse_n(dim, g);
    if dim == 1 {
        return m[(0, 0)] > 0.0;
    }
    let s = 0.5 * (m + m.transpose());
    let (p, q, r) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let mean = 0.5 * (p + r);
    mean - (0.25 * (p - r).powi(2) + q * q).sqrt() > 0.0
}

/// `g̃ = (a g⁻¹)⁻¹`, the metric whose inverse is `g̃^{kl} = a^k_i g^{il}`.
pub fn metric_from_coefficients(mesh: &Mesh, metric: &MetricField, coeffs: &EllipticCoefficients) -> Result<MetricField> {
    let dim = mesh.dim();
    for v in 0..mesh.num_vertices() {
        if !strictly_elliptic(dim, coeffs.a(v), metric.at_vertex(v)) {
            return Err(Error::Ellipticity { vertex: v });
        }
    }
    let reduce = move |a: &Tensor, g: &Tensor| {
        let inv = a * inverse_n(dim, g);
        let t = inverse_n(dim, &inv);
        // Symmetrize away rounding.
        pad_tensor(dim, 0.5 * (t + t.transpose()))
    };
    let values: Vec<Tensor> =
        (0..mesh.num_vertices()).map(|v| reduce(coeffs.a(v), metric.at_vertex(v))).collect();
    // Cell tensors are reduced from the same cell data the divergence-form
    // assembly uses, so both discretizations see identical coefficients.
    let cells = (0..mesh.num_cells())
        .map(|c| reduce(&coeffs.cell_tensor(mesh, c), &metric.cell_tensor(mesh, c)))
        .collect();
    Ok(MetricField::from_values(mesh, values)?.with_cell_tensors(cells))
}

/// Dirichlet divergence-form operator with lower-order terms `P`.
pub fn assemble_divergence_form(
    mesh: &Mesh,
    metric: &MetricField,
    coeffs: &EllipticCoefficients,
) -> Result<OperatorMatrix> {
    let dim = mesh.dim();
    for v in 0..mesh.num_vertices() {
        if !strictly_elliptic(dim, coeffs.a(v), metric.at_vertex(v)) {
            return Err(Error::Ellipticity { vertex: v });
        }
    }
    let principal = assemble_weighted(mesh, |c| {
        let g = metric.cell_tensor(mesh, c);
        let a = coeffs.cell_tensor(mesh, c);
        let (dg, da) = (det_n(dim, &g), det_n(dim, &a));
        if !(dg > 0.0 && da > 0.0) {
            return Err(Error::Ellipticity { vertex: mesh.cell(c)[0] });
        }
        Ok(((dg / da).sqrt(), pad_tensor(dim, a * inverse_n(dim, &g))))
    })?;
    if !coeffs.has_lower_order() {
        return Ok(principal);
    }
    let p = perturbation_matrix(mesh, metric, coeffs);
    Ok(principal.with_perturbation(&p))
}

/// `P f = g^{kl} b_k ∂_l f + c f` as a sparse matrix with zero Dirichlet rows.
/// Vertex gradients average the cell gradients of the one-ring, weighted by
/// cell measure (centered differences on uniform 1-D meshes).
pub fn perturbation_matrix(mesh: &Mesh, metric: &MetricField, coeffs: &EllipticCoefficients) -> CsrMatrix {
    let n = mesh.num_vertices();
    let dim = mesh.dim();
    let vertex_cells = mesh.vertex_cells();
    let mut triplets = Vec::new();
    for v in 0..n {
        if mesh.is_boundary(v) {
            continue;
        }
        let ginv = inverse_n(dim, metric.at_vertex(v));
        let b = coeffs.b(v);
        // Contravariant direction g^{kl} b_k.
        let dir = if dim == 1 {
            [ginv[(0, 0)] * b[0], 0.0]
        } else {
            [ginv[(0, 0)] * b[0] + ginv[(0, 1)] * b[1], ginv[(1, 0)] * b[0] + ginv[(1, 1)] * b[1]]
        };
        if dir != [0.0, 0.0] {
            let total: f64 = vertex_cells[v].iter().map(|&c| mesh.cell_volume_flat(c)).sum();
            for &c in &vertex_cells[v] {
                let share = mesh.cell_volume_flat(c) / total;
                let grads = hat_gradients(mesh, c);
                for (k, &u) in mesh.cell(c).iter().enumerate() {
                    let gk = grads[k];
                    // In 1-D the chart direction is the oriented cell tangent.
                    let val = if dim == 1 {
                        let e = mesh.delta(mesh.cell(c)[0], mesh.cell(c)[1]);
                        let len = e[0].hypot(e[1]);
                        dir[0] * (gk[0] * e[0] + gk[1] * e[1]) / len
                    } else {
                        dir[0] * gk[0] + dir[1] * gk[1]
                    };
                    triplets.push((v, u, share * val));
                }
            }
        }
        if coeffs.c(v) != 0.0 {
            triplets.push((v, v, coeffs.c(v)));
        }
    }
    CsrMatrix::from_triplets(n, triplets)
}

pub fn apply_perturbation(mesh: &Mesh, metric: &MetricField, coeffs: &EllipticCoefficients, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: f.len() });
    }
    Ok(perturbation_matrix(mesh, metric, coeffs).apply(f))
}

/// Outcome of the quadratic-form sign test.
#[derive(Clone, Debug, serde::Serialize)]
pub struct InjectivityReport {
    pub trials: usize,
    /// `max ⟨Lf, f⟩_w / ‖f‖²_w`, which should not exceed zero.
    pub max_rayleigh: f64,
    /// Largest `|⟨Lf, h⟩_w − ⟨f, Lh⟩_w|` relative to `‖Lf‖_w ‖h‖_w`.
    pub max_asymmetry: f64,
    /// Worst positive part of the form relative to `‖Lf‖_w ‖f‖_w`.
    pub max_violation: f64,
    pub passed: bool,
}

fn masked_random(op: &OperatorMatrix, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..op.dim()).map(|i| if op.boundary[i] { 0.0 } else { rng.random_range(-1.0..1.0) }).collect()
}

/// Checks `⟨Lf, f⟩_w ≤ 0` and the symmetry of the form on random masked
/// vectors.
pub fn injectivity_check(op: &OperatorMatrix, trials: usize, seed: u64) -> InjectivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = &op.mass;
    let ip = |x: &[f64], y: &[f64]| x.iter().zip(y).zip(w).map(|((a, b), w)| a * b * w).sum::<f64>();
    let (mut max_rayleigh, mut max_asym, mut max_violation) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let f = masked_random(op, &mut rng);
        let h = masked_random(op, &mut rng);
        let lf = op.apply(&f);
        let lh = op.apply(&h);
        // Dirichlet rows carry the identity; the form lives on interior rows.
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&op.boundary).map(|(x, &b)| if b { 0.0 } else { *x }).collect()
        };
        let (lf, lh) = (mask(&lf), mask(&lh));
        let form = ip(&lf, &f);
        let norm = ip(&lf, &lf).sqrt() * ip(&f, &f).sqrt();
        max_rayleigh = max_rayleigh.max(form / ip(&f, &f));
        max_violation = max_violation.max(form.max(0.0) / norm);
        let asym = (ip(&lf, &h) - ip(&f, &lh)).abs() / (ip(&lf, &lf).sqrt() * ip(&h, &h).sqrt());
        max_asym = max_asym.max(asym);
    }
    if trials == 0 {
        max_rayleigh = 0.0;
    }
    InjectivityReport {
        trials,
        max_rayleigh,
        max_asymmetry: max_asym,
        max_violation,
        passed: max_violation <= 1e-8 && max_asym <= 1e-8,
    }
}

/// Conjugate gradients for the SPD interior stiffness block `S_II x = b`.
/// CG for `(S + σ W)x = rhs` on the interior block.
fn cg_interior(s: &CsrMatrix, shift: &[f64], interior: &[usize], rhs: &[f64], tol: f64) -> Vec<f64> {
    let n = s.dim();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in interior.iter().enumerate() {
        pos[i] = k;
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        interior
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                shift[k] * x[k] + s.row(i).filter(|&(j, _)| pos[j] != usize::MAX).map(|(j, v)| v * x[pos[j]]).sum::<f64>()
            })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; interior.len()];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * rr;
    for _ in 0..10 * interior.len().max(10) {
        if rr <= stop {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
    }
    x
}

/// The `count` lowest Dirichlet modes of `−L` by block inverse iteration
/// with Rayleigh–Ritz, returned as full vertex vectors (zero on `∂M`),
/// `w`-normalized, with their eigenvalues of `L`.
pub fn low_modes(op: &OperatorMatrix, count: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let interior = op.interior();
    let m = interior.len();
    let count = count.min(m);
    if count == 0 {
        return (Vec::new(), Vec::new());
    }
    let block = (count + 4).min(m);
    let w: Vec<f64> = interior.iter().map(|&i| op.mass[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = (0..block).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let s_block = op.stiffness.dense_block(&interior, &interior);
    // Without a boundary S has the constants in its kernel; iterate on S + W.
    let sigma = if op.boundary.iter().any(|&b| b) { 0.0 } else { 1.0 };
    let shift: Vec<f64> = w.iter().map(|w| sigma * w).collect();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for _ in 0..40 {
        let next: Vec<Vec<f64>> = basis
            .iter()
            .map(|v| {
                let rhs: Vec<f64> = v.iter().zip(&w).map(|(x, w)| x * w).collect();
                cg_interior(&op.stiffness, &shift, &interior, &rhs, 1e-12)
            })
            .collect();
        // Rayleigh–Ritz in the w-inner product.
        let q = DMatrix::from_fn(m, block, |i, j| next[j][i] * w[i].sqrt());
        let qr = q.qr();
        let q = qr.q();
        let scaled = DMatrix::from_fn(m, block, |i, j| q[(i, j)] / w[i].sqrt());
        let a = scaled.transpose() * &s_block * &scaled;
        let eig = nalgebra::SymmetricEigen::new(0.5 * (&a + a.transpose()));
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        let ritz = &scaled * &eig.eigenvectors;
        basis = order.iter().map(|&k| ritz.column(k).iter().copied().collect()).collect();
        let new_values: Vec<f64> = order.iter().take(count).map(|&k| -eig.eigenvalues[k]).collect();
        let converged = !values.is_empty()
            && new_values.iter().zip(&values).all(|(a, b): (&f64, &f64)| (a - b).abs() <= 1e-12 * a.abs());
        values = new_values;
        if converged {
            break;
        }
    }
    for v in basis.iter().take(count) {
        let mut full = vec![0.0; op.dim()];
        for (k, &i) in interior.iter().enumerate() {
            full[i] = v[k];
        }
        let mut sign = full.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        if sign == 0.0 {
            sign = 1.0;
        }
        let norm: f64 = full.iter().zip(&op.mass).map(|(x, w)| x * x * w).sum::<f64>().sqrt();
        vectors.push(full.iter().map(|x| x * sign.signum() / norm).collect());
    }
    (values, vectors)
}

/// Relative bound of `P` against `Ã` over the tails of a modal basis:
/// `a_m = max_{k ≥ m} ‖P v_k‖_w / ‖Ã v_k‖_w`. Non-increasing in `m` by
/// construction; the check is that it actually decays.
pub fn ehrling_profile(op: &OperatorMatrix, p: &CsrMatrix, modes: &[Vec<f64>], ms: &[usize]) -> Vec<f64> {
    let w = &op.mass;
    let norm = |v: &[f64]| -> f64 {
        v.iter().zip(w).zip(&op.boundary).filter(|(_, &b)| !b).map(|((x, w), _)| x * x * w).sum::<f64>().sqrt()
    };
    let ratios: Vec<f64> = modes.iter().map(|v| norm(&p.apply(v)) / norm(&op.apply(v))).collect();
    ms.iter().map(|&m| ratios.iter().skip(m).copied().fold(0.0, f64::max)).collect()
}

/// Dense interior block of `λ − L` (complex).
pub fn shifted_interior(op: &OperatorMatrix, lambda: Complex64) -> DMatrix<Complex64> {
    let l = op.interior_dense();
    DMatrix::from_fn(l.nrows(), l.ncols(), |i, j| {
        let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
        d - l[(i, j)]
    })
}

/// Residual `(λ − L)u − f` on interior rows.
pub fn interior_residual(op: &OperatorMatrix, lambda: Complex64, u: &[Complex64], f: &[Complex64]) -> Vec<Complex64> {
    let lu = op.apply_complex(u);
    (0..op.dim()).filter(|&i| !op.boundary[i]).map(|i| lambda * u[i] - lu[i] - f[i]).collect()
}
