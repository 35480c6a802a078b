//! Defect of the approximate Green operator, its Neumann-series correction
//! to the exact discrete resolvent, the resolvent of the full operator with
//! lower-order terms, and scans over sector rays.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::discrete_operator::{low_modes, CsrMatrix, OperatorMatrix};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::kernel::{assemble_g, GreenKernelMatrix, KernelParams};
use crate::specfun::SectorPoint;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn sup_norm<T: Copy>(v: &[T], abs: impl Fn(T) -> f64) -> f64 {
    v.iter().map(|&x| abs(x)).fold(0.0, f64::max)
}

/// Complex `A B` through four real products, so the real kernel does the work.
pub(crate) fn cgemm(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, Complex64::new)
}

/// LU factorization with partial pivoting of a complex band matrix.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    /// Factors the matrix given by its rows as `(column, value)` lists, with
    /// `kl` sub- and super-diagonals.
    pub fn factor(n: usize, kl: usize, rows: impl Fn(usize) -> Vec<(usize, Complex64)>) -> Result<Self> {
        // Row r stores columns r − kl ..= r + 2 kl (fill-in from pivoting).
        let width = 3 * kl + 1;
        let mut data = vec![ZERO; n * width];
        for r in 0..n {
            for (c, v) in rows(r) {
                if c + kl < r || c > r + kl {
                    return Err(Error::Precondition(format!("entry ({r}, {c}) outside the band {kl}")));
                }
                data[r * width + c + kl - r] += v;
            }
        }
        let idx = |r: usize, c: usize| r * width + c + kl - r;
        let mut pivots = vec![0; n];
        for i in 0..n {
            let last = (i + kl).min(n - 1);
            let p = (i..=last).max_by(|&a, &b| data[idx(a, i)].norm().total_cmp(&data[idx(b, i)].norm())).unwrap();
            pivots[i] = p;
            if data[idx(p, i)].norm() == 0.0 {
                return Err(Error::Precondition(format!("singular matrix at column {i}")));
            }
            let cmax = (i + 2 * kl).min(n - 1);
            if p != i {
                for c in i..=cmax {
                    data.swap(idx(i, c), idx(p, c));
                }
            }
            let pivot = data[idx(i, i)];
            for r in i + 1..=last {
                let factor = data[idx(r, i)] / pivot;
                data[idx(r, i)] = factor;
                if factor != ZERO {
                    for c in i + 1..=cmax {
                        let u = data[idx(i, c)];
                        data[idx(r, c)] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { n, kl, width, data, pivots })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let idx = |r: usize, c: usize| r * w + c + kl - r;
        let mut x = b.to_vec();
        for i in 0..n {
            x.swap(i, self.pivots[i]);
            let xi = x[i];
            for r in i + 1..=(i + kl).min(n - 1) {
                x[r] -= self.data[idx(r, i)] * xi;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..=(i + 2 * kl).min(n - 1) {
                s -= self.data[idx(i, c)] * x[c];
            }
            x[i] = s / self.data[idx(i, i)];
        }
        x
    }
}

/// Exact discrete resolvent `(λ − L_II)⁻¹` by a banded direct solve.
#[derive(Clone, Debug)]
pub struct DirectResolvent {
    interior: Vec<usize>,
    n: usize,
    lu: BandedLu,
    lambda: Complex64,
}

impl DirectResolvent {
    pub fn new(op: &OperatorMatrix, lambda: Complex64) -> Result<Self> {
        let interior = op.interior();
        let mut pos = vec![usize::MAX; op.dim()];
        for (k, &i) in interior.iter().enumerate() {
            pos[i] = k;
        }
        let m = interior.len();
        let mut kl = 0;
        for (k, &i) in interior.iter().enumerate() {
            for (j, _) in op.matrix().row(i) {
                if pos[j] != usize::MAX {
                    kl = kl.max(pos[j].abs_diff(k));
                }
            }
        }
        let lu = BandedLu::factor(m, kl, |k| {
            let i = interior[k];
            let mut row: Vec<(usize, Complex64)> = op
                .matrix()
                .row(i)
                .filter(|&(j, _)| pos[j] != usize::MAX)
                .map(|(j, v)| (pos[j], Complex64::new(-v, 0.0)))
                .collect();
            row.push((k, lambda));
            row
        })?;
        Ok(Self { interior, n: op.dim(), lu, lambda })
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Solves `(λ − L)u = f` on interior rows with `u = 0` on `∂M`.
    pub fn solve(&self, f: &[Complex64]) -> Vec<Complex64> {
        let b: Vec<Complex64> = self.interior.iter().map(|&i| f[i]).collect();
        let x = self.lu.solve(&b);
        let mut u = vec![ZERO; self.n];
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] = x[k];
        }
        u
    }
}

const RANDOM_WAVES: usize = 6;
const MAX_WAVENUMBER: f64 = 8.0;

/// The fixed probe family: the constant, coordinate functions, low Dirichlet
/// modes and seeded random fields masked on `∂M`, each scaled to unit sup
/// norm. The random fields are sums of a few plane waves rather than vertex
/// noise, so they stay the same functions under refinement.
pub fn probe_set(geom: &Geometry, op: &OperatorMatrix, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mesh = geom.mesh();
    let n = mesh.num_vertices();
    let mut probes: Vec<Vec<f64>> = Vec::with_capacity(count);
    probes.push(vec![1.0; n]);
    let period = mesh.period();
    for k in 0..mesh.dim() {
        let coord: Vec<f64> = mesh
            .vertices()
            .iter()
            .map(|p| if period[k] > 0.0 { (2.0 * PI * p[k] / period[k]).sin() } else { p[k] })
            .collect();
        probes.push(coord);
    }
    let (_, modes) = low_modes(op, 5, seed ^ 0x5eed);
    probes.extend(modes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while probes.len() < count {
        let mut f = vec![0.0; n];
        for _ in 0..RANDOM_WAVES {
            let freq = rng.random_range(1.0..MAX_WAVENUMBER);
            let dir = rng.random_range(0.0..2.0 * PI);
            let mut k = if mesh.dim() == 1 { [freq, 0.0] } else { [freq * dir.cos(), freq * dir.sin()] };
            for (a, ka) in k.iter_mut().enumerate() {
                if period[a] > 0.0 {
                    let unit = 2.0 * PI / period[a];
                    *ka = unit * (*ka / unit).round();
                }
            }
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(-1.0..1.0);
            for (i, p) in mesh.vertices().iter().enumerate() {
                f[i] += amp * (k[0] * p[0] + k[1] * p[1] + phase).cos();
            }
        }
        for i in 0..n {
            if mesh.is_boundary(i) {
                f[i] = 0.0;
            }
        }
        probes.push(f);
    }
    probes.truncate(count);
    for p in probes.iter_mut() {
        let s = sup_norm(p, f64::abs);
        if s > 0.0 {
            p.iter_mut().for_each(|x| *x /= s);
        }
    }
    probes
}

/// Region of a vertex in the defect decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `M ∖ S_{2ε}`.
    Inner,
    /// `S_ε`.
    Collar,
    /// `S_{2ε} ∖ S_ε`.
    Transition,
}

pub fn region(geom: &Geometry, i: usize) -> Region {
    let s = geom.distance_to_boundary(i);
    let eps = geom.epsilon();
    if geom.closed() || s >= 2.0 * eps {
        Region::Inner
    } else if s < eps {
        Region::Collar
    } else {
        Region::Transition
    }
}

/// Sup norms of `(λ − L)G f − f` over the probe family, by region.
#[derive(Clone, Debug, Serialize)]
pub struct DefectReport {
    pub abs_lambda: f64,
    pub arg_lambda: f64,
    pub inner: f64,
    pub s_eps: f64,
    pub transition: f64,
    pub total: f64,
    pub norm_g: f64,
}

/// `(λ − L)u − f` on interior rows (zero elsewhere).
fn defect_vector(op: &OperatorMatrix, lambda: Complex64, u: &[Complex64], f: &[f64]) -> Vec<Complex64> {
    let lu = op.apply_complex(u);
    let mask = op.boundary_mask();
    (0..op.dim()).map(|i| if mask[i] { ZERO } else { lambda * u[i] - lu[i] - f[i] }).collect()
}

pub fn measure_defect(
    op: &OperatorMatrix,
    g: &GreenKernelMatrix,
    geom: &Geometry,
    probes: &[Vec<f64>],
) -> Result<DefectReport> {
    let n = op.dim();
    if g.dim() != n || geom.num_vertices() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.dim() });
    }
    if !geom.closed() && geom.collar().is_empty() {
        return Err(Error::Precondition("region partition needs a collar".into()));
    }
    let lambda = g.lambda().lambda();
    let regions: Vec<Region> = (0..n).map(|i| region(geom, i)).collect();
    let (mut inner, mut s_eps, mut transition) = (0.0f64, 0.0f64, 0.0f64);
    for f in probes {
        let scale = sup_norm(f, f64::abs);
        if scale == 0.0 {
            continue;
        }
        let u = crate::kernel::apply_g_real(g, f)?;
        let d = defect_vector(op, lambda, &u, f);
        for i in 0..n {
            if op.boundary_mask()[i] {
                continue;
            }
            let v = d[i].norm() / scale;
            match regions[i] {
                Region::Inner => inner = inner.max(v),
                Region::Collar => s_eps = s_eps.max(v),
                Region::Transition => transition = transition.max(v),
            }
        }
    }
    Ok(DefectReport {
        abs_lambda: lambda.norm(),
        arg_lambda: lambda.arg(),
        inner,
        s_eps,
        transition,
        total: inner.max(s_eps).max(transition),
        norm_g: g.norm_inf(),
    })
}

/// Interior blocks `G_II` and `E = I − (λ − L_II) G_II`.
fn defect_operator(op: &OperatorMatrix, g: &GreenKernelMatrix) -> (Vec<usize>, DMatrix<Complex64>, DMatrix<Complex64>) {
    let interior = op.interior();
    let m = interior.len();
    let lambda = g.lambda().lambda();
    let g_ii = DMatrix::from_fn(m, m, |a, b| g.get(interior[a], interior[b]));
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|a| {
            let i = interior[a];
            let mut row: Vec<Complex64> = interior.iter().map(|&j| -lambda * g.get(i, j)).collect();
            for (k, l) in op.matrix().row(i) {
                if op.boundary_mask()[k] {
                    continue;
                }
                let gk = g.row(k);
                for (b, &j) in interior.iter().enumerate() {
                    row[b] += l * gk[j];
                }
            }
            row[a] += ONE;
            row
        })
        .collect();
    let e = DMatrix::from_fn(m, m, |a, b| rows[a][b]);
    (interior, g_ii, e)
}

/// Exact `‖E‖_∞` on the interior block. Diagnostic only; the rough directions it
/// picks up are invisible to smooth data.
pub fn defect_operator_norm(op: &OperatorMatrix, g: &GreenKernelMatrix) -> f64 {
    let (_, _, e) = defect_operator(op, g);
    row_sum_norm(&e)
}

fn row_sum_norm(e: &DMatrix<Complex64>) -> f64 {
    (0..e.nrows()).map(|a| e.row(a).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn probe_block(interior: &[usize], probes: &[Vec<f64>]) -> DMatrix<Complex64> {
    let mut f = DMatrix::from_fn(interior.len(), probes.len(), |a, c| Complex64::new(probes[c][interior[a]], 0.0));
    for mut col in f.column_iter_mut() {
        let nf = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if nf > 0.0 {
            col /= Complex64::new(nf, 0.0);
        }
    }
    f
}

fn column_max(v: &DMatrix<Complex64>) -> f64 {
    v.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Probe estimate of the contraction `q = max_f ‖E f‖_∞ / ‖f‖_∞`.
pub fn contraction_q(op: &OperatorMatrix, g: &GreenKernelMatrix, probes: &[Vec<f64>]) -> f64 {
    let (interior, _, e) = defect_operator(op, g);
    column_max(&cgemm(&e, &probe_block(&interior, probes)))
}

/// `R̂ = G Σ_{k ≤ K} E^k`, the Neumann-corrected Green operator.
#[derive(Clone, Debug)]
pub struct CorrectedResolvent {
    interior: Vec<usize>,
    n: usize,
    lambda: Complex64,
    g_ii: DMatrix<Complex64>,
    e: DMatrix<Complex64>,
    q: f64,
    terms: usize,
}

pub const NEUMANN_MAX_TERMS: usize = 60;
const NEUMANN_TARGET: f64 = 1e-10;
/// Postcondition on the probes: `‖(λ − L)R̂f − f‖_∞ ≤ 1e−8 ‖f‖_∞`.
const PROBE_RESIDUAL: f64 = 1e-8;

/// Builds `R̂` with `K` the smallest count such that `q^{K+1} ≤ 1e−10`, `q` measured on
/// the probes. Extra terms are added until the probe residual `‖E^{K+1} f‖` meets the
/// postcondition; past `NEUMANN_MAX_TERMS` the point is refused.
pub fn correct_resolvent(op: &OperatorMatrix, g: &GreenKernelMatrix, probes: &[Vec<f64>]) -> Result<CorrectedResolvent> {
    let (interior, g_ii, e) = defect_operator(op, g);
    let lambda = g.lambda().lambda();
    let mut v = cgemm(&e, &probe_block(&interior, probes));
    let q = column_max(&v);
    if !(q < 1.0) {
        return Err(Error::NonContraction { lambda, q });
    }
    let mut terms = if q == 0.0 { 0 } else { (NEUMANN_TARGET.ln() / q.ln()).ceil().max(1.0) as usize - 1 };
    if terms > NEUMANN_MAX_TERMS {
        return Err(Error::NonContraction { lambda, q });
    }
    // v holds E^{k+1} f for k = 0; advance to E^{K+1} f.
    let mut k = 0;
    while k < terms {
        v = cgemm(&e, &v);
        k += 1;
    }
    while column_max(&v) > PROBE_RESIDUAL {
        if terms == NEUMANN_MAX_TERMS {
            return Err(Error::NonContraction { lambda, q });
        }
        v = cgemm(&e, &v);
        terms += 1;
    }
    Ok(CorrectedResolvent { interior, n: op.dim(), lambda, g_ii, e, q, terms })
}

impl CorrectedResolvent {
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Applies `R̂` to several vertex functions at once.
    pub fn apply_many(&self, fs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let m = self.interior.len();
        let f = DMatrix::from_fn(m, fs.len(), |a, c| fs[c][self.interior[a]]);
        let mut v = f.clone();
        let mut sum = f;
        for _ in 0..self.terms {
            v = cgemm(&self.e, &v);
            sum += &v;
        }
        let u = cgemm(&self.g_ii, &sum);
        (0..fs.len())
            .map(|c| {
                let mut out = vec![ZERO; self.n];
                for (a, &i) in self.interior.iter().enumerate() {
                    out[i] = u[(a, c)];
                }
                out
            })
            .collect()
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        self.apply_many(&[f.to_vec()]).pop().unwrap_or_default()
    }

    pub fn apply_real(&self, f: &[f64]) -> Vec<Complex64> {
        self.apply(&f.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }
}

/// Sup-norm residual `‖(λ − L)u − f‖_∞` on interior rows.
pub fn residual_norm(op: &OperatorMatrix, lambda: Complex64, u: &[Complex64], f: &[Complex64]) -> f64 {
    let lu = op.apply_complex(u);
    (0..op.dim())
        .filter(|&i| !op.boundary_mask()[i])
        .map(|i| (lambda * u[i] - lu[i] - f[i]).norm())
        .fold(0.0, f64::max)
}

/// `R_A = R (I − P R)⁻¹` by the series `R Σ (P R)^k`, for `A = L̃ + P`.
#[derive(Clone, Debug)]
pub struct FullResolvent {
    base: CorrectedResolvent,
    p: CsrMatrix,
    mask: Vec<bool>,
    /// Probe estimate of `‖P R‖_∞`.
    pub norm_pr: f64,
}

const FULL_SERIES_MAX: usize = 400;

pub fn resolvent_full(
    op_tilde: &OperatorMatrix,
    p: &CsrMatrix,
    g_tilde: &GreenKernelMatrix,
    probes: &[Vec<f64>],
) -> Result<FullResolvent> {
    let base = correct_resolvent(op_tilde, g_tilde, probes)?;
    let mask = op_tilde.boundary_mask().to_vec();
    let mut full = FullResolvent { base, p: p.clone(), mask, norm_pr: 0.0 };
    let fs: Vec<Vec<Complex64>> =
        probes.iter().map(|f| f.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect();
    let rs = full.base.apply_many(&fs);
    let mut q: f64 = 0.0;
    for (f, r) in fs.iter().zip(&rs) {
        let pr = full.apply_p(r);
        let nf = sup_norm(f, |z| z.norm());
        if nf > 0.0 {
            q = q.max(sup_norm(&pr, |z| z.norm()) / nf);
        }
    }
    full.norm_pr = q;
    if !(q < 1.0) {
        return Err(Error::NonContraction { lambda: full.base.lambda, q });
    }
    Ok(full)
}

impl FullResolvent {
    fn apply_p(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut v = self.p.apply_complex(u);
        for (x, &b) in v.iter_mut().zip(&self.mask) {
            if b {
                *x = ZERO;
            }
        }
        v
    }

    pub fn lambda(&self) -> Complex64 {
        self.base.lambda
    }

    pub fn apply(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let nf = sup_norm(f, |z| z.norm()).max(f64::MIN_POSITIVE);
        let mut term = f.to_vec();
        let mut acc = f.to_vec();
        for _ in 0..FULL_SERIES_MAX {
            term = self.apply_p(&self.base.apply(&term));
            let nt = sup_norm(&term, |z| z.norm());
            acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
            if nt <= 1e-13 * nf {
                return Ok(self.base.apply(&acc));
            }
        }
        Err(Error::NonContraction { lambda: self.base.lambda, q: self.norm_pr })
    }

    pub fn apply_real(&self, f: &[f64]) -> Result<Vec<Complex64>> {
        self.apply(&f.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }
}

/// Least-squares slope with a 95 % confidence half-width.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    pub points: usize,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> SlopeFit {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let m = pts.len();
    if m < 2 {
        return SlopeFit { slope: f64::NAN, intercept: f64::NAN, half_width: f64::NAN, points: m };
    }
    let mf = m as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / mf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / mf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let half_width = if m > 2 {
        let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (sse / (mf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, mf - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
        t * se
    } else {
        f64::NAN
    };
    SlopeFit { slope, intercept, half_width, points: m }
}

/// One grid point of a sector scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub arg_lambda: f64,
    pub abs_lambda: f64,
    pub norm_g: f64,
    pub defect_total: f64,
    pub defect_inner: f64,
    pub defect_s_eps: f64,
    pub defect_transition: f64,
    pub norm_r: f64,
    pub contraction_q: f64,
}

pub const SCAN_CSV_HEADER: &str =
    "arg_lambda,abs_lambda,norm_G,defect_total,defect_inner,defect_S_eps,defect_transition,norm_R,contraction_q";

impl ScanRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.arg_lambda,
            self.abs_lambda,
            self.norm_g,
            self.defect_total,
            self.defect_inner,
            self.defect_s_eps,
            self.defect_transition,
            self.norm_r,
            self.contraction_q
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RayFit {
    pub arg_lambda: f64,
    pub norm_g: SlopeFit,
    pub defect: SlopeFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct SectorScanReport {
    pub eta: f64,
    pub rays: Vec<f64>,
    pub rows: Vec<ScanRow>,
    pub fits: Vec<RayFit>,
    /// Moduli dropped because `√|λ| h > 1`.
    pub unresolved: Vec<f64>,
    pub resolution_cap: f64,
}

impl SectorScanReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SCAN_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }
}

/// Everything a scan needs about one discretized problem.
pub struct ScanSetup<'a> {
    pub geom: &'a Geometry,
    pub op: &'a OperatorMatrix,
    pub probes: &'a [Vec<f64>],
}

/// `√|λ| h` above which the kernel is not resolved by the mesh.
pub fn resolution(geom: &Geometry, modulus: f64) -> f64 {
    modulus.sqrt() * geom.mesh_size()
}

pub fn scan_point(setup: &ScanSetup<'_>, lambda: SectorPoint) -> Result<ScanRow> {
    let params = KernelParams::for_geometry(lambda, setup.geom);
    let g = assemble_g(&params, setup.geom)?;
    let report = measure_defect(setup.op, &g, setup.geom, setup.probes)?;
    let q = contraction_q(setup.op, &g, setup.probes);
    let direct = DirectResolvent::new(setup.op, lambda.lambda())?;
    let norm_r = setup
        .probes
        .iter()
        .map(|f| {
            let fc: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let u = direct.solve(&fc);
            sup_norm(&u, |z| z.norm()) / sup_norm(f, f64::abs).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    Ok(ScanRow {
        arg_lambda: lambda.lambda().arg(),
        abs_lambda: lambda.modulus(),
        norm_g: report.norm_g,
        defect_total: report.total,
        defect_inner: report.inner,
        defect_s_eps: report.s_eps,
        defect_transition: report.transition,
        norm_r,
        contraction_q: q,
    })
}

/// Scans `λ = r e^{iθ}` over `rays × moduli`, fitting log-log slopes of
/// `‖G_λ‖` and of the defect on each ray.
pub fn sector_scan(setup: &ScanSetup<'_>, eta: f64, rays: &[f64], moduli: &[f64]) -> Result<SectorScanReport> {
    if !(eta > 0.0 && eta < PI) {
        return Err(Error::Precondition(format!("eta = {eta} outside (0, pi)")));
    }
    if moduli.iter().any(|&m| !(m >= 1.0)) || moduli.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("moduli must be increasing and >= 1".into()));
    }
    let kept: Vec<f64> = moduli.iter().copied().filter(|&m| resolution(setup.geom, m) <= 1.0).collect();
    let unresolved: Vec<f64> = moduli.iter().copied().filter(|&m| resolution(setup.geom, m) > 1.0).collect();
    let resolution_cap = (1.0 / setup.geom.mesh_size()).powi(2);
    if kept.len() < 2 {
        let top = *moduli.last().unwrap_or(&0.0);
        return Err(Error::Unresolved { modulus: top, resolution: resolution(setup.geom, top) });
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &arg in rays {
        let mut ray_rows = Vec::new();
        for &m in &kept {
            let lambda = SectorPoint::from_polar(m, arg, eta)?;
            ray_rows.push(scan_point(setup, lambda)?);
        }
        let x: Vec<f64> = ray_rows.iter().map(|r| r.abs_lambda).collect();
        let g: Vec<f64> = ray_rows.iter().map(|r| r.norm_g).collect();
        let d: Vec<f64> = ray_rows.iter().map(|r| r.defect_total).collect();
        fits.push(RayFit { arg_lambda: arg, norm_g: fit_loglog(&x, &g), defect: fit_loglog(&x, &d) });
        rows.extend(ray_rows);
    }
    Ok(SectorScanReport { eta, rays: rays.to_vec(), rows, fits, unresolved, resolution_cap })
}
