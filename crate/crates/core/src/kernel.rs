//! The approximate Green's kernel `K_λ(x, y)` with boundary images, and the
//! integral operator `G_λ` it induces on mesh functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cutoff_chi, smooth_distance, Geometry};
use crate::specfun::{bessel_k, bessel_k_real, gamma_and_sphere_constants, Order, SectorPoint};

/// Parameters of one kernel evaluation campaign.
#[derive(Clone, Copy, Debug)]
pub struct KernelParams {
    pub lambda: SectorPoint,
    pub epsilon: f64,
    pub dim: usize,
    pub closed: bool,
}

impl KernelParams {
    pub fn new(lambda: SectorPoint, epsilon: f64, dim: usize, closed: bool) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Precondition(format!("epsilon = {epsilon} must be positive")));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::Precondition(format!("kernel dimension {dim} not supported")));
        }
        Ok(Self { lambda, epsilon, dim, closed })
    }

    pub fn for_geometry(lambda: SectorPoint, geom: &Geometry) -> Self {
        Self { lambda, epsilon: geom.epsilon(), dim: geom.dim(), closed: geom.closed() }
    }

    /// `(√λ)^{n/2−1} / (2π)^{n/2} · K_{n/2−1}(√λ ρ) / ρ^{n/2−1}`.
    pub fn free_space(&self, rho: f64) -> Result<Complex64> {
        let k = self.lambda.sqrt();
        match self.dim {
            1 => Ok((-k * rho).exp() / (2.0 * k)),
            _ => {
                if rho <= 0.0 {
                    return Err(Error::SingularKernel);
                }
                Ok(bessel_k(Order::for_dimension(2), k * rho)? / (2.0 * PI))
            }
        }
    }

    /// Three-branch combination for a target at distance `s` from `∂M`, given
    /// `ρ(x, y)` and `ρ̄(x*, y)`.
    pub fn combine(&self, s: f64, free: Complex64, image: impl FnOnce() -> Result<Complex64>) -> Result<Complex64> {
        if self.closed || s > 2.0 * self.epsilon {
            return Ok(free);
        }
        let weight = if s < self.epsilon { 1.0 } else { cutoff_chi(s / self.epsilon) };
        if weight == 0.0 {
            return Ok(free);
        }
        Ok(free - weight * image()?)
    }
}

/// `K_λ(x, y)` from the scalar geometric inputs: `d = d(x, y)`,
/// `d_image = d̄(x*, y)` and `s = d(x, ∂M)`.
pub fn kernel_value(params: &KernelParams, d: f64, d_image: Option<f64>, s: f64) -> Result<Complex64> {
    let free = params.free_space(smooth_distance(d, params.epsilon))?;
    params.combine(s, free, || {
        let di = d_image.ok_or_else(|| Error::OutsideCollar(vec![s]))?;
        params.free_space(smooth_distance(di, params.epsilon))
    })
}

/// `K_λ(x_i, x_j)` on mesh vertices. Coincident points are singular in 2-D.
pub fn eval_kernel(params: &KernelParams, geom: &Geometry, i: usize, j: usize) -> Result<Complex64> {
    let s = geom.distance_to_boundary(i);
    let image = if params.closed { None } else { geom.image_distance(i, j).map(|d| if d.is_finite() { d } else { 2.0 * params.epsilon }) };
    kernel_value(params, geom.distance(i, j), image, s)
}

/// `∫_{B_R} K₀(√λ|y|)/(2π) dy = (1 − z K₁(z))/λ` with `z = √λ R`.
fn disk_self_integral(lambda: &SectorPoint, radius: f64) -> Result<Complex64> {
    let z = lambda.sqrt() * radius;
    let k1 = bessel_k(Order::new(1.0)?, z)?;
    Ok((Complex64::new(1.0, 0.0) - z * k1) / lambda.lambda())
}

/// Dense `G[i][j] = w_j K_λ(x_i, y_j)`.
#[derive(Clone, Debug)]
pub struct GreenKernelMatrix {
    n: usize,
    data: Vec<Complex64>,
    lambda: SectorPoint,
}

impl GreenKernelMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> SectorPoint {
        self.lambda
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `‖G‖_∞ = max_i Σ_j |G_ij|`, exact for the discrete sup norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .into_par_iter()
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .reduce(|| 0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<Complex64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Assembles `G_λ` over all mesh vertices. Rows at `∂M` vanish; the 2-D
/// diagonal integrates the free-space kernel exactly over a disk of the
/// vertex's quadrature area.
pub fn assemble_g(params: &KernelParams, geom: &Geometry) -> Result<GreenKernelMatrix> {
    let n = geom.num_vertices();
    let eps = params.epsilon;
    if (eps - geom.epsilon()).abs() > 1e-12 * eps || params.dim != geom.dim() || params.closed != geom.closed() {
        return Err(Error::Precondition("kernel parameters do not match the geometry".into()));
    }
    let w = geom.weights();
    let far = params.free_space(2.0 * eps)?;
    let rows: Vec<Result<Vec<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![Complex64::new(0.0, 0.0); n];
            if !params.closed && geom.mesh().is_boundary(i) {
                return Ok(row);
            }
            let s = geom.distance_to_boundary(i);
            let image_weight = if params.closed || s > 2.0 * eps {
                0.0
            } else if s < eps {
                1.0
            } else {
                cutoff_chi(s / eps)
            };
            for j in 0..n {
                let d = geom.distance(i, j);
                let mut value = if j == i {
                    if params.dim == 2 {
                        row[j] = disk_self_integral(&params.lambda, (w[i] / PI).sqrt())?;
                        Complex64::new(0.0, 0.0)
                    } else {
                        params.free_space(0.0)?
                    }
                } else if d >= 2.0 * eps {
                    far
                } else {
                    params.free_space(smooth_distance(d, eps))?
                };
                if image_weight > 0.0 {
                    let di = geom.image_distance(i, j).ok_or(Error::SingularKernel)?;
                    let image = if di.is_finite() { params.free_space(smooth_distance(di, eps))? } else { far };
                    value -= image_weight * image;
                }
                row[j] += value * w[j];
            }
            Ok(row)
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    for r in rows {
        data.extend(r?);
    }
    Ok(GreenKernelMatrix { n, data, lambda: params.lambda })
}

pub fn apply_g(g: &GreenKernelMatrix, f: &[Complex64]) -> Result<Vec<Complex64>> {
    if f.len() != g.n {
        return Err(Error::DimensionMismatch { expected: g.n, got: f.len() });
    }
    Ok((0..g.n).into_par_iter().map(|i| g.row(i).iter().zip(f).map(|(a, b)| a * b).sum()).collect())
}

pub fn apply_g_real(g: &GreenKernelMatrix, f: &[f64]) -> Result<Vec<Complex64>> {
    if f.len() != g.n {
        return Err(Error::DimensionMismatch { expected: g.n, got: f.len() });
    }
    Ok((0..g.n).into_par_iter().map(|i| g.row(i).iter().zip(f).map(|(a, b)| a * b).sum()).collect())
}

const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_48),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// `∫_{|y|<R} F(|y|) dy` in `n` dimensions on geometrically graded panels,
/// suitable for integrable algebraic and logarithmic singularities at 0.
pub fn ball_integral(f: impl Fn(f64) -> f64, radius: f64, n: usize) -> Result<f64> {
    let area = gamma_and_sphere_constants(n)?.vol_sphere;
    let mut total = 0.0;
    let mut hi = radius;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        total += GL8.iter().map(|&(x, w)| {
            let r = mid + half * x;
            w * half * f(r) * r.powi(n as i32 - 1)
        }).sum::<f64>();
        hi = lo;
    }
    Ok(area * total)
}

/// Ball radius whose volume equals `w`.
fn equivalent_radius(w: f64, n: usize) -> f64 {
    if n == 1 {
        0.5 * w
    } else {
        (w / PI).sqrt()
    }
}

/// One row of a kernel integral scan.
#[derive(Clone, Debug, Serialize)]
pub struct IntegralScanRow {
    pub abs_lambda: f64,
    /// `sup_x ∫ K_α(c ρ(x,y)) / ρ(x,y)^k dy` with `c = sin η · √|λ|`.
    pub direct: f64,
    /// Same with `x*` in place of `x`, sup over the collar (`NaN` if closed).
    pub reflected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralScan {
    pub alpha: f64,
    pub k: f64,
    pub n: usize,
    pub eta: f64,
    pub rows: Vec<IntegralScanRow>,
    pub slope_direct: f64,
    pub slope_reflected: f64,
    pub expected_slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let m = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    num / den
}

/// Tabulates the model integrals behind the `G_λ` estimate over a
/// modulus grid and fits their decay exponent, expected to be `(k − n)/2`.
pub fn kernel_integral_scan(alpha: f64, k: f64, geom: &Geometry, eta: f64, moduli: &[f64]) -> Result<IntegralScan> {
    let n = geom.dim();
    if k + alpha >= n as f64 {
        return Err(Error::Precondition(format!("k + alpha = {} must be below n = {n}", k + alpha)));
    }
    if !(eta > 0.0 && eta < PI / 2.0) {
        return Err(Error::Precondition(format!("eta = {eta} outside (0, pi/2)")));
    }
    if moduli.iter().any(|&m| !(m >= 1.0)) {
        return Err(Error::Precondition("scan moduli must be >= 1".into()));
    }
    let order = Order::new(alpha)?;
    let eps = geom.epsilon();
    let nv = geom.num_vertices();
    let w = geom.weights();
    let mut rows = Vec::with_capacity(moduli.len());
    for &modulus in moduli {
        let c = eta.sin() * modulus.sqrt();
        let model = |rho: f64| -> f64 { bessel_k_real(order, c * rho).unwrap_or(f64::NAN) / rho.powf(k) };
        let far = model(2.0 * eps);
        let integrand = |d: f64| if d >= 2.0 * eps { far } else { model(smooth_distance(d, eps)) };
        let direct = (0..nv)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let mut sum = ball_integral(&model, equivalent_radius(w[i], n), n)?;
                for j in 0..nv {
                    if j != i {
                        sum += w[j] * integrand(geom.distance(i, j));
                    }
                }
                Ok(sum)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let reflected = if geom.closed() {
            f64::NAN
        } else {
            (0..nv)
                .into_par_iter()
                .filter(|&i| geom.collar().contains(i))
                .map(|i| -> Result<f64> {
                    let mut sum = 0.0;
                    for j in 0..nv {
                        let d = geom.image_distance(i, j).unwrap_or(f64::INFINITY);
                        if d <= 0.0 {
                            sum += ball_integral(&model, equivalent_radius(w[j], n), n)?;
                        } else {
                            sum += w[j] * if d.is_finite() { integrand(d) } else { far };
                        }
                    }
                    Ok(sum)
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max)
        };
        rows.push(IntegralScanRow { abs_lambda: modulus, direct, reflected });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.abs_lambda).collect();
    let yd: Vec<f64> = rows.iter().map(|r| r.direct).collect();
    let yr: Vec<f64> = rows.iter().map(|r| r.reflected).collect();
    Ok(IntegralScan {
        alpha,
        k,
        n,
        eta,
        slope_direct: loglog_slope(&x, &yd),
        slope_reflected: if geom.closed() { f64::NAN } else { loglog_slope(&x, &yr) },
        expected_slope: (k - n as f64) / 2.0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GeometryOptions, MetricField};
    use crate::presets;
    use approx::assert_relative_eq;

    fn interval(n: usize, eps: f64) -> Geometry {
        let mesh = presets::interval_mesh(n, PI).unwrap();
        let metric = MetricField::flat(&mesh);
        Geometry::new(mesh, metric, GeometryOptions { epsilon: Some(eps) }).unwrap()
    }

    #[test]
    fn one_dimensional_free_space() {
        let lam = SectorPoint::new(Complex64::new(1.0, 0.0), 0.1).unwrap();
        let p = KernelParams::new(lam, 0.5, 1, false).unwrap();
        for rho in [0.0, 0.1, 0.3, 0.49] {
            let v = p.free_space(rho).unwrap();
            assert_relative_eq!(v.re, (-rho).exp() / 2.0, epsilon = 1e-15);
        }
        // Cross-check the closed form against the Bessel route.
        let lam = SectorPoint::new(Complex64::from_polar(9.0, 1.0), 0.1).unwrap();
        let p = KernelParams::new(lam, 0.5, 1, false).unwrap();
        let k = lam.sqrt();
        let rho = 0.37;
        let bessel = k.powf(-0.5) / (2.0 * PI).sqrt()
            * bessel_k(Order::new(-0.5).unwrap(), k * rho).unwrap()
            * rho.sqrt();
        assert!((p.free_space(rho).unwrap() - bessel).norm() < 1e-12 * bessel.norm());
    }

    #[test]
    fn boundary_rows_vanish_and_branches() {
        let geom = interval(201, 0.3);
        let lam = SectorPoint::new(Complex64::new(4.0, 1.0), 0.1).unwrap();
        let p = KernelParams::for_geometry(lam, &geom);
        for j in 1..200 {
            assert_eq!(eval_kernel(&p, &geom, 0, j).unwrap().norm(), 0.0);
        }
        let g = assemble_g(&p, &geom).unwrap();
        assert!(g.row(0).iter().chain(g.row(200)).all(|z| z.norm() == 0.0));
        // Vertex at s = 1.5 ε carries χ(1.5) on its image term.
        let h = PI / 200.0;
        let i = (0.45 / h).round() as usize;
        let s = geom.distance_to_boundary(i);
        let j = i + 7;
        let free = p.free_space(smooth_distance(geom.distance(i, j), 0.3)).unwrap();
        let image = p.free_space(smooth_distance(geom.image_distance(i, j).unwrap(), 0.3)).unwrap();
        let expect = free - cutoff_chi(s / 0.3) * image;
        assert!((eval_kernel(&p, &geom, i, j).unwrap() - expect).norm() < 1e-15);
    }

    #[test]
    fn interval_resolvent_of_sine() {
        // (1 − Δ)⁻¹ sin = sin/2; G approximates it away from the boundary.
        let geom = interval(801, PI / 8.0);
        let lam = SectorPoint::new(Complex64::new(1.0, 0.0), 0.1).unwrap();
        let g = assemble_g(&KernelParams::for_geometry(lam, &geom), &geom).unwrap();
        let f: Vec<f64> = geom.mesh().vertices().iter().map(|p| p[0].sin()).collect();
        let gf = apply_g_real(&g, &f).unwrap();
        let mid = 400;
        assert!((gf[mid].re - 0.5).abs() < 0.2, "{}", gf[mid]);
        let zero = apply_g_real(&g, &vec![0.0; 801]).unwrap();
        assert!(zero.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn closed_circle_constant() {
        let mesh = presets::circle_mesh(400, 1.0).unwrap();
        let metric = MetricField::flat(&mesh);
        let geom = Geometry::new(mesh, metric, GeometryOptions { epsilon: Some(0.5) }).unwrap();
        let lam = SectorPoint::new(Complex64::new(4.0, 0.0), 0.1).unwrap();
        let g = assemble_g(&KernelParams::for_geometry(lam, &geom), &geom).unwrap();
        let sums = g.row_sums();
        // ∫ over the circle of e^{−2ρ(t)}/4 with the smoothed distance.
        let m = 200_000;
        let dt = 2.0 * PI / m as f64;
        let expect: f64 =
            (0..m).map(|k| (-2.0 * smooth_distance((-PI + (k as f64 + 0.5) * dt).abs(), 0.5)).exp() / 4.0 * dt).sum();
        assert!((sums[10].re - expect).abs() < 1e-4, "{} vs {expect}", sums[10]);
        assert!(sums.iter().all(|s| (s - sums[0]).norm() < 1e-12));
    }

    #[test]
    fn disk_diagonal_matches_ball_integral() {
        let lam = SectorPoint::new(Complex64::new(30.0, 0.0), 0.1).unwrap();
        let r = 0.05;
        let exact = disk_self_integral(&lam, r).unwrap();
        let order = Order::new(0.0).unwrap();
        let quad = ball_integral(|x| bessel_k_real(order, 30f64.sqrt() * x).unwrap() / (2.0 * PI), r, 2).unwrap();
        assert_relative_eq!(exact.re, quad, max_relative = 1e-10);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [1.0, 4.0, 16.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert_relative_eq!(loglog_slope(&x, &y), -0.75, epsilon = 1e-12);
    }
}
