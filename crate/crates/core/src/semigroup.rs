//! The analytic semigroup `e^{tA}` by contour quadrature of the resolvent,
//! and the initial-boundary value problem built on it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_operator::{CsrMatrix, OperatorMatrix};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::kernel::{assemble_g, KernelParams};
use crate::resolvent::{correct_resolvent, resolvent_full, DirectResolvent};
use crate::specfun::SectorPoint;

/// Hyperbolic contour `z(θ) = μ(1 + sin(iθ − δ))`, whose asymptotes are the
/// rays `arg z = ±(π/2 + δ)` and which crosses the real axis at
/// `μ(1 − sin δ)`; trapezoidal nodes `θ = ±(k + ½)h`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ContourSpec {
    /// Total node count (even; conjugate pairs).
    pub nodes: usize,
    pub delta: f64,
    /// Smallest `|z|` allowed on the contour, where the node resolvents are
    /// still verified.
    pub min_modulus: f64,
    /// `μ ≥ mu_scale / t`.
    pub mu_scale: f64,
    /// The last node sits where `|e^{zt}| = e^{−truncation}`.
    pub truncation: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        Self { nodes: 48, delta: PI / 8.0, min_modulus: 13.0, mu_scale: 6.0, truncation: 15.0 }
    }
}

/// Realized nodes (upper half) and weights `z'(θ) h` for one time.
#[derive(Clone, Debug)]
pub struct Contour {
    pub t: f64,
    pub mu: f64,
    pub step: f64,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl ContourSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 4 || self.nodes % 2 != 0 {
            return Err(Error::Precondition(format!("contour node count {} must be even and >= 4", self.nodes)));
        }
        if !(self.delta > 0.0 && self.delta < PI / 2.0) {
            return Err(Error::Precondition(format!("contour delta {} outside (0, pi/2)", self.delta)));
        }
        if !(self.min_modulus > 0.0 && self.mu_scale > 0.0 && self.truncation > 0.0) {
            return Err(Error::Precondition("contour scales must be positive".into()));
        }
        Ok(())
    }

    /// Sector half-gap used to tag the nodes as sector points.
    pub fn eta(&self) -> f64 {
        (PI / 2.0 - self.delta) / 2.0
    }

    pub fn realize(&self, t: f64) -> Result<Contour> {
        self.validate()?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Precondition(format!("time {t} must be positive")));
        }
        let sd = self.delta.sin();
        let mu = (self.min_modulus / (1.0 - sd)).max(self.mu_scale / t);
        let half = self.nodes / 2;
        let step = ((mu * t + self.truncation) / (mu * t * sd)).acosh() / half as f64;
        let mut nodes = Vec::with_capacity(half);
        let mut weights = Vec::with_capacity(half);
        for k in 0..half {
            let w = Complex64::new(-self.delta, (k as f64 + 0.5) * step);
            nodes.push(mu * (1.0 + w.sin()));
            weights.push(mu * Complex64::i() * w.cos() * step);
        }
        Ok(Contour { t, mu, step, nodes, weights })
    }
}

/// Source of resolvents `(λ − A)⁻¹` and of the operator `A` itself.
pub trait ResolventProvider: Sync {
    fn dim(&self) -> usize;
    fn boundary_mask(&self) -> &[bool];
    /// Mass weights of the discrete `L²` inner product.
    fn weights(&self) -> &[f64];
    fn resolve(&self, lambda: SectorPoint, f: &[Complex64]) -> Result<Vec<Complex64>>;
    /// `A u`, zero on boundary rows.
    fn apply(&self, u: &[Complex64]) -> Vec<Complex64>;
}

fn masked(mask: &[bool], mut v: Vec<Complex64>) -> Vec<Complex64> {
    for (x, &b) in v.iter_mut().zip(mask) {
        if b {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    v
}

/// Neumann-corrected Green operators of `L`.
pub struct CorrectedProvider<'a> {
    pub geom: &'a Geometry,
    pub op: &'a OperatorMatrix,
    pub probes: &'a [Vec<f64>],
}

impl ResolventProvider for CorrectedProvider<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn boundary_mask(&self) -> &[bool] {
        self.op.boundary_mask()
    }

    fn weights(&self) -> &[f64] {
        self.op.mass()
    }

    fn resolve(&self, lambda: SectorPoint, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let g = assemble_g(&KernelParams::for_geometry(lambda, self.geom), self.geom)?;
        Ok(correct_resolvent(self.op, &g, self.probes)?.apply(f))
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        masked(self.op.boundary_mask(), self.op.apply_complex(u))
    }
}

/// `R_A = R(I − PR)⁻¹` for `A = L̃ + P`.
pub struct PerturbedProvider<'a> {
    pub geom: &'a Geometry,
    pub op_tilde: &'a OperatorMatrix,
    pub p: &'a CsrMatrix,
    pub probes: &'a [Vec<f64>],
}

impl ResolventProvider for PerturbedProvider<'_> {
    fn dim(&self) -> usize {
        self.op_tilde.dim()
    }

    fn boundary_mask(&self) -> &[bool] {
        self.op_tilde.boundary_mask()
    }

    fn weights(&self) -> &[f64] {
        self.op_tilde.mass()
    }

    fn resolve(&self, lambda: SectorPoint, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let g = assemble_g(&KernelParams::for_geometry(lambda, self.geom), self.geom)?;
        resolvent_full(self.op_tilde, self.p, &g, self.probes)?.apply(f)
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut v = self.op_tilde.apply_complex(u);
        let pu = self.p.apply_complex(u);
        v.iter_mut().zip(&pu).for_each(|(a, b)| *a += b);
        masked(self.op_tilde.boundary_mask(), v)
    }
}

/// Banded direct solves of `λ − L`; the reference path when the Neumann
/// series does not contract on the contour.
pub struct DirectProvider<'a> {
    pub op: &'a OperatorMatrix,
}

impl ResolventProvider for DirectProvider<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn boundary_mask(&self) -> &[bool] {
        self.op.boundary_mask()
    }

    fn weights(&self) -> &[f64] {
        self.op.mass()
    }

    fn resolve(&self, lambda: SectorPoint, f: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(DirectResolvent::new(self.op, lambda.lambda())?.solve(f))
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        masked(self.op.boundary_mask(), self.op.apply_complex(u))
    }
}

/// `u(t)` with the largest relative node residual `‖(z − A)R(z)u₀ − u₀‖/‖u₀‖`.
#[derive(Clone, Debug, Serialize)]
pub struct Evolved {
    pub u: Vec<f64>,
    pub max_node_residual: f64,
    pub mu: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `u(t) = (1/2πi) ∫ e^{zt} R(z) u₀ dz`, folded onto the upper half by
/// conjugate symmetry.
pub fn evolve(provider: &dyn ResolventProvider, u0: &[f64], t: f64, contour: &ContourSpec) -> Result<Evolved> {
    let n = provider.dim();
    if u0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u0.len() });
    }
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("initial value must be finite".into()));
    }
    let c = contour.realize(t)?;
    let scale = sup(u0);
    if scale == 0.0 {
        return Ok(Evolved { u: vec![0.0; n], max_node_residual: 0.0, mu: c.mu });
    }
    let f: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let eta = contour.eta();
    let terms: Vec<(Vec<Complex64>, f64)> = c
        .nodes
        .par_iter()
        .zip(&c.weights)
        .enumerate()
        .map(|(index, (&z, &w))| {
            let node = |e: Error| Error::ContourNode { index, z, t, source: Box::new(e) };
            let lambda = SectorPoint::new(z, eta).map_err(node)?;
            let r = provider.resolve(lambda, &f).map_err(node)?;
            let ar = provider.apply(&r);
            let mask = provider.boundary_mask();
            let res = (0..n).filter(|&i| !mask[i]).map(|i| (z * r[i] - ar[i] - f[i]).norm()).fold(0.0, f64::max);
            let factor = (z * t).exp() * w;
            Ok((r.into_iter().map(|x| x * factor).collect(), res / scale))
        })
        .collect::<Result<_>>()?;
    // Neumaier summation in fixed node order.
    let mut u = vec![0.0; n];
    let mut comp = vec![0.0; n];
    for (term, _) in &terms {
        for i in 0..n {
            let x = term[i].im / PI;
            let s = u[i] + x;
            comp[i] += if u[i].abs() >= x.abs() { (u[i] - s) + x } else { (x - s) + u[i] };
            u[i] = s;
        }
    }
    let mask = provider.boundary_mask();
    for i in 0..n {
        u[i] = if mask[i] { 0.0 } else { u[i] + comp[i] };
    }
    let max_node_residual = terms.iter().map(|t| t.1).fold(0.0, f64::max);
    Ok(Evolved { u, max_node_residual, mu: c.mu })
}

#[derive(Clone, Debug, Serialize)]
pub struct IbpSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub contour: ContourSpec,
    pub residuals: Vec<f64>,
}

impl IbpSolution {
    /// Weighted `L²` norms of the states.
    pub fn energies(&self, weights: &[f64]) -> Vec<f64> {
        self.states.iter().map(|u| u.iter().zip(weights).map(|(x, w)| x * x * w).sum::<f64>().sqrt()).collect()
    }
}

pub fn solve_ibp(provider: &dyn ResolventProvider, u0: &[f64], times: &[f64], contour: &ContourSpec) -> Result<IbpSolution> {
    if times.iter().any(|&t| !(t > 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("times must be positive and increasing".into()));
    }
    let mut states = Vec::with_capacity(times.len());
    let mut residuals = Vec::with_capacity(times.len());
    for &t in times {
        let e = evolve(provider, u0, t, contour)?;
        states.push(e.u);
        residuals.push(e.max_node_residual);
    }
    Ok(IbpSolution { times: times.to_vec(), states, contour: contour.clone(), residuals })
}

#[derive(Clone, Debug, Serialize)]
pub struct SemigroupCheck {
    pub t1: f64,
    pub t2: f64,
    /// `‖T(t₁+t₂)u₀ − T(t₂)T(t₁)u₀‖_∞ / ‖u₀‖_∞`.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const SEMIGROUP_TOLERANCE: f64 = 1e-3;

pub fn semigroup_property_check(
    provider: &dyn ResolventProvider,
    u0: &[f64],
    t1: f64,
    t2: f64,
    contour: &ContourSpec,
) -> Result<SemigroupCheck> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::Precondition("t1 and t2 must be positive".into()));
    }
    let whole = evolve(provider, u0, t1 + t2, contour)?.u;
    let first = evolve(provider, u0, t1, contour)?.u;
    let second = evolve(provider, &first, t2, contour)?.u;
    let scale = sup(u0);
    let diff = whole.iter().zip(&second).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let discrepancy = if scale == 0.0 { diff } else { diff / scale };
    Ok(SemigroupCheck { t1, t2, discrepancy, tolerance: SEMIGROUP_TOLERANCE, passed: discrepancy <= SEMIGROUP_TOLERANCE })
}
