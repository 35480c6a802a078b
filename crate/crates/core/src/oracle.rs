//! Reference answers that share no code with the kernel and resolvent
//! paths: dense eigensolves, dense direct solves, closed forms and
//! double-exponential quadrature.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::discrete_operator::OperatorMatrix;
use crate::error::{Error, Result};

/// Interior dimension above which dense solves are refused.
pub const DENSE_CAP: usize = 4000;

/// First positive zero of `J₀`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Eigenpairs of the interior block of `L`, ascending; eigenvectors are
/// full vertex vectors, orthonormal in the mass inner product.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

fn check_cap(m: usize) -> Result<()> {
    if m > DENSE_CAP {
        return Err(Error::SizeCap { size: m, cap: DENSE_CAP });
    }
    Ok(())
}

/// `L_II = −W⁻¹S_II` is self-adjoint in the `W` inner product; the
/// symmetric form `W^{1/2} L W^{−1/2}` is diagonalized.
pub fn dense_eigensolve(op: &OperatorMatrix) -> Result<EigenDecomposition> {
    let interior = op.interior();
    let m = interior.len();
    check_cap(m)?;
    let l = op.interior_dense();
    let w: Vec<f64> = interior.iter().map(|&i| op.mass()[i]).collect();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| l[(i, j)] * sw[i] / sw[j]);
    let asym = (&a - a.transpose()).amax();
    if asym > 1e-9 * a.amax() {
        return Err(Error::Precondition(format!("operator is not self-adjoint (asymmetry {asym:.3e})")));
    }
    let eig = SymmetricEigen::new((&a + a.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let n = op.dim();
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    for &k in &order {
        values.push(eig.eigenvalues[k]);
        let mut v = vec![0.0; n];
        for (a, &i) in interior.iter().enumerate() {
            v[i] = eig.eigenvectors[(a, k)] / sw[a];
        }
        vectors.push(v);
    }
    Ok(EigenDecomposition { values, vectors, weights: op.mass().to_vec() })
}

impl EigenDecomposition {
    /// Eigenvalues ordered from the top of the spectrum (closest to 0).
    pub fn top(&self, count: usize) -> Vec<f64> {
        self.values.iter().rev().take(count).copied().collect()
    }

    /// The eigenvector belonging to `top(k + 1)[k]`.
    pub fn top_vector(&self, k: usize) -> &[f64] {
        &self.vectors[self.values.len() - 1 - k]
    }

    pub fn inner(&self, f: &[Complex64], v: &[f64]) -> Complex64 {
        f.iter().zip(v).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// `min_k |λ − μ_k|`.
    pub fn spectral_gap(&self, lambda: Complex64) -> f64 {
        self.values.iter().map(|&m| (lambda - m).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// `Σ_k ⟨f, v_k⟩_w v_k / (λ − μ_k)`.
pub fn reference_resolvent(decomp: &EigenDecomposition, lambda: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>> {
    if f.len() != decomp.weights.len() {
        return Err(Error::DimensionMismatch { expected: decomp.weights.len(), got: f.len() });
    }
    let gap = decomp.spectral_gap(lambda);
    if gap <= 1e-12 * lambda.norm().max(1.0) {
        return Err(Error::Precondition(format!("lambda = {lambda} is an eigenvalue to working precision")));
    }
    let mut u = vec![Complex64::new(0.0, 0.0); f.len()];
    for (mu, v) in decomp.values.iter().zip(&decomp.vectors) {
        let c = decomp.inner(f, v) / (lambda - mu);
        for (x, &vi) in u.iter_mut().zip(v) {
            *x += c * vi;
        }
    }
    Ok(u)
}

/// `Σ_k ⟨f, v_k⟩_w e^{μ_k t} v_k`.
pub fn reference_semigroup(decomp: &EigenDecomposition, t: f64, f: &[f64]) -> Vec<f64> {
    let fc: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut u = vec![0.0; f.len()];
    for (mu, v) in decomp.values.iter().zip(&decomp.vectors) {
        let c = decomp.inner(&fc, v).re * (mu * t).exp();
        for (x, &vi) in u.iter_mut().zip(v) {
            *x += c * vi;
        }
    }
    u
}

/// Dense LU solve of `(λ − L_II)u = f_I`, `u = 0` on `∂M`.
pub fn direct_solve(op: &OperatorMatrix, lambda: Complex64, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let interior = op.interior();
    let m = interior.len();
    check_cap(m)?;
    let l = op.interior_dense();
    let a = DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { lambda } else { Complex64::new(0.0, 0.0) };
        d - l[(i, j)]
    });
    let b = DVector::from_iterator(m, interior.iter().map(|&i| f[i]));
    let x = a.lu().solve(&b).ok_or_else(|| Error::Precondition("singular shifted operator".into()))?;
    let mut u = vec![Complex64::new(0.0, 0.0); op.dim()];
    for (k, &i) in interior.iter().enumerate() {
        u[i] = x[k];
    }
    Ok(u)
}

/// All eigenvalues of the (possibly non-symmetric) interior block, through a
/// real Schur form.
pub fn general_spectrum(op: &OperatorMatrix) -> Result<Vec<Complex64>> {
    check_cap(op.interior().len())?;
    Ok(op.interior_dense().complex_eigenvalues().iter().copied().collect())
}

/// Dirichlet eigenvalues `−(kπ/ℓ)²` of `d²/dx²` on `[0, ℓ]`.
pub fn interval_eigenvalue(k: usize, length: f64) -> f64 {
    -(k as f64 * PI / length).powi(2)
}

/// `J₀(x) = (1/π) ∫₀^π cos(x sin θ) dθ` by the trapezoidal rule, which is
/// spectrally accurate for this periodic integrand.
pub fn bessel_j0(x: f64) -> f64 {
    let m = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / m as f64;
    let mut s = 1.0;
    for k in 1..m {
        s += (x * (k as f64 * h).sin()).cos();
    }
    s / m as f64
}

/// Tanh-sinh quadrature of `f` on `[a, b]`, refined until two levels agree
/// to `tol` (relative).
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let r = 0.5 * (b - a);
    double_exponential(
        |t| {
            let u = 0.5 * PI * t.sinh();
            let w = 0.5 * PI * t.cosh() / u.cosh().powi(2);
            // Offset from the nearer endpoint, exact near the ends.
            let gap = 2.0 * r / (1.0 + (2.0 * u.abs()).exp());
            let y = if u < 0.0 { a + gap } else { b - gap };
            if y <= a || y >= b {
                return 0.0;
            }
            r * w * f(y)
        },
        tol,
    )
}

/// Exp-sinh quadrature of `f` on `[a, ∞)`.
pub fn exp_sinh(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> Result<f64> {
    double_exponential(
        |t| {
            let e = (0.5 * PI * t.sinh()).exp();
            let w = 0.5 * PI * t.cosh() * e;
            let v = f(a + e);
            if v == 0.0 || !w.is_finite() {
                0.0
            } else {
                w * v
            }
        },
        tol,
    )
}

/// Trapezoidal rule on `ℝ` for a doubly exponentially decaying integrand,
/// halving the step until converged.
fn double_exponential(g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let tmax = 5.0;
    let mut h = 0.5;
    let sum_at = |h: f64, odd_only: bool| -> f64 {
        let mut s = 0.0;
        let mut k = if odd_only { 1 } else { 0 };
        let step = if odd_only { 2 } else { 1 };
        loop {
            let t = k as f64 * h;
            if t > tmax {
                break;
            }
            let v = if k == 0 { g(0.0) } else { g(t) + g(-t) };
            if v.is_finite() {
                s += v;
            }
            k += step;
        }
        s
    };
    let mut total = sum_at(h, false);
    let mut estimate = total * h;
    for _ in 0..12 {
        h *= 0.5;
        total += sum_at(h, true);
        let next = total * h;
        if (next - estimate).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Quadrature(format!("double-exponential rule stalled at {estimate}")))
}

/// `∫₀^∞ K_α(c r) r^{n−1−k} dr` with `c = sin(η) √|λ|`, evaluated as
/// `Γ(μ) c^{−μ} ∫₀^∞ cosh(αt) / cosh(t)^μ dt`, `μ = n − k`, after
/// exchanging the order in `K_α(x) = ∫₀^∞ e^{−x cosh t} cosh(αt) dt`.
pub fn appendix_integral(alpha: f64, k: f64, n: usize, lambda_abs: f64, eta: f64) -> Result<f64> {
    let mu = n as f64 - k;
    if !(mu > alpha.abs()) {
        return Err(Error::Precondition(format!("integral diverges: k + |alpha| = {} >= n = {n}", k + alpha.abs())));
    }
    if !(lambda_abs > 0.0 && eta > 0.0 && eta < PI) {
        return Err(Error::Precondition("need |lambda| > 0 and eta in (0, pi)".into()));
    }
    let c = eta.sin() * lambda_abs.sqrt();
    // cosh(αt)/cosh(t)^μ in log form so large t does not overflow.
    let integrand = |t: f64| {
        let lc = |x: f64| x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2;
        (lc(alpha * t) - mu * lc(t)).exp()
    };
    let inner = exp_sinh(integrand, 0.0, 1e-13)?;
    Ok(gamma(mu) * c.powf(-mu) * inner)
}

/// Mellin closed form `2^{μ−2} Γ((μ−α)/2) Γ((μ+α)/2) c^{−μ}` of the same
/// integral.
pub fn appendix_integral_closed_form(alpha: f64, k: f64, n: usize, lambda_abs: f64, eta: f64) -> f64 {
    let mu = n as f64 - k;
    let c = eta.sin() * lambda_abs.sqrt();
    ((mu - 2.0) * std::f64::consts::LN_2 + ln_gamma((mu - alpha) / 2.0) + ln_gamma((mu + alpha) / 2.0)
        - mu * c.ln())
    .exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!(bessel_j0(J0_FIRST_ZERO).abs() < 1e-14);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
    }

    #[test]
    fn double_exponential_rules() {
        let v = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10, "{v}");
        let v = exp_sinh(|x| (-x).exp() / x.sqrt(), 0.0, 1e-12).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn radial_integral_agrees_with_mellin_form() {
        for &(alpha, k, n) in &[(0.5, 0.0, 1usize), (-0.5, 0.0, 1), (0.0, 1.0, 2), (0.0, 0.0, 2), (1.0, 0.0, 2)] {
            let a = appendix_integral(alpha, k, n, 3.0, 0.7).unwrap();
            let b = appendix_integral_closed_form(alpha, k, n, 3.0, 0.7);
            assert!((a - b).abs() < 1e-10 * b, "{alpha} {k} {n}: {a} {b}");
        }
        assert!(appendix_integral(1.0, 1.0, 2, 1.0, 1.0).is_err());
    }
}
