//! Modified Bessel functions of real order and complex argument.
//!
//! `K_ν` is evaluated with Temme's series for `|z| <= 2`, Steed's continued
//! fraction for `2 < |z| < 25` and the Hankel expansion beyond that. Each
//! route produces the pair `(K_μ, K_{μ+1})` with `|μ| <= 1/2` and forward
//! recurrence lifts it to the requested order, so integer orders need no
//! special casing. `I_ν` uses the power series for moderate arguments and the
//! Wronskian with a continued-fraction ratio otherwise.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported `|α|`.
pub const MAX_ORDER: f64 = 8.0;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 20_000;
const TEMME_RADIUS: f64 = 2.0;
const HANKEL_RADIUS: f64 = 25.0;
/// `exp` overflows a little above 709.
const EXP_LIMIT: f64 = 700.0;

/// Taylor coefficients of `1/Γ(1+x)` around zero.
const RGAMMA_TAYLOR: [f64; 30] = [
    1.0,
    0.577_215_664_901_532_860_61,
    -0.655_878_071_520_253_881_08,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_748,
    -0.009_621_971_527_876_973_562_1,
    0.007_218_943_246_663_099_542_4,
    -0.001_165_167_591_859_065_112_1,
    -0.000_215_241_674_114_950_972_82,
    0.000_128_050_282_388_116_186_15,
    -0.000_020_134_854_780_788_238_656,
    -1.250_493_482_142_670_657_3e-6,
    1.133_027_231_981_695_882_4e-6,
    -2.056_338_416_977_607_103_5e-7,
    6.116_095_104_481_415_817_9e-9,
    5.002_007_644_469_222_930_1e-9,
    -1.181_274_570_487_020_144_6e-9,
    1.043_426_711_691_100_510_5e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708_2e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783_2e-14,
    -5.348_122_539_423_017_982_4e-15,
    1.226_778_628_238_260_790_2e-15,
    -1.181_259_301_697_458_769_5e-16,
    1.186_692_254_751_600_332_6e-18,
    1.412_380_655_318_031_781_6e-18,
    -2.298_745_684_435_370_206_6e-19,
    1.714_406_321_927_337_433_4e-20,
];

/// A Bessel order `α` with `|α| <= 8`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Order(f64);

impl Order {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha.abs() > MAX_ORDER {
            return Err(Error::OrderRange(alpha));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Order of the free-space resolvent kernel in dimension `n`.
    pub fn for_dimension(n: usize) -> Self {
        Self(n as f64 / 2.0 - 1.0)
    }
}

impl TryFrom<f64> for Order {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

/// A spectral parameter inside the sector `Σ_{π−η} = {λ ≠ 0 : |arg λ| < π − η}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectorPoint {
    lambda: Complex64,
    eta: f64,
}

impl SectorPoint {
    pub fn new(lambda: Complex64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < PI) {
            return Err(Error::Precondition(format!("eta = {eta} must lie in (0, pi)")));
        }
        if !(lambda.norm() > 0.0) || lambda.arg().abs() >= PI - eta {
            return Err(Error::OutsideSector { lambda, eta });
        }
        Ok(Self { lambda, eta })
    }

    /// Builds `λ = modulus · e^{i arg}`.
    pub fn from_polar(modulus: f64, arg: f64, eta: f64) -> Result<Self> {
        Self::new(Complex64::from_polar(modulus, arg), eta)
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn modulus(&self) -> f64 {
        self.lambda.norm()
    }

    /// Principal square root; `|arg √λ| < (π − η)/2`.
    pub fn sqrt(&self) -> Complex64 {
        self.lambda.sqrt()
    }

    pub fn conj(&self) -> Self {
        Self { lambda: self.lambda.conj(), eta: self.eta }
    }
}

/// `1/Γ(x)` for real `x`; exactly zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    let mut factor = 1.0;
    let mut y = x;
    while y > 1.5 {
        y -= 1.0;
        factor /= y;
        if factor == 0.0 {
            return 0.0;
        }
    }
    while y < 0.5 {
        factor *= y;
        y += 1.0;
    }
    factor * rgamma_near_one(y - 1.0)
}

/// `Γ(x)` for real `x`.
pub fn gamma(x: f64) -> f64 {
    1.0 / rgamma(x)
}

fn rgamma_near_one(u: f64) -> f64 {
    RGAMMA_TAYLOR.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// `Γ₁(μ)`, `Γ₂(μ)`, `1/Γ(1+μ)`, `1/Γ(1−μ)` for Temme's series, `|μ| <= 1/2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    for m in (0..RGAMMA_TAYLOR.len() / 2).rev() {
        gam1 = gam1 * mu2 + RGAMMA_TAYLOR[2 * m + 1];
        gam2 = gam2 * mu2 + RGAMMA_TAYLOR[2 * m];
    }
    (-gam1, gam2, rgamma_near_one(mu), rgamma_near_one(-mu))
}

fn check_argument(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Precondition(format!("non-finite argument {z}")));
    }
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(Error::BranchCut(z));
    }
    Ok(())
}

/// `(K_μ(z), K_{μ+1}(z))` for `|z| <= 2`, `|μ| <= 1/2`.
fn k_pair_temme(mu: f64, z: Complex64) -> (Complex64, Complex64) {
    let x2 = z * 0.5;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = d * mu;
    let fact2 = if e.norm() < EPS { Complex64::new(1.0, 0.0) } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = (e.cosh() * gam1 + fact2 * d * gam2) * fact;
    let mut sum = ff;
    let ee = e.exp();
    let mut p = ee * (0.5 / gampl);
    let mut q = ee.inv() * (0.5 / gammi);
    let mut c = Complex64::new(1.0, 0.0);
    let dd = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (ff * fi + p + q) / (fi * fi - mu * mu);
        c = c * dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - ff * fi);
        if del.norm() < sum.norm() * EPS {
            break;
        }
    }
    (sum, sum1 / x2)
}

/// `(e^z K_μ(z), e^z K_{μ+1}(z))` by Steed's continued fraction, `Re z > 0`.
fn k_pair_steed_scaled(mu: f64, z: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let mut b = (one + z) * 2.0;
    let mut d = b.inv();
    let mut delh = d;
    let mut h = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25 - mu * mu;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = a1;
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += qnew * c;
        b += 2.0;
        d = (b + d * a).inv();
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).norm() < EPS {
            break;
        }
    }
    h *= a1;
    let kmu = (Complex64::new(PI, 0.0) / (z * 2.0)).sqrt() / s;
    let kmu1 = kmu * (z + mu + 0.5 - h) / z;
    (kmu, kmu1)
}

/// `e^z K_ν(z)` from the Hankel expansion, large `|z|`, `Re z > 0`.
fn k_hankel_scaled(nu: f64, z: Complex64) -> Complex64 {
    let four_nu2 = 4.0 * nu * nu;
    let inv = z.inv();
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term = term * inv * ((four_nu2 - odd * odd) / (8.0 * k as f64));
        let size = term.norm();
        if size > last {
            break;
        }
        sum += term;
        if size < EPS * sum.norm() {
            break;
        }
        last = size;
    }
    (Complex64::new(PI, 0.0) / (z * 2.0)).sqrt() * sum
}

/// `(e^z K_ν(z), e^z K_{ν+1}(z))` for `ν >= 0` and `Re z > 0` or `|z| <= 2`.
fn k_pair_scaled(nu: f64, z: Complex64) -> (Complex64, Complex64) {
    if z.norm() >= HANKEL_RADIUS && z.re > 0.0 {
        return (k_hankel_scaled(nu, z), k_hankel_scaled(nu + 1.0, z));
    }
    let shift = (nu + 0.5).floor();
    let mu = nu - shift;
    let (mut k0, mut k1) = if (mu + 0.5).abs() < 1e-15 {
        let half = (Complex64::new(PI, 0.0) / (z * 2.0)).sqrt();
        (half, half)
    } else if z.norm() <= TEMME_RADIUS {
        let (a, b) = k_pair_temme(mu, z);
        let scale = z.exp();
        (a * scale, b * scale)
    } else {
        k_pair_steed_scaled(mu, z)
    };
    let two_over_z = z.inv() * 2.0;
    for i in 1..=(shift as usize) {
        let next = two_over_z * (mu + i as f64) * k1 + k0;
        k0 = k1;
        k1 = next;
    }
    (k0, k1)
}

/// `e^z K_ν(z)` on `ℂ∖ℝ₋`, any real `ν` (uses `K_{−ν} = K_ν`).
fn k_scaled_any(nu: f64, z: Complex64) -> Complex64 {
    let nu = nu.abs();
    if z.re >= 0.0 || z.norm() <= TEMME_RADIUS {
        return k_pair_scaled(nu, z).0;
    }
    // Continuation from the right half-plane: z = w e^{mπi}, Re w > 0.
    let m = if z.im >= 0.0 { 1.0 } else { -1.0 };
    let w = -z;
    let phase = Complex64::from_polar(1.0, -m * PI * nu);
    let kw = k_pair_scaled(nu, w).0 * (-w).exp();
    let iw = i_unscaled(nu, w);
    (phase * kw - Complex64::new(0.0, PI * m) * iw) * z.exp()
}

/// `(K_ν(z), underflowed)`: the value is flushed to zero and the flag set
/// when `Re z` is so large that `e^{−z}` underflows.
pub fn bessel_k_flagged(order: Order, z: Complex64) -> Result<(Complex64, bool)> {
    check_argument(z)?;
    if z.re > EXP_LIMIT {
        return Ok((Complex64::new(0.0, 0.0), true));
    }
    let scaled = k_scaled_any(order.value(), z);
    Ok((scaled * (-z).exp(), false))
}

/// Modified Bessel function of the second kind `K_α(z)`.
pub fn bessel_k(order: Order, z: Complex64) -> Result<Complex64> {
    bessel_k_flagged(order, z).map(|(v, _)| v)
}

/// Exponentially scaled `e^z K_α(z)`; never underflows for `Re z > 0`.
pub fn bessel_k_scaled(order: Order, z: Complex64) -> Result<Complex64> {
    check_argument(z)?;
    Ok(k_scaled_any(order.value(), z))
}

/// Real-argument convenience wrapper, `x > 0`.
pub fn bessel_k_real(order: Order, x: f64) -> Result<f64> {
    bessel_k(order, Complex64::new(x, 0.0)).map(|v| v.re)
}

/// `K'_α(z) = −(K_{α−1}(z) + K_{α+1}(z))/2`.
pub fn bessel_k_derivative(order: Order, z: Complex64) -> Result<Complex64> {
    check_argument(z)?;
    if z.re > EXP_LIMIT {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let alpha = order.value();
    let below = k_scaled_any(alpha - 1.0, z);
    let above = k_scaled_any(alpha + 1.0, z);
    Ok(-(below + above) * 0.5 * (-z).exp())
}

fn i_series(nu: f64, z: Complex64) -> Complex64 {
    let half = z * 0.5;
    let q = half * half;
    let mut term = if nu == 0.0 { Complex64::new(1.0, 0.0) } else { half.powf(nu) } * rgamma(nu + 1.0);
    let mut sum = term;
    for k in 1..MAX_ITER {
        let fk = k as f64;
        term = term * q / (fk * (fk + nu));
        sum += term;
        if term.norm() <= EPS * sum.norm() && fk > nu.abs() {
            break;
        }
    }
    sum
}

/// `I_{ν+1}(z)/I_ν(z)` by modified Lentz on the backward-recurrence fraction.
fn i_ratio(nu: f64, z: Complex64) -> Complex64 {
    let tiny = 1e-150;
    let inv2 = z.inv() * 2.0;
    let b = |k: usize| inv2 * (nu + k as f64);
    let mut f = Complex64::new(tiny, 0.0);
    let mut c = f;
    let mut d = Complex64::new(0.0, 0.0);
    for k in 1..MAX_ITER {
        let bk = b(k);
        d = bk + d;
        if d.norm() < tiny {
            d = Complex64::new(tiny, 0.0);
        }
        c = bk + c.inv();
        if c.norm() < tiny {
            c = Complex64::new(tiny, 0.0);
        }
        d = d.inv();
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).norm() < EPS {
            break;
        }
    }
    f
}

/// `I_ν(z)` without range checks, `Re z >= 0`.
fn i_unscaled(nu: f64, z: Complex64) -> Complex64 {
    if nu < 0.0 && nu == nu.floor() {
        return i_unscaled(-nu, z);
    }
    if z.norm() <= 17.0 {
        return i_series(nu, z);
    }
    let ratio = i_ratio(nu, z);
    let (k_nu, k_next) = if nu >= 0.0 {
        k_pair_scaled(nu, z)
    } else {
        (k_scaled_any(nu, z), k_scaled_any(nu + 1.0, z))
    };
    // Wronskian: I_ν K_{ν+1} + I_{ν+1} K_ν = 1/z.
    z.exp() / (z * (k_next + ratio * k_nu))
}

/// Modified Bessel function of the first kind `I_α(z)`, principal branch.
pub fn bessel_i(order: Order, z: Complex64) -> Result<Complex64> {
    let nu = order.value();
    if z == Complex64::new(0.0, 0.0) {
        return Ok(if nu == 0.0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    }
    check_argument(z)?;
    if z.re.abs() > EXP_LIMIT {
        return Err(Error::Overflow { function: "I", z });
    }
    if z.re >= 0.0 {
        return Ok(i_unscaled(nu, z));
    }
    let m = if z.im >= 0.0 { 1.0 } else { -1.0 };
    Ok(Complex64::from_polar(1.0, m * PI * nu) * i_unscaled(nu, -z))
}

/// Envelope of `|K_α(z)|` on the sector `|arg z| <= π/2 − η`:
/// returns `K_α(sin(η)|z|)`.
pub fn envelope_bound(order: Order, z: Complex64, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < PI / 2.0) {
        return Err(Error::Precondition(format!("eta = {eta} must lie in (0, pi/2)")));
    }
    if z.norm() == 0.0 || z.arg().abs() > PI / 2.0 - eta + 1e-12 {
        return Err(Error::Precondition(format!("{z} is outside the sector |arg z| <= pi/2 - {eta}")));
    }
    bessel_k_real(order, eta.sin() * z.norm())
}

/// `Γ(n/2)` and the surface measure of the unit sphere `S^{n−1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereConstants {
    pub gamma_half_n: f64,
    pub vol_sphere: f64,
}

pub fn gamma_and_sphere_constants(n: usize) -> Result<SphereConstants> {
    if !(1..=3).contains(&n) {
        return Err(Error::Precondition(format!("dimension {n} not in 1..=3")));
    }
    let half = n as f64 / 2.0;
    Ok(SphereConstants {
        gamma_half_n: gamma(half),
        vol_sphere: n as f64 * PI.powf(half) * rgamma(half + 1.0),
    })
}
