//! `bench-bessel`: identity, envelope and ODE checks for `K_α`, plus timings.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use sectorial::specfun::{bessel_i, bessel_k, bessel_k_derivative, bessel_k_real, envelope_bound, gamma, Order};

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::output::{Csv, OutDir};
use crate::Outcome;

pub const ENVELOPE_TOLERANCE: f64 = 1e-12;
pub const WRONSKIAN_TOLERANCE: f64 = 1e-9;
pub const SMALL_R_TOLERANCE: f64 = 1e-4;
/// Central differences of `K'` carry an `O(δ²)` error of about `1e−8`.
pub const ODE_TOLERANCE: f64 = 1e-6;

/// Representative `|z|` for each evaluation route.
pub const REGIMES: [(&str, f64); 3] = [("series", 1.0), ("continued-fraction", 8.0), ("asymptotic", 40.0)];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    fn of(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skipped => "skipped",
        }
    }
}

struct Row {
    check: &'static str,
    alpha: f64,
    eta: Option<f64>,
    samples: usize,
    value: f64,
    tolerance: f64,
    status: Status,
}

fn k(alpha: f64, z: Complex64) -> Complex64 {
    bessel_k(Order::new(alpha).expect("validated order"), z).expect("sector argument")
}

fn envelope(alpha: f64, eta: f64, samples: usize, rng: &mut ChaCha8Rng) -> Row {
    let order = Order::new(alpha).expect("validated order");
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let r = 10f64.powf(rng.random_range(-2.0..1.7));
        let phi = rng.random_range(-1.0..1.0) * (PI / 2.0 - eta);
        let z = Complex64::from_polar(r, phi);
        let bound = envelope_bound(order, z, eta).expect("inside the sector");
        worst = worst.max(k(alpha, z).norm() / bound - 1.0);
    }
    let status = if samples == 0 { Status::Skipped } else { Status::of(worst <= ENVELOPE_TOLERANCE) };
    Row {
        check: "envelope",
        alpha,
        eta: Some(eta),
        samples,
        value: if samples == 0 { 0.0 } else { worst },
        tolerance: ENVELOPE_TOLERANCE,
        status,
    }
}

fn grid() -> impl Iterator<Item = Complex64> {
    [0.1, 1.0, 5.0, 20.0]
        .into_iter()
        .flat_map(|r| [0.0, PI / 4.0, -PI / 4.0, 1.4, -1.4].into_iter().map(move |phi| Complex64::from_polar(r, phi)))
}

fn wronskian(alpha: f64) -> Row {
    let (a, b) = (Order::new(alpha).unwrap(), Order::new(alpha + 1.0).unwrap());
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for z in grid() {
        let w = bessel_i(a, z).unwrap() * bessel_k(b, z).unwrap() + bessel_i(b, z).unwrap() * bessel_k(a, z).unwrap();
        worst = worst.max((w * z - 1.0).norm());
        samples += 1;
    }
    Row { check: "wronskian", alpha, eta: None, samples, value: worst, tolerance: WRONSKIAN_TOLERANCE, status: Status::of(worst <= WRONSKIAN_TOLERANCE) }
}

/// `r^|α| K_α(r) → 2^{|α|−1} Γ(|α|)`; `α = 0` has a log singularity instead.
fn small_r(alpha: f64) -> Row {
    let a = alpha.abs();
    if a == 0.0 {
        return Row { check: "small-r limit", alpha, eta: None, samples: 0, value: 0.0, tolerance: SMALL_R_TOLERANCE, status: Status::Skipped };
    }
    let r: f64 = 1e-6;
    let v = r.powf(a) * bessel_k_real(Order::new(alpha).unwrap(), r).unwrap();
    let err = (v / (2f64.powf(a - 1.0) * gamma(a)) - 1.0).abs();
    Row { check: "small-r limit", alpha, eta: None, samples: 1, value: err, tolerance: SMALL_R_TOLERANCE, status: Status::of(err <= SMALL_R_TOLERANCE) }
}

/// Residual of `z² K'' + z K' − (z² + α²) K = 0`, `K''` by central differences of `K'`.
fn ode(alpha: f64) -> Row {
    let order = Order::new(alpha).unwrap();
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for z in grid() {
        let d = 1e-4 * z;
        let dk = |w: Complex64| bessel_k_derivative(order, w).unwrap();
        let k2 = (dk(z + d) - dk(z - d)) / (2.0 * d);
        let (kz, k1) = (k(alpha, z), dk(z));
        let terms = [z * z * k2, z * k1, -(z * z + alpha * alpha) * kz];
        let scale: f64 = terms.iter().map(|t| t.norm()).sum();
        let res: Complex64 = terms.iter().sum();
        worst = worst.max(res.norm() / scale);
        samples += 1;
    }
    Row { check: "ode residual", alpha, eta: None, samples, value: worst, tolerance: ODE_TOLERANCE, status: Status::of(worst <= ODE_TOLERANCE) }
}

pub fn run(config: &RunConfig, out: &OutDir) -> Result<Outcome, Failure> {
    let b = &config.bessel;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    for &alpha in &b.orders {
        for &eta in &b.etas {
            rows.push(envelope(alpha, eta, b.samples, &mut rng));
        }
    }
    for &alpha in &b.orders {
        rows.push(wronskian(alpha));
        rows.push(small_r(alpha));
        rows.push(ode(alpha));
    }
    let mut csv = Csv::new("check,alpha,eta,samples,value,tolerance,status");
    for r in &rows {
        csv.row([
            r.check.to_string(),
            r.alpha.to_string(),
            r.eta.map(|e| e.to_string()).unwrap_or_default(),
            r.samples.to_string(),
            r.value.to_string(),
            r.tolerance.to_string(),
            r.status.as_str().to_string(),
        ]);
    }
    out.write("identities.csv", &csv.finish())?;

    // Wall-clock numbers are not reproducible, so they stay out of the CSVs.
    let mut timing = Vec::new();
    for &alpha in &b.orders {
        for (regime, r) in REGIMES {
            let z = Complex64::from_polar(r, 0.7);
            let start = Instant::now();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..b.timing_repeats {
                acc += k(alpha, z * (1.0 + 1e-9 * i as f64));
            }
            let ns = start.elapsed().as_nanos() as f64 / b.timing_repeats.max(1) as f64;
            timing.push(json!({ "alpha": alpha, "regime": regime, "abs_z": r, "ns_per_eval": ns, "checksum": acc.norm() }));
        }
    }
    out.write_json("timing.json", &timing)?;

    let failed: Vec<Value> = rows
        .iter()
        .filter(|r| r.status == Status::Fail)
        .map(|r| json!({ "check": r.check, "alpha": r.alpha, "eta": r.eta, "value": r.value, "tolerance": r.tolerance }))
        .collect();
    let skipped = rows.iter().filter(|r| r.status == Status::Skipped).count();
    let result = json!({
        "checks": rows.len(),
        "failed": failed,
        "skipped": skipped,
        "timing_rows": timing.len(),
    });
    let passed = failed.is_empty();
    let summary = format!("{} checks, {} failed, {skipped} skipped", rows.len(), failed.len());
    Ok(Outcome { resolved: Value::Null, result, passed, summary })
}
