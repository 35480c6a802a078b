use std::f64::consts::PI;

use num_complex::Complex64;
use sectorial::discrete_operator::{
    assemble_laplace_beltrami, metric_from_coefficients, CsrMatrix, EllipticCoefficients, OperatorMatrix,
};
use sectorial::geometry::{Geometry, GeometryOptions, Mesh, MetricField, Tensor};
use sectorial::kernel::{assemble_g, KernelParams};
use sectorial::oracle::dense_eigensolve;
use sectorial::presets;
use sectorial::resolvent::{
    correct_resolvent, measure_defect, probe_set, residual_norm, resolvent_full, DirectResolvent,
};
use sectorial::specfun::SectorPoint;
use sectorial::Error;

struct Setup {
    geom: Geometry,
    op: OperatorMatrix,
    probes: Vec<Vec<f64>>,
}

fn setup(mesh: Mesh, metric: MetricField, eps: f64) -> Setup {
    let geom = Geometry::new(mesh, metric, GeometryOptions { epsilon: Some(eps) }).unwrap();
    let op = assemble_laplace_beltrami(geom.mesh(), geom.metric()).unwrap();
    let probes = probe_set(&geom, &op, 20, 3);
    Setup { geom, op, probes }
}

fn interval(eps: f64) -> Setup {
    let mesh = presets::interval_mesh(401, PI).unwrap();
    let metric = MetricField::flat(&mesh);
    setup(mesh, metric, eps)
}

fn point(m: f64, arg: f64) -> SectorPoint {
    SectorPoint::from_polar(m, arg, 0.1).unwrap()
}

fn sines(s: &Setup) -> Vec<f64> {
    s.geom.mesh().vertices().iter().map(|p| p[0].sin()).collect()
}

fn sup_diff(u: &[Complex64], v: &[f64], scale: f64) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b * scale).norm()).fold(0.0, f64::max)
}

fn complexify(f: &[f64]) -> Vec<Complex64> {
    f.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

#[test]
fn defect_halves_per_fourfold_modulus() {
    let s = interval(PI / 8.0);
    let defect = |m: f64| {
        let g = assemble_g(&KernelParams::for_geometry(point(m, 0.0), &s.geom), &s.geom).unwrap();
        measure_defect(&s.op, &g, &s.geom, &s.probes).unwrap().total
    };
    let (d25, d100) = (defect(25.0), defect(100.0));
    assert!(d100 <= 0.5 * d25, "{d25} -> {d100}");
}

#[test]
fn zero_probe_has_zero_defect() {
    let s = interval(PI / 8.0);
    let g = assemble_g(&KernelParams::for_geometry(point(16.0, 1.0), &s.geom), &s.geom).unwrap();
    let zero = vec![vec![0.0; s.geom.num_vertices()]];
    assert_eq!(measure_defect(&s.op, &g, &s.geom, &zero).unwrap().total, 0.0);
}

#[test]
fn corrected_resolvent_of_sine_at_three() {
    // λ = 3 needs the widest injective collar (inradius π/2, focal bound π/4).
    let s = interval(0.78);
    let lambda = point(3.0, 0.0);
    let g = assemble_g(&KernelParams::for_geometry(lambda, &s.geom), &s.geom).unwrap();
    let r = correct_resolvent(&s.op, &g, &s.probes).unwrap();
    let f = sines(&s);
    let u = r.apply_real(&f);
    // Discrete eigenvalue of sin differs from −1 by O(h²).
    assert!(sup_diff(&u, &f, 0.25) < 1e-5, "{}", sup_diff(&u, &f, 0.25));
    assert!(residual_norm(&s.op, lambda.lambda(), &u, &complexify(&f)) < 1e-8);
    let direct = DirectResolvent::new(&s.op, lambda.lambda()).unwrap().solve(&complexify(&f));
    let scale = direct.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(u.iter().zip(&direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) <= 1e-6 * scale);
}

#[test]
fn corrected_resolvent_is_conjugate_symmetric_with_dirichlet_rows() {
    let s = interval(0.75);
    let f = &s.probes[4];
    let apply = |p: SectorPoint| {
        let g = assemble_g(&KernelParams::for_geometry(p, &s.geom), &s.geom).unwrap();
        correct_resolvent(&s.op, &g, &s.probes).unwrap().apply_real(f)
    };
    let p = point(64.0, 2.0);
    let (u, v) = (apply(p), apply(p.conj()));
    let asym = u.iter().zip(&v).map(|(a, b)| (a - b.conj()).norm()).fold(0.0, f64::max);
    assert!(asym < 1e-10, "{asym}");
    let last = s.geom.num_vertices() - 1;
    assert_eq!(u[0], Complex64::new(0.0, 0.0));
    assert_eq!(u[last], Complex64::new(0.0, 0.0));
}

#[test]
fn green_norm_decreases_along_rays() {
    let s = interval(PI / 8.0);
    for arg in [0.0, PI / 2.0, -3.0 * PI / 4.0] {
        let norms: Vec<f64> = [1.0, 4.0, 16.0, 64.0, 256.0]
            .iter()
            .map(|&m| assemble_g(&KernelParams::for_geometry(point(m, arg), &s.geom), &s.geom).unwrap().norm_inf())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{arg}: {norms:?}");
    }
}

#[test]
fn full_resolvent_without_perturbation_matches_corrected() {
    let s = interval(0.75);
    let lambda = point(64.0, 1.2);
    let g = assemble_g(&KernelParams::for_geometry(lambda, &s.geom), &s.geom).unwrap();
    let zero = CsrMatrix::from_triplets(s.geom.num_vertices(), Vec::new());
    let full = resolvent_full(&s.op, &zero, &g, &s.probes).unwrap();
    let base = correct_resolvent(&s.op, &g, &s.probes).unwrap();
    assert_eq!(full.norm_pr, 0.0);
    for f in &s.probes {
        let (u, v) = (full.apply_real(f).unwrap(), base.apply_real(f));
        assert!(u.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) < 1e-14);
    }
}

#[test]
fn stretched_interval_resolvent_of_sine() {
    // a = 4 on the flat interval: g̃ = 1/4 and Δ^g̃ sin = −4 sin, so R(λ) sin = sin/(λ + 4).
    let mesh = presets::interval_mesh(401, PI).unwrap();
    let flat = MetricField::flat(&mesh);
    let coeffs = EllipticCoefficients::constant(&mesh, Tensor::identity() * 4.0, [0.0, 0.0], 0.0).unwrap();
    let metric = metric_from_coefficients(&mesh, &flat, &coeffs).unwrap();
    assert!((metric.at_vertex(7)[(0, 0)] - 0.25).abs() < 1e-15);
    // Lengths halve in g̃, so the collar halves too.
    let s = setup(mesh, metric, 0.39);
    let zero = CsrMatrix::from_triplets(s.geom.num_vertices(), Vec::new());
    let f = sines(&s);
    let full = |m: f64| {
        let g = assemble_g(&KernelParams::for_geometry(point(m, 0.0), &s.geom), &s.geom).unwrap();
        resolvent_full(&s.op, &zero, &g, &s.probes)
    };
    // |λ| = 4 here is |λ| = 1 at unit speed, below where the series contracts.
    assert!(matches!(full(4.0), Err(Error::NonContraction { .. })));
    let u = full(16.0).unwrap().apply_real(&f).unwrap();
    assert!(sup_diff(&u, &f, 1.0 / 20.0) < 1e-5, "{}", sup_diff(&u, &f, 1.0 / 20.0));
}

#[test]
fn resolvent_bounded_by_spectral_distance_on_positive_axis() {
    let s = interval(PI / 8.0);
    let decomp = dense_eigensolve(&s.op).unwrap();
    let top = decomp.top(1)[0];
    let w = s.op.mass();
    let norm = |v: &[Complex64]| v.iter().zip(w).map(|(z, w)| z.norm_sqr() * w).sum::<f64>().sqrt();
    for m in [1.0, 4.0, 16.0] {
        let solver = DirectResolvent::new(&s.op, Complex64::new(m, 0.0)).unwrap();
        for f in &s.probes {
            let fc = complexify(f);
            let ratio = norm(&solver.solve(&fc)) / norm(&fc);
            assert!(ratio <= 1.0 / (m - top) * (1.0 + 1e-10), "{m}: {ratio}");
        }
    }
}
