use std::f64::consts::PI;

use sectorial::discrete_operator::{
    assemble_divergence_form, assemble_laplace_beltrami, injectivity_check, metric_from_coefficients, CsrMatrix,
    EllipticCoefficients, OperatorMatrix,
};
use sectorial::geometry::{Mesh, MetricField, Tensor};
use sectorial::oracle::{bessel_j0, J0_FIRST_ZERO};
use sectorial::presets;

fn interior_sup(op: &OperatorMatrix, v: &[f64]) -> f64 {
    op.interior().iter().map(|&i| v[i].abs()).fold(0.0, f64::max)
}

#[test]
fn disk_bessel_mode_is_an_approximate_eigenvector() {
    let mesh = presets::disk_mesh(16, 1.0).unwrap();
    let op = assemble_laplace_beltrami(&mesh, &MetricField::flat(&mesh)).unwrap();
    let f: Vec<f64> = mesh.vertices().iter().map(|p| bessel_j0(J0_FIRST_ZERO * p[0].hypot(p[1]))).collect();
    let lf = op.apply(&f);
    let mu = J0_FIRST_ZERO * J0_FIRST_ZERO;
    // Measured in the mass norm: lumped stencils at the irregular second
    // ring are off by about 7% pointwise at every resolution.
    let norm = |v: &dyn Fn(usize) -> f64| op.interior().iter().map(|&i| v(i).powi(2) * op.mass()[i]).sum::<f64>().sqrt();
    let rel = norm(&|i| lf[i] + mu * f[i]) / (mu * norm(&|i| f[i]));
    assert!(rel <= 0.02, "{rel}");
}

#[test]
fn diagonal_coefficients_on_the_square() {
    // a = diag(4, 1) gives g̃ = diag(1/4, 1) and Δ^g̃ = 4∂ₓ² + ∂ᵧ².
    let mesh = presets::square_mesh(40).unwrap();
    let flat = MetricField::flat(&mesh);
    let coeffs = EllipticCoefficients::constant(&mesh, Tensor::new(4.0, 0.0, 0.0, 1.0), [0.0; 2], 0.0).unwrap();
    let tilde = metric_from_coefficients(&mesh, &flat, &coeffs).unwrap();
    assert!((tilde.at_vertex(17) - Tensor::new(0.25, 0.0, 0.0, 1.0)).abs().max() < 1e-15);
    let op = assemble_laplace_beltrami(&mesh, &tilde).unwrap();
    let f: Vec<f64> = mesh.vertices().iter().map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
    let lf = op.apply(&f);
    let err: Vec<f64> = lf.iter().zip(&f).map(|(a, b)| a + 5.0 * PI * PI * b).collect();
    assert!(interior_sup(&op, &err) / (5.0 * PI * PI) <= 0.01, "{}", interior_sup(&op, &err));
}

fn rows_agree(a: &OperatorMatrix, b: &OperatorMatrix, mesh: &Mesh) {
    for i in mesh.interior_vertices() {
        let scale = a.matrix().row(i).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        for j in 0..mesh.num_vertices() {
            let d = (a.matrix().get(i, j) - b.matrix().get(i, j)).abs();
            assert!(d <= 1e-10 * scale, "row {i} col {j}: {d}");
        }
    }
}

#[test]
fn divergence_form_reductions() {
    let mesh = presets::interval_mesh(81, 1.0).unwrap();
    let flat = MetricField::flat(&mesh);
    let lb = assemble_laplace_beltrami(&mesh, &flat).unwrap();
    let plain = assemble_divergence_form(&mesh, &flat, &EllipticCoefficients::identity(&mesh)).unwrap();
    rows_agree(&plain, &lb, &mesh);

    let four = EllipticCoefficients::constant(&mesh, Tensor::identity() * 4.0, [0.0; 2], 0.0).unwrap();
    let div = assemble_divergence_form(&mesh, &flat, &four).unwrap();
    let tilde = metric_from_coefficients(&mesh, &flat, &four).unwrap();
    rows_agree(&div, &assemble_laplace_beltrami(&mesh, &tilde).unwrap(), &mesh);
    // Eigenvalues scale by 4: Δ^g̃ = 4 d²/dx².
    let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[0]).collect();
    let lf = div.apply(&f);
    assert!(mesh.interior_vertices().iter().all(|&i| (lf[i] - 8.0).abs() < 1e-8));
}

#[test]
fn csr_is_linear_and_sums_rows() {
    let a = CsrMatrix::from_triplets(3, vec![(0, 0, 2.0), (0, 2, -1.0), (1, 1, 3.0), (2, 0, 0.5), (2, 0, 0.25)]);
    assert_eq!(a.apply(&[0.0; 3]), vec![0.0; 3]);
    assert_eq!(a.apply(&[1.0; 3]), vec![1.0, 3.0, 0.75]);
    let (f, g) = ([0.3, -1.2, 2.5], [1.1, 0.4, -0.7]);
    let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let (af, ag) = (a.apply(&f), a.apply(&g));
    for (k, v) in a.apply(&mix).iter().enumerate() {
        assert!((v - (2.0 * af[k] - 3.0 * ag[k])).abs() < 1e-12);
    }
}

#[test]
fn form_sign_on_the_disk() {
    let mesh = presets::disk_mesh(10, 1.0).unwrap();
    let op = assemble_laplace_beltrami(&mesh, &MetricField::flat(&mesh)).unwrap();
    let report = injectivity_check(&op, 50, 3);
    assert!(report.passed && report.max_rayleigh < 0.0, "{report:?}");
}
