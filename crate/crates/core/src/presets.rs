//! Standard test geometries.

use std::f64::consts::PI;

use crate::discrete_operator::EllipticCoefficients;
use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point, Tensor};

/// Uniform mesh of `[0, length]` with `n_vertices` vertices.
pub fn interval_mesh(n_vertices: usize, length: f64) -> Result<Mesh> {
    if n_vertices < 4 || !(length > 0.0) {
        return Err(Error::Precondition(format!("interval needs >= 4 vertices and positive length")));
    }
    let h = length / (n_vertices - 1) as f64;
    let vertices = (0..n_vertices).map(|i| [i as f64 * h, 0.0]).collect();
    let cells = (0..n_vertices - 1).map(|i| vec![i, i + 1]).collect();
    Mesh::new(1, vertices, cells, &[0, n_vertices - 1], false)
}

/// Closed circle of the given radius, parametrized by arc length.
pub fn circle_mesh(n_vertices: usize, radius: f64) -> Result<Mesh> {
    if n_vertices < 4 || !(radius > 0.0) {
        return Err(Error::Precondition("circle needs >= 4 vertices and positive radius".into()));
    }
    let period = 2.0 * PI * radius;
    let h = period / n_vertices as f64;
    let vertices = (0..n_vertices).map(|i| [i as f64 * h, 0.0]).collect();
    let cells = (0..n_vertices).map(|i| vec![i, (i + 1) % n_vertices]).collect();
    Mesh::periodic(1, vertices, cells, &[], true, [period, 0.0])
}

/// Unit square `[0,1]²` with a `k × k` grid, each square split in two.
pub fn square_mesh(k: usize) -> Result<Mesh> {
    if k < 2 {
        return Err(Error::Precondition("square needs k >= 2".into()));
    }
    let idx = |i: usize, j: usize| j * (k + 1) + i;
    let mut vertices = Vec::with_capacity((k + 1) * (k + 1));
    for j in 0..=k {
        for i in 0..=k {
            vertices.push([i as f64 / k as f64, j as f64 / k as f64]);
        }
    }
    let mut cells = Vec::with_capacity(2 * k * k);
    for j in 0..k {
        for i in 0..k {
            cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let boundary: Vec<usize> =
        (0..vertices.len()).filter(|&v| v % (k + 1) == 0 || v % (k + 1) == k || v <= k || v >= k * (k + 1)).collect();
    Mesh::new(2, vertices, cells, &boundary, false)
}

/// Disk of radius `radius` from `rings` concentric rings; ring `r` carries
/// `6r` equally spaced vertices, so the mesh has `1 + 3 rings (rings + 1)`
/// vertices and near-uniform triangles.
pub fn disk_mesh(rings: usize, radius: f64) -> Result<Mesh> {
    if rings < 2 || !(radius > 0.0) {
        return Err(Error::Precondition("disk needs >= 2 rings and positive radius".into()));
    }
    let mut vertices: Vec<Point> = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for r in 1..=rings {
        ring_start.push(vertices.len());
        let m = 6 * r;
        let rad = radius * r as f64 / rings as f64;
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            vertices.push([rad * t.cos(), rad * t.sin()]);
        }
    }
    let mut cells = Vec::new();
    for j in 0..6 {
        cells.push(vec![0, 1 + j, 1 + (j + 1) % 6]);
    }
    for r in 2..=rings {
        stitch_rings(&mut cells, ring_start[r - 1], 6 * (r - 1), ring_start[r], 6 * r);
    }
    let boundary: Vec<usize> = (ring_start[rings]..vertices.len()).collect();
    Mesh::new(2, vertices, cells, &boundary, false)
}

/// Triangulates the band between two rings of equally spaced vertices that
/// both start at angle 0, advancing on whichever ring lags in angle.
fn stitch_rings(cells: &mut Vec<Vec<usize>>, a0: usize, na: usize, b0: usize, nb: usize) {
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let ta = (i + 1) as f64 / na as f64;
        let tb = (j + 1) as f64 / nb as f64;
        let (ai, an) = (a0 + i % na, a0 + (i + 1) % na);
        let (bj, bn) = (b0 + j % nb, b0 + (j + 1) % nb);
        if j < nb && (i >= na || tb <= ta) {
            cells.push(vec![ai, bj, bn]);
            j += 1;
        } else {
            cells.push(vec![ai, bj, an]);
            i += 1;
        }
    }
}

/// Annulus `r_in ≤ r ≤ r_out` with `n_radial` radial layers and `n_angular`
/// vertices per ring.
pub fn annulus_mesh(n_radial: usize, n_angular: usize, r_in: f64, r_out: f64) -> Result<Mesh> {
    if n_radial < 2 || n_angular < 6 || !(0.0 < r_in && r_in < r_out) {
        return Err(Error::Precondition("annulus needs n_radial >= 2, n_angular >= 6, 0 < r_in < r_out".into()));
    }
    let mut vertices = Vec::with_capacity((n_radial + 1) * n_angular);
    for r in 0..=n_radial {
        let rad = r_in + (r_out - r_in) * r as f64 / n_radial as f64;
        for j in 0..n_angular {
            // Stagger alternate rings by half a step for better triangles.
            let t = 2.0 * PI * (j as f64 + 0.5 * (r % 2) as f64) / n_angular as f64;
            vertices.push([rad * t.cos(), rad * t.sin()]);
        }
    }
    let idx = |r: usize, j: usize| r * n_angular + j % n_angular;
    let mut cells = Vec::with_capacity(2 * n_radial * n_angular);
    for r in 0..n_radial {
        for j in 0..n_angular {
            if r % 2 == 0 {
                cells.push(vec![idx(r, j), idx(r, j + 1), idx(r + 1, j)]);
                cells.push(vec![idx(r, j + 1), idx(r + 1, j + 1), idx(r + 1, j)]);
            } else {
                cells.push(vec![idx(r, j), idx(r + 1, j + 1), idx(r + 1, j)]);
                cells.push(vec![idx(r, j), idx(r, j + 1), idx(r + 1, j + 1)]);
            }
        }
    }
    let boundary: Vec<usize> = (0..n_angular).chain(n_radial * n_angular..(n_radial + 1) * n_angular).collect();
    Mesh::new(2, vertices, cells, &boundary, false)
}

/// Flat torus `[0, length)²` with an `k × k` periodic grid.
pub fn torus_mesh(k: usize, length: f64) -> Result<Mesh> {
    if k < 3 || !(length > 0.0) {
        return Err(Error::Precondition("torus needs k >= 3 and positive length".into()));
    }
    let h = length / k as f64;
    let idx = |i: usize, j: usize| (j % k) * k + i % k;
    let mut vertices = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut cells = Vec::with_capacity(2 * k * k);
    for j in 0..k {
        for i in 0..k {
            cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push(vec![idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Mesh::periodic(2, vertices, cells, &[], true, [length, length])
}

/// Identity principal part with bounded smooth drift and absorption,
/// `b = ½(cos x, sin y)`, `c = −1 − ½ sin(x + y)`.
pub fn bounded_coefficients(mesh: &Mesh) -> Result<EllipticCoefficients> {
    EllipticCoefficients::from_fn(
        mesh,
        |_| Tensor::identity(),
        |p| [0.5 * p[0].cos(), 0.5 * p[1].sin()],
        |p| -1.0 - 0.5 * (p[0] + p[1]).sin(),
    )
}
