//! Run configuration: one JSON document, unknown keys rejected, every
//! defaulted field echoed back in `meta.json`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sectorial::discrete_operator::{
    assemble_laplace_beltrami, metric_from_coefficients, perturbation_matrix, CsrMatrix, EllipticCoefficients,
    OperatorMatrix,
};
use sectorial::geometry::{Geometry, GeometryOptions, Mesh, MetricField, Tensor};
use sectorial::presets;
use sectorial::semigroup::ContourSpec;
use sectorial::Error;

use crate::failure::Failure;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    Interval {
        #[serde(default = "d_interval_vertices")]
        vertices: usize,
        #[serde(default = "d_pi")]
        length: f64,
    },
    Disk {
        #[serde(default = "d_rings")]
        rings: usize,
        #[serde(default = "d_one")]
        radius: f64,
    },
    Annulus {
        #[serde(default = "d_radial")]
        radial: usize,
        #[serde(default = "d_angular")]
        angular: usize,
        #[serde(default = "d_half")]
        inner: f64,
        #[serde(default = "d_one")]
        outer: f64,
    },
    Circle {
        #[serde(default = "d_circle_vertices")]
        vertices: usize,
        #[serde(default = "d_one")]
        radius: f64,
    },
    Torus {
        #[serde(default = "d_torus_cells")]
        cells: usize,
        #[serde(default = "d_two_pi")]
        length: f64,
    },
    MeshFile {
        path: PathBuf,
    },
}

fn d_interval_vertices() -> usize {
    401
}
fn d_pi() -> f64 {
    PI
}
fn d_two_pi() -> f64 {
    2.0 * PI
}
fn d_one() -> f64 {
    1.0
}
fn d_half() -> f64 {
    0.5
}
fn d_rings() -> usize {
    28
}
fn d_radial() -> usize {
    8
}
fn d_angular() -> usize {
    96
}
fn d_circle_vertices() -> usize {
    400
}
fn d_torus_cells() -> usize {
    32
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig::Interval { vertices: d_interval_vertices(), length: PI }
    }
}

/// Analytic metrics available by name.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticMetric {
    /// `(1 + |x|²/4) I`.
    Conformal,
    /// `diag(1 + x², 2 + sin y)`; `1 + x²` in one dimension.
    Diagonal,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Flat,
    Analytic {
        id: AnalyticMetric,
    },
    /// One row per vertex: `g11` (1-D) or `g11 g12 g21 g22`.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientConfig {
    /// `a = I`, no lower-order terms.
    #[default]
    Laplace,
    /// Bounded drift and absorption, `b = ½(cos x, sin y)`, `c = −1 − ½ sin(x + y)`.
    Bounded,
    /// `a = I`, `b = 0`, constant `c`.
    Shift { c: f64 },
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResolventChoice {
    /// Neumann-corrected kernel, banded direct solve where it does not contract.
    #[default]
    Auto,
    Corrected,
    Direct,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `k`-th eigenvector (counted from the top of the spectrum) of the
    /// discrete operator, scaled to unit sup norm.
    Eigenmode {
        #[serde(default)]
        index: usize,
    },
    /// `sin(kπ(x − x₀)/L)` on a 1-D mesh spanning `[x₀, x₀ + L]`.
    Sine {
        #[serde(default = "d_k")]
        k: u32,
    },
    /// `exp(1 − 1/(1 − s²))` for `s = |x − center|/radius < 1`.
    Bump {
        #[serde(default)]
        center: Option<[f64; 2]>,
        #[serde(default = "d_half")]
        radius: f64,
    },
    /// One value per vertex, whitespace separated.
    File { path: PathBuf },
}

fn d_k() -> u32 {
    1
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Eigenmode { index: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BesselConfig {
    /// Envelope samples per `(α, η)` pair; `0` skips the check.
    pub samples: usize,
    pub orders: Vec<f64>,
    pub etas: Vec<f64>,
    /// Evaluations per timing cell.
    pub timing_repeats: usize,
}

impl Default for BesselConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            orders: vec![-0.5, 0.0, 0.5, 1.0, 2.0],
            etas: vec![PI / 12.0, PI / 6.0, PI / 4.0, PI / 3.0],
            timing_repeats: 2000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IntegralConfig {
    /// `(α, k)` pairs; `None` picks the cases for the mesh dimension.
    pub cases: Option<Vec<[f64; 2]>>,
    pub eta: f64,
    pub moduli: Vec<f64>,
    pub tolerance: f64,
}

impl Default for IntegralConfig {
    fn default() -> Self {
        Self { cases: None, eta: PI / 4.0, moduli: vec![16.0, 64.0, 256.0, 1024.0], tolerance: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub metric: MetricConfig,
    pub coefficients: CoefficientConfig,
    /// Collar half-width; `None` picks a per-command default.
    pub epsilon: Option<f64>,
    pub eta: f64,
    pub rays: Vec<f64>,
    pub moduli: Vec<f64>,
    pub probes: usize,
    pub slope_tolerance: f64,
    pub contour: ContourSpec,
    pub resolvent: ResolventChoice,
    pub initial: InitialConfig,
    pub times: Vec<f64>,
    pub plots: bool,
    pub bessel: BesselConfig,
    pub integrals: IntegralConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            metric: MetricConfig::default(),
            coefficients: CoefficientConfig::default(),
            epsilon: None,
            eta: 0.1,
            rays: vec![0.0, PI / 2.0, -PI / 2.0, 3.0 * PI / 4.0, -3.0 * PI / 4.0],
            moduli: vec![1.0, 4.0, 16.0, 64.0, 256.0],
            probes: 20,
            slope_tolerance: 0.15,
            contour: ContourSpec::default(),
            resolvent: ResolventChoice::default(),
            initial: InitialConfig::default(),
            times: vec![0.1, 0.5],
            plots: true,
            bessel: BesselConfig::default(),
            integrals: IntegralConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 7,
        }
    }
}

/// Parsed configuration plus the dotted paths of every field the user left
/// to its default.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub defaulted: Vec<String>,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, Failure> {
    let raw: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let config: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| Failure::config(e.to_string()))?;
    let resolved = serde_json::to_value(&config).expect("config serializes");
    let mut defaulted = Vec::new();
    collect_defaulted(&raw, &resolved, "", &mut defaulted);
    Ok(LoadedConfig { config, defaulted })
}

fn collect_defaulted(raw: &Value, resolved: &Value, prefix: &str, out: &mut Vec<String>) {
    let Value::Object(full) = resolved else { return };
    for (key, value) in full {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match raw.get(key) {
            None => out.push(path),
            Some(r) => collect_defaulted(r, value, &path, out),
        }
    }
}

impl RunConfig {
    /// Checks that do not need the mesh.
    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |field: &str, why: &str| Err(Failure::config(format!("{field}: {why}")));
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return bad("epsilon", "must be positive");
            }
        }
        if !(self.eta > 0.0 && self.eta < PI / 2.0) {
            return bad("eta", "must lie in (0, pi/2)");
        }
        if self.rays.is_empty() || self.rays.iter().any(|a| !(a.abs() < PI - self.eta)) {
            return bad("rays", "need at least one ray, each with |arg| < pi - eta");
        }
        if self.moduli.len() < 2 || self.moduli.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return bad("moduli", "need at least two positive moduli");
        }
        if self.moduli.windows(2).any(|w| w[1] <= w[0]) {
            return bad("moduli", "must be strictly increasing");
        }
        if self.probes == 0 {
            return bad("probes", "must be positive");
        }
        if !(self.slope_tolerance > 0.0) {
            return bad("slope_tolerance", "must be positive");
        }
        self.contour.validate().map_err(|e| Failure::config(format!("contour: {e}")))?;
        if self.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("times", "must be positive and strictly increasing");
        }
        if let InitialConfig::Bump { radius, .. } = self.initial {
            if !(radius > 0.0) {
                return bad("initial.radius", "must be positive");
            }
        }
        let b = &self.bessel;
        if b.orders.iter().any(|a| !(a.abs() <= sectorial::specfun::MAX_ORDER - 1.0)) {
            return bad("bessel.orders", "need |alpha| <= 7 (alpha + 1 enters the Wronskian)");
        }
        if b.etas.iter().any(|e| !(*e > 0.0 && *e < PI / 2.0)) {
            return bad("bessel.etas", "must lie in (0, pi/2)");
        }
        let ic = &self.integrals;
        if !(ic.eta > 0.0 && ic.eta < PI / 2.0) {
            return bad("integrals.eta", "must lie in (0, pi/2)");
        }
        if ic.moduli.len() < 2 || ic.moduli.iter().any(|&m| !(m >= 1.0)) {
            return bad("integrals.moduli", "need at least two moduli >= 1");
        }
        Ok(())
    }
}

/// Everything assembled from a configuration.
pub struct Problem {
    pub geom: Geometry,
    /// `Δ^g̃` with Dirichlet rows.
    pub op: OperatorMatrix,
    /// Lower-order part, when the coefficients carry one.
    pub perturbation: Option<CsrMatrix>,
    pub probes: Vec<Vec<f64>>,
}

/// How the collar width is picked when the configuration leaves it open.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsilonRule {
    /// A quarter of the inradius (half the diameter when closed).
    Verification,
    /// The widest collar that stays injective, starting from `0.475` of the
    /// inradius; the Neumann series contracts from smaller `|λ|` this way.
    Evolution,
}

const EVOLUTION_FRACTION: f64 = 0.475;
const PLACEHOLDER_EPSILON: f64 = 1e-12;

pub fn build_mesh(geometry: &GeometryConfig) -> Result<Mesh, Failure> {
    let mesh = match *geometry {
        GeometryConfig::Interval { vertices, length } => presets::interval_mesh(vertices, length),
        GeometryConfig::Disk { rings, radius } => presets::disk_mesh(rings, radius),
        GeometryConfig::Annulus { radial, angular, inner, outer } => {
            presets::annulus_mesh(radial, angular, inner, outer)
        }
        GeometryConfig::Circle { vertices, radius } => presets::circle_mesh(vertices, radius),
        GeometryConfig::Torus { cells, length } => presets::torus_mesh(cells, length),
        GeometryConfig::MeshFile { ref path } => Mesh::load(path),
    };
    mesh.map_err(|e| Failure::config(format!("geometry: {e}")))
}

fn analytic_tensor(id: AnalyticMetric, dim: usize, p: &[f64; 2]) -> Tensor {
    let (x, y) = (p[0], if dim == 2 { p[1] } else { 0.0 });
    match id {
        AnalyticMetric::Conformal => Tensor::identity() * (1.0 + 0.25 * (x * x + y * y)),
        AnalyticMetric::Diagonal => Tensor::new(1.0 + x * x, 0.0, 0.0, 2.0 + y.sin()),
    }
}

fn parse_rows(path: &Path, field: &str, expected_rows: usize, width: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{field}: cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::config(format!("{field}: line {}: {e}", n + 1)))?;
        if row.len() != width {
            return Err(Failure::config(format!("{field}: line {}: expected {width} values, found {}", n + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.len() != expected_rows {
        return Err(Failure::config(format!("{field}: expected {expected_rows} rows, found {}", rows.len())));
    }
    Ok(rows)
}

pub fn build_metric(config: &MetricConfig, mesh: &Mesh) -> Result<MetricField, Failure> {
    let dim = mesh.dim();
    let metric = match *config {
        MetricConfig::Flat => Ok(MetricField::flat(mesh)),
        MetricConfig::Analytic { id } => MetricField::from_fn(mesh, move |p| analytic_tensor(id, dim, p)),
        MetricConfig::File { ref path } => {
            let width = if dim == 1 { 1 } else { 4 };
            let rows = parse_rows(path, "metric.path", mesh.num_vertices(), width)?;
            let values = rows
                .iter()
                .map(|r| if dim == 1 { Tensor::new(r[0], 0.0, 0.0, 1.0) } else { Tensor::new(r[0], r[1], r[2], r[3]) })
                .collect();
            MetricField::from_values(mesh, values)
        }
    };
    metric.map_err(|e| Failure::config(format!("metric: {e}")))
}

pub fn build_coefficients(config: &CoefficientConfig, mesh: &Mesh) -> Result<Option<EllipticCoefficients>, Failure> {
    let coeffs = match *config {
        CoefficientConfig::Laplace => return Ok(None),
        CoefficientConfig::Bounded => presets::bounded_coefficients(mesh),
        CoefficientConfig::Shift { c } => EllipticCoefficients::constant(mesh, Tensor::identity(), [0.0, 0.0], c),
        CoefficientConfig::File { ref path } => EllipticCoefficients::load(path, mesh),
    };
    coeffs.map(Some).map_err(|e| Failure::config(format!("coefficients: {e}")))
}

fn widest_collar(geom: Geometry, rule: EpsilonRule, fixed: Option<f64>) -> Result<Geometry, Failure> {
    if let Some(eps) = fixed {
        return geom.with_epsilon(eps).map_err(|e| Failure::config(format!("epsilon: {e}")));
    }
    let start = match rule {
        EpsilonRule::Verification => geom.verification_epsilon(),
        EpsilonRule::Evolution if geom.closed() => geom.verification_epsilon(),
        EpsilonRule::Evolution => EVOLUTION_FRACTION * geom.inradius(),
    };
    let mut eps = start;
    let mut last = None;
    for _ in 0..6 {
        match geom.clone().with_epsilon(eps) {
            Ok(g) => return Ok(g),
            Err(e @ Error::CollarNotInjective { .. }) => {
                last = Some(e);
                eps *= 0.5;
            }
            Err(e) => return Err(Failure::config(format!("epsilon: {e}"))),
        }
    }
    Err(Failure::config(format!("epsilon: no injective collar below {start}: {}", last.expect("loop ran"))))
}

pub fn build_problem(config: &RunConfig, rule: EpsilonRule) -> Result<Problem, Failure> {
    let mesh = build_mesh(&config.geometry)?;
    let metric = build_metric(&config.metric, &mesh)?;
    let coeffs = build_coefficients(&config.coefficients, &mesh)?;
    let metric = match &coeffs {
        Some(c) => metric_from_coefficients(&mesh, &metric, c).map_err(|e| Failure::config(format!("coefficients: {e}")))?,
        None => metric,
    };
    // Placeholder collar; the real width needs the inradius of this geometry.
    let placeholder = GeometryOptions { epsilon: Some(PLACEHOLDER_EPSILON) };
    let geom = Geometry::new(mesh, metric, placeholder).map_err(Failure::from_core)?;
    let geom = widest_collar(geom, rule, config.epsilon)?;
    let op = assemble_laplace_beltrami(geom.mesh(), geom.metric()).map_err(Failure::from_core)?;
    let perturbation = coeffs
        .as_ref()
        .filter(|c| c.has_lower_order())
        .map(|c| perturbation_matrix(geom.mesh(), geom.metric(), c));
    let probes = sectorial::resolvent::probe_set(&geom, &op, config.probes, config.seed);
    Ok(Problem { geom, op, perturbation, probes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"etta": 0.1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"geometry": {"preset": "disk", "ring": 4}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"contour": {"node": 4}}"#).is_err());
    }

    #[test]
    fn defaulted_fields_are_listed() {
        let raw: Value = serde_json::from_str(r#"{"eta": 0.2, "geometry": {"preset": "disk"}}"#).unwrap();
        let c: RunConfig = serde_json::from_value(raw.clone()).unwrap();
        let mut out = Vec::new();
        collect_defaulted(&raw, &serde_json::to_value(&c).unwrap(), "", &mut out);
        assert!(out.contains(&"geometry.rings".to_string()));
        assert!(out.contains(&"seed".to_string()));
        assert!(!out.contains(&"eta".to_string()));
        assert!(!out.contains(&"geometry.preset".to_string()));
    }

    #[test]
    fn validation_names_the_field() {
        let c = RunConfig { eta: 2.0, ..RunConfig::default() };
        assert!(c.validate().unwrap_err().message.starts_with("eta"));
        let c = RunConfig { times: vec![0.5, 0.1], ..RunConfig::default() };
        assert!(c.validate().unwrap_err().message.starts_with("times"));
    }
}
