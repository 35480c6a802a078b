//! `solve-ibp`: `u(t) = e^{tA} u₀` by contour quadrature.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use serde_json::{json, Value};

use sectorial::discrete_operator::OperatorMatrix;
use sectorial::oracle::dense_eigensolve;
use sectorial::resolvent::DirectResolvent;
use sectorial::semigroup::{solve_ibp, CorrectedProvider, DirectProvider, PerturbedProvider, ResolventProvider};
use sectorial::specfun::SectorPoint;
use sectorial::{Error, Result};

use crate::config::{build_problem, CoefficientConfig, EpsilonRule, InitialConfig, MetricConfig, Problem, ResolventChoice, RunConfig};
use crate::failure::Failure;
use crate::output::{Csv, OutDir};
use crate::svg::{heat_map, line_plot, Axes, Series};
use crate::verify::problem_summary;
use crate::Outcome;

/// Relative sup error against a closed form above which the run fails.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-4;

/// Tries the kernel-based resolvent and falls back to a banded direct solve
/// at nodes where the Neumann series does not contract.
struct AutoProvider<'a> {
    primary: &'a dyn ResolventProvider,
    full: &'a OperatorMatrix,
    fallbacks: AtomicUsize,
}

impl ResolventProvider for AutoProvider<'_> {
    fn dim(&self) -> usize {
        self.primary.dim()
    }

    fn boundary_mask(&self) -> &[bool] {
        self.primary.boundary_mask()
    }

    fn weights(&self) -> &[f64] {
        self.primary.weights()
    }

    fn resolve(&self, lambda: SectorPoint, f: &[Complex64]) -> Result<Vec<Complex64>> {
        match self.primary.resolve(lambda, f) {
            Err(Error::NonContraction { .. }) => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                Ok(DirectResolvent::new(self.full, lambda.lambda())?.solve(f))
            }
            other => other,
        }
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.primary.apply(u)
    }
}

/// `u₀` and, when one is known, the closed form `t ↦ e^{μt} u₀`.
struct Initial {
    u0: Vec<f64>,
    rate: Option<f64>,
}

fn shift_of(config: &RunConfig) -> Option<f64> {
    match config.coefficients {
        CoefficientConfig::Laplace => Some(0.0),
        CoefficientConfig::Shift { c } => Some(c),
        _ => None,
    }
}

fn initial_value(config: &RunConfig, p: &Problem) -> std::result::Result<Initial, Failure> {
    let mesh = p.geom.mesh();
    let n = mesh.num_vertices();
    let dim = mesh.dim();
    match config.initial {
        InitialConfig::Eigenmode { index } => {
            let decomp = dense_eigensolve(&p.op).map_err(Failure::from_core)?;
            if index >= decomp.values.len() {
                return Err(Failure::config(format!(
                    "initial.index: {index} out of range, the operator has {} interior modes",
                    decomp.values.len()
                )));
            }
            let v = decomp.top_vector(index);
            let mu = decomp.top(index + 1)[index];
            // Unit sup norm with a positive largest entry, so output is sign-stable.
            let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |b, (i, x)| if x.abs() > b.1 { (i, x.abs()) } else { b });
            let s = 1.0 / v[imax];
            Ok(Initial { u0: v.iter().map(|x| x * s).collect(), rate: shift_of(config).map(|c| mu + c) })
        }
        InitialConfig::Sine { k } => {
            if dim != 1 {
                return Err(Failure::config("initial.kind: sine needs a 1-D mesh"));
            }
            let xs: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
            let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let len = if mesh.closed() { mesh.period()[0] } else { xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x0 };
            let wave = if mesh.closed() { 2.0 } else { 1.0 } * std::f64::consts::PI * k as f64 / len;
            let u0 = xs.iter().map(|x| (wave * (x - x0)).sin()).collect();
            let flat = matches!(config.metric, MetricConfig::Flat);
            Ok(Initial { u0, rate: shift_of(config).filter(|_| flat).map(|c| c - wave * wave) })
        }
        InitialConfig::Bump { center, radius } => {
            let c = center.unwrap_or_else(|| {
                let s = mesh.vertices().iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
                [s[0] / n as f64, s[1] / n as f64]
            });
            let u0 = mesh
                .vertices()
                .iter()
                .map(|p| {
                    let d2 = (p[0] - c[0]).powi(2) + if dim == 2 { (p[1] - c[1]).powi(2) } else { 0.0 };
                    let s2 = d2 / (radius * radius);
                    if s2 < 1.0 {
                        (1.0 - 1.0 / (1.0 - s2)).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(Initial { u0, rate: None })
        }
        InitialConfig::File { ref path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("initial.path: cannot read {}: {e}", path.display())))?;
            let u0: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Failure::config(format!("initial.path: {e}")))?;
            if u0.len() != n {
                return Err(Failure::config(format!("initial.path: expected {n} values (one per vertex), found {}", u0.len())));
            }
            if u0.iter().any(|x| !x.is_finite()) {
                return Err(Failure::config("initial.path: values must be finite"));
            }
            Ok(Initial { u0, rate: None })
        }
    }
}

fn solution_csv(p: &Problem, u: &[f64]) -> String {
    let mesh = p.geom.mesh();
    let header = if mesh.dim() == 1 { "vertex_index,x,u_real" } else { "vertex_index,x,y,u_real" };
    let mut csv = Csv::new(header);
    for (i, (x, v)) in mesh.vertices().iter().zip(u).enumerate() {
        if mesh.dim() == 1 {
            csv.row([i.to_string(), x[0].to_string(), v.to_string()]);
        } else {
            csv.row([i.to_string(), x[0].to_string(), x[1].to_string(), v.to_string()]);
        }
    }
    csv.finish()
}

pub fn run(config: &RunConfig, out: &OutDir) -> std::result::Result<Outcome, Failure> {
    let problem = build_problem(config, EpsilonRule::Evolution)?;
    let initial = initial_value(config, &problem)?;
    let full = match &problem.perturbation {
        Some(p) => problem.op.with_perturbation(p),
        None => problem.op.clone(),
    };
    let kernel: Box<dyn ResolventProvider> = match &problem.perturbation {
        Some(p) => Box::new(PerturbedProvider { geom: &problem.geom, op_tilde: &problem.op, p, probes: &problem.probes }),
        None => Box::new(CorrectedProvider { geom: &problem.geom, op: &problem.op, probes: &problem.probes }),
    };
    let direct = DirectProvider { op: &full };
    let auto = AutoProvider { primary: kernel.as_ref(), full: &full, fallbacks: AtomicUsize::new(0) };
    let provider: &dyn ResolventProvider = match config.resolvent {
        ResolventChoice::Auto => &auto,
        ResolventChoice::Corrected => kernel.as_ref(),
        ResolventChoice::Direct => &direct,
    };

    let sol = solve_ibp(provider, &initial.u0, &config.times, &config.contour).map_err(Failure::from_core)?;

    let scale = initial.u0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut errors = Vec::new();
    let mut files = Vec::new();
    for (t, u) in sol.times.iter().zip(&sol.states) {
        let name = format!("solution_t{t}.csv");
        out.write(&name, &solution_csv(&problem, u))?;
        files.push(name);
        if let Some(rate) = initial.rate {
            let decay = (rate * t).exp();
            let err = u.iter().zip(&initial.u0).map(|(a, b)| (a - b * decay).abs()).fold(0.0, f64::max);
            errors.push(if scale > 0.0 { err / scale } else { err });
        }
    }
    if config.plots {
        write_plots(out, &problem, &initial.u0, &sol.times, &sol.states)?;
    }

    let max_error = errors.iter().copied().fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    let passed = max_error.is_none_or(|e| e <= CLOSED_FORM_TOLERANCE);
    let c = &config.contour;
    let contours: Vec<Value> = sol
        .times
        .iter()
        .map(|&t| match c.realize(t) {
            Ok(r) => json!({ "t": t, "mu": r.mu, "step": r.step }),
            Err(_) => json!({ "t": t }),
        })
        .collect();
    let result = json!({
        "times": sol.times,
        "files": files,
        "node_residuals": sol.residuals,
        "energies": sol.energies(problem.op.mass()),
        "contour": c,
        "contour_per_time": contours,
        "resolvent": config.resolvent,
        "direct_fallback_nodes": auto.fallbacks.load(Ordering::Relaxed),
        "closed_form_rate": initial.rate,
        "max_error_vs_closed_form": max_error,
        "errors_vs_closed_form": errors,
        "closed_form_tolerance": CLOSED_FORM_TOLERANCE,
    });
    let summary = match max_error {
        Some(e) => format!("{} states, max error vs closed form {e:.3e}", sol.times.len()),
        None => format!("{} states, no closed form for this initial value", sol.times.len()),
    };
    Ok(Outcome { resolved: problem_summary(&problem), result, passed, summary })
}

fn write_plots(out: &OutDir, p: &Problem, u0: &[f64], times: &[f64], states: &[Vec<f64>]) -> std::result::Result<(), Failure> {
    let mesh = p.geom.mesh();
    if mesh.dim() == 1 {
        let mut order: Vec<usize> = (0..mesh.num_vertices()).collect();
        order.sort_by(|&a, &b| mesh.vertex(a)[0].total_cmp(&mesh.vertex(b)[0]));
        let line = |label: String, u: &[f64]| Series { label, points: order.iter().map(|&i| (mesh.vertex(i)[0], u[i])).collect() };
        let mut series = vec![line("t = 0".into(), u0)];
        series.extend(times.iter().zip(states).map(|(t, u)| line(format!("t = {t}"), u)));
        out.write("solution.svg", &line_plot("u(t)", "x", "u", &series, Axes::default()))?;
    } else {
        let pts: Vec<[f64; 2]> = mesh.vertices().to_vec();
        for (t, u) in times.iter().zip(states) {
            out.write(&format!("solution_t{t}.svg"), &heat_map(&format!("u(t = {t})"), &pts, u))?;
        }
    }
    Ok(())
}
