//! `verify-sector`: sector scan of `‖G_λ‖` and the defect with slope fits.

use serde_json::{json, Value};

use sectorial::resolvent::{sector_scan, ScanSetup, SectorScanReport, SlopeFit};

use crate::config::{build_problem, EpsilonRule, Problem, RunConfig};
use crate::failure::Failure;
use crate::output::{Csv, OutDir};
use crate::svg::{line_plot, Axes, Series};
use crate::Outcome;

/// `‖G_λ‖ ~ |λ|⁻¹`, checked two-sided.
pub const NORM_G_SLOPE: f64 = -1.0;
/// Defect `≤ C |λ|^{−1/2}`: an upper bound, so faster decay also passes.
pub const DEFECT_SLOPE: f64 = -0.5;

pub fn problem_summary(p: &Problem) -> Value {
    json!({
        "vertices": p.geom.num_vertices(),
        "dim": p.geom.dim(),
        "closed": p.geom.closed(),
        "epsilon": p.geom.epsilon(),
        "mesh_size": p.geom.mesh_size(),
        "diameter": p.geom.diameter(),
        "collar_vertices": p.geom.collar().len(),
        "lower_order_terms": p.perturbation.is_some(),
    })
}

struct FitCheck {
    arg: f64,
    quantity: &'static str,
    fit: SlopeFit,
    target: f64,
    pass: bool,
}

fn checks(report: &SectorScanReport, tol: f64) -> Vec<FitCheck> {
    let mut out = Vec::new();
    for f in &report.fits {
        let g = f.norm_g;
        out.push(FitCheck {
            arg: f.arg_lambda,
            quantity: "norm_G",
            fit: g,
            target: NORM_G_SLOPE,
            pass: (g.slope - NORM_G_SLOPE).abs() <= tol,
        });
        let d = f.defect;
        out.push(FitCheck {
            arg: f.arg_lambda,
            quantity: "defect_total",
            fit: d,
            target: DEFECT_SLOPE,
            pass: d.slope <= DEFECT_SLOPE + tol,
        });
    }
    out
}

fn plot(report: &SectorScanReport, defect: bool) -> String {
    let series: Vec<Series> = report
        .rays
        .iter()
        .map(|&arg| Series {
            label: format!("arg {arg:+.3}"),
            points: report
                .rows
                .iter()
                .filter(|r| r.arg_lambda == arg)
                .map(|r| (r.abs_lambda, if defect { r.defect_total } else { r.norm_g }))
                .collect(),
        })
        .collect();
    let (title, y) = if defect { ("defect vs |λ|", "defect") } else { ("‖G_λ‖ vs |λ|", "‖G_λ‖∞") };
    line_plot(title, "|λ|", y, &series, Axes { log_x: true, log_y: true })
}

pub fn run(config: &RunConfig, out: &OutDir) -> Result<Outcome, Failure> {
    let problem = build_problem(config, EpsilonRule::Verification)?;
    let setup = ScanSetup { geom: &problem.geom, op: &problem.op, probes: &problem.probes };
    let report = sector_scan(&setup, config.eta, &config.rays, &config.moduli).map_err(|e| {
        let cap = (1.0 / problem.geom.mesh_size()).powi(2);
        Failure::from_core(e).with_details(json!({ "resolution_cap": cap, "requested_moduli": config.moduli }))
    })?;
    out.write("scan.csv", &report.to_csv())?;

    let checks = checks(&report, config.slope_tolerance);
    let mut csv = Csv::new("arg_lambda,quantity,slope,half_width,points,target,pass");
    for c in &checks {
        csv.row([
            c.arg.to_string(),
            c.quantity.to_string(),
            c.fit.slope.to_string(),
            c.fit.half_width.to_string(),
            c.fit.points.to_string(),
            c.target.to_string(),
            c.pass.to_string(),
        ]);
    }
    out.write("fits.csv", &csv.finish())?;
    if config.plots {
        out.write("norm_g.svg", &plot(&report, false))?;
        out.write("defect.svg", &plot(&report, true))?;
    }

    let failed: Vec<Value> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| json!({ "arg_lambda": c.arg, "quantity": c.quantity, "slope": c.fit.slope, "target": c.target }))
        .collect();
    let result = json!({
        "scanned_operator": "principal part (Laplace-Beltrami of the coefficient metric)",
        "slope_tolerance": config.slope_tolerance,
        "defect_check": "upper bound: slope <= -0.5 + tolerance",
        "fits_passed": checks.len() - failed.len(),
        "fits_total": checks.len(),
        "unresolved_moduli": report.unresolved,
        "resolution_cap": report.resolution_cap,
        "failed_fits": failed,
    });
    if !report.unresolved.is_empty() {
        return Err(Failure::numerical(
            "kernel unresolved",
            format!(
                "kernel unresolved: moduli {:?} exceed the cap |λ| <= {:.1} (sqrt|λ| h <= 1)",
                report.unresolved, report.resolution_cap
            ),
        )
        .with_details(result));
    }
    let passed = failed.is_empty();
    let summary = format!("{}/{} slope fits within tolerance", checks.len() - failed.len(), checks.len());
    Ok(Outcome { resolved: problem_summary(&problem), result, passed, summary })
}
