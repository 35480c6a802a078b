//! `scan-kernel-integrals`: decay exponents of the model kernel integrals.

use serde_json::json;

use sectorial::kernel::kernel_integral_scan;

use crate::config::{build_problem, EpsilonRule, RunConfig};
use crate::failure::Failure;
use crate::output::{Csv, OutDir};
use crate::svg::{line_plot, Axes, Series};
use crate::verify::problem_summary;
use crate::Outcome;

/// Cases with a known exponent `(k − n)/2` for each dimension.
pub fn default_cases(dim: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[-0.5, 0.0]]
    } else {
        vec![[0.0, 1.0], [0.0, 0.0]]
    }
}

pub fn run(config: &RunConfig, out: &OutDir) -> Result<Outcome, Failure> {
    let ic = &config.integrals;
    let problem = build_problem(config, EpsilonRule::Verification)?;
    let cases = ic.cases.clone().unwrap_or_else(|| default_cases(problem.geom.dim()));
    let mut table = Csv::new("alpha,k,n,abs_lambda,direct,reflected");
    let mut fits = Csv::new("alpha,k,n,slope_direct,slope_reflected,expected_slope,pass");
    let mut series = Vec::new();
    let mut failed = Vec::new();
    for [alpha, k] in cases.iter().copied() {
        let scan = kernel_integral_scan(alpha, k, &problem.geom, ic.eta, &ic.moduli)
            .map_err(|e| Failure::from_core(e).with_details(json!({ "alpha": alpha, "k": k })))?;
        for r in &scan.rows {
            table.row([alpha, k, scan.n as f64, r.abs_lambda, r.direct, r.reflected]);
        }
        let pass = (scan.slope_direct - scan.expected_slope).abs() <= ic.tolerance;
        fits.row([
            alpha.to_string(),
            k.to_string(),
            scan.n.to_string(),
            scan.slope_direct.to_string(),
            scan.slope_reflected.to_string(),
            scan.expected_slope.to_string(),
            pass.to_string(),
        ]);
        if !pass {
            failed.push(json!({ "alpha": alpha, "k": k, "slope": scan.slope_direct, "expected": scan.expected_slope }));
        }
        series.push(Series {
            label: format!("α={alpha} k={k}"),
            points: scan.rows.iter().map(|r| (r.abs_lambda, r.direct)).collect(),
        });
    }
    out.write("integrals.csv", &table.finish())?;
    out.write("fits.csv", &fits.finish())?;
    if config.plots {
        out.write("integrals.svg", &line_plot("sup_x ∫ K_α(cρ)/ρ^k dy", "|λ|", "integral", &series, Axes { log_x: true, log_y: true }))?;
    }
    let passed = failed.is_empty();
    let summary = format!("{}/{} exponents within ±{}", cases.len() - failed.len(), cases.len(), ic.tolerance);
    let result = json!({ "cases": cases, "eta": ic.eta, "tolerance": ic.tolerance, "failed": failed });
    Ok(Outcome { resolved: problem_summary(&problem), result, passed, summary })
}
