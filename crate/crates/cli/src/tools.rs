//! `verify-design` and `oracle`.

use std::fmt::Write;
use std::path::Path;

use hyperscope::avset::{
    design_record, spherical_from_record, trig_design, verify_design, DesignRecord, DesignReport, TrigCurveSpec,
};
use hyperscope::geom::{sphere_moments, MomentVector};
use hyperscope::special::bessel_j0;
use hyperscope::spectral::{cluster_spectrum, renewal_density};
use num_complex::Complex64;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct DesignCheck {
    pub design: String,
    pub dim: usize,
    pub points: usize,
    pub order: usize,
    pub report: DesignReport,
    /// For circle designs: worst mismatch one order above the claimed one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_order_mismatch: Option<f64>,
}

/// Check a design given as `circle:N`, a bundled registry name, or a JSON
/// record file `{name, d, t, points}`.
pub fn verify(design: &str, order: Option<usize>, tol: f64) -> Result<DesignCheck, CliError> {
    if let Some(n) = design.strip_prefix("circle:") {
        let n: usize = n
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(format!("bad circle size in `{design}`")))?;
        let set = trig_design(&TrigCurveSpec::circle(), &[n], &[0.0]).map_err(|e| CliError::config(e.to_string()))?;
        let t = order.unwrap_or(n - 1);
        let exact = TrigCurveSpec::circle().moments(t + 1);
        let report = verify_design(&set.points, &exact, t, tol);
        let next = verify_design(&set.points, &exact, t + 1, tol).max_mismatch;
        return Ok(DesignCheck {
            design: design.to_string(),
            dim: 2,
            points: set.points.len(),
            order: t,
            report,
            next_order_mismatch: Some(next),
        });
    }
    let rec: DesignRecord = if Path::new(design).is_file() {
        let text = std::fs::read_to_string(design).map_err(|e| CliError::io(format!("{design}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{design}: {e}")))?
    } else {
        design_record(design).map_err(|e| CliError::config(e.to_string()))?
    };
    let set = spherical_from_record(&rec).map_err(|e| CliError::config(e.to_string()))?;
    let t = order.unwrap_or(rec.t);
    let exact = sphere_moments(rec.d, t).map_err(|e| CliError::config(e.to_string()))?;
    Ok(DesignCheck {
        design: rec.name,
        dim: rec.d,
        points: set.points.len(),
        order: t,
        report: verify_design(&set.points, &exact, t, tol),
        next_order_mismatch: None,
    })
}

fn grid(k_min: f64, k_max: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![k_min];
    }
    (0..count)
        .map(|i| k_min + (k_max - k_min) * i as f64 / (count - 1) as f64)
        .collect()
}

/// `k,g` table of the zeta(s) renewal spectral density.
pub fn renewal_table(s: f64, k_min: f64, k_max: f64, count: usize) -> Result<String, CliError> {
    let mut out = String::from("k,g\n");
    for k in grid(k_min, k_max, count) {
        let g = renewal_density(s, k).map_err(|e| CliError::analysis(e.to_string()))?;
        let _ = writeln!(out, "{k},{g}");
    }
    Ok(out)
}

/// Cluster shapes with closed-form isotropic spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleCluster {
    /// `n` equally spaced points on the unit circle, random phase.
    Circle(usize),
    IidGaussian { sigma: f64, count: usize },
}

impl std::str::FromStr for OracleCluster {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').ok_or("expected circle:N or gaussian:SIGMA[:COUNT]")?;
        match kind {
            "circle" => arg
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .map(OracleCluster::Circle)
                .ok_or_else(|| format!("bad circle size `{arg}`")),
            "gaussian" => {
                let mut it = arg.split(':');
                let sigma: f64 = it.next().and_then(|v| v.parse().ok()).ok_or("bad sigma")?;
                let count: usize = match it.next() {
                    Some(c) => c.parse().map_err(|_| "bad count")?,
                    None => 1,
                };
                Ok(OracleCluster::IidGaussian { sigma, count })
            }
            _ => Err(format!("unknown cluster `{kind}`")),
        }
    }
}

/// `k,s` table of a cluster process on a Poisson (`S = 1`) or shifted-lattice
/// progenitor; for the lattice the continuous part off the Bragg peaks.
pub fn cluster_table(
    cluster: OracleCluster,
    lattice_progenitor: bool,
    k_min: f64,
    k_max: f64,
    count: usize,
) -> Result<String, CliError> {
    let prog_s = move |_: &[f64]| if lattice_progenitor { 0.0 } else { 1.0 };
    let norm = |k: &[f64]| k.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s: Box<dyn Fn(&[f64]) -> f64> = match cluster {
        OracleCluster::Circle(n) => {
            let nf = n as f64;
            let second = move |q: f64| -> f64 {
                (0..n)
                    .map(|m| bessel_j0(2.0 * q * (std::f64::consts::PI * m as f64 / nf).sin()))
                    .sum::<f64>()
                    * nf
            };
            Box::new(cluster_spectrum(
                prog_s,
                move |k| Complex64::new(nf * bessel_j0(norm(k)), 0.0),
                move |k| {
                    let q = norm(k);
                    second(q) - (nf * bessel_j0(q)).powi(2)
                },
                1.0,
            ))
        }
        OracleCluster::IidGaussian { sigma, count } => {
            if !(sigma >= 0.0) || count == 0 {
                return Err(CliError::config("gaussian cluster needs sigma >= 0 and count >= 1"));
            }
            let c = count as f64;
            let damp = move |k: &[f64]| (-sigma * sigma * norm(k).powi(2)).exp();
            Box::new(cluster_spectrum(
                prog_s,
                move |k| Complex64::new(c * damp(k).sqrt(), 0.0),
                move |k| c * (1.0 - damp(k)),
                1.0,
            ))
        }
    };
    let mut out = String::from("k,s\n");
    for k in grid(k_min, k_max, count) {
        let _ = writeln!(out, "{k},{}", s(&[k, 0.0]));
    }
    Ok(out)
}

/// `alpha,value` table of the uniform law on the unit sphere in R^d.
pub fn sphere_table(d: usize, degree: usize) -> Result<String, CliError> {
    let mv: MomentVector = sphere_moments(d, degree).map_err(|e| CliError::config(e.to_string()))?;
    let mut out = String::from("alpha,value\n");
    for (alpha, v) in mv.basis.iter().zip(&mv.values) {
        let a: Vec<String> = alpha.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{v}", a.join(" "));
    }
    Ok(out)
}
