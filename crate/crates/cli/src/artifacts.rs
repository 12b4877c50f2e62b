//! Output files: coefficient JSON, CSV grids, verification reports.

use std::fmt::Write as _;
use std::path::Path;

use implicitpoly::geometry::multi_indices;
use implicitpoly::{ApproxResult, Error, Interval, IntervalBox, PolyTensor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Everything needed to re-evaluate `g_n` and to audit how it was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoeffsArtifact {
    pub level: u32,
    pub x: Vec<String>,
    pub y: String,
    #[serde(rename = "box")]
    pub domain: String,
    pub range: Interval,
    pub rho: i8,
    #[serde(flatten)]
    pub poly: PolyTensor,
    pub residual_norm: f64,
    pub condition_estimates: Vec<f64>,
    pub quadrature: Value,
}

impl CoeffsArtifact {
    pub fn new(result: &ApproxResult, y: &str) -> Self {
        Self {
            level: result.level(),
            x: result
                .domain
                .names()
                .into_iter()
                .map(String::from)
                .collect(),
            y: y.to_string(),
            domain: result.domain.to_string(),
            range: result.mean_tensor.range(),
            rho: result.rho.into(),
            poly: result.poly.clone(),
            residual_norm: result.diagnostics.residual_norm,
            condition_estimates: result.diagnostics.condition_estimates.clone(),
            quadrature: result.diagnostics.integrator.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let artifact: Self = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{}: corrupt coefficient file: {e}", path.display()))
        })?;
        let domain: IntervalBox = artifact.domain.parse()?;
        if domain.dim() != artifact.poly.dim() {
            return Err(Error::Config(format!(
                "{}: box has {} axes but coefficients have {}",
                path.display(),
                domain.dim(),
                artifact.poly.dim()
            ))
            .into());
        }
        Ok(artifact)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// Cell-centred sample points, `per_axis` per axis, last axis fastest.
pub fn grid_points(domain: &IntervalBox, per_axis: usize) -> Vec<Vec<f64>> {
    multi_indices(domain.dim(), per_axis)
        .map(|idx| {
            idx.iter()
                .enumerate()
                .map(|(k, &i)| {
                    let iv = domain.interval(k);
                    iv.lo() + (i as f64 + 0.5) * iv.length() / per_axis as f64
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= bound`; NaN never passes.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub rng: &'static str,
    pub mc_samples: u64,
    pub level: u32,
    pub checks: Vec<Check>,
    pub pass: bool,
}
