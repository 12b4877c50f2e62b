//! Command-line flags and the equivalent JSON config files. Every field is
//! optional at parse time; a flag overrides the same key from `--config`.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use implicitpoly::{Error, Interval, IntervalBox};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(
    name = "implicitpoly",
    version,
    about = "Polynomial approximation of implicit functions"
)]
pub struct Cli {
    /// Worker threads for the block loops (default: all cores).
    #[arg(long, global = true, env = "IMPLICITPOLY_THREADS")]
    pub threads: Option<usize>,

    /// Suppress progress lines on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Approximate y = g(x) from a single equation f(x, y) = 0.
    Approx(ApproxArgs),
    /// Approximate (y1, y2) from two equations.
    System(SystemArgs),
    /// Cross-check quadrature and the fitted polynomial against brute-force oracles.
    Verify(VerifyArgs),
}

/// Comma-separated on the command line, a string or an array in JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|item| {
                item.trim()
                    .parse::<T>()
                    .map_err(|e| format!("`{}`: {e}", item.trim()))
            })
            .collect::<Result<_, _>>()
            .map(List)
    }
}

impl<T: Serialize> Serialize for List<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de, T> Deserialize<'de> for List<T>
where
    T: Deserialize<'de> + FromStr,
    T::Err: Display,
{
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            Text(String),
            Items(Vec<T>),
        }
        match Repr::<T>::deserialize(d)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Items(v) => Ok(List(v)),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ApproxArgs {
    /// Equation f(x, y), e.g. "x1^2 + x2^2 + y^2 - 1".
    #[arg(long)]
    pub f: Option<String>,
    /// Names of the x coordinates, in order.
    #[arg(long)]
    pub x: Option<List<String>>,
    /// Name of the unknown.
    #[arg(long)]
    pub y: Option<String>,
    /// Domain R, e.g. "x1=[-0.5,0.5);x2=[-0.5,0.5)" or "[-0.5,0.5);[-0.5,0.5)" with --x.
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub domain: Option<String>,
    /// Range V, e.g. "[0,1.5)".
    #[arg(long)]
    pub range: Option<String>,
    /// Center a.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<List<f64>>,
    /// Base value b with f(a, b) = 0.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Dyadic level.
    #[arg(long)]
    pub n: Option<u32>,
    /// Reference g(x) for the grid CSV.
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<String>,
    /// Add ref/abs_err columns from a per-point root-finding oracle.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub oracle: Option<bool>,
    /// Sample grid CSV output.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Coefficient JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub numerics: NumericArgs,
    /// JSON config with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericArgs {
    /// Gauss-Legendre nodes per x axis.
    #[arg(long)]
    pub gauss: Option<usize>,
    /// Bisection tolerance relative to |V|.
    #[arg(long)]
    pub bisect_tol: Option<f64>,
    /// Volume integrator: gauss-bisection or monte-carlo.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Samples per block when the integrator is monte-carlo.
    #[arg(long)]
    pub mc_samples: Option<u64>,
    /// Seed for Monte Carlo sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest accepted level.
    #[arg(long)]
    pub max_level: Option<u32>,
    /// Largest accepted 1-norm condition number of a moment matrix.
    #[arg(long)]
    pub condition_limit: Option<f64>,
    #[arg(skip)]
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemArgs {
    #[arg(long)]
    pub f1: Option<String>,
    #[arg(long)]
    pub f2: Option<String>,
    /// Names of the x coordinates, in order.
    #[arg(long)]
    pub x: Option<List<String>>,
    /// Names of the two unknowns.
    #[arg(long)]
    pub y: Option<List<String>>,
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub domain: Option<String>,
    #[arg(long)]
    pub range1: Option<String>,
    #[arg(long)]
    pub range2: Option<String>,
    /// Range for the second-stage unknown (defaults to its own range).
    #[arg(long)]
    pub range_stage2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<List<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<List<f64>>,
    /// First-stage level.
    #[arg(long)]
    pub n: Option<u32>,
    /// Second-stage level.
    #[arg(long)]
    pub m: Option<u32>,
    /// Equation and unknown (1-based) solved in the first stage, e.g. "2,2".
    #[arg(long)]
    pub pivot: Option<List<usize>>,
    /// Residual grid CSV output.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub numerics: NumericArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Approximation config (approx keys, plus optional `coeffs`, `mc_blocks`, `cesaro_tol`).
    #[arg(long)]
    pub config: PathBuf,
    /// Monte Carlo samples per checked block.
    #[arg(long)]
    pub mc_samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Extra keys a verify config may carry next to the approx keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    #[serde(flatten)]
    pub approx: ApproxArgs,
    /// Previously written coefficient JSON to check instead of refitting.
    pub coeffs: Option<PathBuf>,
    /// Number of blocks compared against Monte Carlo.
    pub mc_blocks: Option<usize>,
    /// Bound on the Cesàro-vs-oracle grid error.
    pub cesaro_tol: Option<f64>,
    pub report: Option<PathBuf>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

/// `flags` over `file`: any key set on the command line wins.
pub fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    file: Option<&Path>,
) -> Result<T, crate::CliError> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(to_value(flags)).expect("flags round-trip"));
    };
    let mut base: Value = read_json(path)?;
    let Value::Object(map) = &mut base else {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())).into());
    };
    let known = to_value(flags);
    if let Some(key) = map.keys().find(|k| known.get(k.as_str()).is_none()) {
        return Err(Error::Config(format!("{}: unknown key `{key}`", path.display())).into());
    }
    if let Value::Object(over) = known {
        for (k, v) in over {
            if !v.is_null() {
                map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

pub fn required<T: Clone>(v: &Option<T>, key: &str) -> Result<T, crate::CliError> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("missing required `{key}`")).into())
}

pub fn parse_interval(s: &str) -> Result<Interval, crate::CliError> {
    Ok(s.parse::<Interval>()?)
}

/// Accepts named axes, or bare intervals named by `names` in order.
pub fn parse_box(spec: &str, names: Option<&[String]>) -> Result<IntervalBox, crate::CliError> {
    let parts: Vec<&str> = spec.split(';').filter(|p| !p.trim().is_empty()).collect();
    if parts.iter().all(|p| p.contains('=')) {
        let domain: IntervalBox = spec.parse()?;
        if let Some(names) = names {
            if domain.names() != names.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::InvalidBox(format!(
                    "box axes {:?} disagree with x = {names:?}",
                    domain.names()
                ))
                .into());
            }
        }
        return Ok(domain);
    }
    let names = names.ok_or_else(|| Error::InvalidBox("unnamed box axes need --x".into()))?;
    if names.len() != parts.len() {
        return Err(Error::DimensionMismatch {
            expected: names.len(),
            got: parts.len(),
        }
        .into());
    }
    let axes = names
        .iter()
        .zip(parts)
        .map(|(n, p)| Ok((n.clone(), p.trim().parse::<Interval>()?)))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(IntervalBox::new(axes)?)
}
