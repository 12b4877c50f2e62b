//! Volume of `{(x, y) in R x V : f(x, y) >= 0}` for a single-step `y` slice.
//!
//! For each `x`, `y -> Θ(f(x, y))` switches at most once on `V`. The slice
//! measure is found by bisecting for the switch point, and the `x` integral
//! uses a tensor-product Gauss–Legendre rule over the block.

use serde::{Deserialize, Serialize};

use crate::equation::ImplicitFunction;
use crate::error::{Error, Result};
use crate::gauss::GaussLegendre;
use crate::geometry::{multi_indices, Interval, IntervalBox};

/// Sign indicator: `Increasing` when `y -> sign f(x, y)` steps from - to +.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Rho {
    Increasing,
    Decreasing,
}

impl Rho {
    pub fn value(self) -> f64 {
        match self {
            Rho::Increasing => 1.0,
            Rho::Decreasing => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Rho::Increasing => Rho::Decreasing,
            Rho::Decreasing => Rho::Increasing,
        }
    }

    /// `max V` for `+1`, `min V` for `-1`.
    pub fn select(self, range: Interval) -> f64 {
        match self {
            Rho::Increasing => range.hi(),
            Rho::Decreasing => range.lo(),
        }
    }
}

impl TryFrom<i8> for Rho {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Rho::Increasing),
            -1 => Ok(Rho::Decreasing),
            other => Err(Error::Config(format!("rho must be +1 or -1, got {other}"))),
        }
    }
}

impl From<Rho> for i8 {
    fn from(r: Rho) -> i8 {
        match r {
            Rho::Increasing => 1,
            Rho::Decreasing => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per `x` axis.
    pub gauss_order: usize,
    /// Bisection tolerance as a fraction of `|V|`.
    pub bisect_tol_rel: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            gauss_order: 32,
            bisect_tol_rel: 1e-12,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gauss_order < 2 {
            return Err(Error::Config(format!(
                "gauss_order must be at least 2, got {}",
                self.gauss_order
            )));
        }
        if !(self.bisect_tol_rel > 0.0) {
            return Err(Error::Config(format!(
                "bisection tolerance must be positive, got {}",
                self.bisect_tol_rel
            )));
        }
        Ok(())
    }
}

/// Everything needed for one `μ(R)` evaluation.
pub struct HeavisideVolumeSpec<'a> {
    pub f: &'a dyn ImplicitFunction,
    pub block: &'a IntervalBox,
    pub range: Interval,
    pub rho: Rho,
    pub gauss_order: usize,
    pub bisect_tol: f64,
}

impl HeavisideVolumeSpec<'_> {
    fn validate(&self) -> Result<()> {
        if self.gauss_order < 2 {
            return Err(Error::Config("gauss_order must be at least 2".into()));
        }
        if !(self.bisect_tol > 0.0) {
            return Err(Error::Config("bisect_tol must be positive".into()));
        }
        if self.block.dim() != self.f.x_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.f.x_dim(),
                got: self.block.dim(),
            });
        }
        Ok(())
    }
}

const MAX_BISECTIONS: usize = 200;

/// Location of the Θ switch in `y` on the slice at `x`.
///
/// Slices without a switch return the end of `V` that keeps
/// `hi - y*` (`rho = +1`) or `y* - lo` (`rho = -1`) equal to the Θ = 1 length.
pub fn step_point(
    f: &dyn ImplicitFunction,
    x: &[f64],
    range: Interval,
    rho: Rho,
    tol: f64,
) -> Result<f64> {
    let theta = |y: f64| f.value(x, y).map(|v| v >= 0.0);
    let (lo, hi) = (range.lo(), range.hi());
    let mid = 0.5 * (lo + hi);
    let (t_lo, t_mid, t_hi) = (theta(lo)?, theta(mid)?, theta(hi)?);

    let ordered = |a: bool, b: bool| match rho {
        Rho::Increasing => !a || b,
        Rho::Decreasing => a || !b,
    };
    if !(ordered(t_lo, t_mid) && ordered(t_mid, t_hi)) {
        return Err(Error::RhoViolated(format!(
            "sign of f along y at x = {x:?} is not a single {} step on {range}",
            match rho {
                Rho::Increasing => "- to +",
                Rho::Decreasing => "+ to -",
            }
        )));
    }

    if t_lo == t_hi {
        let all_on = t_lo;
        return Ok(match (rho, all_on) {
            (Rho::Increasing, true) | (Rho::Decreasing, false) => lo,
            (Rho::Increasing, false) | (Rho::Decreasing, true) => hi,
        });
    }

    // invariant: theta(a) == t_lo, theta(b) == t_hi
    let (mut a, mut b) = if t_mid == t_lo { (mid, hi) } else { (lo, mid) };
    for _ in 0..MAX_BISECTIONS {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if theta(m)? == t_lo {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// `μ(R) = ∫_{R x V} Θ(f(x, y)) dx dy`.
pub fn heaviside_volume(spec: &HeavisideVolumeSpec<'_>) -> Result<f64> {
    spec.validate()?;
    let rule = GaussLegendre::new(spec.gauss_order);
    let per_axis: Vec<(Vec<f64>, Vec<f64>)> = spec
        .block
        .axes()
        .iter()
        .map(|(_, iv)| rule.scaled(iv.lo(), iv.hi()))
        .collect();
    let dim = spec.block.dim();
    let (lo, hi) = (spec.range.lo(), spec.range.hi());

    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    for idx in multi_indices(dim, spec.gauss_order) {
        let mut weight = 1.0;
        for k in 0..dim {
            x[k] = per_axis[k].0[idx[k]];
            weight *= per_axis[k].1[idx[k]];
        }
        let y_star = step_point(spec.f, &x, spec.range, spec.rho, spec.bisect_tol)?;
        let slice = match spec.rho {
            Rho::Increasing => hi - y_star,
            Rho::Decreasing => y_star - lo,
        };
        total += weight * slice;
    }
    Ok(total.clamp(0.0, spec.block.volume() * spec.range.length()))
}
