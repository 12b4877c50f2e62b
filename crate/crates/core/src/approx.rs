//! Single-equation pipeline: detect ρ, build moment matrices and the mean
//! tensor, solve for the coefficient tensor.

use std::sync::Arc;

use serde_json::Value;

use crate::equation::{BoundEquation, ImplicitFunction};
use crate::error::{Error, Result, StageExt};
use crate::expr::Expression;
use crate::geometry::{multi_indices, DyadicGrid, Interval, IntervalBox};
use crate::integrator::VolumeIntegrator;
use crate::moments::{
    mean_tensor, moment_matrix, solve_coefficients, MeanTensor, PolyTensor,
    DEFAULT_CONDITION_LIMIT, DEFAULT_MAX_LEVEL,
};
use crate::quad::Rho;

/// Relative tolerance for accepting `(a, b)` on the zero set.
pub const TOL_ROOT: f64 = 1e-9;

/// Samples along `V` at the base point when counting sign changes.
const RANGE_PROBES: usize = 9;
/// Samples per axis of `U` for the ρ consistency check.
const DOMAIN_PROBES: usize = 4;

#[derive(Clone)]
pub struct ImplicitProblem {
    equation: Arc<dyn ImplicitFunction>,
    y_name: String,
    domain: IntervalBox,
    range: Interval,
    center: Vec<f64>,
    base: f64,
    level: u32,
    check_base_point: bool,
}

impl std::fmt::Debug for ImplicitProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImplicitProblem")
            .field("y_name", &self.y_name)
            .field("domain", &self.domain.to_string())
            .field("range", &self.range)
            .field("center", &self.center)
            .field("base", &self.base)
            .field("level", &self.level)
            .finish_non_exhaustive()
    }
}

impl ImplicitProblem {
    /// Problem for `f(x, y) = 0` with `x` named by the axes of `domain`.
    pub fn new(
        f: &Expression,
        y_name: &str,
        domain: IntervalBox,
        range: Interval,
        center: Vec<f64>,
        base: f64,
        level: u32,
    ) -> Result<Self> {
        let equation = BoundEquation::new(f, &domain.names(), y_name)?;
        Self::from_function(
            Arc::new(equation),
            y_name,
            domain,
            range,
            center,
            base,
            level,
        )
    }

    pub fn from_function(
        equation: Arc<dyn ImplicitFunction>,
        y_name: &str,
        domain: IntervalBox,
        range: Interval,
        center: Vec<f64>,
        base: f64,
        level: u32,
    ) -> Result<Self> {
        let problem = Self {
            equation,
            y_name: y_name.to_string(),
            domain,
            range,
            center,
            base,
            level,
            check_base_point: true,
        };
        problem.check_shape()?;
        Ok(problem)
    }

    /// Skips the `|f(a, b)| ≤ tol` check; used when the equation is itself an
    /// approximation and only vanishes at `(a, b)` approximately.
    pub fn without_base_point_check(mut self) -> Self {
        self.check_base_point = false;
        self
    }

    pub fn equation(&self) -> &dyn ImplicitFunction {
        self.equation.as_ref()
    }

    pub fn y_name(&self) -> &str {
        &self.y_name
    }

    pub fn domain(&self) -> &IntervalBox {
        &self.domain
    }

    pub fn range(&self) -> Interval {
        self.range
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    fn check_shape(&self) -> Result<()> {
        let d = self.domain.dim();
        if self.equation.x_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.equation.x_dim(),
            });
        }
        if self.center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.center.len(),
            });
        }
        if !self.domain.contains(&self.center) {
            return Err(Error::OutsideDomain(format!(
                "center {:?} not in {}",
                self.center, self.domain
            )));
        }
        if !self.range.contains(self.base) {
            return Err(Error::OutsideDomain(format!(
                "b = {} not in {}",
                self.base, self.range
            )));
        }
        Ok(())
    }

    /// Checks the base point lies on the zero set.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if !self.check_base_point {
            return Ok(());
        }
        let f = |y| self.equation.value(&self.center, y);
        let value = f(self.base)?;
        let scale = f(self.range.lo())?.abs().max(f(self.range.hi())?.abs());
        let tolerance = TOL_ROOT * (1.0 + scale);
        if value.abs() > tolerance {
            return Err(Error::NotOnZeroSet {
                value: value.abs(),
                tolerance,
            });
        }
        Ok(())
    }
}

/// Orientation of the sign step of `y -> f(a, y)` on `V`, checked for
/// consistency over a sample grid of `U`.
pub fn detect_rho(p: &ImplicitProblem) -> Result<Rho> {
    let f = p.equation();
    let v = p.range;
    let theta = |x: &[f64], y: f64| f.value(x, y).map(|val| val >= 0.0);

    let mut switches = 0;
    let mut prev = theta(&p.center, v.lo())?;
    for k in 1..RANGE_PROBES {
        let y = v.lo() + k as f64 * v.length() / (RANGE_PROBES - 1) as f64;
        let cur = theta(&p.center, y)?;
        if cur != prev {
            switches += 1;
        }
        prev = cur;
    }
    if switches > 1 {
        return Err(Error::RhoNotConstant(format!(
            "f(a, y) changes sign {switches} times on {v}"
        )));
    }
    let (at_lo, at_hi) = (theta(&p.center, v.lo())?, theta(&p.center, v.hi())?);
    let rho = match (at_lo, at_hi) {
        (false, true) => Rho::Increasing,
        (true, false) => Rho::Decreasing,
        _ => {
            return Err(Error::NoBracket(format!(
                "f(a, y) has the same sign at both ends of {v}"
            )))
        }
    };

    let dim = p.domain.dim();
    let mut x = vec![0.0; dim];
    for idx in multi_indices(dim, DOMAIN_PROBES) {
        for k in 0..dim {
            let iv = p.domain.interval(k);
            x[k] = iv.lo() + idx[k] as f64 * iv.length() / (DOMAIN_PROBES - 1) as f64;
        }
        let pair = (theta(&x, v.lo())?, theta(&x, v.hi())?);
        let reversed = match rho {
            Rho::Increasing => pair == (true, false),
            Rho::Decreasing => pair == (false, true),
        };
        if reversed {
            return Err(Error::RhoNotConstant(format!(
                "sign step at x = {x:?} runs opposite to the step at the base point"
            )));
        }
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxSettings {
    pub max_level: u32,
    pub condition_limit: f64,
}

impl Default for ApproxSettings {
    fn default() -> Self {
        Self {
            max_level: DEFAULT_MAX_LEVEL,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub condition_estimates: Vec<f64>,
    pub residual_norm: f64,
    pub integrator: Value,
}

#[derive(Debug, Clone)]
pub struct ApproxResult {
    pub poly: PolyTensor,
    pub rho: Rho,
    pub mean_tensor: MeanTensor,
    pub domain: IntervalBox,
    pub diagnostics: Diagnostics,
}

pub fn approximate(
    p: &ImplicitProblem,
    integrator: &dyn VolumeIntegrator,
    settings: &ApproxSettings,
) -> Result<ApproxResult> {
    p.validate().stage("validate")?;
    let rho = detect_rho(p).stage("detect_rho")?;
    let axes = p
        .domain
        .axes()
        .iter()
        .zip(&p.center)
        .map(|((_, iv), &a)| moment_matrix(*iv, p.level, a, settings.max_level))
        .collect::<Result<Vec<_>>>()
        .stage("moment_matrix")?;
    let means = mean_tensor(p.equation(), &p.domain, p.range, rho, p.level, integrator)
        .stage("mean_tensor")?;
    let solved =
        solve_coefficients(&axes, &means, settings.condition_limit).stage("solve_coefficients")?;
    Ok(ApproxResult {
        poly: solved.poly,
        rho,
        mean_tensor: means,
        domain: p.domain.clone(),
        diagnostics: Diagnostics {
            condition_estimates: solved.condition_estimates,
            residual_norm: solved.residual_norm,
            integrator: integrator.settings(),
        },
    })
}

impl ApproxResult {
    pub fn level(&self) -> u32 {
        self.mean_tensor.level()
    }

    /// `g_n(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.poly.eval(x)
    }

    /// Block mean of `g_n` over the level-`level` dyadic block containing `x`.
    pub fn cesaro_eval(&self, x: &[f64], level: u32) -> Result<f64> {
        let (_, block) = DyadicGrid::new(self.domain.clone(), level).shrinking_block(x)?;
        self.poly.local_average(&block)
    }
}
