//! Two equations in `(y1, y2)`: eliminate one unknown with a first
//! approximation, then approximate the other from the substituted equation.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::approx::{approximate, ApproxResult, ApproxSettings, ImplicitProblem, TOL_ROOT};
use crate::equation::{EquationPair, ImplicitFunction};
use crate::error::{Error, Result, StageExt};
use crate::expr::{partial_derivative, partial_sign, CompiledExpr, Expression};
use crate::geometry::{Interval, IntervalBox};
use crate::integrator::VolumeIntegrator;
use crate::moments::PolyTensor;

/// Base finite-difference step for Jacobian entries, scaled by `1 + |b_j|`.
pub const FD_STEP: f64 = 1e-6;
/// Relative threshold on `|det J|` below which the system counts as degenerate.
pub const TOL_JAC: f64 = 1e-6;

/// Which equation (0-based) is solved for which unknown in the first stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Pivot {
    pub equation: usize,
    pub variable: usize,
}

impl Pivot {
    pub fn new(equation: usize, variable: usize) -> Result<Self> {
        if equation > 1 || variable > 1 {
            return Err(Error::Config(format!(
                "pivot ({}, {}) out of range; both must be 1 or 2",
                equation + 1,
                variable + 1
            )));
        }
        Ok(Self { equation, variable })
    }

    /// The equation and unknown left for the second stage.
    pub fn other(self) -> (usize, usize) {
        (1 - self.equation, 1 - self.variable)
    }
}

#[derive(Debug, Clone)]
pub struct SystemProblem {
    pub f1: Expression,
    pub f2: Expression,
    pub y_names: [String; 2],
    pub domain: IntervalBox,
    pub ranges: [Interval; 2],
    pub center: Vec<f64>,
    pub base: [f64; 2],
    /// Levels of the first and second stage.
    pub levels: [u32; 2],
    pub pivot: Option<Pivot>,
    /// Range for the second-stage unknown; defaults to its entry in `ranges`.
    pub stage2_range: Option<Interval>,
}

impl SystemProblem {
    fn equations(&self) -> [&Expression; 2] {
        [&self.f1, &self.f2]
    }

    fn base_binding(&self) -> Result<HashMap<String, f64>> {
        let d = self.domain.dim();
        if self.center.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.center.len(),
            });
        }
        if self.y_names[0] == self.y_names[1]
            || self.domain.names().contains(&self.y_names[0].as_str())
            || self.domain.names().contains(&self.y_names[1].as_str())
        {
            return Err(Error::Config(
                "unknowns must be distinct from each other and from x".into(),
            ));
        }
        let mut p: HashMap<String, f64> = self
            .domain
            .names()
            .into_iter()
            .map(String::from)
            .zip(self.center.iter().copied())
            .collect();
        for j in 0..2 {
            p.insert(self.y_names[j].clone(), self.base[j]);
        }
        Ok(p)
    }

    pub fn pair(&self) -> Result<EquationPair> {
        EquationPair::new(
            &self.f1,
            &self.f2,
            &self.domain.names(),
            [&self.y_names[0], &self.y_names[1]],
        )
    }

    /// Finite-difference `∂f_i/∂y_j` at `(a, b)`.
    pub fn jacobian(&self) -> Result<[[f64; 2]; 2]> {
        let p = self.base_binding()?;
        let mut jac = [[0.0; 2]; 2];
        for (i, f) in self.equations().into_iter().enumerate() {
            for j in 0..2 {
                let h = FD_STEP * (1.0 + self.base[j].abs());
                jac[i][j] = partial_derivative(f, &self.y_names[j], &p, h)?;
            }
        }
        Ok(jac)
    }
}

/// Checks `(a, b)` solves both equations and the Jacobian in `y` is
/// invertible there; returns its determinant.
pub fn jacobian_check(sp: &SystemProblem) -> Result<f64> {
    let p = sp.base_binding()?;
    for f in sp.equations() {
        let value = f.eval(&p)?;
        let tolerance = TOL_ROOT * (1.0 + sp.base[0].abs() + sp.base[1].abs());
        if value.abs() > tolerance {
            return Err(Error::NotOnZeroSet {
                value: value.abs(),
                tolerance,
            });
        }
    }
    let j = sp.jacobian()?;
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let tolerance = TOL_JAC * ((j[0][0] * j[1][1]).abs() + (j[0][1] * j[1][0]).abs());
    if !det.is_finite() || det.abs() <= tolerance {
        return Err(Error::DegenerateSystem { det, tolerance });
    }
    Ok(det)
}

/// The user's pivot if its partial is nonzero; otherwise the largest
/// `|∂f_i/∂y_j|`, ties going to the smallest `(i, j)`.
pub fn choose_pivot(sp: &SystemProblem) -> Result<Pivot> {
    if let Some(pivot) = sp.pivot {
        let p = sp.base_binding()?;
        let f = sp.equations()[pivot.equation];
        let h = FD_STEP * (1.0 + sp.base[pivot.variable].abs());
        if partial_sign(f, &sp.y_names[pivot.variable], &p, h)? == 0 {
            return Err(Error::VanishingPivot {
                equation: pivot.equation + 1,
                variable: pivot.variable + 1,
            });
        }
        return Ok(pivot);
    }
    let j = sp.jacobian()?;
    let mut best = Pivot::new(0, 0)?;
    for i in 0..2 {
        for k in 0..2 {
            if j[i][k].abs() > j[best.equation][best.variable].abs() {
                best = Pivot::new(i, k)?;
            }
        }
    }
    Ok(best)
}

fn first_stage_problem(sp: &SystemProblem, pivot: Pivot) -> Result<ImplicitProblem> {
    let (_, free) = pivot.other();
    let domain = sp.domain.extended(&sp.y_names[free], sp.ranges[free])?;
    let mut center = sp.center.clone();
    center.push(sp.base[free]);
    ImplicitProblem::new(
        sp.equations()[pivot.equation],
        &sp.y_names[pivot.variable],
        domain,
        sp.ranges[pivot.variable],
        center,
        sp.base[pivot.variable],
        sp.levels[0],
    )
}

/// `t -> f_i'(x, ..., p(x, t), ..., t)`: the remaining equation with the
/// pivot unknown replaced by the first-stage polynomial.
#[derive(Debug, Clone)]
pub struct SubstitutedEquation {
    outer: CompiledExpr,
    inner: PolyTensor,
    x_dim: usize,
    pivot_slot: usize,
    free_slot: usize,
}

impl ImplicitFunction for SubstitutedEquation {
    fn x_dim(&self) -> usize {
        self.x_dim
    }

    fn value(&self, x: &[f64], y: f64) -> Result<f64> {
        if x.len() != self.x_dim {
            return Err(Error::DimensionMismatch {
                expected: self.x_dim,
                got: x.len(),
            });
        }
        let mut slots = [0.0; 8];
        slots[..self.x_dim].copy_from_slice(x);
        slots[self.x_dim] = y;
        let eliminated = self.inner.eval(&slots[..=self.x_dim])?;
        slots[self.free_slot] = y;
        slots[self.pivot_slot] = eliminated;
        self.outer.eval(&slots[..self.x_dim + 2])
    }
}

pub fn compose_second_stage(
    sp: &SystemProblem,
    first: &PolyTensor,
    pivot: Pivot,
) -> Result<ImplicitProblem> {
    let (other_eq, free) = pivot.other();
    let pair = sp.pair()?;
    let d = sp.domain.dim();
    let equation = SubstitutedEquation {
        outer: pair.equation(other_eq).clone(),
        inner: first.clone(),
        x_dim: d,
        pivot_slot: d + pivot.variable,
        free_slot: d + free,
    };
    let problem = ImplicitProblem::from_function(
        Arc::new(equation),
        &sp.y_names[free],
        sp.domain.clone(),
        sp.stage2_range.unwrap_or(sp.ranges[free]),
        sp.center.clone(),
        sp.base[free],
        sp.levels[1],
    )?;
    Ok(problem.without_base_point_check())
}

#[derive(Debug, Clone)]
pub struct SystemResult {
    pub pivot: Pivot,
    pub jacobian_det: f64,
    /// `p_n(x, y_free)` for the pivot unknown.
    pub first: ApproxResult,
    /// `q_m(x)` for the remaining unknown.
    pub second: ApproxResult,
    pair: EquationPair,
}

impl SystemResult {
    /// `(y1, y2)` at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<[f64; 2]> {
        let (_, free) = self.pivot.other();
        let q = self.second.eval(x)?;
        let mut z = x.to_vec();
        z.push(q);
        let p = self.first.eval(&z)?;
        let mut y = [0.0; 2];
        y[free] = q;
        y[self.pivot.variable] = p;
        Ok(y)
    }

    /// `(f1, f2)` at `(x, evaluate(x))`.
    pub fn residuals(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.pair.residual(x, self.evaluate(x)?)
    }
}

pub fn solve_system(
    sp: &SystemProblem,
    integrator: &dyn VolumeIntegrator,
    settings: &ApproxSettings,
) -> Result<SystemResult> {
    let pair = sp.pair().stage("validate")?;
    let jacobian_det = jacobian_check(sp).stage("jacobian_check")?;
    let pivot = choose_pivot(sp).stage("choose_pivot")?;
    let first = first_stage_problem(sp, pivot)
        .and_then(|p| approximate(&p, integrator, settings))
        .stage("stage-1")?;
    let second = compose_second_stage(sp, &first.poly, pivot)
        .and_then(|p| approximate(&p, integrator, settings))
        .stage("stage-2")?;
    Ok(SystemResult {
        pivot,
        jacobian_det,
        first,
        second,
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::GaussBisection;
    use crate::oracle::pointwise_system;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn example_two(stage2: Option<Interval>) -> SystemProblem {
        SystemProblem {
            f1: Expression::parse("x + y1^2 + y2^3 - 6").unwrap(),
            f2: Expression::parse("x^3*y1 - y2 - 1").unwrap(),
            y_names: ["y1".into(), "y2".into()],
            domain: "x=[0.5,1.5)".parse().unwrap(),
            ranges: [iv(1.5, 2.5), iv(-2.0, 8.0)],
            center: vec![1.0],
            base: [2.0, 1.0],
            levels: [2, 4],
            pivot: Some(Pivot {
                equation: 1,
                variable: 1,
            }),
            stage2_range: stage2,
        }
    }

    fn solve(sp: &SystemProblem) -> Result<SystemResult> {
        solve_system(sp, &GaussBisection::default(), &ApproxSettings::default())
    }

    #[test]
    fn example_two_pivot_and_jacobian() {
        let mut sp = example_two(None);
        let j = sp.jacobian().unwrap();
        let want = [[4.0, 3.0], [1.0, -1.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[i][k] - want[i][k]).abs() < 1e-6);
            }
        }
        assert!((jacobian_check(&sp).unwrap() + 7.0).abs() < 1e-4);
        assert_eq!(
            choose_pivot(&sp).unwrap(),
            Pivot {
                equation: 1,
                variable: 1
            }
        );
        sp.pivot = None;
        assert_eq!(
            choose_pivot(&sp).unwrap(),
            Pivot {
                equation: 0,
                variable: 0
            }
        );
    }

    #[test]
    fn example_two_first_stage_is_exact() {
        let r = solve(&example_two(Some(iv(0.5, 2.5)))).unwrap();
        assert_eq!(r.first.rho, crate::quad::Rho::Decreasing);
        assert_eq!(r.second.rho, crate::quad::Rho::Increasing);
        let want = [
            [1.0, 1.0, 0.0, 0.0],
            [6.0, 3.0, 0.0, 0.0],
            [6.0, 3.0, 0.0, 0.0],
            [2.0, 1.0, 0.0, 0.0],
        ];
        for (i, row) in want.iter().enumerate() {
            for (k, w) in row.iter().enumerate() {
                let got = r.first.poly.coefficient(&[i, k]);
                assert!((got - w).abs() < 1e-6, "c[{i}][{k}] = {got}");
            }
        }
    }

    #[test]
    fn example_two_solution_with_wide_second_range() {
        let sp = example_two(Some(iv(0.5, 2.5)));
        let r = solve(&sp).unwrap();
        let pair = sp.pair().unwrap();
        let (mut sup, mut res): (f64, f64) = (0.0, 0.0);
        for k in 0..=40 {
            let x = 0.75 + k as f64 * 0.0125;
            let truth = pointwise_system(&pair, &[x], [2.0, 1.0], 1e-12).unwrap();
            let got = r.evaluate(&[x]).unwrap();
            sup = sup.max((got[0] - truth[0]).abs());
            let rk = r.residuals(&[x]).unwrap();
            res = res.max(rk[0].abs()).max(rk[1].abs());
        }
        assert!(sup <= 0.05, "sup error {sup}");
        assert!(res <= 0.05, "residual {res}");
        let y = r.evaluate(&[1.0]).unwrap();
        assert!(
            (y[0] - 2.0).abs() <= 0.05 && (y[1] - 1.0).abs() <= 0.05,
            "{y:?}"
        );
    }

    #[test]
    fn clamped_second_range_is_still_close_at_center() {
        let r = solve(&example_two(None)).unwrap();
        let y = r.evaluate(&[1.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 0.06, "{y:?}");
    }

    #[test]
    fn second_stage_slope_sign_follows_determinant() {
        // sign of ∂h/∂y_free at (a, b_free) equals sign(det J / ∂f_i/∂y_j)
        let sp = example_two(Some(iv(0.5, 2.5)));
        let pivot = choose_pivot(&sp).unwrap();
        let r = solve(&sp).unwrap();
        let h = compose_second_stage(&sp, &r.first.poly, pivot).unwrap();
        let t = 1e-4;
        let slope = (h.equation().value(&[1.0], 2.0 + t).unwrap()
            - h.equation().value(&[1.0], 2.0 - t).unwrap())
            / (2.0 * t);
        let j = sp.jacobian().unwrap();
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        assert_eq!(
            slope.signum(),
            (det / j[pivot.equation][pivot.variable]).signum()
        );
    }

    #[test]
    fn decoupled_linear_system() {
        let sp = SystemProblem {
            f1: Expression::parse("y1 - 0.5*x").unwrap(),
            f2: Expression::parse("y2 + 0.25*x").unwrap(),
            y_names: ["y1".into(), "y2".into()],
            domain: "x=[0,1)".parse().unwrap(),
            ranges: [iv(-1.0, 1.0), iv(-1.0, 1.0)],
            center: vec![0.5],
            base: [0.25, -0.125],
            levels: [1, 1],
            pivot: None,
            stage2_range: None,
        };
        let r = solve(&sp).unwrap();
        for x in [0.1, 0.5, 0.9] {
            let y = r.evaluate(&[x]).unwrap();
            assert!((y[0] - 0.5 * x).abs() < 1e-8 && (y[1] + 0.25 * x).abs() < 1e-8);
            let res = r.residuals(&[x]).unwrap();
            assert!(res[0].abs() < 1e-8 && res[1].abs() < 1e-8);
        }
    }

    #[test]
    fn degenerate_systems() {
        let mut sp = example_two(None);
        sp.f1 = Expression::parse("y1 + y2 - 3").unwrap();
        sp.f2 = Expression::parse("2*y1 + 2*y2 - 6").unwrap();
        let err = solve(&sp).unwrap_err();
        assert!(matches!(err.root(), Error::DegenerateSystem { .. }));
        sp.f2 = sp.f1.clone();
        assert!(matches!(
            jacobian_check(&sp),
            Err(Error::DegenerateSystem { .. })
        ));
    }

    #[test]
    fn off_zero_set_rejected() {
        let mut sp = example_two(None);
        sp.base = [2.0, 1.1];
        assert!(matches!(
            jacobian_check(&sp),
            Err(Error::NotOnZeroSet { .. })
        ));
    }

    #[test]
    fn vanishing_user_pivot() {
        let mut sp = example_two(None);
        sp.f2 = Expression::parse("y1 - 2*x^3").unwrap();
        sp.base = [2.0, 3f64.cbrt()];
        sp.f1 = Expression::parse("x + y1^2 + y2^3 - 8").unwrap();
        sp.pivot = Some(Pivot::new(1, 1).unwrap());
        assert!(matches!(
            choose_pivot(&sp),
            Err(Error::VanishingPivot {
                equation: 2,
                variable: 2
            })
        ));
        sp.pivot = Some(Pivot::new(1, 0).unwrap());
        assert_eq!(
            choose_pivot(&sp).unwrap(),
            Pivot {
                equation: 1,
                variable: 0
            }
        );
    }

    #[test]
    fn pivot_ties_go_to_first() {
        let sp = SystemProblem {
            f1: Expression::parse("y1 + y2").unwrap(),
            f2: Expression::parse("y1 - y2").unwrap(),
            y_names: ["y1".into(), "y2".into()],
            domain: "x=[0,1)".parse().unwrap(),
            ranges: [iv(-1.0, 1.0), iv(-1.0, 1.0)],
            center: vec![0.5],
            base: [0.0, 0.0],
            levels: [1, 1],
            pivot: None,
            stage2_range: None,
        };
        assert_eq!(
            choose_pivot(&sp).unwrap(),
            Pivot {
                equation: 0,
                variable: 0
            }
        );
        assert!(Pivot::new(2, 0).is_err());
    }
}
