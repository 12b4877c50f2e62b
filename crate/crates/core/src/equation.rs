//! Equations viewed as functions of an `x` point and one scalar `y`.

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Expression};

const MAX_SLOTS: usize = 8;

/// `f(x, y)` with `x` of fixed dimension; what the quadrature and the
/// approximation pipeline integrate against.
pub trait ImplicitFunction: Send + Sync {
    fn x_dim(&self) -> usize;

    fn value(&self, x: &[f64], y: f64) -> Result<f64>;
}

/// An [`Expression`] with its variables split into `x` coordinates and `y`.
#[derive(Debug, Clone)]
pub struct BoundEquation {
    compiled: CompiledExpr,
    x_dim: usize,
}

impl BoundEquation {
    pub fn new(expr: &Expression, x_names: &[&str], y_name: &str) -> Result<Self> {
        let mut order: Vec<&str> = x_names.to_vec();
        order.push(y_name);
        if order.len() > MAX_SLOTS {
            return Err(Error::Config(format!(
                "at most {} variables",
                MAX_SLOTS - 1
            )));
        }
        for (i, name) in order.iter().enumerate() {
            if order[..i].contains(name) {
                return Err(Error::Config(format!("variable `{name}` listed twice")));
            }
        }
        Ok(Self {
            compiled: expr.compile(&order)?,
            x_dim: x_names.len(),
        })
    }
}

impl ImplicitFunction for BoundEquation {
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
        let mut slots = [0.0; MAX_SLOTS];
        slots[..self.x_dim].copy_from_slice(x);
        slots[self.x_dim] = y;
        self.compiled.eval(&slots[..=self.x_dim])
    }
}

/// Two equations in `(x, y1, y2)`.
#[derive(Debug, Clone)]
pub struct EquationPair {
    f1: CompiledExpr,
    f2: CompiledExpr,
    x_dim: usize,
}

impl EquationPair {
    pub fn new(
        f1: &Expression,
        f2: &Expression,
        x_names: &[&str],
        y_names: [&str; 2],
    ) -> Result<Self> {
        let mut order: Vec<&str> = x_names.to_vec();
        order.extend(y_names);
        if order.len() > MAX_SLOTS {
            return Err(Error::Config(format!(
                "at most {} variables",
                MAX_SLOTS - 2
            )));
        }
        Ok(Self {
            f1: f1.compile(&order)?,
            f2: f2.compile(&order)?,
            x_dim: x_names.len(),
        })
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub(crate) fn slots(&self, x: &[f64], y: [f64; 2]) -> Result<([f64; MAX_SLOTS], usize)> {
        if x.len() != self.x_dim {
            return Err(Error::DimensionMismatch {
                expected: self.x_dim,
                got: x.len(),
            });
        }
        let mut slots = [0.0; MAX_SLOTS];
        slots[..self.x_dim].copy_from_slice(x);
        slots[self.x_dim] = y[0];
        slots[self.x_dim + 1] = y[1];
        Ok((slots, self.x_dim + 2))
    }

    pub fn equation(&self, i: usize) -> &CompiledExpr {
        if i == 0 {
            &self.f1
        } else {
            &self.f2
        }
    }

    pub fn residual(&self, x: &[f64], y: [f64; 2]) -> Result<[f64; 2]> {
        let (slots, n) = self.slots(x, y)?;
        Ok([self.f1.eval(&slots[..n])?, self.f2.eval(&slots[..n])?])
    }
}
