//! Moment matrices, block-integral tensors and the coefficient solve.
//!
//! For each axis `k`, `A_k[i][j] = ∫_{block i} (t - a_k)^j dt` with powers
//! `j = 0 .. 2^n - 1`. The mean tensor `B` holds `∫_block g` for every dyadic
//! block, obtained from `μ(block)` without knowing `g`. The polynomial
//! coefficients `c` solve `c ×₁ A_1 ×₂ A_2 ... = B`.

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use twofloat::TwoFloat;

use crate::equation::ImplicitFunction;
use crate::error::{Error, Result};
use crate::geometry::{multi_indices, DyadicGrid, Interval, IntervalBox};
use crate::integrator::VolumeIntegrator;
use crate::linalg::{condition_number_1, Lu, Matrix};
use crate::quad::Rho;
use crate::tensor::Tensor;

pub const DEFAULT_MAX_LEVEL: u32 = 5;
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;
/// Relative bound on `‖A∘c - B‖∞ / ‖B‖∞` after the solve.
pub const RESIDUAL_BOUND: f64 = 1e-10;

/// `∫_lo^hi (t - center)^power dt`.
///
/// Evaluated as `(hi - lo) Σ u^i w^(k-1-i) / k` with `u = hi - c`,
/// `w = lo - c`, `k = power + 1`, which avoids the cancellation in
/// `(u^k - w^k) / k` when the center is far from the block.
pub fn monomial_integral(lo: f64, hi: f64, center: f64, power: usize) -> f64 {
    let u = hi - center;
    let w = lo - center;
    let k = power + 1;
    let mut sum = 0.0;
    let mut u_pow = 1.0;
    let mut w_pows = vec![1.0; k];
    for i in 1..k {
        w_pows[i] = w_pows[i - 1] * w;
    }
    for i in 0..k {
        sum += u_pow * w_pows[k - 1 - i];
        u_pow *= u;
    }
    (hi - lo) * sum / k as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    entries: Matrix,
    center: f64,
    axis: Interval,
    level: u32,
}

pub fn moment_matrix(
    axis: Interval,
    level: u32,
    center: f64,
    max_level: u32,
) -> Result<MomentMatrix> {
    if level > max_level {
        return Err(Error::LevelTooHigh {
            level,
            max: max_level,
        });
    }
    let size = 1usize << level;
    let entries = Matrix::from_fn(size, |i, j| {
        monomial_integral(
            axis.dyadic_edge(level, i),
            axis.dyadic_edge(level, i + 1),
            center,
            j,
        )
    });
    Ok(MomentMatrix {
        entries,
        center,
        axis,
        level,
    })
}

impl MomentMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn axis(&self) -> Interval {
        self.axis
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn size(&self) -> usize {
        self.entries.size()
    }

    /// Determinant from the float64 LU factorization.
    pub fn determinant(&self) -> Result<f64> {
        Ok(Lu::factor(&self.entries)?.determinant())
    }

    pub fn condition_number(&self) -> Result<f64> {
        let lu = Lu::factor(&self.entries)?;
        Ok(condition_number_1(&self.entries, &lu))
    }

    /// Determinant from an LU factorization carried out in double-double
    /// arithmetic on entries rebuilt in double-double. The float64 entries
    /// alone limit the relative accuracy to roughly `ε Σ|A⁻ᵀ ∘ A|`, which
    /// exceeds 1e-8 for off-center expansions at level 3.
    pub fn extended_determinant(&self) -> Result<f64> {
        let n = self.size();
        let c = TwoFloat::from(self.center);
        let mut a: Vec<Vec<TwoFloat>> = (0..n)
            .map(|i| {
                let lo = TwoFloat::from(self.axis.dyadic_edge(self.level, i));
                let hi = TwoFloat::from(self.axis.dyadic_edge(self.level, i + 1));
                let (u, w) = (hi - c, lo - c);
                (0..n)
                    .map(|j| {
                        let k = j + 1;
                        let mut sum = TwoFloat::from(0.0);
                        let mut u_pow = TwoFloat::from(1.0);
                        for i in 0..k {
                            let mut w_pow = TwoFloat::from(1.0);
                            for _ in 0..(k - 1 - i) {
                                w_pow *= w;
                            }
                            sum += u_pow * w_pow;
                            u_pow *= u;
                        }
                        dd_div((hi - lo) * sum, TwoFloat::from(k as f64))
                    })
                    .collect()
            })
            .collect();

        let mut det = TwoFloat::from(1.0);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| {
                    a[i][k]
                        .abs()
                        .partial_cmp(&a[j][k].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(k);
            if a[p][k] == TwoFloat::from(0.0) {
                return Err(Error::Singular);
            }
            if p != k {
                a.swap(p, k);
                det = -det;
            }
            let pivot = a[k][k];
            det *= pivot;
            for i in k + 1..n {
                let factor = dd_div(a[i][k], pivot);
                for j in k..n {
                    let t = factor * a[k][j];
                    a[i][j] -= t;
                }
            }
        }
        Ok(f64::from(det))
    }
}

/// Double-double quotient. `twofloat`'s own division rounds to roughly
/// float64 precision, so the quotient is refined with two correction steps
/// that only use its (accurate) multiply and subtract.
fn dd_div(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let mut q = TwoFloat::from(a.hi() / b.hi());
    for _ in 0..2 {
        let r = a - b * q;
        q += TwoFloat::from(r.hi() / b.hi());
    }
    q
}

/// `Δ^N ∏_{1≤i<j≤N} (j - i) Δ` with `N = 2^level` and `Δ = |axis| / N`.
pub fn vandermonde_determinant(axis: Interval, level: u32) -> f64 {
    let n = 1usize << level;
    let delta = axis.length() / n as f64;
    let mut det = delta.powi(n as i32);
    for i in 1..=n {
        for j in i + 1..=n {
            det *= (j - i) as f64 * delta;
        }
    }
    det
}

/// Per-block integrals of the implicit function, from Heaviside volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTensor {
    entries: Tensor,
    level: u32,
    rho: Rho,
    range: Interval,
}

impl MeanTensor {
    pub fn new(entries: Tensor, level: u32, rho: Rho, range: Interval) -> Result<Self> {
        let per_axis = 1usize << level;
        if entries.shape().iter().any(|&s| s != per_axis) {
            return Err(Error::DimensionMismatch {
                expected: per_axis,
                got: entries
                    .shape()
                    .iter()
                    .copied()
                    .find(|&s| s != per_axis)
                    .unwrap_or(0),
            });
        }
        Ok(Self {
            entries,
            level,
            rho,
            range,
        })
    }

    pub fn entries(&self) -> &Tensor {
        &self.entries
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn rho(&self) -> Rho {
        self.rho
    }

    pub fn range(&self) -> Interval {
        self.range
    }
}

/// `|block| · (max V or min V) - ρ μ(block)` for every block of the level-`level` grid.
pub fn mean_tensor(
    f: &dyn ImplicitFunction,
    domain: &IntervalBox,
    range: Interval,
    rho: Rho,
    level: u32,
    integrator: &dyn VolumeIntegrator,
) -> Result<MeanTensor> {
    let grid = DyadicGrid::new(domain.clone(), level);
    let indices: Vec<Vec<usize>> = multi_indices(domain.dim(), grid.blocks_per_axis()).collect();
    let selected = rho.select(range);
    let values = indices
        .par_iter()
        .map(|index| {
            let block = grid.block(index);
            let mu = integrator
                .volume(f, &block, range, rho)
                .map_err(|e| Error::Block {
                    index: index.clone(),
                    source: Box::new(e),
                })?;
            Ok(block.volume() * selected - rho.value() * mu.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let shape = vec![grid.blocks_per_axis(); domain.dim()];
    MeanTensor::new(Tensor::new(shape, values)?, level, rho, range)
}

/// Coefficients of `Σ c_α ∏_k (x_k - a_k)^{α_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTensor {
    center: Vec<f64>,
    coeffs: Tensor,
}

impl PolyTensor {
    pub fn new(center: Vec<f64>, coeffs: Tensor) -> Result<Self> {
        if center.len() != coeffs.ndim() {
            return Err(Error::DimensionMismatch {
                expected: coeffs.ndim(),
                got: center.len(),
            });
        }
        if coeffs.ndim() == 0 || coeffs.shape().contains(&0) {
            return Err(Error::Config("polynomial tensor must be non-empty".into()));
        }
        if let Some(bad) = center.iter().chain(coeffs.data()).find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite polynomial entry {bad}")));
        }
        Ok(Self { center, coeffs })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn coeffs(&self) -> &Tensor {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn coefficient(&self, powers: &[usize]) -> f64 {
        self.coeffs.get(powers)
    }

    /// Nested Horner evaluation in centered coordinates.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let t: Vec<f64> = x.iter().zip(&self.center).map(|(x, a)| x - a).collect();
        Ok(horner(self.coeffs.data(), self.coeffs.shape(), &t))
    }

    /// Exact mean of the polynomial over `block`.
    pub fn local_average(&self, block: &IntervalBox) -> Result<f64> {
        if block.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: block.dim(),
            });
        }
        let moments: Vec<Vec<f64>> = block
            .axes()
            .iter()
            .zip(&self.center)
            .zip(self.coeffs.shape())
            .map(|(((_, iv), &a), &len)| {
                (0..len)
                    .map(|j| monomial_integral(iv.lo(), iv.hi(), a, j))
                    .collect()
            })
            .collect();
        // contract one axis at a time, last axis first
        let mut data = self.coeffs.data().to_vec();
        for k in (0..self.dim()).rev() {
            let len = self.coeffs.shape()[k];
            data = data
                .chunks(len)
                .map(|fiber| fiber.iter().zip(&moments[k]).map(|(c, m)| c * m).sum())
                .collect();
        }
        Ok(data[0] / block.volume())
    }
}

fn horner(data: &[f64], shape: &[usize], t: &[f64]) -> f64 {
    if shape.len() == 1 {
        return data.iter().rev().fold(0.0, |acc, c| acc * t[0] + c);
    }
    let chunk: usize = shape[1..].iter().product();
    (0..shape[0]).rev().fold(0.0, |acc, i| {
        acc * t[0] + horner(&data[i * chunk..(i + 1) * chunk], &shape[1..], &t[1..])
    })
}

fn nest(data: &[f64], shape: &[usize]) -> Value {
    if shape.len() == 1 {
        return Value::from(data.to_vec());
    }
    let chunk: usize = shape[1..].iter().product();
    Value::Array(data.chunks(chunk).map(|c| nest(c, &shape[1..])).collect())
}

fn flatten(value: &Value, shape: &[usize], out: &mut Vec<f64>) -> std::result::Result<(), String> {
    let items = value.as_array().ok_or("coeffs must be nested arrays")?;
    if items.len() != shape[0] {
        return Err(format!(
            "expected {} entries, found {}",
            shape[0],
            items.len()
        ));
    }
    for item in items {
        if shape.len() == 1 {
            out.push(item.as_f64().ok_or("coefficient is not a number")?);
        } else {
            flatten(item, &shape[1..], out)?;
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PolyTensorRepr {
    center: Vec<f64>,
    shape: Vec<usize>,
    coeffs: Value,
}

impl Serialize for PolyTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PolyTensorRepr {
            center: self.center.clone(),
            shape: self.coeffs.shape().to_vec(),
            coeffs: nest(self.coeffs.data(), self.coeffs.shape()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PolyTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PolyTensorRepr::deserialize(deserializer)?;
        if repr.shape.is_empty() {
            return Err(D::Error::custom("shape must be non-empty"));
        }
        let mut data = Vec::new();
        flatten(&repr.coeffs, &repr.shape, &mut data).map_err(D::Error::custom)?;
        let coeffs = Tensor::new(repr.shape, data).map_err(D::Error::custom)?;
        PolyTensor::new(repr.center, coeffs).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientSolve {
    pub poly: PolyTensor,
    /// 1-norm condition number per axis.
    pub condition_estimates: Vec<f64>,
    /// `‖A∘c - B‖∞`.
    pub residual_norm: f64,
}

fn apply_moments(c: &Tensor, axes: &[MomentMatrix]) -> Tensor {
    axes.iter().enumerate().fold(c.clone(), |t, (k, a)| {
        t.map_mode(k, |fiber| a.entries.mul_vec(fiber))
    })
}

/// Solves `c ×₁ A_1 ... ×_d A_d = B` mode by mode with LU.
pub fn solve_coefficients(
    axes: &[MomentMatrix],
    b: &MeanTensor,
    condition_limit: f64,
) -> Result<CoefficientSolve> {
    let rhs = b.entries();
    if axes.len() != rhs.ndim() {
        return Err(Error::DimensionMismatch {
            expected: rhs.ndim(),
            got: axes.len(),
        });
    }
    let mut factors = Vec::with_capacity(axes.len());
    let mut conds = Vec::with_capacity(axes.len());
    for (a, &len) in axes.iter().zip(rhs.shape()) {
        if a.size() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: a.size(),
            });
        }
        let lu = Lu::factor(&a.entries)?;
        let cond = condition_number_1(&a.entries, &lu);
        if !(cond <= condition_limit) {
            return Err(Error::IllConditioned { estimate: cond });
        }
        factors.push(lu);
        conds.push(cond);
    }
    let apply_inverse = |t: &Tensor| {
        factors.iter().enumerate().fold(t.clone(), |t, (k, lu)| {
            t.map_mode(k, |fiber| lu.solve(fiber))
        })
    };

    let scale = rhs.max_abs();
    let mut c = apply_inverse(rhs);
    let mut residual = rhs.sub(&apply_moments(&c, axes));
    for _ in 0..2 {
        if residual.max_abs() <= 1e-14 * scale {
            break;
        }
        c = c.add(&apply_inverse(&residual));
        residual = rhs.sub(&apply_moments(&c, axes));
    }
    let residual_norm = residual.max_abs();
    let bound = RESIDUAL_BOUND * scale;
    if residual_norm > bound {
        return Err(Error::Residual {
            residual: residual_norm,
            bound,
        });
    }
    let center = axes.iter().map(|a| a.center).collect();
    Ok(CoefficientSolve {
        poly: PolyTensor::new(center, c)?,
        condition_estimates: conds,
        residual_norm,
    })
}
