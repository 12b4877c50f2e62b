//! Brute-force references: Monte Carlo Heaviside volumes and per-point
//! root finding. Nothing here shares code with the quadrature path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equation::{EquationPair, ImplicitFunction};
use crate::error::{Error, Result};
use crate::geometry::{Interval, IntervalBox};
use crate::quad::Rho;

/// Generator family used by [`mc_volume`]; chunk `c` draws from stream `c`.
pub const RNG_NAME: &str = "chacha8";

const MIN_SAMPLES: u64 = 10_000;
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0x5eed,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "Monte Carlo needs at least {MIN_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub hits: u64,
    pub samples: u64,
}

/// Uniform-sampling estimate of `∫_{R x V} Θ(f(x, y))`.
pub fn mc_volume(
    f: &dyn ImplicitFunction,
    block: &IntervalBox,
    range: Interval,
    cfg: &McConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    if block.dim() != f.x_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.x_dim(),
            got: block.dim(),
        });
    }
    let chunks = cfg.samples.div_ceil(CHUNK);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let n = CHUNK.min(cfg.samples - chunk * CHUNK);
            let mut x = vec![0.0; block.dim()];
            let mut hits = 0u64;
            for _ in 0..n {
                for (xk, (_, iv)) in x.iter_mut().zip(block.axes()) {
                    *xk = iv.lo() + rng.gen::<f64>() * iv.length();
                }
                let y = range.lo() + rng.gen::<f64>() * range.length();
                if f.value(&x, y)? >= 0.0 {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();

    let n = cfg.samples as f64;
    let p = hits as f64 / n;
    let total = block.volume() * range.length();
    Ok(McEstimate {
        estimate: total * p,
        std_error: total * (p * (1.0 - p) / n).sqrt(),
        hits,
        samples: cfg.samples,
    })
}

/// Ground-truth `g(x)` with `f(x, g(x)) = 0`, by plain bisection on the sign of `f`.
pub fn pointwise_implicit(
    f: &dyn ImplicitFunction,
    x: &[f64],
    range: Interval,
    rho: Rho,
    tol: f64,
) -> Result<f64> {
    let (mut lo, mut hi) = (range.lo(), range.hi());
    let f_lo = f.value(x, lo)?;
    let f_hi = f.value(x, hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    let bracketed = match rho {
        Rho::Increasing => f_lo < 0.0 && f_hi > 0.0,
        Rho::Decreasing => f_lo > 0.0 && f_hi < 0.0,
    };
    if !bracketed {
        return Err(Error::NoBracket(format!(
            "f(x, {lo}) = {f_lo:e}, f(x, {hi}) = {f_hi:e} at x = {x:?}"
        )));
    }
    let lo_negative = f_lo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f.value(x, mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if (v < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const NEWTON_MAX_ITER: usize = 100;

/// Solves `(f1, f2)(x, y) = 0` for `y` by damped Newton from `start`.
pub fn pointwise_system(
    pair: &EquationPair,
    x: &[f64],
    start: [f64; 2],
    tol: f64,
) -> Result<[f64; 2]> {
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut y = start;
    let mut r = pair.residual(x, y)?;
    for _ in 0..NEWTON_MAX_ITER {
        if norm(r) <= tol {
            return Ok(y);
        }
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let h = 1e-7 * (1.0 + y[j].abs());
            let mut up = y;
            let mut down = y;
            up[j] += h;
            down[j] -= h;
            let (ru, rd) = (pair.residual(x, up)?, pair.residual(x, down)?);
            for i in 0..2 {
                jac[i][j] = (ru[i] - rd[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Divergence(format!("singular Jacobian at y = {y:?}")));
        }
        let step = [
            (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [y[0] - lambda * step[0], y[1] - lambda * step[1]];
            if let Ok(rt) = pair.residual(x, trial) {
                if norm(rt) < norm(r) {
                    y = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(r) <= tol {
        Ok(y)
    } else {
        Err(Error::Divergence(format!(
            "residual {:e} after Newton from {start:?} at x = {x:?}",
            norm(r)
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::BoundEquation;
    use crate::expr::Expression;

    fn eq(src: &str, xs: &[&str]) -> BoundEquation {
        BoundEquation::new(&Expression::parse(src).unwrap(), xs, "y").unwrap()
    }

    fn unit_square() -> IntervalBox {
        "x1=[0,1);x2=[0,1)".parse().unwrap()
    }

    #[test]
    fn half_slab_volume() {
        let f = eq("y", &["x1", "x2"]);
        let cfg = McConfig {
            samples: 1_000_000,
            seed: 7,
        };
        let est = mc_volume(&f, &unit_square(), Interval::new(-1.0, 1.0).unwrap(), &cfg).unwrap();
        assert!((est.estimate - 1.0).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn flat_step_volume() {
        let f = eq("y - 0.5", &["x1", "x2"]);
        let cfg = McConfig {
            samples: 200_000,
            seed: 11,
        };
        let est = mc_volume(&f, &unit_square(), Interval::new(0.0, 1.0).unwrap(), &cfg).unwrap();
        assert!((est.estimate - 0.5).abs() <= 3.0 * est.std_error);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let f = eq("x1^2 + x2^2 + y^2 - 1", &["x1", "x2"]);
        let cfg = McConfig {
            samples: 150_000,
            seed: 3,
        };
        let v = Interval::new(0.0, 1.5).unwrap();
        let a = mc_volume(&f, &unit_square(), v, &cfg).unwrap();
        let b = mc_volume(&f, &unit_square(), v, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(mc_volume(
            &f,
            &unit_square(),
            v,
            &McConfig {
                samples: 10,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn doubling_samples_shrinks_error() {
        let f = eq("x1^2 + x2^2 + y^2 - 1", &["x1", "x2"]);
        let v = Interval::new(0.0, 1.5).unwrap();
        let se = |samples| {
            mc_volume(&f, &unit_square(), v, &McConfig { samples, seed: 1 })
                .unwrap()
                .std_error
        };
        let ratio = se(400_000) / se(100_000);
        assert!((ratio - 0.5).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn sphere_points() {
        let f = eq("x1^2 + x2^2 + y^2 - 1", &["x1", "x2"]);
        let v = Interval::new(0.0, 1.5).unwrap();
        let y = pointwise_implicit(&f, &[0.3, 0.4], v, Rho::Increasing, 1e-13).unwrap();
        assert!((y - 0.75f64.sqrt()).abs() < 1e-12);
        let y = pointwise_implicit(&f, &[0.5, 0.5], v, Rho::Increasing, 1e-13).unwrap();
        assert!((y - 0.5f64.sqrt()).abs() < 1e-12);
        let c = eq("y - 0.25", &["x1"]);
        let y = pointwise_implicit(
            &c,
            &[0.9],
            Interval::new(0.0, 1.0).unwrap(),
            Rho::Increasing,
            1e-13,
        )
        .unwrap();
        assert!((y - 0.25).abs() < 1e-12);
        assert!(pointwise_implicit(
            &f,
            &[0.0, 0.0],
            Interval::new(2.0, 3.0).unwrap(),
            Rho::Increasing,
            1e-9
        )
        .is_err());
    }

    fn example_two() -> EquationPair {
        let f1 = Expression::parse("x + y1^2 + y2^3 - 6").unwrap();
        let f2 = Expression::parse("x^3*y1 - y2 - 1").unwrap();
        EquationPair::new(&f1, &f2, &["x"], ["y1", "y2"]).unwrap()
    }

    #[test]
    fn newton_on_example_two() {
        let pair = example_two();
        let y = pointwise_system(&pair, &[1.0], [2.0, 1.0], 1e-12).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
        let y = pointwise_system(&pair, &[1.25], [2.0, 1.0], 1e-10).unwrap();
        let r = pair.residual(&[1.25], y).unwrap();
        assert!(r[0].abs() <= 1e-10 && r[1].abs() <= 1e-10);
    }

    #[test]
    fn newton_on_linear_system() {
        let f1 = Expression::parse("y1 - x").unwrap();
        let f2 = Expression::parse("y2 - 2*x").unwrap();
        let pair = EquationPair::new(&f1, &f2, &["x"], ["y1", "y2"]).unwrap();
        let y = pointwise_system(&pair, &[0.7], [1.0, 2.0], 1e-12).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-12 && (y[1] - 1.4).abs() < 1e-12);
    }
}
