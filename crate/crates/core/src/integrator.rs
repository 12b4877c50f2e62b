//! Interchangeable `μ(R)` integrators, registered by name.
//!
//! The approximation pipeline only sees [`VolumeIntegrator`]; which one runs
//! is chosen at runtime from an [`IntegratorRegistry`].

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::equation::ImplicitFunction;
use crate::error::{Error, Result};
use crate::geometry::{Interval, IntervalBox};
use crate::oracle::{self, McConfig};
use crate::quad::{self, HeavisideVolumeSpec, QuadConfig, Rho};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Zero for deterministic integrators.
    pub std_error: f64,
}

pub trait VolumeIntegrator: Send + Sync {
    fn name(&self) -> &'static str;

    fn volume(
        &self,
        f: &dyn ImplicitFunction,
        block: &IntervalBox,
        range: Interval,
        rho: Rho,
    ) -> Result<VolumeEstimate>;

    /// Settings recorded in output artifacts.
    fn settings(&self) -> Value;
}

/// Slice bisection in `y`, tensor Gauss–Legendre in `x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussBisection {
    pub config: QuadConfig,
}

impl VolumeIntegrator for GaussBisection {
    fn name(&self) -> &'static str {
        "gauss-bisection"
    }

    fn volume(
        &self,
        f: &dyn ImplicitFunction,
        block: &IntervalBox,
        range: Interval,
        rho: Rho,
    ) -> Result<VolumeEstimate> {
        let value = quad::heaviside_volume(&HeavisideVolumeSpec {
            f,
            block,
            range,
            rho,
            gauss_order: self.config.gauss_order,
            bisect_tol: self.config.bisect_tol_rel * range.length(),
        })?;
        Ok(VolumeEstimate {
            value,
            std_error: 0.0,
        })
    }

    fn settings(&self) -> Value {
        json!({
            "integrator": self.name(),
            "gauss_order": self.config.gauss_order,
            "bisect_tol_rel": self.config.bisect_tol_rel,
        })
    }
}

/// Uniform sampling; each block gets its own seed derived from its corners,
/// so results do not depend on evaluation order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonteCarlo {
    pub config: McConfig,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn block_seed(seed: u64, block: &IntervalBox) -> u64 {
    block.axes().iter().fold(splitmix(seed), |acc, (_, iv)| {
        splitmix(acc ^ splitmix(iv.lo().to_bits()) ^ iv.hi().to_bits().rotate_left(17))
    })
}

impl VolumeIntegrator for MonteCarlo {
    fn name(&self) -> &'static str {
        "monte-carlo"
    }

    fn volume(
        &self,
        f: &dyn ImplicitFunction,
        block: &IntervalBox,
        range: Interval,
        _rho: Rho,
    ) -> Result<VolumeEstimate> {
        let cfg = McConfig {
            samples: self.config.samples,
            seed: block_seed(self.config.seed, block),
        };
        let est = oracle::mc_volume(f, block, range, &cfg)?;
        Ok(VolumeEstimate {
            value: est.estimate,
            std_error: est.std_error,
        })
    }

    fn settings(&self) -> Value {
        json!({
            "integrator": self.name(),
            "samples": self.config.samples,
            "seed": self.config.seed,
            "rng": oracle::RNG_NAME,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegratorOptions {
    pub quad: QuadConfig,
    pub monte_carlo: McConfig,
}

pub type IntegratorFactory = fn(&IntegratorOptions) -> Result<Box<dyn VolumeIntegrator>>;

pub const DEFAULT_INTEGRATOR: &str = "gauss-bisection";

pub struct IntegratorRegistry {
    factories: BTreeMap<String, IntegratorFactory>,
}

impl IntegratorRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: IntegratorFactory) -> &mut Self {
        self.factories.insert(name.to_string(), factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(
        &self,
        name: &str,
        options: &IntegratorOptions,
    ) -> Result<Box<dyn VolumeIntegrator>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown integrator `{name}` (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(options)
    }
}

impl Default for IntegratorRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        registry
            .register("gauss-bisection", |opts| {
                opts.quad.validate()?;
                Ok(Box::new(GaussBisection { config: opts.quad }))
            })
            .register("monte-carlo", |opts| {
                opts.monte_carlo.validate()?;
                Ok(Box::new(MonteCarlo {
                    config: opts.monte_carlo,
                }))
            });
        registry
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::BoundEquation;
    use crate::expr::Expression;

    #[test]
    fn registry_lookup() {
        let registry = IntegratorRegistry::default();
        assert_eq!(
            registry.names().collect::<Vec<_>>(),
            ["gauss-bisection", "monte-carlo"]
        );
        let opts = IntegratorOptions::default();
        assert_eq!(
            registry.create("gauss-bisection", &opts).unwrap().name(),
            "gauss-bisection"
        );
        assert!(matches!(
            registry.create("simpson", &opts),
            Err(Error::Config(_))
        ));
        let bad = IntegratorOptions {
            quad: QuadConfig {
                gauss_order: 1,
                ..QuadConfig::default()
            },
            ..opts
        };
        assert!(registry.create("gauss-bisection", &bad).is_err());
    }

    #[test]
    fn custom_registration() {
        struct Zero;
        impl VolumeIntegrator for Zero {
            fn name(&self) -> &'static str {
                "zero"
            }
            fn volume(
                &self,
                _: &dyn ImplicitFunction,
                _: &IntervalBox,
                _: Interval,
                _: Rho,
            ) -> Result<VolumeEstimate> {
                Ok(VolumeEstimate {
                    value: 0.0,
                    std_error: 0.0,
                })
            }
            fn settings(&self) -> Value {
                json!({ "integrator": "zero" })
            }
        }
        let mut registry = IntegratorRegistry::empty();
        registry.register("zero", |_| Ok(Box::new(Zero)));
        let z = registry
            .create("zero", &IntegratorOptions::default())
            .unwrap();
        assert_eq!(z.settings()["integrator"], "zero");
    }

    #[test]
    fn integrators_agree_on_flat_step() {
        let f = BoundEquation::new(&Expression::parse("y - 0.5").unwrap(), &["x"], "y").unwrap();
        let block: IntervalBox = "x=[0,1)".parse().unwrap();
        let v = Interval::new(0.0, 1.0).unwrap();
        let registry = IntegratorRegistry::default();
        let opts = IntegratorOptions {
            monte_carlo: McConfig {
                samples: 100_000,
                seed: 9,
            },
            ..Default::default()
        };
        let exact = registry
            .create("gauss-bisection", &opts)
            .unwrap()
            .volume(&f, &block, v, Rho::Increasing)
            .unwrap();
        let mc = registry
            .create("monte-carlo", &opts)
            .unwrap()
            .volume(&f, &block, v, Rho::Increasing)
            .unwrap();
        assert!((exact.value - 0.5).abs() < 1e-12);
        assert!((mc.value - 0.5).abs() <= 3.0 * mc.std_error);
    }
}
