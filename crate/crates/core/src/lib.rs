//! Polynomial approximation of implicitly defined functions `y = g(x)` with
//! `f(x, g(x)) = 0`, built from Heaviside volume integrals over dyadic blocks.
//!
//! The pipeline for one equation is [`approx::approximate`]; two-equation
//! systems go through [`system::solve_system`].

pub mod approx;
pub mod equation;
pub mod error;
pub mod expr;
pub mod gauss;
pub mod geometry;
pub mod integrator;
pub mod linalg;
pub mod moments;
pub mod oracle;
pub mod quad;
pub mod system;
pub mod tensor;

pub use approx::{approximate, detect_rho, ApproxResult, ApproxSettings, ImplicitProblem};
pub use equation::{BoundEquation, EquationPair, ImplicitFunction};
pub use error::{Error, Result};
pub use expr::{CompiledExpr, Expression};
pub use geometry::{DyadicGrid, Interval, IntervalBox};
pub use integrator::{IntegratorOptions, IntegratorRegistry, VolumeIntegrator, DEFAULT_INTEGRATOR};
pub use moments::{MeanTensor, PolyTensor};
pub use quad::{QuadConfig, Rho};
pub use system::{solve_system, Pivot, SystemProblem, SystemResult};
