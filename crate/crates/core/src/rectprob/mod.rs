//! Multivariate normal rectangle probabilities `P(a_j < Z_j < b_j, j = 1..d)`
//! for `Z ~ N(0, R)`.
//!
//! Four engines are provided:
//!
//! * [`exchangeable_1d`]: deterministic reduction to a one-dimensional
//!   integral, valid for exchangeable `R` with `ρ >= 0`.
//! * [`genz_bretz`]: the sequentially conditioned, bounded integrand over
//!   the unit cube, integrated by a randomized rank-1 lattice rule with
//!   antithetic (baker's transform) pairs.
//! * [`naive_mc`]: indicator averaging over direct MVN draws.
//! * [`mf_importance`]: importance sampling with independent uniforms on
//!   `(Φ(a_j), Φ(b_j))`, the jittering estimator. Its weights are unbounded.

mod exchangeable;
mod genz_bretz;
mod importance;
mod naive;
pub mod quadrature;

pub use exchangeable::{exchangeable_1d, exchangeable_1d_with_tol, EXCH_ABS_TOL};
pub use genz_bretz::{genz_bretz, GenzBretz, LatticeRule, RqmcConfig};
pub use importance::mf_importance;
pub use naive::naive_mc;

use crate::error::{Error, Result};
use crate::special::Interval;

/// Integration box on the latent normal scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    bounds: Vec<Interval>,
}

impl Rectangle {
    pub fn new(bounds: Vec<Interval>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Validation("rectangle needs at least one coordinate".into()));
        }
        Ok(Self { bounds })
    }

    /// `[-a, a]^d`.
    pub fn symmetric(a: f64, d: usize) -> Self {
        Self { bounds: vec![Interval::symmetric(a); d] }
    }

    pub fn from_limits(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Validation("lower and upper limits differ in length".into()));
        }
        let bounds = lower
            .iter()
            .zip(upper)
            .map(|(&a, &b)| Interval::new(a, b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bounds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.bounds[j].lower
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.bounds[j].upper
    }

    /// Product of marginal masses: the probability under independence.
    pub fn independent_mass(&self) -> f64 {
        self.bounds.iter().map(Interval::mass).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Exchangeable1d,
    GenzBretz,
    Naive,
    MfImportance,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Exchangeable1d => "exch1d",
            Self::GenzBretz => "gb",
            Self::Naive => "naive",
            Self::MfImportance => "mf",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "exch1d" | "exchangeable_1d" | "exact" => Ok(Self::Exchangeable1d),
            "gb" | "genz_bretz" | "genz-bretz" => Ok(Self::GenzBretz),
            "naive" => Ok(Self::Naive),
            "mf" | "mf_importance" => Ok(Self::MfImportance),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A probability estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbEstimate {
    pub value: f64,
    pub std_error: f64,
    pub engine: EngineKind,
    pub evaluations: usize,
}
