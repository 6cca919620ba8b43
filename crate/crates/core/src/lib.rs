//! Gaussian copula regression for clustered and longitudinal discrete
//! responses.
//!
//! Each response follows its own marginal GLM ([`marginals`]); dependence
//! within a cluster comes from a Gaussian copula with a structured
//! correlation matrix ([`correlation`]). The likelihood of a cluster is a
//! multivariate normal rectangle probability ([`rectprob`]), evaluated
//! exactly for exchangeable dependence or by a randomized lattice rule with
//! common random numbers ([`likelihood`], [`estimate`]). Jitter surrogate
//! estimators and their large-sample limits ([`asymptotics`]) are provided
//! for comparison.
//!
//! ```
//! use copreg::rectprob::{exchangeable_1d, Rectangle};
//!
//! let p = exchangeable_1d(&Rectangle::symmetric(1.0, 3), 0.3).unwrap();
//! assert!((p.value - 0.338346).abs() < 1e-6);
//! ```

pub mod asymptotics;
pub mod correlation;
pub mod datagen;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod likelihood;
pub mod marginals;
pub mod rectprob;
pub mod rng;
pub mod special;

pub use error::{Error, Result};

// the guide's snippets run as doc-tests so the book cannot drift
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/margins.md")]
    mod margins {}
    #[doc = include_str!("../../../book/src/rectangles.md")]
    mod rectangles {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    mod surrogates {}
    #[doc = include_str!("../../../book/src/limits.md")]
    mod limits {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
