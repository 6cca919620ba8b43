use rand_distr::{Distribution, StandardNormal};

use super::{EngineKind, ProbEstimate, Rectangle};
use crate::correlation::CholeskyFactor;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Fraction of `m` draws `z = C ε` that land inside the rectangle.
pub fn naive_mc(rect: &Rectangle, chol: &CholeskyFactor, m: usize, seed: u64) -> Result<ProbEstimate> {
    let d = rect.dim();
    if chol.dim() != d {
        return Err(Error::Validation("dimension mismatch between rectangle and factor".into()));
    }
    if m < 100 {
        return Err(Error::Validation(format!("naive simulation needs m >= 100, got {m}")));
    }
    let mut rng = substream(seed, 0);
    let mut eps = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..m {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let inside = (0..d).all(|j| {
            let z: f64 = chol.matrix().row(j)[..=j].iter().zip(&eps).map(|(c, e)| c * e).sum();
            rect.lower(j) < z && z < rect.upper(j)
        });
        hits += inside as usize;
    }
    let p = hits as f64 / m as f64;
    Ok(ProbEstimate {
        value: p,
        std_error: (p * (1.0 - p) / m as f64).sqrt(),
        engine: EngineKind::Naive,
        evaluations: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::CorrelationStructure;

    #[test]
    fn quadrant_probability() {
        let chol = CorrelationStructure::Exchangeable { rho: 0.0, dim: 2 }.cholesky().unwrap();
        let rect = Rectangle::from_limits(&[f64::NEG_INFINITY; 2], &[0.0, 0.0]).unwrap();
        let p = naive_mc(&rect, &chol, 200_000, 5).unwrap();
        assert!((p.value - 0.25).abs() < 4.0 * p.std_error, "{p:?}");
    }

    #[test]
    fn requires_enough_draws() {
        let chol = CorrelationStructure::Exchangeable { rho: 0.0, dim: 2 }.cholesky().unwrap();
        assert!(naive_mc(&Rectangle::symmetric(1.0, 2), &chol, 10, 0).is_err());
    }
}
