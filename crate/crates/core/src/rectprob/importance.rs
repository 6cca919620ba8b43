use super::{EngineKind, ProbEstimate, Rectangle};
use crate::correlation::{cholesky, Matrix};
use crate::error::{Error, Result};
use crate::rng::{open_uniform, substream};
use crate::special::{norm_cdf, norm_quantile_clamped};

/// Importance sampler that draws each `ω_j` uniformly on `(Φ(a_j), Φ(b_j))`
/// and weights `z_j = Φ⁻¹(ω_j)` by `φ_R(z) / Π φ(z_j)` times the box volume.
///
/// The weight `|R|^{-1/2} exp(½ zᵀ(I - R⁻¹)z)` is unbounded, so the mean is
/// reported unclamped and the standard error is the plug-in
/// `sqrt(Var[w] / m)`, which is itself unreliable.
pub fn mf_importance(rect: &Rectangle, r: &Matrix, m: usize, seed: u64) -> Result<ProbEstimate> {
    let d = rect.dim();
    if r.dim() != d {
        return Err(Error::Validation("dimension mismatch between rectangle and R".into()));
    }
    if m < 100 {
        return Err(Error::Validation(format!("importance sampling needs m >= 100, got {m}")));
    }
    let chol = cholesky(r)?;
    let lo: Vec<f64> = (0..d).map(|j| norm_cdf(rect.lower(j))).collect();
    let hi: Vec<f64> = (0..d).map(|j| norm_cdf(rect.upper(j))).collect();
    if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
        return Err(Error::Validation("importance sampler needs Φ(a_j) < Φ(b_j) for every j".into()));
    }
    let ln_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| (b - a).ln()).sum();
    let ln_norm = ln_volume - 0.5 * chol.ln_det();

    let mut rng = substream(seed, 0);
    let mut z = vec![0.0; d];
    let mut scratch = Vec::with_capacity(d);
    // Welford running moments
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..m {
        for j in 0..d {
            let u = open_uniform(&mut rng);
            z[j] = norm_quantile_clamped(lo[j] + u * (hi[j] - lo[j]));
        }
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let quad = chol.inv_quad_form(&z, &mut scratch);
        let w = (ln_norm + 0.5 * (zz - quad)).exp();
        let delta = w - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (w - mean);
    }
    let mf = m as f64;
    let var = m2 / (mf - 1.0);
    Ok(ProbEstimate {
        value: mean,
        std_error: (var / mf).sqrt(),
        engine: EngineKind::MfImportance,
        evaluations: m,
    })
}
