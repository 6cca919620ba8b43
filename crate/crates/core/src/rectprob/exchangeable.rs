use super::quadrature::integrate;
use super::{EngineKind, ProbEstimate, Rectangle};
use crate::error::{Error, Result};
use crate::special::{norm_interval_mass, norm_pdf, Interval};

/// Absolute tolerance of the adaptive quadrature.
pub const EXCH_ABS_TOL: f64 = 1e-8;

const Z_RANGE: f64 = 8.0;
const MAX_SEGMENTS: usize = 400;

/// Rectangle probability under an exchangeable correlation `ρ >= 0`.
///
/// With `Z_j = √ρ W + √(1-ρ) E_j` for independent standard normals, the
/// coordinates are independent given `W`, so
///
/// ```text
/// P = ∫ φ(w) Π_j [Φ((b_j - √ρ w)/√(1-ρ)) - Φ((a_j - √ρ w)/√(1-ρ))] dw.
/// ```
pub fn exchangeable_1d(rect: &Rectangle, rho: f64) -> Result<ProbEstimate> {
    exchangeable_1d_with_tol(rect, rho, EXCH_ABS_TOL)
}

pub fn exchangeable_1d_with_tol(rect: &Rectangle, rho: f64, abs_tol: f64) -> Result<ProbEstimate> {
    if !(rho >= 0.0) {
        return Err(Error::UnsupportedStructure(format!(
            "one-dimensional reduction needs exchangeable rho >= 0, got {rho}"
        )));
    }
    if !(rho < 1.0) {
        return Err(Error::Validation(format!("exchangeable rho must be < 1, got {rho}")));
    }
    let exact = |value: f64, evaluations| ProbEstimate {
        value,
        std_error: 0.0,
        engine: EngineKind::Exchangeable1d,
        evaluations,
    };
    if rho == 0.0 || rect.dim() == 1 {
        return Ok(exact(rect.independent_mass(), 0));
    }

    // Repeated intervals (common for discrete data) are evaluated once.
    let mut groups: Vec<(Interval, i32)> = Vec::new();
    for iv in rect.bounds() {
        match groups.iter_mut().find(|(g, _)| g == iv) {
            Some((_, count)) => *count += 1,
            None => groups.push((*iv, 1)),
        }
    }
    if groups.iter().any(|(iv, _)| iv.mass() == 0.0) {
        return Ok(exact(0.0, 0));
    }

    let sr = rho.sqrt();
    let scale = 1.0 / (1.0 - rho).sqrt();
    let integrand = |w: f64| {
        let shift = sr * w;
        let mut prod = norm_pdf(w);
        for (iv, count) in &groups {
            let lo = (iv.lower - shift) * scale;
            let hi = (iv.upper - shift) * scale;
            let m = norm_interval_mass(lo, hi);
            prod *= if *count == 1 { m } else { m.powi(*count) };
            if prod == 0.0 {
                break;
            }
        }
        prod
    };
    let q = integrate(integrand, -Z_RANGE, Z_RANGE, abs_tol, MAX_SEGMENTS);
    Ok(exact(q.value.clamp(0.0, 1.0), q.evaluations))
}
