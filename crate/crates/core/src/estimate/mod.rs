//! Parameter estimation by maximizing one of the objectives in
//! [`crate::likelihood`].
//!
//! The optimizer works on an unconstrained vector: `β` as is, `log γ`, and
//! `ρ` through a logistic map onto the structure's admissible interval.
//! Standard errors come from a central-difference Hessian on that scale,
//! carried back to the natural scale by the delta method.

mod optim;

pub use optim::{gradient, hessian, maximize, negative_inverse, MaximizeOptions, Maximum};

use crate::correlation::{cholesky, Matrix, StructureKind};
use crate::error::{Error, Result};
use crate::likelihood::{
    hr_surrogate_loglik, mf_loglik, sl_loglik, Dataset, JitterSet, ModelSpec, ProbEngine, Theta,
};
use crate::marginals::{Link, MarginalFamily};
use crate::rectprob::{GenzBretz, RqmcConfig};
use crate::special::{norm_quantile_clamped, norm_quantile_extended};

/// Distance kept from the edges of the admissible `ρ` interval.
pub const RHO_MARGIN: f64 = 1e-4;

/// Relative step of the finite-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

/// Admissible open interval used by the `ρ` transform.
pub fn rho_bounds(kind: StructureKind, d: usize) -> Result<(f64, f64)> {
    match kind {
        StructureKind::Exchangeable => {
            let lo = if d >= 2 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
            Ok((lo + RHO_MARGIN, 1.0 - RHO_MARGIN))
        }
        StructureKind::Ar1 => Ok((-1.0 + RHO_MARGIN, 1.0 - RHO_MARGIN)),
        StructureKind::Markov => Ok((RHO_MARGIN, 1.0 - RHO_MARGIN)),
        StructureKind::Unstructured => {
            Err(Error::UnsupportedStructure("no scalar transform for unstructured matrices".into()))
        }
    }
}

/// Map between [`Theta`] and the unconstrained optimization vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    p: usize,
    gamma: bool,
    rho: Option<(f64, f64)>,
    names: Vec<String>,
}

impl ParamLayout {
    /// Layout for `spec` at cluster size `d`; `ρ` is dropped when `d = 1`.
    pub fn new(spec: &ModelSpec, covariate_names: &[String], d: usize) -> Result<Self> {
        let rho = if d >= 2 { Some(rho_bounds(spec.structure, d)?) } else { None };
        Ok(Self::with_bounds(spec.family, covariate_names, rho))
    }

    pub fn with_bounds(family: MarginalFamily, covariate_names: &[String], rho: Option<(f64, f64)>) -> Self {
        let mut names: Vec<String> = covariate_names.to_vec();
        if family.has_gamma() {
            names.push("gamma".into());
        }
        if rho.is_some() {
            names.push("rho".into());
        }
        Self { p: covariate_names.len(), gamma: family.has_gamma(), rho, names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rho_bounds(&self) -> Option<(f64, f64)> {
        self.rho
    }

    /// Natural-scale values in layout order.
    pub fn natural(&self, theta: &Theta) -> Vec<f64> {
        let mut v = theta.beta.clone();
        if self.gamma {
            v.push(theta.gamma.unwrap_or(f64::NAN));
        }
        if self.rho.is_some() {
            v.push(theta.rho);
        }
        v
    }

    pub fn from_natural(&self, v: &[f64]) -> Theta {
        let beta = v[..self.p].to_vec();
        let gamma = self.gamma.then(|| v[self.p]);
        let rho = if self.rho.is_some() { v[self.len() - 1] } else { 0.0 };
        Theta::new(beta, gamma, rho)
    }

    pub fn to_raw(&self, theta: &Theta) -> Result<Vec<f64>> {
        if theta.beta.len() != self.p {
            return Err(Error::Validation(format!("expected {} coefficients, got {}", self.p, theta.beta.len())));
        }
        let mut v = theta.beta.clone();
        if self.gamma {
            let g = theta.gamma.ok_or_else(|| Error::Validation("gamma missing".into()))?;
            if !(g > 0.0) {
                return Err(Error::Validation(format!("gamma must be positive, got {g}")));
            }
            v.push(g.ln());
        }
        if let Some((lo, hi)) = self.rho {
            let r = theta.rho;
            if !(r > lo && r < hi) {
                return Err(Error::Validation(format!("rho {r} outside ({lo}, {hi})")));
            }
            let t = (r - lo) / (hi - lo);
            v.push((t / (1.0 - t)).ln());
        }
        Ok(v)
    }

    pub fn from_raw(&self, raw: &[f64]) -> Theta {
        let beta = raw[..self.p].to_vec();
        let gamma = self.gamma.then(|| raw[self.p].exp());
        let rho = match self.rho {
            Some((lo, hi)) => lo + (hi - lo) / (1.0 + (-raw[self.len() - 1]).exp()),
            None => 0.0,
        };
        Theta::new(beta, gamma, rho)
    }

    /// `d natural / d raw`, coordinate by coordinate.
    pub fn jacobian(&self, raw: &[f64]) -> Vec<f64> {
        let theta = self.from_raw(raw);
        let mut j = vec![1.0; self.p];
        if let Some(g) = theta.gamma {
            j.push(g);
        }
        if let Some((lo, hi)) = self.rho {
            j.push((theta.rho - lo) * (hi - theta.rho) / (hi - lo));
        }
        j
    }

    /// Moves `rho` strictly inside the interval, a fraction `frac` of its
    /// width away from either end.
    pub fn interior_rho(&self, rho: f64, frac: f64) -> f64 {
        match self.rho {
            Some((lo, hi)) => rho.clamp(lo + frac * (hi - lo), hi - frac * (hi - lo)),
            None => 0.0,
        }
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub theta: Theta,
    /// Natural-scale estimates in `names` order.
    pub estimates: Vec<f64>,
    /// Present only when the Hessian is negative definite at the optimum.
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: String,
    pub engine: String,
    pub seed: Option<u64>,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.std_errors.as_ref().map(|s| s[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub maximize: MaximizeOptions,
    /// Starting point; moment-based when absent.
    pub start: Option<Theta>,
    pub std_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { maximize: MaximizeOptions::default(), start: None, std_errors: true }
    }
}

/// Natural-scale standard errors from the raw-scale Hessian at `raw`.
///
/// `Err` carries a diagnostic when the Hessian is not negative definite.
pub fn standard_errors(
    objective: &dyn Fn(&[f64]) -> f64,
    layout: &ParamLayout,
    raw: &[f64],
) -> std::result::Result<Vec<f64>, String> {
    let h = hessian(objective, raw, HESSIAN_STEP);
    if (0..h.dim()).any(|i| (0..h.dim()).any(|j| !h[(i, j)].is_finite())) {
        return Err("Hessian has non-finite entries".into());
    }
    let cov = negative_inverse(&h).ok_or_else(|| "Hessian is not negative definite".to_string())?;
    let jac = layout.jacobian(raw);
    Ok((0..layout.len()).map(|k| jac[k].abs() * cov[(k, k)].sqrt()).collect())
}

/// Maximizes `objective` over the layout's parameter space.
pub fn fit_objective(
    layout: &ParamLayout,
    objective: &(dyn Fn(&Theta) -> Result<f64> + Sync),
    start: &Theta,
    opts: &FitOptions,
) -> Result<FitResult> {
    let raw_objective = |raw: &[f64]| objective(&layout.from_raw(raw)).unwrap_or(f64::NEG_INFINITY);
    let x0 = layout.to_raw(start)?;
    let max = maximize(&raw_objective, &x0, &opts.maximize)?;
    let theta = layout.from_raw(&max.x);
    let mut diagnostics = Vec::new();
    if !max.converged {
        diagnostics.push(format!("optimizer: {}", max.message));
    }
    let std_errors = if opts.std_errors {
        match standard_errors(&raw_objective, layout, &max.x) {
            Ok(se) => Some(se),
            Err(msg) => {
                diagnostics.push(msg);
                None
            }
        }
    } else {
        None
    };
    Ok(FitResult {
        names: layout.names().to_vec(),
        estimates: layout.natural(&theta),
        theta,
        std_errors,
        loglik: max.value,
        iterations: max.iterations,
        converged: max.converged,
        method: String::new(),
        engine: String::new(),
        seed: None,
        diagnostics,
    })
}

/// Independence GLM fit of `β` by Fisher scoring (iteratively reweighted
/// least squares). Negative binomial margins use the Poisson working
/// variance, which has the same mean estimating equation.
pub fn glm_fit(data: &Dataset, family: MarginalFamily) -> Result<Vec<f64>> {
    let p = data.n_covariates();
    let obs: Vec<(&[f64], f64)> = data
        .clusters()
        .iter()
        .flat_map(|c| c.x.iter().zip(&c.y).map(|(x, &y)| (x.as_slice(), y as f64)))
        .collect();
    let link = family.link();
    let ybar = obs.iter().map(|o| o.1).sum::<f64>() / obs.len() as f64;
    let mut beta = vec![0.0; p];
    beta[0] = match link {
        Link::Log => ybar.max(1e-3).ln(),
        Link::Logit => {
            let m = ybar.clamp(0.01, 0.99);
            (m / (1.0 - m)).ln()
        }
        Link::Probit => norm_quantile_clamped(ybar.clamp(0.01, 0.99)),
    };
    for _ in 0..100 {
        let mut xtwx = Matrix::zeros(p);
        let mut xtwz = vec![0.0; p];
        for &(x, y) in &obs {
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = family.mean_from_eta(eta);
            let dmu = link.dmu_deta(eta).max(1e-300);
            let var = if family.is_binary() { mu * (1.0 - mu) } else { mu };
            let w = dmu * dmu / var.max(1e-300);
            let z = eta + (y - mu) / dmu;
            for a in 0..p {
                xtwz[a] += w * x[a] * z;
                for b in 0..p {
                    xtwx[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        let chol = cholesky(&xtwx).map_err(|_| Error::Numerical("GLM design matrix is singular".into()))?;
        let inv = chol.inverse();
        let next = inv.mul_vec(&xtwz);
        let change = next.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::Numerical("GLM fit diverged (separated data?)".into()));
        }
        if change < 1e-12 {
            return Ok(beta);
        }
    }
    Ok(beta)
}

/// Starting values: independence GLM for `β`, method of moments for `γ`,
/// and the lag-one (or all-pairs, for exchangeable) correlation of normal
/// scores for `ρ`.
pub fn start_values(data: &Dataset, spec: &ModelSpec, layout: &ParamLayout) -> Result<Theta> {
    let beta = glm_fit(data, spec.family)?;
    let poisson = crate::marginals::MarginalParams::new(beta.clone(), None)?;
    let gamma = if spec.family.has_gamma() {
        let (mut num, mut den) = (0.0, 0.0);
        for c in data.clusters() {
            for (x, &y) in c.x.iter().zip(&c.y) {
                let mu = spec.family.mean_from_covariates(&poisson, x);
                num += (y as f64 - mu).powi(2) - mu;
                den += if spec.family == MarginalFamily::Nb2Log { mu * mu } else { mu };
            }
        }
        Some((num / den).clamp(0.05, 20.0))
    } else {
        None
    };
    let theta0 = Theta::new(beta, gamma, 0.0);
    let rho = match layout.rho_bounds() {
        None => 0.0,
        Some(_) => layout.interior_rho(normal_scores_correlation(data, spec, &theta0)?, 0.02),
    };
    Ok(Theta { rho, ..theta0 })
}

fn normal_scores_correlation(data: &Dataset, spec: &ModelSpec, theta: &Theta) -> Result<f64> {
    let params = theta.marginal()?;
    let all_pairs = spec.structure == StructureKind::Exchangeable;
    let (mut sxy, mut sxx, mut syy, mut gaps, mut npairs) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for c in data.clusters() {
        let s: Vec<f64> = c
            .y
            .iter()
            .zip(&c.x)
            .map(|(&y, x)| {
                let cell = spec.family.margin(&params, x).cell(y);
                norm_quantile_extended(0.5 * (cell.cdf_below + cell.cdf_at)).clamp(-8.0, 8.0)
            })
            .collect();
        for j in 0..s.len() {
            for k in j + 1..s.len() {
                if !all_pairs && k != j + 1 {
                    continue;
                }
                sxy += s[j] * s[k];
                sxx += s[j] * s[j];
                syy += s[k] * s[k];
                if let Some(t) = &c.times {
                    gaps += t[k] - t[j];
                }
                npairs += 1;
            }
        }
    }
    if npairs == 0 || sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    let r = sxy / (sxx * syy).sqrt();
    if spec.structure == StructureKind::Markov && r > 0.0 {
        return Ok(r.powf(npairs as f64 / gaps));
    }
    Ok(r)
}

impl ProbEngine {
    /// Lattice rule for objectives that are optimized: coordinate reordering
    /// is switched off so the estimate is a smooth function of the
    /// parameters.
    pub fn for_fitting(cfg: RqmcConfig, max_dim: usize) -> Result<Self> {
        Ok(Self::GenzBretz(GenzBretz::new(RqmcConfig { reorder: false, ..cfg }, max_dim)?))
    }
}

/// Maximum (simulated) likelihood. With the one-dimensional engine this is
/// exact ML and `ρ` is restricted to `[0, 1)`.
pub fn fit_sl(data: &Dataset, spec: &ModelSpec, engine: &ProbEngine, opts: &FitOptions) -> Result<FitResult> {
    spec.check_data(data)?;
    let mut layout = ParamLayout::new(spec, data.covariate_names(), data.d_max())?;
    if matches!(engine, ProbEngine::Exchangeable1d) && layout.rho.is_some() {
        layout.rho = Some((0.0, 1.0 - RHO_MARGIN));
    }
    let start = match &opts.start {
        Some(s) => s.clone(),
        None => start_values(data, spec, &layout)?,
    };
    let start = Theta { rho: layout.interior_rho(start.rho, 1e-3), ..start };
    let objective = |th: &Theta| sl_loglik(data, spec, th, engine).map(|l| l.value);
    let mut fit = fit_objective(&layout, &objective, &start, opts)?;
    let floored = sl_loglik(data, spec, &fit.theta, engine)?.floored;
    if floored > 0 {
        fit.diagnostics.push(format!("{floored} clusters at the log-probability floor"));
    }
    fit.method = if matches!(engine, ProbEngine::Exchangeable1d) { "ML" } else { "SL" }.into();
    fit.engine = engine.name().into();
    fit.seed = engine.seed();
    Ok(fit)
}

/// A surrogate fit: the average over runs and the individual runs.
#[derive(Debug, Clone, PartialEq)]
pub struct HrFit {
    /// Averaged estimates; `std_errors` is the square root of the averaged
    /// per-run variances.
    pub result: FitResult,
    pub runs: Vec<FitResult>,
    pub excluded: usize,
}

/// Maximizes the surrogate for each jitter draw `k = 0..m` and averages the
/// estimates and the per-run Hessian variances. Each run starts from the
/// previous run's optimum.
pub fn fit_hr(data: &Dataset, spec: &ModelSpec, jitters: &JitterSet, opts: &FitOptions) -> Result<HrFit> {
    spec.check_data(data)?;
    let layout = ParamLayout::new(spec, data.covariate_names(), data.d_max())?;
    let mut start = match &opts.start {
        Some(s) => s.clone(),
        None => start_values(data, spec, &layout)?,
    };
    let mut runs = Vec::with_capacity(jitters.m());
    let mut excluded = 0;
    for k in 0..jitters.m() {
        let objective = |th: &Theta| hr_surrogate_loglik(data, spec, th, jitters, k);
        let fit = fit_objective(&layout, &objective, &start, opts)?;
        if fit.converged {
            start = fit.theta.clone();
            runs.push(fit);
        } else {
            excluded += 1;
        }
    }
    if runs.is_empty() {
        return Err(Error::Numerical("no surrogate run converged".into()));
    }
    let r = runs.len() as f64;
    let k = layout.len();
    let estimates: Vec<f64> = (0..k).map(|i| runs.iter().map(|f| f.estimates[i]).sum::<f64>() / r).collect();
    let with_se: Vec<&Vec<f64>> = runs.iter().filter_map(|f| f.std_errors.as_ref()).collect();
    let std_errors = (opts.std_errors && !with_se.is_empty()).then(|| {
        (0..k)
            .map(|i| (with_se.iter().map(|s| s[i] * s[i]).sum::<f64>() / with_se.len() as f64).sqrt())
            .collect()
    });
    let mut diagnostics = Vec::new();
    if excluded > 0 {
        diagnostics.push(format!("{excluded} of {} runs did not converge", jitters.m()));
    }
    let result = FitResult {
        names: layout.names().to_vec(),
        theta: layout.from_natural(&estimates),
        estimates,
        std_errors,
        loglik: runs.iter().map(|f| f.loglik).sum::<f64>() / r,
        iterations: runs.iter().map(|f| f.iterations).sum(),
        converged: excluded == 0,
        method: "HR".into(),
        engine: format!("jitter m={}", jitters.m()),
        seed: Some(jitters.seed()),
        diagnostics,
    };
    Ok(HrFit { result, runs, excluded })
}

/// Maximizes the jittered simulated likelihood over all `m` draws at once.
pub fn fit_mf(data: &Dataset, spec: &ModelSpec, jitters: &JitterSet, per_cluster: bool, opts: &FitOptions) -> Result<FitResult> {
    spec.check_data(data)?;
    let layout = ParamLayout::new(spec, data.covariate_names(), data.d_max())?;
    let start = match &opts.start {
        Some(s) => s.clone(),
        None => start_values(data, spec, &layout)?,
    };
    let objective = |th: &Theta| mf_loglik(data, spec, th, jitters, per_cluster);
    let mut fit = fit_objective(&layout, &objective, &start, opts)?;
    fit.method = "MF".into();
    fit.engine = format!("jitter m={}{}", jitters.m(), if per_cluster { " per-cluster" } else { "" });
    fit.seed = Some(jitters.seed());
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::Cluster;

    fn layout(kind: StructureKind, family: MarginalFamily, d: usize) -> ParamLayout {
        ParamLayout::new(&ModelSpec::new(family, kind), &Dataset::default_names(2), d).unwrap()
    }

    #[test]
    fn transform_roundtrip() {
        let l = layout(StructureKind::Exchangeable, MarginalFamily::Nb2Log, 5);
        let th = Theta::new(vec![-0.5, 0.5], Some(2.0), -0.2);
        let back = l.from_raw(&l.to_raw(&th).unwrap());
        assert!((back.gamma.unwrap() - 2.0).abs() < 1e-12);
        assert!((back.rho + 0.2).abs() < 1e-12);
        assert_eq!(l.names(), ["intercept", "x1", "gamma", "rho"]);
    }

    #[test]
    fn rho_bounds_by_structure() {
        assert_eq!(rho_bounds(StructureKind::Exchangeable, 5).unwrap(), (-0.25 + 1e-4, 1.0 - 1e-4));
        assert_eq!(rho_bounds(StructureKind::Markov, 5).unwrap(), (1e-4, 1.0 - 1e-4));
        let l = layout(StructureKind::Ar1, MarginalFamily::PoissonLog, 3);
        assert!(l.to_raw(&Theta::new(vec![0.0, 0.0], None, 1.0)).is_err());
    }

    #[test]
    fn single_coordinate_drops_rho() {
        let l = layout(StructureKind::Exchangeable, MarginalFamily::BernoulliLogit, 1);
        assert_eq!(l.names(), ["intercept", "x1"]);
    }

    #[test]
    fn glm_on_saturated_binary_design() {
        // two groups: x = 0 with 3/10 successes, x = 1 with 6/10
        let mut clusters = Vec::new();
        for (x, succ) in [(0.0, 3), (1.0, 6)] {
            for i in 0..10 {
                clusters.push(Cluster::new(vec![(i < succ) as i64], vec![vec![1.0, x]], None).unwrap());
            }
        }
        let data = Dataset::new(clusters, Dataset::default_names(2)).unwrap();
        let b = glm_fit(&data, MarginalFamily::BernoulliLogit).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert!((b[0] - logit(0.3)).abs() < 1e-10);
        assert!((b[1] - (logit(0.6) - logit(0.3))).abs() < 1e-10);
    }
}
