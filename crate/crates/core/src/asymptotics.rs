//! Large-sample limits of the HR surrogate and simulated likelihood
//! estimators under exchangeable dependence with one binary, cluster-level
//! covariate.
//!
//! With finitely many response patterns `y⁽ᵗ⁾` (counts truncated), `n⁻¹ ℓ`
//! converges to `Σ_t p⁽ᵗ⁾ ℓ(y⁽ᵗ⁾; θ)`, where `p⁽ᵗ⁾` is the model probability
//! of case `t` at the true parameter. Maximizing that sum gives the limiting
//! estimator, and its curvature gives limiting standard errors.
//!
//! Patterns are enumerated as multisets: every objective here is symmetric
//! in the coordinates of `y`, so each sorted `y` carries the number of its
//! distinct orderings.

use rayon::prelude::*;

use crate::correlation::{CorrelationStructure, StructureKind};
use crate::error::{Error, Result};
use crate::estimate::{maximize, rho_bounds, MaximizeOptions, ParamLayout};
use crate::likelihood::{ModelSpec, ProbEngine, Theta, LOG_FLOOR};
use crate::marginals::{Margin, MarginalFamily};
use crate::rectprob::{exchangeable_1d, exchangeable_1d_with_tol, Rectangle};
use crate::special::{norm_quantile_extended, trunc_norm_mean, trunc_norm_second_moment, Interval};

/// Largest number of ordered cases `enumerate_cases` will accept.
pub const MAX_CASES: f64 = 1e7;

/// Total probability the default count truncation must reach.
pub const TRUNCATION_MASS: f64 = 0.999;

/// Reference sample size for limiting standard errors.
pub const DEFAULT_N_REF: usize = 100;

/// Relative accuracy requested from the one-dimensional quadrature; the
/// finite-difference Hessian divides objective noise by `h²`.
const REL_TOL: f64 = 1e-11;

/// What happens to count values above the truncation point `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailRule {
    /// Patterns with a value above `K` are left out; the weights then sum
    /// to slightly less than the design total.
    Drop,
    /// The top category means `y >= K`, so the cases partition the sample
    /// space and the exact likelihood limit is maximized at the truth.
    Lump,
}

/// Values of the cluster-level covariate with the weight of each.
///
/// The case weight is `w(x) · h(y; x)`. With weights summing to one the
/// limit is that of a sample in which `x` is drawn with these
/// probabilities; with unit weights every covariate level counts as a full
/// sample of `h(·; x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDesign {
    levels: Vec<(f64, f64)>,
}

impl CovariateDesign {
    pub fn new(levels: Vec<(f64, f64)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Validation("covariate design needs at least one level".into()));
        }
        if levels.iter().any(|&(x, w)| !x.is_finite() || !(w > 0.0 && w.is_finite())) {
            return Err(Error::Validation("covariate levels need finite values and positive weights".into()));
        }
        Ok(Self { levels })
    }

    /// `x ∈ {0, 1}` with probability 1/2 each.
    pub fn binary() -> Self {
        Self { levels: vec![(0.0, 0.5), (1.0, 0.5)] }
    }

    /// `x ∈ {0, 1}`, each level weighted by 1: the case weights are the
    /// conditional probabilities `h(y; x)` themselves.
    pub fn binary_conditional() -> Self {
        Self { levels: vec![(0.0, 1.0), (1.0, 1.0)] }
    }

    pub fn levels(&self) -> &[(f64, f64)] {
        &self.levels
    }

    pub fn total_weight(&self) -> f64 {
        self.levels.iter().map(|l| l.1).sum()
    }
}

/// One response pattern, stored sorted, with its covariate level.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub y: Vec<i64>,
    /// Index into the design's levels.
    pub level: usize,
    /// Number of distinct orderings of `y`.
    pub multiplicity: u64,
    /// `h(y; x)` at the true parameter.
    pub prob: f64,
    /// Level weight times `h(y; x)` times `multiplicity`.
    pub weight: f64,
}

/// The cases of the limiting objectives, with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEnumeration {
    family: MarginalFamily,
    d: usize,
    truth: Theta,
    design: CovariateDesign,
    max_y: i64,
    tail: TailRule,
    ordered: u64,
    cases: Vec<Case>,
}

impl CaseEnumeration {
    pub fn family(&self) -> MarginalFamily {
        self.family
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn truth(&self) -> &Theta {
        &self.truth
    }

    pub fn design(&self) -> &CovariateDesign {
        &self.design
    }

    /// Largest response value enumerated (1 for binary margins).
    pub fn max_y(&self) -> i64 {
        self.max_y
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    /// Number of ordered cases `T`, over all covariate levels.
    pub fn ordered_count(&self) -> u64 {
        self.ordered
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn total_weight(&self) -> f64 {
        self.cases.iter().map(|c| c.weight).sum()
    }

    /// Probability lost to truncation, on the design's weight scale.
    pub fn missing_mass(&self) -> f64 {
        (self.design.total_weight() - self.total_weight()).max(0.0)
    }

    fn covariates(&self, level: usize) -> [f64; 2] {
        [1.0, self.design.levels[level].0]
    }

    fn layout(&self, rho: (f64, f64)) -> ParamLayout {
        ParamLayout::with_bounds(self.family, &limit_names(), Some(rho))
    }
}

fn limit_names() -> Vec<String> {
    vec!["beta0".into(), "beta1".into()]
}

fn multisets(d: usize, max_y: i64) -> Vec<Vec<i64>> {
    fn rec(prefix: &mut Vec<i64>, from: i64, left: usize, max_y: i64, out: &mut Vec<Vec<i64>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for v in from..=max_y {
            prefix.push(v);
            rec(prefix, v, left - 1, max_y, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(d), 0, d, max_y, &mut out);
    out
}

// d! / Π (count of each value)!, for sorted y
fn orderings(y: &[i64]) -> u64 {
    let mut m: u64 = 1;
    let mut run = 0u64;
    for (i, v) in y.iter().enumerate() {
        run = if i > 0 && y[i - 1] == *v { run + 1 } else { 1 };
        // multiply by (i+1) / run, exact at each step
        m = m * (i as u64 + 1) / run;
    }
    m
}

/// Latent interval and log probability of response `y`, or `None` when it
/// has no mass. With `top` set, `y` stands for every value `>= y`.
fn latent_cell(margin: &Margin, y: i64, top: bool) -> Option<(Interval, f64)> {
    let cell = margin.cell(y);
    let lo = norm_quantile_extended(cell.cdf_below);
    let (hi, ln_f) = if top {
        (f64::INFINITY, (-cell.cdf_below).ln_1p())
    } else {
        (norm_quantile_extended(cell.cdf_at), margin.ln_pmf(y))
    };
    (ln_f > f64::NEG_INFINITY && lo < hi).then_some((Interval { lower: lo, upper: hi }, ln_f))
}

/// Exact rectangle probability to relative accuracy [`REL_TOL`], given a
/// rough size `scale` (computed first when absent).
fn exact_prob(rect: &Rectangle, rho: f64, scale: Option<f64>) -> Result<f64> {
    let scale = match scale {
        Some(s) => s,
        None => exchangeable_1d(rect, rho)?.value,
    };
    if scale <= 0.0 {
        return exchangeable_1d(rect, rho).map(|p| p.value);
    }
    Ok(exchangeable_1d_with_tol(rect, rho, (scale * REL_TOL).max(1e-300))?.value)
}

/// Enumerates the response patterns of clusters of size `d`.
///
/// Counts are truncated at `truncation`, or, when absent, at the smallest
/// point whose cdf reaches [`TRUNCATION_MASS`] under every covariate level.
/// Patterns beyond it are dropped and the weights are not renormalized, so
/// they sum to the design's total weight less the truncated mass. Patterns
/// with zero probability are dropped too.
pub fn enumerate_cases(
    spec: &ModelSpec,
    truth: &Theta,
    d: usize,
    design: &CovariateDesign,
    truncation: Option<i64>,
) -> Result<CaseEnumeration> {
    enumerate_cases_with_tail(spec, truth, d, design, truncation, TailRule::Drop)
}

/// [`enumerate_cases`] with an explicit rule for the counts above the
/// truncation point. Binary margins ignore the rule.
pub fn enumerate_cases_with_tail(
    spec: &ModelSpec,
    truth: &Theta,
    d: usize,
    design: &CovariateDesign,
    truncation: Option<i64>,
    tail: TailRule,
) -> Result<CaseEnumeration> {
    if spec.structure != StructureKind::Exchangeable {
        return Err(Error::UnsupportedStructure("limits are computed for exchangeable dependence only".into()));
    }
    if d < 2 {
        return Err(Error::Validation("limits need clusters of size d >= 2".into()));
    }
    if !(truth.rho >= 0.0 && truth.rho < 1.0) {
        return Err(Error::Validation(format!("true rho must lie in [0, 1), got {}", truth.rho)));
    }
    if truth.beta.len() != 2 {
        return Err(Error::Validation("limits use an intercept and one covariate".into()));
    }
    let params = truth.marginal()?;
    params.check_family(spec.family)?;
    let max_y = if spec.family.is_binary() {
        1
    } else {
        match truncation {
            Some(k) if k >= 0 => k,
            Some(k) => return Err(Error::Validation(format!("truncation point must be >= 0, got {k}"))),
            None => {
                let xs: Vec<Vec<f64>> = design.levels.iter().map(|l| vec![1.0, l.0]).collect();
                spec.family.truncation_point(&params, &xs, TRUNCATION_MASS)?
            }
        }
    };
    let ordered = ((max_y + 1) as f64).powi(d as i32) * design.levels.len() as f64;
    if ordered > MAX_CASES {
        return Err(Error::Validation(format!(
            "{ordered:.3e} cases exceed the limit of {MAX_CASES:.0e}; lower d or the truncation point"
        )));
    }
    let tail = if spec.family.is_binary() { TailRule::Drop } else { tail };
    let lump = tail == TailRule::Lump;
    let patterns = multisets(d, max_y);
    let jobs: Vec<(usize, &Vec<i64>)> =
        (0..design.levels.len()).flat_map(|l| patterns.iter().map(move |y| (l, y))).collect();
    let weighed: Vec<Option<Case>> = jobs
        .par_iter()
        .map(|&(level, y)| -> Result<Option<Case>> {
            let (x, w) = design.levels[level];
            let margin = spec.family.margin(&params, &[1.0, x]);
            let cells = y.iter().map(|&v| latent_cell(&margin, v, lump && v == max_y));
            let Some(bounds) = cells.map(|c| c.map(|c| c.0)).collect::<Option<Vec<_>>>() else {
                return Ok(None);
            };
            let prob = exact_prob(&Rectangle::new(bounds)?, truth.rho, None)?;
            let multiplicity = orderings(y);
            let weight = w * prob * multiplicity as f64;
            Ok((weight > 0.0).then(|| Case { y: y.clone(), level, multiplicity, prob, weight }))
        })
        .collect::<Result<_>>()?;
    Ok(CaseEnumeration {
        family: spec.family,
        d,
        truth: truth.clone(),
        design: design.clone(),
        max_y,
        tail,
        ordered: ordered as u64,
        cases: weighed.into_iter().flatten().collect(),
    })
}

/// Per covariate level and response value: `log f(y)` and the latent
/// interval, plus its truncated moments when requested.
struct CellTable {
    ln_f: Vec<Vec<f64>>,
    intervals: Vec<Vec<Option<Interval>>>,
    zeta: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
}

impl CellTable {
    fn new(cases: &CaseEnumeration, theta: &Theta, moments: bool) -> Result<Self> {
        let params = theta.marginal()?;
        let levels = cases.design.levels.len();
        let lump = cases.tail == TailRule::Lump;
        let mut t = Self { ln_f: vec![], intervals: vec![], zeta: vec![], xi: vec![] };
        for level in 0..levels {
            let margin = cases.family.margin(&params, &cases.covariates(level));
            let cells: Vec<Option<(Interval, f64)>> =
                (0..=cases.max_y).map(|y| latent_cell(&margin, y, lump && y == cases.max_y)).collect();
            t.ln_f.push(cells.iter().map(|c| c.map_or(f64::NEG_INFINITY, |c| c.1)).collect());
            let iv: Vec<Option<Interval>> = cells.iter().map(|c| c.map(|c| c.0)).collect();
            if moments {
                let (mut z, mut x) = (Vec::with_capacity(iv.len()), Vec::with_capacity(iv.len()));
                for i in &iv {
                    match i {
                        Some(i) => {
                            z.push(trunc_norm_mean(i)?);
                            x.push(trunc_norm_second_moment(i)?);
                        }
                        None => {
                            z.push(f64::NAN);
                            x.push(f64::NAN);
                        }
                    }
                }
                t.zeta.push(z);
                t.xi.push(x);
            }
            t.intervals.push(iv);
        }
        Ok(t)
    }
}

fn check_rho(d: usize, rho: f64) -> Result<()> {
    let lo = -1.0 / (d as f64 - 1.0);
    if !(rho > lo && rho < 1.0) {
        return Err(Error::Validation(format!("exchangeable rho must lie in ({lo}, 1), got {rho}")));
    }
    Ok(())
}

/// Limit of `n⁻¹ ℓ_HR` at `θ`: per case, the log copula density at the
/// jittered point averaged over the jitter, in closed form through the
/// truncated moments `ζ`, `ξ` of each coordinate's latent interval, plus
/// the marginal log pmfs.
pub fn limit_hr_objective(cases: &CaseEnumeration, theta: &Theta) -> Result<f64> {
    let d = cases.d;
    check_rho(d, theta.rho)?;
    let table = CellTable::new(cases, theta, true)?;
    let r = theta.rho;
    let dm1 = d as f64 - 1.0;
    let a = -0.5 * (1.0 + dm1 * r).ln() - 0.5 * dm1 * (1.0 - r).ln();
    let c = r / (2.0 * (1.0 - r) * (1.0 + dm1 * r));
    let terms: Vec<f64> = cases
        .cases
        .par_iter()
        .map(|case| {
            let (ln_f, zeta, xi) = (&table.ln_f[case.level], &table.zeta[case.level], &table.xi[case.level]);
            let (mut sum_f, mut sum_xi, mut sum_z, mut sum_z2) = (0.0, 0.0, 0.0, 0.0);
            for &y in &case.y {
                let y = y as usize;
                sum_f += ln_f[y];
                sum_xi += xi[y];
                sum_z += zeta[y];
                sum_z2 += zeta[y] * zeta[y];
            }
            let cross = 0.5 * (sum_z * sum_z - sum_z2);
            case.weight * (a - c * (dm1 * r * sum_xi - 2.0 * cross) + sum_f)
        })
        .collect();
    finite_sum(terms)
}

/// Limit of `n⁻¹ ℓ` for the likelihood with rectangle probabilities from
/// `engine`: the exact log-likelihood with the one-dimensional engine, the
/// simulated one with a lattice rule.
pub fn limit_loglik(cases: &CaseEnumeration, theta: &Theta, engine: &ProbEngine) -> Result<f64> {
    let d = cases.d;
    check_rho(d, theta.rho)?;
    let table = CellTable::new(cases, theta, false)?;
    let chol = match engine {
        ProbEngine::GenzBretz(gb) => {
            if gb.max_dim() < d {
                return Err(Error::Validation(format!("lattice rule built for d <= {}, cases have d = {d}", gb.max_dim())));
            }
            Some(CorrelationStructure::scalar(StructureKind::Exchangeable, theta.rho, d, None)?.cholesky()?)
        }
        ProbEngine::Exchangeable1d => None,
    };
    let terms: Vec<f64> = cases
        .cases
        .par_iter()
        .map(|case| -> Result<f64> {
            let iv = &table.intervals[case.level];
            let Some(bounds) = case.y.iter().map(|&y| iv[y as usize]).collect::<Option<Vec<_>>>() else {
                return Ok(case.weight * LOG_FLOOR);
            };
            let rect = Rectangle::new(bounds)?;
            let h = match (engine, &chol) {
                (ProbEngine::GenzBretz(gb), Some(ch)) => gb.probability(&rect, ch)?.value,
                _ => exact_prob(&rect, theta.rho, Some(case.prob))?,
            };
            Ok(case.weight * if h > 0.0 { h.ln().max(LOG_FLOOR) } else { LOG_FLOOR })
        })
        .collect::<Result<_>>()?;
    finite_sum(terms)
}

fn finite_sum(terms: Vec<f64>) -> Result<f64> {
    let total: f64 = terms.iter().sum();
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Numerical("limit objective is not finite".into()))
    }
}

/// A limiting estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitResult {
    /// `beta0`, `beta1`, then `gamma` when present, then `rho`.
    pub names: Vec<String>,
    pub theta: Theta,
    pub estimates: Vec<f64>,
    /// Standard errors at the reference sample size, when requested and the
    /// Hessian is negative definite.
    pub std_errors: Option<Vec<f64>>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LimitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == name)?;
        self.std_errors.as_ref().map(|s| s[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    pub maximize: MaximizeOptions,
    /// Starting point; the true parameter when absent.
    pub start: Option<Theta>,
    /// Reference sample size for standard errors; none computed when absent.
    pub n_ref: Option<usize>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            // the limit objectives are smooth and O(1), so tighter than a fit
            maximize: MaximizeOptions { gtol: 1e-9, ftol: 1e-15, ..MaximizeOptions::default() },
            start: None,
            n_ref: Some(DEFAULT_N_REF),
        }
    }
}

fn maximize_limit(
    cases: &CaseEnumeration,
    rho: (f64, f64),
    objective: &(dyn Fn(&Theta) -> Result<f64> + Sync),
    opts: &LimitOptions,
) -> Result<LimitResult> {
    let layout = cases.layout(rho);
    let start = opts.start.clone().unwrap_or_else(|| cases.truth.clone());
    let mut start = start;
    start.rho = layout.interior_rho(start.rho, 1e-3);
    let raw_obj = |raw: &[f64]| objective(&layout.from_raw(raw)).unwrap_or(f64::NEG_INFINITY);
    let max = maximize(&raw_obj, &layout.to_raw(&start)?, &opts.maximize)?;
    let theta = layout.from_raw(&max.x);
    let estimates = layout.natural(&theta);
    let std_errors = match opts.n_ref {
        Some(n) => limiting_se(objective, &layout, &theta, n).ok(),
        None => None,
    };
    Ok(LimitResult {
        names: layout.names().to_vec(),
        theta,
        estimates,
        std_errors,
        objective: max.value,
        converged: max.converged,
        iterations: max.iterations,
    })
}

/// Maximizer of [`limit_hr_objective`]: the HR estimator as `n → ∞`.
pub fn limiting_hrmle(cases: &CaseEnumeration, opts: &LimitOptions) -> Result<LimitResult> {
    let rho = rho_bounds(StructureKind::Exchangeable, cases.d)?;
    maximize_limit(cases, rho, &|t: &Theta| limit_hr_objective(cases, t), opts)
}

/// Maximizer of [`limit_loglik`] with a lattice-rule engine: the simulated
/// likelihood estimator as `n → ∞` at a fixed rule.
pub fn limiting_msle(cases: &CaseEnumeration, engine: &ProbEngine, opts: &LimitOptions) -> Result<LimitResult> {
    if matches!(engine, ProbEngine::Exchangeable1d) {
        return limiting_mle(cases, opts);
    }
    let rho = rho_bounds(StructureKind::Exchangeable, cases.d)?;
    maximize_limit(cases, rho, &|t: &Theta| limit_loglik(cases, t, engine), opts)
}

/// Maximizer of the exact likelihood's limit, with probabilities from the
/// one-dimensional reduction (so `ρ` is kept in `[0, 1)`). It is the true
/// parameter when the cases cover the sample space (see [`TailRule`]);
/// dropped tail mass moves it slightly.
pub fn limiting_mle(cases: &CaseEnumeration, opts: &LimitOptions) -> Result<LimitResult> {
    let rho = (0.0, 1.0 - crate::estimate::RHO_MARGIN);
    maximize_limit(cases, rho, &|t: &Theta| limit_loglik(cases, t, &ProbEngine::Exchangeable1d), opts)
}

/// `√(H_kk / n_ref)` with `H` the negative inverse Hessian of `objective`
/// on the natural parameter scale at `theta`.
pub fn limiting_se(
    objective: &(dyn Fn(&Theta) -> Result<f64> + Sync),
    layout: &ParamLayout,
    theta: &Theta,
    n_ref: usize,
) -> Result<Vec<f64>> {
    if n_ref == 0 {
        return Err(Error::Validation("reference sample size must be positive".into()));
    }
    let f = |v: &[f64]| objective(&layout.from_natural(v)).unwrap_or(f64::NAN);
    let x = layout.natural(theta);
    let h = crate::estimate::hessian(&f, &x, crate::estimate::HESSIAN_STEP);
    if (0..h.dim()).any(|i| (0..h.dim()).any(|j| !h[(i, j)].is_finite())) {
        return Err(Error::Numerical("Hessian of the limit objective has non-finite entries".into()));
    }
    let cov = crate::estimate::negative_inverse(&h).ok_or_else(|| {
        Error::Numerical(format!(
            "Hessian of the limit objective is not negative definite; eigenvalues {:?}",
            h.symmetric_eigenvalues()
        ))
    })?;
    Ok((0..h.dim()).map(|k| (cov[(k, k)] / n_ref as f64).sqrt()).collect())
}
