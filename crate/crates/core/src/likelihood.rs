//! Objective functions for the discretized multivariate normal model.
//!
//! * [`sl_loglik`]: the log-likelihood `Σ_i log P(Z_i ∈ rectangle_i)`, with
//!   each rectangle probability from an exact or a quasi-Monte Carlo engine.
//! * [`hr_surrogate_loglik`]: the jittered surrogate, which replaces each
//!   rectangle probability by the copula density at one jittered point.
//! * [`mf_loglik`]: the jittered simulated likelihood, an average of the
//!   jittered joint densities over `m` jitter draws.
//!
//! All three are deterministic functions of the parameters once the uniforms
//! (lattice shifts or jitters) are fixed, which is what makes them
//! optimizable.

use rayon::prelude::*;

use crate::correlation::{CholeskyFactor, CorrelationStructure, StructureKind};
use crate::error::{Error, Result};
use crate::marginals::{Cell, MarginalFamily, MarginalParams};
use crate::rectprob::{exchangeable_1d, GenzBretz, Rectangle};
use crate::rng::{open_uniform, substream};
use crate::special::{log_mean_exp, norm_quantile_clamped, norm_quantile_extended, Interval};

/// Lower clamp for every log-probability term (`exp(-746)` underflows).
pub const LOG_FLOOR: f64 = -746.0;

/// One cluster: responses `y`, covariate rows `x` (intercept included) and
/// optional observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub y: Vec<i64>,
    pub x: Vec<Vec<f64>>,
    pub times: Option<Vec<f64>>,
}

impl Cluster {
    pub fn new(y: Vec<i64>, x: Vec<Vec<f64>>, times: Option<Vec<f64>>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Validation("cluster has no observations".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Validation(format!(
                "cluster has {} responses but {} covariate rows",
                y.len(),
                x.len()
            )));
        }
        let p = x[0].len();
        if x.iter().any(|row| row.len() != p) {
            return Err(Error::Validation("covariate rows differ in length".into()));
        }
        if let Some(t) = &times {
            if t.len() != y.len() {
                return Err(Error::Validation("times length differs from responses".into()));
            }
            if t.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Validation("times must be strictly increasing".into()));
            }
        }
        Ok(Self { y, x, times })
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x[0].len()
    }
}

/// `n` independent clusters sharing one covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clusters: Vec<Cluster>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(clusters: Vec<Cluster>, covariate_names: Vec<String>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Validation("dataset has no clusters".into()));
        }
        let p = covariate_names.len();
        if let Some(c) = clusters.iter().find(|c| c.n_covariates() != p) {
            return Err(Error::Validation(format!(
                "cluster with {} covariates, expected {p}",
                c.n_covariates()
            )));
        }
        Ok(Self { clusters, covariate_names })
    }

    /// Names `intercept, x1, …`.
    pub fn default_names(p: usize) -> Vec<String> {
        std::iter::once("intercept".to_string()).chain((1..p).map(|k| format!("x{k}"))).collect()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn d_max(&self) -> usize {
        self.clusters.iter().map(Cluster::dim).max().unwrap_or(0)
    }

    pub fn n_observations(&self) -> usize {
        self.clusters.iter().map(Cluster::dim).sum()
    }

    pub fn has_times(&self) -> bool {
        self.clusters.iter().all(|c| c.times.is_some())
    }
}

/// Marginal family plus correlation structure. Marginal parameters are
/// common to all margins of all clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: MarginalFamily,
    pub structure: StructureKind,
}

impl ModelSpec {
    pub fn new(family: MarginalFamily, structure: StructureKind) -> Self {
        Self { family, structure }
    }

    /// Checks supports, covariate widths and that the structure can be
    /// built for every cluster.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if self.structure == StructureKind::Unstructured {
            return Err(Error::UnsupportedStructure(
                "models are fitted with a scalar correlation parameter".into(),
            ));
        }
        if self.structure == StructureKind::Markov && !data.has_times() {
            return Err(Error::Validation("Markov structure needs observation times".into()));
        }
        for c in data.clusters() {
            for &y in &c.y {
                self.family.check_support(y)?;
            }
        }
        Ok(())
    }

    /// Correlation structure of one cluster at `rho`.
    pub fn correlation(&self, cluster: &Cluster, rho: f64) -> Result<CorrelationStructure> {
        CorrelationStructure::scalar(self.structure, rho, cluster.dim(), cluster.times.as_deref())
    }
}

/// Parameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub gamma: Option<f64>,
    pub rho: f64,
}

impl Theta {
    pub fn new(beta: Vec<f64>, gamma: Option<f64>, rho: f64) -> Self {
        Self { beta, gamma, rho }
    }

    pub fn marginal(&self) -> Result<MarginalParams> {
        MarginalParams::new(self.beta.clone(), self.gamma)
    }
}

/// Uniform jitters indexed by (draw `k`, cluster `i`, coordinate `j`).
///
/// Draw `k` comes from its own random stream, so the first `m'` draws of a
/// set of size `m > m'` coincide with the set of size `m'`.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterSet {
    v: Vec<f64>,
    m: usize,
    n: usize,
    d_max: usize,
    seed: u64,
}

impl JitterSet {
    pub fn generate(m: usize, n: usize, d_max: usize, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 || d_max == 0 {
            return Err(Error::Validation("jitter set needs m, n, d >= 1".into()));
        }
        let mut v = Vec::with_capacity(m * n * d_max);
        for k in 0..m {
            let mut rng = substream(seed, k as u64);
            v.extend((0..n * d_max).map(|_| open_uniform(&mut rng)));
        }
        Ok(Self { v, m, n, d_max, seed })
    }

    pub fn for_data(m: usize, data: &Dataset, seed: u64) -> Result<Self> {
        Self::generate(m, data.n(), data.d_max(), seed)
    }

    /// Builds a set from explicit values laid out as `[k][i][j]`.
    pub fn from_values(v: Vec<f64>, m: usize, n: usize, d_max: usize) -> Result<Self> {
        if v.len() != m * n * d_max {
            return Err(Error::Validation("jitter tensor has the wrong size".into()));
        }
        if v.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(Error::Validation("jitters must lie in (0, 1)".into()));
        }
        Ok(Self { v, m, n, d_max, seed: 0 })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Jitters of draw `k` for cluster `i` (length `d_max`).
    #[inline]
    pub fn get(&self, k: usize, i: usize) -> &[f64] {
        let start = (k * self.n + i) * self.d_max;
        &self.v[start..start + self.d_max]
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if self.n != data.n() || self.d_max < data.d_max() {
            return Err(Error::Validation(format!(
                "jitters sized for n = {}, d = {} but data has n = {}, d = {}",
                self.n,
                self.d_max,
                data.n(),
                data.d_max()
            )));
        }
        Ok(())
    }
}

/// Latent box of one cluster, or a flag that some margin has zero mass.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentRectangle {
    Box(Rectangle),
    ZeroMass,
}

fn cells(cluster: &Cluster, family: MarginalFamily, params: &MarginalParams) -> Vec<Cell> {
    cluster
        .y
        .iter()
        .zip(&cluster.x)
        .map(|(&y, x)| family.margin(params, x).cell(y))
        .collect()
}

fn bounds(cell: &Cell) -> (f64, f64) {
    (norm_quantile_extended(cell.cdf_below), norm_quantile_extended(cell.cdf_at))
}

/// `(Φ⁻¹[F(y_j - 1)], Φ⁻¹[F(y_j)])` for every coordinate.
pub fn latent_rectangle(cluster: &Cluster, family: MarginalFamily, params: &MarginalParams) -> Result<LatentRectangle> {
    for &y in &cluster.y {
        family.check_support(y)?;
    }
    let mut iv = Vec::with_capacity(cluster.dim());
    for cell in cells(cluster, family, params) {
        let (lo, hi) = bounds(&cell);
        if cell.pmf <= 0.0 || !(lo < hi) {
            return Ok(LatentRectangle::ZeroMass);
        }
        iv.push(Interval { lower: lo, upper: hi });
    }
    Ok(LatentRectangle::Box(Rectangle::new(iv)?))
}

/// Rectangle probability engine for the likelihood.
#[derive(Debug, Clone)]
pub enum ProbEngine {
    /// Exact one-dimensional reduction; exchangeable structure with `ρ >= 0`.
    Exchangeable1d,
    /// Randomized lattice rule, reused for every rectangle.
    GenzBretz(GenzBretz),
}

impl ProbEngine {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exchangeable1d => "exch1d",
            Self::GenzBretz(_) => "gb",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Exchangeable1d => None,
            Self::GenzBretz(gb) => Some(gb.config().seed),
        }
    }

    fn check(&self, spec: &ModelSpec, data: &Dataset) -> Result<()> {
        match self {
            Self::Exchangeable1d if spec.structure != StructureKind::Exchangeable => {
                Err(Error::UnsupportedStructure(format!(
                    "the one-dimensional engine needs exchangeable dependence, got {}",
                    spec.structure
                )))
            }
            Self::GenzBretz(gb) if gb.max_dim() < data.d_max() => Err(Error::Validation(format!(
                "lattice rule built for d <= {}, data has d = {}",
                gb.max_dim(),
                data.d_max()
            ))),
            _ => Ok(()),
        }
    }
}

/// `h(y_i; x_i)`: the rectangle probability of one cluster. Exactly the
/// marginal pmf when `d = 1`. Returns 0 for a zero-mass rectangle.
pub fn joint_pmf(cluster: &Cluster, spec: &ModelSpec, theta: &Theta, engine: &ProbEngine) -> Result<f64> {
    let params = theta.marginal()?;
    for &y in &cluster.y {
        spec.family.check_support(y)?;
    }
    if matches!(engine, ProbEngine::Exchangeable1d) && spec.structure != StructureKind::Exchangeable {
        return Err(Error::UnsupportedStructure("the one-dimensional engine needs exchangeable dependence".into()));
    }
    let chol = spec.correlation(cluster, theta.rho)?.cholesky()?;
    cluster_pmf(cluster, spec, &params, theta.rho, engine, &chol)
}

/// Cholesky factors of the distinct cluster correlation matrices, with the
/// index of each cluster's factor. Clusters with the same size (and times,
/// for Markov dependence) share a factor.
struct FactorCache {
    factors: Vec<CholeskyFactor>,
    index: Vec<usize>,
}

impl FactorCache {
    fn new(data: &Dataset, spec: &ModelSpec, rho: f64) -> Result<Self> {
        let mut keys: Vec<(usize, Option<&[f64]>)> = Vec::new();
        let mut factors = Vec::new();
        let mut index = Vec::with_capacity(data.n());
        for c in data.clusters() {
            let times = if spec.structure == StructureKind::Markov { c.times.as_deref() } else { None };
            let key = (c.dim(), times);
            let pos = match keys.iter().position(|k| *k == key) {
                Some(pos) => pos,
                None => {
                    factors.push(spec.correlation(c, rho)?.cholesky()?);
                    keys.push(key);
                    keys.len() - 1
                }
            };
            index.push(pos);
        }
        Ok(Self { factors, index })
    }

    fn get(&self, i: usize) -> &CholeskyFactor {
        &self.factors[self.index[i]]
    }
}

fn cluster_pmf(
    cluster: &Cluster,
    spec: &ModelSpec,
    params: &MarginalParams,
    rho: f64,
    engine: &ProbEngine,
    chol: &CholeskyFactor,
) -> Result<f64> {
    if cluster.dim() == 1 {
        return Ok(spec.family.margin(params, &cluster.x[0]).pmf(cluster.y[0]));
    }
    let rect = match latent_rectangle(cluster, spec.family, params)? {
        LatentRectangle::Box(r) => r,
        LatentRectangle::ZeroMass => return Ok(0.0),
    };
    Ok(match engine {
        ProbEngine::Exchangeable1d => exchangeable_1d(&rect, rho)?.value,
        ProbEngine::GenzBretz(gb) => gb.probability(&rect, chol)?.value,
    })
}

/// A log-likelihood value and the number of clusters held at [`LOG_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub floored: usize,
}

fn floor_log(p: f64) -> (f64, bool) {
    let l = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    if l < LOG_FLOOR {
        (LOG_FLOOR, true)
    } else {
        (l, false)
    }
}

// Ordered reduction: collect per-cluster terms, then add them left to right.
fn ordered_sum(terms: &[(f64, bool)]) -> LogLik {
    let mut value = 0.0;
    let mut floored = 0;
    for &(t, f) in terms {
        value += t;
        floored += f as usize;
    }
    LogLik { value, floored }
}

/// `Σ_i log h(y_i; x_i)`, each term floored at [`LOG_FLOOR`].
pub fn sl_loglik(data: &Dataset, spec: &ModelSpec, theta: &Theta, engine: &ProbEngine) -> Result<LogLik> {
    engine.check(spec, data)?;
    spec.check_data(data)?;
    let params = theta.marginal()?;
    let cache = FactorCache::new(data, spec, theta.rho)?;
    let terms = data
        .clusters()
        .par_iter()
        .enumerate()
        .map(|(i, c)| cluster_pmf(c, spec, &params, theta.rho, engine, cache.get(i)).map(floor_log))
        .collect::<Result<Vec<_>>>()?;
    Ok(ordered_sum(&terms))
}

// Per-cluster pieces shared by the jittered objectives.
struct JitterCluster<'a> {
    cells: Vec<Cell>,
    ln_f: f64,
    chol: Option<&'a CholeskyFactor>,
}

impl<'a> JitterCluster<'a> {
    fn new(cluster: &Cluster, spec: &ModelSpec, params: &MarginalParams, chol: &'a CholeskyFactor) -> Self {
        let cells = cells(cluster, spec.family, params);
        let ln_f = cells.iter().map(|c| floor_log(c.pmf).0).sum();
        Self { cells, ln_f, chol: (cluster.dim() > 1).then_some(chol) }
    }

    // log c(u; R) = -½ log|R| + ½ (qᵀq - qᵀR⁻¹q) at q_j = Φ⁻¹[F(y_j - 1) + v_j f(y_j)].
    fn ln_copula(&self, v: &[f64], q: &mut Vec<f64>, scratch: &mut Vec<f64>) -> f64 {
        let Some(chol) = self.chol else { return 0.0 };
        q.clear();
        q.extend(self.cells.iter().zip(v).map(|(c, &vj)| norm_quantile_clamped(c.cdf_below + vj * c.pmf)));
        let qq: f64 = q.iter().map(|x| x * x).sum();
        -0.5 * chol.ln_det() + 0.5 * (qq - chol.inv_quad_form(q, scratch))
    }
}

fn jitter_clusters<'a>(data: &Dataset, spec: &ModelSpec, theta: &Theta, cache: &'a FactorCache) -> Result<Vec<JitterCluster<'a>>> {
    let params = theta.marginal()?;
    Ok(data.clusters().par_iter().enumerate().map(|(i, c)| JitterCluster::new(c, spec, &params, cache.get(i))).collect())
}

/// Surrogate log-likelihood `Σ_i [log c(u_i; R) + Σ_j log f(y_ij)]` with the
/// jitters of draw `k`.
pub fn hr_surrogate_loglik(data: &Dataset, spec: &ModelSpec, theta: &Theta, jitters: &JitterSet, k: usize) -> Result<f64> {
    jitters.check(data)?;
    if k >= jitters.m() {
        return Err(Error::Validation(format!("jitter draw {k} out of range (m = {})", jitters.m())));
    }
    spec.check_data(data)?;
    let cache = FactorCache::new(data, spec, theta.rho)?;
    let parts = jitter_clusters(data, spec, theta, &cache)?;
    let terms: Vec<f64> = parts
        .par_iter()
        .enumerate()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(q, s), (i, jc)| jc.ln_f + jc.ln_copula(jitters.get(k, i), q, s),
        )
        .collect();
    Ok(terms.iter().sum())
}

/// Jittered simulated log-likelihood:
/// `Σ_ij log f(y_ij) + log m⁻¹ Σ_k Π_i c(u_ik; R_i)`.
///
/// With `per_cluster` the average over draws is taken separately for each
/// cluster, `Σ_i log m⁻¹ Σ_k c(u_ik; R_i)`.
pub fn mf_loglik(data: &Dataset, spec: &ModelSpec, theta: &Theta, jitters: &JitterSet, per_cluster: bool) -> Result<f64> {
    jitters.check(data)?;
    let m = jitters.m();
    spec.check_data(data)?;
    let cache = FactorCache::new(data, spec, theta.rho)?;
    let parts = jitter_clusters(data, spec, theta, &cache)?;
    // row i holds log c(u_ik; R_i) for k = 0..m
    let rows: Vec<Vec<f64>> = parts
        .par_iter()
        .enumerate()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(q, s), (i, jc)| (0..m).map(|k| jc.ln_copula(jitters.get(k, i), q, s)).collect(),
        )
        .collect();
    let ln_f: f64 = parts.iter().map(|p| p.ln_f).sum();
    if per_cluster {
        return Ok(ln_f + rows.iter().map(|r| log_mean_exp(r)).sum::<f64>());
    }
    let mut totals = vec![0.0; m];
    for row in &rows {
        for (t, x) in totals.iter_mut().zip(row) {
            *t += x;
        }
    }
    Ok(ln_f + log_mean_exp(&totals))
}
