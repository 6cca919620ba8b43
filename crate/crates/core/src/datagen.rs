//! Simulation from the discretized multivariate normal model:
//! `Z ~ N(0, R)`, `U_j = Φ(Z_j)`, `Y_j = F_j⁻¹(U_j)`.

use rand_distr::{Distribution, StandardNormal};

use crate::correlation::CorrelationStructure;
use crate::error::{Error, Result};
use crate::likelihood::{Cluster, Dataset, ModelSpec, Theta};
use crate::marginals::MarginalFamily;
use crate::rng::{open_uniform, substream};
use crate::special::norm_cdf;

/// How covariate rows are drawn. Every row starts with an intercept.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateScheme {
    /// `x_ij ~ U[-1, 1]`, independently for every cluster and coordinate.
    UniformContinuous,
    /// `x_i ∈ {0, 1}` with probability 1/2, the same for all coordinates.
    BinaryClusterConstant,
    /// Columns `treatment, time, treatment × time`, with a cluster-level
    /// Bernoulli(1/2) treatment and the given observation times, which are
    /// also attached to every cluster.
    Longitudinal { times: Vec<f64> },
}

impl CovariateScheme {
    pub fn names(&self) -> Vec<String> {
        match self {
            Self::UniformContinuous | Self::BinaryClusterConstant => Dataset::default_names(2),
            Self::Longitudinal { .. } => ["intercept", "treatment", "time", "treatment_time"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub d: usize,
    pub spec: ModelSpec,
    pub theta: Theta,
    pub covariates: CovariateScheme,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Validation("design needs n >= 1 and d >= 1".into()));
        }
        let p = self.covariates.names().len();
        if self.theta.beta.len() != p {
            return Err(Error::Validation(format!("design has {p} covariates but {} coefficients", self.theta.beta.len())));
        }
        self.theta.marginal()?.check_family(self.spec.family)?;
        if let CovariateScheme::Longitudinal { times } = &self.covariates {
            if times.len() != self.d {
                return Err(Error::Validation("times length differs from d".into()));
            }
        }
        self.structure(None)?.validate()
    }

    fn structure(&self, times: Option<&[f64]>) -> Result<CorrelationStructure> {
        let times = times.or(match &self.covariates {
            CovariateScheme::Longitudinal { times } => Some(times.as_slice()),
            _ => None,
        });
        CorrelationStructure::scalar(self.spec.structure, self.theta.rho, self.d, times)
    }
}

/// Draws `design.n` clusters; cluster `i` uses random stream `i`.
pub fn simulate(design: &SimDesign) -> Result<Dataset> {
    design.validate()?;
    let chol = design.structure(None)?.cholesky()?;
    let params = design.theta.marginal()?;
    let family: MarginalFamily = design.spec.family;
    let d = design.d;
    let mut clusters = Vec::with_capacity(design.n);
    let mut eps = vec![0.0; d];
    for i in 0..design.n {
        let mut rng = substream(design.seed, i as u64);
        let (x, times): (Vec<Vec<f64>>, Option<Vec<f64>>) = match &design.covariates {
            CovariateScheme::UniformContinuous => {
                ((0..d).map(|_| vec![1.0, 2.0 * open_uniform(&mut rng) - 1.0]).collect(), None)
            }
            CovariateScheme::BinaryClusterConstant => {
                let b = (open_uniform(&mut rng) < 0.5) as i32 as f64;
                (vec![vec![1.0, b]; d], None)
            }
            CovariateScheme::Longitudinal { times } => {
                let trt = (open_uniform(&mut rng) < 0.5) as i32 as f64;
                (times.iter().map(|&t| vec![1.0, trt, t, trt * t]).collect(), Some(times.clone()))
            }
        };
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let y: Vec<i64> = (0..d)
            .map(|j| {
                let z: f64 = chol.matrix().row(j)[..=j].iter().zip(&eps).map(|(c, e)| c * e).sum();
                family.margin(&params, &x[j]).quantile(norm_cdf(z))
            })
            .collect();
        clusters.push(Cluster::new(y, x, times)?);
    }
    Dataset::new(clusters, design.covariates.names())
}
