//! Univariate discrete regression margins.
//!
//! Every family is parametrized by its mean `μ`, tied to covariates through a
//! link `η(μ) = xᵀβ`, plus an optional overdispersion `γ` for the negative
//! binomials:
//!
//! | family | pmf at `y` | variance |
//! |--------|-----------|----------|
//! | Bernoulli | `μ^y (1-μ)^(1-y)` | `μ(1-μ)` |
//! | Poisson | `e^{-μ} μ^y / y!` | `μ` |
//! | NB2 | size `1/γ`, success prob `1/(1+γμ)` | `μ + γμ²` |
//! | NB1 | size `μ/γ`, success prob `1/(1+γ)` | `μ(1+γ)` |
//!
//! Count pmfs and cdfs are produced by one forward recurrence from `y = 0`,
//! so `cdf(y) - cdf(y-1)` reproduces `pmf(y)` to rounding.

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Logit,
    Probit,
    Log,
}

impl Link {
    /// `μ = η⁻¹(eta)`.
    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logit => 1.0 / (1.0 + (-eta).exp()),
            Link::Probit => norm_cdf(eta),
            Link::Log => eta.exp(),
        }
    }

    /// `dμ/dη` at `eta`.
    pub fn dmu_deta(self, eta: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(eta);
                mu * (1.0 - mu)
            }
            Link::Probit => norm_pdf(eta),
            Link::Log => eta.exp(),
        }
    }

    /// `η(μ)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Probit => crate::special::norm_quantile_clamped(mu),
            Link::Log => mu.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginalFamily {
    BernoulliLogit,
    BernoulliProbit,
    PoissonLog,
    Nb1Log,
    Nb2Log,
}

impl MarginalFamily {
    pub const ALL: [MarginalFamily; 5] = [
        MarginalFamily::BernoulliLogit,
        MarginalFamily::BernoulliProbit,
        MarginalFamily::PoissonLog,
        MarginalFamily::Nb1Log,
        MarginalFamily::Nb2Log,
    ];

    /// Parses the command line / config name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "bernoulli-logit" | "logit" | "logistic" => Ok(Self::BernoulliLogit),
            "bernoulli-probit" | "probit" => Ok(Self::BernoulliProbit),
            "poisson" => Ok(Self::PoissonLog),
            "nb1" => Ok(Self::Nb1Log),
            "nb2" => Ok(Self::Nb2Log),
            other => Err(Error::Config(format!("unknown marginal family `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BernoulliLogit => "bernoulli-logit",
            Self::BernoulliProbit => "bernoulli-probit",
            Self::PoissonLog => "poisson",
            Self::Nb1Log => "nb1",
            Self::Nb2Log => "nb2",
        }
    }

    pub fn link(self) -> Link {
        match self {
            Self::BernoulliLogit => Link::Logit,
            Self::BernoulliProbit => Link::Probit,
            Self::PoissonLog | Self::Nb1Log | Self::Nb2Log => Link::Log,
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Self::BernoulliLogit | Self::BernoulliProbit)
    }

    /// Whether the family carries an overdispersion parameter `γ`.
    pub fn has_gamma(self) -> bool {
        matches!(self, Self::Nb1Log | Self::Nb2Log)
    }

    pub fn check_support(self, y: i64) -> Result<()> {
        let ok = if self.is_binary() { y == 0 || y == 1 } else { y >= 0 };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("y = {y} outside the support of {}", self.name())))
        }
    }

    /// Frozen distribution at mean `mu` and overdispersion `gamma`.
    pub fn at_mean(self, mu: f64, gamma: Option<f64>) -> Margin {
        Margin::new(self, mu, gamma.unwrap_or(0.0))
    }

    /// Mean `μ = η⁻¹(xᵀβ)`.
    pub fn mean_from_covariates(self, params: &MarginalParams, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), params.beta.len());
        let eta: f64 = x.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
        self.mean_from_eta(eta)
    }

    #[inline]
    pub fn mean_from_eta(self, eta: f64) -> f64 {
        let mu = self.link().inverse(eta);
        if self.is_binary() {
            mu.clamp(1e-15, 1.0 - 1e-15)
        } else {
            mu.clamp(1e-300, 1e300)
        }
    }

    pub fn margin(self, params: &MarginalParams, x: &[f64]) -> Margin {
        self.at_mean(self.mean_from_covariates(params, x), params.gamma)
    }

    pub fn pmf(self, params: &MarginalParams, y: i64, x: &[f64]) -> Result<f64> {
        self.check_support(y)?;
        Ok(self.margin(params, x).pmf(y))
    }

    pub fn cdf(self, params: &MarginalParams, y: i64, x: &[f64]) -> f64 {
        self.margin(params, x).cdf(y)
    }

    /// Smallest `y*` whose cdf reaches `mass` for every covariate vector in
    /// `x_set`.
    pub fn truncation_point(
        self,
        params: &MarginalParams,
        x_set: &[Vec<f64>],
        mass: f64,
    ) -> Result<i64> {
        if self.is_binary() {
            return Err(Error::Domain("truncation point of a binary margin".into()));
        }
        if !(mass > 0.0 && mass < 1.0) {
            return Err(Error::Domain(format!("mass must lie in (0,1), got {mass}")));
        }
        let mut worst = 0;
        for x in x_set {
            worst = worst.max(self.margin(params, x).quantile(mass));
        }
        Ok(worst)
    }
}

impl std::fmt::Display for MarginalFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regression coefficients (intercept included) and optional overdispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalParams {
    pub beta: Vec<f64>,
    pub gamma: Option<f64>,
}

impl MarginalParams {
    pub fn new(beta: Vec<f64>, gamma: Option<f64>) -> Result<Self> {
        if let Some(g) = gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Validation(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(Self { beta, gamma })
    }

    pub fn check_family(&self, family: MarginalFamily) -> Result<()> {
        match (family.has_gamma(), self.gamma.is_some()) {
            (true, false) => Err(Error::Validation(format!("{family} requires gamma"))),
            (false, true) => Err(Error::Validation(format!("{family} takes no gamma"))),
            _ => Ok(()),
        }
    }
}

/// The probabilities a single observation needs: `F(y-1)`, `F(y)` and `f(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub cdf_below: f64,
    pub cdf_at: f64,
    pub pmf: f64,
}

/// A marginal distribution frozen at one mean.
#[derive(Debug, Clone, Copy)]
pub struct Margin {
    family: MarginalFamily,
    mu: f64,
    gamma: f64,
}

// Recurrence for counts: pmf(0) in log space, then pmf(k+1)/pmf(k) = (k + size)/(k + 1) * q.
struct CountRecurrence {
    ln_p0: f64,
    size: f64,
    q: f64,
    poisson: bool,
}

impl Margin {
    pub fn new(family: MarginalFamily, mu: f64, gamma: f64) -> Self {
        Self { family, mu, gamma }
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mu;
        match self.family {
            MarginalFamily::BernoulliLogit | MarginalFamily::BernoulliProbit => mu * (1.0 - mu),
            MarginalFamily::PoissonLog => mu,
            MarginalFamily::Nb1Log => mu * (1.0 + self.gamma),
            MarginalFamily::Nb2Log => mu + self.gamma * mu * mu,
        }
    }

    fn recurrence(&self) -> CountRecurrence {
        let (mu, g) = (self.mu, self.gamma);
        match self.family {
            MarginalFamily::PoissonLog => {
                CountRecurrence { ln_p0: -mu, size: 0.0, q: mu, poisson: true }
            }
            MarginalFamily::Nb2Log => {
                let gm = g * mu;
                CountRecurrence {
                    ln_p0: -libm::log1p(gm) / g,
                    size: 1.0 / g,
                    q: gm / (1.0 + gm),
                    poisson: false,
                }
            }
            MarginalFamily::Nb1Log => CountRecurrence {
                ln_p0: -(mu / g) * libm::log1p(g),
                size: mu / g,
                q: g / (1.0 + g),
                poisson: false,
            },
            _ => unreachable!("recurrence on a binary margin"),
        }
    }

    /// `(F(y-1), f(y))`, with `F(y-1) = 0` for `y <= 0`.
    fn accumulate(&self, y: i64) -> (f64, f64) {
        if y < 0 {
            return (0.0, 0.0);
        }
        let rec = self.recurrence();
        let ratio = |k: i64| {
            let k = k as f64;
            if rec.poisson {
                rec.q / (k + 1.0)
            } else {
                (k + rec.size) / (k + 1.0) * rec.q
            }
        };
        if rec.ln_p0 > -690.0 {
            let mut p = rec.ln_p0.exp();
            let mut below = 0.0;
            for k in 0..y {
                below += p;
                p *= ratio(k);
            }
            (below, p)
        } else {
            let mut lp = rec.ln_p0;
            let mut below = 0.0;
            for k in 0..y {
                below += lp.exp();
                lp += ratio(k).ln();
            }
            (below, lp.exp())
        }
    }

    pub fn pmf(&self, y: i64) -> f64 {
        if self.family.is_binary() {
            return match y {
                0 => 1.0 - self.mu,
                1 => self.mu,
                _ => 0.0,
            };
        }
        if y < 0 {
            return 0.0;
        }
        self.accumulate(y).1
    }

    pub fn ln_pmf(&self, y: i64) -> f64 {
        self.pmf(y).ln()
    }

    pub fn cdf(&self, y: i64) -> f64 {
        let c = self.cell(y);
        c.cdf_at
    }

    /// `F(y-1)`, `F(y)` and `f(y)` from a single pass.
    pub fn cell(&self, y: i64) -> Cell {
        if y < 0 {
            return Cell { cdf_below: 0.0, cdf_at: 0.0, pmf: 0.0 };
        }
        if self.family.is_binary() {
            return match y {
                0 => Cell { cdf_below: 0.0, cdf_at: 1.0 - self.mu, pmf: 1.0 - self.mu },
                _ => Cell { cdf_below: 1.0 - self.mu, cdf_at: 1.0, pmf: if y == 1 { self.mu } else { 0.0 } },
            };
        }
        let (below, p) = self.accumulate(y);
        Cell { cdf_below: below, cdf_at: (below + p).min(1.0), pmf: p }
    }

    /// Smallest `y` with `F(y) >= u`.
    pub fn quantile(&self, u: f64) -> i64 {
        if self.family.is_binary() {
            return if u <= 1.0 - self.mu { 0 } else { 1 };
        }
        let rec = self.recurrence();
        let mut lp = rec.ln_p0;
        let mut cdf = 0.0;
        let mut y: i64 = 0;
        loop {
            cdf += lp.exp();
            if cdf >= u || y > 100_000_000 {
                return y;
            }
            let k = y as f64;
            let ratio = if rec.poisson { rec.q / (k + 1.0) } else { (k + rec.size) / (k + 1.0) * rec.q };
            lp += ratio.ln();
            // Past the mode with vanishing terms: the remaining mass is lost to rounding.
            if lp < -745.0 && k > self.mu {
                return y + 1;
            }
            y += 1;
        }
    }

    /// Cdf table `F(0), …, F(upto)`; used by the data generator.
    pub fn cdf_table(&self, upto: i64) -> Vec<f64> {
        (0..=upto).map(|y| self.cdf(y)).collect()
    }
}
