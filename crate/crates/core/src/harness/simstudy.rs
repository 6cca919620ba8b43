//! Repeated-sampling comparison of the estimators, and the jitter
//! variability experiment on one fixed dataset.

use rayon::prelude::*;

use super::{family, fmt, rqmc, seed, stamp, structure, Config, Table};
use crate::correlation::StructureKind;
use crate::datagen::{simulate, CovariateScheme, SimDesign};
use crate::error::{Error, Result};
use crate::estimate::{fit_hr, fit_mf, fit_sl, FitOptions, FitResult};
use crate::likelihood::{Dataset, JitterSet, ModelSpec, ProbEngine, Theta};
use crate::marginals::MarginalFamily;
use crate::rng::child_seed;

const KEYS: &[&str] = &[
    "mode",
    "family",
    "structure",
    "d",
    "n",
    "beta0",
    "beta1",
    "gamma",
    "rho",
    "covariates",
    "replications",
    "methods",
    "m",
    "jitter_sets",
    "mf_per_cluster",
    "std_errors",
    "lattice_size",
    "randomizations",
    "lattice_rule",
    "seed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ml,
    Sl,
    Hr,
    Mf,
}

impl Method {
    pub fn from_name(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Self::Ml),
            "sl" => Ok(Self::Sl),
            "hr" => Ok(Self::Hr),
            "mf" => Ok(Self::Mf),
            other => Err(Error::Config(format!("unknown method `{other}`; use ml, sl, hr or mf"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ml => "ML",
            Self::Sl => "SL",
            Self::Hr => "HR",
            Self::Mf => "MF",
        }
    }

    fn jittered(self) -> bool {
        matches!(self, Self::Hr | Self::Mf)
    }
}

/// Everything a study needs besides the seed.
struct Study {
    design: SimDesign,
    methods: Vec<Method>,
    ms: Vec<usize>,
    engine: ProbEngine,
    per_cluster: bool,
    opts: FitOptions,
}

impl Study {
    fn from_config(cfg: &Config, seed: u64) -> Result<Self> {
        let family = family(cfg, MarginalFamily::BernoulliLogit)?;
        let structure = structure(cfg, StructureKind::Exchangeable)?;
        let d: usize = cfg.value_or("d", 2)?;
        let gamma = family.has_gamma().then(|| cfg.value_or("gamma", 0.5)).transpose()?;
        let theta = Theta::new(vec![cfg.value_or("beta0", -0.5)?, cfg.value_or("beta1", 0.5)?], gamma, cfg.value_or("rho", 0.5)?);
        let covariates = match cfg.get("covariates").unwrap_or("uniform") {
            "uniform" => CovariateScheme::UniformContinuous,
            "binary" => CovariateScheme::BinaryClusterConstant,
            other => return Err(Error::Config(format!("`covariates` must be uniform or binary, got `{other}`"))),
        };
        let design = SimDesign {
            n: cfg.value_or("n", 100)?,
            d,
            spec: ModelSpec::new(family, structure),
            theta,
            covariates,
            seed,
        };
        design.validate().map_err(|e| Error::Config(format!("invalid design: {e}")))?;
        let methods: Vec<Method> = cfg
            .list_or::<String>("methods", &["ml".into(), "hr".into()])?
            .iter()
            .map(|m| Method::from_name(m))
            .collect::<Result<_>>()?;
        let exchangeable = structure == StructureKind::Exchangeable || (structure == StructureKind::Ar1 && d <= 2);
        if methods.contains(&Method::Ml) && !exchangeable {
            return Err(Error::Config("exact ML needs exchangeable dependence (or d = 2); use sl".into()));
        }
        let ms: Vec<usize> = cfg.list_or("m", &[100])?;
        if ms.contains(&0) {
            return Err(Error::Config("jitter counts must be positive".into()));
        }
        let engine = ProbEngine::for_fitting(rqmc(cfg, child_seed(seed, u64::MAX), 127, 10)?, d)?;
        let opts = FitOptions { std_errors: cfg.bool_or("std_errors", true)?, ..FitOptions::default() };
        Ok(Self { design, methods, ms, engine, per_cluster: cfg.bool_or("mf_per_cluster", false)?, opts })
    }

    fn names(&self) -> Vec<String> {
        let mut v = self.design.covariates.names();
        if self.design.spec.family.has_gamma() {
            v.push("gamma".into());
        }
        v.push("rho".into());
        v
    }

    fn truth(&self) -> Vec<f64> {
        let t = &self.design.theta;
        let mut v = t.beta.clone();
        v.extend(t.gamma);
        v.push(t.rho);
        v
    }

    fn data(&self, r: u64) -> Result<Dataset> {
        simulate(&SimDesign { seed: child_seed(self.design.seed, 2 * r), ..self.design.clone() })
    }

    /// Fit of one method on one dataset. Jitter sets are indexed by `set`
    /// and shared between HR and MF with the same `m`.
    fn fit(&self, data: &Dataset, method: Method, m: usize, r: u64, set: u64) -> Result<FitResult> {
        let spec = &self.design.spec;
        let jitters = || JitterSet::for_data(m, data, child_seed(child_seed(self.design.seed, 2 * r + 1), set));
        // exact ML: the one-dimensional engine, or a bivariate AR(1) which is exchangeable
        let ml_spec = ModelSpec::new(spec.family, StructureKind::Exchangeable);
        match method {
            Method::Ml => fit_sl(data, &ml_spec, &ProbEngine::Exchangeable1d, &self.opts),
            Method::Sl => fit_sl(data, spec, &self.engine, &self.opts),
            Method::Hr => fit_hr(data, spec, &jitters()?, &self.opts).map(|h| h.result),
            Method::Mf => fit_mf(data, spec, &jitters()?, self.per_cluster, &self.opts),
        }
    }

    fn runs(&self) -> Vec<(Method, usize)> {
        self.methods
            .iter()
            .flat_map(|&me| if me.jittered() { self.ms.iter().map(|&m| (me, m)).collect() } else { vec![(me, 0)] })
            .collect()
    }
}

/// `mode = bias` (default): `replications` datasets, every method on each,
/// with columns `method, m, parameter, true, mean, n_bias, n_var, n_mse,
/// n_vbar, ok, failed` where `n_vbar` is `n` times the mean squared
/// reported standard error.
///
/// `mode = jitter`: one dataset; ML/SL once (rows `estimate` and `se`), HR
/// and MF once per jitter set (rows `0..jitter_sets`) and a `span` row with
/// the range of each parameter over the sets.
pub fn cmd_simstudy(cfg: &Config) -> Result<Table> {
    cfg.check_keys(KEYS)?;
    let seed = seed(cfg)?;
    let study = Study::from_config(cfg, seed)?;
    let mut table = match cfg.get("mode").unwrap_or("bias") {
        "bias" => bias_table(&study, cfg.value_or("replications", 500)?)?,
        "jitter" => jitter_table(&study, cfg.value_or("jitter_sets", 5)?)?,
        other => return Err(Error::Config(format!("`mode` must be bias or jitter, got `{other}`"))),
    };
    table.note(format!(
        "family={} structure={} d={} n={}",
        study.design.spec.family.name(),
        study.design.spec.structure.name(),
        study.design.d,
        study.design.n
    ));
    stamp(&mut table, "simstudy", cfg);
    Ok(table)
}

fn bias_table(study: &Study, replications: usize) -> Result<Table> {
    if replications < 2 {
        return Err(Error::Config("need at least 2 replications".into()));
    }
    let runs = study.runs();
    // per replication, per run: estimates and squared standard errors
    type Outcome = Option<(Vec<f64>, Option<Vec<f64>>)>;
    let outcomes: Vec<Vec<Outcome>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let data = match study.data(r) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("replication {r}: simulation failed: {e}");
                    return vec![None; runs.len()];
                }
            };
            runs.iter()
                .map(|&(method, m)| match study.fit(&data, method, m, r, 0) {
                    Ok(f) if f.estimates.iter().all(|v| v.is_finite()) => Some((f.estimates, f.std_errors)),
                    Ok(_) => {
                        eprintln!("replication {r}: {} fit gave non-finite estimates", method.name());
                        None
                    }
                    Err(e) => {
                        eprintln!("replication {r}: {} fit failed: {e}", method.name());
                        None
                    }
                })
                .collect()
        })
        .collect();

    let names = study.names();
    let truth = study.truth();
    let n = study.design.n as f64;
    let mut table =
        Table::new(&["method", "m", "parameter", "true", "mean", "n_bias", "n_var", "n_mse", "n_vbar", "ok", "failed"]);
    for (j, &(method, m)) in runs.iter().enumerate() {
        let ok: Vec<&(Vec<f64>, Option<Vec<f64>>)> = outcomes.iter().filter_map(|o| o[j].as_ref()).collect();
        let failed = replications - ok.len();
        for (k, name) in names.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|o| o.0[k]).collect();
            let ses: Vec<f64> = ok.iter().filter_map(|o| o.1.as_ref().map(|s| s[k] * s[k])).collect();
            let c = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / c;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let mse = vals.iter().map(|v| (v - truth[k]).powi(2)).sum::<f64>() / c;
            let vbar = if ses.is_empty() { f64::NAN } else { ses.iter().sum::<f64>() / ses.len() as f64 };
            table.push(vec![
                method.name().into(),
                if method.jittered() { m.to_string() } else { "-".into() },
                name.clone(),
                truth[k].to_string(),
                fmt(mean, 4),
                fmt(n * (mean - truth[k]), 2),
                fmt(n * var, 2),
                fmt(n * mse, 2),
                fmt(n * vbar, 2),
                ok.len().to_string(),
                failed.to_string(),
            ]);
        }
    }
    table.note(format!("replications={replications}"));
    Ok(table)
}

fn jitter_table(study: &Study, sets: usize) -> Result<Table> {
    if sets == 0 {
        return Err(Error::Config("`jitter_sets` must be positive".into()));
    }
    let names = study.names();
    let data = study.data(0)?;
    let mut columns = vec!["method", "m", "set"];
    columns.extend(names.iter().map(String::as_str));
    let mut table = Table::new(&columns);
    let row = |method: Method, m: &str, set: &str, v: &[f64]| {
        let mut r = vec![method.name().to_string(), m.to_string(), set.to_string()];
        r.extend(v.iter().map(|x| fmt(*x, 4)));
        r
    };
    for (method, m) in study.runs() {
        if !method.jittered() {
            let f = study.fit(&data, method, 0, 0, 0)?;
            table.push(row(method, "-", "estimate", &f.estimates));
            let se = f.std_errors.unwrap_or_else(|| vec![f64::NAN; names.len()]);
            table.push(row(method, "-", "se", &se));
            continue;
        }
        let fits: Vec<FitResult> =
            (0..sets as u64).into_par_iter().map(|s| study.fit(&data, method, m, 0, s)).collect::<Result<_>>()?;
        for (s, f) in fits.iter().enumerate() {
            table.push(row(method, &m.to_string(), &s.to_string(), &f.estimates));
        }
        let span: Vec<f64> = (0..names.len())
            .map(|k| {
                let it = fits.iter().map(|f| f.estimates[k]);
                it.clone().fold(f64::NEG_INFINITY, f64::max) - it.fold(f64::INFINITY, f64::min)
            })
            .collect();
        table.push(row(method, &m.to_string(), "span", &span));
    }
    Ok(table)
}
