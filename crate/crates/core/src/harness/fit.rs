//! Fitting a model to a longitudinal CSV file.

use super::{family, fmt, rqmc, stamp, structure, Config, CsvOptions, Table};
use crate::correlation::StructureKind;
use crate::error::{Error, Result};
use crate::estimate::{fit_sl, FitOptions, ParamLayout};
use crate::likelihood::{Dataset, ModelSpec, ProbEngine};
use crate::marginals::MarginalFamily;

const KEYS: &[&str] = &[
    "data",
    "family",
    "structure",
    "engine",
    "lattice_size",
    "randomizations",
    "lattice_rule",
    "seed",
    "time_column",
    "time_covariate",
    "std_errors",
];

/// Reading options for the file named by `data`.
pub fn csv_options(cfg: &Config) -> Result<CsvOptions> {
    Ok(CsvOptions { time_column: cfg.get("time_column").map(String::from), time_covariate: cfg.bool_or("time_covariate", false)? })
}

/// Maximum likelihood fit of `data`: exact with the one-dimensional engine
/// for exchangeable dependence, simulated with the lattice rule otherwise
/// (`engine = exch1d | gb` overrides; `gb` needs `seed`).
///
/// Rows `parameter, estimate, std_error`; the log-likelihood, method and
/// optimizer status are notes. The `data` key is not read here.
pub fn cmd_fit(cfg: &Config, data: &Dataset) -> Result<Table> {
    cfg.check_keys(KEYS)?;
    let family = family(cfg, MarginalFamily::BernoulliLogit)?;
    let structure = structure(cfg, StructureKind::Exchangeable)?;
    let spec = ModelSpec::new(family, structure);
    let layout = ParamLayout::new(&spec, data.covariate_names(), data.d_max())?;
    if data.n() < layout.len() {
        return Err(Error::Data {
            row: 0,
            message: format!("{} clusters cannot identify {} parameters", data.n(), layout.len()),
        });
    }
    let engine_name = cfg.get("engine").unwrap_or("auto");
    let engine = match (engine_name, structure) {
        ("auto", StructureKind::Exchangeable) | ("exch1d", _) => ProbEngine::Exchangeable1d,
        ("auto", _) | ("gb", _) => ProbEngine::for_fitting(rqmc(cfg, super::seed(cfg)?, 127, 10)?, data.d_max())?,
        (other, _) => return Err(Error::Config(format!("`engine` must be auto, exch1d or gb, got `{other}`"))),
    };
    let opts = FitOptions { std_errors: cfg.bool_or("std_errors", true)?, ..FitOptions::default() };
    let fit = fit_sl(data, &spec, &engine, &opts)?;
    let mut table = Table::new(&["parameter", "estimate", "std_error"]);
    for (k, name) in fit.names.iter().enumerate() {
        let se = fit.std_errors.as_ref().map_or(f64::NAN, |s| s[k]);
        table.push(vec![name.clone(), fmt(fit.estimates[k], 6), fmt(se, 6)]);
    }
    table.note(format!("loglik={:.6}", fit.loglik));
    table.note(format!(
        "method={} engine={} family={} structure={} n={} converged={} iterations={}",
        fit.method,
        fit.engine,
        family.name(),
        structure.name(),
        data.n(),
        fit.converged,
        fit.iterations
    ));
    for d in &fit.diagnostics {
        table.note(format!("diagnostic: {d}"));
    }
    stamp(&mut table, "fit", cfg);
    Ok(table)
}
