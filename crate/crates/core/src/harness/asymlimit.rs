//! Limiting HR and (simulated) likelihood estimators and their standard
//! errors over a grid of `d` and `ρ`.

use super::{family, fmt, rqmc, stamp, Config, Table};
use crate::asymptotics::{
    enumerate_cases_with_tail, limiting_hrmle, limiting_mle, limiting_msle, CovariateDesign, LimitOptions, TailRule,
};
use crate::correlation::StructureKind;
use crate::error::{Error, Result};
use crate::likelihood::{ModelSpec, ProbEngine, Theta};
use crate::marginals::MarginalFamily;
use crate::rng::child_seed;

const KEYS: &[&str] = &[
    "family",
    "d",
    "rho",
    "beta0",
    "beta1",
    "gamma",
    "truncation",
    "tail",
    "covariate_weights",
    "n_ref",
    "std_errors",
    "msle",
    "lattice_size",
    "randomizations",
    "lattice_rule",
    "seed",
];

/// One row per `(d, ρ)`. For every parameter `p` the columns are the true
/// value `p`, the HR limit `p_hr`, and with `std_errors` the limiting
/// standard errors `se_ml_p`, `se_hr_p` at `n_ref`. With `msle = true` the
/// simulated likelihood limit `p_msle` is added (needs `seed`).
///
/// Without `lattice_size` the lattice for the simulated likelihood grows
/// with `d`: 127 points up to `d = 3`, 509 up to 6, 2039 beyond.
///
/// `covariate_weights = conditional` (the default) weights each case by
/// `h(y; x)` at both levels of `x`; `half` weights the levels by 1/2.
pub fn cmd_asymlimit(cfg: &Config) -> Result<Table> {
    cfg.check_keys(KEYS)?;
    let family = family(cfg, MarginalFamily::BernoulliLogit)?;
    let default_d: &[usize] = if family.is_binary() { &[2, 5, 10] } else { &[2, 3] };
    let ds: Vec<usize> = cfg.list_or("d", default_d)?;
    let rhos: Vec<f64> = cfg.list_or("rho", &[0.3, 0.6, 0.8])?;
    let beta = vec![cfg.value_or("beta0", -0.5)?, cfg.value_or("beta1", 0.5)?];
    let gamma = family.has_gamma().then(|| cfg.value_or("gamma", 0.5)).transpose()?;
    let truncation: Option<i64> = cfg.value("truncation")?;
    let tail = match cfg.get("tail").unwrap_or("drop") {
        "drop" => TailRule::Drop,
        "lump" => TailRule::Lump,
        other => return Err(Error::Config(format!("`tail` must be drop or lump, got `{other}`"))),
    };
    let design = match cfg.get("covariate_weights").unwrap_or("conditional") {
        "conditional" => CovariateDesign::binary_conditional(),
        "half" => CovariateDesign::binary(),
        other => return Err(Error::Config(format!("`covariate_weights` must be conditional or half, got `{other}`"))),
    };
    let n_ref: usize = cfg.value_or("n_ref", 100)?;
    let with_se = cfg.bool_or("std_errors", true)?;
    let msle = cfg.bool_or("msle", false)?;
    let msle_cfg = if msle { Some(rqmc(cfg, super::seed(cfg)?, 127, 10)?) } else { None };
    if ds.iter().any(|&d| d < 2) || rhos.iter().any(|r| !(*r >= 0.0 && *r < 1.0)) {
        return Err(Error::Config("need every d >= 2 and every rho in [0, 1)".into()));
    }

    let spec = ModelSpec::new(family, StructureKind::Exchangeable);
    let mut names: Vec<&str> = vec!["beta0", "beta1"];
    if family.has_gamma() {
        names.push("gamma");
    }
    names.push("rho");
    let mut columns: Vec<String> = vec!["d".into(), "rho_true".into(), "cases".into(), "missing_mass".into()];
    for p in &names {
        columns.push(format!("{p}"));
        columns.push(format!("{p}_hr"));
    }
    if with_se {
        for p in &names {
            columns.push(format!("se_ml_{p}"));
            columns.push(format!("se_hr_{p}"));
        }
    }
    if msle {
        columns.extend(names.iter().map(|p| format!("{p}_msle")));
    }
    let mut table = Table { columns, ..Table::default() };
    let opts = LimitOptions { n_ref: with_se.then_some(n_ref), ..LimitOptions::default() };

    for (row, (&d, &rho)) in ds.iter().flat_map(|d| rhos.iter().map(move |r| (d, r))).enumerate() {
        let truth = Theta::new(beta.clone(), gamma, rho);
        let cases = enumerate_cases_with_tail(&spec, &truth, d, &design, truncation, tail)?;
        let hr = limiting_hrmle(&cases, &opts)?;
        let ml = if with_se { Some(limiting_mle(&cases, &opts)?) } else { None };
        let truth_v: Vec<f64> = {
            let mut v = beta.clone();
            v.extend(gamma);
            v.push(rho);
            v
        };
        let mut r = vec![d.to_string(), rho.to_string(), cases.cases().len().to_string(), fmt(cases.missing_mass(), 6)];
        for (k, t) in truth_v.iter().enumerate() {
            r.push(t.to_string());
            r.push(fmt(hr.estimates[k], 4));
        }
        if with_se {
            let ml_se = ml.as_ref().and_then(|m| m.std_errors.clone());
            for k in 0..names.len() {
                r.push(ml_se.as_ref().map_or("NA".into(), |s| fmt(s[k], 4)));
                r.push(hr.std_errors.as_ref().map_or("NA".into(), |s| fmt(s[k], 4)));
            }
        }
        if let Some(c) = msle_cfg {
            let lattice_size = match cfg.get("lattice_size") {
                Some(_) => c.lattice_size,
                None => msle_lattice_size(d),
            };
            let c = crate::rectprob::RqmcConfig { seed: child_seed(c.seed, row as u64), lattice_size, ..c };
            let engine = ProbEngine::for_fitting(c, d)?;
            let m = limiting_msle(&cases, &engine, &LimitOptions { n_ref: None, ..opts.clone() })?;
            r.extend(m.estimates.iter().map(|v| fmt(*v, 4)));
        }
        table.push(r);
    }
    table.note(format!(
        "family={} truncation={} tail={:?} n_ref={n_ref}",
        family.name(),
        truncation.map_or("auto".into(), |t| t.to_string()),
        tail
    ));
    stamp(&mut table, "asymlimit", cfg);
    Ok(table)
}

/// Lattice that keeps the simulated likelihood limit within 1e-3 of the
/// truth on the binary and NB2 grids. The fixed-rule limit is biased by
/// about the relative variance of the probability estimates, which grows
/// with `d`.
pub fn msle_lattice_size(d: usize) -> usize {
    match d {
        0..=3 => 127,
        4..=6 => 509,
        _ => 2039,
    }
}
