//! Equicorrelated rectangle probabilities `P(-a <= Z_j <= a, j = 1..d)` by
//! every engine, over a grid of `d`, `a` and `ρ`.

use rayon::prelude::*;

use super::{fmt, rqmc, seed, stamp, Config, Table};
use crate::correlation::{CorrelationStructure, StructureKind};
use crate::error::{Error, Result};
use crate::rectprob::{exchangeable_1d, mf_importance, naive_mc, EngineKind, GenzBretz, Rectangle};
use crate::rng::child_seed;

const KEYS: &[&str] =
    &["d", "a", "rho", "engines", "mf_m", "naive_m", "lattice_size", "randomizations", "lattice_rule", "seed"];

/// Columns `d, a, rho, engine, m, estimate, std_error`; `m` is the number
/// of integrand evaluations (0 for the quadrature).
///
/// The lattice defaults to 1021 points and 10 shifts, about the 25 000
/// evaluations that reference implementations spend by default.
pub fn cmd_rectprob(cfg: &Config) -> Result<Table> {
    cfg.check_keys(KEYS)?;
    let ds: Vec<usize> = cfg.list_or("d", &[5, 10, 20])?;
    let aa: Vec<f64> = cfg.list_or("a", &[1.0, 2.0, 4.0])?;
    let rhos: Vec<f64> = cfg.list_or("rho", &[0.3, 0.6, 0.8])?;
    let engines: Vec<EngineKind> = cfg
        .list_or::<String>("engines", &["gb".into(), "exch1d".into(), "mf".into(), "naive".into()])?
        .iter()
        .map(|e| EngineKind::from_name(e))
        .collect::<Result<_>>()?;
    let mf_m: Vec<usize> = cfg.list_or("mf_m", &[1000, 10000])?;
    let naive_m: Vec<usize> = cfg.list_or("naive_m", &[10000])?;
    let seed = seed(cfg)?;
    let gb_cfg = rqmc(cfg, seed, 1021, 10)?;
    if aa.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Config("every `a` must be positive".into()));
    }
    if ds.iter().any(|&d| d < 2) {
        return Err(Error::Config("every `d` must be at least 2".into()));
    }

    let mut jobs: Vec<(usize, f64, f64, EngineKind, usize)> = Vec::new();
    for &d in &ds {
        for &a in &aa {
            for &rho in &rhos {
                for &e in &engines {
                    match e {
                        EngineKind::MfImportance => jobs.extend(mf_m.iter().map(|&m| (d, a, rho, e, m))),
                        EngineKind::Naive => jobs.extend(naive_m.iter().map(|&m| (d, a, rho, e, m))),
                        EngineKind::GenzBretz => jobs.push((d, a, rho, e, gb_cfg.evaluations())),
                        EngineKind::Exchangeable1d => jobs.push((d, a, rho, e, 0)),
                    }
                }
            }
        }
    }
    let max_d = ds.iter().copied().max().unwrap_or(2);
    let gb = GenzBretz::new(gb_cfg, max_d)?;
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(d, a, rho, engine, m))| -> Result<Vec<String>> {
            let rect = Rectangle::symmetric(a, d);
            let structure = CorrelationStructure::scalar(StructureKind::Exchangeable, rho, d, None)?;
            let cell_seed = child_seed(seed, i as u64);
            let est = match engine {
                EngineKind::Exchangeable1d => exchangeable_1d(&rect, rho)?,
                EngineKind::GenzBretz => gb.probability(&rect, &structure.cholesky()?)?,
                EngineKind::Naive => naive_mc(&rect, &structure.cholesky()?, m, cell_seed)?,
                EngineKind::MfImportance => mf_importance(&rect, &structure.build_matrix()?, m, cell_seed)?,
            };
            Ok(vec![
                d.to_string(),
                a.to_string(),
                rho.to_string(),
                engine.name().to_string(),
                m.to_string(),
                fmt(est.value, 6),
                fmt(est.std_error, 6),
            ])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["d", "a", "rho", "engine", "m", "estimate", "std_error"]);
    for r in rows {
        table.push(r);
    }
    stamp(&mut table, "rectprob", cfg);
    Ok(table)
}
