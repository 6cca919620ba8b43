//! Configuration, data files and the experiment programs behind the
//! command line tool.
//!
//! Every command takes a [`Config`] and returns a [`Table`]. Stochastic
//! commands require a `seed`; the seed and a hash of the configuration are
//! attached to the table as notes, and the same configuration reproduces
//! the table exactly.

pub mod asymlimit;
pub mod config;
pub mod data;
pub mod fit;
pub mod rectprob;
pub mod simstudy;
pub mod table;

pub use asymlimit::cmd_asymlimit;
pub use config::Config;
pub use data::{read_longitudinal, read_longitudinal_path, write_longitudinal, CsvOptions};
pub use fit::cmd_fit;
pub use rectprob::cmd_rectprob;
pub use simstudy::cmd_simstudy;
pub use table::{fmt, Table};

use crate::correlation::StructureKind;
use crate::error::{Error, Result};
use crate::marginals::MarginalFamily;
use crate::rectprob::{LatticeRule, RqmcConfig};

pub(crate) fn seed(cfg: &Config) -> Result<u64> {
    cfg.value("seed")?.ok_or_else(|| Error::Config("this command is stochastic and needs `seed` (or --seed)".into()))
}

pub(crate) fn family(cfg: &Config, default: MarginalFamily) -> Result<MarginalFamily> {
    cfg.get("family").map_or(Ok(default), MarginalFamily::from_name)
}

pub(crate) fn structure(cfg: &Config, default: StructureKind) -> Result<StructureKind> {
    cfg.get("structure").map_or(Ok(default), StructureKind::from_name)
}

/// Lattice rule settings from `lattice_size`, `randomizations` and
/// `lattice_rule`.
pub(crate) fn rqmc(cfg: &Config, seed: u64, lattice_size: usize, randomizations: usize) -> Result<RqmcConfig> {
    let c = RqmcConfig {
        lattice_size: cfg.value_or("lattice_size", lattice_size)?,
        randomizations: cfg.value_or("randomizations", randomizations)?,
        rule: cfg.get("lattice_rule").map_or(Ok(LatticeRule::Cbc), LatticeRule::from_name)?,
        ..RqmcConfig::with_seed(seed)
    };
    c.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(c)
}

pub(crate) fn stamp(table: &mut Table, command: &str, cfg: &Config) {
    table.note(format!("command={command} config_hash={:016x}", cfg.hash()));
    if let Some(s) = cfg.get("seed") {
        table.note(format!("seed={s}"));
    }
}
