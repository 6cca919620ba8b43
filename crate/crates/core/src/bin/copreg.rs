use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use copreg::harness::{self, Config, Table};
use copreg::Error;

/// Gaussian copula regression for dependent discrete responses.
///
/// Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
/// failure.
#[derive(Parser)]
#[command(name = "copreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the table as CSV here and prints it aligned on stdout;
    /// without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Equicorrelated rectangle probabilities by every engine.
    Rectprob(Common),
    /// Limiting HR and likelihood estimators with standard errors.
    Asymlimit(Common),
    /// Repeated-sampling study or jitter-variability experiment.
    Simstudy(Common),
    /// Fits a model to the CSV file named by the `data` key.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Overrides the `data` key.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<Config, Error> {
    let mut cfg = Config::from_file(&common.config)?;
    if let Some(s) = common.seed {
        cfg.set("seed", s.to_string());
    }
    Ok(cfg)
}

/// Relative data paths are taken from the configuration file's directory.
fn data_path(cfg: &Config, flag: Option<&Path>, config: &Path) -> Result<PathBuf, Error> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    let p = PathBuf::from(cfg.require("data")?);
    if p.is_absolute() {
        return Ok(p);
    }
    Ok(config.parent().map_or(p.clone(), |dir| dir.join(&p)))
}

fn emit(table: &Table, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let f = std::fs::File::create(path)
                .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))?;
            table.write_csv(std::io::BufWriter::new(f))?;
            print!("{}", table.to_text());
            Ok(())
        }
        None => table.write_csv(std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let (table, common) = match &cli.command {
        Command::Rectprob(c) => (harness::cmd_rectprob(&load(c)?)?, c),
        Command::Asymlimit(c) => (harness::cmd_asymlimit(&load(c)?)?, c),
        Command::Simstudy(c) => (harness::cmd_simstudy(&load(c)?)?, c),
        Command::Fit { common, data } => {
            let mut cfg = load(common)?;
            let path = data_path(&cfg, data.as_deref(), &common.config)?;
            let dataset = harness::read_longitudinal_path(&path, &harness::fit::csv_options(&cfg)?)?;
            // the path is resolved here; the fit itself only sees the data
            cfg.set("data", path.display().to_string());
            (harness::cmd_fit(&cfg, &dataset)?, common)
        }
    };
    emit(&table, common.out.as_deref())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
