//! Longitudinal CSV files: `id,y,<covariates…>[,time]`, one row per
//! observation, rows of a cluster contiguous. The intercept is implicit.
//!
//! A column named `time` in the last position holds observation times for
//! Markov dependence. Another column can be named with `time_column`; the
//! time column is a covariate as well only when `time_covariate` is set.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::likelihood::{Cluster, Dataset};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvOptions {
    pub time_column: Option<String>,
    pub time_covariate: bool,
}

fn data_err(row: usize, message: impl Into<String>) -> Error {
    Error::Data { row, message: message.into() }
}

/// Reads a dataset. Error rows count lines of the file, header = line 1.
pub fn read_longitudinal<R: Read>(input: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(|e| data_err(1, e.to_string()))?.iter().map(String::from).collect();
    if header.len() < 2 || header[0] != "id" || header[1] != "y" {
        return Err(data_err(1, "header must start with `id,y`"));
    }
    let time_idx = match &opts.time_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .filter(|&i| i >= 2)
                .ok_or_else(|| data_err(1, format!("no covariate column named `{name}`")))?,
        ),
        None => (header.len() > 2 && header[header.len() - 1] == "time").then_some(header.len() - 1),
    };
    let cov_idx: Vec<usize> =
        (2..header.len()).filter(|&i| Some(i) != time_idx || opts.time_covariate).collect();
    let mut names = vec!["intercept".to_string()];
    names.extend(cov_idx.iter().map(|&i| header[i].clone()));

    struct Open {
        id: String,
        first_line: usize,
        y: Vec<i64>,
        x: Vec<Vec<f64>>,
        t: Vec<f64>,
    }
    let mut done: Vec<Cluster> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut open: Option<Open> = None;
    let close = |o: Open, done: &mut Vec<Cluster>| -> Result<()> {
        let times = time_idx.map(|_| o.t);
        let c = Cluster::new(o.y, o.x, times).map_err(|e| data_err(o.first_line, format!("cluster `{}`: {e}", o.id)))?;
        done.push(c);
        Ok(())
    };
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| data_err(line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(data_err(line, format!("{} fields, header has {}", rec.len(), header.len())));
        }
        let id = rec[0].to_string();
        let y: i64 = rec[1].parse().map_err(|_| data_err(line, format!("response `{}` is not an integer", &rec[1])))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| data_err(line, format!("`{}` = `{}` is not a finite number", header[i], &rec[i])))
        };
        let mut x = Vec::with_capacity(cov_idx.len() + 1);
        x.push(1.0);
        for &i in &cov_idx {
            x.push(num(i)?);
        }
        let t = time_idx.map(num).transpose()?;
        if open.as_ref().is_none_or(|o| o.id != id) {
            if let Some(o) = open.take() {
                close(o, &mut done)?;
            }
            if !seen.insert(id.clone()) {
                return Err(data_err(line, format!("rows of cluster `{id}` are not contiguous")));
            }
            open = Some(Open { id, first_line: line, y: vec![], x: vec![], t: vec![] });
        }
        let o = open.as_mut().expect("opened above");
        if let (Some(t), Some(&prev)) = (t, o.t.last()) {
            if !(t > prev) {
                return Err(data_err(line, format!("time {t} does not increase within cluster `{}`", o.id)));
            }
        }
        o.y.push(y);
        o.x.push(x);
        o.t.extend(t);
    }
    if let Some(o) = open.take() {
        close(o, &mut done)?;
    }
    if done.is_empty() {
        return Err(data_err(1, "file has no data rows"));
    }
    Dataset::new(done, names)
}

pub fn read_longitudinal_path(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(|e| data_err(0, format!("cannot open {}: {e}", path.display())))?;
    read_longitudinal(std::io::BufReader::new(f), opts)
}

/// Writes `data` with ids `1..=n`. Times go to a trailing `time` column
/// unless a covariate already carries that name, in which case reading the
/// file back needs `time_column = time` and `time_covariate = true`.
pub fn write_longitudinal<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Config(format!("cannot write data: {e}"));
    let names = &data.covariate_names()[1..];
    let extra_time = data.has_times() && !names.iter().any(|n| n == "time");
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "y".to_string()];
    header.extend(names.iter().cloned());
    if extra_time {
        header.push("time".into());
    }
    w.write_record(&header).map_err(io)?;
    for (i, c) in data.clusters().iter().enumerate() {
        for j in 0..c.dim() {
            let mut row = vec![(i + 1).to_string(), c.y[j].to_string()];
            row.extend(c.x[j][1..].iter().map(|v| v.to_string()));
            if extra_time {
                row.push(c.times.as_ref().expect("has_times")[j].to_string());
            }
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("cannot write data: {e}")))
}
