//! CSV formats for datasets, soft labels, fit results and sweep reports.
//!
//! Component labels and failure indices are 1-based in files. Floats are
//! written with Rust's shortest round-trip formatting, so identical values
//! always produce identical bytes.

use std::collections::HashMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::belief::{BeliefError, ContourFunction};
use crate::censoring::{CensoredDataset, CensoringError, CensoringScheme, Record, Status};
use crate::e2m::{E2mTrace, LabelMode};
use crate::lifetime::MixtureParams;
use crate::monte_carlo::{RabiasReport, SweepRow};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Censoring(#[from] CensoringError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

fn parse_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<&'a str, IoError> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| parse_err(line, format!("missing column {name}")))
}

fn parse<T: std::str::FromStr>(s: &str, line: u64, name: &str) -> Result<T, IoError> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {name} from {s:?}")))
}

fn opt_usize(value: Option<usize>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub const DATASET_HEADER: [&str; 5] = ["item_id", "y_star", "status", "censored_at_failure", "true_label"];

/// Writes one row per record in record order.
pub fn write_dataset<W: Write>(data: &CensoredDataset, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_HEADER)?;
    for r in data.records() {
        let status = match r.status {
            Status::Observed => "observed",
            Status::Censored => "censored",
        };
        w.write_record([
            r.item_id.to_string(),
            r.y_star.to_string(),
            status.to_string(),
            opt_usize(r.censored_at),
            opt_usize(r.true_label.map(|z| z + 1)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset and reconstructs its plan: n rows, J observed rows, and
/// Rⱼ = number of rows censored at failure j.
pub fn read_dataset<R: Read>(input: R) -> Result<CensoredDataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(parse_err(1, format!("expected header {}", DATASET_HEADER.join(","))));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let status = match field(&row, 2, line, "status")? {
            "observed" => Status::Observed,
            "censored" => Status::Censored,
            other => return Err(parse_err(line, format!("unknown status {other:?}"))),
        };
        let censored_at = match field(&row, 3, line, "censored_at_failure")? {
            "" => None,
            s => Some(parse::<usize>(s, line, "censored_at_failure")?),
        };
        let true_label = match field(&row, 4, line, "true_label")? {
            "" => None,
            s => match parse::<usize>(s, line, "true_label")? {
                0 => return Err(parse_err(line, "labels are 1-based")),
                z => Some(z - 1),
            },
        };
        records.push(Record {
            item_id: parse(field(&row, 0, line, "item_id")?, line, "item_id")?,
            y_star: parse(field(&row, 1, line, "y_star")?, line, "y_star")?,
            status,
            true_label,
            censored_at,
        });
    }
    let failures = records.iter().filter(|r| r.is_observed()).count();
    let mut removals = vec![0usize; failures];
    for r in records.iter().filter(|r| !r.is_observed()) {
        match r.censored_at {
            Some(j) if (1..=failures).contains(&j) => removals[j - 1] += 1,
            _ => {
                return Err(parse_err(
                    0,
                    format!("censored item {} has no valid failure index", r.item_id),
                ))
            }
        }
    }
    let scheme = CensoringScheme::new(records.len(), failures, removals)?;
    Ok(CensoredDataset::new(scheme, records)?)
}

/// `item_id, pl_1, …, pl_p`, one row per record.
pub fn write_soft_labels<W: Write>(
    item_ids: &[usize],
    labels: &[ContourFunction],
    out: W,
) -> Result<(), IoError> {
    let p = labels.first().map_or(0, |c| c.frame().size());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["item_id".to_string()];
    header.extend((1..=p).map(|z| format!("pl_{z}")));
    w.write_record(&header)?;
    for (id, pl) in item_ids.iter().zip(labels) {
        let mut row = vec![id.to_string()];
        row.extend(pl.values().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads soft labels keyed by item id.
pub fn read_soft_labels<R: Read>(input: R) -> Result<Vec<(usize, ContourFunction)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let p = headers.len().saturating_sub(1);
    if p == 0 || headers.get(0) != Some("item_id") {
        return Err(parse_err(1, "expected header item_id,pl_1,...,pl_p"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = parse(field(&row, 0, line, "item_id")?, line, "item_id")?;
        let pl = (1..=p)
            .map(|k| parse::<f64>(field(&row, k, line, "pl")?, line, "pl"))
            .collect::<Result<Vec<_>, _>>()?;
        let contour = ContourFunction::new(pl).map_err(|e| parse_err(line, e.to_string()))?;
        out.push((id, contour));
    }
    Ok(out)
}

/// Orders soft labels to follow the dataset's records.
pub fn align_soft_labels(
    data: &CensoredDataset,
    labels: Vec<(usize, ContourFunction)>,
) -> Result<Vec<ContourFunction>, IoError> {
    let mut by_id: HashMap<usize, ContourFunction> = HashMap::with_capacity(labels.len());
    for (id, c) in labels {
        if by_id.insert(id, c).is_some() {
            return Err(parse_err(0, format!("duplicate soft label for item {id}")));
        }
    }
    let aligned = data
        .records()
        .iter()
        .map(|r| {
            by_id
                .remove(&r.item_id)
                .ok_or_else(|| parse_err(0, format!("no soft label for item {}", r.item_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = by_id.keys().min() {
        return Err(parse_err(0, format!("soft label for unknown item {extra}")));
    }
    Ok(aligned)
}

fn param_header(p: usize) -> Vec<String> {
    (1..=p)
        .map(|z| format!("lambda_{z}"))
        .chain((1..=p).map(|z| format!("xi_{z}")))
        .collect()
}

fn param_cells(params: &MixtureParams) -> Vec<String> {
    params
        .lambdas()
        .iter()
        .map(f64::to_string)
        .chain(params.xis().iter().map(f64::to_string))
        .collect()
}

/// A single fit: `method, rep, lambda_1..p, xi_1..p, iterations, converged, gll`.
pub fn write_fit_result<W: Write>(
    method: &str,
    rep: usize,
    params: &MixtureParams,
    trace: &E2mTrace,
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["method".to_string(), "rep".to_string()];
    header.extend(param_header(params.len()));
    header.extend(["iterations", "converged", "gll"].map(String::from));
    w.write_record(&header)?;
    let mut row = vec![method.to_string(), rep.to_string()];
    row.extend(param_cells(params));
    row.push(trace.iterations_used.to_string());
    row.push(trace.converged.to_string());
    row.push(trace.final_gll().unwrap_or(f64::NAN).to_string());
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

/// `iteration, gll, lambda_1..p, xi_1..p`, starting at the initial point (iteration 0).
pub fn write_trace<W: Write>(trace: &E2mTrace, out: W) -> Result<(), IoError> {
    let p = trace.iterates.first().map_or(0, |it| it.params.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "gll".to_string()];
    header.extend(param_header(p));
    w.write_record(&header)?;
    for (k, it) in trace.iterates.iter().enumerate() {
        let mut row = vec![k.to_string(), it.gll.to_string()];
        row.extend(param_cells(&it.params));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per replication:
/// `variable, value, method, rep, status, lambda_1..p, xi_1..p, iterations, converged, gll`.
/// Failed replications leave the estimate columns empty and name the cause in `status`.
pub fn write_results<W: Write>(
    variable: &str,
    p: usize,
    rows: &[SweepRow],
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["variable", "value", "method", "rep", "status"]
        .map(String::from)
        .to_vec();
    header.extend(param_header(p));
    header.extend(["iterations", "converged", "gll"].map(String::from));
    w.write_record(&header)?;
    for row in rows {
        let r = &row.result;
        let mut cells = vec![
            variable.to_string(),
            row.value.to_string(),
            r.method.to_string(),
            r.rep.to_string(),
        ];
        match &r.outcome {
            Ok(s) => {
                cells.push("ok".into());
                cells.extend(param_cells(&s.params));
                cells.push(s.iterations.to_string());
                cells.push(s.converged.to_string());
                cells.push(s.gll.to_string());
            }
            Err(f) => {
                cells.push(f.kind.to_string());
                cells.extend(std::iter::repeat_n(String::new(), 2 * p + 3));
            }
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(())
}

/// `variable, value, method, parameter, mean_rabias, sd_rabias, successes, failures, unreliable`.
pub fn write_summary<W: Write>(report: &RabiasReport, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variable",
        "value",
        "method",
        "parameter",
        "mean_rabias",
        "sd_rabias",
        "successes",
        "failures",
        "unreliable",
    ])?;
    for c in &report.cells {
        w.write_record([
            report.variable.as_str().to_string(),
            c.value.to_string(),
            c.method.to_string(),
            c.parameter.clone(),
            c.mean.to_string(),
            c.sd.to_string(),
            c.successes.to_string(),
            c.failures.to_string(),
            c.unreliable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data for one parameter: `value, <method>_mean, <method>_sd, …`.
pub fn write_figure<W: Write>(
    report: &RabiasReport,
    parameter: &str,
    methods: &[LabelMode],
    out: W,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![report.variable.as_str().to_string()];
    for m in methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    w.write_record(&header)?;
    let mut values: Vec<f64> = Vec::new();
    for c in &report.cells {
        if !values.contains(&c.value) {
            values.push(c.value);
        }
    }
    for v in values {
        let mut row = vec![v.to_string()];
        for &m in methods {
            match report.cell(v, m, parameter) {
                Some(c) => {
                    row.push(c.mean.to_string());
                    row.push(c.sd.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
