//! CSV ingestion: header `pair_id,treatment,response,<covariates...>`,
//! comma-separated, one row per observation. Errors cite file line numbers.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use bclr_core::PairedDataset;

use crate::error::{CliError, CliResult};

const REQUIRED: [&str; 3] = ["pair_id", "treatment", "response"];

/// Parsed input together with the covariate names from the header.
#[derive(Debug, Clone)]
pub struct Input {
    pub data: PairedDataset,
    pub covariate_names: Vec<String>,
}

pub fn read_path(path: &Path) -> CliResult<Input> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    read(file)
}

fn binary(field: &str, column: &str, line: u64) -> CliResult<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(CliError::malformed(format!("line {line}: {column} must be 0 or 1, got '{other}'"))),
    }
}

pub fn read<R: Read>(reader: R) -> CliResult<Input> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| CliError::malformed(format!("header: {e}")))?.clone();
    if header.len() < 3 || header.iter().take(3).ne(REQUIRED) {
        return Err(CliError::malformed(format!(
            "line 1: header must start with pair_id,treatment,response; got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let covariate_names: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();
    let p = covariate_names.len();

    let mut ids = Vec::new();
    let mut lines = Vec::new();
    let mut w = Vec::new();
    let mut y = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |pos| pos.line());
            CliError::malformed(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != p + 3 {
            return Err(CliError::malformed(format!("line {line}: expected {} fields, got {}", p + 3, record.len())));
        }
        if record[0].is_empty() {
            return Err(CliError::malformed(format!("line {line}: empty pair_id")));
        }
        ids.push(record[0].to_owned());
        w.push(binary(&record[1], "treatment", line)?);
        y.push(binary(&record[2], "response", line)?);
        for (j, field) in record.iter().skip(3).enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::malformed(format!(
                    "line {line}: covariate '{}' is not a number: '{field}'",
                    covariate_names[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::malformed(format!(
                    "line {line}: covariate '{}' is not finite",
                    covariate_names[j]
                )));
            }
            values.push(v);
        }
        lines.push(line);
    }
    if ids.is_empty() {
        return Err(CliError::malformed("no data rows"));
    }
    check_pairing(&ids, &w, &lines)?;
    let x = DMatrix::from_row_slice(ids.len(), p, &values);
    let data = PairedDataset::new(ids, w, y, x)?;
    Ok(Input { data, covariate_names })
}

/// Every pair id must occur on exactly two lines, one treated, one control.
fn check_pairing(ids: &[String], w: &[u8], lines: &[u64]) -> CliResult<()> {
    let mut rows: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for (r, id) in ids.iter().enumerate() {
        let entry = rows.entry(id.as_str()).or_default();
        if entry.is_empty() {
            order.push(id.as_str());
        }
        entry.push(r);
    }
    for id in order {
        let members = &rows[id];
        let at: Vec<u64> = members.iter().map(|&r| lines[r]).collect();
        if members.len() != 2 {
            return Err(CliError::malformed(format!(
                "pair '{id}' appears on {} lines {at:?}; each pair needs exactly two",
                members.len()
            )));
        }
        if w[members[0]] == w[members[1]] {
            return Err(CliError::malformed(format!(
                "pair '{id}' (lines {at:?}) needs one treated and one control member"
            )));
        }
    }
    Ok(())
}
