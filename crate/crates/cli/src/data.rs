use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2, ShapeBuilder};

/// Numeric table split into a response column and the remaining features.
#[derive(Debug)]
pub struct Table {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub feature_names: Vec<String>,
}

pub fn read_table(path: &Path, response: &str) -> Result<Table> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_table(file, response).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_table<R: std::io::Read>(reader: R, response: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let Some(resp_col) = headers.iter().position(|h| h == response) else {
        bail!("response column '{response}' not found; header has: {}", headers.join(", "));
    };
    if headers.len() < 2 {
        bail!("need at least one feature column besides '{response}'");
    }
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != resp_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let rec = rec.map_err(|e| anyhow::anyhow!("row {line}: {e}"))?;
        if rec.len() != headers.len() {
            bail!("row {line}: expected {} fields, found {}", headers.len(), rec.len());
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("row {line}, column '{}': cannot parse '{field}' as a number", headers[j]))?;
            if !v.is_finite() {
                bail!("row {line}, column '{}': non-finite value '{field}'", headers[j]);
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        bail!("no data rows");
    }
    let (n, p) = (rows.len(), feature_names.len());
    let mut x = Array2::<f64>::zeros((n, p).f());
    let mut y = Array1::<f64>::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        y[i] = row[resp_col];
        for (k, &v) in row.iter().enumerate().filter(|&(j, _)| j != resp_col).map(|(_, v)| v).enumerate() {
            x[[i, k]] = v;
        }
    }
    Ok(Table { x, y, feature_names })
}
