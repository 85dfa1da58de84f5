//! One-based column index specs: `5`, `1,3,5..7`, `5..` (through the last
//! column) and `all-but 1..4`.

use anyhow::{bail, Context, Result};

pub fn parse_index_spec(spec: &str, p: usize) -> Result<Vec<usize>> {
    let spec = spec.trim();
    let (complement, body) = match spec.strip_prefix("all-but") {
        Some(rest) => (true, rest.trim()),
        None => (false, spec),
    };
    if body.is_empty() {
        bail!("empty index spec '{spec}'");
    }
    let mut picked = vec![false; p];
    for tok in body.split(',').map(str::trim) {
        let (lo, hi) = match tok.split_once("..") {
            Some((a, b)) => {
                let lo = parse_one(a, spec)?;
                let hi = if b.trim().is_empty() { p } else { parse_one(b, spec)? };
                (lo, hi)
            }
            None => {
                let v = parse_one(tok, spec)?;
                (v, v)
            }
        };
        if lo == 0 || hi == 0 {
            bail!("index 0 in '{spec}'; indices are 1-based");
        }
        if lo > p || hi > p {
            bail!("index {} in '{spec}' exceeds the {p} feature columns", lo.max(hi));
        }
        if lo > hi {
            bail!("descending range '{tok}' in '{spec}'");
        }
        for flag in &mut picked[lo - 1..hi] {
            *flag = true;
        }
    }
    let out: Vec<usize> = (0..p).filter(|&j| picked[j] != complement).collect();
    if out.is_empty() {
        bail!("index spec '{spec}' selects no columns");
    }
    Ok(out)
}

fn parse_one(s: &str, spec: &str) -> Result<usize> {
    s.trim()
        .parse()
        .with_context(|| format!("bad index '{}' in '{spec}'", s.trim()))
}
