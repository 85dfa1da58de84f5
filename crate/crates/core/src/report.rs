//! CSV and JSON serialization of Monte Carlo reports.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GrpError, Result};
use crate::sim::{McReport, RepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = GrpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(GrpError::Parse(format!("unknown report format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    scenario: String,
    rep: usize,
    p_value: Option<f64>,
    reject: u8,
    degenerate: u8,
}

/// One CSV row per replication; degenerate and failed replications leave
/// `p_value` empty.
pub fn emit_report(report: &McReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| GrpError::Parse(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(["scenario", "rep", "p_value", "reject", "degenerate"])
                .map_err(|e| GrpError::Parse(e.to_string()))?;
            for r in &report.records {
                w.serialize(CsvRow {
                    scenario: report.scenario.name.clone(),
                    rep: r.rep,
                    p_value: r.p_value,
                    reject: r.reject as u8,
                    degenerate: r.degenerate as u8,
                })
                .map_err(|e| GrpError::Parse(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| GrpError::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| GrpError::Parse(e.to_string()))
        }
    }
}

pub fn write_report(report: &McReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = emit_report(report, format)?;
    std::fs::write(path, text).map_err(|source| GrpError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Replication records from CSV produced by [`emit_report`].
pub fn parse_csv_report(text: &str) -> Result<Vec<RepRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| GrpError::Parse(format!("report row {}: {e}", i + 1)))?;
        out.push(RepRecord {
            rep: row.rep,
            p_value: row.p_value,
            reject: row.reject != 0,
            degenerate: row.degenerate != 0,
            error: None,
        });
    }
    Ok(out)
}

pub fn parse_json_report(text: &str) -> Result<McReport> {
    serde_json::from_str(text).map_err(|e| GrpError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::find_scenario;

    fn report(ps: &[Option<f64>]) -> McReport {
        let records: Vec<RepRecord> = ps
            .iter()
            .enumerate()
            .map(|(rep, &p)| RepRecord {
                rep,
                p_value: p,
                reject: p.is_some_and(|v| v <= 0.05),
                degenerate: p.is_none(),
                error: None,
            })
            .collect();
        let mut p_values: Vec<f64> = ps.iter().flatten().copied().collect();
        p_values.sort_by(f64::total_cmp);
        McReport {
            scenario: find_scenario("lowdim-a").unwrap(),
            reps: ps.len(),
            level: 0.05,
            rejection_rate: records.iter().filter(|r| r.reject).count() as f64 / ps.len().max(1) as f64,
            p_values,
            degenerate_count: ps.iter().filter(|p| p.is_none()).count(),
            records,
            failures: 0,
            wall_time_secs: None,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = emit_report(&report(&[]), ReportFormat::Csv).unwrap();
        assert_eq!(csv, "scenario,rep,p_value,reject,degenerate\n");
    }

    #[test]
    fn one_row_per_replication() {
        let csv = emit_report(&report(&[Some(0.3), None, Some(0.01)]), ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "lowdim-a,1,,0,1");
        assert_eq!(lines[3], "lowdim-a,2,0.01,1,0");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ps = [Some(0.1 + 0.2), Some(1.0 / 3.0), None, Some(2.220446049250313e-16), Some(1.0)];
        let r = report(&ps);
        let parsed = parse_csv_report(&emit_report(&r, ReportFormat::Csv).unwrap()).unwrap();
        let back: Vec<Option<f64>> = parsed.iter().map(|x| x.p_value).collect();
        assert_eq!(back, ps.to_vec());
        assert_eq!(parsed, r.records);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let r = report(&[Some(0.1 + 0.2), Some(std::f64::consts::E / 7.0), None]);
        let back = parse_json_report(&emit_report(&r, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn write_errors_name_the_path() {
        let err = write_report(&report(&[]), ReportFormat::Csv, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
