//! CSV schemas written by `search` and `diagnose`, and the reader behind
//! `report`.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

/// One point of a recall / latency / IO sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    #[serde(rename = "L")]
    pub l: usize,
    pub recall: f64,
    pub mean_latency_ms: f64,
    pub mean_sector_reads: f64,
    pub qps: f64,
}

/// One line of a shift-diagnostics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub diagnostic: String,
    pub percentile: f64,
    pub id_value: f64,
    pub ood_value: f64,
    pub ratio: f64,
}

pub const CURVE_HEADER: &[&str] = &["L", "recall", "mean_latency_ms", "mean_sector_reads", "qps"];
pub const DIAGNOSTIC_HEADER: &[&str] = &["diagnostic", "percentile", "id_value", "ood_value", "ratio"];

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::Reader::from_reader(file);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        bail!(
            "{}: header {:?} does not match {:?}",
            path.display(),
            found,
            header
        );
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: row {}", path.display(), i + 1)))
        .collect()
}

pub enum Report {
    Curve(Vec<CurvePoint>),
    Diagnostics(Vec<DiagnosticRow>),
}

/// Reads either schema, chosen by the header's first column.
pub fn read_report(path: &Path) -> Result<Report> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let first = csv::Reader::from_reader(file)
        .headers()?
        .get(0)
        .unwrap_or_default()
        .to_string();
    match first.as_str() {
        "L" => Ok(Report::Curve(read_csv(path, CURVE_HEADER)?)),
        "diagnostic" => Ok(Report::Diagnostics(read_csv(path, DIAGNOSTIC_HEADER)?)),
        other => bail!(
            "{}: unrecognized report with first column {other:?}",
            path.display()
        ),
    }
}

/// Sweep positions where recall drops below the previous point.
pub fn recall_drops(points: &[CurvePoint]) -> Vec<(usize, usize)> {
    let mut sorted: Vec<&CurvePoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.l);
    sorted
        .windows(2)
        .filter(|w| w[1].recall < w[0].recall)
        .map(|w| (w[0].l, w[1].l))
        .collect()
}

pub fn format_curve(points: &[CurvePoint]) -> String {
    let mut out = format!(
        "{:>6} {:>8} {:>12} {:>12} {:>10}\n",
        "L", "recall", "latency_ms", "sector_rds", "qps"
    );
    for p in points {
        out.push_str(&format!(
            "{:>6} {:>8.4} {:>12.4} {:>12.2} {:>10.1}\n",
            p.l, p.recall, p.mean_latency_ms, p.mean_sector_reads, p.qps
        ));
    }
    out
}

pub fn format_diagnostics(rows: &[DiagnosticRow]) -> String {
    let mut out = format!(
        "{:<16} {:>5} {:>12} {:>12} {:>8}\n",
        "diagnostic", "p", "id", "ood", "ratio"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<16} {:>5} {:>12.4} {:>12.4} {:>8.3}\n",
            r.diagnostic, r.percentile, r.id_value, r.ood_value, r.ratio
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(l: usize, recall: f64) -> CurvePoint {
        CurvePoint {
            l,
            recall,
            mean_latency_ms: 0.25,
            mean_sector_reads: 3.5,
            qps: 4000.0,
        }
    }

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let points = vec![point(10, 0.5), point(20, 0.75)];
        write_csv(&path, &points).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("L,recall,mean_latency_ms,mean_sector_reads,qps\n"));
        match read_report(&path).unwrap() {
            Report::Curve(back) => assert_eq!(back, points),
            Report::Diagnostics(_) => panic!("wrong schema"),
        }
    }

    #[test]
    fn diagnostics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows = vec![DiagnosticRow {
            diagnostic: "mahalanobis".into(),
            percentile: 50.0,
            id_value: 4.0,
            ood_value: 8.0,
            ratio: 2.0,
        }];
        write_csv(&path, &rows).unwrap();
        match read_report(&path).unwrap() {
            Report::Diagnostics(back) => assert_eq!(back, rows),
            Report::Curve(_) => panic!("wrong schema"),
        }
    }

    #[test]
    fn foreign_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "L,recall\n10,0.5\n").unwrap();
        assert!(read_report(&path).is_err());
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_report(&path).is_err());
    }

    #[test]
    fn drops_are_found_in_l_order() {
        let pts = vec![point(40, 0.8), point(10, 0.5), point(20, 0.9)];
        assert_eq!(recall_drops(&pts), vec![(20, 40)]);
        assert!(recall_drops(&[point(10, 0.5), point(20, 0.5)]).is_empty());
    }
}
