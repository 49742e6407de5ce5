use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::metrics::{EcdfPoint, ErrorReport, ErrorSummary};
use crate::error::Result;

/// Label used in file names and CSV columns for an SNR.
pub fn snr_label(snr_db: f64) -> String {
    if snr_db.is_finite() {
        format!("{snr_db}")
    } else {
        "inf".into()
    }
}

/// `error_deg,fraction`.
pub fn write_ecdf_csv(path: &Path, points: &[EcdfPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["error_deg", "fraction"])?;
    for p in points {
        w.write_record([p.error.to_string(), p.fraction.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (sample, angle): `sample,angle,true_deg,pred_deg,error_deg,merged[,std_deg]`.
pub fn write_scatter_csv(path: &Path, report: &ErrorReport) -> Result<()> {
    let with_std = report.samples.iter().any(|s| s.std_deg.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample", "angle", "true_deg", "pred_deg", "error_deg", "merged"];
    if with_std {
        header.push("std_deg");
    }
    w.write_record(&header)?;
    for (i, s) in report.samples.iter().enumerate() {
        for a in 0..s.true_deg.len() {
            let mut row = vec![
                i.to_string(),
                a.to_string(),
                s.true_deg[a].to_string(),
                s.predicted_deg[a].to_string(),
                s.errors[a].to_string(),
                u8::from(s.merged).to_string(),
            ];
            if with_std {
                row.push(s.std_deg.as_ref().map_or(String::new(), |v| v[a].to_string()));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One summary row per evaluated series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub estimator: String,
    #[serde(with = "crate::serde_snr")]
    pub snr_db: f64,
    #[serde(flatten)]
    pub summary: ErrorSummary,
    pub merged: usize,
}

impl SeriesSummary {
    pub fn new(report: &ErrorReport, snr_db: f64) -> Result<Self> {
        Ok(SeriesSummary {
            estimator: report.estimator.clone(),
            snr_db,
            summary: report.summary()?,
            merged: report.merged_count(),
        })
    }
}

/// `estimator,snr_db,count,median_deg,mean_deg,p90_deg,rmse_deg,max_deg,merged`.
pub fn write_summary_csv(path: &Path, rows: &[SeriesSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "estimator",
        "snr_db",
        "count",
        "median_deg",
        "mean_deg",
        "p90_deg",
        "rmse_deg",
        "max_deg",
        "merged",
    ])?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.estimator.clone(),
            snr_label(r.snr_db),
            s.count.to_string(),
            s.median.to_string(),
            s.mean.to_string(),
            s.p90.to_string(),
            s.rmse.to_string(),
            s.max.to_string(),
            r.merged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `<path>` as a scatter CSV and `<path>.json` with the summary, for
/// single-dataset evaluations.
pub fn write_error_report(path: &Path, report: &ErrorReport, snr_db: f64) -> Result<SeriesSummary> {
    write_scatter_csv(path, report)?;
    let summary = SeriesSummary::new(report, snr_db)?;
    write_json(&path.with_extension("json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::SampleResult;

    #[test]
    fn scatter_and_summary_files() {
        let report = ErrorReport::new(
            "x",
            vec![SampleResult {
                true_deg: vec![-10.0, 20.0],
                predicted_deg: vec![-9.5, 21.0],
                errors: vec![0.5, 1.0],
                merged: true,
                std_deg: None,
            }],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let s = write_error_report(&path, &report, 20.0).unwrap();
        assert_eq!(s.merged, 1);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "sample,angle,true_deg,pred_deg,error_deg,merged\n0,0,-10,-9.5,0.5,1\n0,1,20,21,1,1\n"
        );
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
        assert_eq!(json["median"], 0.75);
        assert_eq!(snr_label(f64::INFINITY), "inf");
    }
}
