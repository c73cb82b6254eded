//! CSV schemas for the training log and evaluation reports.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! re-reading a file reproduces the stored values exactly. An infinite PSNR
//! is written as `inf`; metrics that do not apply are left empty.

use std::fs::File;
use std::path::Path;

use slicegs_core::metrics::{Aggregate, MetricReport, Psnr};
use slicegs_core::optimizer::{EvalRecord, IterationRecord};

use crate::error::{format_err, Error, Result};

pub const TRAIN_HEADER: [&str; 8] =
    ["iteration", "l1", "ssim_term", "semantic_mse", "total", "gaussians", "heldout_psnr", "heldout_ssim"];

pub const EVAL_HEADER: [&str; 7] = ["row", "index", "depth", "psnr", "ssim", "semantic_mse", "label_accuracy"];

fn num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn psnr_cell(p: Psnr) -> String {
    match p {
        Psnr::Finite(v) => num(v),
        Psnr::Infinite => "inf".into(),
    }
}

/// Streaming writer for the per-iteration training log.
pub struct TrainLogWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl TrainLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path).map_err(Error::csv(path))?;
        inner.write_record(TRAIN_HEADER).map_err(Error::csv(path))?;
        inner.flush().map_err(Error::io(path))?;
        Ok(TrainLogWriter { inner, path: path.to_path_buf() })
    }

    /// Held-out columns are filled on rows followed by an evaluation.
    pub fn record(&mut self, rec: &IterationRecord, eval: Option<&EvalRecord>) -> Result<()> {
        let (psnr, ssim) = match eval {
            Some(e) => (
                if e.report.psnr.count > 0 { num(e.report.psnr.mean) } else if e.report.psnr.excluded > 0 { "inf".into() } else { String::new() },
                num(e.report.ssim.mean),
            ),
            None => (String::new(), String::new()),
        };
        let l = &rec.loss;
        let row = [
            rec.iteration.to_string(),
            num(l.l1),
            num(l.ssim_term),
            num(l.semantic_mse),
            num(l.total),
            rec.gaussians.to_string(),
            psnr,
            ssim,
        ];
        self.inner.write_record(&row).map_err(Error::csv(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(Error::io(&self.path))
    }
}

fn aggregate_rows(report: &MetricReport) -> [[String; 7]; 4] {
    let field = |a: Option<&Aggregate>, f: fn(&Aggregate) -> String| a.map(f).unwrap_or_default();
    let row = |name: &str, f: fn(&Aggregate) -> String| {
        [
            name.to_string(),
            String::new(),
            String::new(),
            field(Some(&report.psnr), f),
            field(Some(&report.ssim), f),
            field(report.semantic_mse.as_ref(), f),
            field(report.label_accuracy.as_ref(), f),
        ]
    };
    [
        row("mean", |a| if a.count == 0 { String::new() } else { num(a.mean) }),
        row("std", |a| if a.count == 0 { String::new() } else { num(a.std) }),
        row("count", |a| a.count.to_string()),
        row("excluded", |a| a.excluded.to_string()),
    ]
}

/// One row per slice, then `mean`, `std`, `count` and `excluded` rows.
/// Infinite PSNR values are excluded from the aggregates and counted.
pub fn write_eval_csv(path: &Path, report: &MetricReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(EVAL_HEADER).map_err(Error::csv(path))?;
    for s in &report.slices {
        let row = [
            "slice".to_string(),
            s.index.to_string(),
            num(s.depth),
            psnr_cell(s.psnr),
            num(s.ssim),
            opt(s.semantic_mse),
            opt(s.label_accuracy),
        ];
        w.write_record(&row).map_err(Error::csv(path))?;
    }
    for row in aggregate_rows(report) {
        w.write_record(&row).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// A parsed evaluation CSV row. Empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub row: String,
    pub index: Option<usize>,
    pub depth: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub semantic_mse: Option<f64>,
    pub label_accuracy: Option<f64>,
}

fn cell(s: &str) -> Result<Option<f64>> {
    match s {
        "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        _ => s.parse().map(Some).map_err(|_| format_err(format!("bad number {s:?}"))),
    }
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let header = r.headers().map_err(Error::csv(path))?.clone();
    if header.iter().ne(EVAL_HEADER) {
        return Err(format_err(format!("{}: unexpected header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(Error::csv(path))?;
        let index = match &rec[1] {
            "" => None,
            s => Some(s.parse().map_err(|_| format_err(format!("bad index {s:?}")))?),
        };
        rows.push(EvalRow {
            row: rec[0].to_string(),
            index,
            depth: cell(&rec[2])?,
            psnr: cell(&rec[3])?,
            ssim: cell(&rec[4])?,
            semantic_mse: cell(&rec[5])?,
            label_accuracy: cell(&rec[6])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slicegs_core::metrics::SliceMetrics;

    fn report(sem: bool) -> MetricReport {
        let s = |index, psnr, ssim| SliceMetrics {
            index,
            depth: (index as f64 + 0.5) / 8.0,
            psnr,
            ssim,
            semantic_mse: sem.then_some(0.01 * index as f64),
            label_accuracy: sem.then_some(0.9),
        };
        MetricReport::from_slices(vec![
            s(1, Psnr::Finite(31.25), 0.93),
            s(4, Psnr::Infinite, 1.0),
            s(6, Psnr::Finite(28.0 / 3.0), 0.71),
        ])
    }

    #[test]
    fn aggregates_recompute_from_slice_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &report(true)).unwrap();
        let rows = read_eval_csv(&path).unwrap();
        let slices: Vec<_> = rows.iter().filter(|r| r.row == "slice").collect();
        let get = |name: &str| rows.iter().find(|r| r.row == name).unwrap();
        assert_eq!(slices.len(), 3);
        assert_eq!(slices[1].psnr, Some(f64::INFINITY));

        let finite: Vec<f64> = slices.iter().filter_map(|r| r.psnr).filter(|p| p.is_finite()).collect();
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let std = (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len() as f64).sqrt();
        assert!((get("mean").psnr.unwrap() - mean).abs() <= 1e-12);
        assert!((get("std").psnr.unwrap() - std).abs() <= 1e-12);
        assert_eq!(get("count").psnr, Some(2.0));
        assert_eq!(get("excluded").psnr, Some(1.0));

        let ssim: Vec<f64> = slices.iter().map(|r| r.ssim.unwrap()).collect();
        assert!((get("mean").ssim.unwrap() - ssim.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn missing_semantics_leave_cells_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        write_eval_csv(&path, &report(false)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",,"));
        for r in read_eval_csv(&path).unwrap() {
            assert_eq!((r.semantic_mse, r.label_accuracy), (None, None));
        }
    }

    #[test]
    fn train_log_header_only_when_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        TrainLogWriter::create(&path).unwrap().finish().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), TRAIN_HEADER.join(",") + "\n");
    }
}
