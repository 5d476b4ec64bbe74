//! JSON and CSV report emission.
//!
//! Files carry full-precision values; only console summaries round to two
//! decimals.

use std::fs;
use std::io;
use std::path::Path;

use partverify_core::context::ContextRunReport;
use partverify_core::metrics::{ApReport, LayoutStats, RecallCurve, VerificationReport};
use serde::Serialize;

use crate::schema::to_pretty;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    fs::write(path, to_pretty(value))
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(&r).map_err(csv_error)?;
    }
    w.flush()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn curve_csv(path: &Path, curve: &RecallCurve) -> io::Result<()> {
    write_rows(
        path,
        &["threshold", "recall"],
        curve.thresholds.iter().zip(&curve.recall).map(|(t, r)| vec![t.to_string(), r.to_string()]),
    )
}

pub fn verify_csv(path: &Path, report: &VerificationReport) -> io::Result<()> {
    write_rows(
        path,
        &["class", "present_hits", "present_support", "r_present", "missing_hits", "missing_support", "r_missing"],
        report.per_class.iter().map(|c| {
            vec![
                c.class.clone(),
                c.present_hits.to_string(),
                c.present_support.to_string(),
                opt(c.r_present),
                c.missing_hits.to_string(),
                c.missing_support.to_string(),
                opt(c.r_missing),
            ]
        }),
    )
}

pub fn ap_csv(path: &Path, report: &ApReport) -> io::Result<()> {
    let rows = report
        .per_class
        .iter()
        .map(|c| vec![c.class.clone(), c.n_gt.to_string(), c.n_detections.to_string(), opt(c.ap)])
        .chain(std::iter::once(vec!["mAP".to_string(), String::new(), String::new(), opt(report.map)]));
    write_rows(path, &["class", "n_gt", "n_detections", "ap"], rows)
}

pub fn stats_csv(classes_path: &Path, states_path: &Path, stats: &LayoutStats) -> io::Result<()> {
    write_rows(
        classes_path,
        &["class", "count", "mean_cx", "mean_cy", "mean_w", "mean_h", "std_cx", "std_cy", "std_w", "std_h"],
        stats.classes.iter().map(|c| {
            let mut row = vec![c.class.clone(), c.count.to_string()];
            match c.moments {
                Some(m) => row.extend(
                    [
                        m.mean_center.0,
                        m.mean_center.1,
                        m.mean_size.0,
                        m.mean_size.1,
                        m.std_center.0,
                        m.std_center.1,
                        m.std_size.0,
                        m.std_size.1,
                    ]
                    .iter()
                    .map(f64::to_string),
                ),
                None => row.extend(std::iter::repeat_n(String::new(), 8)),
            }
            row
        }),
    )?;
    write_rows(
        states_path,
        &["state", "count", "ratio"],
        stats.states.iter().map(|s| vec![s.state.as_str().to_string(), s.count.to_string(), s.ratio.to_string()]),
    )
}

pub fn context_csv(path: &Path, report: &ContextRunReport) -> io::Result<()> {
    write_rows(
        path,
        &["context", "accuracy", "hits", "evaluated"],
        report.points.iter().map(|p| {
            vec![p.context.to_string(), p.accuracy.to_string(), p.hits.to_string(), p.evaluated.to_string()]
        }),
    )
}

pub fn summary_line(report: &VerificationReport) -> String {
    format!("R^P {:.2}  R^M {:.2}  F_vv {:.2}", report.r_present, report.r_missing, report.f_vv)
}
