//! CSV output for plotting.
//!
//! * `ridf_<k>.csv`: on-route curve of position `k` (`angle_deg,diff`)
//! * `ridf_<k>_off_<cm>.csv`: test curve of position `k` at a lateral offset
//! * `errors.csv`: one row per test probe
//! * `route_errors.csv`: one row per on-route probe
//! * `summary.csv`: box-plot statistics per lateral offset, plus an `on_route` row
//!
//! Numbers are written in shortest round-trip form with a dot decimal point.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ErrorSummary, Evaluation};
use crate::error::Result;
use crate::imgproc::{RidfCurve, RidfSample};

#[derive(Serialize, Deserialize)]
struct CurveRow {
    angle_deg: f64,
    diff: f64,
}

#[derive(Serialize)]
struct ErrorRow {
    position: usize,
    lateral_offset_cm: f64,
    estimate_deg: f64,
    error_deg: f64,
}

#[derive(Serialize)]
struct RouteErrorRow {
    position: usize,
    estimate_deg: f64,
    error_deg: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    probe: &'a str,
    lateral_offset_cm: String,
    count: usize,
    min: f64,
    q1: f64,
    median: f64,
    q3: f64,
    max: f64,
    whisker_low: f64,
    whisker_high: f64,
    outliers: String,
}

impl<'a> SummaryRow<'a> {
    fn new(probe: &'a str, offset: Option<f64>, s: &ErrorSummary) -> Self {
        Self {
            probe,
            lateral_offset_cm: offset.map(|o| o.to_string()).unwrap_or_default(),
            count: s.count,
            min: s.min,
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.max,
            whisker_low: s.whisker_low,
            whisker_high: s.whisker_high,
            outliers: s.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_curve(path: &Path, curve: &RidfCurve) -> Result<()> {
    write_rows(
        path,
        curve.samples().iter().map(|s| CurveRow {
            angle_deg: s.angle_deg,
            diff: s.diff,
        }),
    )
}

/// Reads back a curve written by [`emit_plot_data`].
pub fn parse_ridf_csv(path: &Path) -> Result<RidfCurve> {
    let mut r = csv::Reader::from_path(path)?;
    let samples = r
        .deserialize::<CurveRow>()
        .map(|row| {
            row.map(|r| RidfSample {
                angle_deg: r.angle_deg,
                diff: r.diff,
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    RidfCurve::new(samples)
}

/// Writes all plot files into `out_dir` and returns their paths.
pub fn emit_plot_data(eval: &Evaluation, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for p in &eval.positions {
        let path = out_dir.join(format!("ridf_{}.csv", p.route_index));
        write_curve(&path, &p.on_route.curve)?;
        written.push(path);
        for (offset, probe) in &p.tests {
            let path = out_dir.join(format!("ridf_{}_off_{}.csv", p.route_index, offset));
            write_curve(&path, &probe.curve)?;
            written.push(path);
        }
    }

    let path = out_dir.join("errors.csv");
    write_rows(
        &path,
        eval.positions.iter().flat_map(|p| {
            p.tests.iter().map(|(o, probe)| ErrorRow {
                position: p.route_index,
                lateral_offset_cm: *o,
                estimate_deg: probe.estimate_deg,
                error_deg: probe.error_deg,
            })
        }),
    )?;
    written.push(path);

    let path = out_dir.join("route_errors.csv");
    write_rows(
        &path,
        eval.positions.iter().map(|p| RouteErrorRow {
            position: p.route_index,
            estimate_deg: p.on_route.estimate_deg,
            error_deg: p.on_route.error_deg,
        }),
    )?;
    written.push(path);

    let path = out_dir.join("summary.csv");
    let rows = std::iter::once(SummaryRow::new("on_route", None, &eval.on_route_summary))
        .chain(eval.by_offset.iter().map(|(o, s)| SummaryRow::new("test", Some(*o), s)));
    write_rows(&path, rows)?;
    written.push(path);
    Ok(written)
}
