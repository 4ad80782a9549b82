use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box-plot summary of a set of angular errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Furthest data within 1.5 IQR of the quartiles, clamped to the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data, inclusive of both ends.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxplot_stats(values: &[f64]) -> Result<ErrorSummary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no values to summarise"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |x: &&f64| **x >= lo_fence && **x <= hi_fence;
    Ok(ErrorSummary {
        count: v.len(),
        min: v[0],
        q1,
        median,
        q3,
        max: v[v.len() - 1],
        // A whisker never ends inside the box, even when no datum lies between quartile and fence.
        whisker_low: v.iter().copied().find(|x| inside(&x)).map_or(q1, |x| x.min(q1)),
        whisker_high: v.iter().rev().copied().find(|x| inside(&x)).map_or(q3, |x| x.max(q3)),
        outliers: v.iter().copied().filter(|x| !inside(&x)).collect(),
    })
}
