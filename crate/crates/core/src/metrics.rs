//! Word-accuracy metrics, incomplete-text margin, saturation arithmetic and
//! report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::PredictionManifest;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("model {model_id:?} has no prediction for {missing} ground-truth sample(s), first {first:?}")]
    CoverageGap { model_id: String, missing: usize, first: String },
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("no subsets to aggregate")]
    NoSubsets,
    #[error("accuracy {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("saturation counts violate mislabeled + unrecognizable <= errors <= total ({0})")]
    ScopePrecondition(String),
}

/// String equality used when comparing a prediction with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Exact match.
    Wa,
    /// Ignoring case.
    Waic,
    /// Ignoring case and every non-alphanumeric character, including spaces.
    #[default]
    Waics,
}

impl NormalizationMode {
    pub const ALL: [NormalizationMode; 3] = [NormalizationMode::Wa, NormalizationMode::Waic, NormalizationMode::Waics];

    pub fn name(self) -> &'static str {
        match self {
            NormalizationMode::Wa => "WA",
            NormalizationMode::Waic => "WAIC",
            NormalizationMode::Waics => "WAICS",
        }
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wa" => Ok(NormalizationMode::Wa),
            "waic" => Ok(NormalizationMode::Waic),
            "waics" => Ok(NormalizationMode::Waics),
            _ => Err(format!("unknown mode {s:?} (expected wa, waic or waics)")),
        }
    }
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn normalize(text: &str, mode: NormalizationMode) -> String {
    match mode {
        NormalizationMode::Wa => text.to_string(),
        NormalizationMode::Waic => text.to_ascii_lowercase(),
        NormalizationMode::Waics => text.chars().filter(|c| c.is_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect(),
    }
}

pub fn is_correct(prediction: &str, truth: &str, mode: NormalizationMode) -> bool {
    normalize(prediction, mode) == normalize(truth, mode)
}

/// Percentage of ground-truth samples whose prediction matches under `mode`.
pub fn word_accuracy(
    manifest: &PredictionManifest,
    gt: &BTreeMap<String, String>,
    mode: NormalizationMode,
) -> Result<f64, MetricsError> {
    if gt.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let mut correct = 0usize;
    let mut missing = Vec::new();
    for (id, truth) in gt {
        match manifest.predictions.get(id) {
            Some(pred) => correct += is_correct(pred, truth, mode) as usize,
            None => missing.push(id),
        }
    }
    if let Some(first) = missing.first() {
        return Err(MetricsError::CoverageGap {
            model_id: manifest.model_id.clone(),
            missing: missing.len(),
            first: (*first).clone(),
        });
    }
    Ok(100.0 * correct as f64 / gt.len() as f64)
}

/// Accuracy before minus accuracy after letter cropping, in percentage points.
/// Lower is better; negative when the cropped set scores higher.
pub fn incomplete_margin(acc_full: f64, acc_cropped: f64) -> f64 {
    acc_full - acc_cropped
}

/// Rounds half away from zero to `decimals` places (half-up for the
/// non-negative values reported in tables).
pub fn round_display(x: f64, decimals: u32) -> f64 {
    let k = 10f64.powi(decimals as i32);
    // nudge by a few ulps so that 78.05 stored as 78.04999.. still rounds up
    let scaled = x * k;
    let nudged = scaled + scaled.signum() * scaled.abs() * 4.0 * f64::EPSILON;
    nudged.round() / k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScopeFigure {
    pub count: u64,
    /// `count / total`, in percent.
    pub percent: f64,
    /// Headline error rate rounded to one decimal, scaled by `count / errors`.
    /// This is how rates derived from a rounded headline figure are usually
    /// quoted (e.g. 3.9% x 222/298 = 2.91%).
    pub headline_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationScope {
    pub total: u64,
    pub errors: u64,
    /// `errors / total`, in percent.
    pub error_percent: f64,
    /// Errors that are not annotation mistakes.
    pub max_scope: ScopeFigure,
    /// Errors that are neither annotation mistakes nor human-unrecognizable.
    pub min_scope: ScopeFigure,
}

/// Remaining accuracy headroom on a benchmark after discounting mislabeled
/// and unrecognizable samples among the jointly failed ones.
pub fn saturation_scope(
    total: u64,
    errors: u64,
    mislabeled: u64,
    unrecognizable: u64,
) -> Result<SaturationScope, MetricsError> {
    if total == 0 || errors > total || mislabeled + unrecognizable > errors {
        return Err(MetricsError::ScopePrecondition(format!(
            "total {total}, errors {errors}, mislabeled {mislabeled}, unrecognizable {unrecognizable}"
        )));
    }
    let error_percent = 100.0 * errors as f64 / total as f64;
    let headline_rate = round_display(error_percent, 1);
    let figure = |count: u64| ScopeFigure {
        count,
        percent: 100.0 * count as f64 / total as f64,
        headline_percent: if errors == 0 { 0.0 } else { headline_rate * count as f64 / errors as f64 },
    };
    let max = errors - mislabeled;
    let min = max - unrecognizable;
    Ok(SaturationScope { total, errors, error_percent, max_scope: figure(max), min_scope: figure(min) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    pub subset: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub mode: NormalizationMode,
    pub per_subset: Vec<SubsetAccuracy>,
    /// Unweighted mean of `per_subset`.
    pub average: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incomplete_margin: Option<f64>,
}

impl MetricReport {
    pub fn display_average(&self) -> f64 {
        round_display(self.average, 1)
    }
}

/// Builds a report whose average is the unweighted mean of the subsets.
pub fn aggregate_report(
    per_subset: Vec<SubsetAccuracy>,
    mode: NormalizationMode,
) -> Result<MetricReport, MetricsError> {
    if per_subset.is_empty() {
        return Err(MetricsError::NoSubsets);
    }
    if let Some(bad) = per_subset.iter().find(|s| !(0.0..=100.0).contains(&s.accuracy)) {
        return Err(MetricsError::OutOfRange(bad.accuracy));
    }
    let average = per_subset.iter().map(|s| s.accuracy).sum::<f64>() / per_subset.len() as f64;
    Ok(MetricReport { model_id: None, mode, per_subset, average, incomplete_margin: None })
}

/// Aligned text table, one row per report: model, subset columns, Avg and
/// (when any report has one) the incomplete margin. Column set is taken from
/// the first report.
pub fn render_table(reports: &[MetricReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let subsets: Vec<&str> = first.per_subset.iter().map(|s| s.subset.as_str()).collect();
    let with_margin = reports.iter().any(|r| r.incomplete_margin.is_some());

    let mut header: Vec<String> = vec!["Model".to_string()];
    header.extend(subsets.iter().map(|s| s.to_string()));
    header.push("Avg".to_string());
    if with_margin {
        header.push("Margin".to_string());
    }
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.model_id.clone().unwrap_or_else(|| "-".to_string())];
        for name in &subsets {
            let cell = r
                .per_subset
                .iter()
                .find(|s| s.subset == *name)
                .map(|s| format!("{:.1}", round_display(s.accuracy, 1)))
                .unwrap_or_else(|| "-".to_string());
            row.push(cell);
        }
        row.push(format!("{:.1}", r.display_average()));
        if with_margin {
            row.push(r.incomplete_margin.map(|m| format!("{:.1}", round_display(m, 1))).unwrap_or_else(|| "-".into()));
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}
