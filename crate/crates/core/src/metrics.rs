//! Segmentation quality: boundary recall and under-segmentation error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow_io::BoundarySet;
use crate::superframe::Segmentation;

/// Default boundary-matching tolerance as a fraction of video length.
pub const DEFAULT_RANGE_FRAC: f64 = 0.008;
/// Default overlap threshold as a fraction of each result segment.
pub const DEFAULT_BETA_FRAC: f64 = 0.25;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frame counts differ: result {result} vs truth {truth}")]
    FrameCountMismatch { result: usize, truth: usize },
}

/// How one ground-truth boundary fared in the matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryMatch {
    /// The ground-truth boundary frame.
    pub truth: usize,
    /// The result boundary it matched, if any.
    pub matched: Option<usize>,
    /// Frame distance to the match.
    pub distance: Option<usize>,
}

/// Combined evaluation result.
///
/// With an empty ground truth there is nothing to miss; recall is
/// reported as 1.0 and `empty_truth` is set so batch averaging can
/// exclude the video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub under_segmentation: f64,
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub r_frames: usize,
    pub empty_truth: bool,
    pub per_boundary: Vec<BoundaryMatch>,
}

impl EvalReport {
    /// Header for the one-line CSV form.
    pub fn csv_header() -> &'static str {
        "recall,under_segmentation,tp,fn,r_frames"
    }

    /// One-line CSV form for sweep aggregation.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.recall, self.under_segmentation, self.tp, self.fn_, self.r_frames
        )
    }
}

/// Recall side of a report, before under-segmentation is filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallStats {
    pub recall: f64,
    pub tp: usize,
    pub fn_: usize,
    pub r_frames: usize,
    pub empty_truth: bool,
    pub per_boundary: Vec<BoundaryMatch>,
}

/// Fraction of ground-truth boundaries matched by a result boundary
/// within tolerance `r = max(1, round(range_frac * N))`.
///
/// Matching is one-to-one and greedy: ground-truth boundaries are
/// visited in ascending order and take the nearest unused result
/// boundary (ties to the smaller index), so one detected boundary
/// cannot explain two true ones.
pub fn boundary_recall(
    result: &BoundarySet,
    truth: &BoundarySet,
    range_frac: f64,
) -> Result<RecallStats, MetricsError> {
    if result.n_frames() != truth.n_frames() {
        return Err(MetricsError::FrameCountMismatch {
            result: result.n_frames(),
            truth: truth.n_frames(),
        });
    }
    let n = truth.n_frames();
    let r_frames = ((range_frac * n as f64).round() as usize).max(1);

    let mut used = vec![false; result.len()];
    let mut per_boundary = Vec::with_capacity(truth.len());
    let mut tp = 0usize;
    for &g in truth.boundaries() {
        let mut best: Option<(usize, usize)> = None; // (distance, index)
        for (i, &s) in result.boundaries().iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = s.abs_diff(g);
            if d <= r_frames && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        match best {
            Some((d, i)) => {
                used[i] = true;
                tp += 1;
                per_boundary.push(BoundaryMatch {
                    truth: g,
                    matched: Some(result.boundaries()[i]),
                    distance: Some(d),
                });
            }
            None => per_boundary.push(BoundaryMatch {
                truth: g,
                matched: None,
                distance: None,
            }),
        }
    }

    let fn_ = truth.len() - tp;
    let empty_truth = truth.is_empty();
    let recall = if empty_truth {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    Ok(RecallStats {
        recall,
        tp,
        fn_,
        r_frames,
        empty_truth,
        per_boundary,
    })
}

/// Splits `[0, N-1]` into the inclusive intervals the boundaries
/// induce.
pub fn intervals_of(set: &BoundarySet) -> Vec<(usize, usize)> {
    let n = set.n_frames();
    if n == 0 {
        return Vec::new();
    }
    let mut intervals = Vec::with_capacity(set.len() + 1);
    let mut start = 0usize;
    for &b in set.boundaries() {
        intervals.push((start, b - 1));
        start = b;
    }
    intervals.push((start, n - 1));
    intervals
}

fn overlap(a: (usize, usize), b: (usize, usize)) -> usize {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if lo > hi {
        0
    } else {
        hi - lo + 1
    }
}

/// Normalized leakage of result segments across ground-truth borders.
///
/// For every ground-truth segment, each result segment overlapping it
/// by more than `beta_frac` of the result segment's own length
/// contributes the smaller of the overlap and the part left outside;
/// the total is divided by N. Segments overlapping several truth
/// segments contribute to each, so the sum can exceed 1.
pub fn undersegmentation_error(
    result: &BoundarySet,
    truth: &BoundarySet,
    beta_frac: f64,
) -> Result<f64, MetricsError> {
    if result.n_frames() != truth.n_frames() {
        return Err(MetricsError::FrameCountMismatch {
            result: result.n_frames(),
            truth: truth.n_frames(),
        });
    }
    let n = truth.n_frames();
    if n == 0 {
        return Ok(0.0);
    }
    let result_intervals = intervals_of(result);
    let mut total = 0usize;
    for g in intervals_of(truth) {
        for &s in &result_intervals {
            let ov = overlap(s, g);
            let s_len = s.1 - s.0 + 1;
            if ov as f64 > beta_frac * s_len as f64 {
                total += ov.min(s_len - ov);
            }
        }
    }
    Ok(total as f64 / n as f64)
}

/// [`undersegmentation_error`] on a clustering result's labels.
pub fn undersegmentation_error_of(
    seg: &Segmentation,
    truth: &BoundarySet,
    beta_frac: f64,
) -> Result<f64, MetricsError> {
    undersegmentation_error(&seg.boundaries(), truth, beta_frac)
}

/// Runs both metrics and assembles the full report.
pub fn evaluate(
    result: &BoundarySet,
    truth: &BoundarySet,
    range_frac: f64,
    beta_frac: f64,
) -> Result<EvalReport, MetricsError> {
    let recall = boundary_recall(result, truth, range_frac)?;
    let ue = undersegmentation_error(result, truth, beta_frac)?;
    Ok(EvalReport {
        recall: recall.recall,
        under_segmentation: ue,
        tp: recall.tp,
        fn_: recall.fn_,
        r_frames: recall.r_frames,
        empty_truth: recall.empty_truth,
        per_boundary: recall.per_boundary,
    })
}
