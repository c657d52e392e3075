//! Windowed k-means over per-frame motion features.
//!
//! Centers live in a joint space of feature values and a real-valued
//! frame position. Assignment is restricted to a temporal window of
//! `S = N / K` frames around each center, centers are re-fit to the
//! mean of their members, and the loop stops once total center
//! movement falls under a threshold. Postprocessing makes labels
//! temporally contiguous and merges runs that came out too short.

use thiserror::Error;

use crate::features::{self, FrameFeatures};
use crate::flow_io::BoundarySet;

#[derive(Debug, Error)]
pub enum SuperframeError {
    #[error("k = {k} exceeds the number of frames {n_frames}")]
    KTooLarge { k: usize, n_frames: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// One cluster center: feature values plus a real-valued frame
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenter {
    pub features: Vec<f64>,
    pub position: f64,
}

/// Tuning knobs for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuperframeParams {
    /// Desired cluster count K.
    pub k: usize,
    /// Compactness m; `None` uses the default 0.1 * K. Larger values
    /// favor temporally regular segments.
    pub compactness: Option<f64>,
    /// Stop once the total L1 center movement drops to this value.
    pub convergence_eps: f64,
    /// Hard iteration cap; windowed Lloyd loops can oscillate.
    pub max_iters: usize,
    /// Minimum surviving run length; `None` uses max(2, round(S / 4)).
    pub min_length: Option<usize>,
}

impl SuperframeParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            compactness: None,
            convergence_eps: 1e-3,
            max_iters: 100,
            min_length: None,
        }
    }

    pub fn compactness_value(&self) -> f64 {
        self.compactness.unwrap_or(0.1 * self.k as f64)
    }

    pub fn min_length_value(&self, interval: f64) -> usize {
        self.min_length
            .unwrap_or_else(|| ((interval / 4.0).round() as usize).max(2))
    }

    pub fn validate(&self, n_frames: usize) -> Result<(), SuperframeError> {
        if self.k < 1 {
            return Err(SuperframeError::InvalidParams("k must be at least 1".into()));
        }
        if self.k > n_frames {
            return Err(SuperframeError::KTooLarge {
                k: self.k,
                n_frames,
            });
        }
        if !(self.compactness_value() > 0.0) {
            return Err(SuperframeError::InvalidParams(
                "compactness must be positive".into(),
            ));
        }
        if self.max_iters < 1 {
            return Err(SuperframeError::InvalidParams(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(SuperframeError::InvalidParams(
                "convergence threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Final clustering result.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Per-frame cluster id, contiguous runs numbered 0..H-1.
    pub labels: Vec<usize>,
    /// Centers as left by the assignment loop; postprocessing is label
    /// surgery only and does not re-fit them.
    pub centers: Vec<ClusterCenter>,
    /// Assignment/update iterations actually executed.
    pub iterations: usize,
    /// L1 center movement of the last iteration.
    pub final_error: f64,
}

impl Segmentation {
    pub fn n_frames(&self) -> usize {
        self.labels.len()
    }

    /// Number of contiguous runs in the label array.
    pub fn num_segments(&self) -> usize {
        runs_of(&self.labels).len()
    }

    pub fn boundaries(&self) -> BoundarySet {
        boundaries_of(&self.labels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Run {
    label: usize,
    start: usize,
    end: usize, // inclusive
}

impl Run {
    fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

fn runs_of(labels: &[usize]) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.label == label => run.end = i,
            _ => runs.push(Run {
                label,
                start: i,
                end: i,
            }),
        }
    }
    runs
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_rows(features: &[Vec<f64>], start: usize, end: usize) -> Vec<f64> {
    let dim = features[start].len();
    let mut sum = vec![0f64; dim];
    for row in &features[start..=end] {
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
    }
    let count = (end - start + 1) as f64;
    for s in sum.iter_mut() {
        *s /= count;
    }
    sum
}

/// Places K centers on the regular grid `round(S/2 + i*S)`, `S = N/K`,
/// copying each center's features from its frame. With `K == N` the
/// grid degenerates to one center per frame.
pub fn init_centers(
    features: &[Vec<f64>],
    k: usize,
) -> Result<Vec<ClusterCenter>, SuperframeError> {
    let n = features.len();
    if k < 1 {
        return Err(SuperframeError::InvalidParams("k must be at least 1".into()));
    }
    if k > n {
        return Err(SuperframeError::KTooLarge { k, n_frames: n });
    }
    let positions: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        let s = n as f64 / k as f64;
        (0..k)
            .map(|i| (s / 2.0 + i as f64 * s).round() as usize)
            .collect()
    };
    Ok(positions
        .into_iter()
        .map(|p| ClusterCenter {
            features: features[p].clone(),
            position: p as f64,
        })
        .collect())
}

/// Moves each center to the lowest-gradient frame among its rounded
/// position and the two neighbors, avoiding noisy frames. Candidates
/// are clipped to the interior where the central difference exists;
/// ties stay at the original position, then go to the smaller index.
/// Center features are refreshed from the chosen frame.
pub fn perturb_centers(centers: &mut [ClusterCenter], features: &[Vec<f64>]) {
    let n = features.len();
    if n < 3 {
        return;
    }
    for center in centers.iter_mut() {
        let p = center.position.round() as i64;
        let mut best: Option<(f64, usize)> = None;
        for candidate in [p, p - 1, p + 1] {
            if candidate < 1 || candidate > n as i64 - 2 {
                continue;
            }
            let candidate = candidate as usize;
            let g = features::gradient(features, candidate)
                .expect("candidate clipped to interior");
            if best.map_or(true, |(bg, _)| g < bg) {
                best = Some((g, candidate));
            }
        }
        if let Some((_, frame)) = best {
            center.position = frame as f64;
            center.features = features[frame].clone();
        }
    }
}

/// Distance between a center and a frame: feature distance scaled by
/// the compactness and temporal distance scaled by the interval,
/// combined as sqrt((dc/m)^2 + (ds/S)^2).
pub fn distance(
    center: &ClusterCenter,
    features: &[f64],
    frame: usize,
    compactness: f64,
    interval: f64,
) -> f64 {
    let dc = euclid(&center.features, features);
    let ds = (center.position - frame as f64).abs();
    ((dc / compactness).powi(2) + (ds / interval).powi(2)).sqrt()
}

/// Labels every frame with its best center among those whose window
/// `[position - S, position + S]` covers it; frames outside all
/// windows fall back to the globally nearest center. Ties go to the
/// smaller center index.
pub fn assign_frames(
    centers: &[ClusterCenter],
    features: &[Vec<f64>],
    compactness: f64,
    interval: f64,
) -> Vec<usize> {
    assert!(!centers.is_empty(), "assign_frames requires centers");
    features
        .iter()
        .enumerate()
        .map(|(frame, row)| {
            let mut best_window: Option<(f64, usize)> = None;
            let mut best_global: Option<(f64, usize)> = None;
            for (ci, center) in centers.iter().enumerate() {
                let d = distance(center, row, frame, compactness, interval);
                if best_global.map_or(true, |(bd, _)| d < bd) {
                    best_global = Some((d, ci));
                }
                if (frame as f64 - center.position).abs() <= interval
                    && best_window.map_or(true, |(bd, _)| d < bd)
                {
                    best_window = Some((d, ci));
                }
            }
            best_window.or(best_global).expect("centers nonempty").1
        })
        .collect()
}

/// Re-fits every center to the mean features and mean frame position
/// of its members; empty clusters keep their previous center. Returns
/// the new centers and the total L1 movement across all components.
pub fn update_centers(
    centers: &[ClusterCenter],
    labels: &[usize],
    features: &[Vec<f64>],
) -> (Vec<ClusterCenter>, f64) {
    let k = centers.len();
    let dim = centers.first().map_or(0, |c| c.features.len());
    let mut sums = vec![vec![0f64; dim]; k];
    let mut position_sums = vec![0f64; k];
    let mut counts = vec![0usize; k];
    for (frame, (&label, row)) in labels.iter().zip(features).enumerate() {
        debug_assert!(label < k, "label out of range");
        for (s, x) in sums[label].iter_mut().zip(row) {
            *s += x;
        }
        position_sums[label] += frame as f64;
        counts[label] += 1;
    }

    let mut error = 0f64;
    let new_centers: Vec<ClusterCenter> = centers
        .iter()
        .enumerate()
        .map(|(ci, old)| {
            if counts[ci] == 0 {
                return old.clone();
            }
            let count = counts[ci] as f64;
            let mut center_features = std::mem::take(&mut sums[ci]);
            for s in center_features.iter_mut() {
                *s /= count;
            }
            let position = position_sums[ci] / count;
            error += old
                .features
                .iter()
                .zip(&center_features)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            error += (old.position - position).abs();
            ClusterCenter {
                features: center_features,
                position,
            }
        })
        .collect();
    (new_centers, error)
}

/// Rewrites labels so every cluster id occupies one contiguous run.
///
/// For each id only its longest run keeps the id (ties: earliest).
/// The frames between two surviving runs are split at the first frame
/// whose features sit closer to the right run's mean; everything
/// before the split joins the left run, the rest joins the right run.
/// Frames before the first or after the last surviving run join it.
pub fn enforce_contiguity(labels: &[usize], features: &[Vec<f64>]) -> Vec<usize> {
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert_eq!(features.len(), n);
    let runs = runs_of(labels);

    // Longest run per label, earliest on ties.
    let max_label = *labels.iter().max().expect("nonempty");
    let mut kept_for_label: Vec<Option<usize>> = vec![None; max_label + 1];
    for (ri, run) in runs.iter().enumerate() {
        let slot = &mut kept_for_label[run.label];
        match slot {
            Some(best) if runs[*best].len() >= run.len() => {}
            _ => *slot = Some(ri),
        }
    }
    let mut kept: Vec<usize> = kept_for_label.into_iter().flatten().collect();
    kept.sort_unstable();

    let kept_means: Vec<Vec<f64>> = kept
        .iter()
        .map(|&ri| mean_rows(features, runs[ri].start, runs[ri].end))
        .collect();

    let mut out = vec![usize::MAX; n];
    for &ri in &kept {
        for slot in out.iter_mut().take(runs[ri].end + 1).skip(runs[ri].start) {
            *slot = runs[ri].label;
        }
    }

    // Leading and trailing gaps have a single adjacent survivor.
    let first = &runs[kept[0]];
    for slot in out.iter_mut().take(first.start) {
        *slot = first.label;
    }
    let last = &runs[*kept.last().expect("nonempty")];
    for slot in out.iter_mut().skip(last.end + 1) {
        *slot = last.label;
    }

    // Interior gaps: split between the two neighbors.
    for w in 0..kept.len().saturating_sub(1) {
        let left = &runs[kept[w]];
        let right = &runs[kept[w + 1]];
        let gap_start = left.end + 1;
        let gap_end = right.start; // exclusive
        if gap_start >= gap_end {
            continue;
        }
        let mut cut = gap_end;
        for frame in gap_start..gap_end {
            let d_left = euclid(&features[frame], &kept_means[w]);
            let d_right = euclid(&features[frame], &kept_means[w + 1]);
            if d_right < d_left {
                cut = frame;
                break;
            }
        }
        for (frame, slot) in out.iter_mut().enumerate().take(gap_end).skip(gap_start) {
            *slot = if frame < cut { left.label } else { right.label };
        }
    }
    out
}

/// Repeatedly merges the shortest run under `min_length` into the
/// temporally adjacent run whose mean feature vector is closer (ties:
/// left), recomputing run means after each merge, until every run is
/// long enough or a single run remains. Labels are renumbered 0..H-1
/// left to right.
pub fn merge_short_clusters(
    labels: &[usize],
    features: &[Vec<f64>],
    min_length: usize,
) -> Vec<usize> {
    let n = labels.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert_eq!(features.len(), n);
    let dim = features[0].len();

    struct Agg {
        start: usize,
        end: usize,
        sum: Vec<f64>,
    }
    impl Agg {
        fn len(&self) -> usize {
            self.end - self.start + 1
        }
        fn mean(&self) -> Vec<f64> {
            let count = self.len() as f64;
            self.sum.iter().map(|s| s / count).collect()
        }
    }

    let mut runs: Vec<Agg> = runs_of(labels)
        .into_iter()
        .map(|run| {
            let mut sum = vec![0f64; dim];
            for row in &features[run.start..=run.end] {
                for (s, x) in sum.iter_mut().zip(row) {
                    *s += x;
                }
            }
            Agg {
                start: run.start,
                end: run.end,
                sum,
            }
        })
        .collect();

    while runs.len() > 1 {
        let mut victim: Option<usize> = None;
        for (i, run) in runs.iter().enumerate() {
            if run.len() < min_length && victim.is_none_or(|v| run.len() < runs[v].len()) {
                victim = Some(i);
            }
        }
        let Some(i) = victim else { break };
        let target = if i == 0 {
            1
        } else if i == runs.len() - 1 {
            i - 1
        } else {
            let mean = runs[i].mean();
            let d_left = euclid(&mean, &runs[i - 1].mean());
            let d_right = euclid(&mean, &runs[i + 1].mean());
            if d_left <= d_right {
                i - 1
            } else {
                i + 1
            }
        };
        let removed = runs.remove(i);
        let target = if target > i { target - 1 } else { target };
        let merged = &mut runs[target];
        merged.start = merged.start.min(removed.start);
        merged.end = merged.end.max(removed.end);
        for (s, x) in merged.sum.iter_mut().zip(&removed.sum) {
            *s += x;
        }
    }

    let mut out = vec![0usize; n];
    for (new_label, run) in runs.iter().enumerate() {
        for slot in out.iter_mut().take(run.end + 1).skip(run.start) {
            *slot = new_label;
        }
    }
    out
}

/// First frame of every run except the first; the inverse of cutting
/// the timeline at each boundary.
pub fn boundaries_of(labels: &[usize]) -> BoundarySet {
    let runs = runs_of(labels);
    let boundaries: Vec<usize> = runs.iter().skip(1).map(|run| run.start).collect();
    BoundarySet::new(boundaries, labels.len()).expect("run starts are in range")
}

/// Full clustering pass over generic feature rows (one row per frame,
/// uniform dimension): grid init, gradient perturbation, windowed
/// assignment/update loop, then contiguity and short-run cleanup.
/// Deterministic: equal inputs give bit-identical output.
pub fn run_vectors(
    features: &[Vec<f64>],
    params: &SuperframeParams,
) -> Result<Segmentation, SuperframeError> {
    let n = features.len();
    if n == 0 {
        return Err(SuperframeError::InvalidParams("no frames".into()));
    }
    params.validate(n)?;
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|row| row.len() != dim) {
        return Err(SuperframeError::InvalidParams(
            "feature rows must share one non-zero dimension".into(),
        ));
    }

    let interval = n as f64 / params.k as f64;
    let compactness = params.compactness_value();

    let mut centers = init_centers(features, params.k)?;
    perturb_centers(&mut centers, features);

    let mut labels = Vec::new();
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        labels = assign_frames(&centers, features, compactness, interval);
        let (new_centers, e) = update_centers(&centers, &labels, features);
        centers = new_centers;
        error = e;
        iterations += 1;
        if error <= params.convergence_eps {
            break;
        }
    }

    let labels = enforce_contiguity(&labels, features);
    let labels = merge_short_clusters(&labels, features, params.min_length_value(interval));

    Ok(Segmentation {
        labels,
        centers,
        iterations,
        final_error: error,
    })
}

/// [`run_vectors`] over the standard 19-value histogram features.
/// Row order is the temporal order; each row's position in the slice
/// is its frame coordinate.
pub fn run(
    features: &[FrameFeatures],
    params: &SuperframeParams,
) -> Result<Segmentation, SuperframeError> {
    run_vectors(&features::feature_vectors(features), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot(dim: usize, hot: usize) -> Vec<f64> {
        let mut v = vec![0f64; dim];
        v[hot] = 1.0;
        v
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn init_positions_follow_the_grid() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(1), 10, 4);
        let centers = init_centers(&rows, 2).unwrap();
        let positions: Vec<f64> = centers.iter().map(|c| c.position).collect();
        assert_eq!(positions, vec![3.0, 8.0]);
        assert_eq!(centers[0].features, rows[3]);
        assert_eq!(centers[1].features, rows[8]);
    }

    #[test]
    fn init_with_k_equal_n_uses_every_frame() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(2), 6, 3);
        let centers = init_centers(&rows, 6).unwrap();
        let positions: Vec<f64> = centers.iter().map(|c| c.position).collect();
        assert_eq!(positions, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn init_with_single_cluster_sits_mid_video() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(3), 10, 3);
        let centers = init_centers(&rows, 1).unwrap();
        assert_eq!(centers[0].position, 5.0);
    }

    #[test]
    fn init_rejects_k_above_n() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(4), 3, 2);
        assert!(matches!(
            init_centers(&rows, 4),
            Err(SuperframeError::KTooLarge { k: 4, n_frames: 3 })
        ));
    }

    #[test]
    fn perturb_stays_put_on_flat_gradient() {
        let rows = vec![vec![0.5, 0.5]; 9];
        let mut centers = init_centers(&rows, 2).unwrap();
        let before: Vec<f64> = centers.iter().map(|c| c.position).collect();
        perturb_centers(&mut centers, &rows);
        let after: Vec<f64> = centers.iter().map(|c| c.position).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn perturb_moves_to_strictly_lower_gradient() {
        // Features chosen so G(3) < G(4) < G(5) around the center at 4.
        let mut rows = vec![vec![0.0, 0.0]; 9];
        rows[3] = vec![0.05, 0.0];
        rows[4] = vec![0.3, 0.0];
        rows[5] = vec![0.9, 0.0];
        rows[6] = vec![2.0, 0.0];
        let mut centers = vec![ClusterCenter {
            features: rows[4].clone(),
            position: 4.0,
        }];
        let g3 = features::gradient(&rows, 3).unwrap();
        let g4 = features::gradient(&rows, 4).unwrap();
        let g5 = features::gradient(&rows, 5).unwrap();
        assert!(g3 < g4 && g4 < g5);
        perturb_centers(&mut centers, &rows);
        assert_eq!(centers[0].position, 3.0);
        assert_eq!(centers[0].features, rows[3]);
    }

    // Exhaustive neighborhood oracle, including the clipped edge case
    // of a center at frame 0.
    #[test]
    fn perturb_matches_exhaustive_neighborhood_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(3..30usize);
            let rows = random_rows(&mut rng, n, 5);
            let position = rng.random_range(0..n);
            let mut centers = vec![ClusterCenter {
                features: rows[position].clone(),
                position: position as f64,
            }];
            perturb_centers(&mut centers, &rows);

            let p = position as i64;
            let candidates: Vec<usize> = [p, p - 1, p + 1]
                .into_iter()
                .filter(|&c| c >= 1 && c <= n as i64 - 2)
                .map(|c| c as usize)
                .collect();
            let expected = candidates
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    features::gradient(&rows, a)
                        .unwrap()
                        .partial_cmp(&features::gradient(&rows, b).unwrap())
                        .unwrap()
                })
                .map(|f| f as f64)
                .unwrap_or(position as f64);
            assert_eq!(centers[0].position, expected);
        }
    }

    #[test]
    fn distance_zero_for_identical_center_and_frame() {
        let center = ClusterCenter {
            features: vec![0.2, 0.8],
            position: 5.0,
        };
        assert_eq!(distance(&center, &[0.2, 0.8], 5, 0.5, 10.0), 0.0);
    }

    #[test]
    fn distance_unit_temporal_term() {
        let center = ClusterCenter {
            features: vec![0.2, 0.8],
            position: 0.0,
        };
        assert_abs_diff_eq!(distance(&center, &[0.2, 0.8], 10, 0.5, 10.0), 1.0);
    }

    // Hand evaluation: dc=1, ds=3, m=2, S=6 -> sqrt(0.25 + 0.25).
    #[test]
    fn distance_matches_hand_evaluation() {
        let center = ClusterCenter {
            features: vec![1.0, 0.0, 0.0],
            position: 0.0,
        };
        assert_abs_diff_eq!(
            distance(&center, &[0.0, 0.0, 0.0], 3, 2.0, 6.0),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn assign_single_center_labels_everything() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(5), 12, 3);
        let centers = init_centers(&rows, 1).unwrap();
        let labels = assign_frames(&centers, &rows, 0.1, 12.0);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn assign_breaks_exact_ties_toward_smaller_index() {
        let features = vec![vec![0.5]; 7];
        let centers = vec![
            ClusterCenter {
                features: vec![0.5],
                position: 1.0,
            },
            ClusterCenter {
                features: vec![0.5],
                position: 5.0,
            },
        ];
        // frame 3 is exactly midway with identical feature distance
        let labels = assign_frames(&centers, &features, 0.2, 7.0);
        assert_eq!(labels[3], 0);
    }

    // Brute-force oracle: with windows covering every frame, the
    // windowed assignment equals unwindowed nearest-center search.
    #[test]
    fn assign_matches_brute_force_when_windows_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..25 {
            let n = rng.random_range(2..50usize);
            let k = rng.random_range(1..=5usize.min(n));
            let rows = random_rows(&mut rng, n, 4);
            let centers: Vec<ClusterCenter> = (0..k)
                .map(|_| ClusterCenter {
                    features: (0..4).map(|_| rng.random_range(0.0..1.0)).collect(),
                    position: rng.random_range(0.0..n as f64),
                })
                .collect();
            let compactness = rng.random_range(0.05..2.0);
            let interval = 2.0 * n as f64; // every window covers every frame
            let labels = assign_frames(&centers, &rows, compactness, interval);
            for (frame, row) in rows.iter().enumerate() {
                let mut best = (f64::INFINITY, 0usize);
                for (ci, center) in centers.iter().enumerate() {
                    let d = distance(center, row, frame, compactness, interval);
                    if d < best.0 {
                        best = (d, ci);
                    }
                }
                assert_eq!(labels[frame], best.1, "frame {frame}");
            }
        }
    }

    #[test]
    fn update_is_a_fixed_point_on_exact_members() {
        let rows = vec![vec![0.25, 0.75]; 4];
        let centers = vec![ClusterCenter {
            features: vec![0.25, 0.75],
            position: 1.5,
        }];
        let labels = vec![0, 0, 0, 0];
        let (new_centers, error) = update_centers(&centers, &labels, &rows);
        assert_eq!(error, 0.0);
        assert_eq!(new_centers[0].position, 1.5);
    }

    #[test]
    fn update_averages_members() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![0.4, 0.6],
            vec![0.0, 0.0],
            vec![0.4, 0.6],
        ];
        let centers = vec![
            ClusterCenter {
                features: vec![0.0, 0.0],
                position: 0.5,
            },
            ClusterCenter {
                features: vec![0.0, 0.0],
                position: 4.0,
            },
        ];
        let labels = vec![0, 0, 1, 0, 1];
        let (new_centers, _) = update_centers(&centers, &labels, &rows);
        assert_eq!(new_centers[1].position, 3.0); // mean of frames {2, 4}
        assert_eq!(new_centers[1].features, vec![0.4, 0.6]);
    }

    #[test]
    fn update_keeps_empty_clusters() {
        let rows = vec![vec![1.0]; 3];
        let centers = vec![
            ClusterCenter {
                features: vec![1.0],
                position: 1.0,
            },
            ClusterCenter {
                features: vec![9.0],
                position: 2.0,
            },
        ];
        let labels = vec![0, 0, 0];
        let (new_centers, _) = update_centers(&centers, &labels, &rows);
        assert_eq!(new_centers[1], centers[1]);
    }

    // Independent recomputation of the movement error.
    #[test]
    fn update_error_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20;
        let rows = random_rows(&mut rng, n, 3);
        let centers: Vec<ClusterCenter> = (0..4)
            .map(|_| ClusterCenter {
                features: (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
                position: rng.random_range(0.0..n as f64),
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let (new_centers, error) = update_centers(&centers, &labels, &rows);

        let mut expected = 0f64;
        for (old, new) in centers.iter().zip(&new_centers) {
            expected += old
                .features
                .iter()
                .zip(&new.features)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            expected += (old.position - new.position).abs();
        }
        assert_abs_diff_eq!(error, expected, epsilon = 1e-12);
    }

    #[test]
    fn contiguity_keeps_already_contiguous_labels() {
        let labels = vec![0, 0, 1, 1, 1, 2];
        let rows = vec![vec![0.0]; 6];
        assert_eq!(enforce_contiguity(&labels, &rows), labels);
    }

    // Hand trace: the displaced second run of id 0 joins the only
    // adjacent surviving run.
    #[test]
    fn contiguity_relabels_displaced_run() {
        let labels = vec![0, 1, 0];
        let rows = vec![vec![0.0], vec![1.0], vec![0.9]];
        assert_eq!(enforce_contiguity(&labels, &rows), vec![0, 1, 1]);
    }

    #[test]
    fn contiguity_splits_gap_by_feature_distance() {
        // Id 2's short first run is displaced by its longer final run;
        // the two gap frames prefer opposite neighbors, so the cut
        // lands between them.
        let labels = vec![0, 0, 2, 2, 1, 1, 2, 2, 2];
        let rows = vec![
            vec![0.0],
            vec![0.0],
            vec![0.1], // close to the left survivor's mean 0.0
            vec![0.9], // close to the right survivor's mean 1.0
            vec![1.0],
            vec![1.0],
            vec![5.0],
            vec![5.0],
            vec![5.0],
        ];
        let out = enforce_contiguity(&labels, &rows);
        assert_eq!(out, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    // Property check with random inputs.
    #[test]
    fn contiguity_holds_on_random_label_arrays() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let n = rng.random_range(1..40usize);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let rows = random_rows(&mut rng, n, 3);
            let out = enforce_contiguity(&labels, &rows);
            assert_eq!(out.len(), n);
            let runs = runs_of(&out);
            let mut seen = std::collections::HashSet::new();
            for run in &runs {
                assert!(seen.insert(run.label), "label {} split", run.label);
            }
        }
    }

    #[test]
    fn merge_keeps_long_runs_untouched() {
        let labels = vec![0, 0, 0, 1, 1, 1];
        let rows = vec![vec![0.0]; 6];
        assert_eq!(merge_short_clusters(&labels, &rows, 3), labels);
    }

    // Forced direction: the short middle run's features equal the
    // right neighbor's mean and are far from the left's.
    #[test]
    fn merge_goes_to_the_closer_side() {
        let mut labels = vec![0; 10];
        labels.extend([1]);
        labels.extend([2; 10]);
        let mut rows = vec![vec![0.0]; 10];
        rows.push(vec![5.0]);
        rows.extend(vec![vec![5.0]; 10]);
        let out = merge_short_clusters(&labels, &rows, 2);
        assert_eq!(out[10], out[11]); // merged right
        assert_ne!(out[10], out[9]);
        assert_eq!(runs_of(&out).len(), 2);
    }

    #[test]
    fn merge_ties_go_left() {
        let labels = vec![0, 0, 1, 2, 2];
        let rows = vec![vec![0.0]; 5];
        let out = merge_short_clusters(&labels, &rows, 2);
        assert_eq!(out, vec![0, 0, 0, 1, 1]);
    }

    // Property check: run-length floor, frame count preserved, run
    // count never grows.
    #[test]
    fn merge_guarantees_min_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let n = rng.random_range(1..60usize);
            let mut labels = Vec::with_capacity(n);
            let mut label = 0usize;
            while labels.len() < n {
                let run = rng.random_range(1..6usize).min(n - labels.len());
                labels.extend(std::iter::repeat_n(label, run));
                label += 1;
            }
            let rows = random_rows(&mut rng, n, 2);
            let min_length = rng.random_range(1..8usize);
            let before_runs = runs_of(&labels).len();
            let out = merge_short_clusters(&labels, &rows, min_length);
            assert_eq!(out.len(), n);
            let runs = runs_of(&out);
            assert!(runs.len() <= before_runs);
            if runs.len() > 1 {
                assert!(
                    runs.iter().all(|r| r.len() >= min_length),
                    "short run survived: {labels:?} -> {out:?} (min {min_length})"
                );
            }
            // renumbered left to right
            for (expected, run) in runs.iter().enumerate() {
                assert_eq!(run.label, expected);
            }
        }
    }

    #[test]
    fn boundaries_read_off_run_starts() {
        assert_eq!(boundaries_of(&[0, 0, 1, 1, 2]).boundaries(), &[2, 4]);
        assert!(boundaries_of(&[0, 0, 0]).is_empty());
    }

    // Reconstruction oracle: rebuild labels from the boundary set and
    // compare run extents.
    #[test]
    fn boundaries_roundtrip_to_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let n = rng.random_range(1..40usize);
            let mut labels = Vec::with_capacity(n);
            let mut label = 0usize;
            while labels.len() < n {
                let run = rng.random_range(1..7usize).min(n - labels.len());
                labels.extend(std::iter::repeat_n(label, run));
                label += 1;
            }
            let set = boundaries_of(&labels);
            let mut rebuilt = Vec::with_capacity(n);
            let mut current = 0usize;
            for frame in 0..n {
                if set.boundaries().contains(&frame) {
                    current += 1;
                }
                rebuilt.push(current);
            }
            assert_eq!(rebuilt, labels);
        }
    }

    #[test]
    fn run_finds_the_junction_of_two_blocks() {
        let mut rows = vec![one_hot(19, 2); 10];
        rows.extend(vec![one_hot(19, 7); 10]);
        let seg = run_vectors(&rows, &SuperframeParams::new(2)).unwrap();
        assert_eq!(seg.boundaries().boundaries(), &[10]);
        assert_eq!(seg.num_segments(), 2);
    }

    #[test]
    fn run_on_constant_features_splits_evenly() {
        let rows = vec![vec![0.3, 0.7]; 40];
        let seg = run_vectors(&rows, &SuperframeParams::new(4)).unwrap();
        let runs = runs_of(&seg.labels);
        assert_eq!(runs.len(), 4);
        for run in &runs {
            assert!(
                (run.len() as i64 - 10).abs() <= 2,
                "run lengths {:?}",
                runs.iter().map(Run::len).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn run_with_one_cluster_and_one_frame_converges_immediately() {
        let rows = vec![vec![0.5, 0.5]];
        let seg = run_vectors(&rows, &SuperframeParams::new(1)).unwrap();
        assert_eq!(seg.labels, vec![0]);
        assert_eq!(seg.iterations, 1);
        assert_eq!(seg.final_error, 0.0);
    }

    #[test]
    fn run_with_one_cluster_covers_all_frames() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(14), 25, 19);
        let seg = run_vectors(&rows, &SuperframeParams::new(1)).unwrap();
        assert!(seg.labels.iter().all(|&l| l == 0));
        assert!(seg.boundaries().is_empty());
    }

    #[test]
    fn run_is_deterministic() {
        let rows = random_rows(&mut ChaCha8Rng::seed_from_u64(15), 60, 19);
        let params = SuperframeParams::new(5);
        let a = run_vectors(&rows, &params).unwrap();
        let b = run_vectors(&rows, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn run_rejects_k_above_n() {
        let rows = vec![vec![0.0]; 3];
        assert!(matches!(
            run_vectors(&rows, &SuperframeParams::new(4)),
            Err(SuperframeError::KTooLarge { .. })
        ));
    }
}
