//! Per-frame motion descriptors computed from dense flow.
//!
//! Each frame is summarized by a normalized 11-bin histogram of flow
//! magnitude and a normalized 8-bin histogram of flow direction; the
//! frame index is carried separately so clustering can trade feature
//! distance against temporal distance.

use thiserror::Error;

use crate::flow_io::FlowField;

/// Number of magnitude histogram bins.
pub const HOM_BINS: usize = 11;
/// Number of direction histogram bins.
pub const HOD_BINS: usize = 8;
/// Length of the combined feature vector (magnitude + direction bins).
pub const FEATURE_DIM: usize = HOM_BINS + HOD_BINS;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("gradient index {index} out of range [1, {max}]")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("invalid feature params: {0}")]
    InvalidParams(String),
}

/// The 19-value descriptor of one frame plus its index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frame: usize,
    pub hom: [f64; HOM_BINS],
    pub hod: [f64; HOD_BINS],
}

impl FrameFeatures {
    /// Concatenated `hom ++ hod` vector, the X of the distance measure.
    pub fn vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.hom);
        v.extend_from_slice(&self.hod);
        v
    }
}

/// Mean-flow descriptor used by the averaged-feature comparison runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedFlow {
    pub frame: usize,
    pub mean_u: f64,
    pub mean_v: f64,
}

impl AveragedFlow {
    pub fn vector(&self) -> Vec<f64> {
        vec![self.mean_u, self.mean_v]
    }
}

/// Binning parameters for [`compute_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    /// 12 ascending magnitude bin edges in pixels/frame. The first edge
    /// must be 0 and the last must be +inf so every magnitude lands in
    /// exactly one of the 11 half-open bins.
    pub mag_edges: [f64; HOM_BINS + 1],
    /// Minimum magnitude for a pixel to vote in the direction
    /// histogram. Filters static-background noise out of HOD.
    pub motion_gate: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            mag_edges: [
                0.0,
                0.1,
                0.5,
                1.0,
                2.0,
                4.0,
                6.0,
                8.0,
                12.0,
                16.0,
                24.0,
                f64::INFINITY,
            ],
            motion_gate: 0.1,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.mag_edges[0] != 0.0 {
            return Err(FeatureError::InvalidParams(
                "first magnitude edge must be 0".into(),
            ));
        }
        if self.mag_edges[HOM_BINS] != f64::INFINITY {
            return Err(FeatureError::InvalidParams(
                "last magnitude edge must be +inf".into(),
            ));
        }
        if self.mag_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::InvalidParams(
                "magnitude edges must be strictly ascending".into(),
            ));
        }
        if !(self.motion_gate >= 0.0) {
            return Err(FeatureError::InvalidParams(
                "motion gate must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Computes the magnitude and direction histograms for one frame.
///
/// Every pixel votes into the magnitude bin whose half-open interval
/// `[edge_i, edge_i+1)` contains `sqrt(u^2 + v^2)`; non-finite
/// magnitudes land in the overflow bin. Pixels at or above the motion
/// gate also cast an unweighted vote into one of 8 direction sectors of
/// 45 degrees; bin 0 is centered on the positive-u axis and `v` is
/// negated before `atan2` so upward screen motion reads as 90 degrees.
/// Each histogram is divided by its own vote count; with no gated
/// pixels the direction histogram stays all-zero.
pub fn compute_features(flow: &FlowField, frame: usize, params: &FeatureParams) -> FrameFeatures {
    let mut hom_votes = [0u64; HOM_BINS];
    let mut hod_votes = [0u64; HOD_BINS];
    let mut gated = 0u64;

    for (&u, &v) in flow.u.iter().zip(&flow.v) {
        let u = u as f64;
        let v = v as f64;
        let magnitude = (u * u + v * v).sqrt();
        hom_votes[magnitude_bin(magnitude, &params.mag_edges)] += 1;
        if magnitude >= params.motion_gate && magnitude > 0.0 {
            hod_votes[direction_bin(u, v)] += 1;
            gated += 1;
        }
    }

    let total = flow.len() as f64;
    let mut hom = [0f64; HOM_BINS];
    for (mass, votes) in hom.iter_mut().zip(&hom_votes) {
        *mass = *votes as f64 / total;
    }
    let mut hod = [0f64; HOD_BINS];
    if gated > 0 {
        for (mass, votes) in hod.iter_mut().zip(&hod_votes) {
            *mass = *votes as f64 / gated as f64;
        }
    }
    FrameFeatures { frame, hom, hod }
}

fn magnitude_bin(magnitude: f64, edges: &[f64; HOM_BINS + 1]) -> usize {
    if !magnitude.is_finite() {
        return HOM_BINS - 1;
    }
    for i in 0..HOM_BINS {
        if magnitude >= edges[i] && magnitude < edges[i + 1] {
            return i;
        }
    }
    HOM_BINS - 1
}

// Sector k covers [45k - 22.5, 45k + 22.5) degrees, counter-clockwise
// with image-convention v pointing down.
fn direction_bin(u: f64, v: f64) -> usize {
    let angle = (-v).atan2(u).to_degrees();
    let bin = ((angle + 22.5) / 45.0).floor() as i64;
    bin.rem_euclid(HOD_BINS as i64) as usize
}

/// Mean flow components of one frame, for the averaged-feature variant.
pub fn averaged_flow_features(flow: &FlowField, frame: usize) -> AveragedFlow {
    let n = flow.len() as f64;
    let mean_u = flow.u.iter().map(|&x| x as f64).sum::<f64>() / n;
    let mean_v = flow.v.iter().map(|&x| x as f64).sum::<f64>() / n;
    AveragedFlow {
        frame,
        mean_u,
        mean_v,
    }
}

/// Central-difference gradient over generic feature rows:
/// the Euclidean norm of `rows[i+1] - rows[i-1]`.
pub fn gradient(rows: &[Vec<f64>], i: usize) -> Result<f64, FeatureError> {
    if rows.len() < 3 || i < 1 || i > rows.len() - 2 {
        return Err(FeatureError::IndexOutOfRange {
            index: i,
            max: rows.len().saturating_sub(2),
        });
    }
    Ok(rows[i + 1]
        .iter()
        .zip(&rows[i - 1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Feature-space gradient at frame `i`; the frame index itself is not
/// part of the differenced vector.
pub fn feature_gradient(seq: &[FrameFeatures], i: usize) -> Result<f64, FeatureError> {
    let rows = feature_vectors(seq);
    gradient(&rows, i)
}

/// Extracts the 19-value vectors of a feature sequence.
pub fn feature_vectors(seq: &[FrameFeatures]) -> Vec<Vec<f64>> {
    seq.iter().map(|f| f.vector()).collect()
}

/// Extracts the 2-value vectors of an averaged-flow sequence.
pub fn averaged_vectors(seq: &[AveragedFlow]) -> Vec<Vec<f64>> {
    seq.iter().map(|f| f.vector()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut ChaCha8Rng, width: usize, height: usize) -> FlowField {
        let n = width * height;
        FlowField {
            width,
            height,
            u: (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
            v: (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        }
    }

    #[test]
    fn uniform_rightward_flow_fills_single_bins() {
        let flow = FlowField::uniform(4, 4, 1.0, 0.0);
        let f = compute_features(&flow, 0, &FeatureParams::default());
        assert_eq!(f.hod, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // magnitude 1.0 falls in [1, 2)
        let mut expected_hom = [0.0; HOM_BINS];
        expected_hom[3] = 1.0;
        assert_eq!(f.hom, expected_hom);
    }

    #[test]
    fn zero_flow_is_the_degenerate_case() {
        let flow = FlowField::uniform(3, 3, 0.0, 0.0);
        let f = compute_features(&flow, 0, &FeatureParams::default());
        let mut expected_hom = [0.0; HOM_BINS];
        expected_hom[0] = 1.0;
        assert_eq!(f.hom, expected_hom);
        assert_eq!(f.hod, [0.0; HOD_BINS]);
    }

    // Hand count over a constructed 2-pixel field.
    #[test]
    fn two_pixel_field_splits_direction_mass() {
        let flow = FlowField {
            width: 2,
            height: 1,
            u: vec![1.0, 0.0],
            v: vec![0.0, -1.0], // second pixel moves up on screen
        };
        let f = compute_features(&flow, 0, &FeatureParams::default());
        assert_abs_diff_eq!(f.hod[0], 0.5);
        assert_abs_diff_eq!(f.hod[2], 0.5);
        assert_eq!(f.hod.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn direction_bins_cover_the_compass() {
        // (u, v) pairs pointing at the eight sector centers, image
        // convention: +v is down, so up on screen is v = -1.
        let dirs = [
            (1.0, 0.0),   // 0
            (1.0, -1.0),  // 45
            (0.0, -1.0),  // 90
            (-1.0, -1.0), // 135
            (-1.0, 0.0),  // 180
            (-1.0, 1.0),  // 225
            (0.0, 1.0),   // 270
            (1.0, 1.0),   // 315
        ];
        for (bin, (u, v)) in dirs.iter().enumerate() {
            assert_eq!(direction_bin(*u, *v), bin, "direction ({u}, {v})");
        }
    }

    #[test]
    fn direction_sector_edges_are_half_open() {
        // just past 22.5 degrees belongs to bin 1, just under to bin 0;
        // the negative boundary mirrors into bin 0 and bin 7.
        let above = 22.51f64.to_radians();
        let below = 22.49f64.to_radians();
        assert_eq!(direction_bin(above.cos(), -above.sin()), 1);
        assert_eq!(direction_bin(below.cos(), -below.sin()), 0);
        assert_eq!(direction_bin(below.cos(), below.sin()), 0);
        assert_eq!(direction_bin(above.cos(), above.sin()), 7);
    }

    #[test]
    fn histograms_have_unit_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let flow = random_field(&mut rng, 8, 6);
            let f = compute_features(&flow, 0, &FeatureParams::default());
            assert_abs_diff_eq!(f.hom.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            let hod_sum = f.hod.iter().sum::<f64>();
            assert!(
                hod_sum == 0.0 || (hod_sum - 1.0).abs() < 1e-9,
                "hod sum {hod_sum}"
            );
        }
    }

    #[test]
    fn features_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flow = random_field(&mut rng, 6, 6);
        let mut shuffled = flow.clone();
        // deterministic Fisher-Yates over paired (u, v)
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.u.swap(i, j);
            shuffled.v.swap(i, j);
        }
        let params = FeatureParams::default();
        let a = compute_features(&flow, 0, &params);
        let b = compute_features(&shuffled, 0, &params);
        assert_eq!(a.hom, b.hom);
        assert_eq!(a.hod, b.hod);
    }

    #[test]
    fn scaling_flow_preserves_direction_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flow = random_field(&mut rng, 6, 6);
        // Keep every pixel above the gate so scaling cannot drop votes.
        let boosted = FlowField {
            width: flow.width,
            height: flow.height,
            u: flow.u.iter().map(|x| x + 6.0).collect(),
            v: flow.v.clone(),
        };
        let scaled = FlowField {
            width: boosted.width,
            height: boosted.height,
            u: boosted.u.iter().map(|x| x * 3.0).collect(),
            v: boosted.v.iter().map(|x| x * 3.0).collect(),
        };
        let params = FeatureParams::default();
        let a = compute_features(&boosted, 0, &params);
        let b = compute_features(&scaled, 0, &params);
        assert_eq!(a.hod, b.hod);
        assert_ne!(a.hom, b.hom);
    }

    #[test]
    fn averaged_flow_matches_hand_values() {
        let flow = FlowField {
            width: 2,
            height: 1,
            u: vec![1.0, 3.0],
            v: vec![0.0, -2.0],
        };
        let a = averaged_flow_features(&flow, 4);
        assert_eq!(a.mean_u, 2.0);
        assert_eq!(a.mean_v, -1.0);
        assert_eq!(a.frame, 4);

        let zero = averaged_flow_features(&FlowField::uniform(3, 3, 0.0, 0.0), 0);
        assert_eq!((zero.mean_u, zero.mean_v), (0.0, 0.0));
    }

    // Naive two-pass summation oracle for the mean.
    #[test]
    fn averaged_flow_matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let flow = random_field(&mut rng, 9, 7);
            let a = averaged_flow_features(&flow, 0);
            let mut su = 0f64;
            for &x in &flow.u {
                su += x as f64;
            }
            let mut sv = 0f64;
            for &x in &flow.v {
                sv += x as f64;
            }
            assert_abs_diff_eq!(a.mean_u, su / flow.len() as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(a.mean_v, sv / flow.len() as f64, epsilon = 1e-9);
        }
    }

    fn constant_features(frame: usize, value: f64) -> FrameFeatures {
        FrameFeatures {
            frame,
            hom: [value; HOM_BINS],
            hod: [value; HOD_BINS],
        }
    }

    #[test]
    fn gradient_of_constant_sequence_is_zero() {
        let seq: Vec<_> = (0..5).map(|i| constant_features(i, 0.25)).collect();
        for i in 1..=3 {
            assert_eq!(feature_gradient(&seq, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn gradient_of_unit_step_is_one() {
        let mut seq: Vec<_> = (0..3).map(|i| constant_features(i, 0.0)).collect();
        seq[2].hom[4] = 1.0;
        assert_eq!(feature_gradient(&seq, 1).unwrap(), 1.0);
    }

    #[test]
    fn gradient_rejects_sequence_ends() {
        let seq: Vec<_> = (0..4).map(|i| constant_features(i, 0.1)).collect();
        assert!(matches!(
            feature_gradient(&seq, 0),
            Err(FeatureError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            feature_gradient(&seq, 3),
            Err(FeatureError::IndexOutOfRange { .. })
        ));
    }

    // Independent re-evaluation of the central difference formula.
    #[test]
    fn gradient_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let seq: Vec<FrameFeatures> = (0..5)
            .map(|frame| {
                let mut hom = [0.0; HOM_BINS];
                for slot in hom.iter_mut() {
                    *slot = rng.random_range(0.0..1.0);
                }
                let mut hod = [0.0; HOD_BINS];
                for slot in hod.iter_mut() {
                    *slot = rng.random_range(0.0..1.0);
                }
                FrameFeatures { frame, hom, hod }
            })
            .collect();
        for i in 1..=3 {
            let mut sum = 0f64;
            for d in 0..HOM_BINS {
                let diff = seq[i + 1].hom[d] - seq[i - 1].hom[d];
                sum += diff * diff;
            }
            for d in 0..HOD_BINS {
                let diff = seq[i + 1].hod[d] - seq[i - 1].hod[d];
                sum += diff * diff;
            }
            assert_abs_diff_eq!(
                feature_gradient(&seq, i).unwrap(),
                sum.sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn gradient_is_symmetric_under_time_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let reversed: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let n = rows.len();
        for i in 1..n - 1 {
            assert_abs_diff_eq!(
                gradient(&rows, i).unwrap(),
                gradient(&reversed, n - 1 - i).unwrap(),
                epsilon = 1e-12
            );
        }
    }
}
