//! Phase-correlation baseline: boundaries are declared where the
//! correlation peak between consecutive space-time volumes drops below
//! a threshold.

use ndarray::{Array3, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::flow_io::{BoundarySet, FlowIoError, FrameImage};

/// Spectrum entries below this magnitude are zeroed instead of
/// divided, so near-empty frequencies cannot inject NaNs.
const SPECTRUM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PcError {
    #[error("frame {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    MixedDimensions {
        index: usize,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("volume dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no frames")]
    EmptyInput,
    #[error(transparent)]
    Boundary(#[from] FlowIoError),
}

/// A crop x crop x depth block of grayscale frames treated as one 3-D
/// signal. Voxels are frame-major: `voxels[t * w * h + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeVolume {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub voxels: Vec<f64>,
}

impl SpaceTimeVolume {
    pub fn new(
        width: usize,
        height: usize,
        depth: usize,
        voxels: Vec<f64>,
    ) -> Result<Self, PcError> {
        if voxels.len() != width * height * depth {
            return Err(PcError::InvalidParams(format!(
                "voxel count {} does not match {}x{}x{}",
                voxels.len(),
                width,
                height,
                depth
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            voxels,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.depth)
    }
}

/// Geometry and sampling of the volume builder.
#[derive(Debug, Clone, PartialEq)]
pub struct PcParams {
    /// Side of the centered square crop.
    pub crop: usize,
    /// Temporal length of each volume in (subsampled) frames.
    pub depth: usize,
    /// Temporal subsampling step: keep every `stride`-th frame.
    pub stride: usize,
    /// Correlation cutoff; may be left unset and solved from a target
    /// cluster count instead.
    pub threshold: Option<f64>,
}

impl Default for PcParams {
    fn default() -> Self {
        Self {
            crop: 240,
            depth: 30,
            stride: 2,
            threshold: None,
        }
    }
}

impl PcParams {
    pub fn validate(&self) -> Result<(), PcError> {
        if self.crop < 8 {
            return Err(PcError::InvalidParams("crop must be at least 8".into()));
        }
        if self.depth < 2 {
            return Err(PcError::InvalidParams("depth must be at least 2".into()));
        }
        if self.stride < 1 {
            return Err(PcError::InvalidParams("stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Centered-square crop for a `width x height` frame: the actual side
/// (shrunk to the largest centered square when the frame is smaller
/// than requested) and the top-left offset.
pub fn crop_geometry(width: usize, height: usize, crop: usize) -> (usize, usize, usize) {
    let side = crop.min(width).min(height);
    ((side), (width - side) / 2, (height - side) / 2)
}

/// Subsamples every `stride`-th frame, center-crops, and packs
/// consecutive non-overlapping groups of `depth` frames into volumes.
/// A final partial group is dropped.
pub fn build_volumes(
    frames: &[FrameImage],
    params: &PcParams,
) -> Result<Vec<SpaceTimeVolume>, PcError> {
    params.validate()?;
    let first = frames.first().ok_or(PcError::EmptyInput)?;
    for (index, frame) in frames.iter().enumerate() {
        if frame.width != first.width || frame.height != first.height {
            return Err(PcError::MixedDimensions {
                index,
                width: frame.width,
                height: frame.height,
                expected_width: first.width,
                expected_height: first.height,
            });
        }
    }
    let (side, x0, y0) = crop_geometry(first.width, first.height, params.crop);
    let sampled: Vec<&FrameImage> = frames.iter().step_by(params.stride).collect();
    let mut volumes = Vec::with_capacity(sampled.len() / params.depth);
    for group in sampled.chunks_exact(params.depth) {
        let mut voxels = Vec::with_capacity(side * side * params.depth);
        for frame in group {
            for y in y0..y0 + side {
                let row = y * frame.width;
                for x in x0..x0 + side {
                    voxels.push(frame.pixels[row + x] as f64);
                }
            }
        }
        volumes.push(SpaceTimeVolume {
            width: side,
            height: side,
            depth: params.depth,
            voxels,
        });
    }
    Ok(volumes)
}

/// Peak of the phase-correlation surface between two volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    /// Peak value of the real correlation surface, 1.0 for identical
    /// (nonconstant) volumes.
    pub corr: f64,
    /// Circular displacement `(dx, dy, dt)` taking the first volume to
    /// the second.
    pub shift: (i64, i64, i64),
}

fn as_array(volume: &SpaceTimeVolume) -> Array3<Complex<f64>> {
    let mean = volume.voxels.iter().sum::<f64>() / volume.voxels.len() as f64;
    Array3::from_shape_vec(
        (volume.depth, volume.height, volume.width),
        volume.voxels.iter().map(|&v| Complex::new(v - mean, 0.0)).collect(),
    )
    .expect("voxel count matches dims")
}

pub(crate) fn fft3(data: &mut Array3<Complex<f64>>, planner: &mut FftPlanner<f64>, inverse: bool) {
    for axis in 0..3 {
        let n = data.shape()[axis];
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        let mut buffer = vec![Complex::default(); n];
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, x) in buffer.iter_mut().zip(lane.iter()) {
                *b = *x;
            }
            fft.process_with_scratch(&mut buffer, &mut scratch);
            for (x, b) in lane.iter_mut().zip(&buffer) {
                *x = *b;
            }
        }
    }
}

fn wrap_signed(index: usize, size: usize) -> i64 {
    if index > size / 2 {
        index as i64 - size as i64
    } else {
        index as i64
    }
}

/// Correlates two volumes through the normalized cross-power spectrum.
///
/// Both volumes are mean-subtracted so constant brightness cannot fake
/// a unit peak. The inverse transform is scaled by the number of
/// surviving spectrum bins, which pins the self-correlation peak at
/// exactly 1. Two constant volumes have no surviving bins and
/// correlate to 0.
pub fn phase_correlation(
    a: &SpaceTimeVolume,
    b: &SpaceTimeVolume,
) -> Result<Correlation, PcError> {
    if a.dims() != b.dims() {
        return Err(PcError::DimensionMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let mut planner = FftPlanner::new();
    let mut fa = as_array(a);
    let mut fb = as_array(b);
    fft3(&mut fa, &mut planner, false);
    fft3(&mut fb, &mut planner, false);

    let mut surviving = 0usize;
    let mut cross = fa;
    for (r, fb) in cross.iter_mut().zip(fb.iter()) {
        let product = *r * fb.conj();
        let norm = product.norm();
        *r = if norm < SPECTRUM_EPS {
            Complex::new(0.0, 0.0)
        } else {
            surviving += 1;
            product / norm
        };
    }
    if surviving == 0 {
        return Ok(Correlation {
            corr: 0.0,
            shift: (0, 0, 0),
        });
    }
    fft3(&mut cross, &mut planner, true);

    let mut peak = f64::NEG_INFINITY;
    let mut peak_index = (0usize, 0usize, 0usize);
    for ((t, y, x), value) in cross.indexed_iter() {
        if value.re > peak {
            peak = value.re;
            peak_index = (t, y, x);
        }
    }
    let (t, y, x) = peak_index;
    // The correlation surface peaks at the negated displacement; flip
    // the wrapped coordinates so the result reads a -> b.
    Ok(Correlation {
        corr: peak / surviving as f64,
        shift: (
            -wrap_signed(x, a.width),
            -wrap_signed(y, a.height),
            -wrap_signed(t, a.depth),
        ),
    })
}

/// Correlation of every consecutive volume pair; entry `i` relates
/// volumes `i` and `i + 1`.
pub fn correlation_series(volumes: &[SpaceTimeVolume]) -> Result<Vec<f64>, PcError> {
    volumes
        .windows(2)
        .map(|pair| phase_correlation(&pair[0], &pair[1]).map(|c| c.corr))
        .collect()
}

/// Original-video frame index of the junction between volumes `i` and
/// `i + 1`.
pub fn junction_frame(i: usize, params: &PcParams) -> usize {
    (i + 1) * params.depth * params.stride
}

/// Declares a boundary at every volume junction whose correlation
/// falls below the threshold.
pub fn segment_by_threshold(
    corrs: &[f64],
    threshold: f64,
    params: &PcParams,
    n_frames: usize,
) -> Result<BoundarySet, PcError> {
    let boundaries: Vec<usize> = corrs
        .iter()
        .enumerate()
        .filter(|(_, &corr)| corr < threshold)
        .map(|(i, _)| junction_frame(i, params))
        .collect();
    Ok(BoundarySet::new(boundaries, n_frames)?)
}

/// Outcome of solving a threshold from a target cluster count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// Segment count the threshold actually yields.
    pub achieved: usize,
    /// Whether the target count was attainable.
    pub exact: bool,
}

/// Picks the smallest threshold among the observed correlation values
/// (plus sentinel 0) that yields exactly `k_target` segments, or the
/// closest achievable count otherwise (ties: fewer segments).
pub fn threshold_for_k(corrs: &[f64], k_target: usize) -> ThresholdChoice {
    let mut candidates: Vec<f64> = corrs.to_vec();
    candidates.push(0.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("correlations are finite"));
    candidates.dedup();

    let mut best: Option<ThresholdChoice> = None;
    for threshold in candidates {
        let achieved = corrs.iter().filter(|&&c| c < threshold).count() + 1;
        if achieved == k_target {
            return ThresholdChoice {
                threshold,
                achieved,
                exact: true,
            };
        }
        let better = match best {
            None => true,
            Some(current) => {
                achieved.abs_diff(k_target) < current.achieved.abs_diff(k_target)
                    || (achieved.abs_diff(k_target) == current.achieved.abs_diff(k_target)
                        && achieved < current.achieved)
            }
        };
        if better {
            best = Some(ThresholdChoice {
                threshold,
                achieved,
                exact: false,
            });
        }
    }
    best.expect("candidate set is never empty")
}
