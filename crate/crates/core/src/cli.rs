//! Command implementations behind the `superframes` binary.
//!
//! Each command computes first and writes outputs last; if any write
//! fails, files already written by that invocation are removed so a
//! nonzero exit never leaves partial outputs behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::features::{self, FeatureParams, FrameFeatures, HOM_BINS};
use crate::flow_io::{self, BoundarySet};
use crate::metrics::{self, EvalReport};
use crate::pc_baseline::{self, PcParams};
use crate::superframe::{self, SuperframeParams};
use crate::synth::{self, SynthSpec};

/// Removes tracked output files on drop unless committed.
struct OutputGuard {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        Self {
            paths: Vec::new(),
            committed: false,
        }
    }

    fn track(&mut self, path: impl Into<PathBuf>) {
        self.paths.push(path.into());
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.committed {
            for path in &self.paths {
                let _ = fs::remove_file(path);
            }
        }
    }
}

/// Where segmentation commands read their per-frame descriptors from.
#[derive(Debug, Clone)]
pub enum FeatureInput {
    /// Precomputed feature table.
    Csv(PathBuf),
    /// Directory of `.flo` files; features are computed on the fly.
    FlowDir(PathBuf),
}

/// Parses `--mag-edges` values: 12 comma-separated ascending edges,
/// `inf` allowed for the final overflow edge.
pub fn parse_mag_edges(text: &str) -> Result<[f64; HOM_BINS + 1]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != HOM_BINS + 1 {
        bail!(
            "expected {} magnitude edges, found {}",
            HOM_BINS + 1,
            parts.len()
        );
    }
    let mut edges = [0f64; HOM_BINS + 1];
    for (slot, part) in edges.iter_mut().zip(&parts) {
        *slot = match part.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => f64::INFINITY,
            other => other
                .parse()
                .with_context(|| format!("bad magnitude edge {other:?}"))?,
        };
    }
    Ok(edges)
}

/// Loads features from either input mode.
pub fn load_features(input: &FeatureInput, params: &FeatureParams) -> Result<Vec<FrameFeatures>> {
    match input {
        FeatureInput::Csv(path) => flow_io::read_feature_csv(path)
            .with_context(|| format!("reading feature table {}", path.display())),
        FeatureInput::FlowDir(dir) => compute_dir_features(dir, params),
    }
}

fn compute_dir_features(dir: &Path, params: &FeatureParams) -> Result<Vec<FrameFeatures>> {
    params.validate()?;
    let paths = flow_io::list_flow_dir(dir)
        .with_context(|| format!("listing flow directory {}", dir.display()))?;
    if paths.is_empty() {
        bail!("no .flo files in {}", dir.display());
    }
    log::info!("reading {} flow files from {}", paths.len(), dir.display());
    paths
        .iter()
        .enumerate()
        .map(|(frame, path)| {
            let flow = flow_io::read_flo(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(features::compute_features(&flow, frame, params))
        })
        .collect()
}

/// `features`: flow directory in, feature CSV out. Returns the row
/// count.
pub fn cmd_features(flow_dir: &Path, out: &Path, params: &FeatureParams) -> Result<usize> {
    let rows = compute_dir_features(flow_dir, params)?;
    let mut guard = OutputGuard::new();
    guard.track(out);
    flow_io::write_feature_csv(&rows, out)
        .with_context(|| format!("writing {}", out.display()))?;
    guard.commit();
    Ok(rows.len())
}

/// What `segment` reports after a run.
#[derive(Debug, Clone)]
pub struct SegmentSummary {
    pub n_frames: usize,
    pub iterations: usize,
    pub final_error: f64,
    /// Output cluster count H; merging can leave fewer than K.
    pub output_clusters: usize,
    pub boundary_path: PathBuf,
}

/// `segment`: cluster the frames and write the label CSV plus its
/// boundary sidecar.
pub fn cmd_segment(
    input: &FeatureInput,
    params: &SuperframeParams,
    feature_params: &FeatureParams,
    out: &Path,
) -> Result<SegmentSummary> {
    let rows = load_features(input, feature_params)?;
    let seg = superframe::run(&rows, params)?;

    let mut guard = OutputGuard::new();
    guard.track(out);
    let boundary_path = flow_io::segmentation_sidecar_path(out);
    guard.track(&boundary_path);
    flow_io::write_segmentation(&seg, out).with_context(|| format!("writing {}", out.display()))?;
    guard.commit();

    Ok(SegmentSummary {
        n_frames: seg.n_frames(),
        iterations: seg.iterations,
        final_error: seg.final_error,
        output_clusters: seg.num_segments(),
        boundary_path,
    })
}

/// What `baseline` reports after a run.
#[derive(Debug, Clone)]
pub struct BaselineSummary {
    pub n_frames: usize,
    pub volumes: usize,
    pub crop_side: usize,
    pub threshold: f64,
    /// Set when the threshold was solved from a target cluster count.
    pub solved_k: Option<SolvedK>,
    pub boundaries: usize,
    pub boundary_path: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub struct SolvedK {
    pub requested: usize,
    pub achieved: usize,
    pub exact: bool,
}

/// `baseline`: phase-correlate consecutive volumes from a directory of
/// PGM frames, write the correlation series CSV and a boundary file.
/// The threshold comes from `params.threshold` or is solved to hit
/// `k_target` segments.
pub fn cmd_baseline(
    frame_dir: &Path,
    params: &PcParams,
    k_target: Option<usize>,
    out: &Path,
) -> Result<BaselineSummary> {
    params.validate()?;
    let paths = flow_io::list_frame_dir(frame_dir)
        .with_context(|| format!("listing frame directory {}", frame_dir.display()))?;
    if paths.is_empty() {
        bail!("no .pgm files in {}", frame_dir.display());
    }
    let frames: Vec<_> = paths
        .iter()
        .map(|path| {
            flow_io::read_pgm(path).with_context(|| format!("reading {}", path.display()))
        })
        .collect::<Result<_>>()?;
    let n_frames = frames.len();

    let (crop_side, _, _) = pc_baseline::crop_geometry(frames[0].width, frames[0].height, params.crop);
    if crop_side != params.crop {
        log::warn!(
            "frames are {}x{}; cropping to the largest centered square {}x{}",
            frames[0].width,
            frames[0].height,
            crop_side,
            crop_side
        );
    }
    let volumes = pc_baseline::build_volumes(&frames, params)?;
    if volumes.len() < 2 {
        bail!(
            "{} frames yield {} volume(s); need at least 2 (depth {} x stride {})",
            n_frames,
            volumes.len(),
            params.depth,
            params.stride
        );
    }
    let corrs = pc_baseline::correlation_series(&volumes)?;

    let (threshold, solved_k) = match (params.threshold, k_target) {
        (Some(t), _) => (t, None),
        (None, Some(k)) => {
            let choice = pc_baseline::threshold_for_k(&corrs, k);
            if !choice.exact {
                log::warn!(
                    "target of {k} clusters not attainable; closest achievable is {}",
                    choice.achieved
                );
            }
            (
                choice.threshold,
                Some(SolvedK {
                    requested: k,
                    achieved: choice.achieved,
                    exact: choice.exact,
                }),
            )
        }
        (None, None) => bail!("either a threshold or a target cluster count is required"),
    };
    let boundaries = pc_baseline::segment_by_threshold(&corrs, threshold, params, n_frames)?;

    let mut guard = OutputGuard::new();
    guard.track(out);
    write_corr_csv(&corrs, params, out)?;
    let boundary_path = out.with_extension("boundaries.txt");
    guard.track(&boundary_path);
    flow_io::write_boundaries(&boundaries, &boundary_path)
        .with_context(|| format!("writing {}", boundary_path.display()))?;
    guard.commit();

    Ok(BaselineSummary {
        n_frames,
        volumes: volumes.len(),
        crop_side,
        threshold,
        solved_k,
        boundaries: boundaries.len(),
        boundary_path,
    })
}

fn write_corr_csv(corrs: &[f64], params: &PcParams, out: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(out)
        .with_context(|| format!("writing {}", out.display()))?;
    writer.write_record(["junction_frame", "corr"])?;
    for (i, corr) in corrs.iter().enumerate() {
        writer.write_record(&[
            pc_baseline::junction_frame(i, params).to_string(),
            corr.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// `evaluate`: score result boundaries against ground truth, write the
/// report as JSON when requested.
pub fn cmd_evaluate(
    result_path: &Path,
    truth_path: &Path,
    n_frames: usize,
    range_frac: f64,
    beta_frac: f64,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let result = flow_io::read_boundaries(result_path, n_frames)
        .with_context(|| format!("reading {}", result_path.display()))?;
    let truth = flow_io::read_boundaries(truth_path, n_frames)
        .with_context(|| format!("reading {}", truth_path.display()))?;
    let report = metrics::evaluate(&result, &truth, range_frac, beta_frac)?;
    if let Some(path) = out {
        let mut guard = OutputGuard::new();
        guard.track(path);
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
        guard.commit();
    }
    Ok(report)
}

/// One row of the sweep output.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub k: usize,
    pub h: usize,
    pub recall: f64,
    pub under_segmentation: f64,
}

/// `sweep`: segment and evaluate once per requested K, emitting a
/// plot-ready CSV of (k, h, recall, ue).
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep(
    input: &FeatureInput,
    truth_path: &Path,
    k_list: &[usize],
    base_params: &SuperframeParams,
    feature_params: &FeatureParams,
    range_frac: f64,
    beta_frac: f64,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    if k_list.is_empty() {
        bail!("k list must not be empty");
    }
    let rows = load_features(input, feature_params)?;
    let truth = flow_io::read_boundaries(truth_path, rows.len())
        .with_context(|| format!("reading {}", truth_path.display()))?;

    let mut results = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let params = SuperframeParams {
            k,
            ..base_params.clone()
        };
        let seg = superframe::run(&rows, &params)?;
        let report = metrics::evaluate(&seg.boundaries(), &truth, range_frac, beta_frac)?;
        log::info!(
            "k={k}: h={}, recall={:.4}, ue={:.4}",
            seg.num_segments(),
            report.recall,
            report.under_segmentation
        );
        results.push(SweepRow {
            k,
            h: seg.num_segments(),
            recall: report.recall,
            under_segmentation: report.under_segmentation,
        });
    }

    let mut guard = OutputGuard::new();
    guard.track(out);
    let mut writer = csv::Writer::from_path(out)
        .with_context(|| format!("writing {}", out.display()))?;
    writer.write_record(["k", "h", "recall", "ue"])?;
    for row in &results {
        writer.write_record(&[
            row.k.to_string(),
            row.h.to_string(),
            row.recall.to_string(),
            row.under_segmentation.to_string(),
        ])?;
    }
    writer.flush()?;
    drop(writer);
    guard.commit();
    Ok(results)
}

/// What `synth` reports.
#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub n_frames: usize,
    pub boundaries: usize,
    pub boundary_path: PathBuf,
}

/// `synth`: generate a flow sequence from a JSON spec into a directory
/// of `.flo` files plus a ground-truth boundary file.
pub fn cmd_synth(
    spec_path: &Path,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> Result<SynthSummary> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", spec_path.display()))?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let (fields, truth) = synth::generate(&spec)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut guard = OutputGuard::new();
    for (i, field) in fields.iter().enumerate() {
        let path = out_dir.join(format!("frame_{i:06}.flo"));
        guard.track(&path);
        flow_io::write_flo(field, &path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let boundary_path = out_dir.join("boundaries.txt");
    guard.track(&boundary_path);
    flow_io::write_boundaries(&truth, &boundary_path)
        .with_context(|| format!("writing {}", boundary_path.display()))?;
    guard.commit();

    Ok(SynthSummary {
        n_frames: fields.len(),
        boundaries: truth.len(),
        boundary_path,
    })
}

/// Reads ground truth for evaluation helpers and tests.
pub fn read_truth(path: &Path, n_frames: usize) -> Result<BoundarySet> {
    flow_io::read_boundaries(path, n_frames)
        .with_context(|| format!("reading {}", path.display()))
}
