//! Superframes: temporal video segmentation by motion.
//!
//! A video's timeline is partitioned into contiguous runs of frames
//! with homogeneous motion. Per-frame optical-flow histograms are
//! clustered by a windowed k-means over feature and temporal distance;
//! a phase-correlation baseline and two segmentation-quality metrics
//! round out the toolkit.
//!
//! Flow is ingested from Middlebury `.flo` files (or a precomputed
//! feature CSV), so any dense flow estimator can feed the pipeline.

pub mod cli;
pub mod features;
pub mod flow_io;
pub mod metrics;
pub mod pc_baseline;
pub mod superframe;
pub mod synth;

pub use features::{FeatureParams, FrameFeatures};
pub use flow_io::{BoundarySet, FlowField, FrameImage};
pub use metrics::EvalReport;
pub use pc_baseline::{PcParams, SpaceTimeVolume};
pub use superframe::{ClusterCenter, Segmentation, SuperframeParams};
pub use synth::SynthSpec;
