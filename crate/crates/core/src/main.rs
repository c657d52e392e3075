use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use superframes::cli::{self, FeatureInput};
use superframes::features::FeatureParams;
use superframes::pc_baseline::PcParams;
use superframes::superframe::SuperframeParams;

/// Temporal video segmentation into motion-homogeneous superframes.
#[derive(Parser)]
#[command(name = "superframes", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Precomputed feature CSV (frame,hom0..hom10,hod0..hod7)
    #[arg(long)]
    features: Option<PathBuf>,
    /// Directory of .flo flow files with sortable names
    #[arg(long)]
    flow_dir: Option<PathBuf>,
}

impl InputArgs {
    fn input(&self) -> FeatureInput {
        match (&self.features, &self.flow_dir) {
            (Some(csv), None) => FeatureInput::Csv(csv.clone()),
            (None, Some(dir)) => FeatureInput::FlowDir(dir.clone()),
            _ => unreachable!("clap enforces exactly one input mode"),
        }
    }
}

#[derive(Args)]
struct FeatureFlags {
    /// Minimum flow magnitude (px/frame) for a pixel to vote in the
    /// direction histogram
    #[arg(long, default_value_t = 0.1)]
    motion_gate: f64,
    /// 12 comma-separated ascending magnitude bin edges; use `inf` for
    /// the last overflow edge
    #[arg(long)]
    mag_edges: Option<String>,
}

impl FeatureFlags {
    fn params(&self) -> anyhow::Result<FeatureParams> {
        let mut params = FeatureParams {
            motion_gate: self.motion_gate,
            ..FeatureParams::default()
        };
        if let Some(text) = &self.mag_edges {
            params.mag_edges = cli::parse_mag_edges(text)?;
        }
        params.validate()?;
        Ok(params)
    }
}

#[derive(Args)]
struct ClusterFlags {
    /// Desired number of clusters K
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Compactness m; defaults to 0.1 * K
    #[arg(long)]
    compactness: Option<f64>,
    /// Convergence threshold on total L1 center movement
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Iteration cap for the assignment/update loop
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Minimum surviving segment length; defaults to max(2, round(S/4))
    #[arg(long)]
    min_length: Option<usize>,
}

impl ClusterFlags {
    fn params(&self) -> SuperframeParams {
        SuperframeParams {
            k: self.k as usize,
            compactness: self.compactness,
            convergence_eps: self.eps,
            max_iters: self.max_iters,
            min_length: self.min_length,
        }
    }
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct CutoffArgs {
    /// Correlation cutoff; junctions below it become boundaries
    #[arg(long)]
    threshold: Option<f64>,
    /// Solve the threshold that best yields this many clusters
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-frame flow histograms from a directory of .flo files
    Features {
        /// Directory of .flo flow files with sortable names
        #[arg(long)]
        flow_dir: PathBuf,
        #[command(flatten)]
        feature_flags: FeatureFlags,
        /// Output feature CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster frames into superframes and write labels plus boundaries
    Segment {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        cluster: ClusterFlags,
        #[command(flatten)]
        feature_flags: FeatureFlags,
        /// Output segmentation CSV; a .boundaries.txt sidecar is
        /// written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase-correlation baseline over a directory of PGM frames
    Baseline {
        /// Directory of .pgm frames with sortable names
        #[arg(long)]
        frame_dir: PathBuf,
        /// Side of the centered square crop
        #[arg(long, default_value_t = 240)]
        crop: usize,
        /// Frames per space-time volume (after subsampling)
        #[arg(long, default_value_t = 30)]
        depth: usize,
        /// Keep every stride-th frame
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[command(flatten)]
        cutoff: CutoffArgs,
        /// Output correlation CSV; a .boundaries.txt sidecar is written
        /// next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Score result boundaries against ground truth
    Evaluate {
        /// Result boundary file
        #[arg(long)]
        result: PathBuf,
        /// Ground-truth boundary file
        #[arg(long)]
        truth: PathBuf,
        /// Total frame count N of the video
        #[arg(long)]
        n_frames: usize,
        /// Boundary tolerance as a fraction of N
        #[arg(long, default_value_t = 0.008)]
        range_frac: f64,
        /// Overlap threshold as a fraction of each result segment
        #[arg(long, default_value_t = 0.25)]
        beta: f64,
        /// Optional JSON report path
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment and evaluate once per K, emitting a plot-ready CSV
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        /// Ground-truth boundary file
        #[arg(long)]
        truth: PathBuf,
        /// Comma-separated list of K values
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<u64>,
        /// Compactness m; defaults to 0.1 * K per run
        #[arg(long)]
        compactness: Option<f64>,
        /// Convergence threshold on total L1 center movement
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        /// Iteration cap for the assignment/update loop
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Minimum surviving segment length; defaults to max(2, round(S/4))
        #[arg(long)]
        min_length: Option<usize>,
        #[command(flatten)]
        feature_flags: FeatureFlags,
        /// Boundary tolerance as a fraction of N
        #[arg(long, default_value_t = 0.008)]
        range_frac: f64,
        /// Overlap threshold as a fraction of each result segment
        #[arg(long, default_value_t = 0.25)]
        beta: f64,
        /// Output sweep CSV (k,h,recall,ue)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic flow sequence with known boundaries
    Synth {
        /// JSON spec file
        #[arg(long)]
        spec: PathBuf,
        /// Override the spec's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for .flo frames and boundaries.txt
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("SUPERFRAME_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Features {
            flow_dir,
            feature_flags,
            out,
        } => {
            let rows = cli::cmd_features(&flow_dir, &out, &feature_flags.params()?)?;
            println!("wrote {rows} feature rows to {}", out.display());
        }
        Command::Segment {
            input,
            cluster,
            feature_flags,
            out,
        } => {
            let summary = cli::cmd_segment(
                &input.input(),
                &cluster.params(),
                &feature_flags.params()?,
                &out,
            )?;
            println!(
                "iterations={} final_error={:.6} clusters={}",
                summary.iterations, summary.final_error, summary.output_clusters
            );
            println!(
                "wrote {} and {}",
                out.display(),
                summary.boundary_path.display()
            );
        }
        Command::Baseline {
            frame_dir,
            crop,
            depth,
            stride,
            cutoff,
            out,
        } => {
            let params = PcParams {
                crop,
                depth,
                stride,
                threshold: cutoff.threshold,
            };
            let summary =
                cli::cmd_baseline(&frame_dir, &params, cutoff.k.map(|k| k as usize), &out)?;
            if let Some(solved) = summary.solved_k {
                println!(
                    "threshold={} solved for k={} (achieved {} clusters{})",
                    summary.threshold,
                    solved.requested,
                    solved.achieved,
                    if solved.exact { "" } else { ", saturated" }
                );
            } else {
                println!("threshold={}", summary.threshold);
            }
            println!(
                "volumes={} boundaries={} wrote {} and {}",
                summary.volumes,
                summary.boundaries,
                out.display(),
                summary.boundary_path.display()
            );
        }
        Command::Evaluate {
            result,
            truth,
            n_frames,
            range_frac,
            beta,
            out,
        } => {
            let report =
                cli::cmd_evaluate(&result, &truth, n_frames, range_frac, beta, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep {
            input,
            truth,
            k_list,
            compactness,
            eps,
            max_iters,
            min_length,
            feature_flags,
            range_frac,
            beta,
            out,
        } => {
            let base = SuperframeParams {
                k: 1, // replaced per run
                compactness,
                convergence_eps: eps,
                max_iters,
                min_length,
            };
            let k_list: Vec<usize> = k_list.into_iter().map(|k| k as usize).collect();
            let rows = cli::cmd_sweep(
                &input.input(),
                &truth,
                &k_list,
                &base,
                &feature_flags.params()?,
                range_frac,
                beta,
                &out,
            )?;
            for row in &rows {
                println!(
                    "k={} h={} recall={:.4} ue={:.4}",
                    row.k, row.h, row.recall, row.under_segmentation
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Synth { spec, seed, out_dir } => {
            let summary = cli::cmd_synth(&spec, seed, &out_dir)?;
            println!(
                "wrote {} frames and {} boundaries to {}",
                summary.n_frames,
                summary.boundaries,
                out_dir.display()
            );
        }
    }
    Ok(())
}
