//! File formats: Middlebury `.flo` flow fields, binary PGM frames,
//! boundary lists, feature tables, and segmentation output.
//!
//! All readers return typed errors on malformed input; none panic or
//! hand back partial data.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::features::FrameFeatures;
use crate::superframe::Segmentation;

/// Magic number at the start of every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Errors raised by the readers and writers in this module.
#[derive(Debug, Error)]
pub enum FlowIoError {
    #[error("not a flow file: bad magic {found} (expected {FLO_MAGIC})")]
    BadMagic { found: f32 },
    #[error("truncated file: expected {expected} more bytes")]
    Truncated { expected: usize },
    #[error("non-positive dimensions {width}x{height}")]
    NonPositiveDims { width: i32, height: i32 },
    #[error("flow field invariant violated: {0}")]
    InvalidFlowField(String),
    #[error("bad PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0} (must be in 1..=255)")]
    UnsupportedMaxval(u32),
    #[error("boundary {value} out of range [1, {max}]")]
    OutOfRange { value: i64, max: usize },
    #[error("line {line}: not an integer: {text:?}")]
    NotAnInteger { line: usize, text: String },
    #[error("missing or misnamed column {name:?} (position {index})")]
    MissingColumn { name: String, index: usize },
    #[error("non-consecutive frame indices: expected {expected}, found {found}")]
    NonConsecutiveFrames { expected: usize, found: u64 },
    #[error("row {row}, column {column}: negative histogram value {value}")]
    NegativeHistogramValue {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("row {row}, column {column}: invalid field {text:?}")]
    InvalidField {
        row: usize,
        column: String,
        text: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense per-pixel 2-D motion for one frame pair.
///
/// `u` and `v` are row-major, `width * height` long each; `u` holds the
/// horizontal component, `v` the vertical one, in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self, FlowIoError> {
        let field = Self {
            width,
            height,
            u,
            v,
        };
        field.validate()?;
        Ok(field)
    }

    /// Constant-motion field, handy for tests and synthetic data.
    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), FlowIoError> {
        if self.width < 1 || self.height < 1 {
            return Err(FlowIoError::InvalidFlowField(format!(
                "dimensions {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        let n = self.width * self.height;
        if self.u.len() != n || self.v.len() != n {
            return Err(FlowIoError::InvalidFlowField(format!(
                "u/v lengths {}/{} do not match {}x{}",
                self.u.len(),
                self.v.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// One grayscale frame, 8-bit, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Segment boundaries for an `n_frames`-long video.
///
/// Each boundary is the first frame of a new segment (0-based); the
/// segment before boundary `b` ends at `b - 1`. Indices are strictly
/// increasing and lie in `[1, n_frames - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    boundaries: Vec<usize>,
    n_frames: usize,
}

impl BoundarySet {
    /// Builds a set from arbitrary indices: sorts, deduplicates, and
    /// validates the range.
    pub fn new(mut boundaries: Vec<usize>, n_frames: usize) -> Result<Self, FlowIoError> {
        boundaries.sort_unstable();
        boundaries.dedup();
        for &b in &boundaries {
            if b < 1 || b >= n_frames {
                return Err(FlowIoError::OutOfRange {
                    value: b as i64,
                    max: n_frames.saturating_sub(1),
                });
            }
        }
        Ok(Self {
            boundaries,
            n_frames,
        })
    }

    pub fn empty(n_frames: usize) -> Self {
        Self {
            boundaries: Vec::new(),
            n_frames,
        }
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// Number of segments the boundaries induce.
    pub fn num_segments(&self) -> usize {
        self.boundaries.len() + 1
    }
}

/// Reads a Middlebury `.flo` file.
///
/// Layout is little-endian: f32 magic 202021.25, i32 width, i32 height,
/// then `width * height` interleaved `(u, v)` f32 pairs, row-major.
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField, FlowIoError> {
    let mut reader = BufReader::new(File::open(path)?);
    let magic = reader
        .read_f32::<LittleEndian>()
        .map_err(|_| FlowIoError::Truncated { expected: 4 })?;
    if magic != FLO_MAGIC {
        return Err(FlowIoError::BadMagic { found: magic });
    }
    let width = reader
        .read_i32::<LittleEndian>()
        .map_err(|_| FlowIoError::Truncated { expected: 4 })?;
    let height = reader
        .read_i32::<LittleEndian>()
        .map_err(|_| FlowIoError::Truncated { expected: 4 })?;
    if width <= 0 || height <= 0 {
        return Err(FlowIoError::NonPositiveDims { width, height });
    }
    let n = width as usize * height as usize;
    let mut interleaved = vec![0f32; n * 2];
    reader
        .read_f32_into::<LittleEndian>(&mut interleaved)
        .map_err(|_| FlowIoError::Truncated { expected: n * 8 })?;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for pair in interleaved.chunks_exact(2) {
        u.push(pair[0]);
        v.push(pair[1]);
    }
    Ok(FlowField {
        width: width as usize,
        height: height as usize,
        u,
        v,
    })
}

/// Writes a `.flo` file; byte-exact inverse of [`read_flo`].
pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    field.validate()?;
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_f32::<LittleEndian>(FLO_MAGIC)?;
    writer.write_i32::<LittleEndian>(field.width as i32)?;
    writer.write_i32::<LittleEndian>(field.height as i32)?;
    for (u, v) in field.u.iter().zip(&field.v) {
        writer.write_f32::<LittleEndian>(*u)?;
        writer.write_f32::<LittleEndian>(*v)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a binary PGM ("P5") image with maxval up to 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<FrameImage, FlowIoError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;

    // Header tokens are separated by whitespace; '#' starts a comment
    // that runs to the end of the line.
    let mut next_token = |bytes: &[u8]| -> Result<String, FlowIoError> {
        let mut tok = String::new();
        while pos < bytes.len() {
            let b = bytes[pos];
            if b == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                if !tok.is_empty() {
                    break;
                }
                pos += 1;
            } else {
                tok.push(b as char);
                pos += 1;
            }
        }
        if tok.is_empty() {
            return Err(FlowIoError::BadHeader("unexpected end of header".into()));
        }
        Ok(tok)
    };

    let magic = next_token(&bytes)?;
    if magic != "P5" {
        return Err(FlowIoError::BadHeader(format!(
            "expected P5, found {magic:?}"
        )));
    }
    let parse_dim = |tok: String| -> Result<usize, FlowIoError> {
        tok.parse::<usize>()
            .ok()
            .filter(|&d| d >= 1)
            .ok_or_else(|| FlowIoError::BadHeader(format!("bad dimension {tok:?}")))
    };
    let width = parse_dim(next_token(&bytes)?)?;
    let height = parse_dim(next_token(&bytes)?)?;
    let maxval: u32 = next_token(&bytes)?
        .parse()
        .map_err(|_| FlowIoError::BadHeader("bad maxval".into()))?;
    if maxval == 0 || maxval > 255 {
        return Err(FlowIoError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FlowIoError::BadHeader(
            "missing whitespace before raster".into(),
        ));
    }
    pos += 1;
    let n = width * height;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(FlowIoError::Truncated {
            expected: n - raster.len(),
        });
    }
    Ok(FrameImage {
        width,
        height,
        pixels: raster[..n].to_vec(),
    })
}

/// Reads a boundary list: one frame index per line, `#` comments and
/// blank lines ignored. Output is sorted and deduplicated.
pub fn read_boundaries(
    path: impl AsRef<Path>,
    n_frames: usize,
) -> Result<BoundarySet, FlowIoError> {
    let text = fs::read_to_string(path)?;
    parse_boundaries(&text, n_frames)
}

fn parse_boundaries(text: &str, n_frames: usize) -> Result<BoundarySet, FlowIoError> {
    let mut boundaries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let value: i64 = line.parse().map_err(|_| FlowIoError::NotAnInteger {
            line: lineno + 1,
            text: line.to_string(),
        })?;
        if value < 1 || value as usize >= n_frames {
            return Err(FlowIoError::OutOfRange {
                value,
                max: n_frames.saturating_sub(1),
            });
        }
        boundaries.push(value as usize);
    }
    BoundarySet::new(boundaries, n_frames)
}

/// Writes a boundary list in the format [`read_boundaries`] accepts.
pub fn write_boundaries(set: &BoundarySet, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for b in set.boundaries() {
        writeln!(writer, "{b}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Column names of the feature table, in order.
pub fn feature_csv_header() -> Vec<String> {
    let mut names = vec!["frame".to_string()];
    names.extend((0..11).map(|i| format!("hom{i}")));
    names.extend((0..8).map(|i| format!("hod{i}")));
    names
}

/// Reads a feature table. Frames must be 0..N-1 consecutive and all
/// histogram values non-negative.
pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FrameFeatures>, FlowIoError> {
    let mut reader = csv::Reader::from_path(path)?;
    let expected = feature_csv_header();
    let headers = reader.headers()?.clone();
    for (index, name) in expected.iter().enumerate() {
        match headers.get(index) {
            Some(h) if h.trim() == name => {}
            _ => {
                return Err(FlowIoError::MissingColumn {
                    name: name.clone(),
                    index,
                })
            }
        }
    }

    let mut features = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let field = |index: usize| -> Result<&str, FlowIoError> {
            record.get(index).ok_or_else(|| FlowIoError::MissingColumn {
                name: expected[index].clone(),
                index,
            })
        };
        let frame: u64 =
            field(0)?
                .trim()
                .parse()
                .map_err(|_| FlowIoError::InvalidField {
                    row: row_idx,
                    column: "frame".into(),
                    text: record.get(0).unwrap_or("").to_string(),
                })?;
        if frame != row_idx as u64 {
            return Err(FlowIoError::NonConsecutiveFrames {
                expected: row_idx,
                found: frame,
            });
        }
        let parse_value = |index: usize| -> Result<f64, FlowIoError> {
            let text = field(index)?.trim();
            let value: f64 = text.parse().map_err(|_| FlowIoError::InvalidField {
                row: row_idx,
                column: expected[index].clone(),
                text: text.to_string(),
            })?;
            if value < 0.0 {
                return Err(FlowIoError::NegativeHistogramValue {
                    row: row_idx,
                    column: expected[index].clone(),
                    value,
                });
            }
            Ok(value)
        };
        let mut hom = [0f64; 11];
        for (i, slot) in hom.iter_mut().enumerate() {
            *slot = parse_value(1 + i)?;
        }
        let mut hod = [0f64; 8];
        for (i, slot) in hod.iter_mut().enumerate() {
            *slot = parse_value(12 + i)?;
        }
        features.push(FrameFeatures {
            frame: row_idx,
            hom,
            hod,
        });
    }
    Ok(features)
}

/// Writes the feature table read back by [`read_feature_csv`].
pub fn write_feature_csv(
    features: &[FrameFeatures],
    path: impl AsRef<Path>,
) -> Result<(), FlowIoError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(feature_csv_header())?;
    for f in features {
        let mut record = Vec::with_capacity(20);
        record.push(f.frame.to_string());
        record.extend(f.hom.iter().map(|v| v.to_string()));
        record.extend(f.hod.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Path of the boundary sidecar written next to a segmentation CSV.
pub fn segmentation_sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("boundaries.txt")
}

/// Writes per-frame labels as a `frame,label` CSV plus a sidecar
/// boundary list (same format as [`read_boundaries`]).
pub fn write_segmentation(seg: &Segmentation, path: impl AsRef<Path>) -> Result<(), FlowIoError> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["frame", "label"])?;
    for (frame, label) in seg.labels.iter().enumerate() {
        writer.write_record(&[frame.to_string(), label.to_string()])?;
    }
    writer.flush()?;
    write_boundaries(&seg.boundaries(), segmentation_sidecar_path(path))?;
    Ok(())
}

/// Lists `*.flo` files in a directory in lexicographic order, so
/// zero-padded names map to frame order.
pub fn list_flow_dir(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>, FlowIoError> {
    list_dir_with_extension(dir, "flo")
}

/// Lists `*.pgm` files in a directory in lexicographic order.
pub fn list_frame_dir(dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>, FlowIoError> {
    list_dir_with_extension(dir, "pgm")
}

fn list_dir_with_extension(
    dir: impl AsRef<Path>,
    ext: &str,
) -> Result<Vec<std::path::PathBuf>, FlowIoError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case(ext))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}
