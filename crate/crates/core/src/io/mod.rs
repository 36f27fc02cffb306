//! Trajectory file formats, the seed scheme, and dataset plumbing.
//!
//! Two encodings carry the same content:
//!
//! * JSON: `{"format": "hopkit-trajectory", "version": 1, "meta": {..}, "frames": [..]}`
//! * binary: [`BINARY_MAGIC`], `u32` version, `u64` payload length, then the
//!   little-endian payload written by [`encode_binary`].
//!
//! Both round-trip byte-exactly: decoding a file and encoding it again gives
//! the same bytes.

mod binary;
mod dataset;

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::synth::{Frame, Meta, Trajectory};

pub use binary::{decode_binary, encode_binary, BINARY_MAGIC};
pub use dataset::{
    file_sha256, read_manifest, synth_batch, validate_path, validate_trajectory, BatchFailure,
    BatchOutcome, BatchRequest, DatasetManifest, FileReport, ManifestEntry, ModelSource,
    ReportIssue, ValidationReport, MANIFEST_FILE, MANIFEST_FORMAT,
};

pub const FORMAT_NAME: &str = "hopkit-trajectory";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not valid JSON: {0}")]
    Json(String),
    #[error("expected format {expected:?}, found {found:?}")]
    Format { expected: &'static str, found: String },
    #[error("unsupported format version {0} (this build reads {FORMAT_VERSION})")]
    Version(u64),
    #[error("bad metadata: {0}")]
    Meta(String),
    #[error("frame {index}: {message}")]
    Frame { index: usize, message: String },
    #[error("missing binary magic header")]
    BadMagic,
    #[error("file truncated: header declares {declared} payload bytes, {available} present")]
    Truncated { declared: u64, available: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("malformed payload: {0}")]
    Payload(String),
    #[error("unknown {what} {name:?}")]
    UnknownModel { what: &'static str, name: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Grasp(#[from] crate::grasp::GraspError),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}

impl IoError {
    pub(crate) fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Golden-ratio increment of the SplitMix64 sequence.
pub const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of dataset item `i`: the `(i + 1)`-th SplitMix64 output for `root`.
/// Items are independent of each other and of the worker that runs them.
pub fn item_seed(root: u64, i: u64) -> u64 {
    splitmix64(root.wrapping_add(i.wrapping_add(1).wrapping_mul(SEED_GAMMA)))
}

#[derive(Serialize)]
struct Document<'a> {
    format: &'static str,
    version: u32,
    meta: &'a Meta,
    frames: &'a [Frame],
}

pub fn encode_json(t: &Trajectory) -> String {
    let doc = Document {
        format: FORMAT_NAME,
        version: FORMAT_VERSION,
        meta: &t.meta,
        frames: &t.frames,
    };
    let mut s = serde_json::to_string(&doc).expect("trajectory serializes");
    s.push('\n');
    s
}

pub fn decode_json(text: &str) -> Result<Trajectory, IoError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| IoError::Json(e.to_string()))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| IoError::Json("top level is not an object".into()))?;
    match obj.get("format").and_then(Value::as_str) {
        Some(FORMAT_NAME) => {}
        other => {
            return Err(IoError::Format {
                expected: FORMAT_NAME,
                found: other.unwrap_or("<missing>").to_string(),
            })
        }
    }
    match obj.get("version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(IoError::Version(v)),
        None => return Err(IoError::Meta("missing version".into())),
    }
    let meta: Meta = serde_json::from_value(obj.remove("meta").unwrap_or(Value::Null))
        .map_err(|e| IoError::Meta(e.to_string()))?;
    let frames = match obj.remove("frames") {
        Some(Value::Array(a)) => a,
        _ => return Err(IoError::Meta("frames must be an array".into())),
    };
    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            serde_json::from_value::<Frame>(v).map_err(|e| IoError::Frame {
                index,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory { meta, frames })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Json,
    Binary,
}

impl Encoding {
    pub fn extension(&self) -> &'static str {
        match self {
            Encoding::Json => "json",
            Encoding::Binary => "htraj",
        }
    }

    /// Binary for `.htraj`, JSON otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("htraj") => Encoding::Binary,
            _ => Encoding::Json,
        }
    }
}

pub fn encode(t: &Trajectory, enc: Encoding) -> Vec<u8> {
    match enc {
        Encoding::Json => encode_json(t).into_bytes(),
        Encoding::Binary => encode_binary(t),
    }
}

/// Decodes either encoding, recognizing binary files by their magic bytes.
pub fn decode(bytes: &[u8]) -> Result<Trajectory, IoError> {
    if bytes.first() == Some(&BINARY_MAGIC[0]) {
        return decode_binary(bytes);
    }
    let text = std::str::from_utf8(bytes).map_err(|e| IoError::Json(e.to_string()))?;
    decode_json(text)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::file(path, e))?;
    decode(&bytes)
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<(), IoError> {
    std::fs::write(path, encode(t, Encoding::for_path(path))).map_err(|e| IoError::file(path, e))
}
