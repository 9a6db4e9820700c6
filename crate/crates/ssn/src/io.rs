//! File formats and dataset loading.
//!
//! Binary carriers (all multi-byte fields little-endian):
//!
//! * Feature file: magic `SSNF`, `u32` T, `u32` D, then `T*D` `f32` values
//!   row-major (snippet-major). File size is exactly `12 + 4*T*D` bytes.
//! * Actionness file: magic `SSNA`, `u32` T, then `T` `f32` values in
//!   `[0, 1]`. File size is exactly `8 + 4*T` bytes.
//! * Model checkpoint: magic `SSNM`, `u32` version (1), `u32` K, `u32` D,
//!   `u32` A (0/1), `u32` pool mode (0 average, 1 max), `u32` L, then L
//!   `u32` course part counts, `f64` lambda, followed by `f64` weight
//!   blocks in order: activity matrix `(K+1) x dim_fc` row-major, activity
//!   bias `K+1`, completeness rows `K x dim_global`, completeness bias `K`,
//!   regression rows `K x 2 x dim_global` (per class: center row, log-span
//!   row), regression bias `2K`. `dim_fc = sum(B_l) * D` and
//!   `dim_global = (2*A + sum(B_l)) * D`.
//!
//! The dataset manifest, proposal lists, detection lists, training config,
//! and metric reports are JSON. All writes go through a temp file in the
//! target directory followed by a rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsnError};
use crate::intervals::{GroundTruthInstance, TemporalInterval};
use crate::model::ModelParams;
use crate::sequence::{SnippetSequence, VideoData};
use crate::stpp::{PoolMode, PyramidConfig};

const FEATURE_MAGIC: &[u8; 4] = b"SSNF";
const ACTIONNESS_MAGIC: &[u8; 4] = b"SSNA";
const CHECKPOINT_MAGIC: &[u8; 4] = b"SSNM";
const CHECKPOINT_VERSION: u32 = 1;

/// Write `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, bytes).map_err(|e| SsnError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| SsnError::io(path, e))
}

fn read_u32(reader: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| SsnError::format(path, format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(reader: &mut impl Read, path: &Path, what: &str) -> Result<f64> {
    let mut buf = [0u8; 8];
    reader
        .read_exact(&mut buf)
        .map_err(|_| SsnError::format(path, format!("truncated while reading {what}")))?;
    Ok(f64::from_le_bytes(buf))
}

fn expect_magic(reader: &mut impl Read, path: &Path, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| SsnError::format(path, "file too short for magic"))?;
    if &buf != magic {
        return Err(SsnError::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    Ok(())
}

pub fn write_features(path: &Path, seq: &SnippetSequence) -> Result<()> {
    let t = seq.num_snippets();
    let d = seq.dim();
    let mut bytes = Vec::with_capacity(12 + 4 * t * d);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for row in seq.rows() {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn read_features(path: &Path) -> Result<SnippetSequence> {
    let file = fs::File::open(path).map_err(|e| SsnError::io(path, e))?;
    let mut reader = BufReader::new(file);
    expect_magic(&mut reader, path, FEATURE_MAGIC)?;
    let t = read_u32(&mut reader, path, "snippet count")? as usize;
    let d = read_u32(&mut reader, path, "feature dimension")? as usize;
    if t == 0 || d == 0 {
        return Err(SsnError::format(path, "snippet count and dimension must be positive"));
    }
    let mut buf = vec![0u8; 4 * t * d];
    reader
        .read_exact(&mut buf)
        .map_err(|_| SsnError::format(path, format!("truncated: expected {} feature values", t * d)))?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| SsnError::io(path, e))? != 0 {
        return Err(SsnError::format(path, "trailing bytes after feature matrix"));
    }
    let mut data = Vec::with_capacity(t * d);
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(SsnError::format(path, format!("non-finite feature value at index {i}")));
        }
        data.push(v as f64);
    }
    SnippetSequence::new(data, t, d)
}

pub fn write_actionness(path: &Path, scores: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * scores.len());
    bytes.extend_from_slice(ACTIONNESS_MAGIC);
    bytes.extend_from_slice(&(scores.len() as u32).to_le_bytes());
    for (i, &v) in scores.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(SsnError::format(
                path,
                format!("actionness score {v} at index {i} outside [0, 1]"),
            ));
        }
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_actionness(path: &Path) -> Result<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| SsnError::io(path, e))?;
    let mut reader = BufReader::new(file);
    expect_magic(&mut reader, path, ACTIONNESS_MAGIC)?;
    let t = read_u32(&mut reader, path, "snippet count")? as usize;
    let mut buf = vec![0u8; 4 * t];
    reader
        .read_exact(&mut buf)
        .map_err(|_| SsnError::format(path, format!("truncated: expected {t} scores")))?;
    let mut scores = Vec::with_capacity(t);
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !(0.0..=1.0).contains(&v) {
            return Err(SsnError::format(
                path,
                format!("actionness score {v} at index {i} outside [0, 1]"),
            ));
        }
        scores.push(v);
    }
    Ok(scores)
}

pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let pyramid = params.pyramid();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(params.num_classes() as u32).to_le_bytes());
    bytes.extend_from_slice(&(params.snippet_dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&(pyramid.use_augmentation as u32).to_le_bytes());
    let pool = match pyramid.pool {
        PoolMode::Average => 0u32,
        PoolMode::Max => 1u32,
    };
    bytes.extend_from_slice(&pool.to_le_bytes());
    bytes.extend_from_slice(&(pyramid.course_levels.len() as u32).to_le_bytes());
    for &b in &pyramid.course_levels {
        bytes.extend_from_slice(&(b as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&params.lambda.to_le_bytes());
    for v in params.flat_params() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let file = fs::File::open(path).map_err(|e| SsnError::io(path, e))?;
    let mut reader = BufReader::new(file);
    expect_magic(&mut reader, path, CHECKPOINT_MAGIC)?;
    let version = read_u32(&mut reader, path, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(SsnError::format(path, format!("unsupported checkpoint version {version}")));
    }
    let k = read_u32(&mut reader, path, "class count")? as usize;
    let d = read_u32(&mut reader, path, "snippet dimension")? as usize;
    let aug = read_u32(&mut reader, path, "augmentation flag")?;
    let pool = match read_u32(&mut reader, path, "pool mode")? {
        0 => PoolMode::Average,
        1 => PoolMode::Max,
        other => {
            return Err(SsnError::format(path, format!("unknown pool mode {other}")));
        }
    };
    let levels = read_u32(&mut reader, path, "pyramid level count")? as usize;
    let mut course_levels = Vec::with_capacity(levels);
    for _ in 0..levels {
        course_levels.push(read_u32(&mut reader, path, "pyramid part count")? as usize);
    }
    let lambda = read_f64(&mut reader, path, "lambda")?;
    let pyramid = PyramidConfig::new(course_levels, aug != 0, pool)
        .map_err(|e| SsnError::format(path, e.to_string()))?;
    let mut params = ModelParams::zeros(k, d, pyramid, lambda)
        .map_err(|e| SsnError::format(path, e.to_string()))?;
    let n = params.flat_params().len();
    let mut flat = Vec::with_capacity(n);
    for _ in 0..n {
        let v = read_f64(&mut reader, path, "weight value")?;
        if !v.is_finite() {
            return Err(SsnError::format(path, "non-finite weight in checkpoint"));
        }
        flat.push(v);
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| SsnError::io(path, e))? != 0 {
        return Err(SsnError::format(path, "trailing bytes after weight blocks"));
    }
    params.set_flat_params(&flat)?;
    Ok(params)
}

/// Parse JSON from `path`, reporting the parse location on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| SsnError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SsnError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

/// Serialize `value` as pretty JSON and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = Vec::new();
    {
        let mut writer = BufWriter::new(&mut bytes);
        serde_json::to_writer_pretty(&mut writer, value)
            .map_err(|e| SsnError::format(path, e.to_string()))?;
        writer.write_all(b"\n").map_err(|e| SsnError::io(path, e))?;
    }
    atomic_write(path, &bytes)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInstance {
    pub class: usize,
    pub start: f64,
    pub end: f64,
}

fn default_stride() -> u32 {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub id: String,
    pub feature_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actionness_path: Option<String>,
    /// Frames between consecutive snippets; only used to convert snippet
    /// units to wall-clock in reports.
    #[serde(default = "default_stride")]
    pub snippet_stride_frames: u32,
    #[serde(default)]
    pub instances: Vec<ManifestInstance>,
}

/// Dataset manifest: the class-name table (label `i+1` maps to
/// `classes[i]`) and per-video file references with ground-truth instances
/// in snippet units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub videos: Vec<ManifestVideo>,
}

impl Manifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for video in &self.videos {
            if !seen.insert(&video.id) {
                return Err(SsnError::format(path, format!("duplicate video id '{}'", video.id)));
            }
            for (i, inst) in video.instances.iter().enumerate() {
                if inst.class == 0 || inst.class > self.classes.len() {
                    return Err(SsnError::format(
                        path,
                        format!(
                            "video '{}' instance {i}: class {} outside 1..={}",
                            video.id,
                            inst.class,
                            self.classes.len()
                        ),
                    ));
                }
                if !(inst.start.is_finite() && inst.end.is_finite() && inst.start >= 0.0 && inst.end > inst.start) {
                    return Err(SsnError::format(
                        path,
                        format!(
                            "video '{}' instance {i}: invalid interval [{}, {})",
                            video.id, inst.start, inst.end
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(path)?;
    manifest.validate(path)?;
    Ok(manifest)
}

/// Resolve a manifest-relative file reference.
pub fn resolve_path(manifest_path: &Path, relative: &str) -> PathBuf {
    let candidate = Path::new(relative);
    if candidate.is_absolute() {
        candidate.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(candidate)
    }
}

/// Load one video's features (and actionness when referenced), validating
/// instance bounds against the snippet count.
pub fn load_video(manifest_path: &Path, video: &ManifestVideo) -> Result<VideoData> {
    let feature_path = resolve_path(manifest_path, &video.feature_path);
    let mut seq = read_features(&feature_path)?;
    if let Some(rel) = &video.actionness_path {
        let actionness_path = resolve_path(manifest_path, rel);
        let scores = read_actionness(&actionness_path)?;
        if scores.len() != seq.num_snippets() {
            return Err(SsnError::format(
                &actionness_path,
                format!(
                    "actionness length {} does not match {} snippets of '{}'",
                    scores.len(),
                    seq.num_snippets(),
                    video.id
                ),
            ));
        }
        seq = seq.with_actionness(scores)?;
    }
    let t = seq.num_snippets() as f64;
    let mut instances = Vec::with_capacity(video.instances.len());
    for (i, inst) in video.instances.iter().enumerate() {
        if inst.end > t {
            return Err(SsnError::format(
                manifest_path,
                format!(
                    "video '{}' instance {i}: end {} beyond {} snippets",
                    video.id, inst.end, seq.num_snippets()
                ),
            ));
        }
        let interval = TemporalInterval::new(inst.start, inst.end)?;
        instances.push(GroundTruthInstance::new(&video.id, interval, inst.class)?);
    }
    Ok(VideoData {
        id: video.id.clone(),
        seq,
        instances,
    })
}

/// Load every video of the manifest in file order.
pub fn load_dataset(manifest_path: &Path, manifest: &Manifest) -> Result<Vec<VideoData>> {
    manifest
        .videos
        .iter()
        .map(|v| load_video(manifest_path, v))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProposalEntry {
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionEntry {
    pub class: usize,
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

/// Proposal lists keyed by video id.
pub type ProposalsFile = BTreeMap<String, Vec<ProposalEntry>>;

/// Detection lists keyed by video id.
pub type DetectionsFile = BTreeMap<String, Vec<DetectionEntry>>;

/// Convert a video's proposal entries into validated intervals.
pub fn proposal_intervals(path: &Path, video_id: &str, entries: &[ProposalEntry]) -> Result<Vec<TemporalInterval>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            TemporalInterval::new(e.start, e.end).map_err(|_| {
                SsnError::format(
                    path,
                    format!("video '{video_id}' proposal {i}: invalid interval [{}, {})", e.start, e.end),
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn feature_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ssnf");
        // f32-representable payload round-trips bit for bit
        let data: Vec<f64> = (0..24).map(|i| (i as f32 * 0.25 - 2.0) as f64).collect();
        let seq = SnippetSequence::new(data.clone(), 6, 4).unwrap();
        write_features(&path, &seq).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 12 + 4 * 24);
        let back = read_features(&path).unwrap();
        assert_eq!(back.num_snippets(), 6);
        assert_eq!(back.dim(), 4);
        for t in 0..6 {
            assert_eq!(back.row(t), &data[t * 4..(t + 1) * 4]);
        }
        // second write of the loaded data is byte-identical
        let first = fs::read(&path).unwrap();
        write_features(&path, &back).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn feature_file_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ssnf");
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_features(&path), Err(SsnError::Format { .. })));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SSNF");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes()); // 3 values missing
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_features(&path), Err(SsnError::Format { .. })));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SSNF");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_features(&path), Err(SsnError::Format { .. })));
    }

    #[test]
    fn actionness_round_trip_and_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ssna");
        let scores: Vec<f64> = (0..10).map(|i| (i as f32 / 16.0) as f64).collect();
        write_actionness(&path, &scores).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 8 + 4 * 10);
        assert_eq!(read_actionness(&path).unwrap(), scores);

        assert!(write_actionness(&path, &[1.5]).is_err());

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"SSNA");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_actionness(&path), Err(SsnError::Format { .. })));
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        use rand::prelude::*;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let pyramid = PyramidConfig::new(vec![1, 2], true, PoolMode::Average).unwrap();
        let mut params = ModelParams::zeros(3, 5, pyramid, 0.75).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let flat: Vec<f64> = params
            .flat_params()
            .iter()
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        params.set_flat_params(&flat).unwrap();
        write_checkpoint(&path, &params).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn manifest_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let dup = serde_json::json!({
            "classes": ["a"],
            "videos": [
                {"id": "v", "feature_path": "v.ssnf"},
                {"id": "v", "feature_path": "w.ssnf"}
            ]
        });
        fs::write(&path, dup.to_string()).unwrap();
        assert!(matches!(load_manifest(&path), Err(SsnError::Format { .. })));

        let bad_class = serde_json::json!({
            "classes": ["a"],
            "videos": [
                {"id": "v", "feature_path": "v.ssnf", "instances": [{"class": 2, "start": 0.0, "end": 5.0}]}
            ]
        });
        fs::write(&path, bad_class.to_string()).unwrap();
        assert!(matches!(load_manifest(&path), Err(SsnError::Format { .. })));

        fs::write(&path, "{ not json").unwrap();
        match load_manifest(&path) {
            Err(SsnError::Parse { line, column, .. }) => {
                assert!(line >= 1 && column >= 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn binary_formats_round_trip(seed in 0u64..50, t in 1usize..30, d in 1usize..6) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dir = tempfile::tempdir().unwrap();
            let fpath = dir.path().join("f.ssnf");
            let data: Vec<f64> = (0..t * d)
                .map(|_| rng.random_range(-100i32..100) as f64 / 8.0)
                .collect();
            let seq = SnippetSequence::new(data.clone(), t, d).unwrap();
            write_features(&fpath, &seq).unwrap();
            let back = read_features(&fpath).unwrap();
            for i in 0..t {
                prop_assert_eq!(back.row(i), seq.row(i));
            }

            let apath = dir.path().join("a.ssna");
            let scores: Vec<f64> = (0..t).map(|_| rng.random_range(0u32..=256) as f64 / 256.0).collect();
            write_actionness(&apath, &scores).unwrap();
            prop_assert_eq!(read_actionness(&apath).unwrap(), scores);
        }
    }
}
