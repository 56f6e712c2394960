//! On-disk formats.
//!
//! SPGM feature file, all integers little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "SPGM"
//! 4       2         version (u16) = 1
//! 6       4         frames T (u32)
//! 10      4         bins F (u32)
//! 14      4*T*F     f32 values, row-major (frame by frame)
//! ```
//!
//! Batch manifest: UTF-8 text, one record per line as
//! `sample_id<TAB>feature_path<TAB>loss`. Blank lines and lines starting
//! with `#` are ignored. Relative feature paths are resolved against the
//! manifest's directory by [`BatchManifest::resolve`].

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::spectral::FeatureMatrix;

pub const SPGM_MAGIC: [u8; 4] = *b"SPGM";
pub const SPGM_VERSION: u16 = 1;
pub const SPGM_HEADER_LEN: usize = 14;

pub fn encode_features(matrix: &FeatureMatrix) -> Result<Vec<u8>> {
    let frames = u32::try_from(matrix.frames())
        .map_err(|_| Error::Invalid(format!("{} frames do not fit the SPGM header", matrix.frames())))?;
    let bins = u32::try_from(matrix.bins())
        .map_err(|_| Error::Invalid(format!("{} bins do not fit the SPGM header", matrix.bins())))?;
    let mut buf = Vec::with_capacity(SPGM_HEADER_LEN + 4 * matrix.values().len());
    buf.extend_from_slice(&SPGM_MAGIC);
    buf.extend_from_slice(&SPGM_VERSION.to_le_bytes());
    buf.extend_from_slice(&frames.to_le_bytes());
    buf.extend_from_slice(&bins.to_le_bytes());
    for v in matrix.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Parses an SPGM image. `path` is only used to label errors.
pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());

    if bytes.len() < 4 {
        return Err(fail(bytes.len(), "truncated magic".into()));
    }
    if bytes[..4] != SPGM_MAGIC {
        return Err(fail(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    if bytes.len() < SPGM_HEADER_LEN {
        return Err(fail(bytes.len(), format!("truncated header ({} of {SPGM_HEADER_LEN} bytes)", bytes.len())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != SPGM_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let frames = u32_at(6) as usize;
    if frames == 0 {
        return Err(fail(6, "frame count is zero".into()));
    }
    let bins = u32_at(10) as usize;
    if bins == 0 {
        return Err(fail(10, "bin count is zero".into()));
    }
    let payload_len = frames
        .checked_mul(bins)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fail(6, format!("{frames}x{bins} payload overflows")))?;
    let end = SPGM_HEADER_LEN + payload_len;
    if bytes.len() < end {
        return Err(fail(
            bytes.len(),
            format!("truncated payload: expected {payload_len} bytes, found {}", bytes.len() - SPGM_HEADER_LEN),
        ));
    }
    if bytes.len() > end {
        return Err(fail(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    let mut values = Vec::with_capacity(frames * bins);
    for (i, chunk) in bytes[SPGM_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(fail(SPGM_HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    FeatureMatrix::new(frames, bins, values)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}

/// Writes `contents` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_features(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_features(matrix)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub feature_path: PathBuf,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchManifest {
    pub records: Vec<ManifestRecord>,
}

fn check_sample_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("empty sample_id".into());
    }
    if id == "." || id == ".." || id.contains(['/', '\\']) || id.chars().any(char::is_control) {
        return Err(format!("sample_id {id:?} is not usable as a file name"));
    }
    Ok(())
}

impl BatchManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, feature_path, loss] = fields[..] else {
                return Err(fail(
                    line_no,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            };
            check_sample_id(id).map_err(|m| fail(line_no, m))?;
            if feature_path.is_empty() {
                return Err(fail(line_no, "empty feature_path".into()));
            }
            let loss: f64 = loss
                .trim()
                .parse()
                .map_err(|_| fail(line_no, format!("loss {loss:?} is not a number")))?;
            if !loss.is_finite() || loss < 0.0 {
                return Err(fail(line_no, format!("loss must be finite and >= 0, got {loss}")));
            }
            if !seen.insert(id.to_owned()) {
                return Err(fail(line_no, format!("duplicate sample_id {id:?}")));
            }
            records.push(ManifestRecord {
                sample_id: id.to_owned(),
                feature_path: PathBuf::from(feature_path),
                loss,
            });
        }
        Ok(BatchManifest { records })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# sample_id\tfeature_path\tloss\n");
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\n", r.sample_id, r.feature_path.display(), r.loss));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Feature path of `record`, joined onto `base` when relative.
    pub fn resolve(base: &Path, record: &ManifestRecord) -> PathBuf {
        if record.feature_path.is_absolute() {
            record.feature_path.clone()
        } else {
            base.join(&record.feature_path)
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<BatchManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    BatchManifest::parse(&text, path)
}

pub fn write_manifest(manifest: &BatchManifest, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), manifest.to_text().as_bytes())
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("engine config always serializes")
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<EngineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EngineConfig::from_toml_str(&text)
}
