//! Binary frame-embedding cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "MVS1"
//! 4       4           schema_version (u32)
//! 8       4           dim (u32)
//! 12      4           frame_count (u32)
//! 16      4           metadata_len (u32)
//! 20      M           metadata, UTF-8 JSON
//! 20+M    4*N*D       frame vectors, f32, frame-major
//! end-4   4           CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Metadata keys: `video_id`, `interval_sec`, `duration_sec`, `model_name`,
//! `timestamps` (one start time per frame, seconds).
//!
//! Vectors are narrowed to f32 on store. Loading a stored file and storing it
//! again reproduces the payload bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::retrieval::{Frame, FrameEmbeddingTrack};
use crate::vector::Embedding;
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"MVS1";
pub const CACHE_SCHEMA_VERSION: u32 = 1;

const HEADER_LEN: usize = 20;
const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheFile {
    pub schema_version: u32,
    pub model_name: String,
    pub track: FrameEmbeddingTrack,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    video_id: String,
    interval_sec: f64,
    duration_sec: f64,
    model_name: String,
    timestamps: Vec<f64>,
}

impl CacheFile {
    pub fn new(track: FrameEmbeddingTrack, model_name: impl Into<String>) -> Self {
        Self {
            schema_version: CACHE_SCHEMA_VERSION,
            model_name: model_name.into(),
            track,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let track = &self.track;
        let dim = track.dim().unwrap_or(0);
        let meta = Metadata {
            video_id: track.video_id().to_string(),
            interval_sec: track.interval_sec(),
            duration_sec: track.duration_sec(),
            model_name: self.model_name.clone(),
            timestamps: track.frames().iter().map(|f| f.t_start).collect(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let to_u32 = |n: usize, what: &str| {
            u32::try_from(n).map_err(|_| Error::InvalidTrack(format!("{what} {n} exceeds u32")))
        };

        let mut buf = Vec::with_capacity(HEADER_LEN + meta.len() + 4 * dim * track.len() + CHECKSUM_LEN);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&self.schema_version.to_le_bytes());
        buf.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
        buf.extend_from_slice(&to_u32(track.len(), "frame count")?.to_le_bytes());
        buf.extend_from_slice(&to_u32(meta.len(), "metadata length")?.to_le_bytes());
        buf.extend_from_slice(&meta);
        for f in track.frames() {
            for &v in f.embedding.values() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        Ok(buf)
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| Error::CorruptFile {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(corrupt("file is shorter than the header"));
        }
        if &bytes[..4] != CACHE_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != CACHE_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                found: version,
                supported: CACHE_SCHEMA_VERSION,
            });
        }
        let body_len = bytes.len() - CHECKSUM_LEN;
        if crc32fast::hash(&bytes[..body_len]) != word(body_len) {
            return Err(corrupt("checksum mismatch"));
        }
        let dim = word(8) as usize;
        let count = word(12) as usize;
        let meta_len = word(16) as usize;
        let payload_len = dim
            .checked_mul(count)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| corrupt("payload size overflows"))?;
        if HEADER_LEN + meta_len + payload_len != body_len {
            return Err(corrupt("section lengths do not match file size"));
        }
        let meta: Metadata = serde_json::from_slice(&bytes[HEADER_LEN..HEADER_LEN + meta_len])
            .map_err(|e| corrupt(&format!("metadata: {e}")))?;
        if meta.timestamps.len() != count {
            return Err(corrupt("timestamp count differs from frame count"));
        }
        if count > 0 && dim == 0 {
            return Err(corrupt("zero dimension with frames present"));
        }

        let payload = &bytes[HEADER_LEN + meta_len..body_len];
        let frames = meta
            .timestamps
            .iter()
            .zip(payload.chunks_exact(4 * dim.max(1)))
            .map(|(&t_start, chunk)| {
                let values: Vec<f32> = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect();
                Ok(Frame {
                    t_start,
                    embedding: Embedding::from_f32(&values)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let track = FrameEmbeddingTrack::new(meta.video_id, meta.interval_sec, meta.duration_sec, frames)?;
        Ok(Self {
            schema_version: version,
            model_name: meta.model_name,
            track,
        })
    }
}

/// Writes the track atomically: a temp file in the target directory is
/// fsynced and then renamed over `path`.
pub fn cache_store(track: &FrameEmbeddingTrack, model_name: &str, path: &Path) -> Result<()> {
    let bytes = CacheFile::new(track.clone(), model_name).encode()?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(&bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_cache_file(path: &Path) -> Result<CacheFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CacheFile::decode(&bytes, path)
}

pub fn cache_load(path: &Path) -> Result<FrameEmbeddingTrack> {
    Ok(load_cache_file(path)?.track)
}
