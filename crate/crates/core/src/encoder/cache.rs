//! Embedding cache file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PORE" | u32 header length | UTF-8 JSON header | n·dim f32 payload | 8-byte checksum
//! ```
//!
//! The checksum is the first 8 bytes of the SHA-256 digest of the payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingMatrix, MatrixError};
use crate::io::write_atomic;
use crate::prompt::TemplateId;

pub const CACHE_MAGIC: &[u8; 4] = b"PORE";
pub const CACHE_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid cache format: {0}")]
    Format(String),
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub version: u32,
    pub n: usize,
    pub dim: usize,
    pub dtype: String,
    pub backend_name: String,
    pub template_id: TemplateId,
    pub instance_ids: Vec<String>,
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub config_hash: Option<String>,
}

fn checksum(payload: &[u8]) -> [u8; CHECKSUM_LEN] {
    let digest = Sha256::digest(payload);
    digest[..CHECKSUM_LEN].try_into().expect("8 bytes")
}

/// Serializes the matrix to the cache byte layout.
pub fn to_bytes(m: &EmbeddingMatrix) -> Vec<u8> {
    let header = CacheHeader {
        version: CACHE_VERSION,
        n: m.rows(),
        dim: m.dim(),
        dtype: "f32".into(),
        backend_name: m.backend_name.clone(),
        template_id: m.template_id,
        instance_ids: m.instance_ids().to_vec(),
        normalized: m.normalized,
        config_hash: m.config_hash.clone(),
    };
    let header = serde_json::to_vec(&header).expect("serializable header");
    let payload: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();

    let mut out = Vec::with_capacity(8 + header.len() + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum(&payload));
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingMatrix, CacheError> {
    if bytes.len() < 8 {
        return Err(CacheError::Corrupt("file shorter than the fixed preamble".into()));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(CacheError::Format("bad magic bytes".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let header_end = 8 + header_len;
    if bytes.len() < header_end {
        return Err(CacheError::Corrupt("truncated header".into()));
    }
    let header: CacheHeader = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| CacheError::Format(format!("header: {e}")))?;
    if header.version != CACHE_VERSION {
        return Err(CacheError::Format(format!("unsupported version {}", header.version)));
    }
    if header.dtype != "f32" {
        return Err(CacheError::Format(format!("unsupported dtype {}", header.dtype)));
    }
    if header.n != header.instance_ids.len() {
        return Err(CacheError::Format(format!(
            "header declares n = {} but lists {} instance ids",
            header.n,
            header.instance_ids.len()
        )));
    }

    let payload_len = header
        .n
        .checked_mul(header.dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| CacheError::Format("payload size overflows".into()))?;
    let expected = header_end + payload_len + CHECKSUM_LEN;
    if bytes.len() < expected {
        return Err(CacheError::Corrupt(format!(
            "truncated: {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(CacheError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[header_end..header_end + payload_len];
    if checksum(payload) != bytes[header_end + payload_len..] {
        return Err(CacheError::Corrupt("checksum mismatch".into()));
    }

    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut m = EmbeddingMatrix::new(
        header.dim,
        data,
        header.instance_ids,
        header.template_id,
        header.backend_name,
    )
    .map_err(|e: MatrixError| CacheError::Format(e.to_string()))?;
    m.normalized = header.normalized;
    m.config_hash = header.config_hash;
    Ok(m)
}

pub fn save_cache(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), CacheError> {
    let path = path.as_ref();
    write_atomic(path, &to_bytes(m)).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, CacheError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known() -> EmbeddingMatrix {
        let data = (0..12).map(|i| i as f32 * 0.5 - 1.0).collect();
        let ids = ["a", "b", "c"].map(String::from).to_vec();
        EmbeddingMatrix::new(4, data, ids, TemplateId::P2, "unit").unwrap()
    }

    #[test]
    fn file_size_matches_layout() {
        let m = known();
        let bytes = to_bytes(&m);
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        // magic + length prefix + header, then 3×4 f32 and the checksum
        assert_eq!(bytes.len(), 4 + 4 + header_len + 48 + 8);
        assert_eq!(&bytes[..4], b"PORE");
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(header["dtype"], "f32");
        assert_eq!(header["n"], 3);
        assert_eq!(header["dim"], 4);
        assert_eq!(header["template_id"], "p2");
        // first payload value: -1.0f32 little-endian
        assert_eq!(&bytes[8 + header_len..12 + header_len], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = known();
        m.config_hash = Some("abc".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pore");
        save_cache(&m, &path).unwrap();
        let back = load_cache(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), fs::read(&path).unwrap());
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = to_bytes(&known());
        for cut in [3, 10, bytes.len() - 9, bytes.len() - 1] {
            assert!(
                matches!(from_bytes(&bytes[..cut]), Err(CacheError::Corrupt(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = to_bytes(&known());
        let n = bytes.len();
        bytes[n - 12] ^= 0x01;
        match from_bytes(&bytes) {
            Err(CacheError::Corrupt(msg)) => assert!(msg.contains("checksum")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_format_error() {
        let m = known();
        let bytes = to_bytes(&m);
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let text = String::from_utf8(bytes[8..8 + header_len].to_vec()).unwrap();
        let bad = text.replace("\"n\":3", "\"n\":2");
        let mut out = b"PORE".to_vec();
        out.extend_from_slice(&(bad.len() as u32).to_le_bytes());
        out.extend_from_slice(bad.as_bytes());
        out.extend_from_slice(&bytes[8 + header_len..]);
        assert!(matches!(from_bytes(&out), Err(CacheError::Format(_))));

        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(from_bytes(&wrong_magic), Err(CacheError::Format(_))));
    }
}
