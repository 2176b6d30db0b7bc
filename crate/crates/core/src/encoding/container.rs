//! Versioned binary container shared by datasets and checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                               |
//! |-------|---------------------------------------|
//! | 8     | magic                                 |
//! | 4     | format version (u32)                  |
//! | 8     | header length `h` (u64)               |
//! | 8     | payload length `p` (u64)              |
//! | h     | UTF-8 JSON header                     |
//! | p     | payload (packed little-endian arrays) |
//! | 32    | SHA-256 of every preceding byte       |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{FormatError, Result};

pub const FORMAT_VERSION: u32 = 1;
const PREFIX: usize = 8 + 4 + 8 + 8;
const DIGEST: usize = 32;

pub fn encode<H: Serialize>(magic: [u8; 8], header: &H, payload: &[u8]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header).map_err(|e| FormatError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(PREFIX + header.len() + payload.len() + DIGEST);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode<H: DeserializeOwned>(magic: [u8; 8], bytes: &[u8]) -> Result<(H, Vec<u8>), FormatError> {
    let need = |offset: usize, len: usize| -> Result<(), FormatError> {
        if bytes.len() < offset + len {
            Err(FormatError::Truncated {
                offset: bytes.len(),
                needed: offset + len - bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(0, 8)?;
    let mut found = [0u8; 8];
    found.copy_from_slice(&bytes[..8]);
    if found != magic {
        return Err(FormatError::BadMagic { expected: magic, found });
    }
    need(8, 4)?;
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    need(12, 16)?;
    let h = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let p = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
    let body_end = PREFIX
        .checked_add(h)
        .and_then(|v| v.checked_add(p))
        .ok_or_else(|| FormatError::Header("section lengths overflow".into()))?;
    need(body_end, DIGEST)?;
    if bytes.len() != body_end + DIGEST {
        return Err(FormatError::Validation(format!(
            "{} trailing bytes after checksum",
            bytes.len() - body_end - DIGEST
        )));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return Err(FormatError::Checksum);
    }
    let header = serde_json::from_slice(&bytes[PREFIX..PREFIX + h]).map_err(|e| FormatError::Header(e.to_string()))?;
    Ok((header, bytes[PREFIX + h..body_end].to_vec()))
}

pub fn write_file<H: Serialize>(path: &Path, magic: [u8; 8], header: &H, payload: &[u8]) -> Result<()> {
    let bytes = encode(magic, header, payload)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_file<H: DeserializeOwned>(path: &Path, magic: [u8; 8]) -> Result<(H, Vec<u8>)> {
    let bytes = fs::read(path)?;
    Ok(decode(magic, &bytes)?)
}

/// Sequential little-endian reader over a payload.
pub struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < len {
            return Err(FormatError::Validation(format!(
                "payload ends at {} but {} more bytes were declared",
                self.bytes.len(),
                self.pos + len - self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    pub fn f64s(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        Ok(self
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn u64s(&mut self, count: usize) -> Result<Vec<u64>, FormatError> {
        Ok(self
            .take(count * 8)?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn u32s(&mut self, count: usize) -> Result<Vec<u32>, FormatError> {
        Ok(self
            .take(count * 4)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn i8s(&mut self, count: usize) -> Result<Vec<i8>, FormatError> {
        Ok(self.take(count)?.iter().map(|&b| b as i8).collect())
    }

    pub fn finish(self) -> Result<(), FormatError> {
        if self.pos != self.bytes.len() {
            return Err(FormatError::Validation(format!(
                "{} unread payload bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn put_f64s(out: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn put_u64s(out: &mut Vec<u8>, xs: impl IntoIterator<Item = u64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn put_u32s(out: &mut Vec<u8>, xs: impl IntoIterator<Item = u32>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: [u8; 8] = *b"TESTMAGI";

    #[test]
    fn round_trip_and_corruption() {
        let header = serde_json::json!({"a": 1});
        let bytes = encode(MAGIC, &header, &[1, 2, 3]).unwrap();
        let (h, p): (serde_json::Value, _) = decode(MAGIC, &bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(p, vec![1, 2, 3]);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode::<serde_json::Value>(MAGIC, &bad).unwrap_err().code(), 1);

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert_eq!(decode::<serde_json::Value>(MAGIC, &bad).unwrap_err().code(), 2);

        for cut in [0, 5, 20, bytes.len() - 1] {
            assert_eq!(decode::<serde_json::Value>(MAGIC, &bytes[..cut]).unwrap_err().code(), 3);
        }

        let mut bad = bytes.clone();
        let k = bad.len() - 34;
        bad[k] ^= 1;
        assert_eq!(decode::<serde_json::Value>(MAGIC, &bad).unwrap_err().code(), 4);
    }
}
