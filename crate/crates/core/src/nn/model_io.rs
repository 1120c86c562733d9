//! `.sonn` model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `SONN` |
//! | 1 | format version (`1`) |
//! | 4 | spec text length `n` (u32) |
//! | n | spec in canonical text form, UTF-8 |
//! | 4·P | parameters as f32, in layout order |
//! | 4 | CRC32 of every preceding byte |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::network::Network;
use crate::nn::spec::NetworkSpec;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SONN";
pub const FORMAT_VERSION: u8 = 1;

/// Encode a network. Parameters are stored as `f32`, so only `f32` networks
/// round-trip bit-exactly.
pub fn encode_model<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let text = net.spec().to_string();
    let mut out = Vec::with_capacity(13 + text.len() + 4 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let bad = |m: &str| Error::ModelFormat(m.to_string());
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(bad("missing SONN header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            bytes[4]
        )));
    }
    let text_len = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let text_end = 9usize
        .checked_add(text_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("spec block runs past end of file"))?;
    let text = std::str::from_utf8(&bytes[9..text_end]).map_err(|_| bad("spec block is not UTF-8"))?;
    let spec: NetworkSpec = text
        .parse()
        .map_err(|e| Error::ModelFormat(format!("spec block: {e}")))?;
    let count = spec.count_params()?;
    let expected = text_end + 4 * count + 4;
    if bytes.len() != expected {
        return Err(Error::ModelFormat(format!(
            "spec needs {count} parameters ({expected} bytes), file has {} bytes",
            bytes.len()
        )));
    }
    let body = &bytes[..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch"));
    }
    let params = bytes[text_end..expected - 4]
        .chunks_exact(4)
        .map(|c| T::c(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
        .collect();
    Network::from_params(spec, params)
}

pub fn save_model<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
