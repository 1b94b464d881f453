use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

use super::model::{ModelConfig, Network};

const MAGIC: &[u8; 4] = b"EVNN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// `EVNN | version u16 | config length u32 | config text | count u64 | f64 LE params`.
pub fn encode_checkpoint<T: Real>(net: &Network<T>) -> Vec<u8> {
    let text = net.config().to_text();
    let mut out = Vec::with_capacity(18 + text.len() + 8 * net.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        out.extend_from_slice(&p.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    let need = |off: usize, n: usize| -> Result<&[u8]> {
        bytes
            .get(off..off + n)
            .ok_or_else(|| Error::parse(off as u64, "truncated checkpoint"))
    };
    if need(0, 4)? != MAGIC {
        return Err(Error::parse(0, "not a model checkpoint"));
    }
    let version = u16::from_le_bytes(need(4, 2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(4, format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(need(6, 4)?.try_into().unwrap()) as usize;
    let text = std::str::from_utf8(need(10, len)?).map_err(|_| Error::parse(10, "config is not UTF-8"))?;
    let config = ModelConfig::from_text(text)?;
    let off = 10 + len;
    let count = u64::from_le_bytes(need(off, 8)?.try_into().unwrap()) as usize;
    let body = need(off + 8, count.checked_mul(8).ok_or_else(|| Error::parse(off as u64, "bad count"))?)?;
    if bytes.len() != off + 8 + 8 * count {
        return Err(Error::parse((off + 8 + 8 * count) as u64, "trailing bytes after parameters"));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Network::from_params(config, params)
}

pub fn save_checkpoint<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
