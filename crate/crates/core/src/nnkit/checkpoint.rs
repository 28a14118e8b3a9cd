//! Network checkpoints.
//!
//! A checkpoint is a UTF-8 JSON document:
//!
//! ```text
//! { "format": "sigfp-net", "version": 1,
//!   "params": { "layers": [ { "weight": { "shape": [out, in], "data": [...] },
//!                             "bias":   { "shape": [out],     "data": [...] },
//!                             "activation": "tanh" | "silu" | "identity" }, ... ] } }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::NetParams;
use crate::error::{Error, Result};

pub const FORMAT: &str = "sigfp-net";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    params: NetParams,
}

pub fn to_json(params: &NetParams) -> Result<String> {
    serde_json::to_string(&Envelope {
        format: FORMAT.into(),
        version: VERSION,
        params: params.clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json(text: &str) -> Result<NetParams> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if env.format != FORMAT || env.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            env.format, env.version
        )));
    }
    env.params.validate()?;
    Ok(env.params)
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save(params: &NetParams, path: &Path) -> Result<()> {
    write_atomic(path, to_json(params)?.as_bytes())
}

pub fn load(path: &Path) -> Result<NetParams> {
    from_json(&fs::read_to_string(path)?)
}
