//! Model checkpoints: one binary file with a versioned text header line
//! (kind + architecture descriptor as JSON) followed by the flat parameter
//! vector as little-endian f64.

use ciresdiff_core::error::{CoreError, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &str = "CKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct Header<C> {
    kind: String,
    config: C,
    param_count: usize,
}

pub fn save_checkpoint<C: Serialize>(
    path: impl AsRef<Path>,
    kind: &str,
    config: &C,
    flat_params: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        kind: kind.to_string(),
        config,
        param_count: flat_params.len(),
    };
    let head = serde_json::to_string(&header)
        .map_err(|e| CoreError::InvalidArgument(format!("checkpoint header: {e}")))?;
    let mut file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    writeln!(file, "{MAGIC} {head}").map_err(|e| CoreError::io(path, e))?;
    let mut buf = Vec::with_capacity(flat_params.len() * 8);
    for &v in flat_params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf).map_err(|e| CoreError::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint<C: DeserializeOwned>(
    path: impl AsRef<Path>,
    expected_kind: &str,
) -> Result<(C, Vec<f64>)> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| CoreError::io(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason: "missing header line".into(),
        })?;
    let head = std::str::from_utf8(&bytes[..newline]).map_err(|_| CoreError::MalformedHeader {
        path: path.to_path_buf(),
        reason: "header is not UTF-8".into(),
    })?;
    let rest = head
        .strip_prefix(MAGIC)
        .and_then(|s| s.strip_prefix(' '))
        .ok_or_else(|| CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected {MAGIC} magic"),
        })?;
    let header: Header<C> =
        serde_json::from_str(rest).map_err(|e| CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("bad descriptor: {e}"),
        })?;
    if header.kind != expected_kind {
        return Err(CoreError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("kind {:?}, expected {expected_kind:?}", header.kind),
        });
    }
    let payload = &bytes[newline + 1..];
    if payload.len() != header.param_count * 8 {
        return Err(CoreError::TruncatedPayload {
            path: path.to_path_buf(),
            expected: header.param_count,
            got: payload.len() / 8,
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect();
    Ok((header.config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{Denoiser, DenoiserConfig};

    #[test]
    fn round_trip_denoiser_checkpoint() {
        let model = Denoiser::new(DenoiserConfig {
            base_channels: 4,
            cross_attention: true,
            seed: 3,
            ..DenoiserConfig::default()
        });
        let path = std::env::temp_dir().join("ciresdiff-ckpt-test.bin");
        save_checkpoint(&path, "denoiser", &model.config, &model.params.flat()).unwrap();
        let (config, params): (DenoiserConfig, Vec<f64>) =
            load_checkpoint(&path, "denoiser").unwrap();
        assert_eq!(config, model.config);
        assert_eq!(params, model.params.flat());
        let mut rebuilt = Denoiser::new(config);
        rebuilt.params.set_flat(&params);
        assert_eq!(rebuilt.params.flat(), model.params.flat());
    }

    #[test]
    fn kind_mismatch_rejected() {
        let path = std::env::temp_dir().join("ciresdiff-ckpt-kind.bin");
        save_checkpoint(&path, "classifier", &serde_json::json!({}), &[1.0]).unwrap();
        let r: Result<(serde_json::Value, Vec<f64>)> = load_checkpoint(&path, "denoiser");
        assert!(r.is_err());
    }
}
