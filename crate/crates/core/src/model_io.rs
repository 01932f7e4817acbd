//! Binary model file: architecture header, every parameter array as
//! little-endian f64 in the canonical order, and a trailing content hash.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::network::{CodecModel, NetConfig, NetworkError};

pub const MODEL_MAGIC: [u8; 4] = *b"PCGM";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad magic, not a model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u8),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// FNV-1a 64-bit, the integrity hash for model files and bitstream headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

/// Serializes a model to its full file bytes (hash trailer included).
pub fn serialize_model(model: &CodecModel) -> Vec<u8> {
    let cfg = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(cfg.num_scales as u8);
    out.push(cfg.kernel_width as u8);
    out.push(cfg.irn_units_per_block as u8);
    out.extend_from_slice(&(cfg.latent_channels as u16).to_le_bytes());
    for &c in &cfg.channels {
        out.extend_from_slice(&(c as u16).to_le_bytes());
    }
    model.for_each_param(&mut |p| {
        for &v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    let hash = fnv1a64(&out);
    out.extend_from_slice(&hash.to_le_bytes());
    out
}

/// Content hash of a model (the value stored in the file trailer and the
/// bitstream header).
pub fn model_hash(model: &CodecModel) -> u64 {
    let bytes = serialize_model(model);
    u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap())
}

pub fn save_model(model: &CodecModel, path: &Path) -> Result<u64, ModelIoError> {
    let bytes = serialize_model(model);
    let hash = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    fs::write(path, bytes)?;
    Ok(hash)
}

/// Loads and hash-verifies a model file, returning the model and its hash.
pub fn load_model(path: &Path) -> Result<(CodecModel, u64), ModelIoError> {
    let bytes = fs::read(path)?;
    deserialize_model(&bytes)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<(CodecModel, u64), ModelIoError> {
    if bytes.len() < 9 + 8 {
        return Err(ModelIoError::Corrupt("file too short".into()));
    }
    if bytes[0..4] != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    if bytes[4] != MODEL_VERSION {
        return Err(ModelIoError::UnsupportedVersion(bytes[4]));
    }
    let num_scales = bytes[5] as usize;
    let kernel_width = bytes[6] as usize;
    let irn_units = bytes[7] as usize;
    let latent = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let mut pos = 10;
    if bytes.len() < pos + num_scales * 2 {
        return Err(ModelIoError::Corrupt("truncated channel list".into()));
    }
    let channels: Vec<usize> = (0..num_scales)
        .map(|i| u16::from_le_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as usize)
        .collect();
    pos += num_scales * 2;
    let config = NetConfig {
        num_scales,
        channels,
        latent_channels: latent,
        irn_units_per_block: irn_units,
        kernel_width,
    };
    let mut model = CodecModel::zeros(config)?;
    let n_params = model.num_params();
    let body_end = pos + n_params * 8;
    if bytes.len() != body_end + 8 {
        return Err(ModelIoError::Corrupt(format!(
            "expected {} bytes for {} parameters, file has {}",
            body_end + 8,
            n_params,
            bytes.len()
        )));
    }
    let stored_hash = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = fnv1a64(&bytes[..body_end]);
    if stored_hash != computed {
        return Err(ModelIoError::Corrupt("content hash mismatch".into()));
    }
    let mut cursor = pos;
    model.for_each_param_mut(&mut |p| {
        for v in p.iter_mut() {
            *v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
        }
    });
    Ok((model, stored_hash))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("pcgc_model_tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn small_model(seed: u64) -> CodecModel {
        CodecModel::init(
            NetConfig {
                num_scales: 2,
                channels: vec![8, 4],
                latent_channels: 3,
                irn_units_per_block: 1,
                kernel_width: 3,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn save_load_bit_identical() {
        let model = small_model(5);
        let path = tmp("roundtrip.pcgm");
        let hash = save_model(&model, &path).unwrap();
        let (loaded, loaded_hash) = load_model(&path).unwrap();
        assert_eq!(hash, loaded_hash);
        assert_eq!(loaded, model);
        assert_eq!(serialize_model(&loaded), serialize_model(&model));
    }

    #[test]
    fn hash_detects_corruption() {
        let model = small_model(6);
        let mut bytes = serialize_model(&model);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            deserialize_model(&bytes),
            Err(ModelIoError::Corrupt(_))
        ));
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let model = small_model(7);
        let mut bytes = serialize_model(&model);
        bytes[0] = b'X';
        assert!(matches!(
            deserialize_model(&bytes),
            Err(ModelIoError::BadMagic)
        ));
        let mut bytes = serialize_model(&model);
        bytes[4] = 9;
        assert!(matches!(
            deserialize_model(&bytes),
            Err(ModelIoError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn distinct_models_distinct_hashes() {
        assert_ne!(model_hash(&small_model(1)), model_hash(&small_model(2)));
    }
}
