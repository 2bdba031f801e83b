//! Binary checkpoint format.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "AAVT"
//! 4       4     format version, u32 little-endian
//! 8       4     length L of the config JSON, u32 little-endian
//! 12      L     ModelConfig as compact UTF-8 JSON
//! 12+L    ...   every parameter tensor, canonical order (see `params`),
//!               each value an f32 little-endian; no padding, no trailer
//! ```
//!
//! Tensor shapes are implied by the config, so the payload length is fully
//! determined by the header.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::layout;
use crate::model::vit::Model;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AAVT";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &Model<f32>) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(model.config()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let json_len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("config too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * crate::model::params::count(model.params()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.params().visit() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Checkpoint(format!("truncated header at byte {at}")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Checkpoint("missing AAVT magic".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let json_len = read_u32(bytes, 8)? as usize;
    let json = bytes
        .get(12..12 + json_len)
        .ok_or_else(|| Error::Checkpoint("truncated config".into()))?;
    let config: ModelConfig =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("config JSON: {e}")))?;
    config.validate()?;

    let specs = layout(&config);
    let total: usize = specs.visit().iter().map(|s| s.shape.iter().product::<usize>()).sum();
    let payload = &bytes[12 + json_len..];
    if payload.len() != 4 * total {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, config requires {}",
            payload.len(),
            4 * total
        )));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let mut tensors = Vec::new();
    for s in specs.visit() {
        let len: usize = s.shape.iter().product();
        let data: Vec<f32> = floats.by_ref().take(len).collect();
        tensors.push(Tensor::new(s.shape.clone(), data)?);
    }
    let params = specs.zip_ordered(tensors)?;
    Model::from_params(config, params)
}

pub fn save(model: &Model<f32>, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::HeadKind;

    fn toy() -> ModelConfig {
        ModelConfig {
            image_size: 8,
            patch_size: 4,
            embed_dim: 8,
            depth: 1,
            num_heads: 2,
            encoder_mlp_dim: 8,
            mlp_hidden: 8,
            pool_out: 4,
            head_kind: HeadKind::Aamlp,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::<f32>::init(toy()).unwrap();
        let bytes = to_bytes(&m).unwrap();
        assert_eq!(&bytes[..4], b"AAVT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_damage() {
        let m = Model::<f32>::init(toy()).unwrap();
        let bytes = to_bytes(&m).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(matches!(
            from_bytes(&wrong_version),
            Err(Error::CheckpointVersion { found: 9, .. })
        ));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(from_bytes(&bad_magic).is_err());
    }
}
