//! Model files: the magic `ISPM`, a little-endian `u32` version, a `u32`
//! header length, a JSON header (config, target scale, seed, parameter
//! count) and the parameters as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, PredictorModel, TargetScale};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ISPM";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    scale: TargetScale,
    seed: u64,
    param_count: usize,
}

pub fn model_to_bytes(m: &PredictorModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: m.config.clone(),
        scale: m.scale,
        seed: m.seed,
        param_count: m.params.len(),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + 8 * m.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in &m.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<PredictorModel> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Input("not a model file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(Error::Input(format!(
            "unsupported model version {}",
            word(4)
        )));
    }
    let hlen = word(8) as usize;
    let body_start = 12 + hlen;
    if bytes.len() < body_start {
        return Err(Error::Input("model header is truncated".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..body_start])?;
    let body = &bytes[body_start..];
    if body.len() != 8 * header.param_count {
        return Err(Error::Input(format!(
            "model holds {} bytes of parameters, header promises {}",
            body.len(),
            8 * header.param_count
        )));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PredictorModel::from_parts(header.config, header.scale, header.seed, params)
}

pub fn save_model(path: &Path, m: &PredictorModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<PredictorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureTensor;

    #[test]
    fn round_trip_is_bit_identical() {
        let cfg = ModelConfig {
            channels: vec![4, 8],
            ..ModelConfig::for_input(8, 12)
        };
        let m = PredictorModel::new(
            cfg,
            TargetScale {
                min: -3.5,
                max: 1e6,
            },
            42,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&path, &m).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut x = FeatureTensor::zeros(8, 12);
        for (i, v) in x.data.iter_mut().enumerate() {
            *v = (i % 13) as f32 * 0.3;
        }
        let (a, b) = (m.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(model_from_bytes(b"nope").is_err());
        let cfg = ModelConfig {
            channels: vec![4],
            outputs: 9,
            ..ModelConfig::for_input(2, 2)
        };
        let m = PredictorModel::new(cfg, TargetScale { min: 0.0, max: 1.0 }, 0).unwrap();
        let bytes = model_to_bytes(&m).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }
}
