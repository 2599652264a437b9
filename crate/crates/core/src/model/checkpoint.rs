//! `WGP1` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "WGP1"  u32 version
//! u32 len, canonical JSON {"meta": ..., "model": ModelConfig}
//! u32 n_params, then per parameter (lexicographic):
//!     u32 len + name, u32 rank, rank × u32 dims, u8 dtype (0 = f32, 1 = f64), payload
//! u8 has_adam; if 1:
//!     u64 step, f64 beta1, f64 beta2, f64 eps, u32 n,
//!     per entry: u32 len + name, u8 dtype, m payload, v payload (parameter shape)
//! u32 CRC-32 of all preceding bytes
//! ```
//!
//! Payloads are written as f64 so that a reloaded model reproduces its
//! logits bit for bit; f32 payloads are accepted on read.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::canonical::{from_json_str, to_canonical_string};
use crate::error::{Error, Result};
use crate::formats::{put_string, put_u32, read_file, write_file, ByteReader};
use crate::model::ModelConfig;
use crate::numcore::{AdamConfig, AdamState, Moments, ParameterSet, Tensor};

const MAGIC: &[u8; 4] = b"WGP1";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub adam: Option<AdamState>,
    /// Free-form run metadata (training progress and the like).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: serde_json::Value,
    model: ModelConfig,
}

fn put_f64s(out: &mut Vec<u8>, data: &[f64]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_payload(r: &mut ByteReader<'_>, dtype: u8, n: usize) -> Result<Vec<f64>> {
    match dtype {
        DTYPE_F32 => Ok(r.f32s(n)?.into_iter().map(f64::from).collect()),
        DTYPE_F64 => r.f64s(n),
        d => Err(r.error(format!("unknown dtype {d}"))),
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let header = to_canonical_string(&Header {
        meta: ck.meta.clone(),
        model: ck.config.clone(),
    })?;
    put_string(&mut out, &header);
    put_u32(&mut out, ck.params.len() as u32);
    for (name, p) in ck.params.iter() {
        put_string(&mut out, name);
        put_u32(&mut out, p.value.rank() as u32);
        for &d in p.value.shape() {
            put_u32(&mut out, d as u32);
        }
        out.push(DTYPE_F64);
        put_f64s(&mut out, p.value.data());
    }
    match &ck.adam {
        None => out.push(0),
        Some(st) => {
            out.push(1);
            out.extend_from_slice(&st.step.to_le_bytes());
            for v in [st.config.beta1, st.config.beta2, st.config.eps] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_u32(&mut out, st.moments.len() as u32);
            for (name, mo) in &st.moments {
                put_string(&mut out, name);
                out.push(DTYPE_F64);
                put_f64s(&mut out, mo.m.data());
                put_f64s(&mut out, mo.v.data());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 12 {
        return Err(Error::parse("WGP1", 0, "file too short"));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let mut r = ByteReader::new("WGP1", body);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse("WGP1", 4, format!("unsupported version {version}")));
    }
    if crc32fast::hash(body) != stored {
        return Err(Error::parse("WGP1", body.len() as u64, "CRC mismatch"));
    }
    let header: Header = from_json_str(&r.string()?)?;
    header.model.validate()?;
    let n = r.u32()? as usize;
    let mut params = ParameterSet::new();
    let mut shapes = BTreeMap::new();
    for _ in 0..n {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let dtype = r.u8()?;
        let count = shape.iter().product();
        let data = read_payload(&mut r, dtype, count)?;
        let at = r.pos();
        params
            .insert(name.clone(), Tensor::new(&shape, data)?)
            .map_err(|e| Error::parse("WGP1", at, e.to_string()))?;
        shapes.insert(name, shape);
    }
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let f = r.f64s(3)?;
            let n = r.u32()? as usize;
            let mut moments = BTreeMap::new();
            for _ in 0..n {
                let at = r.pos();
                let name = r.string()?;
                let shape = shapes
                    .get(&name)
                    .ok_or_else(|| Error::parse("WGP1", at, format!("moments for unknown parameter {name}")))?
                    .clone();
                let dtype = r.u8()?;
                let count = shape.iter().product();
                let m = Tensor::new(&shape, read_payload(&mut r, dtype, count)?)?;
                let v = Tensor::new(&shape, read_payload(&mut r, dtype, count)?)?;
                moments.insert(name, Moments { m, v });
            }
            Some(AdamState {
                config: AdamConfig {
                    beta1: f[0],
                    beta2: f[1],
                    eps: f[2],
                },
                step,
                moments,
            })
        }
        f => return Err(r.error(format!("invalid optimizer flag {f}"))),
    };
    r.finish()?;
    Ok(Checkpoint {
        config: header.model,
        params,
        adam,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &encode_checkpoint(ck)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&read_file(path)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    fn tiny() -> ModelConfig {
        ModelConfig {
            main_layers: 1,
            main_dim: 8,
            main_heads: 2,
            head_hidden: 8,
            vocab: 16,
            ..ModelConfig::gpt_s()
        }
    }

    #[test]
    fn round_trip_with_optimizer_state() {
        let model = Model::new(tiny()).unwrap();
        let params = model.init_params(1).unwrap();
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step = 7;
        adam.moments.values_mut().next().unwrap().m.data_mut()[0] = 0.125;
        let ck = Checkpoint {
            config: tiny(),
            params,
            adam: Some(adam),
            meta: serde_json::json!({"epoch": 3}),
        };
        let bytes = encode_checkpoint(&ck).unwrap();
        assert_eq!(&bytes[..4], b"WGP1");
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
    }

    #[test]
    fn corruption_is_detected() {
        let model = Model::new(tiny()).unwrap();
        let ck = Checkpoint {
            config: tiny(),
            params: model.init_params(1).unwrap(),
            adam: None,
            meta: serde_json::Value::Null,
        };
        let mut bytes = encode_checkpoint(&ck).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(err.to_string().contains("CRC"), "{err}");
        assert!(decode_checkpoint(&bytes[..20]).is_err());
    }
}
