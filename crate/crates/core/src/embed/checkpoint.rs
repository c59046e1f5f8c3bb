//! Checkpoint files: a `u32` little-endian header length, a JSON header,
//! then every parameter as a little-endian `f32` in layer order
//! (weight row-major, then bias).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::net::{EmbeddingNet, Layer, Linear, NetConfig, Params};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: NetConfig,
    pub layers: Vec<LayerShape>,
    pub step: u64,
    pub seed: u64,
}

/// Raw little-endian `f32` tensor block.
pub fn encode_f32(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format(format!(
            "tensor block of {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_checkpoint<T: Scalar>(net: &EmbeddingNet<T>, step: u64) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        config: net.config,
        layers: net
            .params
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerShape {
                name: Layer::NAMES[i].to_string(),
                inputs: l.weight.nrows(),
                outputs: l.weight.ncols(),
            })
            .collect(),
        step,
        seed: net.seed,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(4 + json.len() + 4 * net.params.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend(encode_f32(
        net.params.flatten().into_iter().map(|v| v.as_f64() as f32),
    ));
    Ok(out)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(EmbeddingNet<T>, CheckpointHeader)> {
    if bytes.len() < 4 {
        return Err(Error::Format("checkpoint truncated".into()));
    }
    let hlen = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let body = bytes
        .get(4..4 + hlen)
        .ok_or_else(|| Error::Format("checkpoint header truncated".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let values = decode_f32(&bytes[4 + hlen..])?;
    let expected: usize = header
        .layers
        .iter()
        .map(|l| l.inputs * l.outputs + l.outputs)
        .sum();
    if values.len() != expected {
        return Err(Error::Format(format!(
            "checkpoint holds {} values, header describes {expected}",
            values.len()
        )));
    }
    let mut layers = Vec::new();
    for l in &header.layers {
        layers.push(Linear::<T>::zeros(l.inputs, l.outputs));
    }
    let mut params = Params { layers };
    for (i, v) in values.into_iter().enumerate() {
        params.set(i, T::of(v as f64));
    }
    let net = EmbeddingNet {
        config: header.config,
        params,
        seed: header.seed,
    };
    Ok((net, header))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, net: &EmbeddingNet<T>, step: u64) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode_checkpoint(net, step)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(EmbeddingNet<T>, CheckpointHeader)> {
    decode_checkpoint(&fs::read(path)?)
}
