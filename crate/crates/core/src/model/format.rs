// SPDX-License-Identifier: MIT OR Apache-2.0

//! `LLENS1` weight file.
//!
//! Layout:
//!
//! ```text
//! "LLENS1\n"                 7 bytes
//! header_len                 u64, little endian
//! header                     UTF-8 JSON, header_len bytes
//! payload                    f32 little endian, row-major, tensors in header order
//! ```
//!
//! The header carries the [`ModelConfig`] fields at top level plus a
//! `tensors` array of `{name, shape}` entries.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelBundle, ModelConfig, ModelError, ModelWeights};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 7] = b"LLENS1\n";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelBundle<T>, ModelError> {
    let file = File::open(path)?;
    read_model(BufReader::new(file))
}

pub fn save_model<T: Scalar>(
    model: &ModelBundle<T>,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(model, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Serialises in canonical tensor order. Values are narrowed to `f32`.
pub fn write_model<T: Scalar, W: Write>(
    model: &ModelBundle<T>,
    mut out: W,
) -> Result<(), ModelError> {
    let tensors = model
        .config()
        .tensor_table()
        .into_iter()
        .map(|(name, shape)| TensorEntry { name, shape })
        .collect();
    let header = Header {
        config: model.config().clone(),
        tensors,
    };
    let json =
        serde_json::to_vec(&header).map_err(|e| ModelError::MalformedHeader(e.to_string()))?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut io_err = None;
    model.weights().for_each_tensor(|_, _, data| {
        if io_err.is_some() {
            return;
        }
        let bytes: Vec<u8> = data
            .iter()
            .flat_map(|x| x.to_f32_lossy().to_le_bytes())
            .collect();
        if let Err(e) = out.write_all(&bytes) {
            io_err = Some(e);
        }
    });
    match io_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn read_model<T: Scalar, R: Read>(mut input: R) -> Result<ModelBundle<T>, ModelError> {
    let mut magic = [0u8; 7];
    input
        .read_exact(&mut magic)
        .map_err(|_| ModelError::BadMagic)?;
    if &magic != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|_| ModelError::MalformedHeader("missing header length".into()))?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| ModelError::MalformedHeader("header length overflow".into()))?;
    // Cap the header to keep a corrupt length from allocating gigabytes.
    if len > 64 << 20 {
        return Err(ModelError::MalformedHeader(format!(
            "header length {len} is implausible"
        )));
    }
    let mut raw = vec![0u8; len];
    input
        .read_exact(&mut raw)
        .map_err(|_| ModelError::MalformedHeader("header shorter than declared".into()))?;
    let header: Header =
        serde_json::from_slice(&raw).map_err(|e| ModelError::MalformedHeader(e.to_string()))?;
    header.config.validate()?;

    let expected: HashMap<String, Vec<usize>> = header.config.tensor_table().into_iter().collect();
    let mut seen = HashMap::new();
    for entry in &header.tensors {
        let Some(shape) = expected.get(&entry.name) else {
            return Err(ModelError::UnknownTensor(entry.name.clone()));
        };
        if seen.insert(entry.name.as_str(), ()).is_some() {
            return Err(ModelError::UnknownTensor(entry.name.clone()));
        }
        if &entry.shape != shape {
            return Err(ModelError::ShapeMismatch {
                name: entry.name.clone(),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
    }
    if let Some((name, _)) = header
        .config
        .tensor_table()
        .into_iter()
        .find(|(name, _)| !seen.contains_key(name.as_str()))
    {
        return Err(ModelError::MissingTensor(name));
    }

    let total: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 4)
        .sum();
    let mut payload = Vec::with_capacity(total);
    input.read_to_end(&mut payload)?;
    if payload.len() < total {
        return Err(ModelError::Truncated {
            expected: total,
            found: payload.len(),
        });
    }
    if payload.len() > total {
        return Err(ModelError::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - total
        )));
    }

    let mut by_name: HashMap<&str, &[u8]> = HashMap::new();
    let mut offset = 0;
    for entry in &header.tensors {
        let n = entry.shape.iter().product::<usize>() * 4;
        by_name.insert(entry.name.as_str(), &payload[offset..offset + n]);
        offset += n;
    }

    let mut weights = ModelWeights::<T>::zeros(&header.config);
    let mut err = None;
    weights.for_each_tensor_mut(|name, _, data| {
        if err.is_some() {
            return;
        }
        let bytes = by_name[name];
        for (i, (dst, chunk)) in data.iter_mut().zip(bytes.chunks_exact(4)).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !x.is_finite() {
                err = Some(ModelError::NonFinite {
                    name: name.to_string(),
                    index: i,
                });
                return;
            }
            *dst = T::lit(f64::from(x));
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    ModelBundle::new(header.config, weights)
}
