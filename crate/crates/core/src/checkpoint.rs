//! Model checkpoints: a JSON header describing the model and its tensors,
//! followed by the raw parameter payload as little-endian 64-bit floats.
//!
//! Layout: 8-byte magic `EEGMIXCK`, u64 LE header length, UTF-8 JSON header,
//! then each tensor's data in header order.

use crate::error::{Error, Result};
use crate::rvgg::{build_rvgg, Model, ModelSpec};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"EEGMIXCK";

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    model: ModelSpec,
    tensors: Vec<TensorInfo>,
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let views = model.param_views();
    let header = Header {
        schema_version: 1,
        model: model.spec.clone(),
        tensors: views
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(header_json.len() + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, t) in &views {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 16 || &raw[..8] != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(raw[8..16].try_into().unwrap()) as usize;
    if raw.len() < 16 + header_len {
        return Err(Error::Data("truncated checkpoint header".to_string()));
    }
    let header: Header = serde_json::from_slice(&raw[16..16 + header_len])?;
    let mut model = build_rvgg(&header.model, 0)?;
    let mut offset = 16 + header_len;
    let mut views = model.param_views_mut();
    if views.len() != header.tensors.len() {
        return Err(Error::Data(format!(
            "checkpoint lists {} tensors, model has {}",
            header.tensors.len(),
            views.len()
        )));
    }
    for (info, (name, tensor)) in header.tensors.iter().zip(views.iter_mut()) {
        if info.name != *name || info.shape != tensor.shape() {
            return Err(Error::Data(format!(
                "checkpoint tensor {} {:?} does not match model tensor {} {:?}",
                info.name,
                info.shape,
                name,
                tensor.shape()
            )));
        }
        let n = tensor.len();
        let need = n * 8;
        if raw.len() < offset + need {
            return Err(Error::Data("truncated checkpoint payload".to_string()));
        }
        for (i, v) in tensor.data_mut().iter_mut().enumerate() {
            let at = offset + i * 8;
            *v = f64::from_le_bytes(raw[at..at + 8].try_into().unwrap());
        }
        offset += need;
    }
    if offset != raw.len() {
        return Err(Error::Data("trailing bytes in checkpoint".to_string()));
    }
    Ok(model)
}
