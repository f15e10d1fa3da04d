//! Binary checkpoint container.
//!
//! All integers little-endian.
//!
//! ```text
//! magic        8 bytes   "NSFFIELD"
//! version      u32       1
//! backend      u8        0 = dense grid, 1 = hash grid
//! config_len   u32
//! config       config_len bytes of JSON (FieldConfig)
//! count        u32       number of tensors
//! per tensor:
//!   name_len   u16
//!   name       name_len bytes UTF-8
//!   ndim       u8
//!   dims       ndim × u32
//!   payload    prod(dims) × f32 (little-endian)
//! ```
//!
//! Tensors appear in the field's parameter order, so two fields with equal
//! parameters serialize to identical bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::neural::{BackendConfig, FieldConfig, NeuralField};
use super::FieldError;
use crate::diff::ParamSet;
use crate::num::Real;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NSFFIELD";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<T: Real, W: Write>(field: &NeuralField<T>, mut w: W) -> Result<(), FieldError> {
    let cfg = field.config();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let tag: u8 = match cfg.backend {
        BackendConfig::Dense(_) => 0,
        BackendConfig::Hash(_) => 1,
    };
    w.write_all(&[tag])?;
    let json = serde_json::to_vec(cfg).map_err(|e| FieldError::Format(e.to_string()))?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let params = field.params().params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.shape.len() as u8])?;
        for &d in &p.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.values.len() * 4);
        for v in &p.values {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], FieldError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<NeuralField<T>, FieldError> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(FieldError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(FieldError::Format(format!("unsupported version {version}")));
    }
    let [tag] = read_array::<1, _>(&mut r)?;
    let json_len = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let cfg: FieldConfig = serde_json::from_slice(&json).map_err(|e| FieldError::Format(e.to_string()))?;
    let expected_tag = match cfg.backend {
        BackendConfig::Dense(_) => 0,
        BackendConfig::Hash(_) => 1,
    };
    if tag != expected_tag {
        return Err(FieldError::Format(format!("backend tag {tag} disagrees with config")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| FieldError::Format("tensor name not UTF-8".into()))?;
        let [ndim] = read_array::<1, _>(&mut r)?;
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(read_array(&mut r)?) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        params.add(name, shape, values);
    }
    NeuralField::from_params(cfg, params)
}

pub fn save_checkpoint<T: Real>(field: &NeuralField<T>, path: &Path) -> Result<(), FieldError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<NeuralField<T>, FieldError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
