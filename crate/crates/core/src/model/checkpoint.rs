//! Versioned binary checkpoint: magic, version, config header, then raw
//! little-endian f32 parameter arrays in declaration order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::Tensor;

use super::transformer::Params;
use super::{ModelConfig, ModelError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ARBW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &Params<f32>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let cfg = &params.cfg;
    for field in [
        cfg.d_model as u64,
        cfg.n_layers as u64,
        cfg.n_heads as u64,
        cfg.d_ff as u64,
        cfg.vocab_size as u64,
        cfg.max_seq as u64,
        cfg.seed,
    ] {
        w.write_all(&field.to_le_bytes())?;
    }
    for t in params.tensors() {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Params<f32>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadCheckpoint(format!(
            "bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut u64buf = [0u8; 8];
    let mut next = || -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let cfg = ModelConfig {
        d_model: next()? as usize,
        n_layers: next()? as usize,
        n_heads: next()? as usize,
        d_ff: next()? as usize,
        vocab_size: next()? as usize,
        max_seq: next()? as usize,
        seed: next()?,
    };
    cfg.validate()?;
    let mut tensors = Vec::new();
    for shape in Params::<f32>::shapes(&cfg) {
        let n: usize = shape.iter().product();
        let mut data = vec![0f32; n];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        tensors.push(Tensor::new(data, shape).map_err(ModelError::Tensor)?);
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(ModelError::BadCheckpoint("trailing bytes".into()));
    }
    Params::from_tensors(cfg, tensors)
}
