//! Versioned little-endian binary layout for [`AtlasModel`].
//!
//! ```text
//! magic    4 bytes  "DATL"
//! version  u32
//! K D H W  u32 ×4   patches, code length, hidden layers, width
//! S        u32      number of shape codewords
//! K × per layer: weights (row-major, out × in) then bias, f64
//! S × D    f64      codewords
//! ```
//!
//! Trainer checkpoints append an optimizer section after this block.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Architecture, AtlasModel, Codeword, Dense, PatchDecoder};

pub const MAGIC: [u8; 4] = *b"DATL";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint header is invalid: {0}")]
    BadHeader(String),
    #[error(
        "checkpoint was written for K={found_k} {found:?}, expected K={expected_k} {expected:?}"
    )]
    ConfigMismatch {
        expected_k: usize,
        expected: Architecture,
        found_k: usize,
        found: Architecture,
    },
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => CheckpointError::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write_model<W: Write>(w: &mut W, model: &AtlasModel) -> Result<(), CheckpointError> {
    let arch = model.architecture();
    w.write_all(&MAGIC)?;
    write_u32(w, VERSION)?;
    for v in [
        model.num_patches(),
        arch.code_dim,
        arch.hidden_layers,
        arch.width,
        model.num_shapes(),
    ] {
        write_u32(w, v as u32)?;
    }
    for s in model.param_slices() {
        write_f64s(w, s)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<AtlasModel, CheckpointError> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = read_u32(r)? as usize;
    }
    let [k, code_dim, hidden, width, shapes] = dims;
    let arch = Architecture::new(code_dim, hidden, width)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
    if k == 0
        || k > 1 << 16
        || width > 1 << 16
        || hidden > 1 << 10
        || code_dim > 1 << 20
        || shapes > 1 << 24
    {
        return Err(CheckpointError::BadHeader(format!(
            "implausible sizes K={k} D={code_dim} H={hidden} W={width} S={shapes}"
        )));
    }
    let mut decoders = Vec::with_capacity(k);
    for index in 0..k {
        let mut dec = PatchDecoder::zeroed(arch, index);
        for layer in dec.layers_mut() {
            let (o, i) = layer.weights.dim();
            let weights = Array2::from_shape_vec((o, i), read_f64s(r, o * i)?).expect("shape");
            let bias = Array1::from(read_f64s(r, o)?);
            *layer = Dense { weights, bias };
        }
        decoders.push(dec);
    }
    let codewords = (0..shapes)
        .map(|_| read_f64s(r, code_dim).map(Codeword))
        .collect::<Result<Vec<_>, _>>()?;
    AtlasModel::from_parts(arch, decoders, codewords)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))
}
