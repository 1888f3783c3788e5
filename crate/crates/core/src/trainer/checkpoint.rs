//! Model checkpoints extended with the optimizer state.
//!
//! After the model block the file holds `"ADAM"`, the step count (u64),
//! the parameter count (u64), then the first and second moments as f64.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::OptimizerState;
use crate::surface::checkpoint::{
    read_f64s, read_model, read_u64, write_f64s, write_model, write_u64, CheckpointError,
};
use crate::surface::{Architecture, AtlasModel};

const OPTIMIZER_TAG: [u8; 4] = *b"ADAM";

/// Writes through a temporary file so an interrupted save never leaves a
/// truncated checkpoint behind.
pub fn save_checkpoint(
    path: &Path,
    model: &AtlasModel,
    state: &OptimizerState,
) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_model(&mut w, model)?;
        w.write_all(&OPTIMIZER_TAG)?;
        write_u64(&mut w, state.step)?;
        write_u64(&mut w, state.m.len() as u64)?;
        write_f64s(&mut w, &state.m)?;
        write_f64s(&mut w, &state.v)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint. With `expected = Some((K, arch))` a checkpoint of a
/// different configuration is rejected. A file without an optimizer
/// section yields a fresh state.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<(usize, Architecture)>,
) -> Result<(AtlasModel, OptimizerState), CheckpointError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let model = read_model(&mut r)?;
    if let Some((k, arch)) = expected {
        if model.num_patches() != k || model.architecture() != arch {
            return Err(CheckpointError::ConfigMismatch {
                expected_k: k,
                expected: arch,
                found_k: model.num_patches(),
                found: model.architecture(),
            });
        }
    }
    let mut tag = [0u8; 4];
    match r.read(&mut tag)? {
        0 => return Ok((model.clone(), OptimizerState::new(model.num_params()))),
        4 if tag == OPTIMIZER_TAG => {}
        _ => {
            return Err(CheckpointError::BadHeader(
                "unrecognized section after the model".into(),
            ))
        }
    }
    let step = read_u64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    if n != model.num_params() {
        return Err(CheckpointError::BadHeader(format!(
            "optimizer holds {n} moments for {} parameters",
            model.num_params()
        )));
    }
    let m = read_f64s(&mut r, n)?;
    let v = read_f64s(&mut r, n)?;
    Ok((model, OptimizerState { step, m, v }))
}
