//! Parameter checkpoint format: 16-byte header (magic `RLVP`, version `u32`
//! LE, parameter count `u64` LE) followed by the flattened parameters as
//! little-endian `f64`, layer by layer, weights row-major then bias.

use super::{MlpParams, MlpSpec};
use crate::error::{Result, RlvError};
use std::io::{Read, Write};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLVP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_params<W: Write>(w: &mut W, params: &MlpParams) -> Result<()> {
    let mut flat = Vec::with_capacity(params.param_count());
    params.flatten_into(&mut flat);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_params<R: Read>(r: &mut R, spec: &MlpSpec) -> Result<MlpParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(RlvError::Checkpoint("bad magic".into()));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != CHECKPOINT_VERSION {
        return Err(RlvError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let count = u64::from_le_bytes(buf8) as usize;
    if count != spec.param_count() {
        return Err(RlvError::Checkpoint(format!(
            "parameter count mismatch: file has {count}, spec wants {}",
            spec.param_count()
        )));
    }
    let mut flat = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf8)?;
        flat.push(f64::from_le_bytes(buf8));
    }
    MlpParams::from_flat(spec, &flat)
}
