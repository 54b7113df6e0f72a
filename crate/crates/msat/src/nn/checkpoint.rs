//! Binary checkpoints. Weights are stored as little-endian f64 so a
//! save/load round trip is bit exact.
//!
//! Layout: magic `MSATCKPT`, format version (u32), kind (u8, 0 single-scale /
//! 1 multi-scale), scale (u8), fusion mode (u8, 0 none / 1 global / 2 local),
//! freeze bits (u8), the six dimension fields (u32 each), then the number of
//! parameter tensors (u32) followed by each tensor: name length (u32), UTF-8
//! name, rows (u32), cols (u32), row-major values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{FreezeMask, FusionMode, ModelDims, MsatParams, Param, SingleScaleParams};
use crate::rep::Scale;

const MAGIC: &[u8; 8] = b"MSATCKPT";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub enum Checkpoint {
    Single(SingleScaleParams),
    Msat(MsatParams),
}

impl Checkpoint {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Checkpoint::Single(p) => p.scale.name(),
            Checkpoint::Msat(_) => "msat",
        }
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_entry(w: &mut impl Write, name: &str, p: &Param) -> io::Result<()> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, p.w.rows as u32)?;
    write_u32(w, p.w.cols as u32)?;
    for &v in &p.w.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_header(
    w: &mut impl Write,
    kind: u8,
    scale: u8,
    fusion: u8,
    freeze: u8,
    dims: &ModelDims,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    w.write_all(&[kind, scale, fusion, freeze])?;
    for v in [dims.d_model, dims.n_embed, dims.layers, dims.heads, dims.d_ff, dims.max_len] {
        write_u32(w, v as u32)?;
    }
    Ok(())
}

pub fn save_single(path: &Path, p: &SingleScaleParams) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, 0, p.scale as u8, 0, 0, &p.decoder.dims)?;
    let entries = p.entries();
    write_u32(&mut w, entries.len() as u32)?;
    for (name, param) in entries {
        write_entry(&mut w, &name, param)?;
    }
    w.flush()
}

pub fn save_msat(path: &Path, p: &MsatParams) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let fusion = match p.fusion.mode() {
        FusionMode::Global => 1,
        FusionMode::Local => 2,
    };
    write_header(&mut w, 1, 0, fusion, p.freeze.to_bits(), &p.decoders[0].dims)?;
    let entries = p.entries();
    write_u32(&mut w, entries.len() as u32)?;
    for (name, param) in entries {
        write_entry(&mut w, &name, param)?;
    }
    w.flush()
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_into_entries(
    r: &mut impl Read,
    entries: Vec<(String, &mut Param)>,
) -> Result<(), CheckpointError> {
    let n = read_u32(r)? as usize;
    if n != entries.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameter tensors, file has {n}",
            entries.len()
        )));
    }
    for (name, param) in entries {
        let name_len = read_u32(r)? as usize;
        if name_len > 256 {
            return Err(CheckpointError::Corrupt("parameter name too long".into()));
        }
        let mut buf = vec![0u8; name_len];
        r.read_exact(&mut buf)
            .map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
        let file_name = String::from_utf8(buf)
            .map_err(|_| CheckpointError::Corrupt("parameter name not UTF-8".into()))?;
        if file_name != name {
            return Err(CheckpointError::Corrupt(format!(
                "parameter order mismatch: expected {name}, found {file_name}"
            )));
        }
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if rows != param.w.rows || cols != param.w.cols {
            return Err(CheckpointError::Corrupt(format!(
                "{name}: expected {}x{}, file has {rows}x{cols}",
                param.w.rows, param.w.cols
            )));
        }
        let mut b = [0u8; 8];
        for v in param.w.data.iter_mut() {
            r.read_exact(&mut b)
                .map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
            *v = f64::from_le_bytes(b);
        }
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => Ok(()),
        Ok(_) => Err(CheckpointError::Corrupt("trailing bytes".into())),
        Err(e) => Err(e.into()),
    }
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags)
        .map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
    let [kind, scale, fusion, freeze] = flags;
    let mut d = [0usize; 6];
    for v in d.iter_mut() {
        *v = read_u32(&mut r)? as usize;
    }
    let dims = ModelDims {
        d_model: d[0],
        n_embed: d[1],
        layers: d[2],
        heads: d[3],
        d_ff: d[4],
        max_len: d[5],
    };
    dims.validate()
        .map_err(|e| CheckpointError::Corrupt(format!("bad dimensions: {e}")))?;
    // Values are overwritten entry by entry; the seed only shapes buffers.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match kind {
        0 => {
            let scale = match scale {
                0 => Scale::Note,
                1 => Scale::Bar,
                2 => Scale::Track,
                other => {
                    return Err(CheckpointError::Corrupt(format!("bad scale byte {other}")))
                }
            };
            if fusion != 0 {
                return Err(CheckpointError::Corrupt(
                    "single-scale checkpoint with a fusion mode".into(),
                ));
            }
            let mut p = SingleScaleParams::new(scale, &dims, &mut rng);
            read_into_entries(&mut r, p.entries_mut())?;
            Ok(Checkpoint::Single(p))
        }
        1 => {
            let mode = match fusion {
                1 => FusionMode::Global,
                2 => FusionMode::Local,
                other => {
                    return Err(CheckpointError::Corrupt(format!("bad fusion byte {other}")))
                }
            };
            let mut p = MsatParams::new(mode, &dims, &mut rng);
            p.freeze = FreezeMask::from_bits(freeze);
            read_into_entries(&mut r, p.entries_mut())?;
            Ok(Checkpoint::Msat(p))
        }
        other => Err(CheckpointError::Corrupt(format!("bad kind byte {other}"))),
    }
}

pub fn load_single(path: &Path) -> Result<SingleScaleParams, CheckpointError> {
    match load(path)? {
        Checkpoint::Single(p) => Ok(p),
        Checkpoint::Msat(_) => Err(CheckpointError::Corrupt(
            "expected a single-scale checkpoint, found a multi-scale one".into(),
        )),
    }
}

pub fn load_msat(path: &Path) -> Result<MsatParams, CheckpointError> {
    match load(path)? {
        Checkpoint::Msat(p) => Ok(p),
        Checkpoint::Single(_) => Err(CheckpointError::Corrupt(
            "expected a multi-scale checkpoint, found a single-scale one".into(),
        )),
    }
}
