//! Binary network checkpoints.
//!
//! Layout (little-endian): magic `SGNN`, format version `u32`, activation
//! tag `u8` (1 = tanh hidden, linear head), layer width count `u32`, widths
//! as `u64`, then every parameter as `f64` in the flat order of [`Mlp`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NeuralError, Result};
use crate::mlp::Mlp;

pub const MAGIC: [u8; 4] = *b"SGNN";
pub const VERSION: u32 = 1;
const TANH: u8 = 1;
const MAX_WIDTHS: u32 = 64;
const MAX_WIDTH: u64 = 1 << 20;

pub fn write_to<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[TANH])?;
    w.write_all(&(net.widths().len() as u32).to_le_bytes())?;
    for &width in net.widths() {
        w.write_all(&(width as u64).to_le_bytes())?;
    }
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NeuralError::Format(format!("truncated while reading {what}")),
        _ => NeuralError::Io(e),
    })?;
    Ok(buf)
}

pub fn read_from<R: Read>(mut r: R) -> Result<Mlp> {
    if read_exact::<_, 4>(&mut r, "magic")? != MAGIC {
        return Err(NeuralError::Format("not a network checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, "version")?);
    if version != VERSION {
        return Err(NeuralError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let [tag] = read_exact::<_, 1>(&mut r, "activation")?;
    if tag != TANH {
        return Err(NeuralError::Format(format!("unknown activation tag {tag}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r, "layer count")?);
    if !(2..=MAX_WIDTHS).contains(&count) {
        return Err(NeuralError::Format(format!("implausible layer count {count}")));
    }
    let mut widths = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let w = u64::from_le_bytes(read_exact(&mut r, "widths")?);
        if w == 0 || w > MAX_WIDTH {
            return Err(NeuralError::Format(format!("implausible width {w}")));
        }
        widths.push(w as usize);
    }
    let n = Mlp::param_count(&widths);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(f64::from_le_bytes(read_exact(&mut r, "parameters")?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NeuralError::Format("trailing bytes after parameters".into()));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(NeuralError::Format("non-finite parameter".into()));
    }
    Mlp::from_params(&widths, params)
}

pub fn save(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    write_to(net, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<Mlp> {
    read_from(BufReader::new(File::open(path)?))
}
