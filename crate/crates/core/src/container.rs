//! `PSL1` binary container for replaying populations and datasets.
//!
//! Dataset layout: magic `PSL1`, `u32` LE `n`, `u32` LE `d`, then the
//! `n × d` bits in row-major order packed LSB-first (bit `t = i·d + j` lives
//! in byte `t / 8` at position `t % 8`), with the final byte zero-padded.
//!
//! Population layout: magic `PSL1`, `u32` LE `d`, `d` means as `f64` LE, then
//! the prior's `alpha` and `beta` as `f64` LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::beta::BetaParams;
use crate::error::{Error, Result};
use crate::instance::{Dataset, Population};

pub const MAGIC: &[u8; 4] = b"PSL1";

fn read_exact<R: Read>(reader: &mut R, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(reader: &mut R, what: &str) -> Result<u32> {
    let b = read_exact(reader, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn read_f64<R: Read>(reader: &mut R, what: &str) -> Result<f64> {
    let b = read_exact(reader, 8, what)?;
    Ok(f64::from_le_bytes(b.try_into().expect("eight bytes")))
}

fn read_magic<R: Read>(reader: &mut R) -> Result<()> {
    let magic = read_exact(reader, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    Ok(())
}

fn expect_eof<R: Read>(reader: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match reader.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

fn dim_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Format(format!("{what} = {value} does not fit in u32")))
}

pub fn write_dataset<W: Write>(x: &Dataset, writer: &mut W) -> Result<()> {
    let (n, d) = (x.n(), x.d());
    writer.write_all(MAGIC)?;
    writer.write_all(&dim_u32(n, "n")?.to_le_bytes())?;
    writer.write_all(&dim_u32(d, "d")?.to_le_bytes())?;
    let mut bytes = vec![0u8; (n * d).div_ceil(8)];
    for i in 0..n {
        for j in 0..d {
            if x.get(i, j) {
                let t = i * d + j;
                bytes[t / 8] |= 1 << (t % 8);
            }
        }
    }
    writer.write_all(&bytes)?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: &mut R) -> Result<Dataset> {
    read_magic(reader)?;
    let n = read_u32(reader, "header")? as usize;
    let d = read_u32(reader, "header")? as usize;
    if n == 0 || d == 0 {
        return Err(Error::Format(format!("empty dataset ({n} x {d})")));
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format(format!("{n} x {d} overflows")))?;
    let bytes = read_exact(reader, total.div_ceil(8), "bit payload")?;
    if total % 8 != 0 && bytes[total / 8] >> (total % 8) != 0 {
        return Err(Error::Format("non-zero padding bits".into()));
    }
    expect_eof(reader)?;
    Dataset::from_fn(n, d, |i, j| {
        let t = i * d + j;
        bytes[t / 8] >> (t % 8) & 1 == 1
    })
}

pub fn write_population<W: Write>(pop: &Population, writer: &mut W) -> Result<()> {
    writer.write_all(MAGIC)?;
    writer.write_all(&dim_u32(pop.d(), "d")?.to_le_bytes())?;
    for &m in pop.means() {
        writer.write_all(&m.to_le_bytes())?;
    }
    writer.write_all(&pop.prior().alpha().to_le_bytes())?;
    writer.write_all(&pop.prior().beta().to_le_bytes())?;
    Ok(())
}

pub fn read_population<R: Read>(reader: &mut R) -> Result<Population> {
    read_magic(reader)?;
    let d = read_u32(reader, "header")? as usize;
    let means = (0..d)
        .map(|_| read_f64(reader, "means"))
        .collect::<Result<Vec<_>>>()?;
    let alpha = read_f64(reader, "prior")?;
    let beta = read_f64(reader, "prior")?;
    expect_eof(reader)?;
    Population::new(means, BetaParams::new(alpha, beta)?)
}

pub fn save_dataset(x: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(x, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(&mut BufReader::new(File::open(path)?))
}

pub fn save_population(pop: &Population, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_population(pop, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_population(path: impl AsRef<Path>) -> Result<Population> {
    read_population(&mut BufReader::new(File::open(path)?))
}
