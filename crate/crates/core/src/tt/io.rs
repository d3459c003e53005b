//! Binary containers: `TTR1` for real tensor trains, `TTC1` for complex
//! MPS (kind byte 3) and MPO (kind byte 4) chains. Little-endian throughout.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Core, TtTensor};
use crate::error::{Error, Result};

const REAL_MAGIC: &[u8; 4] = b"TTR1";
const COMPLEX_MAGIC: &[u8; 4] = b"TTC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComplexKind {
    Mps = 3,
    Mpo = 4,
}

impl ComplexKind {
    /// Number of physical indices per core.
    pub fn order(self) -> u32 {
        self as u32 - 2
    }
}

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_header(w: &mut impl Write, dims: &[usize], ranks: &[usize]) -> Result<()> {
    write_u32(w, dims.len())?;
    for &d in dims.iter().chain(ranks) {
        write_u32(w, d)?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = read_u32(r)?;
    if n == 0 || n > 4096 {
        return Err(Error::Format(format!("implausible mode count {n}")));
    }
    let dims = (0..n).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    let ranks = (0..n - 1).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
    if dims.iter().chain(&ranks).any(|&x| x == 0) {
        return Err(Error::Format("zero extent in header".into()));
    }
    Ok((dims, ranks))
}

fn full_ranks(ranks: &[usize]) -> Vec<usize> {
    let mut full = Vec::with_capacity(ranks.len() + 2);
    full.push(1);
    full.extend_from_slice(ranks);
    full.push(1);
    full
}

fn check_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!("bad magic {:?}, expected {:?}", b, std::str::from_utf8(magic).unwrap())));
    }
    Ok(())
}

pub fn write_ttr1(w: &mut impl Write, t: &TtTensor) -> Result<()> {
    w.write_all(REAL_MAGIC)?;
    write_header(w, &t.mode_dims(), &t.ranks())?;
    for c in t.cores() {
        for x in c.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ttr1(r: &mut impl Read) -> Result<TtTensor> {
    check_magic(r, REAL_MAGIC)?;
    let (dims, ranks) = read_header(r)?;
    let full = full_ranks(&ranks);
    let cores = dims
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let len = full[k] * m * full[k + 1];
            let data = (0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            Core::new(full[k], m, full[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TtTensor::new(cores)
}

/// Writes complex cores; `dims` are physical dims, so core `k` has mode
/// extent `dims[k]^order` (the physical indices flattened, first fastest).
pub fn write_ttc1(w: &mut impl Write, kind: ComplexKind, dims: &[usize], cores: &[Core<Complex64>]) -> Result<()> {
    w.write_all(COMPLEX_MAGIC)?;
    w.write_all(&[kind as u8])?;
    let ranks: Vec<usize> = cores[..cores.len() - 1].iter().map(|c| c.right()).collect();
    write_header(w, dims, &ranks)?;
    for c in cores {
        for z in c.data() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ttc1(r: &mut impl Read) -> Result<(ComplexKind, Vec<usize>, Vec<Core<Complex64>>)> {
    check_magic(r, COMPLEX_MAGIC)?;
    let mut kb = [0u8; 1];
    r.read_exact(&mut kb)?;
    let kind = match kb[0] {
        3 => ComplexKind::Mps,
        4 => ComplexKind::Mpo,
        k => return Err(Error::Format(format!("unknown complex kind byte {k}"))),
    };
    let (dims, ranks) = read_header(r)?;
    let full = full_ranks(&ranks);
    let cores = dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let m = d.pow(kind.order());
            let len = full[k] * m * full[k + 1];
            let data = (0..len)
                .map(|_| Ok(Complex64::new(read_f64(r)?, read_f64(r)?)))
                .collect::<Result<Vec<_>>>()?;
            Core::new(full[k], m, full[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((kind, dims, cores))
}
