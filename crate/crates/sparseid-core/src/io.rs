//! Binary file formats, all little-endian:
//!
//! - `STTF` transform: magic, version `u8`, `L: u32`, `N: u32`, then `L·N`
//!   row-major `f64` entries.
//! - `STCB` codebook: magic, version `u8`, layer index `u8`, `L: u32`,
//!   `M: u32`, `S: u32`, gain `f64`, then `M` byte-padded rows of 2-bit
//!   entries (`00` zero, `01` plus one, `10` minus one, `11` invalid),
//!   packed four per byte starting at the low bits.
//! - `STSL` selection: magic, `L: u32`, `L_p: u32`, then `L_p` strictly
//!   increasing `u32` coordinate indices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::code::TernaryCode;
use crate::error::{Error, Result};
use crate::transform::{orthonormality_defect, Transform, ORTHONORMALITY_TOL};

const TRANSFORM_MAGIC: [u8; 4] = *b"STTF";
const CODEBOOK_MAGIC: [u8; 4] = *b"STCB";
const SELECTION_MAGIC: [u8; 4] = *b"STSL";
const FORMAT_VERSION: u8 = 1;

const MAX_DIMENSION: usize = 1 << 24;
const MAX_ITEMS: usize = 1 << 28;

/// Number of bytes in one packed code row of the given length.
pub fn packed_len(code_length: usize) -> usize {
    code_length.div_ceil(4)
}

/// Packs a code into 2-bit entries, four per byte, low bits first. Padding
/// bits in the final byte are zero.
pub fn pack_code(code: &TernaryCode) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(code.len())];
    for (i, &e) in code.entries().iter().enumerate() {
        let bits: u8 = match e {
            0 => 0b00,
            1 => 0b01,
            _ => 0b10,
        };
        out[i / 4] |= bits << ((i % 4) * 2);
    }
    out
}

/// Reverses [`pack_code`]. The reserved pattern `11` and nonzero padding
/// bits are format errors.
pub fn unpack_code(bytes: &[u8], code_length: usize) -> Result<TernaryCode> {
    if bytes.len() != packed_len(code_length) {
        return Err(Error::format(format!(
            "packed code of length {code_length} needs {} bytes, got {}",
            packed_len(code_length),
            bytes.len()
        )));
    }
    let mut entries = Vec::with_capacity(code_length);
    for i in 0..code_length {
        let bits = (bytes[i / 4] >> ((i % 4) * 2)) & 0b11;
        entries.push(match bits {
            0b00 => 0i8,
            0b01 => 1,
            0b10 => -1,
            _ => {
                return Err(Error::format(format!(
                    "reserved 2-bit pattern 11 at entry {i}"
                )))
            }
        });
    }
    for i in code_length..bytes.len() * 4 {
        if (bytes[i / 4] >> ((i % 4) * 2)) & 0b11 != 0 {
            return Err(Error::format("nonzero padding bits in packed code"));
        }
    }
    Ok(TernaryCode::from_signs(entries))
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    Ok(read_array::<1>(r)?[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array::<4>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array::<8>(r)?))
}

fn expect_magic(r: &mut impl Read, magic: [u8; 4], what: &str) -> Result<()> {
    let found = read_array::<4>(r)?;
    if found != magic {
        return Err(Error::format(format!(
            "{what}: bad magic {found:02x?}, expected {magic:02x?}"
        )));
    }
    Ok(())
}

fn expect_version(r: &mut impl Read, what: &str) -> Result<()> {
    let v = read_u8(r)?;
    if v != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{what}: unsupported version {v}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read, what: &str) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::format(format!("{what}: trailing bytes after payload")));
    }
    Ok(())
}

fn check_dim(value: u32, what: &str) -> Result<usize> {
    let v = value as usize;
    if v == 0 || v > MAX_DIMENSION {
        return Err(Error::format(format!(
            "{what}: dimension {v} outside 1..={MAX_DIMENSION}"
        )));
    }
    Ok(v)
}

pub fn write_transform(path: &Path, transform: &Transform) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&TRANSFORM_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(transform.rows() as u32).to_le_bytes())?;
    w.write_all(&(transform.cols() as u32).to_le_bytes())?;
    for v in transform.matrix().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a transform, choosing the transpose pseudo-inverse when the stored
/// rows are orthonormal and the SVD pseudo-inverse otherwise.
pub fn read_transform(path: &Path) -> Result<Transform> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, TRANSFORM_MAGIC, "transform file")?;
    expect_version(&mut r, "transform file")?;
    let l = check_dim(read_u32(&mut r)?, "transform file")?;
    let n = check_dim(read_u32(&mut r)?, "transform file")?;
    let mut entries = Vec::with_capacity(l * n);
    for _ in 0..l * n {
        let v = read_f64(&mut r)?;
        if !v.is_finite() {
            return Err(Error::format("transform file: non-finite entry"));
        }
        entries.push(v);
    }
    expect_eof(&mut r, "transform file")?;
    let matrix = Array2::from_shape_vec((l, n), entries)
        .map_err(|e| Error::format(format!("transform file: {e}")))?;
    if l <= n && orthonormality_defect(matrix.view()) <= ORTHONORMALITY_TOL {
        Transform::orthonormal(matrix)
    } else {
        Transform::with_svd_pinv(matrix)
    }
}

/// One decoded `STCB` file.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookFile {
    pub layer_index: u8,
    pub sparsity: usize,
    pub gain: f64,
    pub codes: Vec<TernaryCode>,
}

pub fn write_codebook(
    path: &Path,
    layer_index: u8,
    sparsity: usize,
    gain: f64,
    codes: &[TernaryCode],
) -> Result<()> {
    let Some(first) = codes.first() else {
        return Err(Error::invalid("codebook must hold at least one code"));
    };
    let l = first.len();
    if codes.iter().any(|c| c.len() != l) {
        return Err(Error::invalid("codebook codes must share one length"));
    }
    if sparsity == 0 || sparsity > l {
        return Err(Error::invalid(format!(
            "codebook sparsity must satisfy 1 <= S <= L, got S = {sparsity}, L = {l}"
        )));
    }
    if !gain.is_finite() {
        return Err(Error::invalid("codebook gain must be finite"));
    }
    if l > MAX_DIMENSION || codes.len() > MAX_ITEMS {
        return Err(Error::invalid("codebook dimensions exceed format limits"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CODEBOOK_MAGIC)?;
    w.write_all(&[FORMAT_VERSION, layer_index])?;
    w.write_all(&(l as u32).to_le_bytes())?;
    w.write_all(&(codes.len() as u32).to_le_bytes())?;
    w.write_all(&(sparsity as u32).to_le_bytes())?;
    w.write_all(&gain.to_le_bytes())?;
    for code in codes {
        w.write_all(&pack_code(code))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_codebook(path: &Path) -> Result<CodebookFile> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, CODEBOOK_MAGIC, "codebook file")?;
    expect_version(&mut r, "codebook file")?;
    let layer_index = read_u8(&mut r)?;
    let l = check_dim(read_u32(&mut r)?, "codebook file")?;
    let m = read_u32(&mut r)? as usize;
    if m == 0 || m > MAX_ITEMS {
        return Err(Error::format(format!(
            "codebook file: item count {m} outside 1..={MAX_ITEMS}"
        )));
    }
    let s = read_u32(&mut r)? as usize;
    if s == 0 || s > l {
        return Err(Error::format(format!(
            "codebook file: sparsity {s} outside 1..={l}"
        )));
    }
    let gain = read_f64(&mut r)?;
    if !gain.is_finite() {
        return Err(Error::format("codebook file: non-finite gain"));
    }
    let row_bytes = packed_len(l);
    let mut codes = Vec::with_capacity(m);
    let mut row = vec![0u8; row_bytes];
    for _ in 0..m {
        r.read_exact(&mut row)?;
        codes.push(unpack_code(&row, l)?);
    }
    expect_eof(&mut r, "codebook file")?;
    Ok(CodebookFile {
        layer_index,
        sparsity: s,
        gain,
        codes,
    })
}

pub fn write_selection(path: &Path, code_length: usize, selection: &[usize]) -> Result<()> {
    if selection.is_empty() || selection.len() > code_length {
        return Err(Error::invalid(
            "selection must keep between 1 and L coordinates",
        ));
    }
    if code_length > MAX_DIMENSION {
        return Err(Error::invalid("selection code length exceeds format limits"));
    }
    let mut prev: Option<usize> = None;
    for &idx in selection {
        if idx >= code_length || prev.is_some_and(|p| p >= idx) {
            return Err(Error::invalid(
                "selection indices must be strictly increasing and below L",
            ));
        }
        prev = Some(idx);
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&SELECTION_MAGIC)?;
    w.write_all(&(code_length as u32).to_le_bytes())?;
    w.write_all(&(selection.len() as u32).to_le_bytes())?;
    for &idx in selection {
        w.write_all(&(idx as u32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a selection file, returning the original code length and the sorted
/// retained indices.
pub fn read_selection(path: &Path) -> Result<(usize, Vec<usize>)> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, SELECTION_MAGIC, "selection file")?;
    let l = check_dim(read_u32(&mut r)?, "selection file")?;
    let lp = read_u32(&mut r)? as usize;
    if lp == 0 || lp > l {
        return Err(Error::format(format!(
            "selection file: retained length {lp} outside 1..={l}"
        )));
    }
    let mut selection = Vec::with_capacity(lp);
    let mut prev: Option<usize> = None;
    for _ in 0..lp {
        let idx = read_u32(&mut r)? as usize;
        if idx >= l || prev.is_some_and(|p| p >= idx) {
            return Err(Error::format(
                "selection file: indices must be strictly increasing and below L",
            ));
        }
        prev = Some(idx);
        selection.push(idx);
    }
    expect_eof(&mut r, "selection file")?;
    Ok((l, selection))
}
