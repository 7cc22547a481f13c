//! File formats.
//!
//! **PSKM** (one matrix), all integers little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `PSKM`                  |
//! | 4      | 4    | u32 version = 1               |
//! | 8      | 1    | u8 dtype (0 = f32, 1 = f64)   |
//! | 9      | 8    | u64 rows                      |
//! | 17     | 8    | u64 cols                      |
//! | 25     | …    | rows·cols values, row-major   |
//!
//! **PSKB** (bundle of named matrices plus a JSON manifest): magic `PSKB`,
//! u32 version = 1, u64 manifest byte length, the UTF-8 JSON manifest, u32
//! matrix count, then that many complete PSKM records in manifest order.
//!
//! **CSV**: a header `r0,r1,…` naming each column, one line per row.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{Element, Matrix, Precision};

pub const PSKM_MAGIC: &[u8; 4] = b"PSKM";
pub const PSKB_MAGIC: &[u8; 4] = b"PSKB";
pub const FORMAT_VERSION: u32 = 1;
const PSKM_HEADER_LEN: usize = 25;

/// A matrix read from disk, in whichever precision the file declared.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMatrix {
    F32(Matrix<f32>),
    F64(Matrix<f64>),
}

impl AnyMatrix {
    pub fn precision(&self) -> Precision {
        match self {
            AnyMatrix::F32(_) => Precision::F32,
            AnyMatrix::F64(_) => Precision::F64,
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        match self {
            AnyMatrix::F32(m) => m.to_f64(),
            AnyMatrix::F64(m) => m.clone(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            AnyMatrix::F32(m) => m.shape(),
            AnyMatrix::F64(m) => m.shape(),
        }
    }
}

pub fn encode_pskm<T: Element>(m: &Matrix<T>, out: &mut Vec<u8>) {
    out.reserve(PSKM_HEADER_LEN + m.as_slice().len() * T::PRECISION.byte_width());
    out.extend_from_slice(PSKM_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::PRECISION.dtype_byte());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.as_slice() {
        v.write_le(out);
    }
}

pub fn pskm_bytes<T: Element>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = Vec::new();
    encode_pskm(m, &mut out);
    out
}

/// Byte reader that reports failures by absolute offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format { offset: self.offset(), message: message.into() }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.fail(format!("truncated {what}: need {n} bytes, {} remain", self.bytes.len() - self.pos))),
        }
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let start = self.offset();
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::Format {
                offset: start,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        let start = self.offset();
        let v = self.u32("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::Format { offset: start, message: format!("unsupported version {v}") });
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.fail(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }

    pub(crate) fn pskm(&mut self) -> Result<AnyMatrix> {
        self.magic(PSKM_MAGIC)?;
        self.version()?;
        let dtype_at = self.offset();
        let dtype = self.u8("dtype")?;
        let precision = Precision::from_dtype_byte(dtype)
            .ok_or_else(|| Error::Format { offset: dtype_at, message: format!("unknown dtype {dtype}") })?;
        let rows = self.u64("rows")?;
        let cols = self.u64("cols")?;
        let count = rows
            .checked_mul(cols)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| self.fail(format!("{rows}x{cols} does not fit in memory")))?;
        let (rows, cols) = (rows as usize, cols as usize);
        let width = precision.byte_width();
        let payload_at = self.offset();
        let payload =
            self.take(count.checked_mul(width).ok_or_else(|| self.fail("payload size overflows"))?, "payload")?;
        let wrap = |e: Error| match e {
            Error::NonFinite { row, col } => Error::Format {
                offset: payload_at + ((row * cols + col) * width) as u64,
                message: format!("non-finite value at ({row}, {col})"),
            },
            other => other,
        };
        Ok(match precision {
            Precision::F32 => AnyMatrix::F32(
                Matrix::new(rows, cols, payload.chunks_exact(4).map(f32::read_le).collect()).map_err(wrap)?,
            ),
            Precision::F64 => AnyMatrix::F64(
                Matrix::new(rows, cols, payload.chunks_exact(8).map(f64::read_le).collect()).map_err(wrap)?,
            ),
        })
    }
}

pub fn decode_pskm(bytes: &[u8]) -> Result<AnyMatrix> {
    let mut r = Reader::new(bytes);
    let m = r.pskm()?;
    r.finish()?;
    Ok(m)
}

pub fn write_pskm<T: Element>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    fs::write(path, pskm_bytes(m))?;
    Ok(())
}

pub fn read_pskm(path: impl AsRef<Path>) -> Result<AnyMatrix> {
    decode_pskm(&fs::read(path)?)
}

/// Encodes a bundle: JSON manifest followed by the matrices in order.
pub fn encode_bundle<M: serde::Serialize>(manifest: &M, matrices: &[&Matrix<f64>]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec_pretty(manifest)?;
    let mut out = Vec::new();
    out.extend_from_slice(PSKB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
    for m in matrices {
        encode_pskm(m, &mut out);
    }
    Ok(out)
}

/// Decodes a bundle into its manifest and `f64` matrices.
pub fn decode_bundle<M: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<(M, Vec<Matrix<f64>>)> {
    let mut r = Reader::new(bytes);
    r.magic(PSKB_MAGIC)?;
    r.version()?;
    let len = r.u64("manifest length")?;
    let len = usize::try_from(len).map_err(|_| r.fail("manifest length overflows"))?;
    let manifest_at = r.offset();
    let json = r.take(len, "manifest")?;
    let manifest: M = serde_json::from_slice(json)
        .map_err(|e| Error::Format { offset: manifest_at, message: format!("manifest: {e}") })?;
    let count = r.u32("matrix count")?;
    let mut matrices = Vec::with_capacity(count.min(1 << 16) as usize);
    for i in 0..count {
        let at = r.offset();
        match r.pskm()? {
            AnyMatrix::F64(m) => matrices.push(m),
            AnyMatrix::F32(_) => {
                return Err(Error::Format { offset: at, message: format!("bundle matrix {i} must be f64") })
            }
        }
    }
    r.finish()?;
    Ok((manifest, matrices))
}

pub fn write_csv<T: Element>(path: impl AsRef<Path>, m: &Matrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_csv_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: std::io::Write, T: Element>(w: &mut csv::Writer<W>, m: &Matrix<T>) -> Result<()> {
    w.write_record((0..m.cols()).map(|j| format!("r{j}")))?;
    for row in m.row_iter() {
        // `{:?}` on floats prints the shortest round-tripping representation
        w.write_record(row.iter().map(|v| format!("{:?}", v.to_f64())))?;
    }
    Ok(())
}

pub fn read_csv<T: Element>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let file = fs::File::open(path)?;
    read_csv_from(file)
}

pub fn read_csv_from<R: std::io::Read, T: Element>(r: R) -> Result<Matrix<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    let cols = rdr.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        if rec.len() != cols {
            return Err(Error::Format {
                offset,
                message: format!("row {rows} has {} fields, expected {cols}", rec.len()),
            });
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format { offset, message: format!("not a number: {field:?}") })?;
            data.push(T::from_f64(v));
        }
        rows += 1;
    }
    Matrix::new(rows, cols, data)
}
