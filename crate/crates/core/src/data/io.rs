//! Readers and writers for the `fbin` / `ibin` / `fvecs` dataset layouts.
//!
//! `fbin` and `ibin` start with two little-endian `u32` (count, dim) followed
//! by a row-major payload of `f32` or `u8` respectively. `fvecs` stores every
//! row as a little-endian `i32` dimension followed by that many `f32`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::{GroundTruth, Metric, VectorDataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Fbin,
    Ibin,
    Fvecs,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fbin" => Ok(Self::Fbin),
            "ibin" | "u8bin" => Ok(Self::Ibin),
            "fvecs" => Ok(Self::Fvecs),
            other => Err(Error::contract(format!("unknown dataset format {other:?}"))),
        }
    }
}

impl DatasetFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(|e| e.parse().ok())
    }
}

pub(crate) fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

pub(crate) fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_err(path, bytes.len(), "truncated header"))
}

/// Reads a `(count, dim)` header and checks the payload length.
fn read_header(bytes: &[u8], elem_size: usize, path: &Path) -> Result<(usize, usize)> {
    let count = read_u32(bytes, 0, path)? as usize;
    let dim = read_u32(bytes, 4, path)? as usize;
    let expected = 8 + count * dim * elem_size;
    if bytes.len() < expected {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated payload: header declares {count}x{dim}, need {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(path, expected, "trailing bytes after payload"));
    }
    Ok((count, dim))
}

pub(crate) fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

/// Cursor over a little-endian binary file that reports the offset of
/// the first missing byte on truncation.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self {
            bytes,
            offset: 0,
            path,
        }
    }

    pub(crate) fn offset(&self) -> usize {
        self.offset
    }

    pub(crate) fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.offset.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(out)
            }
            None => Err(format_err(
                self.path,
                self.bytes.len(),
                format!("truncated {what}"),
            )),
        }
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32s(&mut self, count: usize, what: &str) -> Result<Vec<u32>> {
        let bytes = self.take(count.saturating_mul(4), what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        Ok(decode_f32(self.take(count.saturating_mul(4), what)?))
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        format_err(self.path, self.offset, message)
    }

    pub(crate) fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        format_err(self.path, offset, message)
    }

    /// Fails when unread bytes remain.
    pub(crate) fn finish(self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(format_err(self.path, self.offset, "trailing bytes after payload"));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a dataset; the metric tag defaults to squared L2.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<VectorDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (dim, values) = match format {
        DatasetFormat::Fbin => {
            let (_, dim) = read_header(&bytes, 4, path)?;
            (dim, decode_f32(&bytes[8..]))
        }
        DatasetFormat::Ibin => {
            let (_, dim) = read_header(&bytes, 1, path)?;
            (dim, bytes[8..].iter().map(|&b| b as f32).collect())
        }
        DatasetFormat::Fvecs => decode_fvecs(&bytes, path)?,
    };
    VectorDataset::new(dim, values, Metric::SquaredL2).map_err(|e| match e {
        Error::Contract(message) => format_err(path, 0, message),
        other => other,
    })
}

fn decode_fvecs(bytes: &[u8], path: &Path) -> Result<(usize, Vec<f32>)> {
    let mut offset = 0;
    let mut dim = None;
    let mut values = Vec::new();
    while offset < bytes.len() {
        let d = read_u32(bytes, offset, path)? as i32;
        if d <= 0 {
            return Err(format_err(path, offset, format!("invalid row dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(format_err(
                    path,
                    offset,
                    format!("row dimension {d} differs from first row {prev}"),
                ))
            }
            _ => {}
        }
        let start = offset + 4;
        let end = start + d * 4;
        let row = bytes
            .get(start..end)
            .ok_or_else(|| format_err(path, bytes.len(), "truncated fvecs row"))?;
        values.extend(decode_f32(row));
        offset = end;
    }
    let dim = dim.ok_or_else(|| format_err(path, 0, "empty fvecs file"))?;
    Ok((dim, values))
}

pub(crate) fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `ds` as `fbin`.
pub fn save_dataset(path: impl AsRef<Path>, ds: &VectorDataset) -> Result<()> {
    write_file(path.as_ref(), |w| {
        w.write_all(&(ds.count() as u32).to_le_bytes())?;
        w.write_all(&(ds.dim() as u32).to_le_bytes())?;
        for v in ds.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

/// Writes a `rows × cols` matrix of `u32` ids with the same two-word header.
pub fn write_ids(path: impl AsRef<Path>, cols: usize, ids: &[u32]) -> Result<()> {
    if cols == 0 || !ids.len().is_multiple_of(cols) {
        return Err(Error::contract("id matrix length is not a multiple of its width"));
    }
    write_file(path.as_ref(), |w| {
        w.write_all(&((ids.len() / cols) as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for id in ids {
            w.write_all(&id.to_le_bytes())?;
        }
        Ok(())
    })
}

/// Reads an id matrix written by [`write_ids`]; returns `(cols, ids)`.
pub fn read_ids(path: impl AsRef<Path>) -> Result<(usize, Vec<u32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, cols) = read_header(&bytes, 4, path)?;
    let ids = bytes[8..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((cols, ids))
}

/// Persists ground truth as an id matrix plus an `fbin` of distances.
pub fn write_ground_truth(
    ids_path: impl AsRef<Path>,
    dists_path: impl AsRef<Path>,
    gt: &GroundTruth,
) -> Result<()> {
    write_ids(ids_path, gt.k(), gt.ids())?;
    write_file(dists_path.as_ref(), |w| {
        w.write_all(&(gt.query_count() as u32).to_le_bytes())?;
        w.write_all(&(gt.k() as u32).to_le_bytes())?;
        for d in gt.dists() {
            w.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_ground_truth(ids_path: impl AsRef<Path>, dists_path: impl AsRef<Path>) -> Result<GroundTruth> {
    let (k, ids) = read_ids(ids_path)?;
    let dists_path = dists_path.as_ref();
    let bytes = fs::read(dists_path).map_err(|e| Error::io(dists_path, e))?;
    let (rows, cols) = read_header(&bytes, 4, dists_path)?;
    if cols != k || rows * cols != ids.len() {
        return Err(format_err(
            dists_path,
            0,
            "distance matrix shape differs from id matrix",
        ));
    }
    GroundTruth::from_parts(k, ids, decode_f32(&bytes[8..]))
}
