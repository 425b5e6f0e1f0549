//! Codebook file: five `u32` header words (M, K, chunk_dim, metric tag,
//! rotation flag), the row-major rotation when flagged, then the pivots in
//! chunk order. Codes file: `u32` count and M, then `count × M` bytes.

use std::io::Write;
use std::path::Path;

use super::{Codebook, QuantizedDataset};
use crate::data::{read_file, write_file, ByteReader, Metric};
use crate::error::{Error, Result};

pub fn write_codebook(path: impl AsRef<Path>, cb: &Codebook) -> Result<()> {
    write_file(path.as_ref(), |w| {
        for word in [
            cb.m() as u32,
            cb.k() as u32,
            cb.chunk_dim() as u32,
            cb.metric().tag(),
            cb.rotation().is_some() as u32,
        ] {
            w.write_all(&word.to_le_bytes())?;
        }
        for v in cb.rotation().unwrap_or(&[]).iter().chain(cb.pivots()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let m = r.u32("codebook header")? as usize;
    let k = r.u32("codebook header")? as usize;
    let chunk_dim = r.u32("codebook header")? as usize;
    let tag = r.u32("codebook header")?;
    let metric = Metric::from_tag(tag).ok_or_else(|| r.error(format!("unknown metric tag {tag}")))?;
    let rotation = match r.u32("codebook header")? {
        0 => None,
        1 => {
            let dim = m * chunk_dim;
            Some(r.f32s(dim * dim, "rotation")?)
        }
        flag => return Err(r.error(format!("invalid rotation flag {flag}"))),
    };
    let pivots = r.f32s(m * k * chunk_dim, "pivots")?;
    r.finish()?;
    Codebook::new(m, k, chunk_dim, pivots, rotation, metric).map_err(|e| match e {
        Error::Contract(message) => Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message,
        },
        other => other,
    })
}

pub fn write_codes(path: impl AsRef<Path>, codes: &QuantizedDataset) -> Result<()> {
    write_file(path.as_ref(), |w| {
        w.write_all(&(codes.count() as u32).to_le_bytes())?;
        w.write_all(&(codes.m() as u32).to_le_bytes())?;
        w.write_all(codes.codes())
    })
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<QuantizedDataset> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let count = r.u32("codes header")? as usize;
    let m = r.u32("codes header")? as usize;
    let codes = r.take(count.saturating_mul(m), "codes")?.to_vec();
    r.finish()?;
    QuantizedDataset::new(count, m, codes)
}
