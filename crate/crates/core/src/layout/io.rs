//! Layout file: four `u32` header words (n, w, sector size, node size)
//! followed by the order `P` as `u32` ids.

use std::io::Write;
use std::path::Path;

use super::SectorLayout;
use crate::data::{read_file, write_file, ByteReader};
use crate::error::{Error, Result};

pub fn write_layout(path: impl AsRef<Path>, layout: &SectorLayout) -> Result<()> {
    write_file(path.as_ref(), |w| {
        for word in [
            layout.node_count() as u32,
            layout.width() as u32,
            layout.sector_size() as u32,
            layout.node_size() as u32,
        ] {
            w.write_all(&word.to_le_bytes())?;
        }
        for &v in layout.order() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_layout(path: impl AsRef<Path>) -> Result<SectorLayout> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let n = r.u32("layout header")? as usize;
    let width = r.u32("layout header")? as usize;
    let sector_size = r.u32("layout header")? as usize;
    let node_size = r.u32("layout header")? as usize;
    let order = r.u32s(n, "layout order")?;
    r.finish()?;
    let layout = SectorLayout::from_order(order, sector_size, node_size).map_err(|e| match e {
        Error::Contract(message) => format_error(path, message),
        other => other,
    })?;
    if layout.width() != width {
        return Err(format_error(
            path,
            format!("stored width {width} disagrees with sizes ({})", layout.width()),
        ));
    }
    Ok(layout)
}

fn format_error(path: &Path, message: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        message,
    }
}
