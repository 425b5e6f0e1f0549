//! Graph file: four `u32` header words (node count, R, start id, metric
//! tag) followed by one `u32` degree and that many `u32` ids per node, all
//! little-endian.

use std::io::Write;
use std::path::Path;

use super::GraphIndex;
use crate::data::{read_file, write_file, ByteReader, Metric};
use crate::error::{ensure, Result};

pub fn write_graph(path: impl AsRef<Path>, graph: &GraphIndex) -> Result<()> {
    ensure!(graph.is_finalized(), "only finalized graphs can be written");
    write_file(path.as_ref(), |w| {
        for word in [
            graph.node_count() as u32,
            graph.max_degree() as u32,
            graph.start(),
            graph.metric().tag(),
        ] {
            w.write_all(&word.to_le_bytes())?;
        }
        for list in graph.adjacency() {
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for &u in list {
                w.write_all(&u.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<GraphIndex> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes, path);
    let n = r.u32("graph header")? as usize;
    let max_degree = r.u32("graph header")? as usize;
    let start = r.u32("graph header")?;
    let tag = r.u32("graph header")?;
    let metric = Metric::from_tag(tag).ok_or_else(|| r.error(format!("unknown metric tag {tag}")))?;
    let mut adjacency = Vec::with_capacity(n.min(bytes.len() / 4));
    for v in 0..n {
        let at = r.offset();
        let degree = r.u32("adjacency list")? as usize;
        if degree > max_degree {
            return Err(r.error_at(
                at,
                format!("node {v} declares degree {degree} > R = {max_degree}"),
            ));
        }
        adjacency.push(r.u32s(degree, "adjacency list")?);
    }
    r.finish()?;
    GraphIndex::from_adjacency(n, max_degree, adjacency, start, metric)
}
