//! Binary graph files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! header (28 bytes): magic "KNNG" | version u32 | n u32 | k u32 | metric u32 | digest u64
//! body, per point:   count u32 | count x (id u32, dist f64)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::{Dataset, Metric};
use crate::error::{Error, Result};
use crate::graph::{KnnGraph, Neighbor, NeighborList};
use crate::io::ByteReader;

pub const MAGIC: [u8; 4] = *b"KNNG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphHeader {
    pub version: u32,
    pub n: u32,
    pub k: u32,
    pub metric: Metric,
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub header: GraphHeader,
    pub graph: KnnGraph,
}

/// Exact size in bytes of the file `graph` serializes to.
pub fn encoded_len(graph: &KnnGraph) -> usize {
    HEADER_LEN
        + graph
            .lists()
            .iter()
            .map(|l| 4 + 12 * l.len())
            .sum::<usize>()
}

pub fn write_graph<W: Write>(mut w: W, graph: &KnnGraph, metric: Metric, digest: u64) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(graph.n() as u32).to_le_bytes())?;
    w.write_all(&(graph.k() as u32).to_le_bytes())?;
    w.write_all(&metric.tag().to_le_bytes())?;
    w.write_all(&digest.to_le_bytes())?;
    for list in graph.lists() {
        w.write_all(&(list.len() as u32).to_le_bytes())?;
        for e in list.entries() {
            w.write_all(&e.id.to_le_bytes())?;
            w.write_all(&e.dist.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_graph(path: &Path, graph: &KnnGraph, metric: Metric, digest: u64) -> Result<()> {
    write_graph(BufWriter::new(fs::File::create(path)?), graph, metric, digest)
}

pub fn read_graph(buf: &[u8]) -> Result<GraphFile> {
    let mut r = ByteReader::new(buf);
    let magic = r.take(4, "header")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}, expected \"KNNG\"")));
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported graph file version {version}, expected {VERSION}"
        )));
    }
    let n = r.u32("header")?;
    let k = r.u32("header")?;
    let tag = r.u32("header")?;
    let metric = Metric::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown metric tag {tag}")))?;
    let digest = r.u64("header")?;

    let mut lists = Vec::with_capacity(n as usize);
    for owner in 0..n {
        let at = r.offset();
        let count = r.u32("list length")?;
        if count > k {
            return Err(Error::Format(format!(
                "point {owner} at byte offset {at} lists {count} neighbors, k = {k}"
            )));
        }
        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let id = r.u32("neighbor id")?;
            let dist = r.f64("neighbor distance")?;
            if id >= n {
                return Err(Error::Format(format!(
                    "point {owner}: neighbor id {id} out of range for n = {n}"
                )));
            }
            entries.push(Neighbor::new(id, dist));
        }
        lists.push(NeighborList::from_entries_unchecked(owner, k as usize, entries));
    }
    if r.remaining() > 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after byte offset {}",
            r.remaining(),
            r.offset()
        )));
    }
    Ok(GraphFile {
        header: GraphHeader {
            version,
            n,
            k,
            metric,
            digest,
        },
        graph: KnnGraph::from_lists(k as usize, lists),
    })
}

pub fn load_graph(path: &Path) -> Result<GraphFile> {
    read_graph(&fs::read(path)?)
}

/// Loads a graph and refuses it unless it was built for `dataset`.
pub fn load_graph_for(path: &Path, dataset: &Dataset) -> Result<GraphFile> {
    let file = load_graph(path)?;
    let digest = dataset.digest();
    if file.header.digest != digest {
        return Err(Error::DigestMismatch {
            file: file.header.digest,
            dataset: digest,
        });
    }
    if file.header.metric != dataset.metric() {
        return Err(Error::InvalidInput(format!(
            "graph was built with the {} metric, dataset uses {}",
            file.header.metric,
            dataset.metric()
        )));
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::brute_force_graph;
    use crate::synth;

    fn encoded(graph: &KnnGraph) -> Vec<u8> {
        let mut buf = Vec::new();
        write_graph(&mut buf, graph, Metric::Euclidean, 0xfeed).unwrap();
        buf
    }

    #[test]
    fn round_trip_and_size() {
        let ds = synth::gaussian(40, 3, 1, Metric::Euclidean).unwrap();
        let mut g = brute_force_graph(&ds, 4).unwrap();
        // Under-filled lists are legal.
        g.list_mut(5).entries_mut_unchecked().truncate(1);
        let buf = encoded(&g);
        assert_eq!(buf.len(), encoded_len(&g));
        assert_eq!(buf.len(), HEADER_LEN + 40 * 4 + 12 * (39 * 4 + 1));
        let back = read_graph(&buf).unwrap();
        assert_eq!(back.graph, g);
        assert_eq!(back.header.digest, 0xfeed);
        assert_eq!(back.header.n, 40);
    }

    #[test]
    fn corrupted_magic() {
        let ds = synth::gaussian(10, 2, 1, Metric::Euclidean).unwrap();
        let mut buf = encoded(&brute_force_graph(&ds, 2).unwrap());
        buf[1] ^= 0x20;
        assert!(matches!(read_graph(&buf), Err(Error::Format(m)) if m.contains("magic")));
    }

    #[test]
    fn bad_version_and_truncation() {
        let ds = synth::gaussian(10, 2, 1, Metric::Euclidean).unwrap();
        let buf = encoded(&brute_force_graph(&ds, 2).unwrap());
        let mut v2 = buf.clone();
        v2[4] = 2;
        assert!(read_graph(&v2).unwrap_err().to_string().contains("version"));
        let short = &buf[..buf.len() - 5];
        assert!(read_graph(short).unwrap_err().to_string().contains("truncated"));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_graph(&long).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn digest_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.knng");
        let a = synth::gaussian(12, 2, 1, Metric::Euclidean).unwrap();
        let b = synth::gaussian(12, 2, 2, Metric::Euclidean).unwrap();
        let g = brute_force_graph(&a, 3).unwrap();
        save_graph(&path, &g, a.metric(), a.digest()).unwrap();
        assert_eq!(load_graph_for(&path, &a).unwrap().graph, g);
        assert!(matches!(
            load_graph_for(&path, &b),
            Err(Error::DigestMismatch { .. })
        ));
    }
}
