//! RGF1 graph container and RPB1 partition files. Little-endian throughout.
//!
//! RGF1: `"RGF1"`, u32 version (=1), u64 num_nodes, u64 num_edges,
//! u32 feat_dim, u32 num_classes, u64 indptr x (num_nodes + 1),
//! u64 indices x num_edges, f32 features x (num_nodes * feat_dim) row-major,
//! u32 labels x num_nodes, then train/val/test masks as u8 x num_nodes each.
//!
//! RPB1: `"RPB1"`, u32 k, u64 num_nodes, u32 owner x num_nodes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{partition, Graph, NodeId, PartitionBook};
use crate::error::{Error, Result};

const GRAPH_MAGIC: &[u8; 4] = b"RGF1";
const GRAPH_VERSION: u32 = 1;
const PARTITION_MAGIC: &[u8; 4] = b"RPB1";

pub fn save_graph(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_graph(g: &Graph, w: &mut impl Write) -> Result<()> {
    w.write_all(GRAPH_MAGIC)?;
    w.write_all(&GRAPH_VERSION.to_le_bytes())?;
    w.write_all(&(g.num_nodes() as u64).to_le_bytes())?;
    w.write_all(&(g.num_edges() as u64).to_le_bytes())?;
    w.write_all(&(g.feat_dim() as u32).to_le_bytes())?;
    w.write_all(&(g.num_classes() as u32).to_le_bytes())?;
    for &p in g.indptr() {
        w.write_all(&p.to_le_bytes())?;
    }
    for &u in g.indices() {
        w.write_all(&(u as u64).to_le_bytes())?;
    }
    for &x in g.features() {
        w.write_all(&x.to_le_bytes())?;
    }
    for &y in g.labels() {
        w.write_all(&y.to_le_bytes())?;
    }
    for mask in [g.train_mask(), g.val_mask(), g.test_mask()] {
        let bytes: Vec<u8> = mask.iter().map(|&m| m as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    read_graph(&mut BufReader::new(File::open(path)?))
}

pub fn read_graph(r: &mut impl Read) -> Result<Graph> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != GRAPH_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected RGF1")));
    }
    let version = read_u32(r)?;
    if version != GRAPH_VERSION {
        return Err(Error::format(format!("unsupported RGF1 version {version}")));
    }
    let num_nodes = to_usize(read_u64(r)?)?;
    let num_edges = to_usize(read_u64(r)?)?;
    let feat_dim = read_u32(r)? as usize;
    let num_classes = read_u32(r)? as usize;
    if num_nodes > NodeId::MAX as usize {
        return Err(Error::validation("num_nodes exceeds the 32-bit id space"));
    }

    let indptr = read_vec(r, num_nodes + 1, 8, |b| u64::from_le_bytes(b.try_into().unwrap()))?;
    let raw_indices = read_vec(r, num_edges, 8, |b| u64::from_le_bytes(b.try_into().unwrap()))?;
    let features = read_vec(r, num_nodes * feat_dim, 4, |b| f32::from_le_bytes(b.try_into().unwrap()))?;
    let labels = read_vec(r, num_nodes, 4, |b| u32::from_le_bytes(b.try_into().unwrap()))?;
    let mut masks = Vec::with_capacity(3);
    for _ in 0..3 {
        let m = read_vec(r, num_nodes, 1, |b| b[0])?;
        if let Some(bad) = m.iter().find(|&&b| b > 1) {
            return Err(Error::format(format!("mask byte {bad} is not 0 or 1")));
        }
        masks.push(m.into_iter().map(|b| b == 1).collect::<Vec<bool>>());
    }

    let mut indices = Vec::with_capacity(num_edges);
    for u in raw_indices {
        if u >= num_nodes as u64 {
            return Err(Error::validation(format!("neighbor id {u} >= num_nodes {num_nodes}")));
        }
        indices.push(u as NodeId);
    }
    let test = masks.pop().unwrap();
    let val = masks.pop().unwrap();
    let train = masks.pop().unwrap();
    Graph::from_parts(indptr, indices, features, labels, feat_dim, num_classes, train, val, test)
}

pub fn save_partition(book: &PartitionBook, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PARTITION_MAGIC)?;
    w.write_all(&book.num_parts().to_le_bytes())?;
    w.write_all(&(book.num_nodes() as u64).to_le_bytes())?;
    for &p in book.owners() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an RPB1 file and recomputes the halos against `g`.
pub fn load_partition(g: &Graph, path: impl AsRef<Path>) -> Result<PartitionBook> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PARTITION_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected RPB1")));
    }
    let k = read_u32(&mut r)?;
    let num_nodes = to_usize(read_u64(&mut r)?)?;
    if num_nodes != g.num_nodes() {
        return Err(Error::validation(format!(
            "partition covers {num_nodes} nodes but graph has {}",
            g.num_nodes()
        )));
    }
    let owner = read_vec(&mut r, num_nodes, 4, |b| u32::from_le_bytes(b.try_into().unwrap()))?;
    let book = PartitionBook::new(k, owner)?;
    Ok(partition::halo_expand(g, book))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::format(format!("length {v} does not fit in memory")))
}

/// Reads `count` fixed-width records in bounded chunks so a corrupt length
/// field cannot trigger one huge allocation before EOF is noticed.
fn read_vec<T>(r: &mut impl Read, count: usize, width: usize, decode: impl Fn(&[u8]) -> T) -> Result<Vec<T>> {
    const CHUNK: usize = 1 << 16;
    let mut out = Vec::with_capacity(count.min(CHUNK));
    let mut buf = vec![0u8; CHUNK * width];
    let mut left = count;
    while left > 0 {
        let take = left.min(CHUNK);
        let bytes = &mut buf[..take * width];
        r.read_exact(bytes)?;
        out.extend(bytes.chunks_exact(width).map(&decode));
        left -= take;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth_powerlaw;

    fn tiny() -> Graph {
        // 4 nodes, 4 directed edges: 0-1, 2-3.
        let mut g = Graph::from_undirected_edges(
            4,
            &[(0, 1), (2, 3)],
            (0..8).map(|x| x as f32 * 0.5).collect(),
            vec![0, 1, 0, 1],
            2,
            2,
        )
        .unwrap();
        g.set_masks(
            vec![true, true, false, false],
            vec![false, false, true, false],
            vec![false, false, false, true],
        )
        .unwrap();
        g
    }

    fn encode(g: &Graph) -> Vec<u8> {
        let mut buf = Vec::new();
        write_graph(g, &mut buf).unwrap();
        buf
    }

    #[test]
    fn four_node_round_trip() {
        let g = tiny();
        let back = read_graph(&mut encode(&g).as_slice()).unwrap();
        assert_eq!(back.num_nodes(), 4);
        assert_eq!(back.num_edges(), 4);
        assert_eq!(back, g);
    }

    #[test]
    fn header_layout() {
        let buf = encode(&tiny());
        assert_eq!(&buf[..4], b"RGF1");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[8..16], &4u64.to_le_bytes());
        assert_eq!(&buf[16..24], &4u64.to_le_bytes());
        assert_eq!(&buf[24..28], &2u32.to_le_bytes());
        assert_eq!(&buf[28..32], &2u32.to_le_bytes());
        let expected = 32 + 8 * 5 + 8 * 4 + 4 * 8 + 4 * 4 + 3 * 4;
        assert_eq!(buf.len(), expected);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut buf = encode(&tiny());
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_graph(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_is_format_error() {
        let mut buf = encode(&tiny());
        buf[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_graph(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let buf = encode(&tiny());
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_graph(&mut &cut[..]), Err(Error::Io(_))));
    }

    #[test]
    fn out_of_range_index_is_validation_error() {
        let mut buf = encode(&tiny());
        // first index entry starts after header and indptr
        let off = 32 + 8 * 5;
        buf[off..off + 8].copy_from_slice(&9u64.to_le_bytes());
        assert!(matches!(read_graph(&mut buf.as_slice()), Err(Error::Validation(_))));
    }

    #[test]
    fn indptr_violation_is_validation_error() {
        let mut buf = encode(&tiny());
        let off = 32 + 8;
        buf[off..off + 8].copy_from_slice(&3u64.to_le_bytes());
        buf[off + 8..off + 16].copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(read_graph(&mut buf.as_slice()), Err(Error::Validation(_))));
    }

    #[test]
    fn file_round_trip_and_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let g = synth_powerlaw(300, 3, 4, 3, 11).unwrap();
        let a = dir.path().join("a.rgf");
        let b = dir.path().join("b.rgf");
        save_graph(&g, &a).unwrap();
        save_graph(&g, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(load_graph(&a).unwrap(), g);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let g = tiny();
        let err = save_graph(&g, "/nonexistent-dir/x/y.rgf").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn partition_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = synth_powerlaw(200, 2, 2, 2, 1).unwrap();
        let book = halo_for(&g);
        let path = dir.path().join("p.rpb");
        save_partition(&book, &path).unwrap();
        assert_eq!(load_partition(&g, &path).unwrap(), book);
    }

    fn halo_for(g: &Graph) -> PartitionBook {
        let book = crate::graph::partition_random(g, 3, 5).unwrap();
        halo_expand(g, book)
    }

    use crate::graph::halo_expand;
}
