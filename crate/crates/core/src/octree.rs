//! Lossless octree coding of a voxel coordinate set.
//!
//! The tree is walked breadth-first; every occupied node contributes one
//! occupancy byte (bit `4*x + 2*y + z` set when that child is occupied,
//! bits taken from the most significant coordinate bit downward). The byte
//! stream is then squeezed through the adaptive order-0 range coder.

use thiserror::Error;

use crate::coder::{AdaptiveByteModel, CoderError, RangeDecoder, RangeEncoder};
use crate::tensor::Coord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OctreeError {
    #[error("empty input")]
    EmptyInput,
    #[error("coordinate {0:?} outside [0, 2^{1})^3")]
    CoordOutOfRange(Coord, u8),
    #[error(transparent)]
    CorruptPayload(#[from] CoderError),
}

/// Compressed occupancy stream for one coordinate set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OctreePayload {
    pub depth: u8,
    pub bytes: Vec<u8>,
}

/// Maximum supported tree depth (coordinates are 31-bit non-negative).
pub const MAX_DEPTH: u8 = 30;

fn check_coords(coords: &[Coord], depth: u8) -> Result<(), OctreeError> {
    let limit = 1i64 << depth;
    for &c in coords {
        if c.x < 0
            || c.y < 0
            || c.z < 0
            || c.x as i64 >= limit
            || c.y as i64 >= limit
            || c.z as i64 >= limit
        {
            return Err(OctreeError::CoordOutOfRange(c, depth));
        }
    }
    Ok(())
}

/// Bit-interleaved key; breadth-first traversal visits nodes in ascending
/// key order, and halving a coordinate just drops the low 3 key bits.
fn morton(c: Coord, depth: u8) -> u128 {
    let mut key = 0u128;
    for level in (0..depth).rev() {
        let bits = (((c.x >> level) & 1) << 2) | (((c.y >> level) & 1) << 1) | ((c.z >> level) & 1);
        key = (key << 3) | bits as u128;
    }
    key
}

/// Breadth-first occupancy bytes before entropy coding. One byte per
/// occupied internal node, levels root-first, nodes in traversal order.
pub fn occupancy_bytes(coords: &[Coord], depth: u8) -> Result<Vec<u8>, OctreeError> {
    if coords.is_empty() {
        return Err(OctreeError::EmptyInput);
    }
    assert!(depth >= 1 && depth <= MAX_DEPTH);
    check_coords(coords, depth)?;
    let mut set: Vec<Coord> = coords.to_vec();
    set.sort_unstable_by_key(|&c| morton(c, depth));
    set.dedup();

    // levels[l] holds the node coordinates at level l (root = level 0),
    // each in traversal (Morton) order.
    let mut levels: Vec<Vec<Coord>> = Vec::with_capacity(depth as usize + 1);
    levels.push(set);
    for _ in 0..depth {
        let prev = levels.last().unwrap();
        let mut up: Vec<Coord> = prev.iter().map(|&c| c.half()).collect();
        up.dedup(); // halving preserves Morton order
        levels.push(up);
    }
    levels.reverse();

    let mut bytes = Vec::new();
    for level in 0..depth as usize {
        let nodes = &levels[level];
        let children = &levels[level + 1];
        let mut cursor = 0usize;
        for &node in nodes {
            let mut occ = 0u8;
            while cursor < children.len() && children[cursor].half() == node {
                let c = children[cursor];
                let bit = ((c.x & 1) << 2) | ((c.y & 1) << 1) | (c.z & 1);
                occ |= 1 << bit;
                cursor += 1;
            }
            debug_assert_ne!(occ, 0);
            bytes.push(occ);
        }
        debug_assert_eq!(cursor, children.len());
    }
    Ok(bytes)
}

/// Losslessly encodes a coordinate set with components in `[0, 2^depth)`.
pub fn octree_encode(coords: &[Coord], depth: u8) -> Result<OctreePayload, OctreeError> {
    let occ = occupancy_bytes(coords, depth)?;
    let mut enc = RangeEncoder::new();
    let mut model = AdaptiveByteModel::new();
    for &b in &occ {
        model.encode(&mut enc, b);
    }
    Ok(OctreePayload {
        depth,
        bytes: enc.finish(),
    })
}

/// Recovers the exact coordinate set in canonical order.
pub fn octree_decode(payload: &OctreePayload) -> Result<Vec<Coord>, OctreeError> {
    assert!(payload.depth >= 1 && payload.depth <= MAX_DEPTH);
    let mut dec = RangeDecoder::new(&payload.bytes);
    let mut model = AdaptiveByteModel::new();
    let mut nodes = vec![Coord::new(0, 0, 0)];
    for _ in 0..payload.depth {
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for &node in &nodes {
            let occ = model.decode(&mut dec)?;
            for bit in 0..8u8 {
                if occ & (1 << bit) != 0 {
                    next.push(Coord::new(
                        2 * node.x + ((bit >> 2) & 1) as i32,
                        2 * node.y + ((bit >> 1) & 1) as i32,
                        2 * node.z + (bit & 1) as i32,
                    ));
                }
            }
        }
        nodes = next;
        if nodes.is_empty() {
            return Err(OctreeError::CorruptPayload(CoderError::CorruptPayload(
                "empty occupancy byte in tree",
            )));
        }
    }
    dec.finish()?;
    nodes.sort_unstable();
    Ok(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(x: i32, y: i32, z: i32) -> Coord {
        Coord::new(x, y, z)
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, depth: u8) -> Vec<Coord> {
        let lim = 1 << depth;
        let mut set: Vec<Coord> = (0..n)
            .map(|_| {
                c(
                    rng.gen_range(0..lim),
                    rng.gen_range(0..lim),
                    rng.gen_range(0..lim),
                )
            })
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    }

    #[test]
    fn single_point_bytes_are_one_hot() {
        for depth in 1..=8u8 {
            let occ = occupancy_bytes(&[c(3 % (1 << depth), 1, 0)], depth).unwrap();
            assert_eq!(occ.len(), depth as usize);
            for b in occ {
                assert_eq!(b.count_ones(), 1);
            }
        }
    }

    #[test]
    fn full_grid_bytes_all_ff() {
        let mut coords = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                for z in 0..4 {
                    coords.push(c(x, y, z));
                }
            }
        }
        let occ = occupancy_bytes(&coords, 2).unwrap();
        assert_eq!(occ.len(), 9);
        assert!(occ.iter().all(|&b| b == 0xFF));
    }

    #[test]
    fn byte_count_equals_internal_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let coords = random_set(&mut rng, 150, 5);
        let occ = occupancy_bytes(&coords, 5).unwrap();
        let mut expected = 0usize;
        let mut level = coords.clone();
        for _ in 0..5 {
            let mut up: Vec<Coord> = level.iter().map(|&v| v.half()).collect();
            up.sort_unstable();
            up.dedup();
            expected += up.len();
            level = up;
        }
        assert_eq!(occ.len(), expected);
    }

    #[test]
    fn roundtrip_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..30 {
            let depth = rng.gen_range(3..=8);
            let n = rng.gen_range(1..=200);
            let coords = random_set(&mut rng, n, depth);
            let payload = octree_encode(&coords, depth).unwrap();
            let decoded = octree_decode(&payload).unwrap();
            assert_eq!(decoded, coords);
        }
    }

    #[test]
    fn single_point_payload_small() {
        for depth in 1..=10u8 {
            let payload = octree_encode(&[c(1, 0, 1)], depth).unwrap();
            assert!(
                payload.bytes.len() <= depth as usize + 16,
                "depth {depth}: {} bytes",
                payload.bytes.len()
            );
        }
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let coords = random_set(&mut rng, 120, 6);
        let mut payload = octree_encode(&coords, 6).unwrap();
        payload.bytes.pop();
        assert!(matches!(
            octree_decode(&payload),
            Err(OctreeError::CorruptPayload(_))
        ));
    }

    #[test]
    fn depth_mismatch_changes_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let coords = random_set(&mut rng, 50, 5);
        let payload = octree_encode(&coords, 5).unwrap();
        let wrong = OctreePayload {
            depth: 6,
            bytes: payload.bytes.clone(),
        };
        match octree_decode(&wrong) {
            Ok(decoded) => assert_ne!(decoded, coords),
            Err(_) => {} // also acceptable: the stream desynchronizes
        }
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert_eq!(octree_encode(&[], 4).unwrap_err(), OctreeError::EmptyInput);
        let err = octree_encode(&[c(16, 0, 0)], 4).unwrap_err();
        assert!(matches!(err, OctreeError::CoordOutOfRange(_, 4)));
        let err = octree_encode(&[c(-1, 0, 0)], 4).unwrap_err();
        assert!(matches!(err, OctreeError::CoordOutOfRange(_, 4)));
    }
}
