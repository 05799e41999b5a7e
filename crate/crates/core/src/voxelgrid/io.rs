//! `.vxg` grid files.
//!
//! Layout (little-endian, no padding):
//!
//! | offset | size | field                                              |
//! |--------|------|----------------------------------------------------|
//! | 0      | 4    | magic `VXGR`                                       |
//! | 4      | 1    | version (1)                                        |
//! | 5      | 1    | encoding: 0 bit-packed binary, 1 `f32` probability |
//! | 6      | 6    | dims x, y, z as `u16`                              |
//! | 12     | ...  | payload in grid linearization order               |
//!
//! Bit-packed payloads are LSB-first within each byte; unused high bits of the
//! last byte are zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GridKind, OccupancyGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VXGR";
pub const VERSION: u8 = 1;
pub const ENCODING_BITS: u8 = 0;
pub const ENCODING_F32: u8 = 1;
const HEADER_LEN: usize = 12;

/// Serializes a grid to bytes.
pub fn write_grid(grid: &OccupancyGrid) -> Result<Vec<u8>> {
    let dims = grid.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match grid.kind() {
        GridKind::Binary => ENCODING_BITS,
        GridKind::Probability => ENCODING_F32,
    });
    for d in dims {
        let d = u16::try_from(d)
            .map_err(|_| Error::Shape(format!("dimension {d} does not fit the u16 header field")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match grid.kind() {
        GridKind::Binary => {
            let mut packed = vec![0u8; grid.len().div_ceil(8)];
            for (i, &v) in grid.values().iter().enumerate() {
                if v > 0.5 {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        GridKind::Probability => {
            for &v in grid.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Parses a grid from bytes.
pub fn read_grid(bytes: &[u8]) -> Result<OccupancyGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:02x?}", &bytes[0..4])));
    }
    if bytes[4] != VERSION {
        return Err(format_err(4, format!("unsupported version {}", bytes[4])));
    }
    let encoding = bytes[5];
    let mut dims = [0usize; 3];
    for (k, d) in dims.iter_mut().enumerate() {
        let o = 6 + 2 * k;
        *d = usize::from(u16::from_le_bytes([bytes[o], bytes[o + 1]]));
        if *d == 0 {
            return Err(format_err(o, "zero dimension"));
        }
    }
    let n: usize = dims.iter().product();
    let payload = &bytes[HEADER_LEN..];
    let (kind, values) = match encoding {
        ENCODING_BITS => {
            let need = n.div_ceil(8);
            check_payload_len(payload.len(), need)?;
            let values = (0..n)
                .map(|i| if payload[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            (GridKind::Binary, values)
        }
        ENCODING_F32 => {
            check_payload_len(payload.len(), n * 4)?;
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect::<Vec<_>>();
            if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(format_err(HEADER_LEN + 4 * i, "probability outside [0, 1]"));
            }
            (GridKind::Probability, values)
        }
        other => return Err(format_err(5, format!("unknown encoding {other}"))),
    };
    OccupancyGrid::from_values(dims, values, kind)
}

fn check_payload_len(have: usize, need: usize) -> Result<()> {
    if have < need {
        return Err(format_err(
            HEADER_LEN + have,
            format!("truncated payload: {have} of {need} bytes"),
        ));
    }
    if have > need {
        return Err(format_err(
            HEADER_LEN + need,
            format!("{} trailing bytes after payload", have - need),
        ));
    }
    Ok(())
}

pub fn save_grid(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_grid(grid)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_grid(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_payload_is_packed() {
        let mut g = OccupancyGrid::cubic(4);
        for i in 0..7 {
            g.set_occupied(i % 4, i / 4, 1, true);
        }
        let bytes = write_grid(&g).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert_eq!(&bytes[..6], b"VXGR\x01\x00");
        assert_eq!(&bytes[6..12], &[4, 0, 4, 0, 4, 0]);
        // voxels (0..4, 0..2, 1) are linear indices 16..=22 -> byte 2, bits 0..=6
        assert_eq!(bytes[HEADER_LEN + 2], 0x7f);
        assert!(bytes[HEADER_LEN..].iter().enumerate().all(|(i, &b)| i == 2 || b == 0));
        assert_eq!(read_grid(&bytes).unwrap(), g);
    }

    #[test]
    fn float_payload_layout() {
        let g = OccupancyGrid::from_values([2, 1, 1], vec![0.25, 1.0], GridKind::Probability).unwrap();
        let bytes = write_grid(&g).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        assert_eq!(bytes[5], ENCODING_F32);
        assert_eq!(&bytes[12..16], &0.25f32.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_files() {
        let g = OccupancyGrid::cubic(3);
        let good = write_grid(&g).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_grid(&bad), Err(Error::Format { offset: 0, .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(read_grid(&bad), Err(Error::Format { offset: 4, .. })));

        let bad = &good[..good.len() - 1];
        assert!(matches!(read_grid(bad), Err(Error::Format { .. })));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(read_grid(&bad), Err(Error::Format { .. })));

        assert!(matches!(read_grid(b"VXG"), Err(Error::Format { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vxg");
        let vals: Vec<f32> = (0..16 * 16 * 16).map(|i| ((i * 7919) % 1000) as f32 / 999.0).collect();
        let g = OccupancyGrid::from_values([16, 16, 16], vals, GridKind::Probability).unwrap();
        save_grid(&g, &path).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(
            back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dims in (1usize..7, 1usize..7, 1usize..7),
            seed in any::<u64>(),
            binary in any::<bool>(),
        ) {
            let dims = [dims.0, dims.1, dims.2];
            let n = dims.iter().product::<usize>();
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 40) as f32 / (1u64 << 24) as f32 };
            let g = if binary {
                let mask: Vec<bool> = (0..n).map(|_| next() > 0.5).collect();
                OccupancyGrid::from_mask(dims, &mask).unwrap()
            } else {
                OccupancyGrid::from_values(dims, (0..n).map(|_| next()).collect(), GridKind::Probability).unwrap()
            };
            let back = read_grid(&write_grid(&g).unwrap()).unwrap();
            prop_assert_eq!(back.kind(), g.kind());
            prop_assert_eq!(back.dims(), g.dims());
            prop_assert!(back.values().iter().zip(g.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
