use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};

pub const SPWP_MAGIC: &[u8; 4] = b"SPWP";

#[derive(Debug, Clone, PartialEq)]
pub struct PointStream {
    pub out_dim: usize,
    pub coords: Vec<f32>,
}

impl PointStream {
    pub fn count(&self) -> usize {
        self.coords.len() / self.out_dim.max(1)
    }
}

/// Exact encoded size: 16 header bytes plus four per coordinate.
pub fn points_len(count: usize, out_dim: usize) -> usize {
    16 + count * out_dim * 4
}

pub fn encode_points(out_dim: usize, coords: &[f32]) -> Vec<u8> {
    debug_assert!(out_dim > 0 && coords.len() % out_dim == 0);
    let count = coords.len() / out_dim;
    let mut w = Writer::with_capacity(points_len(count, out_dim));
    w.bytes(SPWP_MAGIC)
        .u32(out_dim as u32)
        .u64(count as u64)
        .f32s(coords);
    w.buf
}

pub fn decode_points(bytes: &[u8]) -> Result<PointStream> {
    let mut r = Reader::new(bytes, "SPWP");
    r.magic(SPWP_MAGIC)?;
    let out_dim = r.u32()? as usize;
    if out_dim == 0 {
        return Err(Error::malformed("SPWP", "out_dim is zero"));
    }
    let count = r.len_u64()?;
    let n = count
        .checked_mul(out_dim)
        .ok_or_else(|| Error::malformed("SPWP", "length overflow"))?;
    let coords = r.f32s(n)?;
    r.finish()?;
    Ok(PointStream { out_dim, coords })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_is_exact() {
        let b = encode_points(3, &[0.0; 12]);
        assert_eq!(b.len(), points_len(4, 3));
        assert_eq!(b.len(), 16 + 4 * 3 * 4);
        assert_eq!(decode_points(&b).unwrap().count(), 4);
    }
}
