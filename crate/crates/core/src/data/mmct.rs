//! MMCT tensor files.
//!
//! Layout: magic `"MMCT"`, version byte `0x01`, rank byte, `rank` extents as
//! little-endian `u32`, then the row-major payload as little-endian IEEE-754
//! `f64`. Nothing follows the payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, MmctError, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MMCT";
pub const VERSION: u8 = 0x01;

pub fn encode(t: &Tensor) -> Result<Vec<u8>, MmctError> {
    let extents: Vec<u64> = t.shape().iter().map(|&d| d as u64).collect();
    if t.rank() > u8::MAX as usize || extents.iter().any(|&d| d > u32::MAX as u64) {
        return Err(MmctError::ExtentOverflow(extents));
    }
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 8 * t.numel());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, MmctError> {
    let truncated = |expected: usize| MmctError::Truncated {
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(6));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(MmctError::BadMagic(magic));
    }
    if bytes.len() < 6 {
        return Err(truncated(6));
    }
    if bytes[4] != VERSION {
        return Err(MmctError::UnsupportedVersion(bytes[4]));
    }
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let extents: Vec<u64> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as u64)
        .collect();
    if extents.contains(&0) {
        return Err(MmctError::ZeroExtent(extents.iter().map(|&d| d as usize).collect()));
    }
    let payload = extents
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| usize::try_from(n).ok())
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| MmctError::ExtentOverflow(extents.clone()))?;
    if bytes.len() != payload {
        return Err(truncated(payload));
    }
    let data: Vec<f64> = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(MmctError::NonFinite);
    }
    let shape: Vec<usize> = extents.iter().map(|&d| d as usize).collect();
    Ok(Tensor::from_parts(shape, data))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Tensor {
        Tensor::new(vec![2, 3], vec![1.5, -0.0, 3.25, 1e-300, -7.0, 42.0]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"MMCT");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 2);
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &3u32.to_le_bytes());
        assert_eq!(&bytes[14..22], &1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 6 * 8);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(MmctError::BadMagic(_))));
    }

    #[test]
    fn bad_version() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(MmctError::UnsupportedVersion(2))));
    }

    #[test]
    fn payload_length_mismatch() {
        let bytes = encode(&sample()).unwrap();
        assert!(matches!(decode(&bytes[..bytes.len() - 8]), Err(MmctError::Truncated { .. })));
        let mut longer = bytes.clone();
        longer.extend_from_slice(&0f64.to_le_bytes());
        assert!(matches!(decode(&longer), Err(MmctError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..8]), Err(MmctError::Truncated { .. })));
    }

    #[test]
    fn extent_overflow() {
        let mut bytes = b"MMCT\x01\x04".to_vec();
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(decode(&bytes), Err(MmctError::ExtentOverflow(_))));
    }

    #[test]
    fn zero_extent_and_non_finite() {
        let mut bytes = b"MMCT\x01\x01".to_vec();
        bytes.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(MmctError::ZeroExtent(_))));

        let mut bytes = b"MMCT\x01\x01".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(MmctError::NonFinite)));
    }

    #[test]
    fn file_roundtrip_and_scalar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mmct");
        write_tensor(&path, &sample()).unwrap();
        assert!(read_tensor(&path).unwrap().bit_eq(&sample()));

        let s = Tensor::scalar(-2.5);
        assert!(decode(&encode(&s).unwrap()).unwrap().bit_eq(&s));
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..4, 1..5).prop_flat_map(|shape| {
            let n = shape.iter().product::<usize>();
            let bits = prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO;
            prop::collection::vec(bits, n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(t in arb_tensor()) {
            let back = decode(&encode(&t).unwrap()).unwrap();
            prop_assert!(back.bit_eq(&t));
        }
    }
}
