//! The LDTN binary tensor format.
//!
//! Layout: magic `LDTN`, version byte (1), dtype byte (0 = f32, 1 = f64),
//! ndim byte, reserved byte, `ndim` little-endian u64 dims, then the
//! row-major little-endian payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: [u8; 4] = *b"LDTN";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

pub fn encode(tensor: &Tensor, dtype: DType) -> Result<Vec<u8>> {
    if tensor.shape.len() > u8::MAX as usize {
        return Err(Error::Format(format!("too many dims: {}", tensor.shape.len())));
    }
    let n: usize = tensor.shape.iter().product();
    if n != tensor.data.len() {
        return Err(Error::dim(format!(
            "tensor shape {:?} does not match {} values",
            tensor.shape,
            tensor.data.len()
        )));
    }
    let mut buf = Vec::with_capacity(8 + 8 * tensor.shape.len() + n * dtype.width());
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.push(dtype as u8);
    buf.push(tensor.shape.len() as u8);
    buf.push(0);
    for &d in &tensor.shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        DType::F32 => {
            for &v in &tensor.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        DType::F64 => {
            for &v in &tensor.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let truncated = || {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "LDTN payload truncated",
        ))
    };
    if bytes.len() < 8 {
        return Err(truncated());
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02X?}, expected {:02X?} (\"LDTN\")",
            &bytes[..4],
            MAGIC
        )));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!(
            "unsupported LDTN version {}, expected {VERSION}",
            bytes[4]
        )));
    }
    let dtype = match bytes[5] {
        0 => DType::F32,
        1 => DType::F64,
        other => return Err(Error::Format(format!("unknown dtype byte {other}"))),
    };
    let ndim = bytes[6] as usize;
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(truncated());
    }
    let shape: Vec<usize> = (0..ndim)
        .map(|i| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[8 + 8 * i..16 + 8 * i]);
            u64::from_le_bytes(b) as usize
        })
        .collect();
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {shape:?} overflow")))?;
    let payload = &bytes[header..];
    if payload.len() != n * dtype.width() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "LDTN dims {shape:?} need {} payload bytes, found {}",
                n * dtype.width(),
                payload.len()
            ),
        )));
    }
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b.copy_from_slice(c);
                f64::from_le_bytes(b)
            })
            .collect(),
    };
    Ok(Tensor { shape, data })
}

pub fn write_tensor(path: &Path, tensor: &Tensor, dtype: DType) -> Result<()> {
    let bytes = encode(tensor, dtype)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let b = encode(&t, DType::F64).unwrap();
        assert_eq!(&b[..8], &[0x4C, 0x44, 0x54, 0x4E, 1, 1, 2, 0]);
        assert_eq!(b.len(), 8 + 16 + 16);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
    }

    #[test]
    fn corrupted_magic_names_expected() {
        let t = Tensor::new(vec![1], vec![1.0]).unwrap();
        let mut b = encode(&t, DType::F64).unwrap();
        b[0] = b'X';
        let err = decode(&b).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("LDTN"), "{err}");
    }

    #[test]
    fn payload_length_mismatch_is_io_error() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = encode(&t, DType::F64).unwrap();
        assert!(matches!(decode(&b[..b.len() - 8]), Err(Error::Io(_))));
        let mut longer = b.clone();
        longer.extend_from_slice(&[0; 8]);
        assert!(matches!(decode(&longer), Err(Error::Io(_))));
    }

    #[test]
    fn bad_dtype_and_version() {
        let t = Tensor::new(vec![1], vec![1.0]).unwrap();
        let mut b = encode(&t, DType::F64).unwrap();
        b[5] = 7;
        assert!(matches!(decode(&b), Err(Error::Format(_))));
        b[5] = 1;
        b[4] = 2;
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(
            dims in prop::collection::vec(1usize..5, 0..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let mut rng = crate::numerics::derive_stream(seed, &[("ldtn", 0)]);
            let data: Vec<f64> = (0..n).map(|_| f64::from_bits(rng.next_u64())).collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = decode(&encode(&t, DType::F64).unwrap()).unwrap();
            prop_assert_eq!(back.shape, t.shape);
            let a: Vec<u64> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = t.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn f32_round_trip_of_f32_values(vals in prop::collection::vec(-1e6f32..1e6, 1..40)) {
            let t = Tensor::new(vec![vals.len()], vals.iter().map(|&v| v as f64).collect()).unwrap();
            let back = decode(&encode(&t, DType::F32).unwrap()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
