//! MARF binary tensor format.
//!
//! Layout: magic "MARF", version u8, dtype u8 (0 = f32, 1 = f64), rank u8,
//! little-endian u32 extents, then raw little-endian values. Used for model
//! checkpoints and dataset shards. The reader treats its input as untrusted
//! and validates every field before allocating.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: [u8; 4] = *b"MARF";
const VERSION: u8 = 1;

/// On-disk element type. Values are always f64 in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

// Guards against absurd allocations from corrupt headers.
const MAX_RANK: u8 = 8;
const MAX_ELEMENTS: u64 = 1 << 31;

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { path: "<marf>".into(), msg: msg.into() }
}

/// Decode a tensor from an in-memory MARF image.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let mut cursor = bytes;
    let tensor = decode_from(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(bad(format!("{} trailing bytes after payload", cursor.len())));
    }
    Ok(tensor)
}

/// Decode one tensor from a reader, leaving the reader positioned after it.
pub fn decode_from(reader: &mut impl Read) -> Result<Tensor> {
    let mut header = [0u8; 7];
    reader.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if header[..4] != MAGIC {
        return Err(bad("bad magic, expected MARF"));
    }
    if header[4] != VERSION {
        return Err(bad(format!("unsupported version {}", header[4])));
    }
    let dtype = match header[5] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(bad(format!("unknown dtype {}", other))),
    };
    let rank = header[6];
    if rank > MAX_RANK {
        return Err(bad(format!("rank {} exceeds limit {}", rank, MAX_RANK)));
    }

    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel: u64 = 1;
    for _ in 0..rank {
        let mut ext = [0u8; 4];
        reader.read_exact(&mut ext).map_err(|_| bad("truncated extents"))?;
        let e = u32::from_le_bytes(ext) as u64;
        numel = numel.saturating_mul(e);
        if numel > MAX_ELEMENTS {
            return Err(bad(format!("element count exceeds limit {}", MAX_ELEMENTS)));
        }
        shape.push(e as usize);
    }

    let numel = numel as usize;
    let mut data = Vec::with_capacity(numel);
    match dtype {
        Dtype::F32 => {
            let mut buf = vec![0u8; numel * 4];
            reader.read_exact(&mut buf).map_err(|_| bad("truncated payload"))?;
            for chunk in buf.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            let mut buf = vec![0u8; numel * 8];
            reader.read_exact(&mut buf).map_err(|_| bad("truncated payload"))?;
            for chunk in buf.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    Tensor::from_vec(shape, data)
}

/// Encode a tensor to the MARF wire format.
pub fn encode(tensor: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    if tensor.shape().len() > MAX_RANK as usize {
        return Err(Error::usage(format!("rank {} exceeds MARF limit {}", tensor.shape().len(), MAX_RANK)));
    }
    for &e in tensor.shape() {
        if e > u32::MAX as usize {
            return Err(Error::usage(format!("extent {} does not fit in u32", e)));
        }
    }
    let mut out = Vec::with_capacity(7 + tensor.shape().len() * 4 + tensor.numel() * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.push(tensor.shape().len() as u8);
    for &e in tensor.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => {
            for &v in tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, tensor: &Tensor, dtype: Dtype) -> Result<()> {
    crate::io::write_atomic(path, &encode(tensor, dtype)?)
}

pub fn read_file(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Format { path: path.to_path_buf(), msg },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_magic() {
        assert!(decode(b"MARX\x01\x01\x00").is_err());
    }

    #[test]
    fn rejects_truncated_payload() {
        let t = Tensor::from_vec(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&t, Dtype::F64).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rejects_huge_extents() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"MARF");
        bytes.push(1);
        bytes.push(1);
        bytes.push(2);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn scalar_rank_zero() {
        let t = Tensor::scalar(7.25);
        let bytes = encode(&t, Dtype::F64).unwrap();
        // rank-1 shape [1]; a rank-0 stream is also legal and decodes to one value
        assert_eq!(decode(&bytes).unwrap().data(), &[7.25]);
    }

    proptest! {
        #[test]
        fn f64_roundtrip(values in proptest::collection::vec(-1e12f64..1e12, 0..200)) {
            let t = Tensor::from_vec(vec![values.len()], values.clone()).unwrap();
            let bytes = encode(&t, Dtype::F64).unwrap();
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.data(), t.data());
            prop_assert_eq!(back.shape(), t.shape());
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode(&bytes);
        }
    }
}
