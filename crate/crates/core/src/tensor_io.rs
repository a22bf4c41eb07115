//! Raw float tensor files.
//!
//! ```text
//! magic   "FTNS"
//! version u16 (= 1)
//! rank    u32
//! dims    u32 × rank
//! data    f32 × Π dims, row-major, little-endian
//! ```

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FTNS";
pub const VERSION: u16 = 1;

pub fn encode_tensor(tensor: &ArrayD<f64>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(10 + 4 * tensor.ndim() + 4 * tensor.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("tensor dimension {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in tensor.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<ArrayD<f64>> {
    let bad = |reason: &str| Error::format("tensor file", reason.to_string());
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic, expected \"FTNS\""));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| bad("truncated header"))
    };
    let rank = word(6)? as usize;
    let dims = (0..rank).map(|i| word(10 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| bad("dimensions overflow"))?;
    let data = &bytes[10 + 4 * rank..];
    if Some(data.len()) != count.checked_mul(4) {
        return Err(bad(&format!("shape {dims:?} needs {count} floats, payload has {} bytes", data.len())));
    }
    let values = data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    ArrayD::from_shape_vec(IxDyn(&dims), values).map_err(|e| bad(&e.to_string()))
}

pub fn save_tensor(tensor: &ArrayD<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(tensor)?).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<ArrayD<f64>> {
    let path = path.as_ref();
    decode_tensor(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_of_f32_values(dims in prop::collection::vec(1usize..5, 0..4), seed in any::<u32>()) {
            let count: usize = dims.iter().product();
            let values: Vec<f64> = (0..count).map(|i| ((i as u32 ^ seed) as f32 / 7.0) as f64).collect();
            let t = ArrayD::from_shape_vec(IxDyn(&dims), values).unwrap();
            let bytes = encode_tensor(&t).unwrap();
            prop_assert_eq!(decode_tensor(&bytes).unwrap(), t);
        }
    }

    #[test]
    fn rejects_short_payload() {
        let t = ArrayD::<f64>::zeros(IxDyn(&[2, 3]));
        let mut bytes = encode_tensor(&t).unwrap();
        bytes.pop();
        assert!(decode_tensor(&bytes).is_err());
        assert!(decode_tensor(b"NOPE").is_err());
    }
}
