//! Flat binary tensor container plus JSON sidecar.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                         |
//! |-------|-------------------------------|
//! | 4     | magic `b"DLUT"`               |
//! | 4     | format version (`u32`, = 1)   |
//! | 4     | dtype tag (`u32`, 1=f32 2=f64)|
//! | 32    | dims `n, c, h, w` (`u64` each)|
//! | ...   | raw elements, row-major NCHW  |
//!
//! The sidecar lives next to the container at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"DLUT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub dtype: DType,
    pub shape: [usize; 4],
    pub checksum: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

pub fn encode<T: Element>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + tensor.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&T::DTYPE.tag().to_le_bytes());
    for d in tensor.shape().dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    out
}

/// Reads the dtype recorded in a container header.
pub fn peek_dtype(bytes: &[u8]) -> Result<DType> {
    check_header(bytes)?;
    let tag = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    DType::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown dtype tag {tag}")))
}

pub fn decode<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    let dtype = peek_dtype(bytes)?;
    if dtype != T::DTYPE {
        return Err(Error::Format(format!(
            "container holds {dtype}, requested {}",
            T::DTYPE
        )));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 12 + 8 * i;
        *d = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let body = &bytes[HEADER_LEN..];
    let width = dtype.size();
    if body.len() != shape.numel() * width {
        return Err(Error::Format(format!(
            "payload is {} bytes, shape {shape} needs {}",
            body.len(),
            shape.numel() * width
        )));
    }
    let data = body.chunks_exact(width).map(T::read_le).collect();
    Tensor::from_vec(shape, data)
}

fn check_header(bytes: &[u8]) -> Result<()> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a DLUT tensor container".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the container and its sidecar.
pub fn write_tensor<T: Element>(
    path: &Path,
    tensor: &Tensor<T>,
    meta: serde_json::Value,
) -> Result<()> {
    fs::write(path, encode(tensor))?;
    let sidecar = Sidecar {
        format: "dlut".into(),
        version: VERSION,
        dtype: T::DTYPE,
        shape: tensor.shape().dims(),
        checksum: format!("{:016x}", tensor.checksum()),
        meta,
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_tensor<T: Element>(path: &Path) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    Ok(serde_json::from_str(&fs::read_to_string(sidecar_path(
        path,
    ))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_uniform, Rng};

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::from_vec((1, 1, 1, 2), vec![1.5, -2.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"DLUT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[36..44].try_into().unwrap()), 2);
        assert_eq!(&bytes[44..48], &1.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 44 + 8);
    }

    #[test]
    fn dtype_mismatch_and_truncation_rejected() {
        let t: Tensor = random_uniform(&mut Rng::new(1), (1, 2, 2, 2), 0.0, 1.0);
        let bytes = encode(&t);
        assert!(decode::<f32>(&bytes).is_err());
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode::<f64>(b"nope").is_err());
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.dlut");
        let t: Tensor = random_uniform(&mut Rng::new(2), (2, 3, 4, 5), -1.0, 1.0);
        write_tensor(&path, &t, serde_json::json!({"name": "x"})).unwrap();
        assert_eq!(read_tensor::<f64>(&path).unwrap(), t);
        let side = read_sidecar(&path).unwrap();
        assert_eq!(side.shape, [2, 3, 4, 5]);
        assert_eq!(side.dtype, DType::F64);
        assert_eq!(side.meta["name"], "x");
    }
}
