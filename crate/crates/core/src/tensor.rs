//! Self-describing binary tensor files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! bytes 0..4   magic "RMT1"
//! byte  4      element type: 1 = f32, 2 = f64
//! byte  5      rank r (0 < r <= 8)
//! next 4*r     dimensions as u32
//! rest         row-major payload
//! ```
//!
//! Files are written atomically (temp file in the same directory, then
//! rename), so readers never observe a partial tensor.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RMT1";
pub const MAX_RANK: usize = 8;

/// Element type stored in a tensor file.  Values are always exposed to the
/// rest of the crate as `f64`; `F32` merely halves the file size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::BadTensorFile { path: path.display().to_string(), reason: reason.into() }
}

/// Writes `data` to `path` in the binary tensor format.
pub fn write_tensor(path: impl AsRef<Path>, data: ArrayViewD<'_, f64>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    if data.ndim() == 0 || data.ndim() > MAX_RANK {
        return Err(bad(path, format!("unsupported rank {}", data.ndim())));
    }
    for &d in data.shape() {
        if d > u32::MAX as usize {
            return Err(bad(path, format!("dimension {d} exceeds u32")));
        }
    }

    let mut bytes = Vec::with_capacity(6 + 4 * data.ndim() + data.len() * dtype.size());
    bytes.extend_from_slice(&MAGIC);
    bytes.push(dtype.code());
    bytes.push(data.ndim() as u8);
    for &d in data.shape() {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match dtype {
        Dtype::F32 => {
            for &v in data.iter() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in data.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    atomic_write(path, &bytes)
}

/// Reads a tensor of any rank, widening `f32` payloads to `f64`.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ArrayD<f64>> {
    let path = path.as_ref();
    let mut file =
        fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut header = [0u8; 6];
    file.read_exact(&mut header)
        .map_err(|_| bad(path, "file shorter than the 6-byte header"))?;
    if header[0..4] != MAGIC {
        return Err(bad(path, "bad magic (expected \"RMT1\")"));
    }
    let dtype = Dtype::from_code(header[4])
        .ok_or_else(|| bad(path, format!("unknown element-type code {}", header[4])))?;
    let rank = header[5] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(bad(path, format!("unsupported rank {rank}")));
    }

    let mut dim_bytes = vec![0u8; 4 * rank];
    file.read_exact(&mut dim_bytes).map_err(|_| bad(path, "truncated dimension list"))?;
    let dims: Vec<usize> = dim_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();

    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io(path.display().to_string(), e))?;
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(bad(
            path,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }

    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect(),
    };
    ArrayD::from_shape_vec(IxDyn(&dims), values)
        .map_err(|e| bad(path, format!("shape error: {e}")))
}

/// Reads a tensor and checks its rank.
pub fn read_tensor_rank(path: impl AsRef<Path>, rank: usize) -> Result<ArrayD<f64>> {
    let path = path.as_ref();
    let t = read_tensor(path)?;
    if t.ndim() != rank {
        return Err(bad(path, format!("expected rank {rank}, file has rank {}", t.ndim())));
    }
    Ok(t)
}

/// Writes `bytes` to `path` via a temp file in the same directory plus an
/// atomic rename.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f =
            fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.write_all(bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.sync_all().map_err(|e| Error::io(tmp.display().to_string(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        let t = Array3::from_shape_fn((3, 4, 2), |(i, j, k)| {
            (i as f64 * 17.0 - j as f64 * 0.125 + k as f64).sin()
        });
        write_tensor(&path, t.view().into_dyn(), Dtype::F64).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), &[3, 4, 2]);
        assert_eq!(back.into_dimensionality::<ndarray::Ix3>().unwrap(), t);
    }

    #[test]
    fn f32_round_trip_narrows_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        let t = arr2(&[[1.0f64 / 3.0, -2.5], [100.75, 0.0]]);
        write_tensor(&path, t.view().into_dyn(), Dtype::F32).unwrap();
        let back = read_tensor(&path).unwrap();
        for (a, b) in back.iter().zip(t.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn header_bytes_match_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        let t = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        write_tensor(&path, t.view().into_dyn(), Dtype::F64).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"RMT1");
        assert_eq!(bytes[4], 2); // f64
        assert_eq!(bytes[5], 2); // rank
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 6 * 8);
        assert_eq!(&bytes[14..22], &1f64.to_le_bytes());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        let t = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        write_tensor(&path, t.view().into_dyn(), Dtype::F64).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        let err = read_tensor(&path).unwrap_err();
        assert!(matches!(err, Error::BadTensorFile { .. }), "{err}");
    }

    #[test]
    fn bad_magic_and_bad_dtype_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        fs::write(&path, b"XXXX\x02\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00")
            .unwrap();
        assert!(read_tensor(&path).is_err());
        fs::write(&path, b"RMT1\x07\x01\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00")
            .unwrap();
        assert!(read_tensor(&path).is_err());
    }

    #[test]
    fn rank_check_names_the_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rmt");
        let t = arr2(&[[1.0]]);
        write_tensor(&path, t.view().into_dyn(), Dtype::F64).unwrap();
        assert!(read_tensor_rank(&path, 2).is_ok());
        assert!(read_tensor_rank(&path, 3).is_err());
    }
}
