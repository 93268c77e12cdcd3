//! Binary activation/label dumps ("LPRB" files).
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"LPRB"`                          |
//! | 4      | 4    | format version, `u32` = 1                |
//! | 8      | 1    | dtype: 0 = f32, 1 = f64, 2 = u32 labels  |
//! | 9      | 8    | n (rows), `u64`                          |
//! | 17     | 8    | m (columns), `u64`; 1 for labels         |
//! | 25     | ...  | n·m values, row-major                    |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{IngestError, Labels, LayerActivations};

pub const MAGIC: [u8; 4] = *b"LPRB";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 25;

/// Element type stored in a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    U32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::U32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            2 => Some(Dtype::U32),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 | Dtype::U32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    dtype: Dtype,
    n: u64,
    m: u64,
}

fn parse_header(bytes: &[u8]) -> Result<Header, IngestError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(IngestError::BadMagic { offset: 0 });
    }
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::TruncatedFile {
            offset: bytes.len() as u64,
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(IngestError::UnsupportedVersion { version, offset: 4 });
    }
    let dtype = Dtype::from_code(bytes[8]).ok_or(IngestError::UnsupportedDtype {
        code: bytes[8],
        offset: 8,
    })?;
    let n = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[17..25].try_into().unwrap());

    let expected = (n as u128) * (m as u128) * dtype.width() as u128 + HEADER_LEN as u128;
    let actual = bytes.len() as u128;
    if actual < expected {
        return Err(IngestError::TruncatedFile {
            offset: actual as u64,
            expected: expected.min(u64::MAX as u128) as u64,
            actual: actual as u64,
        });
    }
    if actual > expected {
        return Err(IngestError::TrailingBytes {
            offset: expected as u64,
            extra: (actual - expected) as u64,
        });
    }
    Ok(Header { dtype, n, m })
}

fn encode_header(dtype: Dtype, n: usize, m: usize, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
}

/// Decodes an activation dump held in memory. `layer_id` is attached verbatim.
pub fn decode_activations(bytes: &[u8], layer_id: &str) -> Result<LayerActivations, IngestError> {
    let header = parse_header(bytes)?;
    if header.dtype == Dtype::U32 {
        return Err(IngestError::WrongDtype {
            expected: "f32 or f64",
            found: header.dtype,
        });
    }
    let (n, m) = (header.n as usize, header.m as usize);
    if n == 0 || m == 0 {
        return Err(IngestError::InvalidShape(format!("dump declares {n}x{m}")));
    }
    let width = header.dtype.width();
    let body = &bytes[HEADER_LEN..];
    let mut values = Vec::with_capacity(n * m);
    for (idx, chunk) in body.chunks_exact(width).enumerate() {
        let v = match header.dtype {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            _ => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        if !v.is_finite() {
            return Err(IngestError::NonFiniteValue {
                offset: (HEADER_LEN + idx * width) as u64,
                row: idx / m,
                col: idx % m,
            });
        }
        values.push(v);
    }
    let matrix = DMatrix::from_row_slice(n, m, &values);
    Ok(LayerActivations {
        layer_id: layer_id.to_string(),
        values: matrix,
        dtype: header.dtype,
    })
}

/// Encodes activations using the dtype recorded on `x`.
pub fn encode_activations(x: &LayerActivations) -> Result<Vec<u8>, IngestError> {
    x.validate()?;
    let (n, m) = x.values.shape();
    let dtype = if x.dtype == Dtype::F32 { Dtype::F32 } else { Dtype::F64 };
    let mut out = Vec::with_capacity(HEADER_LEN + n * m * dtype.width());
    encode_header(dtype, n, m, &mut out);
    for i in 0..n {
        for j in 0..m {
            let v = x.values[(i, j)];
            match dtype {
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                _ => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

/// Reads an activation dump. The layer id defaults to the file stem.
pub fn read_activation_dump(path: impl AsRef<Path>) -> Result<LayerActivations, IngestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    let layer_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_activations(&bytes, &layer_id)
}

pub fn write_activation_dump(x: &LayerActivations, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let bytes = encode_activations(x)?;
    crate::output::atomic_write(path, &bytes).map_err(|e| IngestError::io(path, e))
}

pub fn decode_labels(bytes: &[u8], k: Option<usize>) -> Result<Labels, IngestError> {
    let header = parse_header(bytes)?;
    if header.dtype != Dtype::U32 {
        return Err(IngestError::WrongDtype {
            expected: "u32",
            found: header.dtype,
        });
    }
    if header.m != 1 {
        return Err(IngestError::InvalidShape(format!(
            "label dump must have m = 1, found {}",
            header.m
        )));
    }
    let y: Vec<usize> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let k = match k {
        Some(k) => k,
        None => y.iter().copied().max().map_or(0, |v| v + 1).max(2),
    };
    Labels::new(y, k)
}

pub fn encode_labels(y: &Labels) -> Vec<u8> {
    let n = y.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n);
    encode_header(Dtype::U32, n, 1, &mut out);
    for &v in y.as_slice() {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out
}

/// Reads a label dump. When `k` is `None` the class count is inferred as `max + 1`.
pub fn read_labels(path: impl AsRef<Path>, k: Option<usize>) -> Result<Labels, IngestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    decode_labels(&bytes, k)
}

pub fn write_labels(y: &Labels, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    crate::output::atomic_write(path, &encode_labels(y)).map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> LayerActivations {
        let n = rows.len();
        let m = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        LayerActivations::new("t", DMatrix::from_row_slice(n, m, &flat)).unwrap()
    }

    #[test]
    fn round_trip_three_by_two() {
        let x = mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let bytes = encode_activations(&x).unwrap();
        let back = decode_activations(&bytes, "t").unwrap();
        assert_eq!(back.values, x.values);
        assert_eq!(encode_activations(&back).unwrap(), bytes);
    }

    #[test]
    fn one_by_one_file_size() {
        // 25 header bytes + one f64
        let x = mat(&[&[0.0]]);
        assert_eq!(encode_activations(&x).unwrap().len(), 33);
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let x = mat(&[&[1.5, -2.0]]);
        let bytes = encode_activations(&x).unwrap();
        assert_eq!(&bytes[0..4], b"LPRB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..17], &1u64.to_le_bytes());
        assert_eq!(&bytes[17..25], &2u64.to_le_bytes());
        assert_eq!(&bytes[25..33], &1.5f64.to_le_bytes());
        assert_eq!(&bytes[33..41], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_activations(&mat(&[&[1.0]])).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_activations(&bytes, "t"),
            Err(IngestError::BadMagic { offset: 0 })
        ));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encode_activations(&mat(&[&[1.0]])).unwrap();
        bytes[4] = 7;
        assert!(matches!(
            decode_activations(&bytes, "t"),
            Err(IngestError::UnsupportedVersion { version: 7, offset: 4 })
        ));
    }

    #[test]
    fn truncated_body() {
        let mut bytes = Vec::new();
        encode_header(Dtype::F64, 10, 10, &mut bytes);
        for i in 0..50 {
            bytes.extend_from_slice(&(i as f64).to_le_bytes());
        }
        match decode_activations(&bytes, "t") {
            Err(IngestError::TruncatedFile { offset, expected, actual }) => {
                assert_eq!(offset, 25 + 400);
                assert_eq!(expected, 25 + 800);
                assert_eq!(actual, 425);
            }
            other => panic!("expected TruncatedFile, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        assert!(matches!(
            decode_activations(b"LPRB\x01\x00", "t"),
            Err(IngestError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn non_finite_reports_offset() {
        let mut bytes = Vec::new();
        encode_header(Dtype::F64, 2, 2, &mut bytes);
        for v in [1.0, 2.0, f64::NAN, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        match decode_activations(&bytes, "t") {
            Err(IngestError::NonFiniteValue { offset, row, col }) => {
                assert_eq!((offset, row, col), (25 + 16, 1, 0));
            }
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_rejected_on_write() {
        let x = LayerActivations {
            layer_id: "e".into(),
            values: DMatrix::zeros(0, 3),
            dtype: Dtype::F64,
        };
        assert!(matches!(encode_activations(&x), Err(IngestError::InvalidShape(_))));
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let vals: Vec<f64> = [0.1f32, -3.25, 1e-7, 7.0, 65504.0, -0.0]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let mut x = LayerActivations::new("f", DMatrix::from_row_slice(2, 3, &vals)).unwrap();
        x.dtype = Dtype::F32;
        let bytes = encode_activations(&x).unwrap();
        assert_eq!(bytes.len(), 25 + 6 * 4);
        assert_eq!(bytes[8], 0);
        let back = decode_activations(&bytes, "f").unwrap();
        assert_eq!(back.values, x.values);
        assert_eq!(back.dtype, Dtype::F32);
        assert_eq!(encode_activations(&back).unwrap(), bytes);
    }

    #[test]
    fn labels_round_trip_and_dtype_check() {
        let y = Labels::new(vec![0, 2, 1, 1], 3).unwrap();
        let bytes = encode_labels(&y);
        assert_eq!(bytes[8], 2);
        assert_eq!(decode_labels(&bytes, Some(3)).unwrap(), y);
        assert!(matches!(
            decode_activations(&bytes, "l"),
            Err(IngestError::WrongDtype { .. })
        ));
        assert!(matches!(decode_labels(&bytes, Some(2)), Err(IngestError::InvalidLabels(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_activations(&mat(&[&[1.0]])).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode_activations(&bytes, "t"),
            Err(IngestError::TrailingBytes { offset: 33, extra: 1 })
        ));
    }
}
