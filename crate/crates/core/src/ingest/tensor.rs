//! Binary tensor files.
//!
//! Layout (all integers little-endian u32):
//!
//! | bytes | field                                  |
//! |-------|----------------------------------------|
//! | 0..4  | magic `EVET`                           |
//! | 4..8  | version, always 1                      |
//! | 8..12 | source tag (0 = frame2d, 1 = clip3d)   |
//! | 12..16| rows `T`                               |
//! | 16..20| columns `m`                            |
//! | 20..  | `T * m` little-endian f32, row-major   |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"EVET";
pub const TENSOR_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Which network produced an activation series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Frame2d,
    Clip3d,
}

impl Source {
    pub fn tag(self) -> u32 {
        match self {
            Source::Frame2d => 0,
            Source::Clip3d => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Source::Frame2d),
            1 => Some(Source::Clip3d),
            _ => None,
        }
    }
}

/// A bare row-major f32 matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub source: Source,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl RawTensor {
    pub fn row_vector(source: Source, values: Vec<f32>) -> Self {
        RawTensor {
            source,
            rows: 1,
            cols: values.len(),
            values,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.rows * self.cols != self.values.len() {
            return Err(Error::Dimension {
                what: "tensor payload",
                expected: self.rows * self.cols,
                got: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite value at element {i} (row {}, column {})",
                i / self.cols.max(1),
                i % self.cols.max(1)
            )));
        }
        let rows = u32::try_from(self.rows).map_err(|_| Error::Argument("too many rows".into()))?;
        let cols = u32::try_from(self.cols).map_err(|_| Error::Argument("too many columns".into()))?;
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        buf.extend_from_slice(TENSOR_MAGIC);
        buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.source.tag().to_le_bytes());
        buf.extend_from_slice(&rows.to_le_bytes());
        buf.extend_from_slice(&cols.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(buf)
    }

    /// Decodes a tensor file image. `path` is only used for error messages.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |offset: usize, msg: String| Error::format(path, offset as u64, msg);
        if bytes.len() < HEADER_LEN {
            return Err(fail(
                bytes.len(),
                format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len()),
            ));
        }
        if &bytes[0..4] != TENSOR_MAGIC {
            return Err(fail(0, "bad magic, expected \"EVET\"".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != TENSOR_VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let tag = word(8);
        let source = Source::from_tag(tag).ok_or_else(|| fail(8, format!("unknown source tag {tag}")))?;
        let rows = word(12) as usize;
        let cols = word(16) as usize;
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| fail(12, "dimensions overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(fail(
                HEADER_LEN + payload.len().min(expected),
                format!(
                    "payload is {} bytes, header {rows}x{cols} requires {expected}",
                    payload.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(fail(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
            }
            values.push(v);
        }
        Ok(RawTensor {
            source,
            rows,
            cols,
            values,
        })
    }
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    RawTensor::decode(&bytes, path)
}

pub fn write_raw(tensor: &RawTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = tensor.encode()?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Per-video time series of extraction-layer activations, `steps` rows of `neurons` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSeries {
    pub video_id: String,
    pub source: Source,
    pub steps: usize,
    pub neurons: usize,
    pub values: Vec<f32>,
}

impl ActivationSeries {
    pub fn new(
        video_id: impl Into<String>,
        source: Source,
        steps: usize,
        neurons: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        let series = ActivationSeries {
            video_id: video_id.into(),
            source,
            steps,
            neurons,
            values,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 4 {
            return Err(Error::Argument(format!(
                "activation series needs at least 4 timesteps, got {}",
                self.steps
            )));
        }
        if self.neurons == 0 {
            return Err(Error::Argument("activation series has no neurons".into()));
        }
        if self.values.len() != self.steps * self.neurons {
            return Err(Error::Dimension {
                what: "activation values",
                expected: self.steps * self.neurons,
                got: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite activation at step {}, neuron {}",
                i / self.neurons,
                i % self.neurons
            )));
        }
        Ok(())
    }

    pub fn at(&self, step: usize, neuron: usize) -> f32 {
        self.values[step * self.neurons + neuron]
    }

    /// Time series of a single neuron, widened to f64.
    pub fn neuron_series(&self, neuron: usize) -> Vec<f64> {
        (0..self.steps).map(|t| self.at(t, neuron) as f64).collect()
    }
}

/// Reads an activation series. The video id is the file stem.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ActivationSeries> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = ActivationSeries {
        video_id,
        source: raw.source,
        steps: raw.rows,
        neurons: raw.cols,
        values: raw.values,
    };
    series.validate().map_err(|e| Error::format(path, 12, e.to_string()))?;
    Ok(series)
}

pub fn write_tensor(series: &ActivationSeries, path: impl AsRef<Path>) -> Result<()> {
    series.validate()?;
    let raw = RawTensor {
        source: series.source,
        rows: series.steps,
        cols: series.neurons,
        values: series.values.clone(),
    };
    write_raw(&raw, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(steps: usize, neurons: usize, fill: f32) -> ActivationSeries {
        ActivationSeries::new("v", Source::Frame2d, steps, neurons, vec![fill; steps * neurons]).unwrap()
    }

    #[test]
    fn round_trip_constant() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.evet");
        let s = series(4, 2, 1.5);
        write_tensor(&s, &path).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), s);
    }

    #[test]
    fn zeros_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.evet");
        write_tensor(&series(4, 2, 0.0), &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), (HEADER_LEN + 32) as u64);
    }

    #[test]
    fn inception_pool_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.evet");
        write_tensor(&series(16, 1536, 0.25), &path).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!((back.steps, back.neurons), (16, 1536));
        assert_eq!(back.video_id, "clip");
    }

    #[test]
    fn short_payload_is_format_error() {
        let bytes = RawTensor {
            source: Source::Clip3d,
            rows: 4,
            cols: 2,
            values: vec![0.0; 8],
        }
        .encode()
        .unwrap();
        let err = RawTensor::decode(&bytes[..bytes.len() - 4], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 48, .. }), "{err}");
    }

    #[test]
    fn non_finite_payload_names_offset() {
        let mut bytes = RawTensor::row_vector(Source::Frame2d, vec![0.0, 1.0, 2.0]).encode().unwrap();
        bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = RawTensor::decode(&bytes, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 24, .. }), "{err}");
    }

    #[test]
    fn bad_magic_and_tag() {
        let mut bytes = RawTensor::row_vector(Source::Frame2d, vec![1.0]).encode().unwrap();
        bytes[8] = 7;
        assert!(matches!(
            RawTensor::decode(&bytes, Path::new("x")),
            Err(Error::Format { offset: 8, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(
            RawTensor::decode(&bytes, Path::new("x")),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn non_finite_rejected_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.evet");
        let mut s = series(4, 2, 0.0);
        s.values[3] = f32::INFINITY;
        assert!(write_tensor(&s, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn too_few_steps_rejected() {
        assert!(ActivationSeries::new("v", Source::Frame2d, 3, 1, vec![0.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bit_exact_round_trip(
                steps in 4usize..12,
                neurons in 1usize..6,
                seed in proptest::collection::vec(-1.0e6f32..1.0e6, 72),
            ) {
                let values: Vec<f32> = (0..steps * neurons).map(|i| seed[i % seed.len()] * (i as f32 + 0.5)).collect();
                let s = ActivationSeries::new("x", Source::Clip3d, steps, neurons, values).unwrap();
                let bytes = RawTensor { source: s.source, rows: steps, cols: neurons, values: s.values.clone() }.encode().unwrap();
                let back = RawTensor::decode(&bytes, Path::new("x")).unwrap();
                let same = back.values.iter().zip(&s.values).all(|(a, b)| a.to_bits() == b.to_bits());
                prop_assert!(same);
            }
        }
    }
}
