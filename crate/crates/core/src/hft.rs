//! Hierarchical Fourier temporal encoding.
//!
//! Each neuron's activation time series is split into a three-level temporal
//! pyramid (whole series, halves, quarters: 7 segments). Every segment is
//! summarized by the magnitudes of its first `p` DFT bins, and the 7 blocks are
//! concatenated. Encoding a whole activation matrix places neuron `j`'s `7p`
//! block at offset `j * 7p`.

use std::cell::RefCell;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_raw, ActivationSeries, RawTensor, Source};

pub const LEVELS: usize = 3;
pub const SEGMENTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HftConfig {
    /// DFT bins kept per segment, DC included.
    pub p: usize,
}

impl Default for HftConfig {
    fn default() -> Self {
        HftConfig { p: 4 }
    }
}

impl HftConfig {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Argument("p must be at least 1".into()));
        }
        Ok(HftConfig { p })
    }

    /// Code length contributed by one neuron.
    pub fn block_len(&self) -> usize {
        SEGMENTS * self.p
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Magnitudes `|c_k|`, `k = 0..p`, of the DFT of `signal`, zero-padded to length `p` when shorter.
pub fn dft_first_p(signal: &[f64], p: usize) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Argument("cannot transform an empty signal".into()));
    }
    let n = signal.len().max(p);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    let fft = PLANNER.with(|pl| pl.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);
    Ok(buf[..p].iter().map(|c| c.norm()).collect())
}

/// The 7 pyramid ranges over `[0, T)`: the whole series, its two floor-midpoint
/// halves, then each half split again at its own floor-midpoint.
pub fn pyramid_segments(steps: usize) -> Result<[Range<usize>; SEGMENTS]> {
    if steps < 4 {
        return Err(Error::Argument(format!(
            "temporal pyramid needs at least 4 timesteps, got {steps}"
        )));
    }
    let split = |r: Range<usize>| {
        let mid = r.start + (r.end - r.start) / 2;
        (r.start..mid, mid..r.end)
    };
    let whole = 0..steps;
    let (a, b) = split(whole.clone());
    let (aa, ab) = split(a.clone());
    let (ba, bb) = split(b.clone());
    Ok([whole, a, b, aa, ab, ba, bb])
}

/// `7p` magnitudes for one neuron, segments in pyramid order.
pub fn encode_neuron(series: &[f64], cfg: &HftConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cfg.block_len());
    for seg in pyramid_segments(series.len())? {
        out.extend(dft_first_p(&series[seg], cfg.p)?);
    }
    Ok(out)
}

/// Encoded activations of one video (α for the 2D source, β for the 3D source).
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCode {
    pub video_id: String,
    pub source: Source,
    pub p: usize,
    pub neurons: usize,
    pub values: Vec<f64>,
}

/// Sidecar manifest for a serialized [`TemporalCode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalCodeManifest {
    pub video_id: String,
    pub source: Source,
    pub p: usize,
    pub m: usize,
}

impl TemporalCode {
    pub fn block(&self, neuron: usize) -> &[f64] {
        let len = SEGMENTS * self.p;
        &self.values[neuron * len..(neuron + 1) * len]
    }

    /// Writes `<path>` in the tensor format (one row) and `<path>.json` as manifest.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = RawTensor::row_vector(self.source, self.values.iter().map(|&v| v as f32).collect());
        write_raw(&raw, path)?;
        let manifest = TemporalCodeManifest {
            video_id: self.video_id.clone(),
            source: self.source,
            p: self.p,
            m: self.neurons,
        };
        let side = sidecar(path);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&side, json).map_err(|e| Error::io(side, e))
    }
}

pub(crate) fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Applies [`encode_neuron`] to every neuron and concatenates the blocks neuron-major.
pub fn encode_activations(series: &ActivationSeries, cfg: &HftConfig) -> Result<TemporalCode> {
    series.validate()?;
    if cfg.p == 0 {
        return Err(Error::Argument("p must be at least 1".into()));
    }
    let block = cfg.block_len();
    let mut values = vec![0.0; block * series.neurons];
    values
        .par_chunks_mut(block)
        .enumerate()
        .try_for_each(|(j, out)| -> Result<()> {
            out.copy_from_slice(&encode_neuron(&series.neuron_series(j), cfg)?);
            Ok(())
        })?;
    Ok(TemporalCode {
        video_id: series.video_id.clone(),
        source: series.source,
        p: cfg.p,
        neurons: series.neurons,
        values,
    })
}

/// Per-neuron time average, the usual baseline for collapsing the temporal axis.
pub fn mean_pool(series: &ActivationSeries) -> Vec<f64> {
    (0..series.neurons)
        .map(|j| series.neuron_series(j).iter().sum::<f64>() / series.steps as f64)
        .collect()
}
