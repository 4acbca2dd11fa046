//! Frequency-domain branch: per-dimension DFT magnitudes resampled onto a
//! fixed-length normalized frequency grid.

mod fft;
pub mod resample;

use std::path::Path;

use num_complex::Complex64;

pub use fft::{fft, Direction, NAIVE_PRIME_LIMIT};
pub use resample::{keys_kernel, resample_spectrum};

use crate::error::{Error, Result};
use crate::ingest::FrameSequence;
use crate::io_util::{self, Reader};

pub const SPECTRAL_MAGIC: &[u8; 4] = b"VSP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralConfig {
    /// Number of resampled frequency bins L.
    pub target_length: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { target_length: 500 }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_length < 2 {
            return Err(Error::Config("target_length must be >= 2".into()));
        }
        Ok(())
    }
}

/// Magnitude spectra of one video, D rows by L columns. Column `s` is the
/// D-dimensional DFT feature at resampled bin `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSequence {
    pub video_id: String,
    dims: usize,
    target_length: usize,
    data: Vec<f64>,
}

impl SpectralSequence {
    /// Builds from column-major data; entries must be finite and >= 0.
    pub fn new(
        video_id: impl Into<String>,
        dims: usize,
        target_length: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if dims == 0 || target_length == 0 || data.len() != dims * target_length {
            return Err(Error::Data(format!(
                "spectral matrix {}x{} does not match {} values",
                dims,
                target_length,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Data(
                "spectral magnitudes must be finite and >= 0".into(),
            ));
        }
        Ok(SpectralSequence {
            video_id: video_id.into(),
            dims,
            target_length,
            data,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn target_length(&self) -> usize {
        self.target_length
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn bin(&self, s: usize) -> &[f64] {
        &self.data[s * self.dims..(s + 1) * self.dims]
    }

    pub fn bins(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dims)
    }

    /// Row `k`: the resampled magnitude spectrum of dimension `k`.
    pub fn dimension(&self, k: usize) -> Vec<f64> {
        self.bins().map(|b| b[k]).collect()
    }

    /// Rounds every entry to single precision, the precision of the dump
    /// format.
    pub fn quantized(&self) -> SpectralSequence {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v as f32 as f64;
        }
        out
    }
}

/// `|sum_n x[n] exp(-2 pi i n s / N)|` for every `s` in `0..N`.
pub fn dft_magnitude(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Data("cannot transform an empty signal".into()));
    }
    let z: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(fft(&z, Direction::Forward)
        .iter()
        .map(|c| c.norm())
        .collect())
}

/// DFT magnitude of every feature dimension, each resampled to
/// `cfg.target_length` bins.
///
/// Cubic convolution can undershoot between a tall peak and a near-zero
/// neighbour; such values are clamped to 0 so the result stays a magnitude.
pub fn spectral_features(seq: &FrameSequence, cfg: &SpectralConfig) -> Result<SpectralSequence> {
    cfg.validate()?;
    let dims = seq.dims();
    let len = cfg.target_length;
    let mut data = vec![0.0; dims * len];
    for k in 0..dims {
        let mag = dft_magnitude(&seq.dimension(k))?;
        let row = resample_spectrum(&mag, len)?;
        for (s, v) in row.into_iter().enumerate() {
            data[s * dims + k] = v.max(0.0);
        }
    }
    SpectralSequence::new(seq.video_id.clone(), dims, len, data)
}

pub fn encode_spectral(spec: &SpectralSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + spec.data.len() * 4);
    out.extend_from_slice(SPECTRAL_MAGIC);
    out.extend_from_slice(&(spec.dims as u32).to_le_bytes());
    out.extend_from_slice(&(spec.target_length as u32).to_le_bytes());
    for v in &spec.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_spectral(path: &Path, spec: &SpectralSequence) -> Result<()> {
    io_util::write_file(path, &encode_spectral(spec))
}

/// Reads a `VSP1` dump; the video id is the file stem.
pub fn read_spectral(path: &Path) -> Result<SpectralSequence> {
    let bytes = io_util::read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.expect_magic(SPECTRAL_MAGIC)?;
    let dims = r.u32()?;
    let len = r.u32()?;
    let count = io_util::checked_len(path, dims, len)?;
    if r.remaining() != count * 4 {
        return Err(Error::format(
            path,
            format!(
                "header declares D={} L={} but payload holds {} bytes",
                dims,
                len,
                r.remaining()
            ),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f32()? as f64);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SpectralSequence::new(id, dims as usize, len as usize, data)
        .map_err(|e| Error::format(path, e.to_string()))
}
