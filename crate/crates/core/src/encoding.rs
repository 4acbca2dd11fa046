//! Locality-constrained linear coding, max pooling and late fusion.

use std::path::Path;

use crate::codebook::{assign_nearest, Codebook, SourceTag};
use crate::error::{Error, Result};
use crate::ingest::{l2_normalize_in_place, FrameSequence};
use crate::io_util::{self, Reader};
use crate::linalg::{cholesky_solve, dot};
use crate::spectral::SpectralSequence;

pub const REPRESENTATION_MAGIC: &[u8; 4] = b"VRP1";
pub const TABLE_MAGIC: &[u8; 4] = b"VRPT";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlcConfig {
    /// Number of nearest codewords each descriptor is coded over.
    pub knn: usize,
    /// Ridge added to the diagonal of the local Gram system.
    pub lambda: f64,
}

impl Default for LlcConfig {
    fn default() -> Self {
        LlcConfig {
            knn: 5,
            lambda: 1e-4,
        }
    }
}

impl LlcConfig {
    pub fn validate(&self, codebook_size: usize) -> Result<()> {
        if self.knn == 0 || self.knn > codebook_size {
            return Err(Error::Config(format!(
                "llc knn = {} must be in 1..={}",
                self.knn, codebook_size
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("llc lambda must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub frame_weight: f64,
    pub dft_weight: f64,
    /// L2-normalize every DFT feature before coding (and before codebook
    /// learning, see the pipeline).
    pub normalize_dft: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            frame_weight: 0.6,
            dft_weight: 0.4,
            normalize_dft: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w >= 0.0 && w.is_finite();
        if !ok(self.frame_weight) || !ok(self.dft_weight) {
            return Err(Error::Config(
                "fusion weights must be finite and >= 0".into(),
            ));
        }
        if self.frame_weight == 0.0 && self.dft_weight == 0.0 {
            return Err(Error::Config("fusion weights must not both be 0".into()));
        }
        Ok(())
    }
}

/// Sparse LLC code: at most `knn` nonzero coefficients summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LlcCode {
    pub indices: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl LlcCode {
    pub fn to_dense(&self, size: usize) -> Vec<f64> {
        let mut out = vec![0.0; size];
        for (&i, &c) in self.indices.iter().zip(&self.coefficients) {
            out[i] = c;
        }
        out
    }
}

/// Codes `query` over its `knn` nearest codewords.
///
/// With `z_i = b_i - query` for the selected codewords, solves
/// `(Z Z^T + lambda I) w = 1` and returns `w / sum(w)`: the minimizer of
/// `|query - sum c_i b_i|^2 + lambda |c|^2` subject to `sum c_i = 1`.
pub fn llc_encode(codebook: &Codebook, query: &[f64], cfg: &LlcConfig) -> Result<LlcCode> {
    cfg.validate(codebook.size())?;
    let indices = assign_nearest(codebook, query, cfg.knn)?;
    let k = indices.len();
    let shifted: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| {
            codebook
                .codeword(i)
                .iter()
                .zip(query)
                .map(|(b, q)| b - q)
                .collect()
        })
        .collect();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v = dot(&shifted[i], &shifted[j]);
            gram[i * k + j] = v;
            gram[j * k + i] = v;
        }
        gram[i * k + i] += cfg.lambda;
    }
    let w = cholesky_solve(&gram, &vec![1.0; k]).ok_or_else(|| {
        Error::Numeric(format!(
            "local LLC system over codewords {:?} is singular",
            indices
        ))
    })?;
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total != 0.0) {
        return Err(Error::Numeric("LLC weights do not normalize".into()));
    }
    Ok(LlcCode {
        indices,
        coefficients: w.iter().map(|v| v / total).collect(),
    })
}

/// Elementwise (signed) maximum.
pub fn max_pool(codes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = codes
        .first()
        .ok_or_else(|| Error::Data("cannot pool an empty list of codes".into()))?;
    let mut out = first.clone();
    for c in &codes[1..] {
        if c.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                found: c.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(c) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    Ok(out)
}

/// Same result as `max_pool` over the dense codes, without densifying.
fn max_pool_sparse(codes: &[LlcCode], size: usize) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; size];
    let mut hits = vec![0usize; size];
    for code in codes {
        for (&i, &c) in code.indices.iter().zip(&code.coefficients) {
            hits[i] += 1;
            if c > best[i] {
                best[i] = c;
            }
        }
    }
    best.iter()
        .zip(&hits)
        .map(|(&b, &h)| if h < codes.len() { b.max(0.0) } else { b })
        .collect()
}

/// LLC-codes each descriptor and max-pools the codes.
pub fn encode_branch<'a>(
    descriptors: impl IntoIterator<Item = &'a [f64]>,
    codebook: &Codebook,
    cfg: &LlcConfig,
) -> Result<Vec<f64>> {
    let codes = descriptors
        .into_iter()
        .map(|d| llc_encode(codebook, d, cfg))
        .collect::<Result<Vec<_>>>()?;
    if codes.is_empty() {
        return Err(Error::Data("cannot pool an empty list of codes".into()));
    }
    Ok(max_pool_sparse(&codes, codebook.size()))
}

/// Scales `block` to norm `weight`; an all-zero block stays zero.
pub fn weight_block(block: &mut [f64], weight: f64) {
    l2_normalize_in_place(block);
    for v in block.iter_mut() {
        *v *= weight;
    }
}

/// A video's L2-normalized copy of each DFT feature.
pub fn normalized_bins(spectra: &SpectralSequence) -> Vec<Vec<f64>> {
    spectra
        .bins()
        .map(|b| {
            let mut v = b.to_vec();
            l2_normalize_in_place(&mut v);
            v
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRepresentation {
    pub video_id: String,
    pub vector: Vec<f64>,
}

fn check_codebook(cb: &Codebook, tag: SourceTag, dims: usize) -> Result<()> {
    if cb.source_tag() != tag {
        return Err(Error::Data(format!(
            "codebook tagged {:?} used for the {:?} branch",
            cb.source_tag(),
            tag
        )));
    }
    if cb.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: cb.dims(),
            found: dims,
        });
    }
    Ok(())
}

/// Pooled frame-branch codes (unnormalized).
pub fn pool_frames(frames: &FrameSequence, cb: &Codebook, llc: &LlcConfig) -> Result<Vec<f64>> {
    check_codebook(cb, SourceTag::FrameBranch, frames.dims())?;
    encode_branch(frames.frames(), cb, llc)
}

/// Pooled DFT-branch codes (unnormalized).
pub fn pool_spectra(
    spectra: &SpectralSequence,
    cb: &Codebook,
    llc: &LlcConfig,
    normalize: bool,
) -> Result<Vec<f64>> {
    check_codebook(cb, SourceTag::DftBranch, spectra.dims())?;
    if normalize {
        let bins = normalized_bins(spectra);
        encode_branch(bins.iter().map(Vec::as_slice), cb, llc)
    } else {
        encode_branch(spectra.bins(), cb, llc)
    }
}

/// Frame block then DFT block, each normalized to its fusion weight.
pub fn encode_video(
    frames: &FrameSequence,
    spectra: &SpectralSequence,
    cb_frame: &Codebook,
    cb_dft: &Codebook,
    llc: &LlcConfig,
    fusion: &FusionConfig,
) -> Result<VideoRepresentation> {
    fusion.validate()?;
    let mut frame_block = pool_frames(frames, cb_frame, llc)?;
    let mut dft_block = pool_spectra(spectra, cb_dft, llc, fusion.normalize_dft)?;
    weight_block(&mut frame_block, fusion.frame_weight);
    weight_block(&mut dft_block, fusion.dft_weight);
    frame_block.extend_from_slice(&dft_block);
    Ok(VideoRepresentation {
        video_id: frames.video_id.clone(),
        vector: frame_block,
    })
}

// ---------------------------------------------------------------------------
// Representation files

pub fn encode_representation(rep: &VideoRepresentation) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + rep.vector.len() * 4);
    out.extend_from_slice(REPRESENTATION_MAGIC);
    out.extend_from_slice(&(rep.vector.len() as u32).to_le_bytes());
    for v in &rep.vector {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn decode_representation(
    path: &Path,
    video_id: String,
    bytes: &[u8],
) -> Result<VideoRepresentation> {
    let mut r = Reader::new(path, bytes);
    r.expect_magic(REPRESENTATION_MAGIC)?;
    let len = r.u32()? as usize;
    if r.remaining() != len * 4 {
        return Err(Error::format(
            path,
            format!(
                "header declares {} values but payload holds {} bytes",
                len,
                r.remaining()
            ),
        ));
    }
    let mut vector = Vec::with_capacity(len);
    for _ in 0..len {
        let v = r.f32()? as f64;
        if !v.is_finite() {
            return Err(Error::format(path, "non-finite value"));
        }
        vector.push(v);
    }
    Ok(VideoRepresentation { video_id, vector })
}

pub fn write_representation(path: &Path, rep: &VideoRepresentation) -> Result<()> {
    io_util::write_file(path, &encode_representation(rep))
}

/// Reads a single `VRP1` file; the video id is the file stem.
pub fn read_representation(path: &Path) -> Result<VideoRepresentation> {
    let bytes = io_util::read_file(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_representation(path, id, &bytes)
}

/// Table file: `VRPT`, record count (u32), one u64 byte offset per record,
/// then the `VRP1` records in manifest order.
pub fn write_representation_table(path: &Path, reps: &[VideoRepresentation]) -> Result<()> {
    let header = 8 + 8 * reps.len();
    let blobs: Vec<Vec<u8>> = reps.iter().map(encode_representation).collect();
    let mut out = Vec::with_capacity(header + blobs.iter().map(Vec::len).sum::<usize>());
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&(reps.len() as u32).to_le_bytes());
    let mut offset = header as u64;
    for b in &blobs {
        out.extend_from_slice(&offset.to_le_bytes());
        offset += b.len() as u64;
    }
    for b in blobs {
        out.extend_from_slice(&b);
    }
    io_util::write_file(path, &out)
}

/// Reads a table; `ids` (manifest order) name the records.
pub fn read_representation_table(path: &Path, ids: &[String]) -> Result<Vec<VideoRepresentation>> {
    let bytes = io_util::read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.expect_magic(TABLE_MAGIC)?;
    let count = r.u32()? as usize;
    if count != ids.len() {
        return Err(Error::format(
            path,
            format!(
                "table holds {} records, manifest lists {}",
                count,
                ids.len()
            ),
        ));
    }
    let mut offsets = Vec::with_capacity(count + 1);
    for _ in 0..count {
        offsets.push(
            r.take(8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap()))? as usize,
        );
    }
    offsets.push(bytes.len());
    ids.iter()
        .enumerate()
        .map(|(i, id)| {
            let (a, b) = (offsets[i], offsets[i + 1]);
            if a > b || b > bytes.len() {
                return Err(Error::format(path, format!("bad offset for record {}", i)));
            }
            decode_representation(path, id.clone(), &bytes[a..b])
        })
        .collect()
}
