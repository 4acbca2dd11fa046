//! k-means codebooks and exhaustive nearest-codeword search.

use std::cmp::Ordering;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_util::{self, Reader};
use crate::linalg::squared_distance;

pub const CODEBOOK_MAGIC: &[u8; 4] = b"VCB1";

/// Which descriptor family a codebook was learned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    FrameBranch,
    DftBranch,
}

impl SourceTag {
    fn to_byte(self) -> u8 {
        match self {
            SourceTag::FrameBranch => 0,
            SourceTag::DftBranch => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SourceTag::FrameBranch),
            1 => Some(SourceTag::DftBranch),
            _ => None,
        }
    }
}

/// K codewords of dimension D, stored codeword-major. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    source_tag: SourceTag,
    dims: usize,
    codewords: Vec<f64>,
}

impl Codebook {
    pub fn new(source_tag: SourceTag, dims: usize, codewords: Vec<f64>) -> Result<Self> {
        if dims == 0 || codewords.len() % dims != 0 {
            return Err(Error::Data(format!(
                "{} values do not form {}-dim codewords",
                codewords.len(),
                dims
            )));
        }
        if codewords.len() / dims < 2 {
            return Err(Error::Data("a codebook needs at least 2 codewords".into()));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("codewords must be finite".into()));
        }
        Ok(Codebook {
            source_tag,
            dims,
            codewords,
        })
    }

    pub fn source_tag(&self) -> SourceTag {
        self.source_tag
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn size(&self) -> usize {
        self.codewords.len() / self.dims
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.codewords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn codewords(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.codewords.chunks_exact(self.dims)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.codewords
    }

    /// Squared distance to every codeword.
    pub fn squared_distances(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                found: query.len(),
            });
        }
        Ok(self
            .codewords()
            .map(|c| squared_distance(c, query))
            .collect())
    }
}

fn by_distance(d: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))
}

/// Indices of the `k` nearest codewords, nearest first; equal distances are
/// ordered by index.
pub fn assign_nearest(codebook: &Codebook, query: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > codebook.size() {
        return Err(Error::Config(format!(
            "k = {} must be in 1..={}",
            k,
            codebook.size()
        )));
    }
    let d = codebook.squared_distances(query)?;
    let mut idx: Vec<usize> = (0..d.len()).collect();
    let cmp = by_distance(&d);
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tolerance: f64,
    pub seed: u64,
    /// Descriptor pools larger than this are uniformly subsampled.
    pub pool_budget: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 1024,
            max_iterations: 100,
            tolerance: 1e-6,
            seed: 0,
            pool_budget: 200_000,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("codebook size must be >= 2".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be >= 0".into()));
        }
        if self.pool_budget < self.k {
            return Err(Error::Config("pool_budget must be >= codebook size".into()));
        }
        Ok(())
    }
}

/// Flat set of D-dimensional descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorPool {
    pub dims: usize,
    pub data: Vec<f64>,
}

impl DescriptorPool {
    pub fn len(&self) -> usize {
        if self.dims == 0 {
            0
        } else {
            self.data.len() / self.dims
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Collects descriptors in iteration order, keeping a seeded uniform
    /// subsample (order preserved) when there are more than `budget`.
    pub fn collect<'a>(
        dims: usize,
        descriptors: impl IntoIterator<Item = &'a [f64]>,
        budget: usize,
        seed: u64,
    ) -> Result<Self> {
        let all: Vec<&[f64]> = descriptors.into_iter().collect();
        if let Some(bad) = all.iter().find(|d| d.len() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: bad.len(),
            });
        }
        let chosen: Vec<&[f64]> = if all.len() > budget {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = index::sample(&mut rng, all.len(), budget).into_vec();
            keep.sort_unstable();
            keep.into_iter().map(|i| all[i]).collect()
        } else {
            all
        };
        Ok(DescriptorPool {
            dims,
            data: chosen.concat(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Sum of squared distances to the nearest codeword: the initial value,
    /// then one entry per accepted Lloyd iteration. Non-increasing.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(centroids: &[f64], dims: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dims).enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(pool: &DescriptorPool, centroids: &[f64]) -> (Vec<(usize, f64)>, f64) {
    let dims = pool.dims;
    let assignment: Vec<(usize, f64)> = pool
        .data
        .par_chunks_exact(dims)
        .map(|x| nearest(centroids, dims, x))
        .collect();
    // Sequential sum keeps the objective independent of thread scheduling.
    let objective = assignment.iter().map(|a| a.1).sum();
    (assignment, objective)
}

fn kmeans_pp(pool: &DescriptorPool, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = pool.len();
    let dims = pool.dims;
    let first = rng.gen_range(0..n);
    let mut centroids = pool.get(first).to_vec();
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| squared_distance(pool.get(i), pool.get(first)))
        .collect();
    for chosen in 1..k {
        let total: f64 = min_d.iter().sum();
        if total <= 0.0 {
            return Err(Error::Data(format!(
                "need at least {} distinct descriptors, found {}",
                k, chosen
            )));
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in min_d.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        let c = pool.get(pick);
        centroids.extend_from_slice(c);
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = squared_distance(pool.get(i), c);
            if nd < *d {
                *d = nd;
            }
        }
    }
    debug_assert_eq!(centroids.len(), k * dims);
    Ok(centroids)
}

/// Lloyd iterations from a k-means++ start.
///
/// Empty clusters are re-seeded with the point farthest from its updated
/// centroid. An iteration that would raise the objective is discarded and
/// ends the fit, so the recorded trace is non-increasing.
pub fn kmeans_fit(pool: &DescriptorPool, cfg: &KMeansConfig, tag: SourceTag) -> Result<KMeansFit> {
    cfg.validate()?;
    let dims = pool.dims;
    if dims == 0 || pool.len() < cfg.k {
        return Err(Error::Data(format!(
            "need at least {} distinct descriptors, found {}",
            cfg.k,
            pool.len()
        )));
    }
    if pool.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("descriptors must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp(pool, cfg.k, &mut rng)?;
    let (mut assignment, mut objective) = assign(pool, &centroids);
    let mut trace = vec![objective];
    let mut converged = objective == 0.0;

    for _ in 0..cfg.max_iterations {
        if converged {
            break;
        }
        let mut sums = vec![0.0; cfg.k * dims];
        let mut counts = vec![0usize; cfg.k];
        for (i, &(c, _)) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * dims..(c + 1) * dims].iter_mut().zip(pool.get(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        for c in 0..cfg.k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (dst, s) in next[c * dims..(c + 1) * dims]
                    .iter_mut()
                    .zip(&sums[c * dims..(c + 1) * dims])
                {
                    *dst = s / inv;
                }
            }
        }
        let empty: Vec<usize> = (0..cfg.k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut dist: Vec<(usize, f64)> = assignment
                .iter()
                .enumerate()
                .map(|(i, &(c, _))| {
                    (
                        i,
                        squared_distance(pool.get(i), &next[c * dims..(c + 1) * dims]),
                    )
                })
                .collect();
            dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (c, (i, _)) in empty.into_iter().zip(dist) {
                next[c * dims..(c + 1) * dims].copy_from_slice(pool.get(i));
            }
        }
        let (next_assignment, next_objective) = assign(pool, &next);
        if next_objective > objective {
            converged = true;
            break;
        }
        let decrease = objective - next_objective;
        centroids = next;
        assignment = next_assignment;
        trace.push(next_objective);
        converged = decrease <= cfg.tolerance * objective;
        objective = next_objective;
    }

    Ok(KMeansFit {
        codebook: Codebook::new(tag, dims, centroids)?,
        objective_trace: trace,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Codebook file

pub fn encode_codebook(cb: &Codebook) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + cb.codewords.len() * 4);
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.push(cb.source_tag.to_byte());
    out.extend_from_slice(&(cb.size() as u32).to_le_bytes());
    out.extend_from_slice(&(cb.dims as u32).to_le_bytes());
    for v in &cb.codewords {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_codebook(path: &Path, cb: &Codebook) -> Result<()> {
    io_util::write_file(path, &encode_codebook(cb))
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let bytes = io_util::read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.expect_magic(CODEBOOK_MAGIC)?;
    let tag = r.u8()?;
    let tag = SourceTag::from_byte(tag)
        .ok_or_else(|| Error::format(path, format!("unknown source tag {}", tag)))?;
    let k = r.u32()?;
    let dims = r.u32()?;
    let count = io_util::checked_len(path, k, dims)?;
    if r.remaining() != count * 4 {
        return Err(Error::format(
            path,
            format!(
                "header declares K={} D={} but payload holds {} bytes",
                k,
                dims,
                r.remaining()
            ),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f32()? as f64);
    }
    Codebook::new(tag, dims as usize, data).map_err(|e| Error::format(path, e.to_string()))
}
