//! End-to-end protocol: stratified random splits, per-run codebooks,
//! encoding, one-vs-rest training and evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classifier::{predict, train_ovr, SvmConfig, SvmModel};
use crate::codebook::{kmeans_fit, Codebook, DescriptorPool, KMeansConfig, SourceTag};
use crate::encoding::{
    normalized_bins, pool_frames, pool_spectra, weight_block, FusionConfig, LlcConfig,
    VideoRepresentation,
};
use crate::error::{Error, Result};
use crate::ingest::{self, DatasetManifest, FrameSequence, IngestConfig, ManifestEntry};
use crate::io_util;
use crate::report::{EvaluationReport, ModeReport, RunResult};
use crate::spectral::{
    encode_spectral, read_spectral, spectral_features, SpectralConfig, SpectralSequence,
};

/// Which branches feed the classifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Frame,
    Dft,
    Fused,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Frame, Mode::Dft, Mode::Fused];

    pub fn uses_frames(self) -> bool {
        matches!(self, Mode::Frame | Mode::Fused)
    }

    pub fn uses_dft(self) -> bool {
        matches!(self, Mode::Dft | Mode::Fused)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Frame => "frame",
            Mode::Dft => "dft",
            Mode::Fused => "fused",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "frame" => Ok(Mode::Frame),
            "dft" => Ok(Mode::Dft),
            "fused" => Ok(Mode::Fused),
            other => Err(Error::Config(format!(
                "unknown mode {:?} (expected frame, dft or fused)",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub ingest: IngestConfig,
    pub spectral: SpectralConfig,
    /// Codebook size per branch, iteration cap, tolerance and pool budget;
    /// the seed field is ignored (derived per run from `seed`).
    pub kmeans: KMeansConfig,
    pub llc: LlcConfig,
    pub fusion: FusionConfig,
    pub svm: SvmConfig,
    pub runs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub modes: Vec<Mode>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    pub jobs: usize,
    /// Reuse and store spectra under `out_dir/cache`.
    pub cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            ingest: IngestConfig::default(),
            spectral: SpectralConfig::default(),
            kmeans: KMeansConfig::default(),
            llc: LlcConfig::default(),
            fusion: FusionConfig::default(),
            svm: SvmConfig::default(),
            runs: 10,
            train_fraction: 2.0 / 3.0,
            seed: 0,
            modes: vec![Mode::Fused],
            jobs: 0,
            cache: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.spectral.validate()?;
        self.kmeans.validate()?;
        self.llc.validate(self.kmeans.k)?;
        self.fusion.validate()?;
        self.svm.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        Ok(())
    }

    /// Settings that determine the results, in a stable order. Paths to
    /// outputs and thread counts are left out.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("manifest", self.manifest.display().to_string());
        put("frame_stride", self.ingest.frame_stride.to_string());
        put("normalize_frames", self.ingest.normalize.to_string());
        put("target_length", self.spectral.target_length.to_string());
        put("codebook_size", self.kmeans.k.to_string());
        put(
            "kmeans_max_iterations",
            self.kmeans.max_iterations.to_string(),
        );
        put("kmeans_tolerance", self.kmeans.tolerance.to_string());
        put("kmeans_pool_budget", self.kmeans.pool_budget.to_string());
        put("llc_knn", self.llc.knn.to_string());
        put("llc_lambda", self.llc.lambda.to_string());
        put("frame_weight", self.fusion.frame_weight.to_string());
        put("dft_weight", self.fusion.dft_weight.to_string());
        put("normalize_dft", self.fusion.normalize_dft.to_string());
        put("svm_c", self.svm.c.to_string());
        put("svm_solver", format!("{:?}", self.svm.solver));
        put("svm_bias_scale", self.svm.bias_scale.to_string());
        put("svm_max_epochs", self.svm.max_epochs.to_string());
        put("svm_tolerance", self.svm.tolerance.to_string());
        put("runs", self.runs.to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("seed", self.seed.to_string());
        put(
            "modes",
            self.modes
                .iter()
                .map(Mode::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        m
    }
}

/// Stratified split: within each class a seeded shuffle puts
/// `max(1, floor(n * train_fraction))` videos in train and the rest in test.
/// Both lists follow manifest order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must be in (0, 1)".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); manifest.num_classes];
    for (i, e) in manifest.entries.iter().enumerate() {
        by_class[e.label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_train = vec![false; manifest.entries.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < 2 {
            return Err(Error::Data(format!(
                "class {} has {} video(s); at least 2 are needed to split",
                manifest.class_labels[class],
                members.len()
            )));
        }
        let n_train = ((members.len() as f64 * train_fraction).floor() as usize).max(1);
        members.shuffle(&mut rng);
        for &i in &members[..n_train] {
            is_train[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (e, t) in manifest.entries.iter().zip(is_train) {
        if t {
            train.push(e.video_id.clone());
        } else {
            test.push(e.video_id.clone());
        }
    }
    Ok((train, test))
}

/// One video after ingestion, with its spectra.
#[derive(Debug, Clone)]
pub struct PreparedVideo {
    pub video_id: String,
    pub label: usize,
    pub frames: FrameSequence,
    pub spectra: SpectralSequence,
}

fn cache_key(raw: &[u8], ingest: &IngestConfig, spectral: &SpectralConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"vidspec-spectra-v1");
    h.update((ingest.frame_stride as u64).to_le_bytes());
    h.update([ingest.normalize as u8]);
    h.update((spectral.target_length as u64).to_le_bytes());
    h.update(raw);
    h.finalize()[..8]
        .iter()
        .map(|b| format!("{:02x}", b))
        .collect()
}

/// Loads, subsamples, normalizes and transforms one manifest entry.
///
/// Spectra are rounded to single precision whether computed or read from
/// `cache_dir`, so cached and uncached runs agree bit for bit.
pub fn prepare_video(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    ingest_cfg: &IngestConfig,
    spectral_cfg: &SpectralConfig,
    cache_dir: Option<&Path>,
) -> Result<PreparedVideo> {
    let raw_frames = ingest::load_entry(manifest, entry)?;
    let frames = ingest_cfg.apply(&raw_frames)?;
    let cached = cache_dir.map(|dir| {
        let raw = ingest::encode_sequence(&raw_frames);
        dir.join(format!(
            "{}-{}.vsp",
            sanitize(&entry.video_id),
            cache_key(&raw, ingest_cfg, spectral_cfg)
        ))
    });
    let spectra = match &cached {
        Some(p) if p.is_file() => read_spectral(p)?,
        _ => {
            let s = spectral_features(&frames, spectral_cfg)?.quantized();
            if let Some(p) = &cached {
                io_util::write_file(p, &encode_spectral(&s))?;
            }
            s
        }
    };
    let mut spectra = spectra;
    spectra.video_id = entry.video_id.clone();
    Ok(PreparedVideo {
        video_id: entry.video_id.clone(),
        label: entry.label,
        frames,
        spectra,
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Prepares the listed entries (all when `ids` is `None`), in manifest order.
pub fn prepare_videos(
    manifest: &DatasetManifest,
    ids: Option<&[String]>,
    ingest_cfg: &IngestConfig,
    spectral_cfg: &SpectralConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<PreparedVideo>> {
    let selected: Vec<&ManifestEntry> = match ids {
        None => manifest.entries.iter().collect(),
        Some(ids) => {
            let wanted: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
            let sel: Vec<&ManifestEntry> = manifest
                .entries
                .iter()
                .filter(|e| wanted.contains(e.video_id.as_str()))
                .collect();
            if sel.len() != wanted.len() {
                return Err(Error::Data(
                    "split lists video ids missing from the manifest".into(),
                ));
            }
            sel
        }
    };
    selected
        .par_iter()
        .map(|e| prepare_video(manifest, e, ingest_cfg, spectral_cfg, cache_dir))
        .collect()
}

pub fn frame_seed(run_seed: u64) -> u64 {
    run_seed.wrapping_mul(2)
}

pub fn dft_seed(run_seed: u64) -> u64 {
    run_seed.wrapping_mul(2).wrapping_add(1)
}

/// Frame-branch codebook over every frame of the given (training) videos.
pub fn fit_frame_codebook(videos: &[&PreparedVideo], kmeans: &KMeansConfig) -> Result<Codebook> {
    let dims = videos
        .first()
        .ok_or_else(|| Error::Data("no training videos".into()))?
        .frames
        .dims();
    let pool = DescriptorPool::collect(
        dims,
        videos.iter().flat_map(|v| v.frames.frames()),
        kmeans.pool_budget,
        kmeans.seed,
    )?;
    Ok(kmeans_fit(&pool, kmeans, SourceTag::FrameBranch)?.codebook)
}

/// DFT-branch codebook over every spectral bin of the given videos.
pub fn fit_dft_codebook(
    videos: &[&PreparedVideo],
    kmeans: &KMeansConfig,
    normalize: bool,
) -> Result<Codebook> {
    let dims = videos
        .first()
        .ok_or_else(|| Error::Data("no training videos".into()))?
        .spectra
        .dims();
    let pool = if normalize {
        let bins: Vec<Vec<f64>> = videos
            .iter()
            .flat_map(|v| normalized_bins(&v.spectra))
            .collect();
        DescriptorPool::collect(
            dims,
            bins.iter().map(Vec::as_slice),
            kmeans.pool_budget,
            kmeans.seed,
        )?
    } else {
        DescriptorPool::collect(
            dims,
            videos.iter().flat_map(|v| v.spectra.bins()),
            kmeans.pool_budget,
            kmeans.seed,
        )?
    };
    Ok(kmeans_fit(&pool, kmeans, SourceTag::DftBranch)?.codebook)
}

/// Codebooks for one run, learned from training videos only.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCodebooks {
    pub frame: Option<Codebook>,
    pub dft: Option<Codebook>,
}

pub fn fit_run_codebooks(
    train: &[&PreparedVideo],
    cfg: &ExperimentConfig,
    run_seed: u64,
) -> Result<RunCodebooks> {
    let need_frame = cfg.modes.iter().any(|m| m.uses_frames());
    let need_dft = cfg.modes.iter().any(|m| m.uses_dft());
    let frame = if need_frame {
        let km = KMeansConfig {
            seed: frame_seed(run_seed),
            ..cfg.kmeans
        };
        Some(fit_frame_codebook(train, &km)?)
    } else {
        None
    };
    let dft = if need_dft {
        let km = KMeansConfig {
            seed: dft_seed(run_seed),
            ..cfg.kmeans
        };
        Some(fit_dft_codebook(train, &km, cfg.fusion.normalize_dft)?)
    } else {
        None
    };
    Ok(RunCodebooks { frame, dft })
}

/// Loads only the training split from disk and fits that run's codebooks.
pub fn fit_codebooks_from_disk(
    manifest: &DatasetManifest,
    train_ids: &[String],
    cfg: &ExperimentConfig,
    run_seed: u64,
) -> Result<RunCodebooks> {
    let train = prepare_videos(manifest, Some(train_ids), &cfg.ingest, &cfg.spectral, None)?;
    let refs: Vec<&PreparedVideo> = train.iter().collect();
    fit_run_codebooks(&refs, cfg, run_seed)
}

/// Unnormalized pooled blocks of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledBlocks {
    pub frame: Option<Vec<f64>>,
    pub dft: Option<Vec<f64>>,
}

pub fn pool_video(
    video: &PreparedVideo,
    books: &RunCodebooks,
    llc: &LlcConfig,
    normalize_dft: bool,
) -> Result<PooledBlocks> {
    let frame = books
        .frame
        .as_ref()
        .map(|cb| pool_frames(&video.frames, cb, llc))
        .transpose()?;
    let dft = books
        .dft
        .as_ref()
        .map(|cb| pool_spectra(&video.spectra, cb, llc, normalize_dft))
        .transpose()?;
    Ok(PooledBlocks { frame, dft })
}

/// Final classifier input for `mode`. Single-branch modes normalize their
/// block to unit norm; fused mode uses the fusion weights.
pub fn representation(
    video_id: &str,
    blocks: &PooledBlocks,
    mode: Mode,
    fusion: &FusionConfig,
) -> Result<VideoRepresentation> {
    let missing = |b: &str| Error::Data(format!("{} block was not computed", b));
    let vector = match mode {
        Mode::Frame => {
            let mut v = blocks.frame.clone().ok_or_else(|| missing("frame"))?;
            weight_block(&mut v, 1.0);
            v
        }
        Mode::Dft => {
            let mut v = blocks.dft.clone().ok_or_else(|| missing("dft"))?;
            weight_block(&mut v, 1.0);
            v
        }
        Mode::Fused => {
            let mut f = blocks.frame.clone().ok_or_else(|| missing("frame"))?;
            let mut d = blocks.dft.clone().ok_or_else(|| missing("dft"))?;
            weight_block(&mut f, fusion.frame_weight);
            weight_block(&mut d, fusion.dft_weight);
            f.extend_from_slice(&d);
            f
        }
    };
    Ok(VideoRepresentation {
        video_id: video_id.to_string(),
        vector,
    })
}

/// Confusion matrix (rows true class, columns predicted) of `model` on the
/// given representations.
pub fn evaluate_model(
    model: &SvmModel,
    reps: &[&VideoRepresentation],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (rep, &label) in reps.iter().zip(labels) {
        let (pred, _) = predict(model, &rep.vector)?;
        if pred >= num_classes || label >= num_classes {
            return Err(Error::Data(format!(
                "class id out of range (true {}, predicted {}, {} classes)",
                label, pred, num_classes
            )));
        }
        confusion[label][pred] += 1;
    }
    Ok(confusion)
}

/// Wall-clock seconds per stage, summed over runs.
#[derive(Debug, Default, Clone)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    fn add(&mut self, stage: &str, since: Instant) {
        let secs = since.elapsed().as_secs_f64();
        match self.0.iter_mut().find(|(s, _)| s == stage) {
            Some(entry) => entry.1 += secs,
            None => self.0.push((stage.to_string(), secs)),
        }
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))?;
    Ok(pool.install(f))
}

/// Runs the full protocol and writes artifacts under `cfg.out_dir`.
///
/// Run `r` (1-based) uses seed `cfg.seed + r` for its split and codebooks.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    with_pool(cfg.jobs, || run_experiment_inner(cfg))?
}

fn run_experiment_inner(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let mut timings = Timings::default();
    let manifest = ingest::load_manifest(&cfg.manifest)?;

    let t = Instant::now();
    let cache_dir = cfg.cache.then(|| cfg.out_dir.join("cache").join("spectra"));
    let videos = prepare_videos(
        &manifest,
        None,
        &cfg.ingest,
        &cfg.spectral,
        cache_dir.as_deref(),
    )?;
    timings.add("ingest+spectra", t);

    let mut modes = cfg.modes.clone();
    modes.sort();
    modes.dedup();
    let mut per_mode: BTreeMap<Mode, Vec<RunResult>> = BTreeMap::new();

    for run in 1..=cfg.runs {
        let run_seed = cfg.seed.wrapping_add(run as u64);
        let fail = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("run {}: {}", run, m)),
            Error::Data(m) => Error::Data(format!("run {}: {}", run, m)),
            other => other,
        };
        let (train_ids, _) =
            split_dataset(&manifest, cfg.train_fraction, run_seed).map_err(fail)?;
        let train_set: std::collections::HashSet<&str> =
            train_ids.iter().map(String::as_str).collect();
        let train: Vec<&PreparedVideo> = videos
            .iter()
            .filter(|v| train_set.contains(v.video_id.as_str()))
            .collect();
        let test: Vec<&PreparedVideo> = videos
            .iter()
            .filter(|v| !train_set.contains(v.video_id.as_str()))
            .collect();

        let t = Instant::now();
        let books = fit_run_codebooks(&train, cfg, run_seed).map_err(fail)?;
        timings.add("codebooks", t);
        let run_dir = cfg.out_dir.join(format!("run_{:02}", run));
        if let Some(cb) = &books.frame {
            crate::codebook::write_codebook(&run_dir.join("codebook_frame.vcb"), cb)?;
        }
        if let Some(cb) = &books.dft {
            crate::codebook::write_codebook(&run_dir.join("codebook_dft.vcb"), cb)?;
        }

        let t = Instant::now();
        let pooled: Vec<PooledBlocks> = videos
            .par_iter()
            .map(|v| pool_video(v, &books, &cfg.llc, cfg.fusion.normalize_dft))
            .collect::<Result<_>>()
            .map_err(fail)?;
        timings.add("encode", t);

        for &mode in &modes {
            let reps: Vec<VideoRepresentation> = videos
                .iter()
                .zip(&pooled)
                .map(|(v, b)| representation(&v.video_id, b, mode, &cfg.fusion))
                .collect::<Result<_>>()?;
            let pick = |set: &[&PreparedVideo]| -> (Vec<&VideoRepresentation>, Vec<usize>) {
                let ids: std::collections::HashSet<&str> =
                    set.iter().map(|v| v.video_id.as_str()).collect();
                videos
                    .iter()
                    .zip(&reps)
                    .filter(|(v, _)| ids.contains(v.video_id.as_str()))
                    .map(|(v, r)| (r, v.label))
                    .unzip()
            };
            let (train_reps, train_labels) = pick(&train);
            let (test_reps, test_labels) = pick(&test);

            let t = Instant::now();
            let train_vecs: Vec<&[f64]> = train_reps.iter().map(|r| r.vector.as_slice()).collect();
            let model = train_ovr(&train_vecs, &train_labels, &cfg.svm).map_err(fail)?;
            crate::classifier::write_model(&run_dir.join(format!("model_{}.vsm", mode)), &model)?;
            timings.add("train", t);

            let t = Instant::now();
            let confusion = evaluate_model(&model, &test_reps, &test_labels, manifest.num_classes)?;
            timings.add("evaluate", t);
            per_mode
                .entry(mode)
                .or_default()
                .push(RunResult::from_confusion(run, run_seed, confusion));
        }
    }

    let modes = per_mode
        .into_iter()
        .map(|(mode, runs)| ModeReport::from_runs(mode, runs))
        .collect();
    let report = EvaluationReport {
        class_labels: manifest.class_labels.clone(),
        modes,
        config: cfg.echo(),
        timings: timings.0,
    };
    Ok(report)
}
