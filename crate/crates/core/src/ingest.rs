//! Dataset model, frame-feature file formats, subsampling and per-frame
//! normalization.
//!
//! Frames are stored column-major: column `i` is the D-dimensional descriptor
//! of frame `i`. Values are held in double precision; the binary `.vfs`
//! container stores single precision.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io_util::{self, Reader};

pub const FRAME_MAGIC: &[u8; 4] = b"VFS1";

/// One video's frame descriptors, D rows by N columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub video_id: String,
    dims: usize,
    num_frames: usize,
    data: Vec<f64>,
}

impl FrameSequence {
    /// Builds a sequence from column-major data (`dims` values per frame).
    pub fn new(video_id: impl Into<String>, dims: usize, data: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Data("frame dimension must be at least 1".into()));
        }
        if data.is_empty() || data.len() % dims != 0 {
            return Err(Error::Data(format!(
                "{} values do not form a whole number (>= 1) of {}-dim frames",
                data.len(),
                dims
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at frame {}, dim {}",
                pos / dims,
                pos % dims
            )));
        }
        let num_frames = data.len() / dims;
        Ok(FrameSequence {
            video_id: video_id.into(),
            dims,
            num_frames,
            data,
        })
    }

    pub fn from_columns(video_id: impl Into<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let dims = columns.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = columns.iter().position(|c| c.len() != dims) {
            return Err(Error::Data(format!(
                "frame {} has {} values, expected {}",
                bad,
                columns[bad].len(),
                dims
            )));
        }
        Self::new(video_id, dims, columns.concat())
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    /// Column-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dims)
    }

    /// Time series of dimension `k` across all frames.
    pub fn dimension(&self, k: usize) -> Vec<f64> {
        self.frames().map(|f| f[k]).collect()
    }
}

/// Frame-sampling and normalization settings applied at load time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    pub frame_stride: usize,
    pub normalize: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            frame_stride: 8,
            normalize: true,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_stride == 0 {
            return Err(Error::Config("frame_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Subsamples then (optionally) normalizes.
    pub fn apply(&self, seq: &FrameSequence) -> Result<FrameSequence> {
        self.validate()?;
        let sub = subsample_frames(seq, self.frame_stride)?;
        Ok(if self.normalize {
            normalize_frames(&sub)
        } else {
            sub
        })
    }
}

/// Keeps frames 0, stride, 2*stride, ... (0-indexed).
pub fn subsample_frames(seq: &FrameSequence, stride: usize) -> Result<FrameSequence> {
    if stride == 0 {
        return Err(Error::Config("frame stride must be >= 1".into()));
    }
    let data: Vec<f64> = seq.frames().step_by(stride).flatten().copied().collect();
    FrameSequence::new(seq.video_id.clone(), seq.dims, data)
}

/// Scales every frame to unit Euclidean norm. All-zero frames stay zero.
pub fn normalize_frames(seq: &FrameSequence) -> FrameSequence {
    let mut out = seq.clone();
    for frame in out.data.chunks_exact_mut(out.dims) {
        l2_normalize_in_place(frame);
    }
    out
}

pub(crate) fn l2_normalize_in_place(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

// ---------------------------------------------------------------------------
// Feature files

pub fn encode_sequence(seq: &FrameSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + seq.data.len() * 4);
    out.extend_from_slice(FRAME_MAGIC);
    out.extend_from_slice(&(seq.dims as u32).to_le_bytes());
    out.extend_from_slice(&(seq.num_frames as u32).to_le_bytes());
    for v in &seq.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

fn decode_sequence(path: &Path, video_id: String, bytes: &[u8]) -> Result<FrameSequence> {
    let mut r = Reader::new(path, bytes);
    r.expect_magic(FRAME_MAGIC)?;
    let dims = r.u32()?;
    let frames = r.u32()?;
    let count = io_util::checked_len(path, dims, frames)?;
    if r.remaining() != count * 4 {
        return Err(Error::format(
            path,
            format!(
                "header declares D={} N={} ({} values) but payload holds {} bytes",
                dims,
                frames,
                count,
                r.remaining()
            ),
        ));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(r.f32()? as f64);
    }
    FrameSequence::new(video_id, dims as usize, data)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn parse_text_sequence(path: &Path, video_id: String, text: &str) -> Result<FrameSequence> {
    let mut dims = None;
    let mut data = Vec::new();
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::format(path, format!("row {}: invalid number {:?}", row + 1, field))
            })?;
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("row {}: non-finite value", row + 1),
                ));
            }
            data.push(v);
        }
        let arity = data.len() - before;
        match dims {
            None => dims = Some(arity),
            Some(d) if d != arity => {
                return Err(Error::format(
                    path,
                    format!("row {}: {} values, expected {}", row + 1, arity, d),
                ))
            }
            _ => {}
        }
    }
    let dims = dims.ok_or_else(|| Error::format(path, "no frames"))?;
    FrameSequence::new(video_id, dims, data).map_err(|e| Error::format(path, e.to_string()))
}

fn is_text_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    )
}

fn stem_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a `.vfs` binary or `.csv` text feature file. The video id defaults
/// to the file stem.
pub fn read_sequence(path: &Path) -> Result<FrameSequence> {
    let bytes = io_util::read_file(path)?;
    if is_text_path(path) {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::format(path, "text feature file is not UTF-8"))?;
        parse_text_sequence(path, stem_id(path), text)
    } else {
        decode_sequence(path, stem_id(path), &bytes)
    }
}

/// Writes `.csv`/`.txt` paths as text, everything else as binary `.vfs`.
pub fn write_sequence(path: &Path, seq: &FrameSequence) -> Result<()> {
    if is_text_path(path) {
        let mut text = String::new();
        for frame in seq.frames() {
            let row: Vec<String> = frame.iter().map(|v| format!("{:e}", v)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        io_util::write_file(path, text.as_bytes())
    } else {
        io_util::write_file(path, &encode_sequence(seq))
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Dense class id in `0..num_classes`.
    pub label: usize,
    /// Path as written in the manifest, relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub num_classes: usize,
    /// Original label for each dense class id.
    pub class_labels: Vec<i64>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    pub fn entry(&self, video_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }

    /// Restricts to the given ids, keeping manifest order and class ids.
    pub fn subset(&self, ids: &[String]) -> DatasetManifest {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| keep.contains(e.video_id.as_str()))
                .cloned()
                .collect(),
            num_classes: self.num_classes,
            class_labels: self.class_labels.clone(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Renders in manifest text format using the original labels.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{}\n",
                e.video_id,
                self.class_labels[e.label],
                e.path.display()
            ));
        }
        out
    }
}

struct RawEntry {
    line: u64,
    video_id: String,
    label: i64,
    path: PathBuf,
}

fn parse_manifest_records(path: &Path) -> Result<Vec<RawEntry>> {
    let bytes = io_util::read_file(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected `video_id,label,path`, found {} fields", rec.len()),
            ));
        }
        let video_id = rec[0].to_string();
        if video_id.is_empty() {
            return Err(parse_err(line, "empty video_id".into()));
        }
        let label: i64 = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("label {:?} is not an integer", &rec[1])))?;
        if rec[2].is_empty() {
            return Err(parse_err(line, "empty path".into()));
        }
        if let Some(first) = seen.insert(video_id.clone(), line) {
            return Err(parse_err(
                line,
                format!(
                    "duplicate video_id {:?} (lines {} and {})",
                    video_id, first, line
                ),
            ));
        }
        out.push(RawEntry {
            line,
            video_id,
            label,
            path: PathBuf::from(&rec[2]),
        });
    }
    if out.is_empty() {
        return Err(parse_err(0, "manifest has no entries".into()));
    }
    Ok(out)
}

fn check_paths(base_dir: &Path, manifest_path: &Path, raw: &[RawEntry]) -> Result<()> {
    for r in raw {
        let p = base_dir.join(&r.path);
        if !p.is_file() {
            return Err(Error::Data(format!(
                "{}:{}: feature file {} not found",
                manifest_path.display(),
                r.line,
                p.display()
            )));
        }
    }
    Ok(())
}

fn base_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads a manifest and re-indexes its labels densely (ascending order of
/// the original label values).
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let raw = parse_manifest_records(path)?;
    let base_dir = base_dir_of(path);
    check_paths(&base_dir, path, &raw)?;
    let mut dense: BTreeMap<i64, usize> = raw.iter().map(|r| (r.label, 0)).collect();
    for (i, v) in dense.values_mut().enumerate() {
        *v = i;
    }
    let class_labels: Vec<i64> = dense.keys().copied().collect();
    let entries = raw
        .into_iter()
        .map(|r| ManifestEntry {
            label: dense[&r.label],
            video_id: r.video_id,
            path: r.path,
        })
        .collect();
    Ok(DatasetManifest {
        entries,
        num_classes: class_labels.len(),
        class_labels,
        base_dir,
    })
}

/// Loads a manifest whose labels must come from a known class list (for
/// example the classes a model was trained on). No re-indexing beyond
/// looking each label up in `class_labels`.
pub fn load_manifest_with_classes(path: &Path, class_labels: &[i64]) -> Result<DatasetManifest> {
    let raw = parse_manifest_records(path)?;
    let base_dir = base_dir_of(path);
    check_paths(&base_dir, path, &raw)?;
    let mut entries = Vec::with_capacity(raw.len());
    for r in raw {
        let label = class_labels
            .iter()
            .position(|&l| l == r.label)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                msg: format!("label {} is not one of the known classes", r.label),
            })?;
        entries.push(ManifestEntry {
            video_id: r.video_id,
            label,
            path: r.path,
        });
    }
    Ok(DatasetManifest {
        entries,
        num_classes: class_labels.len(),
        class_labels: class_labels.to_vec(),
        base_dir,
    })
}

/// Reads one manifest entry's features; the sequence takes the manifest id.
pub fn load_entry(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<FrameSequence> {
    let mut seq = read_sequence(&manifest.resolve(entry))?;
    seq.video_id = entry.video_id.clone();
    Ok(seq)
}
