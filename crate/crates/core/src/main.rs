use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use vidspec::classifier::{read_model, train_ovr, write_model};
use vidspec::codebook::{read_codebook, write_codebook};
use vidspec::encoding::{read_representation, write_representation, write_representation_table};
use vidspec::ingest::{self, DatasetManifest};
use vidspec::pipeline::{self, ExperimentConfig, Mode, PreparedVideo, RunCodebooks};
use vidspec::report::{emit_report, EvaluationReport, ModeReport, ReportFormat, RunResult};
use vidspec::spectral::write_spectral;
use vidspec::synth::TemporalFixture;
use vidspec::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vidspec",
    version,
    about = "Frame + DFT video features, LLC encoding and linear SVM evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one spectral dump (.vsp) per manifest entry.
    Spectra(Opts),
    /// Fit codebooks on every video of the manifest (pass a training manifest).
    Codebook(Opts),
    /// Encode every video of the manifest with previously fitted codebooks.
    Encode(Opts),
    /// Train a one-vs-rest linear SVM on encoded videos.
    Train(Opts),
    /// Evaluate a trained model on encoded videos and print a report.
    Evaluate(Opts),
    /// Full protocol: repeated stratified splits, codebooks, encoding, training, evaluation.
    Pipeline(Opts),
    /// Write stratified train/test manifests.
    Split(Opts),
    /// Generate a synthetic dataset whose classes differ in temporal frequency.
    Synth(SynthOpts),
}

#[derive(Args, Default)]
struct Opts {
    /// `key = value` file with the same keys as the long flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding codebook_frame.vcb / codebook_dft.vcb.
    #[arg(long)]
    codebooks: Option<PathBuf>,
    /// Directory holding <video_id>.vrp files.
    #[arg(long)]
    encodings: Option<PathBuf>,
    /// Model file (.vsm).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    frame_stride: Option<usize>,
    #[arg(long)]
    target_length: Option<usize>,
    #[arg(long)]
    codebook_size: Option<usize>,
    #[arg(long)]
    llc_knn: Option<usize>,
    #[arg(long)]
    llc_lambda: Option<f64>,
    #[arg(long)]
    frame_weight: Option<f64>,
    #[arg(long)]
    dft_weight: Option<f64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// frame, dft or fused; `pipeline` also accepts a comma-separated list.
    #[arg(long)]
    mode: Option<String>,
    /// table, json or csv.
    #[arg(long)]
    report_format: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SynthOpts {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 16)]
    dims: usize,
    #[arg(long, default_value_t = 40)]
    min_frames: usize,
    #[arg(long, default_value_t = 120)]
    max_frames: usize,
    /// Comma-separated cycles-per-frame, one per class.
    #[arg(long, default_value = "0.06,0.3")]
    frequencies: String,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    offset_min: f64,
    #[arg(long, default_value_t = 1.5)]
    offset_max: f64,
    /// Relative half-width of each class's frequency band.
    #[arg(long, default_value_t = 0.4)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

const KEYS: &[&str] = &[
    "manifest",
    "out",
    "codebooks",
    "encodings",
    "model",
    "frame-stride",
    "target-length",
    "codebook-size",
    "llc-knn",
    "llc-lambda",
    "frame-weight",
    "dft-weight",
    "svm-c",
    "runs",
    "train-fraction",
    "seed",
    "mode",
    "report-format",
    "jobs",
];

/// Flag values layered over an optional config file.
struct Settings {
    opts: Opts,
    file: HashMap<String, String>,
    file_path: PathBuf,
}

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err("expected `key = value`".into()))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(parse_err(format!("unknown key {:?}", key)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

impl Settings {
    fn new(opts: Opts) -> Result<Self> {
        let (file, file_path) = match &opts.config {
            Some(p) => (parse_config_file(p)?, p.clone()),
            None => (HashMap::new(), PathBuf::new()),
        };
        Ok(Settings {
            opts,
            file,
            file_path,
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
                path: self.file_path.clone(),
                line: 0,
                msg: format!("invalid value {:?} for {}", v, key),
            }),
        }
    }

    fn get<T: FromStr + Clone>(&self, flag: &Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v.clone()),
            None => Ok(self.file_value(key)?.unwrap_or(default)),
        }
    }

    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        match flag {
            Some(p) => Ok(p.clone()),
            None => self
                .file_value::<PathBuf>(key)?
                .ok_or_else(|| Error::Config(format!("--{} is required", key))),
        }
    }

    fn modes(&self, default: &str) -> Result<Vec<Mode>> {
        let s = self.get(&self.opts.mode, "mode", default.to_string())?;
        s.split(',').map(Mode::from_str).collect()
    }

    fn single_mode(&self) -> Result<Mode> {
        let modes = self.modes("fused")?;
        match modes.as_slice() {
            [m] => Ok(*m),
            _ => Err(Error::Config("this command takes a single --mode".into())),
        }
    }

    fn report_format(&self) -> Result<ReportFormat> {
        self.get(
            &self.opts.report_format,
            "report-format",
            "table".to_string(),
        )?
        .parse()
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let o = &self.opts;
        let d = ExperimentConfig::default();
        let mut cfg = ExperimentConfig {
            manifest: self.path(&o.manifest, "manifest")?,
            out_dir: self.get(&o.out, "out", d.out_dir.clone())?,
            runs: self.get(&o.runs, "runs", d.runs)?,
            train_fraction: self.get(&o.train_fraction, "train-fraction", d.train_fraction)?,
            seed: self.get(&o.seed, "seed", d.seed)?,
            modes: self.modes("fused")?,
            jobs: self.get(&o.jobs, "jobs", d.jobs)?,
            ..d
        };
        cfg.ingest.frame_stride =
            self.get(&o.frame_stride, "frame-stride", cfg.ingest.frame_stride)?;
        cfg.spectral.target_length = self.get(
            &o.target_length,
            "target-length",
            cfg.spectral.target_length,
        )?;
        cfg.kmeans.k = self.get(&o.codebook_size, "codebook-size", cfg.kmeans.k)?;
        cfg.llc.knn = self.get(&o.llc_knn, "llc-knn", cfg.llc.knn)?;
        cfg.llc.lambda = self.get(&o.llc_lambda, "llc-lambda", cfg.llc.lambda)?;
        cfg.fusion.frame_weight =
            self.get(&o.frame_weight, "frame-weight", cfg.fusion.frame_weight)?;
        cfg.fusion.dft_weight = self.get(&o.dft_weight, "dft-weight", cfg.fusion.dft_weight)?;
        cfg.svm.c = self.get(&o.svm_c, "svm-c", cfg.svm.c)?;
        Ok(cfg)
    }
}

fn load_all(cfg: &ExperimentConfig) -> Result<(DatasetManifest, Vec<PreparedVideo>)> {
    let manifest = ingest::load_manifest(&cfg.manifest)?;
    let videos = pipeline::prepare_videos(&manifest, None, &cfg.ingest, &cfg.spectral, None)?;
    Ok((manifest, videos))
}

fn classes_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".classes");
    PathBuf::from(p)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::Data(format!("{}: {}", parent.display(), e)))?;
    }
    fs::write(path, text).map_err(|e| Error::Data(format!("{}: {}", path.display(), e)))
}

fn read_codebooks(dir: &Path, mode: Mode) -> Result<RunCodebooks> {
    Ok(RunCodebooks {
        frame: mode
            .uses_frames()
            .then(|| read_codebook(&dir.join("codebook_frame.vcb")))
            .transpose()?,
        dft: mode
            .uses_dft()
            .then(|| read_codebook(&dir.join("codebook_dft.vcb")))
            .transpose()?,
    })
}

fn load_encodings(manifest: &DatasetManifest, dir: &Path) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut vecs = Vec::new();
    let mut labels = Vec::new();
    for e in &manifest.entries {
        let rep = read_representation(&dir.join(format!("{}.vrp", e.video_id)))?;
        vecs.push(rep.vector);
        labels.push(e.label);
    }
    Ok((vecs, labels))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectra(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            cfg.ingest.validate()?;
            cfg.spectral.validate()?;
            let out = s.path(&s.opts.out, "out")?;
            let (_, videos) = load_all(&cfg)?;
            for v in &videos {
                write_spectral(&out.join(format!("{}.vsp", v.video_id)), &v.spectra)?;
            }
            eprintln!("wrote {} spectral dumps to {}", videos.len(), out.display());
        }
        Command::Codebook(opts) => {
            let s = Settings::new(opts)?;
            let mut cfg = s.experiment()?;
            cfg.modes = vec![s.single_mode()?];
            cfg.validate()?;
            let out = s.path(&s.opts.out, "out")?;
            let (_, videos) = load_all(&cfg)?;
            let refs: Vec<&PreparedVideo> = videos.iter().collect();
            let books = pipeline::fit_run_codebooks(&refs, &cfg, cfg.seed)?;
            if let Some(cb) = &books.frame {
                write_codebook(&out.join("codebook_frame.vcb"), cb)?;
            }
            if let Some(cb) = &books.dft {
                write_codebook(&out.join("codebook_dft.vcb"), cb)?;
            }
            eprintln!("wrote codebooks to {}", out.display());
        }
        Command::Encode(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            let mode = s.single_mode()?;
            cfg.fusion.validate()?;
            let out = s.path(&s.opts.out, "out")?;
            let books = read_codebooks(&s.path(&s.opts.codebooks, "codebooks")?, mode)?;
            for cb in books.frame.iter().chain(&books.dft) {
                cfg.llc.validate(cb.size())?;
            }
            let (_, videos) = load_all(&cfg)?;
            let reps = videos
                .iter()
                .map(|v| {
                    let blocks =
                        pipeline::pool_video(v, &books, &cfg.llc, cfg.fusion.normalize_dft)?;
                    pipeline::representation(&v.video_id, &blocks, mode, &cfg.fusion)
                })
                .collect::<Result<Vec<_>>>()?;
            for r in &reps {
                write_representation(&out.join(format!("{}.vrp", r.video_id)), r)?;
            }
            write_representation_table(&out.join("representations.vrt"), &reps)?;
            eprintln!("encoded {} videos into {}", reps.len(), out.display());
        }
        Command::Train(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            let model_path = match &s.opts.model {
                Some(p) => p.clone(),
                None => s.path(&s.opts.out, "out")?,
            };
            let manifest = ingest::load_manifest(&cfg.manifest)?;
            let (vecs, labels) =
                load_encodings(&manifest, &s.path(&s.opts.encodings, "encodings")?)?;
            let model = train_ovr(&vecs, &labels, &cfg.svm)?;
            write_model(&model_path, &model)?;
            let classes: String = manifest
                .class_labels
                .iter()
                .map(|l| format!("{}\n", l))
                .collect();
            write_text(&classes_path(&model_path), &classes)?;
            eprintln!(
                "wrote {}-class model to {}",
                model.num_classes(),
                model_path.display()
            );
        }
        Command::Evaluate(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            let mode = s.single_mode()?;
            let model_path = s.path(&s.opts.model, "model")?;
            let model = read_model(&model_path)?;
            let cp = classes_path(&model_path);
            let classes: Vec<i64> = fs::read_to_string(&cp)
                .map_err(|e| Error::Data(format!("{}: {}", cp.display(), e)))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.trim().parse().map_err(|_| {
                        Error::Data(format!("{}: bad class label {:?}", cp.display(), l))
                    })
                })
                .collect::<Result<_>>()?;
            let manifest = ingest::load_manifest_with_classes(&cfg.manifest, &classes)?;
            let (vecs, labels) =
                load_encodings(&manifest, &s.path(&s.opts.encodings, "encodings")?)?;
            let reps: Vec<vidspec::encoding::VideoRepresentation> = vecs
                .into_iter()
                .zip(&manifest.entries)
                .map(|(vector, e)| vidspec::encoding::VideoRepresentation {
                    video_id: e.video_id.clone(),
                    vector,
                })
                .collect();
            let refs: Vec<_> = reps.iter().collect();
            let confusion = pipeline::evaluate_model(&model, &refs, &labels, classes.len())?;
            let report = EvaluationReport {
                class_labels: classes,
                modes: vec![ModeReport::from_runs(
                    mode,
                    vec![RunResult::from_confusion(1, cfg.seed, confusion)],
                )],
                config: cfg.echo(),
                timings: Vec::new(),
            };
            print!("{}", emit_report(&report, s.report_format()?));
        }
        Command::Pipeline(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            let format = s.report_format()?;
            let report = pipeline::run_experiment(&cfg)?;
            write_text(
                &cfg.out_dir.join("report.json"),
                &emit_report(&report, ReportFormat::Json),
            )?;
            write_text(
                &cfg.out_dir.join("report.csv"),
                &emit_report(&report, ReportFormat::Csv),
            )?;
            write_text(
                &cfg.out_dir.join("report.txt"),
                &emit_report(&report, ReportFormat::Table),
            )?;
            let timings = serde_json::to_string_pretty(
                &report
                    .timings
                    .iter()
                    .cloned()
                    .collect::<std::collections::BTreeMap<_, _>>(),
            )
            .expect("serializable");
            write_text(&cfg.out_dir.join("timings.json"), &timings)?;
            print!("{}", emit_report(&report, format));
        }
        Command::Split(opts) => {
            let s = Settings::new(opts)?;
            let cfg = s.experiment()?;
            let out = s.path(&s.opts.out, "out")?;
            let manifest = ingest::load_manifest(&cfg.manifest)?;
            let (train, test) = pipeline::split_dataset(&manifest, cfg.train_fraction, cfg.seed)?;
            let base = fs::canonicalize(&manifest.base_dir)
                .map_err(|e| Error::Data(format!("{}: {}", manifest.base_dir.display(), e)))?;
            for (name, ids) in [("train.txt", train), ("test.txt", test)] {
                let mut sub = manifest.subset(&ids);
                for e in &mut sub.entries {
                    e.path = base.join(&e.path);
                }
                write_text(&out.join(name), &sub.to_text())?;
            }
            eprintln!("wrote train.txt and test.txt to {}", out.display());
        }
        Command::Synth(o) => {
            let class_frequencies = o
                .frequencies
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad frequency {:?}", f)))
                })
                .collect::<Result<Vec<_>>>()?;
            if o.min_frames == 0 || o.min_frames > o.max_frames || o.dims == 0 {
                return Err(Error::Config(
                    "need 1 <= min-frames <= max-frames and dims >= 1".into(),
                ));
            }
            let fx = TemporalFixture {
                videos_per_class: o.videos_per_class,
                dims: o.dims,
                frames: (o.min_frames, o.max_frames),
                class_frequencies,
                noise: o.noise,
                offset_range: (o.offset_min, o.offset_max),
                jitter: o.jitter,
                seed: o.seed,
                ..Default::default()
            };
            let path = fx.write(&o.out)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
