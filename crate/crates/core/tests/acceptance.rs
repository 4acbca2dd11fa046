//! End-to-end acceptance checks. Every test prints a single
//! `[acceptance] <id> PASS|FAIL ...` line before asserting.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidspec::classifier::{primal_objective, svm_train_binary, SvmConfig};
use vidspec::codebook::{
    encode_codebook, kmeans_fit, Codebook, DescriptorPool, KMeansConfig, SourceTag,
};
use vidspec::encoding::{llc_encode, LlcConfig};
use vidspec::ingest::load_manifest;
use vidspec::pipeline::{
    fit_codebooks_from_disk, fit_run_codebooks, pool_video, prepare_videos, representation,
    run_experiment, split_dataset, ExperimentConfig, Mode, PreparedVideo,
};
use vidspec::report::{emit_report, ReportFormat};
use vidspec::spectral::dft_magnitude;
use vidspec::spectral::resample::resample_spectrum;
use vidspec::synth::TemporalFixture;

fn verdict(id: &str, ok: bool, detail: String) {
    println!(
        "[acceptance] {} {} {}",
        id,
        if ok { "PASS" } else { "FAIL" },
        detail
    );
    assert!(ok, "{} failed: {}", id, detail);
}

fn naive_dft_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Largest deviation from the oracle, relative to the oracle's peak.
fn rel_error(got: &[f64], want: &[f64]) -> f64 {
    let scale = want
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
        / scale
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn c01_dft_oracle_suite() {
    let start = Instant::now();
    let mut sizes: Vec<usize> = (1..=64).collect();
    sizes.extend([100, 127, 128, 500, 1024]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut worst_parseval, mut worst_sym) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let n = if case < sizes.len() {
            sizes[case]
        } else {
            sizes[rng.gen_range(0..sizes.len())]
        };
        let x = random_signal(&mut rng, n);
        let got = dft_magnitude(&x).unwrap();
        let want = naive_dft_magnitude(&x);
        assert_eq!(got.len(), n);
        worst = worst.max(rel_error(&got, &want));
        let energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * n as f64;
        let spec: f64 = got.iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max((spec - energy).abs() / energy.max(f64::MIN_POSITIVE));
        let peak = got
            .iter()
            .fold(0.0f64, |m, v| m.max(*v))
            .max(f64::MIN_POSITIVE);
        for k in 1..n {
            worst_sym = worst_sym.max((got[k] - got[n - k]).abs() / peak);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "c01-dft-oracle",
        worst <= 1e-9 && worst_parseval <= 1e-9 && worst_sym <= 1e-9 && secs < 10.0,
        format!(
            "200 signals: max rel err {:.2e}, parseval {:.2e}, symmetry {:.2e} (tol 1e-9), {:.2}s (< 10s)",
            worst, worst_parseval, worst_sym, secs
        ),
    );
}

#[test]
fn c02_fft_non_power_of_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in [3, 5, 6, 7, 12, 97, 360] {
        for _ in 0..5 {
            let x = random_signal(&mut rng, n);
            worst = worst.max(rel_error(
                &dft_magnitude(&x).unwrap(),
                &naive_dft_magnitude(&x),
            ));
        }
    }
    verdict(
        "c02-fft-lengths",
        worst <= 1e-9,
        format!(
            "lengths 3,5,6,7,12,97,360: max rel err {:.2e} (tol 1e-9)",
            worst
        ),
    );
}

#[test]
fn c03_interpolation_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut worst_identity = 0.0f64;
    for n in 1..=40usize {
        for l in [2usize, 3, 7, 16, 33, 64, 100, 500] {
            let c = rng.gen_range(0.0..10.0);
            let (a, b) = (rng.gen_range(0.0..5.0), rng.gen_range(-1.0..1.0));
            let constant = vec![c; n];
            let line: Vec<f64> = (0..n).map(|j| a + b * j as f64).collect();
            for v in resample_spectrum(&constant, l).unwrap() {
                worst = worst.max((v - c).abs());
            }
            if n >= 2 {
                for (i, v) in resample_spectrum(&line, l).unwrap().iter().enumerate() {
                    let want = a + b * (n - 1) as f64 * i as f64 / (l - 1) as f64;
                    worst = worst.max((v - want).abs() / want.abs().max(1.0));
                }
            }
        }
        if n >= 2 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
            let y = resample_spectrum(&x, n).unwrap();
            worst_identity = worst_identity.max(
                x.iter()
                    .zip(&y)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max),
            );
        }
    }
    verdict(
        "c03-interpolation",
        worst <= 1e-12 && worst_identity <= 1e-12,
        format!(
            "constant/linear max err {:.2e}, L = N identity max err {:.2e} (tol 1e-12)",
            worst, worst_identity
        ),
    );
}

/// Gaussian elimination with partial pivoting on a dense square system.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / a[row][row];
    }
    x
}

/// Minimizes `|q - sum c_i b_i|^2 + lambda |c|^2` subject to `sum c_i = 1`
/// over the given codewords by solving the KKT system in original coordinates.
fn llc_kkt_oracle(basis: &[&[f64]], q: &[f64], lambda: f64) -> Vec<f64> {
    let k = basis.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    let mut rhs = vec![0.0; k + 1];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = 2.0 * dot(basis[i], basis[j]) + if i == j { 2.0 * lambda } else { 0.0 };
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
        rhs[i] = 2.0 * dot(basis[i], q);
    }
    rhs[k] = 1.0;
    gauss_solve(a, rhs)[..k].to_vec()
}

#[test]
fn c04_llc_kkt_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut worst_sum) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let knn = [2, 3, 5][case % 3];
        let (k, d) = (rng.gen_range(8..40), rng.gen_range(2..12));
        let words: Vec<f64> = (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cb = Codebook::new(SourceTag::FrameBranch, d, words).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.2..1.2)).collect();
        let cfg = LlcConfig { knn, lambda: 1e-4 };
        let code = llc_encode(&cb, &q, &cfg).unwrap();

        let mut order: Vec<(f64, usize)> = (0..k)
            .map(|i| {
                (
                    cb.codeword(i)
                        .iter()
                        .zip(&q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>(),
                    i,
                )
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = order[..knn].iter().map(|p| p.1).collect();
        chosen.sort_unstable();
        let basis: Vec<&[f64]> = chosen.iter().map(|&i| cb.codeword(i)).collect();
        let want = llc_kkt_oracle(&basis, &q, cfg.lambda);

        let dense = code.to_dense(k);
        let mut want_dense = vec![0.0; k];
        for (&i, &c) in chosen.iter().zip(&want) {
            want_dense[i] = c;
        }
        worst = worst.max(
            dense
                .iter()
                .zip(&want_dense)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
        worst_sum = worst_sum.max((code.coefficients.iter().sum::<f64>() - 1.0).abs());
    }
    verdict(
        "c04-llc-kkt",
        worst <= 1e-6 && worst_sum <= 1e-9,
        format!(
            "100 instances: max coef err {:.2e} (tol 1e-6), max |sum - 1| {:.2e} (tol 1e-9)",
            worst, worst_sum
        ),
    );
}

#[test]
fn c05_kmeans_monotone_and_perfect_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut iterations = 0;
    for run in 0..20u64 {
        let (n, d, k) = (
            rng.gen_range(50..300),
            rng.gen_range(2..8),
            rng.gen_range(2..12),
        );
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pool = DescriptorPool { dims: d, data };
        let cfg = KMeansConfig {
            k,
            seed: run,
            ..Default::default()
        };
        let fit = kmeans_fit(&pool, &cfg, SourceTag::FrameBranch).unwrap();
        iterations += fit.objective_trace.len() - 1;
        violations += fit
            .objective_trace
            .windows(2)
            .filter(|w| w[1] > w[0])
            .count();
    }
    let k = 7;
    let points: Vec<f64> = (0..k * 3).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let pool = DescriptorPool {
        dims: 3,
        data: points,
    };
    let perfect = kmeans_fit(
        &pool,
        &KMeansConfig {
            k,
            ..Default::default()
        },
        SourceTag::DftBranch,
    )
    .unwrap();
    verdict(
        "c05-kmeans",
        violations == 0 && perfect.objective() == 0.0,
        format!(
            "20 runs, {} iterations, {} increases; perfect fit objective {:e}",
            iterations,
            violations,
            perfect.objective()
        ),
    );
}

/// Best objective found by a long subgradient descent on (w1, w2, b) with
/// restarts at shrinking step sizes.
fn subgradient_oracle(xs: &[[f64; 2]], ys: &[f64], c: f64) -> f64 {
    let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    let obj = |p: &[f64; 3]| primal_objective(&p[..2], p[2], &rows, ys, c);
    let mut best = [0.0f64; 3];
    let mut best_obj = obj(&best);
    let mut step0 = 1.0 / (c * xs.len() as f64).max(1.0);
    for _round in 0..6 {
        let mut p = best;
        for t in 1..=200_000u32 {
            let mut g = [p[0], p[1], 0.0];
            for (x, &y) in xs.iter().zip(ys) {
                if y * (p[0] * x[0] + p[1] * x[1] + p[2]) < 1.0 {
                    g[0] -= c * y * x[0];
                    g[1] -= c * y * x[1];
                    g[2] -= c * y;
                }
            }
            let step = step0 / (t as f64).sqrt();
            for i in 0..3 {
                p[i] -= step * g[i];
            }
            let o = obj(&p);
            if o < best_obj {
                best_obj = o;
                best = p;
            }
        }
        step0 *= 0.2;
    }
    best_obj
}

#[test]
fn c06_svm_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let separable = case < 10;
        let n = rng.gen_range(10..=40);
        let gap = if separable { 1.5 } else { 0.3 };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x = [y * gap + rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0)];
            xs.push(x);
            ys.push(y);
        }
        let rows: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let cfg = SvmConfig::default();
        let model = svm_train_binary(&rows, &ys, &cfg).unwrap();
        let ours = primal_objective(&model.w, model.b, &rows, &ys, cfg.c);
        let oracle = subgradient_oracle(&xs, &ys, cfg.c);
        worst = worst.max((ours - oracle).abs() / oracle);
    }
    let rows: [&[f64]; 2] = [&[1.0], &[-1.0]];
    let m = svm_train_binary(&rows, &[1.0, -1.0], &SvmConfig::default()).unwrap();
    let one_d = (m.w[0] - 1.0)
        .abs()
        .max(m.b.abs())
        .max((m.objective - 0.5).abs());
    verdict(
        "c06-svm",
        worst <= 1e-3 && one_d <= 1e-4,
        format!("20 problems: max rel diff to oracle {:.2e} (tol 1e-3); 1-D case max err {:.2e} (tol 1e-4)", worst, one_d),
    );
}

fn fixture_config(dir: &Path, fx: &TemporalFixture) -> ExperimentConfig {
    let manifest = fx.write(&dir.join("data")).unwrap();
    let mut cfg = ExperimentConfig {
        manifest,
        out_dir: dir.join("out"),
        runs: 5,
        modes: Mode::ALL.to_vec(),
        ..Default::default()
    };
    cfg.ingest.frame_stride = 1;
    cfg.spectral.target_length = 64;
    cfg.kmeans.k = 32;
    cfg.llc.knn = 5;
    cfg.svm.c = 1.0;
    cfg
}

#[test]
fn c07_temporal_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let fx = TemporalFixture::default();
    let start = Instant::now();
    let report = run_experiment(&fixture_config(dir.path(), &fx)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let overall = |m: Mode| report.modes.iter().find(|r| r.mode == m).unwrap().overall;
    let (frame, dft, fused) = (
        overall(Mode::Frame),
        overall(Mode::Dft),
        overall(Mode::Fused),
    );
    verdict(
        "c07-temporal-fixture",
        frame <= 70.0 && dft >= 85.0 && fused >= 90.0 && fused >= frame + 15.0 && dft >= frame + 20.0 && secs < 120.0,
        format!(
            "frame {:.1}% (<= 70), dft {:.1}% (>= 85, >= frame + 20), fused {:.1}% (>= 90, >= frame + 15), {:.1}s",
            frame, dft, fused, secs
        ),
    );
}

#[test]
fn c08_pipeline_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let fx = TemporalFixture {
        videos_per_class: 12,
        dims: 8,
        frames: (30, 50),
        ..Default::default()
    };
    let manifest = fx.write(&dir.path().join("data")).unwrap();
    let config = dir.path().join("experiment.conf");
    fs::write(
        &config,
        format!(
            "manifest = {}\nframe-stride = 2\ntarget-length = 32\ncodebook-size = 16\nruns = 3\nmode = frame,dft,fused\n",
            manifest.display()
        ),
    )
    .unwrap();
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_vidspec"))
            .arg("pipeline")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .arg("--report-format")
            .arg("json")
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        (
            fs::read(out_dir.join("report.json")).unwrap(),
            status.stdout,
        )
    };
    let (a, stdout_a) = run("first");
    let (b, stdout_b) = run("second");
    verdict(
        "c08-determinism",
        !a.is_empty() && a == b && stdout_a == stdout_b,
        format!(
            "two pipeline runs: report.json {} bytes, identical = {}",
            a.len(),
            a == b && stdout_a == stdout_b
        ),
    );
}

#[test]
fn c09_leakage_guard() {
    let dir = tempfile::tempdir().unwrap();
    let fx = TemporalFixture {
        videos_per_class: 15,
        dims: 8,
        frames: (30, 60),
        seed: 9,
        ..Default::default()
    };
    let mut cfg = fixture_config(dir.path(), &fx);
    cfg.kmeans.k = 16;
    let manifest = load_manifest(&cfg.manifest).unwrap();
    let run_seed = cfg.seed + 1;
    let (train, test) = split_dataset(&manifest, cfg.train_fraction, run_seed).unwrap();
    let bytes = |books: &vidspec::pipeline::RunCodebooks| {
        [books.frame.as_ref().unwrap(), books.dft.as_ref().unwrap()].map(encode_codebook)
    };
    let before = bytes(&fit_codebooks_from_disk(&manifest, &train, &cfg, run_seed).unwrap());
    for id in &test {
        fs::remove_file(manifest.resolve(manifest.entry(id).unwrap())).unwrap();
    }
    let after = bytes(&fit_codebooks_from_disk(&manifest, &train, &cfg, run_seed).unwrap());
    verdict(
        "c09-leakage",
        before == after,
        format!(
            "{} test files deleted; frame and dft codebooks bit-identical = {}",
            test.len(),
            before == after
        ),
    );
}

#[test]
fn c10_encoding_performance() {
    let dir = tempfile::tempdir().unwrap();
    let fx = TemporalFixture {
        videos_per_class: 50,
        dims: 64,
        frames: (95, 105),
        seed: 10,
        ..Default::default()
    };
    let mut cfg = fixture_config(dir.path(), &fx);
    cfg.kmeans.k = 256;
    cfg.kmeans.max_iterations = 20;
    cfg.runs = 1;
    cfg.spectral.target_length = 100;

    let manifest = load_manifest(&cfg.manifest).unwrap();
    let videos = prepare_videos(&manifest, None, &cfg.ingest, &cfg.spectral, None).unwrap();
    let refs: Vec<&PreparedVideo> = videos.iter().collect();
    let books = fit_run_codebooks(&refs, &cfg, 1).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let start = Instant::now();
    let encoded: Vec<_> = single.install(|| {
        videos
            .iter()
            .map(|v| {
                let blocks = pool_video(v, &books, &cfg.llc, cfg.fusion.normalize_dft).unwrap();
                representation(&v.video_id, &blocks, Mode::Fused, &cfg.fusion).unwrap()
            })
            .collect()
    });
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(encoded.len(), 100);

    let report_bytes = |jobs: usize, out: &str| {
        let c = ExperimentConfig {
            jobs,
            out_dir: dir.path().join(out),
            ..cfg.clone()
        };
        let r = run_experiment(&c).unwrap();
        (
            emit_report(&r, ReportFormat::Json),
            emit_report(&r, ReportFormat::Csv),
        )
    };
    let serial = report_bytes(1, "serial");
    let parallel = report_bytes(4, "parallel");
    verdict(
        "c10-performance",
        secs < 60.0 && serial == parallel,
        format!(
            "100 videos (D=64, N~100, K=256) encoded single-threaded in {:.2}s (< 60s); jobs=1 vs jobs=4 reports identical = {}",
            secs,
            serial == parallel
        ),
    );
}
