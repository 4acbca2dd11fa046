//! Linear SVM with L1 hinge loss, one-vs-rest for multiclass.
//!
//! The binary problem is
//!
//! ```text
//! min_{w,b}  1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b))
//! ```
//!
//! Two dual solvers are provided. [`SvmSolver::ExactBias`] keeps `b`
//! unregularized: SMO over the dual with the equality constraint
//! `sum_i y_i alpha_i = 0`, working on a precomputed linear Gram matrix that
//! one-vs-rest training shares across classes. [`SvmSolver::AugmentedBias`]
//! appends a constant `bias_scale` feature and runs dual coordinate descent,
//! which also penalizes `(b / bias_scale)^2`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_util::{self, Reader};
use crate::linalg::dot;

pub const MODEL_MAGIC: &[u8; 4] = b"VSM1";

/// Curvature floor for the SMO pair update.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmSolver {
    ExactBias,
    AugmentedBias,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    /// Value of the appended constant feature (augmented solver only).
    pub bias_scale: f64,
    /// Iteration cap, in passes over the training set.
    pub max_epochs: usize,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub solver: SvmSolver,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            bias_scale: 1.0,
            max_epochs: 1000,
            tolerance: 1e-6,
            solver: SvmSolver::ExactBias,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config("svm C must be > 0".into()));
        }
        if !(self.bias_scale > 0.0) || !self.bias_scale.is_finite() {
            return Err(Error::Config("svm bias_scale must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("svm max_epochs must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("svm tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// A trained binary machine with its optimization record.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Primal objective at `(w, b)`.
    pub objective: f64,
    /// Dual objective at the returned multipliers; `<= objective`.
    pub dual_objective: f64,
    /// Negated dual objective after every pass over the data (and at the
    /// end); non-increasing.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    pub fn relative_gap(&self) -> f64 {
        (self.objective - self.dual_objective) / self.objective.abs().max(1e-12)
    }
}

/// `1/2 |w|^2 + C sum max(0, 1 - y (w.x + b))`.
pub fn primal_objective(w: &[f64], b: f64, features: &[&[f64]], labels: &[f64], c: f64) -> f64 {
    let hinge: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge
}

fn check_training_set(features: &[&[f64]], labels: &[f64]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dims = features[0].len();
    for (i, x) in features.iter().enumerate() {
        if x.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature in example {}", i)));
        }
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Data(format!(
            "binary labels must be +1/-1, found {}",
            bad
        )));
    }
    Ok(dims)
}

fn single_label(dims: usize, y: f64) -> BinarySvm {
    // w = 0 and the smallest |b| with zero hinge loss.
    BinarySvm {
        w: vec![0.0; dims],
        b: y,
        objective: 0.0,
        dual_objective: 0.0,
        trace: vec![0.0],
        converged: true,
    }
}

/// Row-major linear kernel matrix.
pub fn gram_matrix(features: &[&[f64]]) -> Vec<f64> {
    let t = features.len();
    let rows: Vec<Vec<f64>> = (0..t)
        .into_par_iter()
        .map(|i| (0..t).map(|j| dot(features[i], features[j])).collect())
        .collect();
    rows.concat()
}

/// Trains one binary machine (`labels` in {-1, +1}).
pub fn svm_train_binary(features: &[&[f64]], labels: &[f64], cfg: &SvmConfig) -> Result<BinarySvm> {
    cfg.validate()?;
    check_training_set(features, labels)?;
    match cfg.solver {
        SvmSolver::ExactBias => {
            let gram = gram_matrix(features);
            train_with_gram(features, labels, &gram, cfg)
        }
        SvmSolver::AugmentedBias => Ok(train_augmented(features, labels, cfg)),
    }
}

fn train_with_gram(
    features: &[&[f64]],
    labels: &[f64],
    gram: &[f64],
    cfg: &SvmConfig,
) -> Result<BinarySvm> {
    let dims = features[0].len();
    if labels.iter().all(|&y| y == labels[0]) {
        return Ok(single_label(dims, labels[0]));
    }
    let smo = smo(gram, labels, cfg);
    let mut w = vec![0.0; dims];
    for ((x, &y), &a) in features.iter().zip(labels).zip(&smo.alpha) {
        if a != 0.0 {
            for (wk, xk) in w.iter_mut().zip(x.iter()) {
                *wk += a * y * xk;
            }
        }
    }
    let objective = primal_objective(&w, smo.b, features, labels, cfg.c);
    let dual_objective = smo.alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w);
    Ok(BinarySvm {
        w,
        b: smo.b,
        objective,
        dual_objective,
        trace: smo.trace,
        converged: smo.converged,
    })
}

struct SmoResult {
    alpha: Vec<f64>,
    b: f64,
    trace: Vec<f64>,
    converged: bool,
}

/// SMO with second-order working-set selection on
/// `min 1/2 a^T Q a - 1^T a, 0 <= a <= C, y^T a = 0`, `Q_ij = y_i y_j K_ij`.
fn smo(gram: &[f64], y: &[f64], cfg: &SvmConfig) -> SmoResult {
    let t = y.len();
    let c = cfg.c;
    let k = |i: usize, j: usize| gram[i * t + j];
    let mut alpha = vec![0.0; t];
    // g = Q alpha - 1
    let mut g = vec![-1.0; t];
    let dual = |alpha: &[f64], g: &[f64]| -> f64 {
        0.5 * alpha
            .iter()
            .zip(g)
            .map(|(a, gi)| a * (gi - 1.0))
            .sum::<f64>()
    };
    let mut trace = vec![0.0];
    let mut converged = false;
    let max_iter = cfg.max_epochs.saturating_mul(t.max(1));

    for iter in 1..=max_iter {
        let upper = |i: usize, a: &[f64]| a[i] >= c;
        let lower = |i: usize, a: &[f64]| a[i] <= 0.0;

        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for s in 0..t {
            if y[s] > 0.0 {
                if !upper(s, &alpha) && -g[s] >= gmax {
                    gmax = -g[s];
                    i_sel = Some(s);
                }
            } else if !lower(s, &alpha) && g[s] >= gmax {
                gmax = g[s];
                i_sel = Some(s);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        if let Some(i) = i_sel {
            for s in 0..t {
                let (grad_diff, quad) = if y[s] > 0.0 {
                    if lower(s, &alpha) {
                        continue;
                    }
                    gmax2 = gmax2.max(g[s]);
                    (gmax + g[s], k(i, i) + k(s, s) - 2.0 * k(i, s))
                } else {
                    if upper(s, &alpha) {
                        continue;
                    }
                    gmax2 = gmax2.max(-g[s]);
                    (gmax - g[s], k(i, i) + k(s, s) - 2.0 * k(i, s))
                };
                if grad_diff > 0.0 {
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -grad_diff * grad_diff / quad;
                    if obj <= best {
                        best = obj;
                        j_sel = Some(s);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax + gmax2 >= cfg.tolerance => (i, j),
            _ => {
                converged = true;
                break;
            }
        };

        let qij = y[i] * y[j] * k(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k(i, i) + k(j, j) + 2.0 * qij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * qij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for s in 0..t {
            g[s] += y[s] * (y[i] * k(i, s) * di + y[j] * k(j, s) * dj);
        }
        if iter % t == 0 {
            trace.push(dual(&alpha, &g));
        }
    }
    trace.push(dual(&alpha, &g));

    // Bias from free multipliers, or the middle of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for s in 0..t {
        let yg = y[s] * g[s];
        if alpha[s] >= c {
            if y[s] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[s] <= 0.0 {
            if y[s] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    SmoResult {
        alpha,
        b: -rho,
        trace,
        converged,
    }
}

fn train_augmented(features: &[&[f64]], labels: &[f64], cfg: &SvmConfig) -> BinarySvm {
    let dims = features[0].len();
    if labels.iter().all(|&y| y == labels[0]) {
        return single_label(dims, labels[0]);
    }
    let t = features.len();
    let c = cfg.c;
    let s = cfg.bias_scale;
    let qd: Vec<f64> = features.iter().map(|x| dot(x, x) + s * s).collect();
    let mut alpha = vec![0.0; t];
    let mut w = vec![0.0; dims + 1];
    let mut order: Vec<usize> = (0..t).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dual = |alpha: &[f64], w: &[f64]| 0.5 * dot(w, w) - alpha.iter().sum::<f64>();
    let mut trace = vec![0.0];
    let mut converged = false;

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let x = features[i];
            let y = labels[i];
            let g = y * (dot(&w[..dims], x) + w[dims] * s) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (alpha[i] - g / qd[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * y;
                for (wk, xk) in w.iter_mut().zip(x.iter()) {
                    *wk += d * xk;
                }
                w[dims] += d * s;
            }
        }
        trace.push(dual(&alpha, &w));
        if pg_max - pg_min < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let b = w[dims] * s;
    w.truncate(dims);
    let objective = primal_objective(&w, b, features, labels, c);
    // Dual of the augmented problem; it lower-bounds the augmented primal,
    // which differs from `objective` by (b/s)^2 / 2.
    let dual_objective = -trace.last().copied().unwrap_or(0.0) - 0.5 * (b / s) * (b / s);
    BinarySvm {
        w,
        b,
        objective,
        dual_objective,
        trace,
        converged,
    }
}

/// One weight vector and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dims(&self) -> usize {
        self.weights.first().map(Vec::len).unwrap_or(0)
    }
}

/// One-vs-rest training; class ids are `0..=max(labels)`.
pub fn train_ovr<V: AsRef<[f64]>>(
    representations: &[V],
    labels: &[usize],
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    cfg.validate()?;
    let features: Vec<&[f64]> = representations.iter().map(AsRef::as_ref).collect();
    let signs = vec![1.0; labels.len()];
    check_training_set(&features, &signs)?;
    let num_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut present = vec![false; num_classes];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::Data(
            "training data must contain at least 2 classes".into(),
        ));
    }
    let gram = match cfg.solver {
        SvmSolver::ExactBias => Some(gram_matrix(&features)),
        SvmSolver::AugmentedBias => None,
    };
    let machines = (0..num_classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            match &gram {
                Some(g) => train_with_gram(&features, &y, g, cfg),
                None => Ok(train_augmented(&features, &y, cfg)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        weights: machines.iter().map(|m| m.w.clone()).collect(),
        biases: machines.iter().map(|m| m.b).collect(),
    })
}

/// Argmax class (lowest id on ties) and every class's decision value.
pub fn predict(model: &SvmModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    if x.len() != model.dims() {
        return Err(Error::DimensionMismatch {
            expected: model.dims(),
            found: x.len(),
        });
    }
    let decisions: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, x) + b)
        .collect();
    Ok((argmax(&decisions), decisions))
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Model file

pub fn encode_model(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + model.num_classes() * (model.dims() + 1) * 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(model.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dims() as u32).to_le_bytes());
    for (w, b) in model.weights.iter().zip(&model.biases) {
        out.extend_from_slice(&b.to_le_bytes());
        for v in w {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_model(path: &Path, model: &SvmModel) -> Result<()> {
    io_util::write_file(path, &encode_model(model))
}

pub fn read_model(path: &Path) -> Result<SvmModel> {
    let bytes = io_util::read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.expect_magic(MODEL_MAGIC)?;
    let classes = r.u32()? as usize;
    let dims = r.u32()? as usize;
    let expected = classes
        .checked_mul(dims + 1)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    if r.remaining() != expected {
        return Err(Error::format(
            path,
            format!(
                "header declares {} classes x {} weights but payload holds {} bytes",
                classes,
                dims,
                r.remaining()
            ),
        ));
    }
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for _ in 0..classes {
        biases.push(r.f64()?);
        let mut w = Vec::with_capacity(dims);
        for _ in 0..dims {
            w.push(r.f64()?);
        }
        weights.push(w);
    }
    r.finish()?;
    if biases
        .iter()
        .chain(weights.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::format(path, "non-finite model parameter"));
    }
    Ok(SvmModel { weights, biases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn views(xs: &[Vec<f64>]) -> Vec<&[f64]> {
        xs.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn one_dimensional_margin() {
        let xs = vec![vec![-1.0], vec![1.0]];
        let m = svm_train_binary(&views(&xs), &[-1.0, 1.0], &SvmConfig::default()).unwrap();
        assert!((m.w[0] - 1.0).abs() < 1e-4);
        assert!(m.b.abs() < 1e-4);
        assert!((m.objective - 0.5).abs() < 1e-4);
    }

    #[test]
    fn single_label_minimal_bias() {
        let xs = vec![vec![0.3, 1.0], vec![2.0, -1.0]];
        let m = svm_train_binary(&views(&xs), &[1.0, 1.0], &SvmConfig::default()).unwrap();
        assert_eq!(m.w, vec![0.0, 0.0]);
        assert_eq!(m.b, 1.0);
        assert_eq!(m.objective, 0.0);
        let m = svm_train_binary(&views(&xs), &[-1.0, -1.0], &SvmConfig::default()).unwrap();
        assert_eq!(m.b, -1.0);
    }

    #[test]
    fn errors() {
        let cfg = SvmConfig::default();
        assert!(svm_train_binary(&[], &[], &cfg).is_err());
        let xs = vec![vec![f64::NAN], vec![1.0]];
        assert!(svm_train_binary(&views(&xs), &[1.0, -1.0], &cfg).is_err());
        let xs = vec![vec![0.0], vec![1.0]];
        assert!(svm_train_binary(&views(&xs), &[1.0, 0.0], &cfg).is_err());
        let bad = SvmConfig { c: 0.0, ..cfg };
        assert!(svm_train_binary(&views(&xs), &[1.0, -1.0], &bad).is_err());
        assert!(train_ovr(&xs, &[0, 0], &cfg).is_err());
    }

    fn blobs(rng: &mut ChaCha8Rng, n: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            xs.push(vec![
                y * sep + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0) + 0.5,
            ]);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn weak_duality_and_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for sep in [0.2, 0.8, 3.0] {
            let (xs, ys) = blobs(&mut rng, 30, sep);
            let m = svm_train_binary(&views(&xs), &ys, &SvmConfig::default()).unwrap();
            assert!(m.converged);
            assert!(m.objective >= m.dual_objective - 1e-12);
            assert!(m.relative_gap() <= 1e-4, "gap {}", m.relative_gap());
            for w in m.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn separable_with_large_c() {
        // Margin-1 fixture: points at x = +-1 and beyond.
        let xs: Vec<Vec<f64>> = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&v| vec![v, (v * 7.0f64).sin()])
            .collect();
        let ys = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let cfg = SvmConfig {
            c: 1000.0,
            ..Default::default()
        };
        let m = svm_train_binary(&views(&xs), &ys, &cfg).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert!(m.decision(x) * y > 0.0);
        }
    }

    #[test]
    fn augmented_solver_close_with_large_bias_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (xs, ys) = blobs(&mut rng, 40, 1.0);
        let exact = svm_train_binary(&views(&xs), &ys, &SvmConfig::default()).unwrap();
        let aug_cfg = SvmConfig {
            solver: SvmSolver::AugmentedBias,
            bias_scale: 10.0,
            max_epochs: 20_000,
            tolerance: 1e-8,
            ..Default::default()
        };
        let aug = svm_train_binary(&views(&xs), &ys, &aug_cfg).unwrap();
        assert!(aug.objective >= exact.objective * (1.0 - 1e-6));
        assert!((aug.objective - exact.objective) / exact.objective < 1e-2);
        for w in aug.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn ovr_three_clusters() {
        let centers = [[0.0, 5.0], [5.0, -3.0], [-5.0, -3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..15 {
                xs.push(vec![
                    ctr[0] + rng.gen_range(-1.0..1.0),
                    ctr[1] + rng.gen_range(-1.0..1.0),
                ]);
                ls.push(c);
            }
        }
        let model = train_ovr(&xs, &ls, &SvmConfig::default()).unwrap();
        for (x, &l) in xs.iter().zip(&ls) {
            assert_eq!(predict(&model, x).unwrap().0, l);
        }
        assert_eq!(model, train_ovr(&xs, &ls, &SvmConfig::default()).unwrap());
    }

    #[test]
    fn ovr_two_classes_matches_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (xs, ys) = blobs(&mut rng, 30, 0.4);
        let ls: Vec<usize> = ys.iter().map(|&y| if y > 0.0 { 1 } else { 0 }).collect();
        let model = train_ovr(&xs, &ls, &SvmConfig::default()).unwrap();
        let bin = svm_train_binary(&views(&xs), &ys, &SvmConfig::default()).unwrap();
        for x in &xs {
            let want = if bin.decision(x) > 0.0 { 1 } else { 0 };
            assert_eq!(predict(&model, x).unwrap().0, want);
        }
    }

    #[test]
    fn predict_rules() {
        let model = SvmModel {
            weights: vec![vec![0.0]; 3],
            biases: vec![0.2, -0.1, 0.9],
        };
        assert_eq!(predict(&model, &[1.0]).unwrap().0, 2);
        let tie = SvmModel {
            weights: vec![vec![0.0]; 2],
            biases: vec![0.5, 0.5],
        };
        assert_eq!(predict(&tie, &[3.0]).unwrap().0, 0);
        assert!(predict(&tie, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn argmax_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let shift = rng.gen_range(-10.0..10.0);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            assert_eq!(argmax(&v), argmax(&shifted));
        }
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = SvmModel {
            weights: vec![vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 0.0, -7.0]],
            biases: vec![0.123456789, -1.0],
        };
        let p = dir.path().join("m.vsm");
        write_model(&p, &model).unwrap();
        assert_eq!(read_model(&p).unwrap(), model);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        std::fs::write(&p, bytes).unwrap();
        assert!(read_model(&p).is_err());
    }
}
