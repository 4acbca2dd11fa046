//! Synthetic frame-feature datasets whose classes differ only in temporal
//! frequency content.
//!
//! Each frame is `offset[k] + amplitude * sin(2 pi f[k] t + phase[k]) + noise`
//! with an independent uniform phase and a frequency drawn from the class band,
//! per video and dimension. For any single
//! frame the phase-averaged distribution is the same whatever `f` is, so
//! classes are indistinguishable frame by frame; only the rate of change
//! over time tells them apart.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::ingest::{write_sequence, FrameSequence};
use crate::io_util;

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFixture {
    pub videos_per_class: usize,
    pub dims: usize,
    /// Inclusive range of frame counts, drawn uniformly per video.
    pub frames: (usize, usize),
    /// Modulation frequency of each class, in cycles per frame.
    pub class_frequencies: Vec<f64>,
    /// Each dimension's frequency is drawn uniformly from `f * (1 +- jitter)`.
    pub jitter: f64,
    /// Per-dimension offsets are spread over `[lo, hi]`, identically for all classes.
    pub offset_range: (f64, f64),
    pub amplitude: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for TemporalFixture {
    fn default() -> Self {
        TemporalFixture {
            videos_per_class: 60,
            dims: 16,
            frames: (40, 120),
            class_frequencies: vec![0.06, 0.3],
            jitter: 0.4,
            offset_range: (1.0, 1.5),
            amplitude: 1.0,
            noise: 0.1,
            seed: 0,
        }
    }
}

impl TemporalFixture {
    /// Offset of dimension `k`.
    pub fn offset(&self, k: usize) -> f64 {
        let (lo, hi) = self.offset_range;
        lo + (hi - lo) * ((k * 7) % 5) as f64 / 4.0
    }

    /// Videos in class-major order with their class ids.
    pub fn generate(&self) -> Vec<(FrameSequence, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise level");
        let mut out = Vec::new();
        for (class, &freq) in self.class_frequencies.iter().enumerate() {
            for i in 0..self.videos_per_class {
                let n = rng.gen_range(self.frames.0..=self.frames.1);
                let f: Vec<f64> = (0..self.dims)
                    .map(|_| freq * (1.0 + self.jitter * rng.gen_range(-1.0..=1.0)))
                    .collect();
                let phase: Vec<f64> = (0..self.dims)
                    .map(|_| rng.gen_range(0.0..2.0 * PI))
                    .collect();
                let mut data = Vec::with_capacity(n * self.dims);
                for t in 0..n {
                    for (k, ph) in phase.iter().enumerate() {
                        let v = self.offset(k)
                            + self.amplitude * (2.0 * PI * f[k] * t as f64 + ph).sin()
                            + noise.sample(&mut rng);
                        data.push(v);
                    }
                }
                let id = format!("c{}_{:04}", class, i);
                let seq = FrameSequence::new(id, self.dims, data).expect("finite synthetic data");
                out.push((seq, class));
            }
        }
        out
    }

    /// Writes one `.vfs` file per video plus `manifest.txt` into `dir` and
    /// returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut manifest = String::from("# video_id,label,path\n");
        for (seq, class) in self.generate() {
            let file = format!("{}.vfs", seq.video_id);
            write_sequence(&dir.join(&file), &seq)?;
            manifest.push_str(&format!("{},{},{}\n", seq.video_id, class, file));
        }
        let path = dir.join("manifest.txt");
        io_util::write_file(&path, manifest.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let fx = TemporalFixture {
            videos_per_class: 3,
            ..Default::default()
        };
        let a = fx.generate();
        assert_eq!(a.len(), 6);
        for (seq, _) in &a {
            assert_eq!(seq.dims(), 16);
            assert!((40..=120).contains(&seq.num_frames()));
        }
        assert_eq!(a, fx.generate());
    }

    #[test]
    fn per_frame_statistics_match_across_classes() {
        let fx = TemporalFixture {
            videos_per_class: 200,
            dims: 4,
            ..Default::default()
        };
        let videos = fx.generate();
        let mut moments = [[0.0f64; 3]; 2];
        for (seq, class) in &videos {
            // One frame per video keeps samples independent.
            let f = seq.frame(seq.num_frames() / 2);
            moments[*class][0] += 1.0;
            moments[*class][1] += f[0];
            moments[*class][2] += f[0] * f[0];
        }
        let stats: Vec<(f64, f64)> = moments
            .iter()
            .map(|m| {
                let mean = m[1] / m[0];
                (mean, m[2] / m[0] - mean * mean)
            })
            .collect();
        assert!((stats[0].0 - stats[1].0).abs() < 0.15, "{stats:?}");
        assert!((stats[0].1 - stats[1].1).abs() < 0.15, "{stats:?}");
    }
}
