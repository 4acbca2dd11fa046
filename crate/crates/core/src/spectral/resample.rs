//! Cubic convolution resampling (Keys kernel, `a = -0.5`).
//!
//! Input samples sit at `j / (N - 1)` on `[0, 1]` and outputs are evaluated
//! at `i / (L - 1)`. The taps that fall one sample outside the input use the
//! Keys boundary extrapolation `3 y[0] - 3 y[1] + y[2]` (mirrored at the
//! right end), which keeps the interpolant exact on quadratics. Two-sample
//! inputs extrapolate linearly; one-sample inputs resample to a constant.

use crate::error::{Error, Result};

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Sample `j` of `y`, extended by one point on either side.
fn extended(y: &[f64], j: isize) -> f64 {
    let n = y.len() as isize;
    if (0..n).contains(&j) {
        return y[j as usize];
    }
    let at = |k: usize| if j < 0 { y[k] } else { y[n as usize - 1 - k] };
    match y.len() {
        1 => y[0],
        2 => 2.0 * at(0) - at(1),
        _ => 3.0 * at(0) - 3.0 * at(1) + at(2),
    }
}

/// Resamples `spectrum` (N points) to `target` points.
pub fn resample_spectrum(spectrum: &[f64], target: usize) -> Result<Vec<f64>> {
    let n = spectrum.len();
    if n == 0 {
        return Err(Error::Data("cannot resample an empty spectrum".into()));
    }
    if target < 2 {
        return Err(Error::Config("resample target must be >= 2".into()));
    }
    if n == 1 {
        return Ok(vec![spectrum[0]; target]);
    }
    let span = target - 1;
    let out = (0..target)
        .map(|i| {
            // Position i * (n - 1) / span in input index units, split exactly
            // into integer and fractional parts.
            let num = i * (n - 1);
            let mut base = num / span;
            let mut frac = (num % span) as f64 / span as f64;
            if base == n - 1 {
                base = n - 2;
                frac = 1.0;
            }
            let base = base as isize;
            (-1..=2)
                .map(|off| extended(spectrum, base + off) * keys_kernel(frac - off as f64))
                .sum()
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_interpolates() {
        assert_eq!(keys_kernel(0.0), 1.0);
        for x in [1.0, -1.0, 2.0, 2.5, -3.0] {
            assert_eq!(keys_kernel(x), 0.0);
        }
        for f in [0.1, 0.25, 0.5, 0.9] {
            let s: f64 = (-1..=2).map(|o| keys_kernel(f - o as f64)).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_at_nodes() {
        let y = [4.0, 0.3, 2.0, 7.5, 0.0, 1.25];
        assert_eq!(resample_spectrum(&y, y.len()).unwrap(), y.to_vec());
    }

    #[test]
    fn ramp_reproduced() {
        let y: Vec<f64> = (0..6).map(|j| j as f64 / 5.0).collect();
        let out = resample_spectrum(&y, 11).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert!((v - i as f64 / 10.0).abs() < 1e-12, "{i}: {v}");
        }
    }

    #[test]
    fn quadratic_reproduced() {
        let y: Vec<f64> = (0..9).map(|j| (j as f64 / 8.0).powi(2)).collect();
        let out = resample_spectrum(&y, 17).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert!((v - (i as f64 / 16.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(resample_spectrum(&[3.0], 4).unwrap(), vec![3.0; 4]);
        assert!(resample_spectrum(&[], 4).is_err());
        assert!(resample_spectrum(&[1.0, 2.0], 1).is_err());
        let two = resample_spectrum(&[1.0, 3.0], 5).unwrap();
        for (i, v) in two.iter().enumerate() {
            assert!((v - (1.0 + 0.5 * i as f64)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn constants_and_lines(n in 1usize..60, l in 2usize..120, c in -50.0f64..50.0, m in -5.0f64..5.0) {
            for v in resample_spectrum(&vec![c; n], l).unwrap() {
                prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
            if n >= 2 {
                let line: Vec<f64> = (0..n).map(|j| c + m * j as f64 / (n - 1) as f64).collect();
                for (i, v) in resample_spectrum(&line, l).unwrap().into_iter().enumerate() {
                    let want = c + m * i as f64 / (l - 1) as f64;
                    prop_assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0));
                }
            }
        }
    }
}
