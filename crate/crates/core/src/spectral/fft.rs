//! Any-length complex FFT.
//!
//! Power-of-two lengths use an iterative radix-2 transform. Composite lengths
//! recurse by peeling off the smallest prime factor (decimation in time).
//! Prime lengths above [`NAIVE_PRIME_LIMIT`] go through Bluestein's chirp-z
//! convolution on a power-of-two grid; small primes use the direct sum.

use std::f64::consts::PI;

use num_complex::Complex64;

/// Largest prime length evaluated by the direct O(n^2) sum.
pub const NAIVE_PRIME_LIMIT: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X[s] = sum_n x[n] exp(-2 pi i n s / N)`
    Forward,
    /// Same with `+i` in the exponent and no `1/N` scaling.
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

/// Unnormalized discrete Fourier transform of `signal`.
pub fn fft(signal: &[Complex64], direction: Direction) -> Vec<Complex64> {
    transform(signal, direction.sign())
}

/// `exp(sign * 2 pi i * j / n)` for `j` in `0..n`.
fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n)
        .map(|j| {
            let (s, c) = (2.0 * PI * j as f64 / n as f64).sin_cos();
            Complex64::new(c, sign * s)
        })
        .collect()
}

fn smallest_prime_factor(n: usize) -> usize {
    if n % 2 == 0 {
        return 2;
    }
    let mut f = 3;
    while f * f <= n {
        if n % f == 0 {
            return f;
        }
        f += 2;
    }
    n
}

fn transform(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        radix2_in_place(&mut buf, sign);
        return buf;
    }
    let p = smallest_prime_factor(n);
    if p == n {
        return if n <= NAIVE_PRIME_LIMIT {
            direct(x, sign)
        } else {
            bluestein(x, sign)
        };
    }

    let m = n / p;
    let subs: Vec<Vec<Complex64>> = (0..p)
        .map(|r| {
            let sub: Vec<Complex64> = x.iter().skip(r).step_by(p).copied().collect();
            transform(&sub, sign)
        })
        .collect();
    let w = twiddles(n, sign);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for q in 0..p {
        for k in 0..m {
            let idx = k + m * q;
            let mut acc = subs[0][k];
            for (r, sub) in subs.iter().enumerate().skip(1) {
                acc += sub[k] * w[(r * idx) % n];
            }
            out[idx] = acc;
        }
    }
    out
}

fn direct(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    let w = twiddles(n, sign);
    (0..n)
        .map(|s| x.iter().enumerate().map(|(j, v)| v * w[(j * s) % n]).sum())
        .collect()
}

fn radix2_in_place(buf: &mut [Complex64], sign: f64) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let w = twiddles(n, sign);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let t = buf[start + k + half] * w[k * step];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        len <<= 1;
    }
}

fn bluestein(x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp[k] = exp(sign * i pi k^2 / n); k^2 is reduced mod 2n exactly.
    let two_n = 2 * n as u128;
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % two_n) as f64;
            let (s, c) = (PI * k2 / n as f64).sin_cos();
            Complex64::new(c, sign * s)
        })
        .collect();

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for (k, (v, c)) in x.iter().zip(&chirp).enumerate() {
        a[k] = v * c;
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2_in_place(&mut a, -1.0);
    radix2_in_place(&mut b, -1.0);
    for (av, bv) in a.iter_mut().zip(&b) {
        *av *= bv;
    }
    radix2_in_place(&mut a, 1.0);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * chirp[k] * scale).collect()
}
