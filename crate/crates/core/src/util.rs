//! Small numerical helpers shared across modules.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier compensated accumulator. Summation order is fixed by the
/// caller, so results are reproducible independent of thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator in iteration order.
pub fn csum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Compensated::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Compensated complex sum in iteration order.
pub fn csum_c<I: IntoIterator<Item = Complex64>>(it: I) -> Complex64 {
    let mut re = Compensated::new();
    let mut im = Compensated::new();
    for z in it {
        re.add(z.re);
        im.add(z.im);
    }
    Complex64::new(re.value(), im.value())
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Growth exponent: least-squares slope of log2(value) against log2(scale).
/// Non-positive values make the fit undefined and yield `None`.
pub fn growth_exponent(scales: &[f64], values: &[f64]) -> Option<f64> {
    if scales.len() < 2 || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.log2()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    Some(ls_slope(&xs, &ys))
}

pub fn is_power_of_two(r: f64) -> bool {
    r >= 1.0 && r.fract() == 0.0 && (r as u64).is_power_of_two()
}

/// Modified Bessel function I0 by power series; adequate for |x| <= 50.
pub fn bessel_i0(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= y / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Smooth compactly supported bump exp(-1/(1-t^2)) on |t| < 1.
pub fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

/// Exponent `k` of the dyadic bucket `(2^{k-1}, 2^k]` holding `x > 0`.
/// Buckets are half-open so a value on an edge falls into the lower bucket.
pub fn dyadic_exponent(x: f64) -> i32 {
    let k = x.log2();
    let r = k.round();
    if (k - r).abs() < 1e-12 {
        r as i32
    } else {
        k.ceil() as i32
    }
}

/// Smallest integer >= n whose prime factors are 2, 3, 5 only.
pub fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// ChaCha stream keyed by `(seed, scenario, scale, trial)`. Each trial owns
/// its stream, so results do not depend on scheduling.
pub fn keyed_rng(seed: u64, scenario: &str, scale: u64, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut x = splitmix64(seed);
    for (i, part) in [fnv1a(scenario), scale, trial, 0x68_79_70_64].into_iter().enumerate() {
        x = splitmix64(x ^ part);
        key[8 * i..8 * i + 8].copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
