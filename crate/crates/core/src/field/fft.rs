//! Slice evaluation of the extension operator through a folded 2D FFT.
//!
//! For a density window starting at lattice index `(i0, j0)` and a torus
//! grid of `m1 x m2` points with spacing `Δ_k = L / m_k` (`L = 2π/h`), the
//! slice of `Ef` at height `x₃` is
//! `h² e^{i(x₁ξ_{i0} + x₂η_{j0})} Σ_{a,b} f_{ab} e^{i x₃ Φ_{ab}} e^{2πi(s₁a/m₁ + s₂b/m₂)}`,
//! an unnormalized inverse DFT of the window folded modulo `(m1, m2)`.

use super::density::FreqDensity;
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

pub struct Fft2 {
    m: [usize; 2],
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn inverse(m: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            m,
            rows: planner.plan_fft(m[1], FftDirection::Inverse),
            cols: planner.plan_fft(m[0], FftDirection::Inverse),
        }
    }

    pub fn dims(&self) -> [usize; 2] {
        self.m
    }

    pub fn scratch(&self) -> Scratch {
        let len = self
            .rows
            .get_inplace_scratch_len()
            .max(self.cols.get_inplace_scratch_len());
        Scratch {
            fft: vec![Complex64::new(0.0, 0.0); len],
            tr: vec![Complex64::new(0.0, 0.0); self.m[0] * self.m[1]],
        }
    }

    /// In-place 2D transform of a row-major `m1 x m2` buffer.
    pub fn process(&self, buf: &mut [Complex64], s: &mut Scratch) {
        let [m1, m2] = self.m;
        debug_assert_eq!(buf.len(), m1 * m2);
        // folded windows narrower than the torus leave whole rows empty
        for row in buf.chunks_exact_mut(m2) {
            if row.iter().any(|v| v.re != 0.0 || v.im != 0.0) {
                self.rows.process_with_scratch(row, &mut s.fft);
            }
        }
        for a in 0..m1 {
            for b in 0..m2 {
                s.tr[b * m1 + a] = buf[a * m2 + b];
            }
        }
        self.cols.process_with_scratch(&mut s.tr, &mut s.fft);
        for b in 0..m2 {
            for a in 0..m1 {
                buf[a * m2 + b] = s.tr[b * m1 + a];
            }
        }
    }
}

pub struct Scratch {
    fft: Vec<Complex64>,
    tr: Vec<Complex64>,
}

/// Precomputed per-window data for repeated slice evaluation.
pub struct SliceEvaluator<'a> {
    pub f: &'a FreqDensity,
    pub fft: Fft2,
    phi: Vec<f64>,
    weight: f64,
}

impl<'a> SliceEvaluator<'a> {
    pub fn new(f: &'a FreqDensity, m: [usize; 2]) -> Self {
        let [w1, w2] = f.shape();
        let mut phi = Vec::with_capacity(w1 * w2);
        for a in 0..w1 {
            for b in 0..w2 {
                phi.push(f.phi_at(a, b));
            }
        }
        let h = f.h();
        SliceEvaluator { f, fft: Fft2::inverse(m), phi, weight: h * h }
    }

    /// Torus period `L = 2π/h`.
    pub fn period(&self) -> f64 {
        std::f64::consts::PI * self.f.n as f64
    }

    pub fn spacing(&self) -> [f64; 2] {
        let l = self.period();
        [l / self.fft.m[0] as f64, l / self.fft.m[1] as f64]
    }

    pub fn new_buffer(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.fft.m[0] * self.fft.m[1]]
    }

    /// Fill `buf` with the unmodulated slice `G(s)` at height `x3`, so that
    /// `|Ef(s Δ, x3)| = |G(s)|`. `G` includes the Riemann weight `h²`.
    pub fn eval(&self, x3: f64, buf: &mut [Complex64], s: &mut Scratch) {
        let [m1, m2] = self.fft.m;
        let [w1, w2] = self.f.shape();
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let data = self.f.data.as_slice_memory_order();
        let contiguous = self.f.data.is_standard_layout();
        for a in 0..w1 {
            let ra = (a % m1) * m2;
            for b in 0..w2 {
                let k = a * w2 + b;
                let v = if contiguous { data.unwrap()[k] } else { self.f.data[[a, b]] };
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                let ph = x3 * self.phi[k];
                buf[ra + b % m2] += v * Complex64::new(ph.cos(), ph.sin()) * self.weight;
            }
        }
        self.fft.process(buf, s);
    }

    /// Phase factor `e^{i(x₁ξ_{i0} + x₂η_{j0})}` at torus index `(s1, s2)`.
    pub fn carrier(&self, s1: i64, s2: i64) -> Complex64 {
        let d = self.spacing();
        let x1 = s1 as f64 * d[0];
        let x2 = s2 as f64 * d[1];
        let ph = x1 * self.f.coord(self.f.origin[0]) + x2 * self.f.coord(self.f.origin[1]);
        Complex64::new(ph.cos(), ph.sin())
    }
}
