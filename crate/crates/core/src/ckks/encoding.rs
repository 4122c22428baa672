//! Canonical-embedding encoder. Slot `j` is the evaluation at `ζ^(5^j)` with
//! `ζ = exp(iπ/N)`, so `x ↦ x^(5^r)` shifts slots left by `r`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::ring::{bitrev, GENERATOR};

/// Precomputed roots and slot order for one ring dimension.
#[derive(Debug, Clone)]
pub struct Encoder {
    n: usize,
    /// `5^j mod 2N` for `j < N/2`.
    rot_group: Vec<usize>,
    /// `exp(2πi k / 2N)` for `k ≤ 2N`.
    ksi_pows: Vec<Complex64>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n.is_power_of_two());
        let m = 2 * n;
        let mut rot_group = Vec::with_capacity(n / 2);
        let mut g = 1usize;
        for _ in 0..n / 2 {
            rot_group.push(g);
            g = g * GENERATOR as usize % m;
        }
        let ksi_pows = (0..=m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
            .collect();
        Encoder {
            n,
            rot_group,
            ksi_pows,
        }
    }

    pub fn ring_dim(&self) -> usize {
        self.n
    }

    pub fn slots(&self) -> usize {
        self.n / 2
    }

    fn bit_reverse(vals: &mut [Complex64]) {
        let bits = vals.len().trailing_zeros();
        for i in 0..vals.len() {
            let j = bitrev(i, bits);
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Evaluates the embedding: `vals` holds `m[i] + i·m[i+N/2]` on entry and
    /// slot values on exit.
    fn fft_special(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        Self::bit_reverse(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len / 2;
            let lenq = len * 4;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * m / lenq;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi_pows[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len *= 2;
        }
    }

    fn fft_special_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 2 {
            let lenh = len / 2;
            let lenq = len * 4;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - self.rot_group[j] % lenq) * m / lenq;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi_pows[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len /= 2;
        }
        Self::bit_reverse(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Real coefficients `m` with `σ(m) = slots`, before scaling and rounding.
    pub fn embed_inverse(&self, slots: &[Complex64]) -> Vec<f64> {
        assert_eq!(slots.len(), self.slots());
        let mut vals = slots.to_vec();
        self.fft_special_inv(&mut vals);
        let h = self.slots();
        let mut out = vec![0.0; self.n];
        for (i, v) in vals.iter().enumerate() {
            out[i] = v.re;
            out[i + h] = v.im;
        }
        out
    }

    /// Slot values of the real polynomial with coefficients `coeffs`.
    pub fn embed(&self, coeffs: &[f64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let h = self.slots();
        let mut vals: Vec<Complex64> = (0..h)
            .map(|i| Complex64::new(coeffs[i], coeffs[i + h]))
            .collect();
        self.fft_special(&mut vals);
        vals
    }

    /// Rounds `Δ·σ⁻¹(v)` for a real slot vector.
    pub fn encode_real(&self, v: &[f64], scale: f64) -> Vec<f64> {
        let slots: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.embed_inverse(&slots)
            .into_iter()
            .map(|c| (c * scale).round())
            .collect()
    }

    /// Real parts of the slots of `coeffs / Δ`.
    pub fn decode_real(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        let scaled: Vec<f64> = coeffs.iter().map(|&c| c / scale).collect();
        self.embed(&scaled).into_iter().map(|z| z.re).collect()
    }
}
