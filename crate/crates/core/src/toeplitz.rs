//! Toeplitz matrix-vector products `y_i = sum_j K[i - j] x_j` via FFT.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Sizes below this use the direct O(n^2) sum.
const DIRECT_LIMIT: usize = 96;

/// A square Toeplitz operator of order `n` with a precomputed kernel spectrum.
#[derive(Clone)]
pub struct Toeplitz {
    n: usize,
    kernel: Vec<f64>,
    size: usize,
    spectrum: Vec<Complex64>,
    forward: Option<Arc<dyn Fft<f64>>>,
    inverse: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Toeplitz {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Toeplitz").field("n", &self.n).field("size", &self.size).finish()
    }
}

impl Toeplitz {
    /// `kernel(k)` is sampled for `k = -(n-1) ..= n-1`.
    pub fn new(n: usize, kernel: impl Fn(i64) -> f64) -> Self {
        let kernel: Vec<f64> = (-(n as i64 - 1)..=(n as i64 - 1)).map(&kernel).collect();
        if n < DIRECT_LIMIT {
            return Self { n, kernel, size: 0, spectrum: Vec::new(), forward: None, inverse: None };
        }
        let size = (3 * n - 2).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (s, k) in spectrum.iter_mut().zip(&kernel) {
            s.re = *k;
        }
        forward.process(&mut spectrum);
        Self { n, kernel, size, spectrum, forward: Some(forward), inverse: Some(inverse) }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Kernel entry `K[k]`.
    pub fn entry(&self, k: i64) -> f64 {
        self.kernel[(k + self.n as i64 - 1) as usize]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "Toeplitz order mismatch");
        let n = self.n;
        match (&self.forward, &self.inverse) {
            (Some(fwd), Some(inv)) => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
                for (b, v) in buf.iter_mut().zip(x) {
                    b.re = *v;
                }
                fwd.process(&mut buf);
                for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                    *b *= s;
                }
                inv.process(&mut buf);
                let scale = 1.0 / self.size as f64;
                buf[n - 1..2 * n - 1].iter().map(|c| c.re * scale).collect()
            }
            _ => (0..n).map(|i| (0..n).map(|j| self.kernel[i + n - 1 - j] * x[j]).sum()).collect(),
        }
    }

    /// Row sums `sum_j K[i - j]`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.n])
    }
}
