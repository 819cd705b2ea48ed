//! Discrete convolution `(W * rho)(y_i) = sum_j W(y_i - y_j) rho_j dy` on a
//! uniform grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Grid size above which the FFT path is used.
const FFT_THRESHOLD: usize = 256;

/// Precomputed kernel `k[d] = W(d dy)` for offsets `d = -(n-1) ..= n-1`.
pub struct Convolver {
    n: usize,
    dy: f64,
    kernel: Vec<f64>,
    fft: Option<FftPlan>,
}

struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

impl Convolver {
    pub fn new(n: usize, dy: f64, w: impl Fn(f64) -> f64) -> Self {
        let kernel: Vec<f64> = (0..2 * n - 1).map(|k| w((k as f64 - (n as f64 - 1.0)) * dy)).collect();
        let fft = (n > FFT_THRESHOLD).then(|| {
            let len = (3 * n).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let mut kernel_hat = vec![Complex::new(0.0, 0.0); len];
            for (k, &v) in kernel.iter().enumerate() {
                kernel_hat[k] = Complex::new(v, 0.0);
            }
            forward.process(&mut kernel_hat);
            FftPlan { len, forward, inverse, kernel_hat }
        });
        Self { n, dy, kernel, fft }
    }

    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        assert_eq!(rho.len(), self.n);
        match &self.fft {
            None => self.apply_direct(rho),
            Some(plan) => {
                let mut buf = vec![Complex::new(0.0, 0.0); plan.len];
                for (j, &r) in rho.iter().enumerate() {
                    buf[j] = Complex::new(r, 0.0);
                }
                plan.forward.process(&mut buf);
                for (b, k) in buf.iter_mut().zip(&plan.kernel_hat) {
                    *b *= k;
                }
                plan.inverse.process(&mut buf);
                let scale = self.dy / plan.len as f64;
                (0..self.n).map(|i| buf[i + self.n - 1].re * scale).collect()
            }
        }
    }

    pub fn apply_direct(&self, rho: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let off = i + n - 1;
                rho.iter().enumerate().map(|(j, r)| self.kernel[off - j] * r).sum::<f64>() * self.dy
            })
            .collect()
    }
}
