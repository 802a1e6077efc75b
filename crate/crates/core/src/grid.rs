//! Cubic collocation grid and the 3-D FFT pair used for pseudo-spectral products.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::ModeSet;

/// `g³` collocation points `x = (N/g)·j` on the torus. Values at grid points and
/// series coefficients are related by `f(x_j) = Σ_k c_k e^{2πi k·j/g}`.
#[derive(Clone)]
pub(crate) struct SpectralGrid {
    g: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("g", &self.g).finish()
    }
}

impl SpectralGrid {
    pub(crate) fn new(g: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            g,
            forward: planner.plan_fft_forward(g),
            inverse: planner.plan_fft_inverse(g),
        }
    }


    pub(crate) fn len(&self) -> usize {
        self.g * self.g * self.g
    }

    pub(crate) fn index(&self, k: [i32; 3]) -> usize {
        let g = self.g as i32;
        let w = |x: i32| x.rem_euclid(g) as usize;
        (w(k[0]) * self.g + w(k[1])) * self.g + w(k[2])
    }

    /// Grid indices of every mode of `modes`, in mode order.
    pub(crate) fn indices(&self, modes: &ModeSet) -> Vec<usize> {
        modes.modes().iter().map(|&k| self.index(k)).collect()
    }

    /// Evaluates a band-limited series on the grid.
    pub(crate) fn synthesize(&self, slots: &[usize], coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut data = vec![Complex64::new(0.0, 0.0); self.len()];
        for (&s, &c) in slots.iter().zip(coeffs) {
            data[s] += c;
        }
        self.transform(&mut data, &*self.inverse);
        data
    }

    /// Series coefficients of grid values, read back at `slots`.
    pub(crate) fn analyze(&self, mut data: Vec<Complex64>, slots: &[usize]) -> Vec<Complex64> {
        self.transform(&mut data, &*self.forward);
        let scale = 1.0 / self.len() as f64;
        slots.iter().map(|&s| data[s] * scale).collect()
    }

    fn transform(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let g = self.g;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // last axis is contiguous
        for row in data.chunks_exact_mut(g) {
            fft.process_with_scratch(row, &mut scratch);
        }
        let mut line = vec![Complex64::new(0.0, 0.0); g];
        for a in 0..g {
            for c in 0..g {
                for b in 0..g {
                    line[b] = data[(a * g + b) * g + c];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for b in 0..g {
                    data[(a * g + b) * g + c] = line[b];
                }
            }
        }
        for b in 0..g {
            for c in 0..g {
                for a in 0..g {
                    line[a] = data[(a * g + b) * g + c];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for a in 0..g {
                    data[(a * g + b) * g + c] = line[a];
                }
            }
        }
    }
}
