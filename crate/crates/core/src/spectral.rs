//! FFT plumbing shared by the propagators and spectral derivatives.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{wavenumbers, SpacetimeLattice};

/// Forward/inverse transforms plus the wavenumber table for one lattice.
///
/// The forward transform is unnormalised; [`Spectral::inverse`] divides by `nx`.
#[derive(Clone)]
pub struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("nx", &self.k.len()).finish()
    }
}

impl Spectral {
    pub fn new(lattice: &SpacetimeLattice) -> Self {
        let mut planner = FftPlanner::new();
        let n = lattice.nx();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: wavenumbers(lattice),
        }
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Spectral `d/dx` of a complex field.
    pub fn derivative(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        for (v, &k) in buf.iter_mut().zip(&self.k) {
            *v *= Complex64::new(0.0, k);
        }
        self.inverse(&mut buf);
        buf
    }

    /// Spectral `d/dx` of a real field; the Nyquist mode does not contribute.
    pub fn derivative_real(&self, values: &[f64]) -> Vec<f64> {
        let buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.derivative(&buf).into_iter().map(|c| c.re).collect()
    }
}
