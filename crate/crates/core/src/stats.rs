//! Piecewise-constant cell densities and the Kolmogorov-Smirnov distance.

use crate::error::{Error, Result};
use crate::grid::SpacetimeLattice;

/// Density that is constant on each lattice cell `[x_k - dx/2, x_k + dx/2)`.
///
/// The support is one spatial period starting at `x_min - dx/2`; positions
/// outside it are wrapped back in.
#[derive(Debug, Clone)]
pub struct CellDensity {
    lo: f64,
    dx: f64,
    period: f64,
    /// Probability mass of each cell.
    mass: Vec<f64>,
    /// `cumulative[k]` is the mass strictly left of cell `k`; one longer than `mass`.
    cumulative: Vec<f64>,
}

impl CellDensity {
    /// Normalises `weights` (one per cell) into a probability density.
    pub fn new(weights: &[f64], lattice: &SpacetimeLattice) -> Result<Self> {
        lattice.check_len(weights.len())?;
        if let Some((cell, &value)) = weights.iter().enumerate().find(|(_, &w)| w < 0.0 || w.is_nan()) {
            return Err(Error::NegativeDensity { cell, value });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Empty("density has no mass"));
        }
        let mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(mass.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for p in &mass {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Self {
            lo: lattice.x_min() - 0.5 * lattice.dx(),
            dx: lattice.dx(),
            period: lattice.length(),
            mass,
            cumulative,
        })
    }

    /// Maps `x` into the support interval.
    pub fn wrap(&self, x: f64) -> f64 {
        self.lo + (x - self.lo).rem_euclid(self.period)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let y = (self.wrap(x) - self.lo) / self.dx;
        let n = self.mass.len();
        let cell = (y.floor() as usize).min(n - 1);
        let frac = (y - cell as f64).clamp(0.0, 1.0);
        (self.cumulative[cell] + frac * self.mass[cell]).min(1.0)
    }

    /// Inverse CDF for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.mass.len();
        // last cell whose left cumulative is <= u, skipping empty cells
        let mut cell = self.cumulative[..n].partition_point(|&c| c <= u).saturating_sub(1);
        while self.mass[cell] == 0.0 && cell + 1 < n {
            cell += 1;
        }
        let frac = ((u - self.cumulative[cell]) / self.mass[cell]).clamp(0.0, 1.0);
        self.lo + (cell as f64 + frac) * self.dx
    }
}

/// One-sample KS distance `sup |F_n(x) - F(x)|` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples"));
    }
    let mut values: Vec<f64> = samples.iter().map(|&x| cdf(x)).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max))
}
