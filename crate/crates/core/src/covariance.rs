//! Lorentz boosts of four-vectors, spinors and world lines.
//!
//! A boost with rapidity `eta` maps coordinates as
//! `t' = cosh(eta) t - sinh(eta) x`, `x' = -sinh(eta) t + cosh(eta) x`
//! (the primed frame moves with velocity `tanh(eta)`). Spinors transform with
//! `S(eta) = cosh(eta/2) - sinh(eta/2) gamma0 gamma1`, which satisfies
//! `current(S psi) = boost_vector(current(psi))` in this representation.

use crate::currents::dirac_current;
use crate::dynamics::SpinorField;
use crate::error::{Error, Result};
use crate::guidance::{Flag, FlagKind, Sample, WorldLine};
use crate::spinor::{self, Spinor};

pub const MAX_RAPIDITY: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    rapidity: f64,
}

impl BoostParams {
    pub fn new(rapidity: f64) -> Result<Self> {
        if !rapidity.is_finite() || rapidity.abs() > MAX_RAPIDITY {
            return Err(Error::RapidityOutOfRange(rapidity));
        }
        Ok(Self { rapidity })
    }

    pub fn rapidity(&self) -> f64 {
        self.rapidity
    }

    pub fn velocity(&self) -> f64 {
        self.rapidity.tanh()
    }
}

pub fn boost_vector(j0: f64, j1: f64, eta: f64) -> (f64, f64) {
    let (s, c) = (eta.sinh(), eta.cosh());
    (c * j0 - s * j1, -s * j0 + c * j1)
}

pub fn boost_spinor(psi: &Spinor, eta: f64) -> Spinor {
    let (s, c) = ((0.5 * eta).sinh(), (0.5 * eta).cosh());
    [psi[0] * c - psi[1] * s, psi[1] * c - psi[0] * s]
}

/// Applies `S(eta)` cell by cell.
pub fn boost_spinor_field(field: &SpinorField, eta: f64) -> SpinorField {
    SpinorField { values: field.values.iter().map(|p| boost_spinor(p, eta)).collect(), time_label: field.time_label }
}

/// Largest discrepancy between `current(S psi)` and `boost_vector(current(psi))`
/// over the given spinors.
pub fn pointwise_current_error(spinors: &[Spinor], eta: f64) -> f64 {
    spinors
        .iter()
        .map(|p| {
            let j = dirac_current(&SpinorField::new(vec![*p], 0.0));
            let jb = dirac_current(&SpinorField::new(vec![boost_spinor(p, eta)], 0.0));
            let (e0, e1) = boost_vector(j.j0[0], j.j1[0], eta);
            (jb.j0[0] - e0).abs().max((jb.j1[0] - e1).abs())
        })
        .fold(0.0, f64::max)
}

/// Covariance check on the analytic positive-energy plane wave
/// `u(k) exp(-i(E t - k x))`.
///
/// Returns the largest of: the current mismatch between the boosted spinor
/// and the vector-boosted current; the mass-shell mismatch of the boosted
/// wave vector `(E', k')`; the Dirac-equation residual `|h(k') S u - E' S u|`
/// of the boosted spinor; and the phase mismatch `(E t - k x) - (E' t' - k' x')`
/// at a few spacetime points.
pub fn covariance_error_planewave(k: f64, m: f64, eta: f64) -> f64 {
    let e = spinor::energy(k, m);
    let u = spinor::positive_energy(k, m);
    let ub = boost_spinor(&u, eta);
    let (e_b, k_b) = boost_vector(e, k, eta);

    let current = pointwise_current_error(&[u], eta);
    let shell = (e_b - spinor::energy(k_b, m)).abs();
    let h = [
        [num_complex::Complex64::new(m, 0.0), num_complex::Complex64::new(k_b, 0.0)],
        [num_complex::Complex64::new(k_b, 0.0), num_complex::Complex64::new(-m, 0.0)],
    ];
    let hu = spinor::apply(&h, &ub);
    let dirac = ((hu[0] - ub[0] * e_b).norm()).max((hu[1] - ub[1] * e_b).norm());
    let phase = [(0.0, 0.0), (1.0, 0.5), (-2.0, 3.0), (0.7, -1.3)]
        .iter()
        .map(|&(t, x)| {
            let (tb, xb) = boost_vector(t, x, eta);
            ((e * t - k * x) - (e_b * tb - k_b * xb)).abs()
        })
        .fold(0.0, f64::max);
    current.max(shell).max(dirac).max(phase)
}

/// Relativistic velocity addition `(v - w) / (1 - v w)` with `w = tanh(eta)`.
pub fn boost_velocity(v: f64, eta: f64) -> f64 {
    let w = eta.tanh();
    (v - w) / (1.0 - v * w)
}

/// Maps every sample into the boosted frame and re-sorts by the new time.
///
/// A line whose samples change order (possible only across superluminal
/// segments) carries a [`FlagKind::FrameOrderReversal`] flag. Flags are
/// remapped to the new sample indices.
pub fn boost_worldline(worldline: &WorldLine, eta: f64) -> WorldLine {
    let mut indexed: Vec<(usize, Sample)> = worldline
        .samples
        .iter()
        .map(|s| {
            let (t, x) = boost_vector(s.t, s.x, eta);
            let u = s.u.map(|(u0, u1)| boost_vector(u0, u1, eta));
            (0, Sample { t, x, v: boost_velocity(s.v, eta), u })
        })
        .enumerate()
        .map(|(i, (_, s))| (i, s))
        .collect();
    let monotone = indexed.windows(2).all(|w| w[1].1.t > w[0].1.t);
    indexed.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
    let mut position = vec![0usize; indexed.len()];
    for (new, (old, _)) in indexed.iter().enumerate() {
        position[*old] = new;
    }
    let mut flags: Vec<Flag> =
        worldline.flags.iter().map(|f| Flag { sample: position.get(f.sample).copied().unwrap_or(f.sample), kind: f.kind }).collect();
    if !monotone {
        flags.push(Flag { sample: 0, kind: FlagKind::FrameOrderReversal });
    }
    WorldLine { samples: indexed.into_iter().map(|(_, s)| s).collect(), flags }
}
