//! Two non-interacting entangled particles with a final boundary condition.
//!
//! The joint state lives on the `nx x nx` configuration grid with four spinor
//! components `(a, b)` (particle 1 index `a`, particle 2 index `b`). Each
//! final-boundary channel is a product `f1 (x) f2` from a complete orthonormal
//! basis at the final time. Contracting the joint state with the other
//! particle's final wavefunction gives each particle its own wavefunction on
//! ordinary space, and the two-state weak current of that wavefunction is the
//! particle's current for the channel. Averaging over channels with Born
//! weights `|<f1 f2|Psi>|^2` returns twice the ordinary marginal current.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::currents::{overlap_floor, weak_current, CausalClass, FourCurrentField, Overlap};
use crate::dynamics::{same_time, Direction, SpinorField};
use crate::error::{Error, Result};
use crate::grid::{wavenumbers, BasisKind, SpacetimeLattice};
use crate::spinor::{self, Spinor};

/// Channels with Born weight below this are marked negligible (but still summed).
pub const WEIGHT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Particle {
    One,
    Two,
}

impl Particle {
    pub fn other(self) -> Self {
        match self {
            Particle::One => Particle::Two,
            Particle::Two => Particle::One,
        }
    }
}

/// Joint two-particle spinor field. Cell `(i1, i2)` is stored at
/// `i1 * nx + i2`; component `2a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointField {
    nx: usize,
    pub values: Vec<[Complex64; 4]>,
    pub time_label: f64,
}

impl JointField {
    pub fn zeros(nx: usize, time_label: f64) -> Self {
        Self { nx, values: vec![[Complex64::default(); 4]; nx * nx], time_label }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn at(&self, i1: usize, i2: usize) -> &[Complex64; 4] {
        &self.values[i1 * self.nx + i2]
    }

    /// `f (x) g`.
    pub fn product(f: &SpinorField, g: &SpinorField) -> Self {
        let nx = f.len();
        let mut out = Self::zeros(nx, f.time_label);
        for (i1, a) in f.values.iter().enumerate() {
            for (i2, b) in g.values.iter().enumerate() {
                out.values[i1 * nx + i2] = [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]];
            }
        }
        out
    }

    /// `dx^2 sum |Psi|^2`.
    pub fn norm(&self, lattice: &SpacetimeLattice) -> f64 {
        let s: f64 = self.values.iter().flat_map(|c| c.iter()).map(Complex64::norm_sqr).sum();
        s * lattice.dx() * lattice.dx()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            nx: self.nx,
            values: self.values.iter().map(|v| [v[0] * c, v[1] * c, v[2] * c, v[3] * c]).collect(),
            time_label: self.time_label,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            nx: self.nx,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
                .collect(),
            time_label: self.time_label,
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| (0..4).map(move |c| (a[c] - b[c]).norm()))
            .fold(0.0, f64::max)
    }

    fn normalized(self, lattice: &SpacetimeLattice) -> Self {
        let n = self.norm(lattice).sqrt();
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    fn check(&self, lattice: &SpacetimeLattice) -> Result<()> {
        lattice.check_len(self.nx)?;
        if self.values.len() != self.nx * self.nx {
            return Err(Error::LengthMismatch { expected: self.nx * self.nx, found: self.values.len() });
        }
        Ok(())
    }
}

/// Normalised `c1 (A1 (x) A2) + c2 (B1 (x) B2)`.
pub fn entangled_joint_state(
    a1: &SpinorField,
    b1: &SpinorField,
    a2: &SpinorField,
    b2: &SpinorField,
    c1: Complex64,
    c2: Complex64,
    lattice: &SpacetimeLattice,
) -> Result<JointField> {
    for f in [a1, b1, a2, b2] {
        lattice.check_len(f.len())?;
    }
    if c1 == Complex64::default() && c2 == Complex64::default() {
        return Err(Error::ZeroCoefficients);
    }
    let joint = JointField::product(a1, a2).scaled(c1).add(&JointField::product(b1, b2).scaled(c2));
    Ok(joint.normalized(lattice))
}

/// Normalised joint state with independent uniform random real and imaginary parts.
pub fn random_joint_state(lattice: &SpacetimeLattice, seed: u64) -> JointField {
    let nx = lattice.nx();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut joint = JointField::zeros(nx, 0.0);
    for cell in &mut joint.values {
        for c in cell.iter_mut() {
            *c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    joint.normalized(lattice)
}

fn fft_2d(values: &mut [[Complex64; 4]], nx: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(nx) } else { planner.plan_fft_forward(nx) };
    let mut buf = vec![Complex64::default(); nx * nx];
    let mut col = vec![Complex64::default(); nx * nx];
    for c in 0..4 {
        for (b, v) in buf.iter_mut().zip(values.iter()) {
            *b = v[c];
        }
        // rows: contiguous in i2
        fft.process(&mut buf);
        // columns: transpose, transform, transpose back
        for i1 in 0..nx {
            for i2 in 0..nx {
                col[i2 * nx + i1] = buf[i1 * nx + i2];
            }
        }
        fft.process(&mut col);
        let scale = if inverse { 1.0 / (nx * nx) as f64 } else { 1.0 };
        for i1 in 0..nx {
            for i2 in 0..nx {
                values[i1 * nx + i2][c] = col[i2 * nx + i1] * scale;
            }
        }
    }
}

/// Free evolution with `H = h1 (x) 1 + 1 (x) h2`, exact per 2-D Fourier mode.
/// Returns `n_steps + 1` slices starting with `joint`.
pub fn evolve_joint(
    joint: &JointField,
    lattice: &SpacetimeLattice,
    m1: f64,
    m2: f64,
    n_steps: usize,
    direction: Direction,
) -> Result<Vec<JointField>> {
    joint.check(lattice)?;
    let nx = lattice.nx();
    let step = direction.sign() * lattice.dt();
    let k = wavenumbers(lattice);
    let u1: Vec<_> = k.iter().map(|&k| spinor::propagator(k, m1, step)).collect();
    let u2: Vec<_> = k.iter().map(|&k| spinor::propagator(k, m2, step)).collect();

    let mut hat = joint.values.clone();
    fft_2d(&mut hat, nx, false);
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(joint.clone());
    for s in 1..=n_steps {
        for i1 in 0..nx {
            for i2 in 0..nx {
                let v = &mut hat[i1 * nx + i2];
                let (p, q) = (&u1[i1], &u2[i2]);
                // particle 2 index b, then particle 1 index a
                let mut w = [Complex64::default(); 4];
                for a in 0..2 {
                    let r = spinor::apply(q, &[v[2 * a], v[2 * a + 1]]);
                    w[2 * a] = r[0];
                    w[2 * a + 1] = r[1];
                }
                for b in 0..2 {
                    let r = spinor::apply(p, &[w[b], w[2 + b]]);
                    v[b] = r[0];
                    v[2 + b] = r[1];
                }
            }
        }
        let mut slice = hat.clone();
        fft_2d(&mut slice, nx, true);
        out.push(JointField { nx, values: slice, time_label: joint.time_label + s as f64 * step });
    }
    Ok(out)
}

/// Partial inner product with the other particle's wavefunction:
/// for `which = One`, `psi(x1)_a = dx sum_{x2, b} conj(f_b(x2)) Psi_ab(x1, x2)`.
pub fn conditional_field(
    joint: &JointField,
    f_other: &SpinorField,
    which: Particle,
    lattice: &SpacetimeLattice,
) -> Result<SpinorField> {
    joint.check(lattice)?;
    lattice.check_len(f_other.len())?;
    if !same_time(joint.time_label, f_other.time_label) {
        return Err(Error::TimeMismatch { left: joint.time_label, right: f_other.time_label });
    }
    let nx = joint.nx;
    let dx = lattice.dx();
    let mut out = SpinorField::zeros(nx, joint.time_label);
    let conj: Vec<Spinor> = f_other.values.iter().map(|s| [s[0].conj(), s[1].conj()]).collect();
    match which {
        Particle::One => {
            for (i1, o) in out.values.iter_mut().enumerate() {
                let mut acc = [Complex64::default(); 2];
                for (i2, f) in conj.iter().enumerate() {
                    let v = joint.at(i1, i2);
                    acc[0] += f[0] * v[0] + f[1] * v[1];
                    acc[1] += f[0] * v[2] + f[1] * v[3];
                }
                *o = [acc[0] * dx, acc[1] * dx];
            }
        }
        Particle::Two => {
            for (i2, o) in out.values.iter_mut().enumerate() {
                let mut acc = [Complex64::default(); 2];
                for (i1, f) in conj.iter().enumerate() {
                    let v = joint.at(i1, i2);
                    acc[0] += f[0] * v[0] + f[1] * v[2];
                    acc[1] += f[0] * v[1] + f[1] * v[3];
                }
                *o = [acc[0] * dx, acc[1] * dx];
            }
        }
    }
    Ok(out)
}

/// Complete orthonormal single-particle basis with `2 nx` elements:
/// element `i` has spinor component `i % 2` and cell or mode `i / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalBasis {
    pub kind: BasisKind,
    pub lattice: SpacetimeLattice,
    pub time_label: f64,
}

impl FinalBasis {
    pub fn size(&self) -> usize {
        2 * self.lattice.nx()
    }

    pub fn element(&self, index: usize) -> SpinorField {
        let nx = self.lattice.nx();
        let (cell, comp) = (index / 2, index % 2);
        let mut f = SpinorField::zeros(nx, self.time_label);
        match self.kind {
            BasisKind::Position => {
                f.values[cell][comp] = Complex64::new(1.0 / self.lattice.dx().sqrt(), 0.0);
            }
            BasisKind::Momentum => {
                let k = wavenumbers(&self.lattice)[cell];
                let amp = 1.0 / self.lattice.length().sqrt();
                for (j, v) in f.values.iter_mut().enumerate() {
                    v[comp] = Complex64::from_polar(amp, k * (self.lattice.x(j) - self.lattice.x_min()));
                }
            }
        }
        f
    }

    pub fn describe(&self) -> &'static str {
        match self.kind {
            BasisKind::Position => "position",
            BasisKind::Momentum => "momentum",
        }
    }
}

/// One final-boundary outcome `f1 (x) f2` with amplitude `N_f = <f1 f2|Psi>`.
/// The basis elements are referenced by index into the ensemble's basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalChannel {
    pub index1: usize,
    pub index2: usize,
    pub amplitude: Complex64,
    pub weight: f64,
    pub negligible: bool,
}

impl FinalChannel {
    pub fn index(&self, which: Particle) -> usize {
        match which {
            Particle::One => self.index1,
            Particle::Two => self.index2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    pub basis: FinalBasis,
    pub channels: Vec<FinalChannel>,
    pub complete: bool,
}

impl ChannelEnsemble {
    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.channels.iter().map(|c| c.weight).collect::<Vec<_>>())
    }

    pub fn f1(&self, channel: &FinalChannel) -> SpinorField {
        self.basis.element(channel.index1)
    }

    pub fn f2(&self, channel: &FinalChannel) -> SpinorField {
        self.basis.element(channel.index2)
    }

    /// Copy with channel `index` removed; the result is no longer complete.
    pub fn without_channel(&self, index: usize) -> Self {
        let mut channels = self.channels.clone();
        channels.remove(index);
        Self { basis: self.basis, channels, complete: false }
    }

    fn expected_len(&self) -> usize {
        self.basis.size() * self.basis.size()
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Channels over the complete product basis at the joint state's time, in
/// `(index1, index2)` order.
pub fn final_channel_ensemble(joint_at_t: &JointField, lattice: &SpacetimeLattice, kind: BasisKind) -> Result<ChannelEnsemble> {
    joint_at_t.check(lattice)?;
    let basis = FinalBasis { kind, lattice: *lattice, time_label: joint_at_t.time_label };
    let size = basis.size();
    let elements: Vec<SpinorField> = (0..size).map(|i| basis.element(i)).collect();
    let channels: Vec<Vec<FinalChannel>> = (0..size)
        .into_par_iter()
        .map(|i2| -> Result<Vec<FinalChannel>> {
            let psi1 = conditional_field(joint_at_t, &elements[i2], Particle::One, lattice)?;
            Ok(elements
                .iter()
                .enumerate()
                .map(|(i1, f1)| {
                    let amplitude = inner(f1, &psi1, lattice);
                    let weight = amplitude.norm_sqr();
                    FinalChannel { index1: i1, index2: i2, amplitude, weight, negligible: weight < WEIGHT_FLOOR }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    // reorder to (index1, index2)
    let mut ordered = vec![None; size * size];
    for row in channels {
        for c in row {
            ordered[c.index1 * size + c.index2] = Some(c);
        }
    }
    Ok(ChannelEnsemble { basis, channels: ordered.into_iter().flatten().collect(), complete: true })
}

fn inner(f: &SpinorField, g: &SpinorField, lattice: &SpacetimeLattice) -> Complex64 {
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| spinor::inner(a, b)).sum();
    s * lattice.dx()
}

/// Weak current of one particle for one channel: `psi_i` is the conditional
/// field given the other particle's final wavefunction, `psi_f` is this
/// particle's final wavefunction and `N` the channel amplitude.
pub fn per_particle_weak_current(
    ensemble: &ChannelEnsemble,
    channel: &FinalChannel,
    joint: &JointField,
    which: Particle,
    lattice: &SpacetimeLattice,
) -> Result<FourCurrentField> {
    let f_other = ensemble.basis.element(channel.index(which.other()));
    let psi_f = ensemble.basis.element(channel.index(which));
    let psi_i = conditional_field(joint, &f_other, which, lattice)?;
    weak_current(&psi_i, &psi_f, &Overlap { value: channel.amplitude, time_label: joint.time_label }, lattice)
}

/// Born-weighted channel sum together with per-channel diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BornAverage {
    pub current: FourCurrentField,
    /// Channels at or below the overlap floor; their contribution is taken
    /// as the finite limit `2 Re[conj(N) bar f gamma psi_i]` of `weight * j`.
    pub degenerate_channels: usize,
    /// Non-degenerate channels whose weak current has a spacelike or negative-`j0` cell.
    pub flagged_channels: usize,
}

/// `sum_f weight_f * j_f` over a complete ensemble. Requires completeness.
pub fn born_average_current(
    ensemble: &ChannelEnsemble,
    joint: &JointField,
    which: Particle,
    lattice: &SpacetimeLattice,
) -> Result<FourCurrentField> {
    born_average_detailed(ensemble, joint, which, lattice).map(|b| b.current)
}

pub fn born_average_detailed(
    ensemble: &ChannelEnsemble,
    joint: &JointField,
    which: Particle,
    lattice: &SpacetimeLattice,
) -> Result<BornAverage> {
    if !ensemble.complete || ensemble.channels.len() != ensemble.expected_len() {
        return Err(Error::IncompleteEnsemble { expected: ensemble.expected_len(), found: ensemble.channels.len() });
    }
    joint.check(lattice)?;
    let nx = lattice.nx();
    let size = ensemble.basis.size();
    let elements: Vec<SpinorField> = (0..size).map(|i| ensemble.basis.element(i)).collect();

    // group channels by the other particle's index; the conditional field is shared
    let mut groups: Vec<Vec<&FinalChannel>> = vec![Vec::new(); size];
    for c in &ensemble.channels {
        groups[c.index(which.other())].push(c);
    }
    let partials: Vec<(FourCurrentField, usize, usize)> = groups
        .par_iter()
        .enumerate()
        .map(|(other, chans)| -> Result<_> {
            let psi_i = conditional_field(joint, &elements[other], which, lattice)?;
            let mut acc = FourCurrentField::zeros(nx, joint.time_label);
            let (mut degenerate, mut flagged) = (0, 0);
            for c in chans {
                let f = &elements[c.index(which)];
                let n = Overlap { value: c.amplitude, time_label: joint.time_label };
                if c.amplitude.norm() > overlap_floor(&psi_i, f, lattice) {
                    let j = weak_current(&psi_i, f, &n, lattice)?;
                    if j.j0.iter().zip(&j.j1).any(|(&a, &b)| a < 0.0 || CausalClass::of(a, b) == CausalClass::Spacelike) {
                        flagged += 1;
                    }
                    for k in 0..nx {
                        acc.j0[k] += c.weight * j.j0[k];
                        acc.j1[k] += c.weight * j.j1[k];
                    }
                } else {
                    degenerate += 1;
                    let nc = c.amplitude.conj();
                    for k in 0..nx {
                        let (b0, b1) = spinor::bilinears(&f.values[k], &psi_i.values[k]);
                        acc.j0[k] += 2.0 * (nc * b0).re;
                        acc.j1[k] += 2.0 * (nc * b1).re;
                    }
                }
            }
            Ok((acc, degenerate, flagged))
        })
        .collect::<Result<_>>()?;
    let current = tree_sum(&partials.iter().map(|p| &p.0).collect::<Vec<_>>(), nx, joint.time_label);
    Ok(BornAverage {
        current,
        degenerate_channels: partials.iter().map(|p| p.1).sum(),
        flagged_channels: partials.iter().map(|p| p.2).sum(),
    })
}

fn tree_sum(parts: &[&FourCurrentField], nx: usize, time_label: f64) -> FourCurrentField {
    match parts.len() {
        0 => FourCurrentField::zeros(nx, time_label),
        1 => parts[0].clone(),
        n => {
            let (a, b) = parts.split_at(n / 2);
            let (mut x, y) = rayon::join(|| tree_sum(a, nx, time_label), || tree_sum(b, nx, time_label));
            for k in 0..nx {
                x.j0[k] += y.j0[k];
                x.j1[k] += y.j1[k];
            }
            x
        }
    }
}

/// Standard current of one particle with the other traced out:
/// `j^a(x1) = dx sum_{x2} Psi^dagger (gamma0 gamma^a (x) 1) Psi`.
pub fn marginal_current(joint: &JointField, which: Particle, lattice: &SpacetimeLattice) -> Result<FourCurrentField> {
    joint.check(lattice)?;
    let nx = joint.nx;
    let dx = lattice.dx();
    let mut out = FourCurrentField::zeros(nx, joint.time_label);
    for i1 in 0..nx {
        for i2 in 0..nx {
            let v = joint.at(i1, i2);
            // for each value of the traced index, the spinor of the kept particle
            let pairs: [Spinor; 2] = match which {
                Particle::One => [[v[0], v[2]], [v[1], v[3]]],
                Particle::Two => [[v[0], v[1]], [v[2], v[3]]],
            };
            let cell = if which == Particle::One { i1 } else { i2 };
            for s in &pairs {
                let (a, b) = spinor::bilinears(s, s);
                out.j0[cell] += a.re * dx;
                out.j1[cell] += b.re * dx;
            }
        }
    }
    Ok(out)
}

/// `Tr(rho1^2)` for the reduced state of particle 1.
pub fn reduced_purity(joint: &JointField, lattice: &SpacetimeLattice) -> Result<f64> {
    joint.check(lattice)?;
    let nx = joint.nx;
    let dim = 2 * nx;
    let dx = lattice.dx();
    // M[(i1, a), (i2, b)] = dx Psi_ab(i1, i2)
    let m = |r: usize, c: usize| joint.at(r / 2, c / 2)[2 * (r % 2) + c % 2] * dx;
    let rows: Vec<Vec<Complex64>> = (0..dim).map(|r| (0..dim).map(|c| m(r, c)).collect()).collect();
    let purity: f64 = (0..dim)
        .into_par_iter()
        .map(|r| {
            (0..dim)
                .map(|s| {
                    let rho: Complex64 = rows[r].iter().zip(&rows[s]).map(|(a, b)| a * b.conj()).sum();
                    rho.norm_sqr()
                })
                .sum::<f64>()
        })
        .sum();
    Ok(purity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::dirac_current;
    use crate::dynamics::{evolve_dirac, gaussian_packet};

    fn lattice() -> SpacetimeLattice {
        SpacetimeLattice::centered(64, 0.25, 10, 0.05).unwrap()
    }

    fn packets(lat: &SpacetimeLattice) -> (SpinorField, SpinorField) {
        (gaussian_packet(lat, 1.0, -4.0, 1.0, 0.5).unwrap(), gaussian_packet(lat, 1.0, 4.0, 1.0, -0.5).unwrap())
    }

    fn random_field(lat: &SpacetimeLattice, seed: u64) -> SpinorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = SpinorField::zeros(lat.nx(), 0.0);
        for v in &mut f.values {
            for s in v.iter_mut() {
                *s = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let n = crate::dynamics::field_norm(&f, lat).sqrt();
        f.scaled(c(1.0 / n))
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_coefficients_rejected() {
        let lat = lattice();
        let (a, b) = packets(&lat);
        assert!(matches!(entangled_joint_state(&a, &b, &a, &b, c(0.0), c(0.0), &lat), Err(Error::ZeroCoefficients)));
    }

    #[test]
    fn product_state_conditionals() {
        let lat = lattice();
        let (a, b) = packets(&lat);
        let joint = entangled_joint_state(&a, &b, &b, &a, c(1.0), c(0.0), &lat).unwrap();
        assert!((joint.norm(&lat) - 1.0).abs() < 1e-12);
        let phi = conditional_field(&joint, &b, Particle::One, &lat).unwrap();
        let err = phi.values.iter().zip(&a.values).map(|(x, y)| (x[0] - y[0]).norm().max((x[1] - y[1]).norm())).fold(0.0, f64::max);
        assert!(err < 1e-12);
        // orthogonal partner gives the zero field
        let mut perp = SpinorField::zeros(64, 0.0);
        for (i, v) in perp.values.iter_mut().enumerate() {
            v[0] = b.values[i][1].conj();
            v[1] = -b.values[i][0].conj();
        }
        // (conj b2, -conj b1) is pointwise orthogonal to b
        let zero = conditional_field(&joint, &perp, Particle::One, &lat).unwrap();
        assert!(zero.values.iter().all(|v| v[0].norm() < 1e-13 && v[1].norm() < 1e-13));
    }

    #[test]
    fn branch_selection() {
        let lat = lattice();
        let (a, b) = packets(&lat);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let joint = entangled_joint_state(&a, &b, &a, &b, c(r), c(r), &lat).unwrap();
        // oracle: <a|b> is tiny but not zero; direct expansion gives
        // psi = (c1 a + c2 <a|b> b) / norm
        let ab = inner(&a, &b, &lat);
        let psi = conditional_field(&joint, &a, Particle::One, &lat).unwrap();
        let nrm = joint_norm_factor(&a, &b, &a, &b, c(r), c(r), &lat);
        for (k, v) in psi.values.iter().enumerate() {
            for s in 0..2 {
                let expect = (c(r) * a.values[k][s] + c(r) * ab * b.values[k][s]) / nrm;
                assert!((v[s] - expect).norm() < 1e-13);
            }
        }
    }

    fn joint_norm_factor(a1: &SpinorField, b1: &SpinorField, a2: &SpinorField, b2: &SpinorField, c1: Complex64, c2: Complex64, lat: &SpacetimeLattice) -> f64 {
        JointField::product(a1, a2).scaled(c1).add(&JointField::product(b1, b2).scaled(c2)).norm(lat).sqrt()
    }

    #[test]
    fn swap_symmetry() {
        let lat = lattice();
        let (a, b) = packets(&lat);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let j1 = entangled_joint_state(&a, &b, &a, &b, c(r), c(r), &lat).unwrap();
        let j2 = entangled_joint_state(&b, &a, &b, &a, c(r), c(r), &lat).unwrap();
        assert!(j1.max_abs_diff(&j2) < 1e-14);
    }

    fn orthonormal_pair(lat: &SpacetimeLattice) -> (SpinorField, SpinorField) {
        let (a, b) = packets(lat);
        let ab = inner(&a, &b, lat);
        let mut b2 = SpinorField::zeros(lat.nx(), 0.0);
        for k in 0..lat.nx() {
            for s in 0..2 {
                b2.values[k][s] = b.values[k][s] - ab * a.values[k][s];
            }
        }
        let n = crate::dynamics::field_norm(&b2, lat).sqrt();
        (a, b2.scaled(c(1.0 / n)))
    }

    #[test]
    fn purity_of_two_branch_state() {
        let lat = lattice();
        let (a, b) = orthonormal_pair(&lat);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let joint = entangled_joint_state(&a, &b, &a, &b, c(r), c(r), &lat).unwrap();
        assert!((joint.norm(&lat) - 1.0).abs() < 1e-12);
        // oracle: explicit partial trace rho1[(i,a),(j,b)] = dx^2 sum_{k,c} Psi Psi*
        let nx = lat.nx();
        let dx = lat.dx();
        let mut rho = vec![vec![Complex64::default(); 2 * nx]; 2 * nx];
        for i in 0..nx {
            for a_ in 0..2 {
                for j in 0..nx {
                    for b_ in 0..2 {
                        let mut s = Complex64::default();
                        for k in 0..nx {
                            for c_ in 0..2 {
                                s += joint.at(i, k)[2 * a_ + c_] * joint.at(j, k)[2 * b_ + c_].conj();
                            }
                        }
                        rho[2 * i + a_][2 * j + b_] = s * dx * dx;
                    }
                }
            }
        }
        let brute: f64 = rho.iter().flat_map(|r| r.iter()).map(|v| v.norm_sqr()).sum();
        let p = reduced_purity(&joint, &lat).unwrap();
        assert!((p - brute).abs() < 1e-12);
        assert!((p - 0.5).abs() < 1e-10);
        let prod = entangled_joint_state(&a, &b, &a, &b, c(1.0), c(0.0), &lat).unwrap();
        assert!((reduced_purity(&prod, &lat).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn joint_evolution_factorises() {
        let lat = lattice();
        let (a, b) = packets(&lat);
        let joint = JointField::product(&a, &b);
        let h = evolve_joint(&joint, &lat, 1.0, 0.6, 10, Direction::Forward).unwrap();
        let ha = evolve_dirac(&a, &lat, 1.0, 10, Direction::Forward).unwrap();
        let hb = evolve_dirac(&b, &lat, 0.6, 10, Direction::Forward).unwrap();
        let expect = JointField::product(ha.last(), hb.last());
        assert!(h.last().unwrap().max_abs_diff(&expect) < 1e-12);
        assert!((h.last().unwrap().norm(&lat) - joint.norm(&lat)).abs() < 1e-10);
        let back = evolve_joint(h.last().unwrap(), &lat, 1.0, 0.6, 10, Direction::Backward).unwrap();
        assert!(back.last().unwrap().max_abs_diff(&joint) < 1e-10);
        let id = evolve_joint(&joint, &lat, 1.0, 0.6, 0, Direction::Forward).unwrap();
        assert_eq!(id, vec![joint]);
    }

    #[test]
    fn channel_weights_form_distribution() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let joint = random_joint_state(&lat, 3);
        for kind in [BasisKind::Position, BasisKind::Momentum] {
            let e = final_channel_ensemble(&joint, &lat, kind).unwrap();
            assert_eq!(e.channels.len(), 32 * 32);
            assert!((e.total_weight() - 1.0).abs() < 1e-10);
            assert!(e.channels.iter().all(|c| c.weight >= 0.0));
            // oracle: brute-force amplitude dx^2 sum conj(f1) conj(f2) Psi
            for ch in e.channels.iter().step_by(97) {
                let (f1, f2) = (e.f1(ch), e.f2(ch));
                let mut s = Complex64::default();
                for i1 in 0..16 {
                    for i2 in 0..16 {
                        let v = joint.at(i1, i2);
                        for a in 0..2 {
                            for b in 0..2 {
                                s += f1.values[i1][a].conj() * f2.values[i2][b].conj() * v[2 * a + b];
                            }
                        }
                    }
                }
                assert!((s * 0.25 - ch.amplitude).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn product_weights_factorise() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let (a, b) = (random_field(&lat, 21), random_field(&lat, 22));
        let joint = JointField::product(&a, &b);
        let e = final_channel_ensemble(&joint, &lat, BasisKind::Position).unwrap();
        let basis = e.basis;
        for ch in &e.channels {
            let w1 = inner(&basis.element(ch.index1), &a, &lat).norm_sqr();
            let w2 = inner(&basis.element(ch.index2), &b, &lat).norm_sqr();
            assert!((ch.weight - w1 * w2).abs() < 1e-12);
        }
    }

    #[test]
    fn born_average_recovers_marginal() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let joint = random_joint_state(&lat, 11);
        for kind in [BasisKind::Position, BasisKind::Momentum] {
            let e = final_channel_ensemble(&joint, &lat, kind).unwrap();
            for which in [Particle::One, Particle::Two] {
                let avg = born_average_current(&e, &joint, which, &lat).unwrap();
                let marg = marginal_current(&joint, which, &lat).unwrap();
                assert!(avg.max_abs_diff(&marg.scaled(2.0)) < 1e-10);
                assert!((marg.charge(&lat) - 1.0).abs() < 1e-10);
            }
        }
        let e = final_channel_ensemble(&joint, &lat, BasisKind::Position).unwrap();
        assert!(matches!(
            born_average_current(&e.without_channel(5), &joint, Particle::One, &lat),
            Err(Error::IncompleteEnsemble { .. })
        ));
    }

    #[test]
    fn per_particle_current_matches_contraction() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let joint = random_joint_state(&lat, 5);
        let e = final_channel_ensemble(&joint, &lat, BasisKind::Momentum).unwrap();
        let ch = e.channels[77];
        let j = per_particle_weak_current(&e, &ch, &joint, Particle::One, &lat).unwrap();
        // oracle: 2 Re[(1/N) bar f1 gamma^a <f2|Psi>] with <f2|Psi> contracted by hand
        let (f1, f2) = (e.f1(&ch), e.f2(&ch));
        for x1 in 0..16 {
            let mut chi = [Complex64::default(); 2];
            for x2 in 0..16 {
                let v = joint.at(x1, x2);
                for a in 0..2 {
                    for b in 0..2 {
                        chi[a] += f2.values[x2][b].conj() * v[2 * a + b] * 0.5;
                    }
                }
            }
            let f = f1.values[x1];
            let j0 = 2.0 * ((f[0].conj() * chi[0] + f[1].conj() * chi[1]) / ch.amplitude).re;
            let j1 = 2.0 * ((f[0].conj() * chi[1] + f[1].conj() * chi[0]) / ch.amplitude).re;
            assert!((j.j0[x1] - j0).abs() < 1e-12 && (j.j1[x1] - j1).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_channel_gives_twice_standard_current() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let joint = random_joint_state(&lat, 9);
        let basis = FinalBasis { kind: BasisKind::Momentum, lattice: lat, time_label: 0.0 };
        let f2 = basis.element(3);
        let psi = conditional_field(&joint, &f2, Particle::One, &lat).unwrap();
        let norm = crate::dynamics::field_norm(&psi, &lat).sqrt();
        let f1 = psi.scaled(c(1.0 / norm));
        let n = Overlap { value: inner(&f1, &psi, &lat), time_label: 0.0 };
        let j = weak_current(&psi, &f1, &n, &lat).unwrap();
        let expect = dirac_current(&f1).scaled(2.0);
        assert!(j.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn conditional_is_linear_and_antilinear() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let j1 = random_joint_state(&lat, 1);
        let j2 = random_joint_state(&lat, 2);
        let basis = FinalBasis { kind: BasisKind::Momentum, lattice: lat, time_label: 0.0 };
        let (f, g) = (basis.element(4), basis.element(9));
        let (al, be) = (Complex64::new(0.3, -1.1), Complex64::new(-0.7, 0.4));
        let lhs = conditional_field(&j1.scaled(al).add(&j2.scaled(be)), &f, Particle::Two, &lat).unwrap();
        let a = conditional_field(&j1, &f, Particle::Two, &lat).unwrap();
        let b = conditional_field(&j2, &f, Particle::Two, &lat).unwrap();
        for k in 0..16 {
            for s in 0..2 {
                assert!((lhs.values[k][s] - (al * a.values[k][s] + be * b.values[k][s])).norm() < 1e-13);
            }
        }
        let mut fg = SpinorField::zeros(16, 0.0);
        for k in 0..16 {
            for s in 0..2 {
                fg.values[k][s] = al * f.values[k][s] + be * g.values[k][s];
            }
        }
        let lhs = conditional_field(&j1, &fg, Particle::Two, &lat).unwrap();
        let b = conditional_field(&j1, &g, Particle::Two, &lat).unwrap();
        for k in 0..16 {
            for s in 0..2 {
                let expect = al.conj() * a.values[k][s] + be.conj() * b.values[k][s];
                assert!((lhs.values[k][s] - expect).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn time_mismatch_rejected() {
        let lat = SpacetimeLattice::centered(16, 0.5, 1, 0.05).unwrap();
        let joint = random_joint_state(&lat, 1);
        let f = SpinorField::zeros(16, 3.0);
        assert!(matches!(conditional_field(&joint, &f, Particle::One, &lat), Err(Error::TimeMismatch { .. })));
    }
}
