//! Four-currents: the standard Dirac current `bar psi gamma^a psi`, the
//! two-state weak current built from an initial and a final wavefunction,
//! the Klein-Gordon current, and the continuity residual `d_a j^a`.

use num_complex::Complex64;

use crate::dynamics::{same_time, KGField, Slice, SpinorField};
use crate::error::{Error, Result};
use crate::grid::SpacetimeLattice;
use crate::spectral::Spectral;
use crate::spinor;

/// Relative band around `j.j = 0` treated as null: `|j.j| <= 1e-12 (j0)^2`.
pub const NULL_BAND: f64 = 1e-12;

/// Relative overlap floor: channels with `|N| <= 1e-8 |psi_f| |psi_i|` are degenerate.
pub const OVERLAP_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FourCurrentField {
    pub j0: Vec<f64>,
    pub j1: Vec<f64>,
    pub time_label: f64,
}

impl FourCurrentField {
    pub fn zeros(nx: usize, time_label: f64) -> Self {
        Self { j0: vec![0.0; nx], j1: vec![0.0; nx], time_label }
    }

    pub fn len(&self) -> usize {
        self.j0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            j0: self.j0.iter().map(|v| c * v).collect(),
            j1: self.j1.iter().map(|v| c * v).collect(),
            time_label: self.time_label,
        }
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.j0
            .iter()
            .zip(&other.j0)
            .chain(self.j1.iter().zip(&other.j1))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Total charge `dx sum j0`.
    pub fn charge(&self, lattice: &SpacetimeLattice) -> f64 {
        lattice.dx() * self.j0.iter().sum::<f64>()
    }
}

impl Slice for FourCurrentField {
    fn time_label(&self) -> f64 {
        self.time_label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CausalClass {
    Timelike,
    Null,
    Spacelike,
}

impl CausalClass {
    pub fn of(j0: f64, j1: f64) -> Self {
        let q = j0 * j0 - j1 * j1;
        if q.abs() <= NULL_BAND * j0 * j0 {
            CausalClass::Null
        } else if q > 0.0 {
            CausalClass::Timelike
        } else {
            CausalClass::Spacelike
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CausalClass::Timelike => "timelike",
            CausalClass::Null => "null",
            CausalClass::Spacelike => "spacelike",
        }
    }
}

/// Rest-frame density `rho0 = sqrt(|j.j|)` and causal character per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Rho0Field {
    pub rho0: Vec<f64>,
    pub causal_class: Vec<CausalClass>,
    /// Cells with `j0 < 0`.
    pub past_pointing: usize,
}

impl Rho0Field {
    pub fn count(&self, class: CausalClass) -> usize {
        self.causal_class.iter().filter(|&&c| c == class).count()
    }
}

/// The overlap `N = <f|i> = dx sum psi_f^dagger psi_i` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub value: Complex64,
    pub time_label: f64,
}

impl Overlap {
    pub fn unit(time_label: f64) -> Self {
        Self { value: Complex64::new(1.0, 0.0), time_label }
    }
}

/// `j^a = bar psi gamma^a psi`: `j0 = |psi1|^2 + |psi2|^2`, `j1 = 2 Re(conj(psi1) psi2)`.
pub fn dirac_current(field: &SpinorField) -> FourCurrentField {
    let (j0, j1) = field
        .values
        .iter()
        .map(|s| {
            let (a, b) = spinor::bilinears(s, s);
            (a.re, b.re)
        })
        .unzip();
    FourCurrentField { j0, j1, time_label: field.time_label }
}

/// Klein-Gordon current `(i / 2m)(phi* d^a phi - phi d^a phi*)` with
/// `d^0 = d_t`, `d^1 = -d_x`.
pub fn kg_current(field: &KGField, lattice: &SpacetimeLattice, m: f64) -> Result<FourCurrentField> {
    lattice.check_len(field.phi.len())?;
    lattice.check_len(field.pi.len())?;
    let dphi = Spectral::new(lattice).derivative(&field.phi);
    let j0 = field.phi.iter().zip(&field.pi).map(|(p, q)| -(p.conj() * q).im / m).collect();
    let j1 = field.phi.iter().zip(&dphi).map(|(p, d)| (p.conj() * d).im / m).collect();
    Ok(FourCurrentField { j0, j1, time_label: field.time_label })
}

pub fn overlap(psi_f: &SpinorField, psi_i: &SpinorField, lattice: &SpacetimeLattice) -> Result<Overlap> {
    lattice.check_len(psi_f.len())?;
    lattice.check_len(psi_i.len())?;
    if !same_time(psi_f.time_label, psi_i.time_label) {
        return Err(Error::TimeMismatch { left: psi_f.time_label, right: psi_i.time_label });
    }
    let s: Complex64 = psi_f.values.iter().zip(&psi_i.values).map(|(f, i)| spinor::inner(f, i)).sum();
    Ok(Overlap { value: s * lattice.dx(), time_label: psi_i.time_label })
}

/// Degeneracy floor `1e-8 |psi_f| |psi_i|` for an overlap between these fields.
pub fn overlap_floor(psi_i: &SpinorField, psi_f: &SpinorField, lattice: &SpacetimeLattice) -> f64 {
    let ni = crate::dynamics::field_norm(psi_i, lattice).sqrt();
    let nf = crate::dynamics::field_norm(psi_f, lattice).sqrt();
    OVERLAP_FLOOR * ni * nf
}

/// Both complex terms of the weak current, summed; the imaginary part is
/// rounding noise.
fn weak_terms(psi_i: &SpinorField, psi_f: &SpinorField, n: Complex64) -> Vec<(Complex64, Complex64)> {
    let inv = 1.0 / n;
    let inv_conj = 1.0 / n.conj();
    psi_i
        .values
        .iter()
        .zip(&psi_f.values)
        .map(|(i, f)| {
            let (a0, a1) = spinor::bilinears(f, i);
            let (b0, b1) = spinor::bilinears(i, f);
            (inv * a0 + inv_conj * b0, inv * a1 + inv_conj * b1)
        })
        .collect()
}

fn check_weak_inputs(
    psi_i: &SpinorField,
    psi_f: &SpinorField,
    n: &Overlap,
    lattice: &SpacetimeLattice,
) -> Result<()> {
    lattice.check_len(psi_i.len())?;
    lattice.check_len(psi_f.len())?;
    let floor = overlap_floor(psi_i, psi_f, lattice);
    let magnitude = n.value.norm();
    if !(magnitude > floor) {
        return Err(Error::DegenerateChannel { magnitude, floor });
    }
    Ok(())
}

/// Two-state current `(1/N) bar psi_f gamma^a psi_i + (1/N*) bar psi_i gamma^a psi_f`.
///
/// The result is real but need not be timelike or have positive `j0`.
pub fn weak_current(
    psi_i: &SpinorField,
    psi_f: &SpinorField,
    n: &Overlap,
    lattice: &SpacetimeLattice,
) -> Result<FourCurrentField> {
    check_weak_inputs(psi_i, psi_f, n, lattice)?;
    let (j0, j1) = weak_terms(psi_i, psi_f, n.value).into_iter().map(|(a, b)| (a.re, b.re)).unzip();
    Ok(FourCurrentField { j0, j1, time_label: psi_i.time_label })
}

/// Largest imaginary part left over when the two weak-current terms are summed.
pub fn weak_current_imaginary_residual(
    psi_i: &SpinorField,
    psi_f: &SpinorField,
    n: &Overlap,
    lattice: &SpacetimeLattice,
) -> Result<f64> {
    check_weak_inputs(psi_i, psi_f, n, lattice)?;
    Ok(weak_terms(psi_i, psi_f, n.value)
        .into_iter()
        .map(|(a, b)| a.im.abs().max(b.im.abs()))
        .fold(0.0, f64::max))
}

pub fn current_magnitude(j: &FourCurrentField) -> Rho0Field {
    let (rho0, causal_class) = j
        .j0
        .iter()
        .zip(&j.j1)
        .map(|(&a, &b)| ((a * a - b * b).abs().sqrt(), CausalClass::of(a, b)))
        .unzip();
    let past_pointing = j.j0.iter().filter(|&&v| v < 0.0).count();
    Rho0Field { rho0, causal_class, past_pointing }
}

/// RMS of `d_t j0 + d_x j1` over interior slices and all cells.
///
/// `d_t` is the centred difference between neighbouring slices; `d_x` is spectral.
pub fn continuity_residual(currents: &[FourCurrentField], lattice: &SpacetimeLattice) -> Result<f64> {
    if currents.len() < 3 {
        return Err(Error::TooFewSlices { needed: 3, found: currents.len() });
    }
    for c in currents {
        lattice.check_len(c.len())?;
    }
    let sp = Spectral::new(lattice);
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in currents.windows(3) {
        let dt2 = w[2].time_label - w[0].time_label;
        let dx_j1 = sp.derivative_real(&w[1].j1);
        for k in 0..lattice.nx() {
            let r = (w[2].j0[k] - w[0].j0[k]) / dt2 + dx_j1[k];
            sum += r * r;
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve_dirac, gaussian_packet, Direction};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn point(a: Complex64, b: Complex64) -> SpinorField {
        SpinorField::new(vec![[a, b]], 0.0)
    }

    #[test]
    fn dirac_current_examples() {
        let j = dirac_current(&point(c(1.0, 0.0), c(0.0, 0.0)));
        assert_eq!((j.j0[0], j.j1[0]), (1.0, 0.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let j = dirac_current(&point(c(r, 0.0), c(r, 0.0)));
        assert!((j.j0[0] - 1.0).abs() < 1e-15 && (j.j1[0] - 1.0).abs() < 1e-15);
        assert_eq!(CausalClass::of(1.0, 1.0), CausalClass::Null);
    }

    proptest! {
        #[test]
        fn dirac_current_interval_identity(a in -3.0..3.0f64, b in -3.0..3.0f64, e in -3.0..3.0f64, d in -3.0..3.0f64) {
            let s = point(c(a, b), c(e, d));
            let j = dirac_current(&s);
            let q = j.j0[0] * j.j0[0] - j.j1[0] * j.j1[0];
            // |j|^2 = (|psi1|^2 - |psi2|^2)^2 + 4 Im(conj(psi1) psi2)^2
            let im = a * d - b * e;
            let expect = ((a * a + b * b) - (e * e + d * d)).powi(2) + 4.0 * im * im;
            prop_assert!((q - expect).abs() <= 1e-12 * (1.0 + j.j0[0] * j.j0[0]));
            prop_assert!(j.j0[0] >= j.j1[0].abs());
        }
    }

    #[test]
    fn magnitude_examples() {
        let j = FourCurrentField { j0: vec![1.0, 1.0, 0.0, 0.0], j1: vec![0.0, 1.0, 1.0, 0.0], time_label: 0.0 };
        let r = current_magnitude(&j);
        assert_eq!(r.rho0, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            r.causal_class,
            vec![CausalClass::Timelike, CausalClass::Null, CausalClass::Spacelike, CausalClass::Null]
        );
        assert_eq!(r.count(CausalClass::Spacelike), 1);
    }

    #[test]
    fn kg_plane_wave_current() {
        let lat = SpacetimeLattice::centered(64, 0.25, 1, 0.1).unwrap();
        let sp = Spectral::new(&lat);
        let (m, k) = (1.5, sp.k()[4]);
        let w = spinor::energy(k, m);
        let phi: Vec<Complex64> = lat.coordinates().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let pi = phi.iter().map(|p| c(0.0, -w) * p).collect();
        let j = kg_current(&KGField { phi, pi, time_label: 0.0 }, &lat, m).unwrap();
        for (a, b) in j.j0.iter().zip(&j.j1) {
            assert!((a - w / m).abs() < 1e-12);
            assert!((b - k / m).abs() < 1e-12);
        }
    }

    #[test]
    fn kg_real_field_has_no_current() {
        let lat = SpacetimeLattice::centered(64, 0.25, 1, 0.1).unwrap();
        let phi: Vec<Complex64> = lat.coordinates().iter().map(|&x| c((-x * x).exp(), 0.0)).collect();
        let pi = phi.iter().map(|p| p * 0.3).collect();
        let j = kg_current(&KGField { phi, pi, time_label: 0.0 }, &lat, 1.0).unwrap();
        assert!(j.j0.iter().chain(&j.j1).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn kg_two_mode_state_has_negative_density() {
        // positive-frequency mode at +k plus a stronger negative-frequency mode at -k
        let lat = SpacetimeLattice::centered(64, 0.25, 1, 0.1).unwrap();
        let sp = Spectral::new(&lat);
        let (m, k) = (1.0, sp.k()[3]);
        let w = spinor::energy(k, m);
        let xs = lat.coordinates();
        let phi: Vec<Complex64> = xs
            .iter()
            .map(|&x| Complex64::from_polar(1.0, k * x) + Complex64::from_polar(0.8, -k * x))
            .collect();
        let pi = xs
            .iter()
            .map(|&x| c(0.0, -w) * Complex64::from_polar(1.0, k * x) + c(0.0, w) * Complex64::from_polar(0.8, -k * x))
            .collect();
        let j = kg_current(&KGField { phi, pi, time_label: 0.0 }, &lat, m).unwrap();
        // direct evaluation: j0 = (w/m)(1 - 0.64) uniformly, positive; flip weights to get negative
        assert!(j.j0.iter().all(|&v| (v - w / m * 0.36).abs() < 1e-12));
        let phi: Vec<Complex64> = xs
            .iter()
            .map(|&x| Complex64::from_polar(0.5, k * x) + Complex64::from_polar(1.0, -k * x))
            .collect();
        let pi = xs
            .iter()
            .map(|&x| c(0.0, -w) * Complex64::from_polar(0.5, k * x) + c(0.0, w) * Complex64::from_polar(1.0, -k * x))
            .collect();
        let j = kg_current(&KGField { phi, pi, time_label: 0.0 }, &lat, m).unwrap();
        assert!(j.j0.iter().all(|&v| v < 0.0));
        let rho = current_magnitude(&j);
        assert_eq!(rho.past_pointing, 64);
    }

    #[test]
    fn overlap_examples() {
        let lat = SpacetimeLattice::centered(256, 0.1, 1, 0.01).unwrap();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let n = overlap(&p, &p, &lat).unwrap();
        assert!((n.value - 1.0).norm() < 1e-12);
        let mut q = SpinorField::zeros(256, 0.0);
        for (k, s) in q.values.iter_mut().enumerate() {
            s[0] = c(if k % 2 == 0 { 1.0 } else { 0.0 }, 0.0);
        }
        let mut r = SpinorField::zeros(256, 0.0);
        for (k, s) in r.values.iter_mut().enumerate() {
            s[0] = c(if k % 2 == 1 { 1.0 } else { 0.0 }, 0.0);
        }
        assert_eq!(overlap(&q, &r, &lat).unwrap().value, c(0.0, 0.0));
        let later = SpinorField { time_label: 1.0, ..p.clone() };
        assert!(matches!(overlap(&later, &p, &lat), Err(Error::TimeMismatch { .. })));
    }

    #[test]
    fn overlap_is_invariant_under_joint_evolution() {
        let lat = SpacetimeLattice::centered(256, 0.1, 1, 0.01).unwrap();
        let a = gaussian_packet(&lat, 1.0, -1.0, 2.0, 1.0).unwrap();
        let b = gaussian_packet(&lat, 1.0, 1.0, 2.5, 0.5).unwrap();
        let ha = evolve_dirac(&a, &lat, 1.0, 1000, Direction::Forward).unwrap();
        let hb = evolve_dirac(&b, &lat, 1.0, 1000, Direction::Forward).unwrap();
        let n0 = overlap(&b, &a, &lat).unwrap().value;
        let n1 = overlap(hb.last(), ha.last(), &lat).unwrap().value;
        assert!(n0.norm() > 0.1);
        assert!((n1 - n0).norm() < 1e-12);
    }

    #[test]
    fn weak_current_diagonal_is_twice_standard() {
        let lat = SpacetimeLattice::centered(256, 0.1, 1, 0.01).unwrap();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let w = weak_current(&p, &p, &Overlap::unit(0.0), &lat).unwrap();
        let d = dirac_current(&p);
        assert!(w.max_abs_diff(&d.scaled(2.0)) < 1e-13);
    }

    #[test]
    fn weak_current_rejects_orthogonal() {
        let lat = SpacetimeLattice::centered(8, 1.0, 1, 0.01).unwrap();
        let mut a = SpinorField::zeros(8, 0.0);
        a.values[0][0] = c(1.0, 0.0);
        let mut b = SpinorField::zeros(8, 0.0);
        b.values[1][0] = c(1.0, 0.0);
        let n = overlap(&b, &a, &lat).unwrap();
        assert!(matches!(weak_current(&a, &b, &n, &lat), Err(Error::DegenerateChannel { .. })));
    }

    #[test]
    fn weak_current_matches_direct_evaluation() {
        let lat = SpacetimeLattice::centered(256, 0.1, 1, 0.01).unwrap();
        let i = gaussian_packet(&lat, 1.0, -0.5, 2.0, 1.0).unwrap();
        let f = gaussian_packet(&lat, 1.0, 0.5, 2.2, 0.3).unwrap();
        let n = overlap(&f, &i, &lat).unwrap();
        let w = weak_current(&i, &f, &n, &lat).unwrap();
        // oracle: 2 Re[(1/N) psi_f^dagger gamma0 gamma^a psi_i], written out by hand
        for k in 0..256 {
            let (f1, f2) = (f.values[k][0], f.values[k][1]);
            let (i1, i2) = (i.values[k][0], i.values[k][1]);
            let j0 = 2.0 * ((f1.conj() * i1 + f2.conj() * i2) / n.value).re;
            let j1 = 2.0 * ((f1.conj() * i2 + f2.conj() * i1) / n.value).re;
            assert!((w.j0[k] - j0).abs() < 1e-14);
            assert!((w.j1[k] - j1).abs() < 1e-14);
        }
        assert!(weak_current_imaginary_residual(&i, &f, &n, &lat).unwrap() < 1e-14);
    }

    #[test]
    fn continuity_on_static_current() {
        let lat = SpacetimeLattice::centered(32, 0.5, 1, 0.1).unwrap();
        let slices: Vec<FourCurrentField> = (0..4)
            .map(|s| FourCurrentField { j0: vec![2.0; 32], j1: vec![1.0; 32], time_label: s as f64 * 0.1 })
            .collect();
        assert!(continuity_residual(&slices, &lat).unwrap() < 1e-12);
        assert!(matches!(continuity_residual(&slices[..2], &lat), Err(Error::TooFewSlices { .. })));
    }

    #[test]
    fn continuity_converges_for_evolved_packet() {
        let run = |dt: f64, steps: usize| {
            let lat = SpacetimeLattice::centered(256, 0.1, steps, dt).unwrap();
            let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
            let h = evolve_dirac(&p, &lat, 1.0, steps, Direction::Forward).unwrap();
            let js: Vec<_> = h.slices().iter().map(dirac_current).collect();
            continuity_residual(&js, &lat).unwrap()
        };
        let coarse = run(0.01, 100);
        let fine = run(0.005, 200);
        assert!(coarse < 1e-4, "residual {coarse}");
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }
}
