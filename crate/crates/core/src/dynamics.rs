//! Free Dirac and Klein-Gordon propagation on the periodic lattice.
//!
//! Both propagators are exact per Fourier mode: the Dirac step applies
//! `exp(-i h(k) dt)` and the Klein-Gordon step rotates `(phi, pi)` at
//! frequency `omega(k) = sqrt(k^2 + m^2)`. Spatial accuracy is therefore
//! spectral and time stepping introduces only rounding error.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpacetimeLattice;
use crate::spectral::Spectral;
use crate::spinor::{self, Mat2, Spinor};

/// Time labels closer than this (relative) are treated as the same slice.
pub(crate) const TIME_LABEL_TOL: f64 = 1e-9;

pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_LABEL_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Anything stored as a slice of a [`FieldHistory`].
pub trait Slice {
    fn time_label(&self) -> f64;
}

/// Dirac spinor field on one spatial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub values: Vec<Spinor>,
    pub time_label: f64,
}

impl SpinorField {
    pub fn new(values: Vec<Spinor>, time_label: f64) -> Self {
        Self { values, time_label }
    }

    pub fn zeros(nx: usize, time_label: f64) -> Self {
        Self { values: vec![spinor::ZERO; nx], time_label }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            values: self.values.iter().map(|s| [c * s[0], c * s[1]]).collect(),
            time_label: self.time_label,
        }
    }

    fn component(&self, i: usize) -> Vec<Complex64> {
        self.values.iter().map(|s| s[i]).collect()
    }

    fn from_components(a: &[Complex64], b: &[Complex64], time_label: f64) -> Self {
        Self { values: a.iter().zip(b).map(|(&x, &y)| [x, y]).collect(), time_label }
    }
}

impl Slice for SpinorField {
    fn time_label(&self) -> f64 {
        self.time_label
    }
}

/// Klein-Gordon field with its time derivative `pi = d phi / dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct KGField {
    pub phi: Vec<Complex64>,
    pub pi: Vec<Complex64>,
    pub time_label: f64,
}

impl Slice for KGField {
    fn time_label(&self) -> f64 {
        self.time_label
    }
}

/// Uniformly spaced sequence of slices on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory<F> {
    slices: Vec<F>,
    lattice: SpacetimeLattice,
    step: f64,
}

impl<F: Slice> FieldHistory<F> {
    /// `step` is the signed spacing between consecutive slice labels.
    pub fn new(slices: Vec<F>, lattice: SpacetimeLattice, step: f64) -> Self {
        Self { slices, lattice, step }
    }

    pub fn slices(&self) -> &[F] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<F> {
        self.slices
    }

    pub fn lattice(&self) -> &SpacetimeLattice {
        &self.lattice
    }

    /// Signed time spacing; negative for backward histories.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn first(&self) -> &F {
        &self.slices[0]
    }

    pub fn last(&self) -> &F {
        &self.slices[self.slices.len() - 1]
    }

    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(Slice::time_label).collect()
    }

    /// The same slices in the opposite time order.
    pub fn reversed(mut self) -> Self {
        self.slices.reverse();
        self.step = -self.step;
        self
    }
}

/// Gaussian wavepacket of positive-energy plane waves.
///
/// The momentum amplitude is `exp(-(k - k0)^2 width^2)`, so `width` is the
/// standard deviation of the position density at the centre. Each mode carries
/// the positive-energy eigenspinor of `h(k)`; the result is normalised to 1.
pub fn gaussian_packet(
    lattice: &SpacetimeLattice,
    m: f64,
    x0: f64,
    width: f64,
    k0: f64,
) -> Result<SpinorField> {
    if width < 4.0 * lattice.dx() {
        return Err(Error::PacketTooNarrow { width, dx: lattice.dx() });
    }
    if lattice.length() <= 10.0 * width {
        return Err(Error::PacketTooWide { width, length: lattice.length() });
    }
    let sp = Spectral::new(lattice);
    let offset = x0 - lattice.x_min();
    let n = lattice.nx();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for &k in sp.k() {
        let g = (-(k - k0).powi(2) * width * width).exp();
        let amp = Complex64::from_polar(g, -k * offset);
        let u = spinor::positive_energy(k, m);
        a.push(amp * u[0]);
        b.push(amp * u[1]);
    }
    sp.inverse(&mut a);
    sp.inverse(&mut b);
    let field = SpinorField::from_components(&a, &b, 0.0);
    let norm = field_norm(&field, lattice);
    Ok(field.scaled(Complex64::new(1.0 / norm.sqrt(), 0.0)))
}

/// Positive-frequency Klein-Gordon packet with the same momentum profile as
/// [`gaussian_packet`], normalised to unit charge.
pub fn kg_gaussian_packet(lattice: &SpacetimeLattice, m: f64, x0: f64, width: f64, k0: f64) -> Result<KGField> {
    if width < 4.0 * lattice.dx() {
        return Err(Error::PacketTooNarrow { width, dx: lattice.dx() });
    }
    if lattice.length() <= 10.0 * width {
        return Err(Error::PacketTooWide { width, length: lattice.length() });
    }
    let sp = Spectral::new(lattice);
    let offset = x0 - lattice.x_min();
    let mut phi = Vec::with_capacity(lattice.nx());
    let mut pi = Vec::with_capacity(lattice.nx());
    for &k in sp.k() {
        let amp = Complex64::from_polar((-(k - k0).powi(2) * width * width).exp(), -k * offset);
        phi.push(amp);
        pi.push(amp * Complex64::new(0.0, -spinor::energy(k, m)));
    }
    sp.inverse(&mut phi);
    sp.inverse(&mut pi);
    let field = KGField { phi, pi, time_label: 0.0 };
    let scale = 1.0 / kg_charge(&field, lattice, m).sqrt();
    Ok(KGField {
        phi: field.phi.iter().map(|v| v * scale).collect(),
        pi: field.pi.iter().map(|v| v * scale).collect(),
        time_label: 0.0,
    })
}

/// Dirac norm `dx sum |psi|^2`.
pub fn field_norm(field: &SpinorField, lattice: &SpacetimeLattice) -> f64 {
    lattice.dx() * field.values.iter().map(spinor::norm_sqr).sum::<f64>()
}

/// Position expectation `dx sum x |psi|^2 / norm` on the unwrapped grid.
pub fn centroid(field: &SpinorField, lattice: &SpacetimeLattice) -> f64 {
    let weighted: f64 =
        field.values.iter().enumerate().map(|(k, s)| lattice.x(k) * spinor::norm_sqr(s)).sum();
    lattice.dx() * weighted / field_norm(field, lattice)
}

/// Least-squares slope of the centroid over a history.
pub fn group_velocity(history: &FieldHistory<SpinorField>) -> f64 {
    let lat = history.lattice();
    let pts: Vec<(f64, f64)> =
        history.slices().iter().map(|s| (s.time_label, centroid(s, lat))).collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|(t, x)| (t - mt) * (x - mx)).sum();
    let den: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    num / den
}

/// Evolves `field` by `n_steps` exact free Dirac steps of size `lattice.dt()`.
///
/// The history holds `n_steps + 1` slices starting with `field` itself.
pub fn evolve_dirac(
    field: &SpinorField,
    lattice: &SpacetimeLattice,
    m: f64,
    n_steps: usize,
    direction: Direction,
) -> Result<FieldHistory<SpinorField>> {
    lattice.check_len(field.len())?;
    let step = direction.sign() * lattice.dt();
    let sp = Spectral::new(lattice);
    let props: Vec<Mat2> = sp.k().iter().map(|&k| spinor::propagator(k, m, step)).collect();

    let mut a = field.component(0);
    let mut b = field.component(1);
    sp.forward(&mut a);
    sp.forward(&mut b);

    let t0 = field.time_label;
    let mut slices = Vec::with_capacity(n_steps + 1);
    slices.push(field.clone());
    for s in 1..=n_steps {
        for ((x, y), p) in a.iter_mut().zip(b.iter_mut()).zip(&props) {
            let out = spinor::apply(p, &[*x, *y]);
            *x = out[0];
            *y = out[1];
        }
        let mut ra = a.clone();
        let mut rb = b.clone();
        sp.inverse(&mut ra);
        sp.inverse(&mut rb);
        slices.push(SpinorField::from_components(&ra, &rb, t0 + s as f64 * step));
    }
    Ok(FieldHistory::new(slices, *lattice, step))
}

/// Evolves a Klein-Gordon field by exact per-mode harmonic rotation.
pub fn evolve_kg(
    field: &KGField,
    lattice: &SpacetimeLattice,
    m: f64,
    n_steps: usize,
    direction: Direction,
) -> Result<FieldHistory<KGField>> {
    lattice.check_len(field.phi.len())?;
    lattice.check_len(field.pi.len())?;
    let step = direction.sign() * lattice.dt();
    let sp = Spectral::new(lattice);
    // [[cos, sin/w], [-w sin, cos]] per mode
    let rot: Vec<[f64; 4]> = sp
        .k()
        .iter()
        .map(|&k| {
            let w = spinor::energy(k, m);
            let (s, c) = (w * step).sin_cos();
            [c, s / w, -w * s, c]
        })
        .collect();

    let mut phi = field.phi.clone();
    let mut pi = field.pi.clone();
    sp.forward(&mut phi);
    sp.forward(&mut pi);

    let t0 = field.time_label;
    let mut slices = Vec::with_capacity(n_steps + 1);
    slices.push(field.clone());
    for s in 1..=n_steps {
        for ((p, q), r) in phi.iter_mut().zip(pi.iter_mut()).zip(&rot) {
            let (np, nq) = (*p * r[0] + *q * r[1], *p * r[2] + *q * r[3]);
            *p = np;
            *q = nq;
        }
        let mut rp = phi.clone();
        let mut rq = pi.clone();
        sp.inverse(&mut rp);
        sp.inverse(&mut rq);
        slices.push(KGField { phi: rp, pi: rq, time_label: t0 + s as f64 * step });
    }
    Ok(FieldHistory::new(slices, *lattice, step))
}

/// Conserved Klein-Gordon charge `dx sum j0` with `j0 = -Im(conj(phi) pi) / m`.
pub fn kg_charge(field: &KGField, lattice: &SpacetimeLattice, m: f64) -> f64 {
    let s: f64 = field.phi.iter().zip(&field.pi).map(|(p, q)| (p.conj() * q).im).sum();
    -lattice.dx() * s / m
}

/// Pointwise `(i gamma^a d_a - m) psi` on the middle slice of a triplet.
///
/// The time derivative is the centred difference `(next - prev) / (2 step)`;
/// the space derivative is spectral.
pub(crate) fn dirac_operator_slice(
    prev: &SpinorField,
    cur: &SpinorField,
    next: &SpinorField,
    step: f64,
    sp: &Spectral,
    m: f64,
) -> Vec<Spinor> {
    let da = sp.derivative(&cur.component(0));
    let db = sp.derivative(&cur.component(1));
    let i = Complex64::i();
    let inv = 1.0 / (2.0 * step);
    (0..cur.len())
        .map(|k| {
            let dt = [(next.values[k][0] - prev.values[k][0]) * inv, (next.values[k][1] - prev.values[k][1]) * inv];
            let dxs = [da[k], db[k]];
            let g0 = spinor::gamma0(&dt);
            let g1 = spinor::gamma1(&dxs);
            let psi = cur.values[k];
            [i * (g0[0] + g1[0]) - m * psi[0], i * (g0[1] + g1[1]) - m * psi[1]]
        })
        .collect()
}

/// RMS over interior slices of the slice norm `sqrt(dx sum |r|^2)` of the
/// Dirac residual `r = i gamma^a d_a psi - m psi`.
pub fn dirac_equation_residual(
    history: &FieldHistory<SpinorField>,
    lattice: &SpacetimeLattice,
    m: f64,
) -> Result<f64> {
    if history.len() < 3 {
        return Err(Error::TooFewSlices { needed: 3, found: history.len() });
    }
    for s in history.slices() {
        lattice.check_len(s.len())?;
    }
    let sp = Spectral::new(lattice);
    let slices = history.slices();
    let step = history.step();
    let total: f64 = slices
        .windows(3)
        .map(|w| {
            let r = dirac_operator_slice(&w[0], &w[1], &w[2], step, &sp, m);
            lattice.dx() * r.iter().map(spinor::norm_sqr).sum::<f64>()
        })
        .sum();
    Ok((total / (slices.len() - 2) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice() -> SpacetimeLattice {
        SpacetimeLattice::centered(256, 0.1, 100, 0.01).unwrap()
    }

    #[test]
    fn packet_is_normalised() {
        let lat = lattice();
        for &(k0, m) in &[(0.0, 1.0), (1.0, 1.0), (-2.0, 0.5)] {
            let p = gaussian_packet(&lat, m, 0.3, 2.0, k0).unwrap();
            assert!((field_norm(&p, &lat) - 1.0).abs() < 1e-12);
            assert_eq!(p.len(), 256);
        }
    }

    #[test]
    fn packet_guards() {
        let lat = lattice();
        assert!(matches!(gaussian_packet(&lat, 1.0, 0.0, 0.3, 0.0), Err(Error::PacketTooNarrow { .. })));
        assert!(matches!(gaussian_packet(&lat, 1.0, 0.0, 3.0, 0.0), Err(Error::PacketTooWide { .. })));
    }

    #[test]
    fn packet_is_centred() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, -1.7, 2.0, 0.5).unwrap();
        assert!((centroid(&p, &lat) + 1.7).abs() < 1e-6);
    }

    #[test]
    fn zero_steps_is_identity() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let h = evolve_dirac(&p, &lat, 1.0, 0, Direction::Forward).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.first(), &p);
        let kg = KGField { phi: vec![Complex64::new(1.0, 0.0); 256], pi: vec![Complex64::default(); 256], time_label: 0.0 };
        let h = evolve_kg(&kg, &lat, 1.0, 0, Direction::Forward).unwrap();
        assert_eq!(h.slices(), &[kg]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let lat = lattice();
        let f = SpinorField::zeros(128, 0.0);
        assert!(matches!(
            evolve_dirac(&f, &lat, 1.0, 3, Direction::Forward),
            Err(Error::LengthMismatch { expected: 256, found: 128 })
        ));
    }

    #[test]
    fn forward_then_backward_recovers_input() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let fwd = evolve_dirac(&p, &lat, 1.0, 200, Direction::Forward).unwrap();
        let back = evolve_dirac(fwd.last(), &lat, 1.0, 200, Direction::Backward).unwrap();
        let end = back.last();
        let err = p
            .values
            .iter()
            .zip(&end.values)
            .map(|(a, b)| (a[0] - b[0]).norm().max((a[1] - b[1]).norm()))
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "round trip error {err}");
        assert!(end.time_label.abs() < 1e-12);
    }

    #[test]
    fn plane_wave_phase_matches_dispersion() {
        // Oracle: positive-energy eigenmode picks up exp(-i E t) exactly.
        let lat = SpacetimeLattice::centered(64, 0.25, 1, 0.05).unwrap();
        let sp = Spectral::new(&lat);
        let m = 0.7;
        let k = sp.k()[3];
        let u = spinor::positive_energy(k, m);
        let values = lat
            .coordinates()
            .iter()
            .map(|&x| {
                let ph = Complex64::from_polar(1.0, k * x);
                [ph * u[0], ph * u[1]]
            })
            .collect();
        let f = SpinorField::new(values, 0.0);
        let h = evolve_dirac(&f, &lat, m, 40, Direction::Forward).unwrap();
        let e = spinor::energy(k, m);
        for s in h.slices() {
            let phase = Complex64::from_polar(1.0, -e * s.time_label);
            for (a, b) in s.values.iter().zip(&f.values) {
                assert!((a[0] - phase * b[0]).norm() < 1e-12);
                assert!((a[1] - phase * b[1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kg_single_mode_phase() {
        let lat = SpacetimeLattice::centered(64, 0.25, 1, 0.05).unwrap();
        let sp = Spectral::new(&lat);
        let m = 1.3;
        let k = sp.k()[60];
        let w = spinor::energy(k, m);
        let phi: Vec<Complex64> = lat.coordinates().iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect();
        let pi: Vec<Complex64> = phi.iter().map(|p| Complex64::new(0.0, -w) * p).collect();
        let f = KGField { phi: phi.clone(), pi, time_label: 0.0 };
        let h = evolve_kg(&f, &lat, m, 50, Direction::Forward).unwrap();
        for s in h.slices() {
            let phase = Complex64::from_polar(1.0, -w * s.time_label);
            for (a, b) in s.phi.iter().zip(&phi) {
                assert!((a - phase * b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kg_charge_conserved() {
        let lat = SpacetimeLattice::centered(256, 0.1, 1, 0.01).unwrap();
        let m = 1.0;
        let p = gaussian_packet(&lat, m, 0.0, 2.0, 1.5).unwrap();
        // positive-frequency KG data: phi from the upper component, pi = -i omega phi per mode
        let sp = Spectral::new(&lat);
        let phi: Vec<Complex64> = p.values.iter().map(|s| s[0]).collect();
        let mut hat = phi.clone();
        sp.forward(&mut hat);
        for (v, &k) in hat.iter_mut().zip(sp.k()) {
            *v *= Complex64::new(0.0, -spinor::energy(k, m));
        }
        sp.inverse(&mut hat);
        let f = KGField { phi, pi: hat, time_label: 0.0 };
        let q0 = kg_charge(&f, &lat, m);
        let h = evolve_kg(&f, &lat, m, 1000, Direction::Forward).unwrap();
        let q1 = kg_charge(h.last(), &lat, m);
        assert!(q0 > 0.0);
        assert!(((q1 - q0) / q0).abs() < 1e-10);
    }

    #[test]
    fn residual_needs_three_slices() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let h = evolve_dirac(&p, &lat, 1.0, 1, Direction::Forward).unwrap();
        assert!(matches!(dirac_equation_residual(&h, &lat, 1.0), Err(Error::TooFewSlices { .. })));
    }

    #[test]
    fn residual_small_on_solution_large_on_noise() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let h = evolve_dirac(&p, &lat, 1.0, 20, Direction::Forward).unwrap();
        let r = dirac_equation_residual(&h, &lat, 1.0).unwrap();
        assert!(r < 1e-3, "residual {r}");

        // negative control: the same packet held fixed in time is not a solution
        let frozen = FieldHistory::new(
            (0..5).map(|s| SpinorField { time_label: s as f64 * 0.01, ..p.clone() }).collect(),
            lat,
            0.01,
        );
        let r = dirac_equation_residual(&frozen, &lat, 1.0).unwrap();
        assert!(r > 0.5, "residual {r}");
    }

    #[test]
    fn reversed_history_flips_step() {
        let lat = lattice();
        let p = gaussian_packet(&lat, 1.0, 0.0, 2.0, 1.0).unwrap();
        let h = evolve_dirac(&p, &lat, 1.0, 4, Direction::Backward).unwrap().reversed();
        assert!(h.step() > 0.0);
        let t = h.times();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(h.last(), &p);
    }

    #[test]
    fn kg_packet_has_unit_charge() {
        let lat = lattice();
        let f = kg_gaussian_packet(&lat, 1.0, 0.5, 2.0, 1.0).unwrap();
        assert!((kg_charge(&f, &lat, 1.0) - 1.0).abs() < 1e-12);
        let h = evolve_kg(&f, &lat, 1.0, 100, Direction::Forward).unwrap();
        assert!((kg_charge(h.last(), &lat, 1.0) - 1.0).abs() < 1e-10);
        assert!(kg_gaussian_packet(&lat, 1.0, 0.0, 0.2, 0.0).is_err());
    }
}
