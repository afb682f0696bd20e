//! Two-component spinor algebra in the chosen Dirac representation.
//!
//! `gamma0 = [[1, 0], [0, -1]]`, `gamma1 = [[0, 1], [-1, 0]]`,
//! `alpha = gamma0 gamma1 = [[0, 1], [1, 0]]`. The free Hamiltonian for
//! wavenumber `k` is `h(k) = alpha k + gamma0 m = [[m, k], [k, -m]]`.

use num_complex::Complex64;

pub type Spinor = [Complex64; 2];

pub const ZERO: Spinor = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];

/// 2x2 complex matrix, row major.
pub type Mat2 = [[Complex64; 2]; 2];

pub fn apply(m: &Mat2, s: &Spinor) -> Spinor {
    [m[0][0] * s[0] + m[0][1] * s[1], m[1][0] * s[0] + m[1][1] * s[1]]
}

pub fn gamma0(s: &Spinor) -> Spinor {
    [s[0], -s[1]]
}

pub fn gamma1(s: &Spinor) -> Spinor {
    [s[1], -s[0]]
}

/// `a^dagger b`.
pub fn inner(a: &Spinor, b: &Spinor) -> Complex64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// `(bar a gamma^0 b, bar a gamma^1 b)` with `bar a = a^dagger gamma0`.
pub fn bilinears(a: &Spinor, b: &Spinor) -> (Complex64, Complex64) {
    let a0 = a[0].conj();
    let a1 = a[1].conj();
    (a0 * b[0] + a1 * b[1], a0 * b[1] + a1 * b[0])
}

pub fn norm_sqr(s: &Spinor) -> f64 {
    s[0].norm_sqr() + s[1].norm_sqr()
}

pub fn energy(k: f64, m: f64) -> f64 {
    (k * k + m * m).sqrt()
}

/// Normalised positive-energy eigenspinor of `h(k)`, `(E + m, k) / sqrt(2E(E + m))`.
pub fn positive_energy(k: f64, m: f64) -> Spinor {
    let e = energy(k, m);
    let n = (2.0 * e * (e + m)).sqrt();
    [Complex64::new((e + m) / n, 0.0), Complex64::new(k / n, 0.0)]
}

/// `exp(-i h(k) tau) = cos(E tau) - i sin(E tau) h(k) / E`.
pub fn propagator(k: f64, m: f64, tau: f64) -> Mat2 {
    let e = energy(k, m);
    let (s, c) = (e * tau).sin_cos();
    let re = Complex64::new(c, 0.0);
    let f = -s / e;
    [
        [re + Complex64::new(0.0, f * m), Complex64::new(0.0, f * k)],
        [Complex64::new(0.0, f * k), re - Complex64::new(0.0, f * m)],
    ]
}
