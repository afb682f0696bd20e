//! Periodic 1+1 dimensional lattice and run configuration.

use std::f64::consts::PI;
use std::path::PathBuf;

use crate::error::{Error, Result};

/// Uniform periodic spatial grid plus uniform time steps.
///
/// Coordinates are `x_k = x_min + k dx` for `k in 0..nx`; the spatial period
/// is `L = nx dx`. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimeLattice {
    nx: usize,
    dx: f64,
    nt: usize,
    dt: f64,
    x_min: f64,
}

impl SpacetimeLattice {
    pub fn new(nx: usize, dx: f64, nt: usize, dt: f64, x_min: f64) -> Result<Self> {
        if nx == 0 || !nx.is_power_of_two() {
            return Err(config_error("nx", format!("{nx} is not a positive power of two")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(config_error("dx", format!("{dx} must be positive and finite")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(config_error("dt", format!("{dt} must be positive and finite")));
        }
        if !x_min.is_finite() {
            return Err(config_error("x_min", format!("{x_min} must be finite")));
        }
        Ok(Self { nx, dx, nt, dt, x_min })
    }

    /// Lattice centred on the origin: `x_min = -nx dx / 2`.
    pub fn centered(nx: usize, dx: f64, nt: usize, dt: f64) -> Result<Self> {
        Self::new(nx, dx, nt, dt, -(nx as f64) * dx / 2.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn length(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.nx).map(|k| self.x(k)).collect()
    }

    /// Same spatial grid with a different time step count and spacing.
    pub fn with_time(&self, nt: usize, dt: f64) -> Result<Self> {
        Self::new(self.nx, self.dx, nt, dt, self.x_min)
    }

    /// Maps `x` onto the period starting at `x_min`.
    pub fn wrap(&self, x: f64) -> f64 {
        self.x_min + (x - self.x_min).rem_euclid(self.length())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.nx {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: self.nx, found: len })
        }
    }
}

fn config_error(key: &str, reason: String) -> Error {
    Error::Config { key: key.to_string(), reason }
}

/// Wave equation used for single-particle runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Dirac,
    KleinGordon,
}

/// External potential. Only free evolution is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Potential {
    #[default]
    None,
}

/// Gaussian packet: `width` is the standard deviation of the position density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketParams {
    pub center: f64,
    pub width: f64,
    pub momentum: f64,
}

/// Final-state basis used for two-particle channel sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    #[default]
    Position,
    Momentum,
}

/// Settings for the two-particle final-boundary study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetroParams {
    pub nx: usize,
    pub dx: f64,
    pub width: f64,
    pub separation: f64,
    pub basis: BasisKind,
}

impl Default for RetroParams {
    fn default() -> Self {
        Self { nx: 64, dx: 0.25, width: 1.0, separation: 8.0, basis: BasisKind::Position }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Left edge of the grid; `None` centres the grid on the origin.
    pub x_min: Option<f64>,
    pub mass: f64,
    pub packet: PacketParams,
    /// Final-boundary packet, specified at the final time `T = n_steps dt`.
    /// `None` selects a packet following the initial one (see [`SimConfig::final_packet`]).
    pub final_packet: Option<PacketParams>,
    pub seed: u64,
    pub n_traj: usize,
    pub substeps: usize,
    pub backend: Backend,
    pub potential: Potential,
    pub output_dir: PathBuf,
    /// Write every `output_stride`-th slice to CSV.
    pub output_stride: usize,
    pub retro: RetroParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            nx: 1024,
            dx: 0.2,
            dt: 0.01,
            n_steps: 1000,
            x_min: None,
            mass: 1.0,
            packet: PacketParams { center: -3.5, width: 12.0, momentum: 1.0 },
            final_packet: None,
            seed: 20_170_101,
            n_traj: 10_000,
            substeps: 4,
            backend: Backend::Dirac,
            potential: Potential::None,
            output_dir: PathBuf::from("out"),
            output_stride: 100,
            retro: RetroParams::default(),
        }
    }
}

impl SimConfig {
    /// Evolution span `T = n_steps dt`.
    pub fn span(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Checks scalar invariants; lattice invariants are checked by [`build_lattice`].
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(config_error("mass", format!("{} must be positive", self.mass)));
        }
        if !(self.packet.width > 0.0 && self.packet.width.is_finite()) {
            return Err(config_error(
                "packet.width",
                format!("{} must be positive", self.packet.width),
            ));
        }
        if let Some(f) = &self.final_packet {
            if !(f.width > 0.0 && f.width.is_finite()) {
                return Err(config_error("final.width", format!("{} must be positive", f.width)));
            }
        }
        if self.substeps == 0 {
            return Err(config_error("substeps", "must be at least 1".into()));
        }
        if self.output_stride == 0 {
            return Err(config_error("output_stride", "must be at least 1".into()));
        }
        if self.retro.nx == 0 || !self.retro.nx.is_power_of_two() {
            return Err(config_error("retro.nx", format!("{} is not a power of two", self.retro.nx)));
        }
        if !(self.retro.dx > 0.0) {
            return Err(config_error("retro.dx", "must be positive".into()));
        }
        if !(self.retro.width > 0.0) {
            return Err(config_error("retro.width", "must be positive".into()));
        }
        SpacetimeLattice::new(self.nx, self.dx, self.n_steps, self.dt, 0.0)?;
        Ok(())
    }

    /// The final-boundary packet at time `T`. Defaults to a packet 1.5x wider
    /// than the initial one, centred where the initial packet's group
    /// velocity carries it.
    pub fn final_packet(&self) -> PacketParams {
        self.final_packet.unwrap_or_else(|| {
            let k = self.packet.momentum;
            let v = k / (k * k + self.mass * self.mass).sqrt();
            PacketParams {
                center: self.packet.center + v * self.span(),
                width: 1.5 * self.packet.width,
                momentum: k,
            }
        })
    }
}

pub fn build_lattice(config: &SimConfig) -> Result<SpacetimeLattice> {
    let x_min = config.x_min.unwrap_or(-(config.nx as f64) * config.dx / 2.0);
    SpacetimeLattice::new(config.nx, config.dx, config.n_steps, config.dt, x_min)
}

/// Discrete-transform wavenumbers `[0, dk, ..., +k_nyquist, ..., -dk]`,
/// `dk = 2 pi / L`. The Nyquist entry carries the positive sign.
pub fn wavenumbers(lattice: &SpacetimeLattice) -> Vec<f64> {
    let n = lattice.nx();
    let dk = 2.0 * PI / lattice.length();
    (0..n)
        .map(|j| {
            let signed = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            signed as f64 * dk
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(nx: usize, dx: f64) -> SimConfig {
        SimConfig { nx, dx, ..SimConfig::default() }
    }

    #[test]
    fn coordinates_span_expected_range() {
        let lat = build_lattice(&SimConfig { x_min: Some(-12.8), ..config(256, 0.1) }).unwrap();
        assert!((lat.x(0) + 12.8).abs() < 1e-12);
        assert!((lat.x(255) - 12.7).abs() < 1e-12);
        assert!((lat.length() - 25.6).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        for nx in [0, 100] {
            match build_lattice(&config(nx, 0.1)) {
                Err(Error::Config { key, .. }) => assert_eq!(key, "nx"),
                other => panic!("expected nx error, got {other:?}"),
            }
        }
        match build_lattice(&config(64, -0.1)) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "dx"),
            other => panic!("expected dx error, got {other:?}"),
        }
        match build_lattice(&SimConfig { dt: 0.0, ..config(64, 0.1) }) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("expected dt error, got {other:?}"),
        }
    }

    #[test]
    fn wavenumber_examples() {
        let lat = SpacetimeLattice::new(4, 1.0, 1, 0.1, 0.0).unwrap();
        let k = wavenumbers(&lat);
        let expected = [0.0, PI / 2.0, PI, -PI / 2.0];
        for (a, b) in k.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let lat = SpacetimeLattice::new(2, PI, 1, 0.1, 0.0).unwrap();
        let k = wavenumbers(&lat);
        assert!((k[0]).abs() < 1e-15 && (k[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wavenumbers_pair_up() {
        for nx in [2usize, 8, 64, 1024] {
            let lat = SpacetimeLattice::centered(nx, 0.3, 1, 0.1).unwrap();
            let k = wavenumbers(&lat);
            let nyquist = PI / 0.3;
            assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
            let sum: f64 = k.iter().sum();
            assert!((sum - nyquist).abs() < 1e-9 * nyquist);
            for j in 1..nx / 2 {
                assert_eq!(k[j], -k[nx - j]);
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let c = SimConfig::default();
        assert_eq!(build_lattice(&c).unwrap(), build_lattice(&c).unwrap());
    }

    #[test]
    fn wrap_maps_into_period() {
        let lat = SpacetimeLattice::centered(16, 1.0, 1, 0.1).unwrap();
        assert_eq!(lat.wrap(9.0), -7.0);
        assert_eq!(lat.wrap(-8.0), -8.0);
        assert_eq!(lat.wrap(-9.5), 6.5);
    }

    #[test]
    fn config_validation_names_key() {
        let bad = SimConfig { mass: 0.0, ..SimConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "mass"));
        let mut bad = SimConfig::default();
        bad.packet.width = -1.0;
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "packet.width"));
        assert!(SimConfig::default().validate().is_ok());
    }
}
