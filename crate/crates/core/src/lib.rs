//! Numerical laboratory for a particle-plus-field model of relativistic
//! quantum mechanics in 1+1 dimensional spacetime.
//!
//! Natural units (hbar = c = 1) throughout; the metric signature is (+, -)
//! and spacetime indices run over {0, 1}. The Dirac matrices are
//! `gamma0 = diag(1, -1)` and `gamma1 = [[0, 1], [-1, 0]]`, so that
//! `alpha = gamma0 gamma1 = sigma_x` and the current bilinears are
//! `j0 = |psi1|^2 + |psi2|^2`, `j1 = 2 Re(conj(psi1) psi2)`.
//!
//! The crate is organised by stage of a run:
//!
//! * [`grid`]: the periodic lattice and run configuration.
//! * [`dynamics`]: exact spectral Dirac and Klein-Gordon propagation.
//! * [`currents`]: standard and two-state (weak) four-currents.
//! * [`guidance`]: world lines guided by `u = j / rho0`, ensembles, equivariance.
//! * [`onshell`]: particle and field Lagrangian terms evaluated along world lines.
//! * [`retro`]: two-particle states, final-boundary channels, Born-weighted recovery.
//! * [`covariance`]: Lorentz boosts of vectors, spinors and world lines.

pub mod covariance;
pub mod currents;
pub mod dynamics;
mod error;
pub mod grid;
pub mod guidance;
pub mod onshell;
pub mod retro;
pub mod spectral;
pub mod spinor;
pub mod stats;

pub use error::{Error, Result};

pub use covariance::{boost_spinor, boost_vector, boost_worldline, BoostParams};
pub use currents::{
    continuity_residual, current_magnitude, dirac_current, kg_current, overlap, weak_current,
    CausalClass, FourCurrentField, Overlap, Rho0Field,
};
pub use dynamics::{
    dirac_equation_residual, evolve_dirac, evolve_kg, field_norm, gaussian_packet, kg_gaussian_packet,
    Direction,
    FieldHistory, KGField, SpinorField,
};
pub use grid::{build_lattice, wavenumbers, Backend, PacketParams, SimConfig, SpacetimeLattice};
pub use guidance::{
    coordinate_velocity, equivariance_stat, four_velocity, integrate_worldline, sample_positions,
    Ensemble, WorldLine,
};
pub use onshell::{onshell_report, OnShellReport};
pub use retro::{ChannelEnsemble, FinalBasis, FinalChannel, JointField, Particle};
pub use spinor::Spinor;
