use thiserror::Error;

use crate::currents::CausalClass;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration value for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("field length {found} does not match lattice size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("time labels differ: {left} vs {right}")]
    TimeMismatch { left: f64, right: f64 },

    #[error("packet width {width} is too small for dx = {dx} (need width >= 4 dx)")]
    PacketTooNarrow { width: f64, dx: f64 },

    #[error("packet width {width} is too wide for lattice length {length} (need length > 10 width)")]
    PacketTooWide { width: f64, length: f64 },

    #[error("need at least {needed} slices, got {found}")]
    TooFewSlices { needed: usize, found: usize },

    #[error("overlap |N| = {magnitude:e} is at or below the degeneracy floor {floor:e}")]
    DegenerateChannel { magnitude: f64, floor: f64 },

    #[error("four-vector ({j0}, {j1}) is {class:?}; a timelike future-pointing vector is required")]
    CausalCharacter { j0: f64, j1: f64, class: CausalClass },

    #[error("|j0| = {j0:e} is at or below the stagnation floor {floor:e}")]
    Stagnation { j0: f64, floor: f64 },

    #[error("density is negative ({value:e}) at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("four-velocity is not unit normalized: u.u = {norm}")]
    NotNormalized { norm: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("both superposition coefficients are zero")]
    ZeroCoefficients,

    #[error("channel ensemble is incomplete ({found} of {expected} channels)")]
    IncompleteEnsemble { expected: usize, found: usize },

    #[error("rapidity {0} exceeds the supported range |eta| <= 5")]
    RapidityOutOfRange(f64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
