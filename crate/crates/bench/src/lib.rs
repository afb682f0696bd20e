//! Fixtures shared by the kernel benchmarks.

use worldline_core::{
    dirac_current, evolve_dirac, gaussian_packet, Direction, FourCurrentField, SpacetimeLattice, SpinorField,
};

pub const MASS: f64 = 1.0;

/// Lattice of `nx` cells at spacing 0.2 with `nt` steps of 0.01.
pub fn lattice(nx: usize, nt: usize) -> SpacetimeLattice {
    SpacetimeLattice::centered(nx, 0.2, nt, 0.01).expect("valid lattice")
}

/// Packet of width 12 at rest offset -3.5, moving with k0 = 1.
pub fn packet(lat: &SpacetimeLattice) -> SpinorField {
    gaussian_packet(lat, MASS, -3.5, 12.0, 1.0).expect("packet fits the lattice")
}

/// Dirac currents of the packet at every step of `lat`.
pub fn current_history(lat: &SpacetimeLattice) -> Vec<FourCurrentField> {
    let h = evolve_dirac(&packet(lat), lat, MASS, lat.nt(), Direction::Forward).expect("evolution");
    h.slices().iter().map(dirac_current).collect()
}
