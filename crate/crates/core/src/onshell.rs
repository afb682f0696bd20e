//! Lagrangian terms of the particle-plus-field model and the on-shell checks.
//!
//! The particle's rest density is a delta function on its world line, so the
//! particle term and the extra source term of the generalised field equation
//! are evaluated at the particle's location with the delta weight set to 1.

use num_complex::Complex64;

use crate::currents::{overlap, weak_current, CausalClass, FourCurrentField, Overlap};
use crate::dynamics::{dirac_operator_slice, same_time, FieldHistory, SpinorField};
use crate::error::{Error, Result};
use crate::grid::SpacetimeLattice;
use crate::guidance::{CurrentSampler, WorldLine};
use crate::spectral::Spectral;
use crate::spinor::{self, Spinor};

/// Allowed deviation of `u.u` from 1.
pub const UNIT_TOL: f64 = 1e-12;

/// Scan half-width in rapidity and number of scan points.
pub const SCAN_HALF_WIDTH: f64 = 2.0;
pub const SCAN_POINTS: usize = 401;

/// `-rho0 (u.u)^(1/2) + u.j` for a unit four-velocity, i.e. `u.j - rho0`.
pub fn particle_lagrangian_density(u0: f64, u1: f64, j0: f64, j1: f64, rho0: f64) -> Result<f64> {
    let norm = u0 * u0 - u1 * u1;
    if (norm - 1.0).abs() > UNIT_TOL || u0 <= 0.0 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(u0 * j0 - u1 * j1 - rho0 * norm.sqrt())
}

/// Result of scanning the particle term over unit four-velocities
/// `u = (cosh eta, sinh eta)` around the current's own rapidity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RapidityScan {
    /// Rapidity of `j / rho0`.
    pub current_rapidity: f64,
    pub argmin: f64,
    pub min_value: f64,
    pub grid_step: f64,
}

pub fn rapidity_scan(j0: f64, j1: f64) -> Result<RapidityScan> {
    let class = CausalClass::of(j0, j1);
    if class != CausalClass::Timelike || j0 <= 0.0 {
        return Err(Error::CausalCharacter { j0, j1, class });
    }
    let rho0 = (j0 * j0 - j1 * j1).sqrt();
    let centre = (j1 / j0).atanh();
    let half = (SCAN_POINTS / 2) as i64;
    let grid_step = SCAN_HALF_WIDTH / half as f64;
    let mut best = (f64::INFINITY, centre);
    for i in 0..SCAN_POINTS as i64 {
        let eta = centre + (i - half) as f64 * grid_step;
        let (s, c) = (eta.sinh(), eta.cosh());
        let value = c * j0 - s * j1 - rho0;
        if value < best.0 {
            best = (value, eta);
        }
    }
    Ok(RapidityScan { current_rapidity: centre, argmin: best.1, min_value: best.0, grid_step })
}

/// Source term `(u_a - j_a / rho0) gamma^a psi` of the generalised Dirac
/// equation at the particle's location. Vanishes when `u = j / rho0`.
pub fn generalized_dirac_rhs(psi: &Spinor, u0: f64, u1: f64, j0: f64, j1: f64, rho0: f64) -> Result<Spinor> {
    if !(rho0 > 0.0) {
        return Err(Error::CausalCharacter { j0, j1, class: CausalClass::of(j0, j1) });
    }
    // lower indices with signature (+, -)
    let d0 = u0 - j0 / rho0;
    let d1 = -(u1 - j1 / rho0);
    let g0 = spinor::gamma0(psi);
    let g1 = spinor::gamma1(psi);
    Ok([g0[0] * d0 + g1[0] * d1, g0[1] * d0 + g1[1] * d1])
}

/// Field term `Re[(1/N)(-i bar psi_f gamma^a d_a psi_i + m bar psi_f psi_i)]`
/// on the middle slice of `psi_i` (three consecutive slices).
pub fn field_lagrangian_density(
    psi_i: &[SpinorField],
    psi_f: &SpinorField,
    n: &Overlap,
    lattice: &SpacetimeLattice,
    m: f64,
) -> Result<Vec<f64>> {
    if psi_i.len() != 3 {
        return Err(Error::TooFewSlices { needed: 3, found: psi_i.len() });
    }
    let floor = crate::currents::overlap_floor(&psi_i[1], psi_f, lattice);
    if !(n.value.norm() > floor) {
        return Err(Error::DegenerateChannel { magnitude: n.value.norm(), floor });
    }
    if !same_time(psi_i[1].time_label, psi_f.time_label) {
        return Err(Error::TimeMismatch { left: psi_i[1].time_label, right: psi_f.time_label });
    }
    let sp = Spectral::new(lattice);
    Ok(field_density_with(&sp, psi_i, psi_f, n.value, m))
}

fn field_density_with(sp: &Spectral, psi_i: &[SpinorField], psi_f: &SpinorField, n: Complex64, m: f64) -> Vec<f64> {
    let step = 0.5 * (psi_i[2].time_label - psi_i[0].time_label);
    let r = dirac_operator_slice(&psi_i[0], &psi_i[1], &psi_i[2], step, sp, m);
    let inv = 1.0 / n;
    // -i bar f gamma^a d_a psi + m bar f psi = -bar f (i gamma^a d_a - m) psi
    psi_f.values.iter().zip(&r).map(|(f, r)| -(inv * spinor::inner(f, &spinor::gamma0(r))).re).collect()
}

/// RMS over interior slices and cells of the field Lagrangian density.
pub fn field_term_rms(
    psi_i: &FieldHistory<SpinorField>,
    psi_f: &FieldHistory<SpinorField>,
    n: &Overlap,
    lattice: &SpacetimeLattice,
    m: f64,
) -> Result<f64> {
    check_histories(psi_i, psi_f, lattice)?;
    if psi_i.len() < 3 {
        return Err(Error::TooFewSlices { needed: 3, found: psi_i.len() });
    }
    let floor = crate::currents::overlap_floor(psi_i.first(), psi_f.first(), lattice);
    if !(n.value.norm() > floor) {
        return Err(Error::DegenerateChannel { magnitude: n.value.norm(), floor });
    }
    let sp = Spectral::new(lattice);
    let slices = psi_i.slices();
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in 1..slices.len() - 1 {
        let d = field_density_with(&sp, &slices[s - 1..=s + 1], &psi_f.slices()[s], n.value, m);
        sum += d.iter().map(|v| v * v).sum::<f64>();
        count += d.len();
    }
    Ok((sum / count as f64).sqrt())
}

fn check_histories(
    psi_i: &FieldHistory<SpinorField>,
    psi_f: &FieldHistory<SpinorField>,
    lattice: &SpacetimeLattice,
) -> Result<()> {
    if psi_i.len() != psi_f.len() {
        return Err(Error::TooFewSlices { needed: psi_i.len(), found: psi_f.len() });
    }
    for (a, b) in psi_i.slices().iter().zip(psi_f.slices()) {
        lattice.check_len(a.len())?;
        lattice.check_len(b.len())?;
        if !same_time(a.time_label, b.time_label) {
            return Err(Error::TimeMismatch { left: a.time_label, right: b.time_label });
        }
    }
    Ok(())
}

/// Weak currents of a co-evolved pair of histories with `N` taken on the first slice.
pub fn weak_current_history(
    psi_i: &FieldHistory<SpinorField>,
    psi_f: &FieldHistory<SpinorField>,
    lattice: &SpacetimeLattice,
) -> Result<(Overlap, Vec<FourCurrentField>)> {
    check_histories(psi_i, psi_f, lattice)?;
    let n = overlap(psi_f.first(), psi_i.first(), lattice)?;
    let currents = psi_i
        .slices()
        .iter()
        .zip(psi_f.slices())
        .map(|(i, f)| weak_current(i, f, &n, lattice))
        .collect::<Result<Vec<_>>>()?;
    Ok((n, currents))
}

/// Summary of the on-shell checks along one world line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnShellReport {
    /// Largest `|u.j - rho0|` over evaluated samples.
    pub particle_lagrangian_value: f64,
    /// Smallest `u.j - rho0` over evaluated samples.
    pub min_particle_lagrangian: f64,
    /// Largest norm of the generalised field-equation source term.
    pub rhs_norm: f64,
    pub field_term_rms: f64,
    /// Largest `|bracket(u) - min over the rapidity scan|`.
    pub minimizer_gap: f64,
    pub evaluated_samples: usize,
    /// Samples without a timelike four-velocity or with a non-timelike local current.
    pub skipped_samples: usize,
}

fn spinor_at(history: &FieldHistory<SpinorField>, lattice: &SpacetimeLattice, t: f64, x: f64) -> Spinor {
    let slices = history.slices();
    let n = slices.len();
    let pos = if n == 1 { 0.0 } else { ((t - slices[0].time_label) / history.step()).clamp(0.0, (n - 1) as f64) };
    let s = (pos.floor() as usize).min(n.saturating_sub(2));
    let ft = pos - s as f64;
    let nx = lattice.nx();
    let y = ((x - lattice.x_min()) / lattice.dx()).rem_euclid(nx as f64);
    let c0 = (y.floor() as usize).min(nx - 1);
    let fx = y - c0 as f64;
    let c1 = (c0 + 1) % nx;
    let at = |f: &SpinorField| -> Spinor {
        let (a, b) = (f.values[c0], f.values[c1]);
        [a[0] + (b[0] - a[0]) * fx, a[1] + (b[1] - a[1]) * fx]
    };
    let a = at(&slices[s]);
    if n == 1 {
        return a;
    }
    let b = at(&slices[s + 1]);
    [a[0] + (b[0] - a[0]) * ft, a[1] + (b[1] - a[1]) * ft]
}

/// Evaluates the particle term, the field-equation source term and the
/// minimiser property along every sample of `worldlines`, using the weak current of
/// (`psi_i`, `psi_f`) as the guiding current, plus the field-term RMS over the
/// whole history.
pub fn onshell_report(
    psi_i: &FieldHistory<SpinorField>,
    worldlines: &[WorldLine],
    psi_f: &FieldHistory<SpinorField>,
    lattice: &SpacetimeLattice,
    m: f64,
) -> Result<OnShellReport> {
    if worldlines.iter().all(WorldLine::is_empty) {
        return Err(Error::Empty("world line"));
    }
    let (n, currents) = weak_current_history(psi_i, psi_f, lattice)?;
    let sampler = CurrentSampler::new(&currents, lattice)?;
    let field_rms = field_term_rms(psi_i, psi_f, &n, lattice, m)?;

    let mut report = OnShellReport {
        particle_lagrangian_value: 0.0,
        min_particle_lagrangian: f64::INFINITY,
        rhs_norm: 0.0,
        field_term_rms: field_rms,
        minimizer_gap: 0.0,
        evaluated_samples: 0,
        skipped_samples: 0,
    };
    for s in worldlines.iter().flat_map(|w| &w.samples) {
        let (j0, j1) = sampler.current_at(s.t, s.x);
        let (Some((u0, u1)), Ok(scan)) = (s.u, rapidity_scan(j0, j1)) else {
            report.skipped_samples += 1;
            continue;
        };
        let rho0 = (j0 * j0 - j1 * j1).sqrt();
        let bracket = particle_lagrangian_density(u0, u1, j0, j1, rho0)?;
        let psi = spinor_at(psi_i, lattice, s.t, s.x);
        let rhs = generalized_dirac_rhs(&psi, u0, u1, j0, j1, rho0)?;
        report.particle_lagrangian_value = report.particle_lagrangian_value.max(bracket.abs());
        report.min_particle_lagrangian = report.min_particle_lagrangian.min(bracket);
        report.rhs_norm = report.rhs_norm.max(spinor::norm_sqr(&rhs).sqrt());
        report.minimizer_gap = report.minimizer_gap.max((bracket - scan.min_value).abs());
        report.evaluated_samples += 1;
    }
    if report.evaluated_samples == 0 {
        report.min_particle_lagrangian = 0.0;
    }
    Ok(report)
}

/// Copy of `worldline` whose recorded four-velocities correspond to the
/// coordinate velocity scaled by `factor`. Samples where the scaled velocity
/// is not subluminal lose their four-velocity.
pub fn scale_velocities(worldline: &WorldLine, factor: f64) -> WorldLine {
    let mut out = worldline.clone();
    for s in &mut out.samples {
        let v = s.v * factor;
        s.v = v;
        s.u = (v.abs() < 1.0).then(|| {
            let g = 1.0 / (1.0 - v * v).sqrt();
            (g, g * v)
        });
    }
    out
}
