//! Guidance law `u_a = j_a / rho0`: velocities, world lines, ensembles and
//! the equivariance statistic.
//!
//! Trajectories solve `dx/dt = j1 / j0` with classical RK4. The current is
//! interpolated linearly in `x` between cells and linearly in `t` between
//! slices, which keeps `j0` non-negative between grid points of a standard
//! current and keeps `|j1| <= j0` (so standard-current velocities stay
//! subluminal everywhere, not only on the grid).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::currents::{CausalClass, FourCurrentField};
use crate::error::{Error, Result};
use crate::grid::SpacetimeLattice;
use crate::stats::{ks_statistic, CellDensity};

/// Stagnation floor relative to the largest `|j0|` of the history.
pub const STAGNATION_FLOOR: f64 = 1e-10;

/// Relative band around `|v| = 1` reported as lightspeed rather than superluminal.
pub const LIGHTSPEED_BAND: f64 = 1e-12;

pub const DEFAULT_SUBSTEPS: usize = 4;

/// `u = j / rho0` for a timelike, future-pointing current.
pub fn four_velocity(j0: f64, j1: f64) -> Result<(f64, f64)> {
    let class = CausalClass::of(j0, j1);
    if class != CausalClass::Timelike || j0 <= 0.0 {
        return Err(Error::CausalCharacter { j0, j1, class });
    }
    let rho0 = (j0 * j0 - j1 * j1).sqrt();
    Ok((j0 / rho0, j1 / rho0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedClass {
    Subluminal,
    Lightspeed,
    Superluminal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub v: f64,
    pub speed: SpeedClass,
}

impl Velocity {
    fn classify(v: f64) -> Self {
        let excess = v.abs() - 1.0;
        let speed = if excess.abs() <= LIGHTSPEED_BAND {
            SpeedClass::Lightspeed
        } else if excess > 0.0 {
            SpeedClass::Superluminal
        } else {
            SpeedClass::Subluminal
        };
        Self { v, speed }
    }
}

/// `dx/dt = j1 / j0`; `rho0` cancels, so this is defined for any current with
/// `|j0|` above `floor`.
pub fn coordinate_velocity(j0: f64, j1: f64, floor: f64) -> Result<Velocity> {
    if !(j0.abs() > floor) {
        return Err(Error::Stagnation { j0, floor });
    }
    Ok(Velocity::classify(j1 / j0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagKind {
    Superluminal,
    Lightspeed,
    Spacelike,
    PastPointing,
    /// Integration stopped: `|j0|` fell below the stagnation floor.
    Stagnation,
    /// Boosted samples had to be re-sorted in the new time coordinate.
    FrameOrderReversal,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::Superluminal => "superluminal",
            FlagKind::Lightspeed => "lightspeed",
            FlagKind::Spacelike => "spacelike",
            FlagKind::PastPointing => "past_pointing",
            FlagKind::Stagnation => "stagnation",
            FlagKind::FrameOrderReversal => "frame_order_reversal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "superluminal" => FlagKind::Superluminal,
            "lightspeed" => FlagKind::Lightspeed,
            "spacelike" => FlagKind::Spacelike,
            "past_pointing" => FlagKind::PastPointing,
            "stagnation" => FlagKind::Stagnation,
            "frame_order_reversal" => FlagKind::FrameOrderReversal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flag {
    pub sample: usize,
    pub kind: FlagKind,
}

/// One point of a world line. `x` is unwrapped (continuous across the
/// periodic boundary); `u` is present where the local current is timelike
/// and future-pointing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub u: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldLine {
    pub samples: Vec<Sample>,
    pub flags: Vec<Flag>,
}

impl WorldLine {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_flag(&self, kind: FlagKind) -> bool {
        self.flags.iter().any(|f| f.kind == kind)
    }

    pub fn flags_at(&self, sample: usize) -> impl Iterator<Item = FlagKind> + '_ {
        self.flags.iter().filter(move |f| f.sample == sample).map(|f| f.kind)
    }

    pub fn truncated(&self) -> bool {
        self.has_flag(FlagKind::Stagnation)
    }

    /// Largest `|x[s+1] - 2 x[s] + x[s-1]|` along the line.
    pub fn max_second_difference(&self) -> f64 {
        self.samples
            .windows(3)
            .map(|w| (w[2].x - 2.0 * w[1].x + w[0].x).abs())
            .fold(0.0, f64::max)
    }
}

/// Bilinear (space, time) lookup into a current history.
#[derive(Debug, Clone, Copy)]
pub struct CurrentSampler<'a> {
    currents: &'a [FourCurrentField],
    lattice: &'a SpacetimeLattice,
    t0: f64,
    step: f64,
    floor: f64,
}

impl<'a> CurrentSampler<'a> {
    pub fn new(currents: &'a [FourCurrentField], lattice: &'a SpacetimeLattice) -> Result<Self> {
        if currents.is_empty() {
            return Err(Error::Empty("current history"));
        }
        for c in currents {
            lattice.check_len(c.len())?;
        }
        let step = if currents.len() > 1 { currents[1].time_label - currents[0].time_label } else { 1.0 };
        if !(step > 0.0) {
            return Err(Error::Config { key: "currents".into(), reason: "slice times must increase".into() });
        }
        let max_j0 = currents.iter().flat_map(|c| c.j0.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self { currents, lattice, t0: currents[0].time_label, step, floor: STAGNATION_FLOOR * max_j0 })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn t_end(&self) -> f64 {
        self.currents[self.currents.len() - 1].time_label
    }

    pub fn current_at(&self, t: f64, x: f64) -> (f64, f64) {
        let n = self.currents.len();
        let (s, ft) = if n == 1 {
            (0, 0.0)
        } else {
            let pos = ((t - self.t0) / self.step).clamp(0.0, (n - 1) as f64);
            let s = (pos.floor() as usize).min(n - 2);
            (s, pos - s as f64)
        };
        let nx = self.lattice.nx();
        let y = ((x - self.lattice.x_min()) / self.lattice.dx()).rem_euclid(nx as f64);
        let c0 = (y.floor() as usize).min(nx - 1);
        let fx = y - c0 as f64;
        let c1 = (c0 + 1) % nx;
        let at = |c: &FourCurrentField| {
            (
                c.j0[c0] + fx * (c.j0[c1] - c.j0[c0]),
                c.j1[c0] + fx * (c.j1[c1] - c.j1[c0]),
            )
        };
        let a = at(&self.currents[s]);
        if n == 1 || ft == 0.0 {
            return a;
        }
        let b = at(&self.currents[s + 1]);
        (a.0 + ft * (b.0 - a.0), a.1 + ft * (b.1 - a.1))
    }

    pub fn velocity_at(&self, t: f64, x: f64) -> Result<Velocity> {
        let (j0, j1) = self.current_at(t, x);
        coordinate_velocity(j0, j1, self.floor)
    }
}

fn sample_point(sampler: &CurrentSampler<'_>, t: f64, x: f64, index: usize, flags: &mut Vec<Flag>) -> Result<Sample> {
    let (j0, j1) = sampler.current_at(t, x);
    let vel = coordinate_velocity(j0, j1, sampler.floor())?;
    match vel.speed {
        SpeedClass::Superluminal => flags.push(Flag { sample: index, kind: FlagKind::Superluminal }),
        SpeedClass::Lightspeed => flags.push(Flag { sample: index, kind: FlagKind::Lightspeed }),
        SpeedClass::Subluminal => {}
    }
    if CausalClass::of(j0, j1) == CausalClass::Spacelike {
        flags.push(Flag { sample: index, kind: FlagKind::Spacelike });
    }
    if j0 < 0.0 {
        flags.push(Flag { sample: index, kind: FlagKind::PastPointing });
    }
    Ok(Sample { t, x, v: vel.v, u: four_velocity(j0, j1).ok() })
}

/// Integrates `dx/dt = j1/j0` through a current history, one sample per slice.
///
/// Each slice interval is split into `substeps` RK4 steps. If `|j0|` drops
/// below the stagnation floor the line ends at the last good sample with a
/// [`FlagKind::Stagnation`] flag.
pub fn integrate_worldline(
    x_start: f64,
    currents: &[FourCurrentField],
    lattice: &SpacetimeLattice,
    substeps: usize,
) -> Result<WorldLine> {
    if substeps == 0 {
        return Err(Error::Config { key: "substeps".into(), reason: "must be at least 1".into() });
    }
    let sampler = CurrentSampler::new(currents, lattice)?;
    Ok(integrate_with(&sampler, x_start, substeps, 1))
}

/// Stores the sample of every `stride`-th slice (and the last slice). Flags
/// raised on a slice that is not stored point at the next stored sample.
fn integrate_with(sampler: &CurrentSampler<'_>, x_start: f64, substeps: usize, stride: usize) -> WorldLine {
    let currents = sampler.currents;
    let last = currents.len() - 1;
    let mut line = WorldLine { samples: Vec::with_capacity(last / stride + 2), flags: Vec::new() };
    let stop = |line: &mut WorldLine| {
        let index = line.samples.len().saturating_sub(1);
        line.flags.push(Flag { sample: index, kind: FlagKind::Stagnation });
    };
    let t0 = currents[0].time_label;
    match sample_point(sampler, t0, x_start, 0, &mut line.flags) {
        Ok(s) => line.samples.push(s),
        Err(_) => {
            stop(&mut line);
            return line;
        }
    }
    let f = |t: f64, x: f64| sampler.velocity_at(t, x).map(|v| v.v);
    let mut x = x_start;
    for s in 1..currents.len() {
        let ta = currents[s - 1].time_label;
        let tb = currents[s].time_label;
        let h = (tb - ta) / substeps as f64;
        let mut advanced = true;
        for sub in 0..substeps {
            let t = ta + sub as f64 * h;
            let step = (|| -> Result<f64> {
                let k1 = f(t, x)?;
                let k2 = f(t + 0.5 * h, x + 0.5 * h * k1)?;
                let k3 = f(t + 0.5 * h, x + 0.5 * h * k2)?;
                let k4 = f(t + h, x + h * k3)?;
                Ok(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            })();
            match step {
                Ok(nx) => x = nx,
                Err(_) => {
                    advanced = false;
                    break;
                }
            }
        }
        if !advanced {
            stop(&mut line);
            return line;
        }
        match sample_point(sampler, tb, x, line.samples.len(), &mut line.flags) {
            Ok(sample) if s % stride == 0 || s == last => line.samples.push(sample),
            Ok(_) => {}
            Err(_) => {
                stop(&mut line);
                return line;
            }
        }
    }
    line
}

/// Initial positions drawn from the piecewise-constant density `j0` by
/// inverse-CDF sampling. Draw `i` uses ChaCha8 stream `i` of `seed`, so the
/// output does not depend on how the work is scheduled.
pub fn sample_positions(j0_slice: &[f64], lattice: &SpacetimeLattice, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        lattice.check_len(j0_slice.len())?;
        return Ok(Vec::new());
    }
    let density = CellDensity::new(j0_slice, lattice)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            density.quantile(rng.random::<f64>())
        })
        .collect())
}

/// KS distance between the positions and the density `j0_slice`.
pub fn equivariance_stat(positions: &[f64], j0_slice: &[f64], lattice: &SpacetimeLattice) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::Empty("positions"));
    }
    let density = CellDensity::new(j0_slice, lattice)?;
    ks_statistic(positions, |x| density.cdf(x))
}

/// Trajectory ensemble launched from positions distributed as `j0(t0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub worldlines: Vec<WorldLine>,
    pub seed: u64,
}

impl Ensemble {
    pub fn run(
        currents: &[FourCurrentField],
        lattice: &SpacetimeLattice,
        n: usize,
        seed: u64,
        substeps: usize,
    ) -> Result<Self> {
        Self::run_recorded(currents, lattice, n, seed, substeps, 1)
    }

    /// Like [`Ensemble::run`] but stores only every `stride`-th slice (plus the last).
    pub fn run_recorded(
        currents: &[FourCurrentField],
        lattice: &SpacetimeLattice,
        n: usize,
        seed: u64,
        substeps: usize,
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config { key: "output_stride".into(), reason: "must be at least 1".into() });
        }
        if substeps == 0 {
            return Err(Error::Config { key: "substeps".into(), reason: "must be at least 1".into() });
        }
        let sampler = CurrentSampler::new(currents, lattice)?;
        let starts = sample_positions(&currents[0].j0, lattice, n, seed)?;
        let worldlines = starts.par_iter().map(|&x| integrate_with(&sampler, x, substeps, stride)).collect();
        Ok(Self { worldlines, seed })
    }

    pub fn len(&self) -> usize {
        self.worldlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worldlines.is_empty()
    }

    /// Positions at sample `index`, wrapped into the lattice period. Truncated
    /// lines that end earlier are skipped.
    pub fn positions_at(&self, index: usize, lattice: &SpacetimeLattice) -> Vec<f64> {
        self.worldlines.iter().filter_map(|w| w.samples.get(index)).map(|s| lattice.wrap(s.x)).collect()
    }

    pub fn count_flag(&self, kind: FlagKind) -> usize {
        self.worldlines.iter().map(|w| w.flags.iter().filter(|f| f.kind == kind).count()).sum()
    }

    /// True when the initial x-ordering of all full-length lines holds at every sample.
    pub fn ordering_preserved(&self) -> bool {
        let full = self.worldlines.iter().map(WorldLine::len).max().unwrap_or(0);
        let mut lines: Vec<&WorldLine> = self.worldlines.iter().filter(|w| w.len() == full).collect();
        if lines.len() < 2 {
            return true;
        }
        lines.sort_by(|a, b| a.samples[0].x.total_cmp(&b.samples[0].x));
        (0..full).all(|s| lines.windows(2).all(|p| p[0].samples[s].x <= p[1].samples[s].x))
    }
}

/// Upper bound on the path acceleration `d_t v + v d_x v` implied by the
/// interpolated velocity field, taken over cells with `j0` above
/// `support * max j0`. Uses one-sided differences between neighbouring grid
/// values, which bound the slopes of the piecewise-linear interpolants.
pub fn flow_acceleration_bound(currents: &[FourCurrentField], lattice: &SpacetimeLattice, support: f64) -> f64 {
    if currents.len() < 2 {
        return 0.0;
    }
    let nx = lattice.nx();
    let max_j0 = currents.iter().flat_map(|c| c.j0.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = support * max_j0;
    let dt = currents[1].time_label - currents[0].time_label;
    let vel = |c: &FourCurrentField, k: usize| c.j1[k] / c.j0[k];
    let mut bound = 0.0f64;
    for s in 0..currents.len() - 1 {
        let (a, b) = (&currents[s], &currents[s + 1]);
        for k in 0..nx {
            let k1 = (k + 1) % nx;
            if a.j0[k] < cut || b.j0[k] < cut || a.j0[k1] < cut || b.j0[k1] < cut {
                continue;
            }
            let dvdt = ((vel(b, k) - vel(a, k)) / dt).abs();
            let dvdx = ((vel(a, k1) - vel(a, k)) / lattice.dx()).abs().max(((vel(b, k1) - vel(b, k)) / lattice.dx()).abs());
            let speed = vel(a, k).abs().max(vel(b, k).abs()).max(vel(a, k1).abs());
            bound = bound.max(dvdt + speed * dvdx);
        }
    }
    bound
}
