//! CSV and manifest writers.
//!
//! Reals are written with `{:.16e}`: 17 significant digits, which reproduce
//! every finite `f64` exactly when parsed back.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use worldline_core::currents::CausalClass;
use worldline_core::guidance::Ensemble;
use worldline_core::{FourCurrentField, KGField, SpacetimeLattice, SpinorField};

use crate::suite::Check;

pub const TRAJECTORY_HEADER: &str = "traj_id,t,x,u0,u1,flags";
pub const FIELD_HEADER: &str = "t,x,re_psi1,im_psi1,re_psi2,im_psi2";
pub const CURRENT_HEADER: &str = "t,x,j0,j1,causal_class";

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct OutputError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), OutputError> {
    let wrap = |source| OutputError { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(wrap)?;
    }
    let file = fs::File::create(path).map_err(wrap)?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

/// One row per stored sample. A missing four-velocity is written as `nan`;
/// flags raised at a sample are joined with `|`.
pub fn write_trajectories(path: &Path, ensemble: &Ensemble) -> Result<(), OutputError> {
    write_file(path, |w| {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        let mut flags = String::new();
        for (id, line) in ensemble.worldlines.iter().enumerate() {
            for (i, s) in line.samples.iter().enumerate() {
                let (u0, u1) = s.u.unwrap_or((f64::NAN, f64::NAN));
                flags.clear();
                for (n, kind) in line.flags_at(i).enumerate() {
                    if n > 0 {
                        flags.push('|');
                    }
                    flags.push_str(kind.as_str());
                }
                writeln!(w, "{id},{},{},{},{},{flags}", real(s.t), real(s.x), real(u0), real(u1))?;
            }
        }
        Ok(())
    })
}

pub fn write_spinor_fields(path: &Path, slices: &[&SpinorField], lattice: &SpacetimeLattice) -> Result<(), OutputError> {
    write_file(path, |w| {
        writeln!(w, "{FIELD_HEADER}")?;
        for f in slices {
            for (k, v) in f.values.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    real(f.time_label),
                    real(lattice.x(k)),
                    real(v[0].re),
                    real(v[0].im),
                    real(v[1].re),
                    real(v[1].im)
                )?;
            }
        }
        Ok(())
    })
}

/// Klein-Gordon slices use the field columns for `phi` (component 1) and
/// its conjugate momentum `pi` (component 2).
pub fn write_kg_fields(path: &Path, slices: &[&KGField], lattice: &SpacetimeLattice) -> Result<(), OutputError> {
    write_file(path, |w| {
        writeln!(w, "{FIELD_HEADER}")?;
        for f in slices {
            for (k, (p, q)) in f.phi.iter().zip(&f.pi).enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    real(f.time_label),
                    real(lattice.x(k)),
                    real(p.re),
                    real(p.im),
                    real(q.re),
                    real(q.im)
                )?;
            }
        }
        Ok(())
    })
}

pub fn write_currents(path: &Path, slices: &[&FourCurrentField], lattice: &SpacetimeLattice) -> Result<(), OutputError> {
    write_file(path, |w| {
        writeln!(w, "{CURRENT_HEADER}")?;
        for c in slices {
            for k in 0..c.len() {
                let class = CausalClass::of(c.j0[k], c.j1[k]).as_str();
                writeln!(w, "{},{},{},{},{class}", real(c.time_label), real(lattice.x(k)), real(c.j0[k]), real(c.j1[k]))?;
            }
        }
        Ok(())
    })
}

/// Every `stride`-th element plus the last one.
pub fn strided<T>(items: &[T], stride: usize) -> Vec<&T> {
    let last = items.len().saturating_sub(1);
    items.iter().enumerate().filter(|(i, _)| i % stride == 0 || *i == last).map(|(_, v)| v).collect()
}

/// Flat `key = value` run report. Contains nothing that varies between
/// identical runs; wall-clock time goes to a separate file.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &str| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("command", &self.command);
        kv("version.worldline", env!("CARGO_PKG_VERSION"));
        kv("seed", &self.seed.to_string());
        for (k, v) in &self.config {
            kv(&format!("config.{k}"), v);
        }
        for a in &self.artifacts {
            kv("artifact", a);
        }
        for c in &self.checks {
            let base = format!("check.{}", c.name);
            kv(&format!("{base}.status"), if c.passed { "pass" } else { "fail" });
            kv(&format!("{base}.value"), &real(c.value));
            kv(&format!("{base}.requirement"), &c.requirement());
        }
        kv("checks.total", &self.checks.len().to_string());
        kv("checks.failed", &self.checks.iter().filter(|c| !c.passed).count().to_string());
        kv("status", if self.passed() { "pass" } else { "fail" });
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        let text = self.render();
        write_file(path, |w| w.write_all(text.as_bytes()))
    }
}
