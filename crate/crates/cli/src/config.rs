//! Flat `key = value` run configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use worldline_core::grid::{BasisKind, Potential};
use worldline_core::{Backend, PacketParams, SimConfig};

const REQUIRED: [&str; 12] = [
    "nx",
    "dx",
    "dt",
    "n_steps",
    "mass",
    "packet.center",
    "packet.width",
    "packet.momentum",
    "seed",
    "n_traj",
    "backend",
    "potential",
];

const OPTIONAL: [&str; 15] = [
    "x_min",
    "substeps",
    "output_dir",
    "output_stride",
    "final.center",
    "final.width",
    "final.momentum",
    "retro.nx",
    "retro.dx",
    "retro.width",
    "retro.separation",
    "retro.basis",
    "retro.n_steps",
    "retro.seed",
    "weak.n_traj",
];

/// A parsed configuration plus the settings that only the command line tool uses.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Time steps for the two-particle study.
    pub retro_steps: usize,
    /// Seed of the random joint state in the two-particle study.
    pub retro_seed: u64,
    /// Number of world lines used for the on-shell evaluation of a weak run.
    pub weak_lines: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), retro_steps: 100, retro_seed: 7, weak_lines: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: `{}`: {}", self.key, self.reason),
            None => write!(f, "`{}`: {}", self.key, self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

struct Entry {
    value: String,
    line: usize,
}

struct Entries(HashMap<String, Entry>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.0.get(key) else { return Ok(None) };
        e.value.parse().map(Some).map_err(|_| ConfigError {
            key: key.into(),
            line: Some(e.line),
            reason: format!("cannot parse `{}`", e.value),
        })
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or_else(|| missing(key))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }

    fn invalid(&self, key: &str, reason: String) -> ConfigError {
        ConfigError { key: key.into(), line: self.line(key), reason }
    }
}

fn missing(key: &str) -> ConfigError {
    ConfigError { key: key.into(), line: None, reason: "required key is missing".into() }
}

fn parse_backend(s: &str) -> Option<Backend> {
    match s {
        "dirac" => Some(Backend::Dirac),
        "klein-gordon" | "klein_gordon" => Some(Backend::KleinGordon),
        _ => None,
    }
}

fn parse_basis(s: &str) -> Option<BasisKind> {
    match s {
        "position" => Some(BasisKind::Position),
        "momentum" => Some(BasisKind::Momentum),
        _ => None,
    }
}

pub fn backend_name(b: Backend) -> &'static str {
    match b {
        Backend::Dirac => "dirac",
        Backend::KleinGordon => "klein-gordon",
    }
}

pub fn basis_name(b: BasisKind) -> &'static str {
    match b {
        BasisKind::Position => "position",
        BasisKind::Momentum => "momentum",
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut entries = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError { key: content.into(), line: Some(line), reason: "expected `key = value`".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(ConfigError { key: key.into(), line: Some(line), reason: "unknown key".into() });
        }
        if let Some(prev) = entries.get(key).map(|e: &Entry| e.line) {
            return Err(ConfigError {
                key: key.into(),
                line: Some(line),
                reason: format!("duplicate key (first set on line {prev})"),
            });
        }
        entries.insert(key.to_string(), Entry { value: value.to_string(), line });
    }
    let e = Entries(entries);
    for key in REQUIRED {
        if e.line(key).is_none() {
            return Err(missing(key));
        }
    }

    let mut run = RunConfig::default();
    let sim = &mut run.sim;
    sim.nx = e.require("nx")?;
    if sim.nx == 0 || !sim.nx.is_power_of_two() {
        return Err(e.invalid("nx", format!("{} is not a power of two", sim.nx)));
    }
    sim.dx = e.require("dx")?;
    sim.dt = e.require("dt")?;
    sim.n_steps = e.require("n_steps")?;
    sim.mass = e.require("mass")?;
    sim.packet = PacketParams {
        center: e.require("packet.center")?,
        width: e.require("packet.width")?,
        momentum: e.require("packet.momentum")?,
    };
    sim.seed = e.require("seed")?;
    sim.n_traj = e.require("n_traj")?;
    let backend: String = e.require("backend")?;
    sim.backend = parse_backend(&backend)
        .ok_or_else(|| e.invalid("backend", format!("`{backend}` is not one of dirac, klein-gordon")))?;
    let potential: String = e.require("potential")?;
    if potential != "none" {
        return Err(e.invalid("potential", format!("`{potential}` is not supported; only `none`")));
    }
    sim.potential = Potential::None;

    sim.x_min = e.get("x_min")?;
    if let Some(v) = e.get("substeps")? {
        sim.substeps = v;
    }
    if let Some(v) = e.get::<String>("output_dir")? {
        sim.output_dir = PathBuf::from(v);
    }
    if let Some(v) = e.get("output_stride")? {
        sim.output_stride = v;
    }
    let finals = ["final.center", "final.width", "final.momentum"];
    if finals.iter().any(|k| e.line(k).is_some()) {
        sim.final_packet = Some(PacketParams {
            center: e.require(finals[0])?,
            width: e.require(finals[1])?,
            momentum: e.require(finals[2])?,
        });
    }
    if let Some(v) = e.get("retro.nx")? {
        sim.retro.nx = v;
    }
    if let Some(v) = e.get("retro.dx")? {
        sim.retro.dx = v;
    }
    if let Some(v) = e.get("retro.width")? {
        sim.retro.width = v;
    }
    if let Some(v) = e.get("retro.separation")? {
        sim.retro.separation = v;
    }
    if let Some(v) = e.get::<String>("retro.basis")? {
        sim.retro.basis =
            parse_basis(&v).ok_or_else(|| e.invalid("retro.basis", format!("`{v}` is not one of position, momentum")))?;
    }
    if let Some(v) = e.get("retro.n_steps")? {
        run.retro_steps = v;
    }
    if let Some(v) = e.get("retro.seed")? {
        run.retro_seed = v;
    }
    if let Some(v) = e.get("weak.n_traj")? {
        run.weak_lines = v;
    }

    run.sim.validate().map_err(|err| match err {
        worldline_core::Error::Config { key, reason } => ConfigError { line: e.line(&key), key, reason },
        other => ConfigError { key: "nx".into(), line: e.line("nx"), reason: other.to_string() },
    })?;
    if !(run.sim.dx > 0.0) {
        return Err(e.invalid("dx", "must be positive".into()));
    }
    if !(run.sim.dt > 0.0) {
        return Err(e.invalid("dt", "must be positive".into()));
    }
    Ok(run)
}

/// Renders the configuration in the same flat format, every key spelled out.
pub fn echo(run: &RunConfig) -> Vec<(String, String)> {
    let s = &run.sim;
    let f = s.final_packet();
    let mut out = vec![
        ("nx", s.nx.to_string()),
        ("dx", real(s.dx)),
        ("dt", real(s.dt)),
        ("n_steps", s.n_steps.to_string()),
        ("x_min", s.x_min.map(real).unwrap_or_else(|| "centered".into())),
        ("mass", real(s.mass)),
        ("packet.center", real(s.packet.center)),
        ("packet.width", real(s.packet.width)),
        ("packet.momentum", real(s.packet.momentum)),
        ("final.center", real(f.center)),
        ("final.width", real(f.width)),
        ("final.momentum", real(f.momentum)),
        ("seed", s.seed.to_string()),
        ("n_traj", s.n_traj.to_string()),
        ("substeps", s.substeps.to_string()),
        ("backend", backend_name(s.backend).into()),
        ("potential", "none".into()),
        ("output_stride", s.output_stride.to_string()),
        ("retro.nx", s.retro.nx.to_string()),
        ("retro.dx", real(s.retro.dx)),
        ("retro.width", real(s.retro.width)),
        ("retro.separation", real(s.retro.separation)),
        ("retro.basis", basis_name(s.retro.basis).into()),
        ("retro.n_steps", run.retro_steps.to_string()),
        ("retro.seed", run.retro_seed.to_string()),
        ("weak.n_traj", run.weak_lines.to_string()),
    ];
    out.sort_by(|a, b| a.0.cmp(b.0));
    out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn real(v: f64) -> String {
    crate::output::real(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = "\
# defaults for everything optional
nx = 1024
dx = 0.2
dt = 0.01
n_steps = 1000
mass = 1.0
packet.center = -3.5
packet.width = 12.0
packet.momentum = 1.0
seed = 20170101
n_traj = 10000
backend = dirac
potential = none
";

    #[test]
    fn minimal_file_gets_defaults() {
        let run = parse_config(MINIMAL).unwrap();
        assert_eq!(run, RunConfig::default());
    }

    #[test]
    fn missing_mass_is_named() {
        let text = MINIMAL.replace("mass = 1.0\n", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.key, "mass");
        assert!(err.to_string().contains("mass"));
    }

    #[test]
    fn nx_must_be_power_of_two() {
        let err = parse_config(&MINIMAL.replace("nx = 1024", "nx = 100")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("nx", Some(2)));
        assert!(err.reason.contains("power of two"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = parse_config(&format!("{MINIMAL}colour = blue\n")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("colour", Some(14)));
        let err = parse_config(&format!("{MINIMAL}dt = 0.02\n")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("dt", Some(14)));
        assert!(err.reason.contains("line 4"));
    }

    #[test]
    fn unparsable_values() {
        let err = parse_config(&MINIMAL.replace("dx = 0.2", "dx = wide")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("dx", Some(3)));
        let err = parse_config(&MINIMAL.replace("backend = dirac", "backend = schrodinger")).unwrap_err();
        assert_eq!(err.key, "backend");
        let err = parse_config(&MINIMAL.replace("potential = none", "potential = step")).unwrap_err();
        assert_eq!(err.key, "potential");
        let err = parse_config("just words\n").unwrap_err();
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn optional_keys() {
        let text = format!(
            "{MINIMAL}x_min = -10  # left edge\nsubsteps = 8\nfinal.center = 3\nfinal.width = 15\nfinal.momentum = 1\n\
             retro.basis = momentum\nretro.n_steps = 5\nbackend_unused_comment = 1\n"
        );
        assert_eq!(parse_config(&text).unwrap_err().key, "backend_unused_comment");
        let text = text.replace("backend_unused_comment = 1\n", "");
        let run = parse_config(&text).unwrap();
        assert_eq!(run.sim.x_min, Some(-10.0));
        assert_eq!(run.sim.substeps, 8);
        assert_eq!(run.sim.final_packet, Some(PacketParams { center: 3.0, width: 15.0, momentum: 1.0 }));
        assert_eq!(run.sim.retro.basis, BasisKind::Momentum);
        assert_eq!(run.retro_steps, 5);
        let partial = format!("{MINIMAL}final.center = 3\n");
        assert_eq!(parse_config(&partial).unwrap_err().key, "final.width");
        let bad = format!("{MINIMAL}substeps = 0\n");
        let err = parse_config(&bad).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("substeps", Some(14)));
    }

    #[test]
    fn echo_is_sorted_and_complete() {
        let run = parse_config(MINIMAL).unwrap();
        let keys: Vec<_> = echo(&run).into_iter().map(|(k, _)| k).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert!(REQUIRED.iter().all(|k| keys.iter().any(|e| e == k)));
    }
}
