//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers, `#` comments. Every key is consumed exactly once; anything left
//! over is reported as unknown.
//!
//! ```text
//! [grid]
//! d = 1
//! n = 256
//! ell = 40
//!
//! [solver]
//! eps = 1e-3
//! lambda = 1
//! dt = 1e-3
//! T = 1
//! samples = 10          # sample intervals, states at samples + 1 times
//! entropy_k = 10        # optional, default 10
//! dispersion = true     # optional
//! write_states = true   # optional
//!
//! [noise]
//! kind = atomic         # none | atomic | radial
//! m = 1                 # none only
//! atoms = 0.5 @ 3; -0.8 @ 2
//! delta_cut = 0         # optional for atomic, required for radial
//! alpha = 0.5           # radial
//! c = 1                 # radial
//! seed = 7              # optional, default 0
//! ensemble = 8          # paths per sweep / moment summary, optional
//!
//! [channels]
//! g = photorefractive:1, sqrt_gap
//!
//! [initial]
//! profile = gaussian    # gaussian | sech | modulated | file
//! amplitude = 1
//! width = 1
//! k0 = 1                # modulated
//! file = u0.cfld        # file
//!
//! [output]
//! dir = out
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use slogse::noise::{Atom, LevyMeasureSpec};
use slogse::solver::{uniform_samples, InitialProfile, SolverConfig};
use slogse::{EpsilonParam, Field, Grid, NoiseChannelSet, SaturatedNonlinearity};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<slogse::Error> for ConfigError {
    fn from(e: slogse::Error) -> Self {
        ConfigError(e.to_string())
    }
}

type Res<T> = std::result::Result<T, ConfigError>;

const SECTIONS: [&str; 6] = ["grid", "solver", "noise", "channels", "initial", "output"];

/// Raw `(section, key) → (value, line)` table.
pub struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
    source: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, source: &Path) -> Res<Self> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("line {line_no}: unterminated section header '{line}'")))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError(format!("line {line_no}: unknown section [{name}]")));
                }
                section = Some(name.to_owned());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .clone()
                .ok_or_else(|| ConfigError(format!("line {line_no}: key '{key}' appears before any [section]")))?;
            if key.is_empty() {
                return Err(ConfigError(format!("line {line_no}: empty key")));
            }
            if let Some((_, first)) = entries.insert((sec.clone(), key.to_owned()), (value.to_owned(), line_no)) {
                return Err(ConfigError(format!("line {line_no}: duplicate key '{key}' in [{sec}] (first on line {first})")));
            }
        }
        Ok(Self { entries, source: source.to_owned() })
    }

    pub fn load(path: &Path) -> Res<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.entries.remove(&(section.to_owned(), key.to_owned()))
    }

    fn required<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Res<T> {
        match self.take(section, key) {
            Some((v, line)) => parse_value(&v, section, key, line),
            None => Err(ConfigError(format!("missing required key '{key}' in [{section}]"))),
        }
    }

    fn optional<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Res<T> {
        match self.take(section, key) {
            Some((v, line)) => parse_value(&v, section, key, line),
            None => Ok(default),
        }
    }

    fn finish(self) -> Res<()> {
        match self.entries.into_iter().next() {
            Some(((sec, key), (_, line))) => Err(ConfigError(format!("line {line}: unknown key '{key}' in [{sec}]"))),
            None => Ok(()),
        }
    }
}

fn parse_value<T: std::str::FromStr>(v: &str, section: &str, key: &str, line: usize) -> Res<T> {
    v.parse().map_err(|_| ConfigError(format!("line {line}: cannot parse '{v}' for key '{key}' in [{section}]")))
}

fn with_line<T>(r: slogse::Result<T>, key: &str, line: usize) -> Res<T> {
    r.map_err(|e| ConfigError(format!("line {line}: {key}: {e}")))
}

#[derive(Clone, Debug)]
pub enum InitialData {
    Profile(InitialProfile),
    File(PathBuf),
}

/// A validated run description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub initial: InitialData,
    pub ensemble: usize,
    pub write_states: bool,
    pub out_dir: Option<PathBuf>,
    pub source: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Res<Self> {
        Self::from_raw(RawConfig::load(path)?)
    }

    pub fn from_raw(mut raw: RawConfig) -> Res<Self> {
        let d: usize = raw.required("grid", "d")?;
        let n: usize = raw.required("grid", "n")?;
        let ell: f64 = raw.required("grid", "ell")?;
        let grid = Grid::new(d, n, ell)?;

        let (eps_text, eps_line) =
            raw.take("solver", "eps").ok_or_else(|| ConfigError("missing required key 'eps' in [solver]".into()))?;
        let eps_value: f64 = parse_value(&eps_text, "solver", "eps", eps_line)?;
        let eps = with_line(EpsilonParam::new(eps_value), "eps", eps_line)?;
        let lambda: f64 = raw.required("solver", "lambda")?;
        let dt: f64 = raw.required("solver", "dt")?;
        let horizon: f64 = raw.required("solver", "T")?;
        let samples: usize = raw.required("solver", "samples")?;
        let entropy_k: u32 = raw.optional("solver", "entropy_k", 10)?;
        let dispersion: bool = raw.optional("solver", "dispersion", true)?;
        let write_states: bool = raw.optional("solver", "write_states", true)?;

        let channels = parse_channels(&mut raw)?;
        let (spec, seed, ensemble) = parse_noise(&mut raw)?;

        let profile: String = raw.required("initial", "profile")?;
        let initial = match profile.as_str() {
            "file" => {
                let f: String = raw.required("initial", "file")?;
                InitialData::File(PathBuf::from(f))
            }
            "gaussian" | "sech" | "modulated" => {
                let amplitude = raw.required("initial", "amplitude")?;
                let width = raw.required("initial", "width")?;
                InitialData::Profile(match profile.as_str() {
                    "gaussian" => InitialProfile::Gaussian { amplitude, width },
                    "sech" => InitialProfile::Sech { amplitude, width },
                    _ => InitialProfile::Modulated { amplitude, width, k0: raw.required("initial", "k0")? },
                })
            }
            other => return Err(ConfigError(format!("unknown initial profile '{other}' (gaussian, sech, modulated, file)"))),
        };

        let out_dir = raw.take("output", "dir").map(|(v, _)| PathBuf::from(v));
        let source = raw.source.clone();
        raw.finish()?;

        let solver = SolverConfig {
            eps,
            lambda,
            dt,
            horizon,
            grid,
            channels,
            spec,
            seed,
            sample_times: uniform_samples(horizon, samples),
            dispersion,
            entropy_k,
        };
        solver.validate()?;
        Ok(Self { solver, initial, ensemble, write_states, out_dir, source })
    }

    pub fn initial_field(&self) -> Res<Field> {
        match &self.initial {
            InitialData::Profile(p) => Ok(p.sample(&self.solver.grid)?),
            InitialData::File(f) => {
                let path = if f.is_relative() {
                    self.source.parent().unwrap_or(Path::new(".")).join(f)
                } else {
                    f.clone()
                };
                let bytes = std::fs::read(&path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                let u = Field::from_cfld_bytes(&bytes).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
                if *u.grid() != self.solver.grid {
                    return Err(ConfigError(format!("{}: field grid does not match [grid]", path.display())));
                }
                Ok(u)
            }
        }
    }
}

fn parse_channels(raw: &mut RawConfig) -> Res<NoiseChannelSet> {
    let (text, line) = raw
        .take("channels", "g")
        .ok_or_else(|| ConfigError("missing required key 'g' in [channels]".into()))?;
    let list = text
        .split(',')
        .map(|s| s.parse::<SaturatedNonlinearity>())
        .collect::<slogse::Result<Vec<_>>>();
    with_line(list.and_then(NoiseChannelSet::new), "g", line)
}

fn parse_noise(raw: &mut RawConfig) -> Res<(LevyMeasureSpec, u64, usize)> {
    let kind: String = raw.required("noise", "kind")?;
    let seed = raw.optional("noise", "seed", 0u64)?;
    let ensemble = raw.optional("noise", "ensemble", 8usize)?;
    if ensemble == 0 {
        return Err(ConfigError("ensemble must be at least 1".into()));
    }
    let spec = match kind.as_str() {
        "none" => LevyMeasureSpec::none(raw.required("noise", "m")?),
        "atomic" => {
            let (text, line) = raw
                .take("noise", "atoms")
                .ok_or_else(|| ConfigError("missing required key 'atoms' in [noise]".into()))?;
            let atoms = parse_atoms(&text, line)?;
            let delta_cut = raw.optional("noise", "delta_cut", 0.0)?;
            with_line(LevyMeasureSpec::atomic(atoms, delta_cut), "atoms", line)?
        }
        "radial" => {
            let m = raw.required("noise", "m")?;
            let alpha = raw.required("noise", "alpha")?;
            let c = raw.required("noise", "c")?;
            let delta_cut = raw.required("noise", "delta_cut")?;
            LevyMeasureSpec::radial_power(m, alpha, c, delta_cut)?
        }
        other => return Err(ConfigError(format!("unknown noise kind '{other}' (none, atomic, radial)"))),
    };
    Ok((spec, seed, ensemble))
}

/// `z1,z2 @ w; z1,z2 @ w`
fn parse_atoms(text: &str, line: usize) -> Res<Vec<Atom>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (z, w) = item
                .split_once('@')
                .ok_or_else(|| ConfigError(format!("line {line}: atom '{}' must look like 'z @ weight'", item.trim())))?;
            let z = z
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError(format!("line {line}: bad atom location '{}'", z.trim())))?;
            let weight =
                w.trim().parse().map_err(|_| ConfigError(format!("line {line}: bad atom weight '{}'", w.trim())))?;
            Ok(Atom { z, weight })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[grid]\nd = 1\nn = 64\nell = 20\n[solver]\neps = 0.01\nlambda = 1\ndt = 0.01\nT = 0.1\nsamples = 2\n\
                        [noise]\nkind = atomic\natoms = 0.5 @ 2; -0.25 @ 1\n[channels]\ng = photorefractive:1\n\
                        [initial]\nprofile = gaussian\namplitude = 1\nwidth = 1\n";

    fn load(text: &str) -> Res<RunConfig> {
        RunConfig::from_raw(RawConfig::parse(text, Path::new("test.cfg"))?)
    }

    #[test]
    fn parses_base_config() {
        let c = load(BASE).unwrap();
        assert_eq!(c.solver.grid.n(), 64);
        assert_eq!(c.solver.sample_times.len(), 3);
        assert_eq!(c.ensemble, 8);
    }

    #[test]
    fn errors_name_the_key_or_line() {
        let e = load(&BASE.replace("eps = 0.01\n", "")).unwrap_err();
        assert!(e.0.contains("'eps'"), "{e}");
        let e = load(&BASE.replace("eps = 0.01", "eps = 1.5")).unwrap_err();
        assert!(e.0.contains("line 6"), "{e}");
        let e = load(&format!("{BASE}bogus = 3\n")).unwrap_err();
        assert!(e.0.contains("unknown key 'bogus'"), "{e}");
        let e = load(&format!("{BASE}[extra]\n")).unwrap_err();
        assert!(e.0.contains("unknown section"), "{e}");
        let e = load(&BASE.replace("lambda = 1", "lambda = one")).unwrap_err();
        assert!(e.0.contains("'lambda'"), "{e}");
    }

    #[test]
    fn atoms_parse() {
        let a = parse_atoms("0.5, 0.1 @ 2; -0.3,0 @ 1.5", 1).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].z, vec![0.5, 0.1]);
        assert_eq!(a[1].weight, 1.5);
        assert!(parse_atoms("0.5", 1).is_err());
    }
}
