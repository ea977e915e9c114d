use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use slogse::analysis::{cauchy_sweep, inequality_scan, LemmaId};
use slogse::grid::{h1_norm, l2_norm};
use slogse::noise::{empirical_moments, moments, sample_path, NoisePath};
use slogse::nonlinearity::{energy, entropy_f, luxembourg_norm, w_norm};
use slogse::solver::run;
use slogse::Field;

use crate::config::{ConfigError, RunConfig};

pub enum CliError {
    Usage(String),
    NonFinite(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::NonFinite(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::NonFinite(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<slogse::Error> for CliError {
    fn from(e: slogse::Error) -> Self {
        match e {
            slogse::Error::NonFinite { .. } => CliError::NonFinite(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type Res<T> = Result<T, CliError>;

/// Honors `SLOGSE_THREADS` by sizing the global rayon pool.
pub fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("SLOGSE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("SLOGSE_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("SLOGSE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

struct RunManifest<'a> {
    command: &'a str,
    config: Option<&'a Path>,
    out: &'a Path,
    seed: u64,
    extra: Vec<(&'static str, String)>,
}

impl RunManifest<'_> {
    /// Written before any heavy work so a crashed run still leaves a record.
    fn write(&self) -> Res<()> {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut s = String::new();
        s.push_str(&format!("command = {}\n", self.command));
        if let Some(c) = self.config {
            s.push_str(&format!("config = {}\n", c.display()));
        }
        s.push_str(&format!("output = {}\n", self.out.display()));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("version = slogse {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("started_unix = {started}\n"));
        for (k, v) in &self.extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(self.out.join("manifest.txt"), s)?;
        Ok(())
    }

    fn finish(&self) -> Res<()> {
        let done = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut f = fs::OpenOptions::new().append(true).open(self.out.join("manifest.txt"))?;
        writeln!(f, "finished_unix = {done}")?;
        Ok(())
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Res<PathBuf> {
    let dir = flag
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set dir in [output]".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Res<u8> {
    let cfg = RunConfig::load(config)?;
    let out = output_dir(out, &cfg)?;
    let seed = seed.unwrap_or(cfg.solver.seed);
    let manifest = RunManifest { command: "simulate", config: Some(config), out: &out, seed, extra: Vec::new() };
    manifest.write()?;

    let u0 = cfg.initial_field()?;
    let path = sample_path(&cfg.solver.spec, cfg.solver.horizon, seed)?;
    fs::write(out.join("path.npath"), path.to_text())?;
    let traj = run(&cfg.solver, &path, &u0)?;
    fs::write(out.join("diagnostics.csv"), traj.diagnostics.to_csv())?;
    if cfg.write_states {
        for (i, u) in traj.states.iter().enumerate() {
            u.write_cfld(fs::File::create(out.join(format!("state_t{i}.cfld")))?)?;
        }
    }
    manifest.finish()?;
    if !quiet {
        eprintln!(
            "simulate: {} jumps, {} samples, max relative mass drift {:.3e}",
            path.events.len(),
            traj.times.len(),
            traj.diagnostics.max_mass_drift()
        );
    }
    Ok(0)
}

pub fn converge(
    config: &Path,
    eps_list: &[f64],
    radius: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
) -> Res<u8> {
    let cfg = RunConfig::load(config)?;
    if eps_list.len() < 4 {
        return Err(CliError::Usage(format!("--eps-list needs at least 4 values, got {}", eps_list.len())));
    }
    let out = output_dir(out, &cfg)?;
    let seed = seed.unwrap_or(cfg.solver.seed);
    let radius = radius.unwrap_or(cfg.solver.grid.ell() / 8.0);
    let list = eps_list.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let manifest = RunManifest {
        command: "converge",
        config: Some(config),
        out: &out,
        seed,
        extra: vec![("eps_list", list), ("radius", radius.to_string()), ("paths", cfg.ensemble.to_string())],
    };
    manifest.write()?;

    let u0 = cfg.initial_field()?;
    let paths: Vec<NoisePath> = (0..cfg.ensemble as u64)
        .map(|i| sample_path(&cfg.solver.spec, cfg.solver.horizon, seed.wrapping_add(i)))
        .collect::<slogse::Result<_>>()?;
    let report = cauchy_sweep(&cfg.solver, eps_list, radius, &paths, &u0)?;
    fs::write(out.join("sweep.csv"), report.to_csv())?;
    manifest.finish()?;
    if !quiet {
        eprintln!(
            "converge: fitted order {:.3}, monotone within 10%: {}",
            report.fit_order,
            report.is_monotone_within(0.1)
        );
    }
    Ok(0)
}

pub fn props(lemma: &str, samples: usize, seed: u64, out: Option<PathBuf>, quiet: bool) -> Res<u8> {
    let lemma: LemmaId = lemma.parse()?;
    let manifest_out = match out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            let m = RunManifest {
                command: "props",
                config: None,
                out: &dir,
                seed,
                extra: vec![("lemma", lemma.to_string()), ("samples", samples.to_string())],
            };
            m.write()?;
            Some(dir)
        }
        None => None,
    };
    let report = inequality_scan(lemma, samples, seed)?;
    let csv = report.to_csv();
    if let Some(dir) = &manifest_out {
        fs::write(dir.join(format!("scan_{lemma}.csv")), &csv)?;
    }
    if !quiet {
        print!("{csv}");
    }
    if report.exact() && report.violations > 0 {
        eprintln!("props: {} violations of '{lemma}'", report.violations);
        return Ok(1);
    }
    Ok(0)
}

pub fn norms(file: &Path, lambda: f64) -> Res<u8> {
    let bytes = fs::read(file).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", file.display())))?;
    let u = Field::from_cfld_bytes(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    println!("l2 = {}", l2_norm(&u));
    println!("h1 = {}", h1_norm(&u));
    println!("v = {}", luxembourg_norm(&u));
    println!("w = {}", w_norm(&u));
    println!("entropy = {}", entropy_f(&u));
    println!("energy = {}", energy(&u, lambda));
    Ok(0)
}

/// Paths in the moment summary.
const MOMENT_ENSEMBLE: u64 = 1000;

pub fn noise(config: &Path, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Res<u8> {
    let cfg = RunConfig::load(config)?;
    let out = output_dir(out, &cfg)?;
    let seed = seed.unwrap_or(cfg.solver.seed);
    let manifest = RunManifest {
        command: "noise",
        config: Some(config),
        out: &out,
        seed,
        extra: vec![("moment_ensemble", MOMENT_ENSEMBLE.to_string())],
    };
    manifest.write()?;

    let (spec, horizon) = (&cfg.solver.spec, cfg.solver.horizon);
    let path = sample_path(spec, horizon, seed)?;
    fs::write(out.join("path.npath"), path.to_text())?;

    let ensemble: Vec<NoisePath> = (0..MOMENT_ENSEMBLE)
        .map(|i| sample_path(spec, horizon, seed.wrapping_add(i)))
        .collect::<slogse::Result<_>>()?;
    let mom = moments(spec)?;
    let emp = empirical_moments(&ensemble)?;
    let rows = [
        ("event_count", mom.total_mass * horizon, emp.mean_count, emp.count_stderr),
        ("sum_sq_marks", mom.mu2 * horizon, emp.mean_sq_sum, emp.sq_sum_stderr),
    ];
    let mut s = String::from("quantity,expected,empirical,stderr,within_3sigma\n");
    for (name, expected, mean, se) in rows {
        let ok = (mean - expected).abs() <= 3.0 * se;
        s.push_str(&format!("{name},{expected:.16e},{mean:.16e},{se:.16e},{}\n", u8::from(ok)));
    }
    fs::write(out.join("moments.csv"), &s)?;
    manifest.finish()?;
    if !quiet {
        eprintln!("noise: {} events on (0, {horizon}]", path.events.len());
        eprint!("{s}");
    }
    Ok(0)
}
