//! Truncated Poisson random measures on `[0, T] × B` and their realized paths.
//!
//! Only jumps with `|z| > delta_cut` are simulated. The drift they induce once
//! the compensated integral is rewritten against the finite truncated measure
//! is carried by `mu1 = ∫ z ν(dz)`; the discarded part is reported through
//! [`LevyMeasureSpec::truncation_bound`].
//!
//! Paths are drawn from ChaCha20 seeded with the 64-bit seed, so a given
//! `(spec, T, seed)` produces the same path on every platform.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::marcus::{euclid, Mark};

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub z: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LevyKind {
    /// `ν = Σ w_i δ_{z_i}`.
    Atomic { atoms: Vec<Atom> },
    /// Isotropic `ν(dz) = c |z|^{-m-α} dz`, i.e. radial density `c r^{-1-α}` per unit of solid angle.
    RadialPower { m: usize, alpha: f64, c: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevyMeasureSpec {
    pub kind: LevyKind,
    pub delta_cut: f64,
}

/// `(mu1, mu2, total_mass)` of the simulated (truncated) measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mu1: Vec<f64>,
    pub mu2: f64,
    pub total_mass: f64,
}

/// Surface area of the unit sphere in `ℝ^m` (2 for m = 1).
fn sphere_area(m: usize) -> f64 {
    // |S^{m-1}| = 2 π^{m/2} / Γ(m/2); Γ at half-integers by recursion
    let half = m as f64 / 2.0;
    let mut gamma = if m.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if m.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x < half {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(half) / gamma
}

impl LevyMeasureSpec {
    pub fn atomic(atoms: Vec<Atom>, delta_cut: f64) -> Result<Self> {
        let spec = Self { kind: LevyKind::Atomic { atoms }, delta_cut };
        spec.validate()?;
        Ok(spec)
    }

    pub fn radial_power(m: usize, alpha: f64, c: f64, delta_cut: f64) -> Result<Self> {
        let spec = Self { kind: LevyKind::RadialPower { m, alpha, c }, delta_cut };
        spec.validate()?;
        Ok(spec)
    }

    /// The zero measure on `ℝ^m`.
    pub fn none(m: usize) -> Self {
        Self { kind: LevyKind::Atomic { atoms: vec![Atom { z: vec![0.0; m], weight: 0.0 }] }, delta_cut: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta_cut) {
            return Err(invalid(format!("delta_cut {} outside [0, 1)", self.delta_cut)));
        }
        match &self.kind {
            LevyKind::Atomic { atoms } => {
                let m = atoms.first().map(|a| a.z.len()).ok_or_else(|| invalid("atomic measure needs atoms"))?;
                for a in atoms {
                    if a.z.len() != m || m == 0 {
                        return Err(invalid("atoms must share one nonzero dimension"));
                    }
                    if !(a.weight >= 0.0 && a.weight.is_finite()) {
                        return Err(invalid(format!("atom weight {} must be finite and >= 0", a.weight)));
                    }
                    let r = euclid(&a.z);
                    if a.weight > 0.0 && !(r > 0.0 && r <= 1.0) {
                        return Err(invalid(format!("atom at |z| = {r} outside (0, 1]")));
                    }
                }
            }
            LevyKind::RadialPower { m, alpha, c } => {
                if *m == 0 {
                    return Err(invalid("mark dimension must be >= 1"));
                }
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(invalid(format!("alpha {alpha} must lie in (0, 2)")));
                }
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(invalid(format!("intensity {c} must be positive")));
                }
                if self.delta_cut <= 0.0 {
                    return Err(invalid("radial_power needs delta_cut > 0 to have finite activity"));
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        match &self.kind {
            LevyKind::Atomic { atoms } => atoms[0].z.len(),
            LevyKind::RadialPower { m, .. } => *m,
        }
    }

    fn simulated_atoms(&self) -> impl Iterator<Item = &Atom> {
        let cut = self.delta_cut;
        let atoms: &[Atom] = match &self.kind {
            LevyKind::Atomic { atoms } => atoms,
            LevyKind::RadialPower { .. } => &[],
        };
        atoms.iter().filter(move |a| a.weight > 0.0 && euclid(&a.z) > cut)
    }

    /// `∫_{|z| ≤ delta_cut} |z|² ν(dz)`: size of the discarded small-jump part.
    pub fn truncation_bound(&self) -> f64 {
        match &self.kind {
            LevyKind::Atomic { atoms } => atoms
                .iter()
                .filter(|a| euclid(&a.z) <= self.delta_cut)
                .map(|a| a.weight * euclid(&a.z).powi(2))
                .sum(),
            LevyKind::RadialPower { m, alpha, c } => {
                sphere_area(*m) * c * self.delta_cut.powf(2.0 - alpha) / (2.0 - alpha)
            }
        }
    }
}

pub fn moments(spec: &LevyMeasureSpec) -> Result<Moments> {
    spec.validate()?;
    let m = spec.m();
    Ok(match &spec.kind {
        LevyKind::Atomic { .. } => {
            let mut mu1 = vec![0.0; m];
            let (mut mu2, mut mass) = (0.0, 0.0);
            for a in spec.simulated_atoms() {
                for (acc, zj) in mu1.iter_mut().zip(&a.z) {
                    *acc += a.weight * zj;
                }
                mu2 += a.weight * euclid(&a.z).powi(2);
                mass += a.weight;
            }
            Moments { mu1, mu2, total_mass: mass }
        }
        LevyKind::RadialPower { m, alpha, c } => {
            let area = sphere_area(*m) * c;
            let d = spec.delta_cut;
            Moments {
                mu1: vec![0.0; *m],
                mu2: area * (1.0 - d.powf(2.0 - alpha)) / (2.0 - alpha),
                total_mass: area * (d.powf(-alpha) - 1.0) / alpha,
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpEvent {
    pub tau: f64,
    pub z: Mark,
}

/// One realization of the truncated Poisson random measure on `(0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub horizon: f64,
    pub events: Vec<JumpEvent>,
    pub mu1: Vec<f64>,
    pub mu2: f64,
    pub seed: u64,
}

impl NoisePath {
    /// A path with no jumps and no drift.
    pub fn empty(m: usize, horizon: f64) -> Self {
        Self { horizon, events: Vec::new(), mu1: vec![0.0; m], mu2: 0.0, seed: 0 }
    }

    pub fn m(&self) -> usize {
        self.mu1.len()
    }

    /// `NPATH1` text serialization.
    pub fn to_text(&self) -> String {
        let csv = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "NPATH1 T={:.16e} seed={} m={} mu1={} mu2={:.16e}\n",
            self.horizon,
            self.seed,
            self.m(),
            csv(&self.mu1),
            self.mu2
        );
        for e in &self.events {
            let _ = writeln!(s, "{:.16e},{}", e.tau, csv(e.z.as_slice()));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty NPATH1 file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("NPATH1") {
            return Err(bad("missing NPATH1 magic".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let p = parts.next().ok_or_else(|| bad(format!("header lacks {key}")))?;
            p.strip_prefix(&format!("{key}="))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {key}=..., found '{p}'")))
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
        let horizon = num(&field("T")?)?;
        let seed = field("seed")?.parse::<u64>().map_err(|_| bad("bad seed".into()))?;
        let m = field("m")?.parse::<usize>().map_err(|_| bad("bad m".into()))?;
        let mu1 = field("mu1")?.split(',').map(num).collect::<Result<Vec<_>>>()?;
        let mu2 = num(&field("mu2")?)?;
        if mu1.len() != m {
            return Err(bad(format!("mu1 has {} entries, m = {m}", mu1.len())));
        }
        let mut events = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals = line.split(',').map(|s| num(s.trim())).collect::<Result<Vec<_>>>()?;
            if vals.len() != m + 1 {
                return Err(bad(format!("event line {} has {} fields, expected {}", i + 2, vals.len(), m + 1)));
            }
            let z = Mark::new(vals[1..].to_vec()).map_err(|e| bad(e.to_string()))?;
            events.push(JumpEvent { tau: vals[0], z });
        }
        if events.windows(2).any(|w| w[0].tau >= w[1].tau) {
            return Err(bad("event times must be strictly increasing".into()));
        }
        Ok(Self { horizon, events, mu1, mu2, seed })
    }
}

fn unit_direction<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    if m == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let r = euclid(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Uniform on `(0, 1]`.
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn sample_path(spec: &LevyMeasureSpec, horizon: f64, seed: u64) -> Result<NoisePath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let mom = moments(spec)?;
    let mut path = NoisePath { horizon, events: Vec::new(), mu1: mom.mu1, mu2: mom.mu2, seed };
    if mom.total_mass == 0.0 {
        return Ok(path);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let count = Poisson::new(mom.total_mass * horizon)
        .map_err(|e| invalid(format!("poisson rate: {e}")))?
        .sample(&mut rng) as usize;
    let mut times: Vec<f64> = (0..count).map(|_| horizon * open_unit(&mut rng)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    while times.len() < count {
        // ties have probability zero; redraw if one ever occurs
        times.push(horizon * open_unit(&mut rng));
        times.sort_by(f64::total_cmp);
        times.dedup();
    }

    let atoms: Vec<&Atom> = spec.simulated_atoms().collect();
    let cumulative: Vec<f64> = atoms
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.weight;
            Some(*acc)
        })
        .collect();
    for tau in times {
        let z = match &spec.kind {
            LevyKind::Atomic { .. } => {
                let target = rng.random::<f64>() * mom.total_mass;
                let i = cumulative.partition_point(|&c| c <= target).min(atoms.len() - 1);
                atoms[i].z.clone()
            }
            LevyKind::RadialPower { m, alpha, .. } => {
                // inverse CDF of r^{-1-α} on (δ, 1]
                let lo = spec.delta_cut.powf(-alpha);
                let r = (lo - open_unit(&mut rng) * (lo - 1.0)).powf(-1.0 / alpha).clamp(f64::MIN_POSITIVE, 1.0);
                let r = if r <= spec.delta_cut { spec.delta_cut.next_up() } else { r };
                unit_direction(*m, &mut rng).into_iter().map(|x| x * r).collect()
            }
        };
        let z = Mark::new(z)?;
        path.events.push(JumpEvent { tau, z });
    }
    Ok(path)
}

/// Monte Carlo estimates over a path ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalMoments {
    pub mean_count: f64,
    pub count_stderr: f64,
    pub mean_sq_sum: f64,
    pub sq_sum_stderr: f64,
}

pub fn empirical_moments(paths: &[NoisePath]) -> Result<EmpiricalMoments> {
    if paths.len() < 100 {
        return Err(invalid(format!("need at least 100 paths, got {}", paths.len())));
    }
    let n = paths.len() as f64;
    let counts: Vec<f64> = paths.iter().map(|p| p.events.len() as f64).collect();
    let sums: Vec<f64> = paths
        .iter()
        .map(|p| p.events.iter().map(|e| e.z.norm().powi(2)).sum())
        .collect();
    let stats = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (mean_count, count_stderr) = stats(&counts);
    let (mean_sq_sum, sq_sum_stderr) = stats(&sums);
    Ok(EmpiricalMoments { mean_count, count_stderr, mean_sq_sum, sq_sum_stderr })
}
