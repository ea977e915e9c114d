//! Convergence harness and inequality scanner.
//!
//! Sweeps run every ε against the same noise paths and initial datum, so the
//! only thing that changes across a sweep is the regularization. Scans draw
//! their samples in fixed-size shards, each with its own ChaCha stream, which
//! makes a report a function of `(lemma, samples, seed)` alone regardless of
//! how many worker threads execute it.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{l2_norm, localized_l2, Field};
use crate::marcus::{compensator_factor, jump_angle};
use crate::noise::NoisePath;
use crate::nonlinearity::{
    k_gtilde_estimate, regularized_log, xlogx, EpsilonParam, NoiseChannelSet, SaturatedNonlinearity,
};
use crate::solver::{run, run_strong_oracle, SolverConfig, Trajectory};

/// Least-squares slope of `log y` against `log x` and the RMS residual of the fit.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    (slope, rms)
}

// ---------------------------------------------------------------------------
// ε-sweeps

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub eps_list: Vec<f64>,
    /// `D(ε_i, ε_{i+1})`, averaged over the path ensemble.
    pub distances: Vec<f64>,
    pub radius: f64,
    pub paths: usize,
    pub fit_order: f64,
    pub fit_residual: f64,
    /// `max_t ‖u_ε(t)‖_{H¹}` per ε (first path).
    pub max_h1: Vec<f64>,
    /// `sup_t |∫F(|u_ε(t)|)|` per ε (first path).
    pub max_entropy: Vec<f64>,
}

impl SweepReport {
    /// Whether `D` never grows by more than the relative band `tol` from one pair to the next.
    pub fn is_monotone_within(&self, tol: f64) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + tol))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# radius={:.16e} paths={} fit_order={:.16e} fit_residual={:.16e}\n",
            self.radius, self.paths, self.fit_order, self.fit_residual
        );
        s.push_str("pair,eps_a,eps_b,abs_diff,D,monotone\n");
        for (i, d) in self.distances.iter().enumerate() {
            let (a, b) = (self.eps_list[i], self.eps_list[i + 1]);
            let mono = i == 0 || *d <= self.distances[i - 1] * 1.1;
            let _ = writeln!(s, "{i},{a:.16e},{b:.16e},{:.16e},{d:.16e},{}", (a - b).abs(), u8::from(mono));
        }
        s
    }
}

fn with_eps(base: &SolverConfig, eps: f64) -> Result<SolverConfig> {
    let mut cfg = base.clone();
    cfg.eps = EpsilonParam::new(eps)?;
    Ok(cfg)
}

/// `max_t ‖ζ_R (u_a(t) − u_b(t))‖_{L²}` over the common sample times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, radius: f64) -> Result<f64> {
    if a.times != b.times {
        return Err(invalid("trajectories are sampled at different times"));
    }
    let mut worst = 0.0f64;
    for (ua, ub) in a.states.iter().zip(&b.states) {
        worst = worst.max(localized_l2(&ua.sub(ub)?, radius)?);
    }
    Ok(worst)
}

/// `D(ε, μ)` along a single shared path.
pub fn pair_distance(base: &SolverConfig, eps: f64, mu: f64, radius: f64, path: &NoisePath, u0: &Field) -> Result<f64> {
    let a = run(&with_eps(base, eps)?, path, u0)?;
    let b = run(&with_eps(base, mu)?, path, u0)?;
    trajectory_distance(&a, &b, radius)
}

/// ε-Cauchy study: every ε in `eps_list` runs against every path in `paths`
/// with the same initial datum; consecutive-pair distances are averaged over paths.
pub fn cauchy_sweep(
    base: &SolverConfig,
    eps_list: &[f64],
    radius: f64,
    paths: &[NoisePath],
    u0: &Field,
) -> Result<SweepReport> {
    if eps_list.len() < 4 {
        return Err(invalid(format!("an ε-sweep needs at least 4 values, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_list must be strictly decreasing"));
    }
    if paths.is_empty() {
        return Err(invalid("at least one noise path is required"));
    }
    if paths.iter().any(|p| p.m() != paths[0].m() || p.mu1 != paths[0].mu1) {
        return Err(invalid("all sweep paths must come from the same Lévy measure"));
    }
    if *u0.grid() != base.grid {
        return Err(Error::GridMismatch);
    }
    localized_l2(u0, radius)?;

    let jobs: Vec<(usize, usize)> = (0..paths.len()).flat_map(|p| (0..eps_list.len()).map(move |e| (p, e))).collect();
    let trajectories: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(p, e)| run(&with_eps(base, eps_list[e])?, &paths[p], u0))
        .collect::<Result<_>>()?;
    let traj = |p: usize, e: usize| &trajectories[p * eps_list.len() + e];

    let mut distances = vec![0.0; eps_list.len() - 1];
    for p in 0..paths.len() {
        for (i, d) in distances.iter_mut().enumerate() {
            *d += trajectory_distance(traj(p, i), traj(p, i + 1), radius)? / paths.len() as f64;
        }
    }
    let gaps: Vec<f64> = eps_list.windows(2).map(|w| w[0] - w[1]).collect();
    let (fit_order, fit_residual) = loglog_fit(&gaps, &distances);
    let max_h1 = (0..eps_list.len()).map(|e| traj(0, e).diagnostics.h1.iter().copied().fold(0.0, f64::max)).collect();
    let max_entropy = (0..eps_list.len())
        .map(|e| traj(0, e).diagnostics.entropy.iter().map(|v| v.abs()).fold(0.0, f64::max))
        .collect();
    Ok(SweepReport {
        eps_list: eps_list.to_vec(),
        distances,
        radius,
        paths: paths.len(),
        fit_order,
        fit_residual,
        max_h1,
        max_entropy,
    })
}

/// `(max − min) / min` of a positive series.
pub fn relative_spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / lo
}

// ---------------------------------------------------------------------------
// Nonlinearity convergence

#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearityReport {
    pub eps_list: Vec<f64>,
    /// `‖u L_ε(|u|) − u log|u|‖_{L²}` per ε.
    pub errors: Vec<f64>,
    pub rate: f64,
    pub rate_residual: f64,
    pub delta: f64,
    pub envelope_const: f64,
    /// Grid points where `|u L_ε − u log|u|| > ε + 2 C(δ) ε^δ |u|^{1+δ}`, summed over ε.
    pub envelope_violations: usize,
}

impl NonlinearityReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# rate={:.16e} rate_residual={:.16e} delta={} envelope_const={:.16e} envelope_violations={}\n",
            self.rate, self.rate_residual, self.delta, self.envelope_const, self.envelope_violations
        );
        s.push_str("eps,error\n");
        for (e, v) in self.eps_list.iter().zip(&self.errors) {
            let _ = writeln!(s, "{e:.16e},{v:.16e}");
        }
        s
    }
}

#[inline]
fn reg_minus_log(r: f64, eps: f64) -> f64 {
    // r L_ε(r) − r log r, 0 at r = 0
    r * regularized_log(r, eps) - xlogx(r)
}

/// Calibrates `C(δ)` in `|r L_ε(r) − r log r| ≤ ε + C(δ) ε^δ r^{1+δ}` as the
/// largest observed ratio over log-uniform `r ∈ [1e-8, 1e3]`, `ε ∈ (1e-6, 1)`.
pub fn calibrate_envelope(delta: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let r = log_uniform(&mut rng, 1e-8, 1e3);
        let eps = log_uniform(&mut rng, 1e-6, 1.0);
        let excess = reg_minus_log(r, eps).abs() - eps;
        worst = worst.max(excess / (eps.powf(delta) * r.powf(1.0 + delta)));
    }
    worst
}

pub fn nonlinearity_convergence(u: &Field, eps_list: &[f64], delta: f64, envelope_const: f64) -> Result<NonlinearityReport> {
    if eps_list.is_empty() {
        return Err(invalid("eps_list is empty"));
    }
    let mut errors = Vec::with_capacity(eps_list.len());
    let mut violations = 0;
    for &eps in eps_list {
        EpsilonParam::new(eps)?;
        let mut s = 0.0;
        for v in u.values() {
            let r = v.norm();
            let diff = reg_minus_log(r, eps).abs();
            s += diff * diff;
            if diff > eps + 2.0 * envelope_const * eps.powf(delta) * r.powf(1.0 + delta) {
                violations += 1;
            }
        }
        errors.push((s * u.grid().cell_volume()).sqrt());
    }
    let (rate, rate_residual) = loglog_fit(eps_list, &errors);
    Ok(NonlinearityReport {
        eps_list: eps_list.to_vec(),
        errors,
        rate,
        rate_residual,
        delta,
        envelope_const,
        envelope_violations: violations,
    })
}

// ---------------------------------------------------------------------------
// Inequality scanner

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LemmaId {
    /// `|L_ε(u)| ≤ |log ε|` and `||u| L_ε(u)| ≤ ||u| log|u||`
    BoundedLog,
    /// `|u₁L_ε(u₁) − u₂L_ε(u₂)| ≤ (1 + log(1/ε))|u₁ − u₂|`
    Lipschitz,
    /// `|Im[(u log|u| − v log|v|)(ū − v̄)]| ≤ |u − v|²`
    QuasiMonotone,
    /// Regularized quasi-monotonicity with `ε = μ`.
    QuasiMonotoneDiagonal,
    /// Regularized quasi-monotonicity across `ε ≠ μ` (calibrated constants).
    QuasiMonotoneCross,
    /// Convergence envelope of `u L_ε(u)` towards `u log|u|` (calibrated constants).
    Envelope,
    /// `|Φ(s,z,y₁) − Φ(s,z,y₂)| ≤ e^{3 K √m |z|} |y₁ − y₂|`
    MarcusLipschitz,
    /// `|𝒢(s,z,y)| ≤ C'|z||y|` (calibrated)
    MarcusIncrement,
    /// `|ℋ(z,y)| ≤ C''|z|²|y|` (calibrated)
    MarcusCompensator,
    /// `|Φ(z,y)| = |y|`
    MarcusModulus,
}

impl LemmaId {
    pub const ALL: [LemmaId; 10] = [
        Self::BoundedLog,
        Self::Lipschitz,
        Self::QuasiMonotone,
        Self::QuasiMonotoneDiagonal,
        Self::QuasiMonotoneCross,
        Self::Envelope,
        Self::MarcusLipschitz,
        Self::MarcusIncrement,
        Self::MarcusCompensator,
        Self::MarcusModulus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BoundedLog => "a",
            Self::Lipschitz => "b",
            Self::QuasiMonotone => "qm",
            Self::QuasiMonotoneDiagonal => "c-diag",
            Self::QuasiMonotoneCross => "c",
            Self::Envelope => "d",
            Self::MarcusLipschitz => "phi-lip",
            Self::MarcusIncrement => "g",
            Self::MarcusCompensator => "h",
            Self::MarcusModulus => "phi-mod",
        }
    }

    /// Inequalities whose constants are explicit; any violation is a failure.
    pub fn is_exact(self) -> bool {
        !self.is_calibrated()
    }

    pub fn is_calibrated(self) -> bool {
        matches!(self, Self::QuasiMonotoneCross | Self::Envelope | Self::MarcusIncrement | Self::MarcusCompensator)
    }

    fn param_names(self) -> &'static [&'static str] {
        match self {
            Self::BoundedLog => &["r", "eps"],
            Self::Lipschitz | Self::QuasiMonotoneDiagonal => &["re1", "im1", "re2", "im2", "eps"],
            Self::QuasiMonotone => &["re1", "im1", "re2", "im2"],
            Self::QuasiMonotoneCross => &["re1", "im1", "re2", "im2", "eps", "mu", "delta"],
            Self::Envelope => &["re1", "im1", "re2", "im2", "eps", "delta", "alpha"],
            Self::MarcusLipschitz => &["s", "z1", "z2", "re1", "im1", "re2", "im2"],
            Self::MarcusIncrement => &["s", "z1", "z2", "re", "im"],
            Self::MarcusCompensator | Self::MarcusModulus => &["z1", "z2", "re", "im"],
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| invalid(format!("unknown lemma id '{s}' (known: a, b, qm, c-diag, c, d, phi-lip, g, h, phi-mod)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanReport {
    pub lemma: LemmaId,
    /// Samples checked against the bound (the held-out half for calibrated lemmas).
    pub samples: usize,
    pub calibration_samples: usize,
    pub violations: usize,
    /// Largest `(lhs − rhs) / scale` seen; negative means every sample held with room to spare.
    pub worst_slack: f64,
    /// Named parameters of the sample attaining `worst_slack`.
    pub witness: Vec<(String, f64)>,
    pub constants: Vec<(String, f64)>,
}

impl ScanReport {
    pub fn exact(&self) -> bool {
        self.lemma.is_exact()
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        let _ = writeln!(s, "lemma,{}", self.lemma);
        let _ = writeln!(s, "exact,{}", u8::from(self.exact()));
        let _ = writeln!(s, "samples,{}", self.samples);
        let _ = writeln!(s, "calibration_samples,{}", self.calibration_samples);
        let _ = writeln!(s, "violations,{}", self.violations);
        let _ = writeln!(s, "worst_slack,{:.16e}", self.worst_slack);
        for (k, v) in &self.constants {
            let _ = writeln!(s, "const:{k},{v:.16e}");
        }
        for (k, v) in &self.witness {
            let _ = writeln!(s, "witness:{k},{v:.16e}");
        }
        s
    }
}

pub const SCAN_SLACK: f64 = 1e-12;
const SHARD: usize = 1 << 14;
const EXPONENTS: [f64; 3] = [0.25, 0.5, 0.75];

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (a + (b - a) * rng.random::<f64>()).exp().clamp(lo, hi)
}

fn random_complex<R: Rng>(rng: &mut R) -> Complex64 {
    let r = log_uniform(rng, 1e-8, 1e3);
    Complex64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
}

fn random_marcus_value<R: Rng>(rng: &mut R) -> Complex64 {
    let r = log_uniform(rng, 1e-6, 1e3);
    Complex64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
}

/// Uniform in the punctured unit ball of `ℝ^m`.
fn random_ball<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..m).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let r = z.iter().map(|v| v * v).sum::<f64>();
        if r > 0.0 && r <= 1.0 {
            return z;
        }
    }
}

/// One instance of an inequality `lhs ≤ fixed + C · basis`.
#[derive(Clone, Copy, Default)]
struct Check {
    lhs: f64,
    fixed: f64,
    basis: f64,
    /// Magnitude used to normalize roundoff.
    scale: f64,
    /// Which calibrated constant applies.
    key: usize,
    params: [f64; 8],
}

fn u_times_l(u: Complex64, eps: f64) -> Complex64 {
    u * regularized_log(u.norm(), eps)
}

fn u_times_log(u: Complex64) -> Complex64 {
    let r = u.norm();
    if r == 0.0 {
        Complex64::default()
    } else {
        u * r.ln()
    }
}

fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Environment shared by the Marcus-map lemmas.
struct MarcusEnv {
    channels: NoiseChannelSet,
    lipschitz_rate: f64,
}

fn draw<R: Rng>(lemma: LemmaId, rng: &mut R, env: &MarcusEnv, out: &mut Vec<Check>) {
    let mut params = [0.0; 8];
    let mut fill = |vals: &[f64]| {
        params[..vals.len()].copy_from_slice(vals);
        params
    };
    match lemma {
        LemmaId::BoundedLog => {
            let r = log_uniform(rng, 1e-8, 1e3);
            let eps = log_uniform(rng, 1e-6, 1.0 - 1e-12);
            let l = regularized_log(r, eps);
            let p = fill(&[r, eps]);
            let le = eps.ln().abs();
            out.push(Check { lhs: l.abs(), fixed: le, scale: le, params: p, ..Default::default() });
            let rl = xlogx(r).abs();
            out.push(Check { lhs: (r * l).abs(), fixed: rl, scale: rl.max((r * l).abs()), params: p, ..Default::default() });
        }
        LemmaId::Lipschitz => {
            let (u1, u2) = (random_complex(rng), random_complex(rng));
            let eps = log_uniform(rng, 1e-6, 1.0 - 1e-12);
            let (a, b) = (u_times_l(u1, eps), u_times_l(u2, eps));
            let fixed = (1.0 + (1.0 / eps).ln()) * (u1 - u2).norm();
            out.push(Check {
                lhs: (a - b).norm(),
                fixed,
                scale: fixed.max(a.norm() + b.norm()),
                params: fill(&[u1.re, u1.im, u2.re, u2.im, eps]),
                ..Default::default()
            });
        }
        LemmaId::QuasiMonotone => {
            let (u, v) = (random_complex(rng), random_complex(rng));
            let (a, b) = (u_times_log(u), u_times_log(v));
            let d = u - v;
            let lhs = ((a - b) * d.conj()).im.abs();
            let fixed = d.norm_sqr();
            out.push(Check {
                lhs,
                fixed,
                scale: fixed.max((a.norm() + b.norm()) * d.norm()),
                params: fill(&[u.re, u.im, v.re, v.im]),
                ..Default::default()
            });
        }
        LemmaId::QuasiMonotoneDiagonal | LemmaId::QuasiMonotoneCross => {
            let (u1, u2) = (random_complex(rng), random_complex(rng));
            let eps = log_uniform(rng, 1e-6, 1.0 - 1e-12);
            let (mu, di) = if lemma == LemmaId::QuasiMonotoneCross {
                (log_uniform(rng, 1e-6, 1.0 - 1e-12), rng.random_range(0..3))
            } else {
                (eps, 0)
            };
            let (a, b) = (u_times_l(u1, eps), u_times_l(u2, mu));
            let d = u1 - u2;
            let lhs = (d.conj() * (a - b)).im.abs();
            let fixed = (1.0 - eps * eps) * d.norm_sqr();
            let gap = (eps - mu).abs();
            let delta = EXPONENTS[di];
            let basis = gap * d.norm() + gap.powf(delta) * u2.norm().powf(1.0 + delta) * d.norm();
            out.push(Check {
                lhs,
                fixed,
                basis,
                scale: fixed.max((a.norm() + b.norm()) * d.norm()),
                key: di,
                params: fill(&[u1.re, u1.im, u2.re, u2.im, eps, mu, delta]),
            });
        }
        LemmaId::Envelope => {
            let (u1, u2) = (random_complex(rng), random_complex(rng));
            let eps = log_uniform(rng, 1e-6, 1.0 - 1e-12);
            let (di, ai) = (rng.random_range(0..3), rng.random_range(0..3));
            let (delta, alpha) = (EXPONENTS[di], EXPONENTS[ai]);
            let (a, b) = (u_times_l(u1, eps), u_times_log(u2));
            let lhs = (a - b).norm();
            let d = (u2 - u1).norm();
            let (r1, r2) = (u1.norm(), u2.norm());
            let basis = eps.powf(delta) * r1.powf(1.0 + delta)
                + (1.0 + r2.powf(1.0 - alpha) * log_plus(r2) + r1.powf(1.0 - alpha) * log_plus(r1)) * d.powf(alpha);
            let fixed = eps + d;
            out.push(Check {
                lhs,
                fixed,
                basis,
                scale: fixed.max(a.norm() + b.norm()),
                key: 3 * di + ai,
                params: fill(&[u1.re, u1.im, u2.re, u2.im, eps, delta, alpha]),
            });
        }
        LemmaId::MarcusLipschitz => {
            let z = random_ball(rng, env.channels.m());
            let s = rng.random::<f64>();
            let (y1, y2) = (random_marcus_value(rng), random_marcus_value(rng));
            let rot = |y: Complex64| y * Complex64::from_polar(1.0, -s * jump_angle(&z, y, &env.channels));
            let (p1, p2) = (rot(y1), rot(y2));
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let fixed = (env.lipschitz_rate * zn).exp() * (y1 - y2).norm();
            let mut p = vec![s];
            p.extend(z.iter().take(2));
            p.resize(3, 0.0);
            p.extend([y1.re, y1.im, y2.re, y2.im]);
            out.push(Check {
                lhs: (p1 - p2).norm(),
                fixed,
                scale: fixed.max(y1.norm() + y2.norm()),
                params: fill(&p),
                ..Default::default()
            });
        }
        LemmaId::MarcusIncrement | LemmaId::MarcusCompensator | LemmaId::MarcusModulus => {
            let z = random_ball(rng, env.channels.m());
            let s = if lemma == LemmaId::MarcusIncrement { rng.random::<f64>() } else { 1.0 };
            let y = random_marcus_value(rng);
            let theta = jump_angle(&z, y, &env.channels);
            let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut p = Vec::new();
            if lemma == LemmaId::MarcusIncrement {
                p.push(s);
            }
            p.extend(z.iter().take(2));
            p.resize(p.len() + 2usize.saturating_sub(z.len()), 0.0);
            p.extend([y.re, y.im]);
            let check = match lemma {
                LemmaId::MarcusIncrement => {
                    let g = y * Complex64::from_polar(1.0, -s * theta) - y;
                    Check { lhs: g.norm(), basis: zn * y.norm(), scale: y.norm(), ..Default::default() }
                }
                LemmaId::MarcusCompensator => {
                    let h = compensator_factor(theta) * y;
                    Check { lhs: h.norm(), basis: zn * zn * y.norm(), scale: y.norm(), ..Default::default() }
                }
                _ => {
                    let phi = y * Complex64::from_polar(1.0, -theta);
                    Check { lhs: (phi.norm() - y.norm()).abs(), scale: y.norm(), ..Default::default() }
                }
            };
            out.push(Check { params: fill(&p), ..check });
        }
    }
}

fn shard_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn shard_sizes(total: usize) -> Vec<usize> {
    (0..total.div_ceil(SHARD)).map(|i| SHARD.min(total - i * SHARD)).collect()
}

/// The channel set used by the Marcus-map scans: photorefractive (ρ = 1) and square-root gap.
pub fn default_scan_channels() -> NoiseChannelSet {
    NoiseChannelSet::new(vec![SaturatedNonlinearity::Photorefractive { rho: 1.0 }, SaturatedNonlinearity::SqrtGap])
        .expect("built-in channels are valid")
}

pub fn inequality_scan(lemma: LemmaId, samples: usize, seed: u64) -> Result<ScanReport> {
    inequality_scan_with(lemma, samples, seed, &default_scan_channels())
}

#[derive(Clone, Copy)]
struct Worst {
    slack: f64,
    params: [f64; 8],
    violations: usize,
}

impl Worst {
    fn merge(self, other: Worst) -> Worst {
        let mut w = if other.slack > self.slack { other } else { self };
        w.violations = self.violations + other.violations;
        w
    }
}

pub fn inequality_scan_with(lemma: LemmaId, samples: usize, seed: u64, channels: &NoiseChannelSet) -> Result<ScanReport> {
    if samples < 100_000 {
        return Err(invalid(format!("scans need at least 1e5 samples, got {samples}")));
    }
    let k = k_gtilde_estimate(channels, 1e8, 4000)?;
    let env = MarcusEnv { channels: channels.clone(), lipschitz_rate: 3.0 * k * (channels.m() as f64).sqrt() };
    let mut constants = Vec::new();
    if matches!(lemma, LemmaId::MarcusLipschitz | LemmaId::MarcusIncrement | LemmaId::MarcusCompensator) {
        constants.push(("K_g".to_owned(), k));
    }
    if lemma == LemmaId::MarcusLipschitz {
        constants.push(("C=3K*sqrt(m)".to_owned(), env.lipschitz_rate));
    }
    if matches!(lemma, LemmaId::BoundedLog | LemmaId::Lipschitz | LemmaId::QuasiMonotone | LemmaId::QuasiMonotoneDiagonal | LemmaId::MarcusModulus) {
        constants.push(("slack".to_owned(), SCAN_SLACK));
    }

    let (calibration_samples, test_samples) =
        if lemma.is_calibrated() { (samples / 2, samples - samples / 2) } else { (0, samples) };
    let nkeys = match lemma {
        LemmaId::QuasiMonotoneCross => 3,
        LemmaId::Envelope => 9,
        _ => 1,
    };

    // calibration half: stream 2i; checked half: stream 2i + 1
    let mut calibrated = vec![0.0f64; nkeys];
    if calibration_samples > 0 {
        let per_shard: Vec<Vec<f64>> = shard_sizes(calibration_samples)
            .into_par_iter()
            .enumerate()
            .map(|(i, n)| {
                let mut rng = shard_rng(seed, 2 * i as u64);
                let mut buf = Vec::with_capacity(2);
                let mut maxes = vec![0.0f64; nkeys];
                for _ in 0..n {
                    buf.clear();
                    draw(lemma, &mut rng, &env, &mut buf);
                    for c in &buf {
                        if c.basis > 0.0 {
                            maxes[c.key] = maxes[c.key].max((c.lhs - c.fixed) / c.basis);
                        }
                    }
                }
                maxes
            })
            .collect();
        for m in per_shard {
            for (acc, v) in calibrated.iter_mut().zip(m) {
                *acc = acc.max(v);
            }
        }
        for (key, c) in calibrated.iter().enumerate() {
            let name = match lemma {
                LemmaId::QuasiMonotoneCross => format!("C(delta={})", EXPONENTS[key]),
                LemmaId::Envelope => format!("C(delta={},alpha={})", EXPONENTS[key / 3], EXPONENTS[key % 3]),
                LemmaId::MarcusIncrement => "C'".to_owned(),
                _ => "C''".to_owned(),
            };
            constants.push((name, *c));
        }
        constants.push(("margin".to_owned(), 2.0));
    }

    let worst = shard_sizes(test_samples)
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| {
            let mut rng = shard_rng(seed, 2 * i as u64 + 1);
            let mut buf = Vec::with_capacity(2);
            let mut worst = Worst { slack: f64::NEG_INFINITY, params: [0.0; 8], violations: 0 };
            for _ in 0..n {
                buf.clear();
                draw(lemma, &mut rng, &env, &mut buf);
                for c in &buf {
                    let rhs = c.fixed + 2.0 * calibrated[c.key] * c.basis;
                    let scale = c.scale.max(f64::MIN_POSITIVE);
                    let slack = (c.lhs - rhs) / scale;
                    if slack > SCAN_SLACK {
                        worst.violations += 1;
                    }
                    if slack > worst.slack {
                        worst.slack = slack;
                        worst.params = c.params;
                    }
                }
            }
            worst
        })
        .reduce(|| Worst { slack: f64::NEG_INFINITY, params: [0.0; 8], violations: 0 }, Worst::merge);

    let witness = lemma.param_names().iter().zip(worst.params).map(|(n, v)| ((*n).to_owned(), v)).collect();
    Ok(ScanReport {
        lemma,
        samples: test_samples,
        calibration_samples,
        violations: worst.violations,
        worst_slack: worst.slack,
        witness,
        constants,
    })
}

// ---------------------------------------------------------------------------
// Mild / strong cross-check

/// `max_t ‖run − run_strong_oracle(refine)‖_{L²}` over the sample times.
pub fn mild_strong_crosscheck(config: &SolverConfig, path: &NoisePath, u0: &Field, refine: usize) -> Result<f64> {
    let a = run(config, path, u0)?;
    let b = run_strong_oracle(config, path, u0, refine)?;
    let mut worst = 0.0f64;
    for (x, y) in a.states.iter().zip(&b.states) {
        worst = worst.max(l2_norm(&x.sub(y)?));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_fit_recovers_power() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let (slope, res) = loglog_fit(&x, &y);
        assert!((slope - 1.5).abs() < 1e-12 && res < 1e-12);
    }

    #[test]
    fn lemma_ids_roundtrip() {
        for l in LemmaId::ALL {
            assert_eq!(l.name().parse::<LemmaId>().unwrap(), l);
        }
        assert!("zz".parse::<LemmaId>().is_err());
    }

    #[test]
    fn scans_are_deterministic() {
        let a = inequality_scan(LemmaId::Lipschitz, 100_000, 5).unwrap();
        let b = inequality_scan(LemmaId::Lipschitz, 100_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.passed());
        assert!(inequality_scan(LemmaId::Lipschitz, 10, 5).is_err());
    }

    #[test]
    fn quasi_monotone_diagonal_vanishes() {
        let u = Complex64::new(0.3, -2.0);
        let a = u_times_log(u);
        assert_eq!(((a - a) * (u - u).conj()).im, 0.0);
    }

    #[test]
    fn envelope_calibration_is_finite() {
        let c = calibrate_envelope(0.5, 100_000, 1);
        assert!(c.is_finite() && c > 0.0);
    }
}
