//! Event-driven integrators for the regularized Marcus equation.
//!
//! Once the compensated jump integral is rewritten against the truncated
//! (finite) Lévy measure, the dynamics between jumps reduce to
//!
//! ```text
//! du = i [Δu + 2λ u L_ε(u) + Σ_j μ1_j g̃_j(|u|²) u] dt
//! ```
//!
//! and every jump applies the Marcus map pointwise. The nonlinear part is a
//! phase rotation with a modulus-dependent rate, so [`run`] integrates it
//! exactly inside a Strang splitting around the free group. Steps are cut at
//! jump times and at sample times so both land exactly.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{h1_norm, l2_norm, propagate_in_place, Field, Grid};
use crate::marcus::jump_in_place;
use crate::noise::{LevyMeasureSpec, NoisePath};
use crate::nonlinearity::{
    energy, entropy_f, luxembourg_norm, phase_in_place, phase_rate, regularized_log, EpsilonParam,
    NoiseChannelSet,
};
use crate::quad::adaptive_simpson;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub eps: EpsilonParam,
    pub lambda: f64,
    pub dt: f64,
    pub horizon: f64,
    pub grid: Grid,
    pub channels: NoiseChannelSet,
    pub spec: LevyMeasureSpec,
    pub seed: u64,
    pub sample_times: Vec<f64>,
    /// When false the free propagator is skipped (phase/jump dynamics only).
    pub dispersion: bool,
    /// Regularization index of the entropy-balance column.
    pub entropy_k: u32,
}

/// `count + 1` equally spaced times covering `[0, horizon]`.
pub fn uniform_samples(horizon: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count).map(|i| horizon * i as f64 / count as f64).collect()
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite()) {
            return Err(invalid("lambda must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(invalid(format!("dt must lie in (0, T], got {}", self.dt)));
        }
        if self.sample_times.is_empty() {
            return Err(invalid("at least one sample time is required"));
        }
        if self.sample_times.windows(2).any(|w| w[0] > w[1])
            || self.sample_times.iter().any(|&t| !(0.0..=self.horizon).contains(&t))
        {
            return Err(invalid("sample times must be sorted and inside [0, T]"));
        }
        if self.spec.m() != self.channels.m() {
            return Err(invalid(format!(
                "Lévy measure lives in R^{} but {} channels are configured",
                self.spec.m(),
                self.channels.m()
            )));
        }
        if self.entropy_k < 2 {
            return Err(invalid("entropy_k must be >= 2"));
        }
        Ok(())
    }

    /// Number of regular time steps (the last one may be shorter).
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

/// Time series of monitored functionals, one entry per sample time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub h1: Vec<f64>,
    pub entropy: Vec<f64>,
    pub orlicz: Vec<f64>,
    pub energy: Vec<f64>,
    pub entropy_balance: Vec<f64>,
    pub entropy_k: u32,
}

impl DiagnosticsSeries {
    pub fn to_csv(&self) -> String {
        let mut s = format!("t,mass,h1,entropyF,orliczV,energy,ebal_k{}\n", self.entropy_k);
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.mass[i],
                self.h1[i],
                self.entropy[i],
                self.orlicz[i],
                self.energy[i],
                self.entropy_balance[i]
            );
        }
        s
    }

    /// Largest relative deviation of the mass column from its first entry.
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass.iter().map(|m| ((m - m0) / m0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub diagnostics: DiagnosticsSeries,
}

impl Trajectory {
    pub fn final_state(&self) -> &Field {
        self.states.last().expect("trajectory has at least one sample")
    }
}

/// Which inter-jump integrator to use.
enum Scheme {
    Strang,
    ExponentialEuler { refine: usize },
}

struct Drift<'a> {
    lambda: f64,
    eps: f64,
    mu1: &'a [f64],
    channels: &'a NoiseChannelSet,
    dispersion: bool,
}

impl Drift<'_> {
    fn strang(&self, u: &mut Field, h: f64) {
        if self.dispersion {
            propagate_in_place(u, 0.5 * h);
        }
        phase_in_place(u, self.lambda, h, self.eps, self.mu1, self.channels);
        if self.dispersion {
            propagate_in_place(u, 0.5 * h);
        }
    }

    fn exponential_euler(&self, u: &mut Field, h: f64, refine: usize) {
        let sub = h / refine as f64;
        for _ in 0..refine {
            for v in u.values_mut() {
                let rate = phase_rate(v.norm(), self.lambda, self.eps, self.mu1, self.channels);
                *v += Complex64::new(0.0, sub * rate) * *v;
            }
            if self.dispersion {
                propagate_in_place(u, sub);
            }
        }
    }
}

fn integrate(config: &SolverConfig, path: &NoisePath, u0: &Field, scheme: Scheme) -> Result<Trajectory> {
    config.validate()?;
    if *u0.grid() != config.grid {
        return Err(Error::GridMismatch);
    }
    if path.m() != config.channels.m() {
        return Err(invalid(format!("noise path has m = {}, channels m = {}", path.m(), config.channels.m())));
    }
    if path.horizon < config.horizon {
        return Err(invalid(format!("noise path covers [0, {}], run needs [0, {}]", path.horizon, config.horizon)));
    }
    let drift = Drift {
        lambda: config.lambda,
        eps: config.eps.get(),
        mu1: &path.mu1,
        channels: &config.channels,
        dispersion: config.dispersion,
    };
    let steps = config.steps();
    let step_time = |i: usize| if i >= steps { config.horizon } else { i as f64 * config.dt };
    // sample times within this distance of a step boundary are snapped onto it
    let snap = 1e-9 * config.dt;

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut next_step = 1;
    let mut next_jump = 0;
    let mut next_sample = 0;
    let mut times = Vec::with_capacity(config.sample_times.len());
    let mut states = Vec::with_capacity(config.sample_times.len());
    let events = &path.events;

    // running ∫_0^t entropy_flux, trapezoid per sub-step with left limits at jumps
    let k = config.entropy_k;
    let mut flux_integral = 0.0;
    let mut flux = entropy_flux(&u, k);
    let mut integrals = Vec::with_capacity(config.sample_times.len());

    let mut record = |t: f64, u: &Field, flux_integral: f64, next_sample: &mut usize| {
        while *next_sample < config.sample_times.len() && config.sample_times[*next_sample] <= t + snap {
            times.push(config.sample_times[*next_sample]);
            states.push(u.clone());
            integrals.push(flux_integral);
            *next_sample += 1;
        }
    };
    record(t, &u, flux_integral, &mut next_sample);

    while t < config.horizon {
        let t_step = step_time(next_step);
        let mut target = t_step;
        if let Some(e) = events.get(next_jump) {
            target = target.min(e.tau);
        }
        if let Some(&ts) = config.sample_times.get(next_sample) {
            if ts < t_step - snap {
                target = target.min(ts);
            }
        }
        if target > t {
            let h = target - t;
            match scheme {
                Scheme::Strang => drift.strang(&mut u, h),
                Scheme::ExponentialEuler { refine } => drift.exponential_euler(&mut u, h, refine),
            }
            if !u.is_finite() {
                return Err(Error::NonFinite { time: target });
            }
            let left = entropy_flux(&u, k);
            flux_integral += 0.5 * h * (flux + left);
            flux = left;
            t = target;
        }
        if t >= t_step {
            next_step += 1;
        }
        while let Some(e) = events.get(next_jump) {
            if e.tau > t {
                break;
            }
            jump_in_place(&mut u, e.z.as_slice(), &config.channels);
            flux = entropy_flux(&u, k);
            next_jump += 1;
        }
        record(t, &u, flux_integral, &mut next_sample);
    }

    let diagnostics = diagnostics_for(&times, &states, &integrals, config.lambda, k)?;
    Ok(Trajectory { times, states, diagnostics })
}

fn diagnostics_for(times: &[f64], states: &[Field], integrals: &[f64], lambda: f64, k: u32) -> Result<DiagnosticsSeries> {
    use rayon::prelude::*;
    let rows: Vec<[f64; 6]> = states
        .par_iter()
        .map(|u| [l2_norm(u), h1_norm(u), entropy_f(u), luxembourg_norm(u), energy(u, lambda), entropy_fk_integral(u, k)])
        .collect();
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let fk0 = rows[0][5];
    Ok(DiagnosticsSeries {
        times: times.to_vec(),
        mass: col(0),
        h1: col(1),
        entropy: col(2),
        orlicz: col(3),
        energy: col(4),
        entropy_balance: rows.iter().zip(integrals).map(|(r, i)| r[5] - fk0 - i).collect(),
        entropy_k: k,
    })
}

/// Strang split-step integration of the regularized equation along `path`.
pub fn run(config: &SolverConfig, path: &NoisePath, u0: &Field) -> Result<Trajectory> {
    integrate(config, path, u0, Scheme::Strang)
}

/// First-order exponential-Euler integration of the strong form, with every
/// step subdivided `refine` times. Used to cross-check [`run`].
pub fn run_strong_oracle(config: &SolverConfig, path: &NoisePath, u0: &Field, refine: usize) -> Result<Trajectory> {
    if refine == 0 {
        return Err(invalid("refine must be >= 1"));
    }
    integrate(config, path, u0, Scheme::ExponentialEuler { refine })
}

/// `F_k(l) = ∫_0^l (L_{1/k}(v) + 1) dv` by adaptive quadrature.
pub fn entropy_fk(l: f64, k: u32) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    let e = 1.0 / k as f64;
    adaptive_simpson(|v| regularized_log(v, e) + 1.0, 0.0, l, 1e-14 * (1.0 + l))
}

/// `F_k''(l) = (1 − k⁻²) / ((k⁻¹ + l)(1 + l/k))`.
pub fn entropy_weight(l: f64, k: u32) -> f64 {
    let e = 1.0 / k as f64;
    (1.0 - e * e) / ((e + l) * (1.0 + e * l))
}

/// `4 ∫ F_k''(|u|²) Σ_j Re(ū ∂_j u) Im(ū ∂_j u) dx`, the rate of change of
/// `∫ F_k(|u|²)` under the free flow.
pub fn entropy_flux(u: &Field, k: u32) -> f64 {
    let grad = u.gradient();
    let mut s = 0.0;
    for (i, v) in u.values().iter().enumerate() {
        let w = entropy_weight(v.norm_sqr(), k);
        let mut acc = 0.0;
        for g in &grad {
            let p = v.conj() * g.values()[i];
            acc += p.re * p.im;
        }
        s += w * acc;
    }
    4.0 * s * u.grid().cell_volume()
}

pub fn entropy_fk_integral(u: &Field, k: u32) -> f64 {
    u.values().iter().map(|v| entropy_fk(v.norm_sqr(), k)).sum::<f64>() * u.grid().cell_volume()
}

/// Residual of the entropy balance `∫F_k(|u(t)|²) = ∫F_k(|u₀|²) + ∫_0^t entropy_flux`
/// recomputed from the sample times alone (trapezoid in time). Coarser than the
/// `entropy_balance` column, which integrates the flux on every sub-step.
pub fn entropy_balance_residual(traj: &Trajectory, k: u32) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    if k < 2 {
        return Err(invalid("entropy balance needs k >= 2"));
    }
    let pairs: Vec<(f64, f64)> =
        traj.states.par_iter().map(|u| (entropy_fk_integral(u, k), entropy_flux(u, k))).collect();
    let mut out = Vec::with_capacity(pairs.len());
    let mut rhs = 0.0;
    for i in 0..pairs.len() {
        if i == 0 {
            rhs = pairs[0].0;
        } else {
            rhs += 0.5 * (traj.times[i] - traj.times[i - 1]) * (pairs[i].1 + pairs[i - 1].1);
        }
        out.push(pairs[i].0 - rhs);
    }
    Ok(out)
}

/// Built-in initial data, all centered and decaying well inside the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialProfile {
    Gaussian { amplitude: f64, width: f64 },
    Sech { amplitude: f64, width: f64 },
    /// Gaussian carrying a plane wave `e^{i k0 x_1}`.
    Modulated { amplitude: f64, width: f64, k0: f64 },
}

impl InitialProfile {
    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        let r2 = |x: &[f64]| x.iter().map(|c| c * c).sum::<f64>();
        match *self {
            Self::Gaussian { amplitude, width } => {
                Field::from_fn(grid, |x| Complex64::new(amplitude * (-r2(x) / (2.0 * width * width)).exp(), 0.0))
            }
            Self::Sech { amplitude, width } => {
                Field::from_fn(grid, |x| Complex64::new(amplitude / (r2(x).sqrt() / width).cosh(), 0.0))
            }
            Self::Modulated { amplitude, width, k0 } => Field::from_fn(grid, |x| {
                Complex64::from_polar(amplitude * (-r2(x) / (2.0 * width * width)).exp(), k0 * x[0])
            }),
        }
    }
}
