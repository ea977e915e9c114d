//! Regularized logarithm, saturated noise coefficients and the scalar
//! functionals of the energy space (entropy, Orlicz/Luxembourg norm, energy).

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{gradient_norm_sqr, h1_norm, Field};

/// Regularization parameter, strictly inside `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonParam(f64);

impl EpsilonParam {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 1.0 {
            Ok(Self(eps))
        } else {
            Err(invalid(format!("eps must lie in (0,1), got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `log((r + eps) / (1 + eps r))` without argument checks.
#[inline]
pub fn regularized_log(r: f64, eps: f64) -> f64 {
    ((r + eps) / (1.0 + eps * r)).ln()
}

pub fn l_eps(r: f64, eps: EpsilonParam) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(invalid(format!("amplitude must be nonnegative, got {r}")));
    }
    Ok(regularized_log(r, eps.0))
}

/// `s log s` extended by 0 at the origin.
#[inline]
pub fn xlogx(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s * s.ln()
    }
}

/// One saturated coefficient `g̃(θ)`; the noise coefficient is `g(y) = g̃(|y|²) y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SaturatedNonlinearity {
    /// `θ / (1 + ρθ)`
    Photorefractive { rho: f64 },
    /// `1 - 1/sqrt(1 + θ)`
    SqrtGap,
    /// `θ(2 + ρθ) / (1 + ρθ)^2`
    DoubleSat { rho: f64 },
    /// `log(1 + ρθ) / (1 + log(1 + ρθ))`
    LogSat { rho: f64 },
    Constant { c: f64 },
}

impl SaturatedNonlinearity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Photorefractive { rho } | Self::DoubleSat { rho } | Self::LogSat { rho } => {
                if rho > 0.0 && rho.is_finite() {
                    Ok(())
                } else {
                    Err(Error::AssumptionViolation(format!(
                        "{self}: rho must be positive and finite, otherwise the coefficient is unbounded"
                    )))
                }
            }
            Self::SqrtGap => Ok(()),
            Self::Constant { c } if c.is_finite() => Ok(()),
            Self::Constant { c } => Err(Error::AssumptionViolation(format!("constant {c} is not finite"))),
        }
    }

    /// `g̃(θ)` only.
    #[inline]
    pub fn value(&self, theta: f64) -> f64 {
        match *self {
            Self::Photorefractive { rho } => theta / (1.0 + rho * theta),
            Self::SqrtGap => 1.0 - 1.0 / (1.0 + theta).sqrt(),
            Self::DoubleSat { rho } => {
                let q = 1.0 + rho * theta;
                theta * (2.0 + rho * theta) / (q * q)
            }
            Self::LogSat { rho } => {
                let l = (rho * theta).ln_1p();
                l / (1.0 + l)
            }
            Self::Constant { c } => c,
        }
    }

    /// `(g̃, g̃', g̃'')` at `θ`, closed form.
    pub fn eval(&self, theta: f64) -> (f64, f64, f64) {
        match *self {
            Self::Photorefractive { rho } => {
                let q = 1.0 + rho * theta;
                (theta / q, 1.0 / (q * q), -2.0 * rho / (q * q * q))
            }
            Self::SqrtGap => {
                let q = 1.0 + theta;
                let s = q.sqrt();
                (1.0 - 1.0 / s, 0.5 / (q * s), -0.75 / (q * q * s))
            }
            Self::DoubleSat { rho } => {
                // θ(2+ρθ)/(1+ρθ)² = (1 - (1+ρθ)^-2) / ρ
                let q = 1.0 + rho * theta;
                let q2 = q * q;
                (theta * (2.0 + rho * theta) / q2, 2.0 / (q2 * q), -6.0 * rho / (q2 * q2))
            }
            Self::LogSat { rho } => {
                let q = 1.0 + rho * theta;
                let l = (rho * theta).ln_1p();
                let l1 = rho / q;
                let l2 = -rho * rho / (q * q);
                let w = 1.0 + l;
                (l / w, l1 / (w * w), (l2 * w - 2.0 * l1 * l1) / (w * w * w))
            }
            Self::Constant { c } => (c, 0.0, 0.0),
        }
    }

    /// `g̃ + (1+θ) g̃' + (1+θ^{3/2}) g̃''`.
    pub fn assumption_expr(&self, theta: f64) -> f64 {
        let (g, g1, g2) = self.eval(theta);
        g + (1.0 + theta) * g1 + (1.0 + theta * theta.sqrt()) * g2
    }

    /// Limit of [`Self::assumption_expr`] as `θ → ∞`.
    pub fn assumption_limit(&self) -> f64 {
        match *self {
            Self::Photorefractive { rho } | Self::DoubleSat { rho } => 1.0 / rho,
            Self::SqrtGap | Self::LogSat { .. } => 1.0,
            Self::Constant { c } => c,
        }
    }
}

impl fmt::Display for SaturatedNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Photorefractive { rho } => write!(f, "photorefractive:{rho}"),
            Self::SqrtGap => write!(f, "sqrt_gap"),
            Self::DoubleSat { rho } => write!(f, "double_sat:{rho}"),
            Self::LogSat { rho } => write!(f, "log_sat:{rho}"),
            Self::Constant { c } => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for SaturatedNonlinearity {
    type Err = Error;

    /// Parses `family[:param]`, e.g. `photorefractive:1.0`, `sqrt_gap`, `constant:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.trim().split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let number = |what: &str| -> Result<f64> {
            let p = param.ok_or_else(|| invalid(format!("family '{name}' needs a {what} parameter")))?;
            p.parse::<f64>().map_err(|_| invalid(format!("bad {what} '{p}' for family '{name}'")))
        };
        let g = match name {
            "photorefractive" => Self::Photorefractive { rho: number("rho")? },
            "sqrt_gap" => {
                if param.is_some() {
                    return Err(invalid("family 'sqrt_gap' takes no parameter"));
                }
                Self::SqrtGap
            }
            "double_sat" => Self::DoubleSat { rho: number("rho")? },
            "log_sat" => Self::LogSat { rho: number("rho")? },
            "constant" => Self::Constant { c: number("value")? },
            other => return Err(invalid(format!("unknown nonlinearity family '{other}'"))),
        };
        g.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(g)
    }
}

pub fn gtilde_eval(g: &SaturatedNonlinearity, theta: f64) -> Result<(f64, f64, f64)> {
    if theta.is_nan() || theta < 0.0 {
        return Err(invalid(format!("theta must be nonnegative, got {theta}")));
    }
    Ok(g.eval(theta))
}

/// The `m` noise channels `g̃_1, ..., g̃_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseChannelSet {
    channels: Vec<SaturatedNonlinearity>,
}

impl NoiseChannelSet {
    pub fn new(channels: Vec<SaturatedNonlinearity>) -> Result<Self> {
        if channels.is_empty() {
            return Err(invalid("at least one noise channel is required"));
        }
        for c in &channels {
            c.validate()?;
        }
        Ok(Self { channels })
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[SaturatedNonlinearity] {
        &self.channels
    }

    /// `Σ_j w_j g̃_j(θ)`.
    #[inline]
    pub fn weighted(&self, weights: &[f64], theta: f64) -> f64 {
        self.channels.iter().zip(weights).map(|(g, w)| w * g.value(theta)).sum()
    }
}

/// Numerical sup of the assumption expression on a log-spaced grid of
/// `[1e-8, theta_max]`, joined with the analytic large-θ limits.
pub fn k_gtilde_estimate(channels: &NoiseChannelSet, theta_max: f64, samples: usize) -> Result<f64> {
    if !(theta_max > 1e-8 && theta_max.is_finite()) {
        return Err(invalid(format!("theta_max must exceed 1e-8, got {theta_max}")));
    }
    if samples < 1000 {
        return Err(invalid(format!("need at least 1000 samples, got {samples}")));
    }
    let (lo, hi) = (1e-8f64.ln(), theta_max.ln());
    let mut k = f64::NEG_INFINITY;
    for g in channels.channels() {
        g.validate()?;
        let mut sup = g.assumption_limit();
        for i in 0..samples {
            let theta = (lo + (hi - lo) * i as f64 / (samples - 1) as f64).exp();
            let v = g.assumption_expr(theta);
            if !v.is_finite() {
                return Err(Error::AssumptionViolation(format!("{g}: bound expression non-finite at θ = {theta}")));
            }
            sup = sup.max(v);
        }
        k = k.max(sup);
    }
    Ok(k)
}

/// Pointwise `u ← exp(i (2λ L_ε(|u|) + Σ_j μ1_j g̃_j(|u|²)) dt) u`.
pub fn apply_log_phase(
    u: &Field,
    lambda: f64,
    dt: f64,
    eps: EpsilonParam,
    mu1: &[f64],
    channels: &NoiseChannelSet,
) -> Result<Field> {
    if mu1.len() != channels.m() {
        return Err(invalid(format!("mu1 has {} entries, expected {}", mu1.len(), channels.m())));
    }
    let mut out = u.clone();
    phase_in_place(&mut out, lambda, dt, eps.get(), mu1, channels);
    Ok(out)
}

/// Rate of the pointwise phase rotation for amplitude `r`.
#[inline]
pub(crate) fn phase_rate(r: f64, lambda: f64, eps: f64, mu1: &[f64], channels: &NoiseChannelSet) -> f64 {
    let mut rate = 2.0 * lambda * regularized_log(r, eps);
    if mu1.iter().any(|&w| w != 0.0) {
        rate += channels.weighted(mu1, r * r);
    }
    rate
}

pub(crate) fn phase_in_place(u: &mut Field, lambda: f64, dt: f64, eps: f64, mu1: &[f64], channels: &NoiseChannelSet) {
    for v in u.values_mut() {
        let rate = phase_rate(v.norm(), lambda, eps, mu1, channels);
        *v *= Complex64::from_polar(1.0, rate * dt);
    }
}

/// Pointwise `u log|u|²` with `0 log 0 = 0`.
pub fn log_nonlinearity(u: &Field) -> Field {
    let values = u
        .values()
        .iter()
        .map(|v| {
            let s = v.norm_sqr();
            if s == 0.0 {
                Complex64::default()
            } else {
                v * s.ln()
            }
        })
        .collect();
    Field::new(u.grid().clone(), values).expect("log nonlinearity of a finite field is finite")
}

/// Entropy density `F(s) = -s² log(s²)`.
#[inline]
pub fn entropy_density(s: f64) -> f64 {
    -xlogx(s * s)
}

pub fn entropy_f(u: &Field) -> f64 {
    // `+ 0.0` turns the -0.0 of an all-zero field into 0.0
    u.values().iter().map(|v| entropy_density(v.norm())).sum::<f64>() * u.grid().cell_volume() + 0.0
}

/// Young function of the Orlicz space.
pub fn orlicz_n(s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(invalid(format!("orlicz argument must be nonnegative, got {s}")));
    }
    Ok(orlicz_n_unchecked(s))
}

#[inline]
pub(crate) fn orlicz_n_unchecked(s: f64) -> f64 {
    let e3 = (-3.0f64).exp();
    if s <= e3 {
        -xlogx(s * s)
    } else {
        3.0 * s * s + 4.0 * e3 * s - e3 * e3
    }
}

/// `∫ N(|u|/k) dx`.
pub fn orlicz_modular(u: &Field, k: f64) -> f64 {
    let inv = 1.0 / k;
    u.values().iter().map(|v| orlicz_n_unchecked(v.norm() * inv)).sum::<f64>() * u.grid().cell_volume()
}

/// Luxembourg norm by bisection on the decreasing map `k ↦ ∫N(|u|/k)`.
pub fn luxembourg_norm(u: &Field) -> f64 {
    let peak = u.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    let mut lo = 1e-12 * peak;
    let mut hi = 1e12 * peak;
    while orlicz_modular(u, lo) < 1.0 {
        lo *= 1e-3;
    }
    while orlicz_modular(u, hi) > 1.0 {
        hi *= 1e3;
    }
    // bisect in log scale; the bracket spans up to 24 decades
    while hi / lo > 1.0 + 1e-12 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if orlicz_modular(u, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `‖u‖_{H¹} + ‖u‖_V`.
pub fn w_norm(u: &Field) -> f64 {
    h1_norm(u) + luxembourg_norm(u)
}

/// `E(u) = ½‖∇u‖² − (λ/2) ∫ |u|² log|u|² dx`.
pub fn energy(u: &Field, lambda: f64) -> f64 {
    let pot: f64 = u.values().iter().map(|v| xlogx(v.norm_sqr())).sum::<f64>() * u.grid().cell_volume();
    0.5 * gradient_norm_sqr(u) - 0.5 * lambda * pot
}

/// Root of `3x² + 4e^{-3}x − e^{-6} = 1` (the large branch of `N` set to one).
pub fn orlicz_unit_level() -> f64 {
    let e3 = E.powi(-3);
    let (a, b, c) = (3.0, 4.0 * e3, -e3 * e3 - 1.0);
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}
