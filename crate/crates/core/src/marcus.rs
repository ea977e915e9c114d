//! Marcus jump map for the saturated noise.
//!
//! The flow `∂Φ/∂s = -i Σ_j z_j g̃_j(|Φ|²) Φ` keeps `|Φ|` fixed, so it is a pure
//! phase rotation by `s θ` with `θ = Σ_j z_j g̃_j(|y|²)`. [`phi_closed`] is that
//! closed form; [`phi_ode`] integrates the ODE directly and only exists to
//! cross-check it.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::grid::Field;
use crate::nonlinearity::NoiseChannelSet;

/// A jump mark `z ∈ ℝ^m` with `0 < |z| ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mark(Vec<f64>);

impl Mark {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        let r = euclid(&z);
        if z.is_empty() || !(r > 0.0 && r <= 1.0) {
            return Err(invalid(format!("mark norm {r} outside (0, 1]")));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        euclid(&self.0)
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }
}

pub(crate) fn euclid(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dims(z: &Mark, channels: &NoiseChannelSet) -> Result<()> {
    if z.m() != channels.m() {
        return Err(invalid(format!("mark has {} components, {} channels configured", z.m(), channels.m())));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(invalid(format!("flow time s = {s} outside [0, 1]")))
    }
}

/// `θ = Σ_j z_j g̃_j(|y|²)`.
#[inline]
pub fn jump_angle(z: &[f64], y: Complex64, channels: &NoiseChannelSet) -> f64 {
    channels.weighted(z, y.norm_sqr())
}

pub fn phi_closed(s: f64, z: &Mark, y: Complex64, channels: &NoiseChannelSet) -> Result<Complex64> {
    check_s(s)?;
    check_dims(z, channels)?;
    Ok(rotate(s, z.as_slice(), y, channels))
}

#[inline]
fn rotate(s: f64, z: &[f64], y: Complex64, channels: &NoiseChannelSet) -> Complex64 {
    y * Complex64::from_polar(1.0, -s * jump_angle(z, y, channels))
}

/// Classical RK4 on the defining ODE over `[0, s]`.
pub fn phi_ode(s: f64, z: &Mark, y: Complex64, channels: &NoiseChannelSet, nsteps: usize) -> Result<Complex64> {
    check_s(s)?;
    check_dims(z, channels)?;
    if nsteps < 16 {
        return Err(invalid(format!("RK4 needs at least 16 steps, got {nsteps}")));
    }
    let zs = z.as_slice();
    let rhs = |p: Complex64| -> Complex64 { Complex64::new(0.0, -jump_angle(zs, p, channels)) * p };
    let h = s / nsteps as f64;
    let mut p = y;
    for _ in 0..nsteps {
        let k1 = rhs(p);
        let k2 = rhs(p + k1 * (0.5 * h));
        let k3 = rhs(p + k2 * (0.5 * h));
        let k4 = rhs(p + k3 * h);
        p += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }
    Ok(p)
}

/// `𝒢(z, y) = Φ(z, y) − y`.
pub fn jump_increment_g(z: &Mark, y: Complex64, channels: &NoiseChannelSet) -> Result<Complex64> {
    Ok(phi_closed(1.0, z, y, channels)? - y)
}

/// `ℋ(z, y) = Φ(z, y) − y + i Σ_j z_j g_j(y) = (e^{−iθ} − 1 + iθ) y`.
pub fn compensator_h(z: &Mark, y: Complex64, channels: &NoiseChannelSet) -> Result<Complex64> {
    check_dims(z, channels)?;
    let theta = jump_angle(z.as_slice(), y, channels);
    Ok(compensator_factor(theta) * y)
}

/// `e^{−iθ} − 1 + iθ`, evaluated without cancellation for small `θ`.
pub fn compensator_factor(theta: f64) -> Complex64 {
    // cos θ − 1 = −2 sin²(θ/2); θ − sin θ by series below 1e-2
    let re = -2.0 * (0.5 * theta).sin().powi(2);
    let im = if theta.abs() < 1e-2 {
        let t2 = theta * theta;
        theta * t2 / 6.0 * (1.0 - t2 / 20.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0)))
    } else {
        theta - theta.sin()
    };
    Complex64::new(re, im)
}

/// Pointwise jump `u ← Φ(z, u)`.
pub fn apply_jump(u: &Field, z: &Mark, channels: &NoiseChannelSet) -> Result<Field> {
    check_dims(z, channels)?;
    let mut out = u.clone();
    jump_in_place(&mut out, z.as_slice(), channels);
    Ok(out)
}

pub(crate) fn jump_in_place(u: &mut Field, z: &[f64], channels: &NoiseChannelSet) {
    for v in u.values_mut() {
        *v = rotate(1.0, z, *v, channels);
    }
}
