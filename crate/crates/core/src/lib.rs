//! Regularized stochastic logarithmic Schrödinger equation with saturated
//! Marcus jump noise on a periodic box.
//!
//! * [`grid`]: periodic grids, complex fields, spectral operators and norms
//! * [`nonlinearity`]: regularized logarithm, saturated coefficients, Orlicz/energy functionals
//! * [`marcus`]: the Marcus jump map and its increments
//! * [`noise`]: truncated Poisson random measures and sampled paths
//! * [`solver`]: split-step integrator, strong-form oracle, diagnostics
//! * [`analysis`]: ε-sweeps, nonlinearity convergence and inequality scans

pub mod analysis;
pub mod error;
pub mod grid;
pub mod marcus;
pub mod noise;
pub mod nonlinearity;
mod quad;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use marcus::Mark;
pub use noise::{LevyMeasureSpec, NoisePath};
pub use nonlinearity::{EpsilonParam, NoiseChannelSet, SaturatedNonlinearity};
pub use solver::{SolverConfig, Trajectory};
