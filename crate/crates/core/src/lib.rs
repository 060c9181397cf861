#![forbid(unsafe_code)]

//! Numerics for a 3D quantum particle under a time-periodic point
//! interaction: the weakly singular Volterra equation for the charge at the
//! interaction center, the truncated Laplace-domain mode system, and the
//! ionization observables built on top of them.
//!
//! Natural units throughout: `hbar = 1`, `2m = 1` (free Hamiltonian `-Δ`),
//! the coupling `alpha` in inverse length. Everything is `f64`/`Complex64`.

pub mod alpha_model;
pub mod branch;
pub mod charge_solver;
pub mod faddeeva;
pub mod free_dynamics;
pub mod laplace_modes;
pub mod linalg;
pub mod observables;
pub mod parallel;
pub mod quadrature;

pub use alpha_model::{classify_resonance, genericity_residuals, FourierAlpha, ResonanceClass};
pub use charge_solver::{solve_charge, ChargeTrajectory, TimeGrid};
pub use free_dynamics::{BoundState, InitialState};
pub use laplace_modes::{solve_modes, ModeTruncation};
pub use observables::{ball_probability, decay_fit, survival, wavefunction_at};
