//! Equation-free coarse bifurcation analysis.
//!
//! Many-particle models (traffic, pedestrian crowds) often have low-dimensional
//! macroscopic behavior even though no closed-form macroscopic equations are
//! available. This crate builds a macroscopic time stepper from three user-supplied
//! ingredients — a lifting operator, a microscopic time stepper, and a restriction
//! operator — and layers root finding, stability analysis, projective integration
//! and pseudo-arclength continuation on top of it. Two reference models are
//! included: the optimal-velocity car-following model on a ring road and a
//! social-force model for two pedestrian crowds passing a bottleneck.
//!
//! The crate is organized as:
//!
//! * [`micro`] — fixed-step deterministic integration of microscopic ODE systems;
//! * [`coarse`] — the implicit/explicit macroscopic time stepper and everything
//!   built directly on it (coarse equilibria, stability, projective integration,
//!   restriction matching, healing diagnostics);
//! * [`continuation`] — pseudo-arclength continuation of coarse equilibria,
//!   fold/stability event detection, and two-parameter fold and Hopf curves;
//! * [`traffic`] — the optimal-velocity ring-road model;
//! * [`pedestrian`] — the social-force corridor model and its Poincaré-section
//!   machinery;
//! * [`testsys`] — small closed-form systems (fold, pitchfork, Hopf normal form,
//!   linear slow-fast) used for validation and exposed to the CLI.
//!
//! With the default `parallel` feature, finite-difference Jacobian columns and
//! pairwise force loops run on rayon; disabling the feature compiles purely
//! sequential equivalents with identical results.

pub mod coarse;
pub mod continuation;
pub mod error;
pub mod micro;
mod par;
pub mod pedestrian;
pub mod testsys;
pub mod traffic;

mod newton;

pub use error::EqFreeError;
pub use micro::{integrate, MicroState, MicroSystem, ParameterSet};

/// Macroscopic state vector x ∈ R^n with n much smaller than the micro dimension.
pub type MacroState = Vec<f64>;
