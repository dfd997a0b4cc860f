//! Deterministic fixed-step integration of microscopic ODE systems.
//!
//! A microscopic model is anything implementing [`MicroSystem`]: a
//! right-hand side u̇ = f(u) over a state vector of fixed dimension, with its
//! parameters already bound. Second-order models are embedded as first-order
//! systems by storing (positions, velocities). [`integrate`] is the time
//! stepper M(t, u₀) that every coarse operation is built on; it uses the
//! classical 4th-order Runge-Kutta scheme with a fixed step, shortening the
//! last step so the elapsed time is exactly `t`.

use crate::error::EqFreeError;
use std::collections::BTreeMap;

/// Full microscopic phase point u ∈ R^N.
///
/// For second-order models the coordinates are the concatenation
/// (positions, velocities).
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub coords: Vec<f64>,
}

impl MicroState {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for MicroState {
    fn from(coords: Vec<f64>) -> Self {
        Self { coords }
    }
}

/// Named real-valued model parameters.
///
/// Stored in a sorted map so iteration order (and hence any serialized form)
/// is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    values: BTreeMap<String, f64>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    /// Builder-style insertion.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Fetch a required parameter, checking finiteness.
    pub fn require(&self, name: &str) -> Result<f64, EqFreeError> {
        let v = self
            .get(name)
            .ok_or_else(|| EqFreeError::Parameter(format!("missing parameter `{name}`")))?;
        if !v.is_finite() {
            return Err(EqFreeError::Parameter(format!(
                "parameter `{name}` is not finite"
            )));
        }
        Ok(v)
    }

    /// Value of `name` if present, otherwise `default`.
    pub fn get_or(&self, name: &str, default: f64) -> f64 {
        self.get(name).unwrap_or(default)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }
}

impl FromIterator<(String, f64)> for ParameterSet {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Self {
            values: iter.into_iter().collect(),
        }
    }
}

/// A microscopic ODE system u̇ = f(u) with its parameters bound.
///
/// `rhs` must be deterministic: the same input always produces the same
/// output, bitwise. All coarse operations rely on this.
pub trait MicroSystem: Sync {
    /// Phase-space dimension N.
    fn dim(&self) -> usize;

    /// Evaluate the derivative f(u) into `out` (length `dim()`).
    fn rhs(&self, u: &[f64], out: &mut [f64]);
}

/// Number of full steps and the leftover step for integrating a duration `t`
/// with step `dt`. When `t` is an (up to rounding) integer multiple of `dt`
/// no leftover step is produced, so compositions of such durations take
/// bitwise identical paths.
fn split_steps(t: f64, dt: f64) -> (u64, Option<f64>) {
    let ratio = t / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as u64, None)
    } else {
        let n = ratio.floor() as u64;
        (n, Some(t - n as f64 * dt))
    }
}

/// The microscopic time stepper M(t, u₀): the state after time `t` under a
/// fixed-step classical 4th-order Runge-Kutta scheme.
///
/// The last step is shortened so the total elapsed time is exactly `t`.
/// Fails with [`EqFreeError::Blowup`] carrying the time of failure if a
/// non-finite state is encountered mid-integration.
pub fn integrate(
    system: &dyn MicroSystem,
    u0: &MicroState,
    t: f64,
    dt: f64,
) -> Result<MicroState, EqFreeError> {
    assert!(t >= 0.0, "integration time must be non-negative");
    assert!(dt > 0.0, "step size must be positive");
    assert_eq!(u0.dim(), system.dim(), "state/system dimension mismatch");

    let mut u = u0.clone();
    if t == 0.0 {
        return Ok(u);
    }

    let (n_full, leftover) = split_steps(t, dt);
    let mut scratch = RkScratch::new(system.dim());
    let mut elapsed = 0.0;
    for _ in 0..n_full {
        rk4_step(system, &mut u.coords, dt, &mut scratch);
        elapsed += dt;
        if !u.is_finite() {
            return Err(EqFreeError::Blowup { time: elapsed });
        }
    }
    if let Some(h) = leftover {
        rk4_step(system, &mut u.coords, h, &mut scratch);
        if !u.is_finite() {
            return Err(EqFreeError::Blowup { time: t });
        }
    }
    Ok(u)
}

/// Like [`integrate`], but invokes `observe(t, u)` after every internal step
/// (and once at t = 0). Used for dense sampling (Poincaré sections, healing
/// profiles) without paying for repeated re-integration.
pub fn integrate_observed<F>(
    system: &dyn MicroSystem,
    u0: &MicroState,
    t: f64,
    dt: f64,
    mut observe: F,
) -> Result<MicroState, EqFreeError>
where
    F: FnMut(f64, &[f64]),
{
    assert!(t >= 0.0, "integration time must be non-negative");
    assert!(dt > 0.0, "step size must be positive");
    assert_eq!(u0.dim(), system.dim(), "state/system dimension mismatch");

    let mut u = u0.clone();
    observe(0.0, &u.coords);
    if t == 0.0 {
        return Ok(u);
    }
    let (n_full, leftover) = split_steps(t, dt);
    let mut scratch = RkScratch::new(system.dim());
    let mut elapsed = 0.0;
    for _ in 0..n_full {
        rk4_step(system, &mut u.coords, dt, &mut scratch);
        elapsed += dt;
        if !u.is_finite() {
            return Err(EqFreeError::Blowup { time: elapsed });
        }
        observe(elapsed, &u.coords);
    }
    if let Some(h) = leftover {
        rk4_step(system, &mut u.coords, h, &mut scratch);
        if !u.is_finite() {
            return Err(EqFreeError::Blowup { time: t });
        }
        observe(t, &u.coords);
    }
    Ok(u)
}

struct RkScratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl RkScratch {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn rk4_step(system: &dyn MicroSystem, u: &mut [f64], h: f64, s: &mut RkScratch) {
    system.rhs(u, &mut s.k1);
    for i in 0..u.len() {
        s.tmp[i] = u[i] + 0.5 * h * s.k1[i];
    }
    system.rhs(&s.tmp, &mut s.k2);
    for i in 0..u.len() {
        s.tmp[i] = u[i] + 0.5 * h * s.k2[i];
    }
    system.rhs(&s.tmp, &mut s.k3);
    for i in 0..u.len() {
        s.tmp[i] = u[i] + h * s.k3[i];
    }
    system.rhs(&s.tmp, &mut s.k4);
    let w = h / 6.0;
    for i in 0..u.len() {
        u[i] += w * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Decay;
    impl MicroSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, u: &[f64], out: &mut [f64]) {
            out[0] = -u[0];
        }
    }

    struct Harmonic;
    impl MicroSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, u: &[f64], out: &mut [f64]) {
            out[0] = u[1];
            out[1] = -u[0];
        }
    }

    /// Explodes in finite time: ẋ = x², x(0) = 1 blows up at t = 1.
    struct Explode;
    impl MicroSystem for Explode {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, u: &[f64], out: &mut [f64]) {
            out[0] = u[0] * u[0];
        }
    }

    #[test]
    fn zero_time_returns_input_unchanged() {
        let u0 = MicroState::new(vec![1.25, -3.5]);
        let u = integrate(&Harmonic, &u0, 0.0, 1e-2).unwrap();
        assert_eq!(u, u0);
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        // ẋ = -x, x(0) = 1, t = 1: closed form e^{-1}.
        let u = integrate(&Decay, &MicroState::new(vec![1.0]), 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(u.coords[0], 0.367879441171442, epsilon = 1e-6);
    }

    #[test]
    fn harmonic_oscillator_returns_after_full_period() {
        let u0 = MicroState::new(vec![1.0, 0.0]);
        let u = integrate(&Harmonic, &u0, 2.0 * std::f64::consts::PI, 1e-3).unwrap();
        assert_abs_diff_eq!(u.coords[0], u0.coords[0], epsilon = 1e-6);
        assert_abs_diff_eq!(u.coords[1], u0.coords[1], epsilon = 1e-6);
    }

    #[test]
    fn last_step_shortened_to_exact_time() {
        // t = 0.5, dt = 0.3: one full step plus a 0.2 leftover.
        let u = integrate(&Decay, &MicroState::new(vec![1.0]), 0.5, 0.3).unwrap();
        assert_abs_diff_eq!(u.coords[0], (-0.5f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn semigroup_property_bitwise_when_dt_divides() {
        let u0 = MicroState::new(vec![0.7, -0.2]);
        let (s, t, dt) = (0.13, 0.49, 1e-2);
        let direct = integrate(&Harmonic, &u0, s + t, dt).unwrap();
        let composed = integrate(&Harmonic, &integrate(&Harmonic, &u0, s, dt).unwrap(), t, dt).unwrap();
        // dt divides s and t, so both paths take identical steps.
        assert_eq!(direct, composed);
    }

    #[test]
    fn fourth_order_convergence() {
        let exact = (-1.0f64).exp();
        let err = |dt: f64| {
            (integrate(&Decay, &MicroState::new(vec![1.0]), 1.0, dt)
                .unwrap()
                .coords[0]
                - exact)
                .abs()
        };
        let ratio = err(0.05) / err(0.025);
        assert!(
            (12.0..22.0).contains(&ratio),
            "halving dt should reduce error ~16x, got {ratio}"
        );
    }

    #[test]
    fn repeated_calls_byte_identical() {
        let u0 = MicroState::new(vec![0.3, 0.9]);
        let a = integrate(&Harmonic, &u0, 1.7, 1e-2).unwrap();
        let b = integrate(&Harmonic, &u0, 1.7, 1e-2).unwrap();
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn blowup_reports_failure_time() {
        let err = integrate(&Explode, &MicroState::new(vec![1.0]), 2.0, 1e-3).unwrap_err();
        match err {
            EqFreeError::Blowup { time } => {
                assert!(time <= 1.1, "blow-up reported at t = {time}, expected near 1");
            }
            other => panic!("expected blow-up error, got {other}"),
        }
    }

    #[test]
    fn observed_integration_matches_plain() {
        let u0 = MicroState::new(vec![1.0, 0.0]);
        let mut samples = Vec::new();
        let a = integrate_observed(&Harmonic, &u0, 0.5, 1e-2, |t, u| samples.push((t, u[0])))
            .unwrap();
        let b = integrate(&Harmonic, &u0, 0.5, 1e-2).unwrap();
        assert_eq!(a, b);
        assert_eq!(samples.len(), 51);
        assert_eq!(samples[0], (0.0, 1.0));
    }

    #[test]
    fn parameter_set_require_reports_missing() {
        let p = ParameterSet::new().with("v0", 0.9);
        assert_eq!(p.require("v0").unwrap(), 0.9);
        assert!(p.require("tau").is_err());
    }
}
