//! The macroscopic time stepper and the coarse analysis built on it.
//!
//! Given a lifting operator L, a restriction operator R and the microscopic
//! stepper M, the explicit macroscopic stepper is Φ̃(t; x) = R M(t; L x).
//! The implicit stepper instead defines Φ(t; x) as the solution y of
//!
//! ```text
//!     R M(t_skip; L y) = R M(t_skip + t; L x),
//! ```
//!
//! which removes the sensitivity to lifting errors: both sides are compared
//! only after a healing time `t_skip` during which fast transients decay onto
//! the slow manifold. Coarse equilibria, their stability (a generalized
//! eigenvalue problem between the two burst Jacobians), projective
//! integration, restriction matching and the time-scale-separation diagnostic
//! all reduce to a handful of lift-evolve-restrict bursts plus Newton solves.

use crate::error::EqFreeError;
use crate::micro::{integrate, MicroState, MicroSystem};
use crate::newton::{self, NewtonOptions};
use crate::{par, MacroState};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// The lifting map L: R^n → R^N and restriction map R: R^N → R^n for one
/// model at one parameter point.
///
/// Consistency R∘L = id is *not* required: the implicit stepper exists
/// precisely because lifting is imperfect.
pub trait OperatorPair: Sync {
    fn macro_dim(&self) -> usize;

    /// Construct a microscopic state realizing the macroscopic value `x`.
    fn lift(&self, x: &[f64]) -> Result<MicroState, EqFreeError>;

    /// Reduce a microscopic state to its macroscopic value.
    fn restrict(&self, u: &MicroState) -> Result<MacroState, EqFreeError>;
}

/// Timing and solver settings for the equation-free operations.
#[derive(Debug, Clone, Copy)]
pub struct EqFreeConfig {
    /// Healing time discarded after every lift.
    pub t_skip: f64,
    /// Evolve time for the fixed-point maps (same order as `t_skip` is a
    /// good choice).
    pub t0: f64,
    /// Short burst length for coarse derivative estimates.
    pub delta: f64,
    /// Forward-difference step, relative to the macro scale.
    pub fd_step: f64,
    /// Absolute floor for the forward-difference step.
    pub fd_floor: f64,
    /// Residual tolerance of the Newton iterations.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Micro integrator step size.
    pub dt: f64,
}

impl Default for EqFreeConfig {
    fn default() -> Self {
        Self {
            t_skip: 1.0,
            t0: 1.0,
            delta: 0.1,
            fd_step: 1e-4,
            fd_floor: 1e-6,
            newton_tol: 1e-9,
            newton_max_iter: 40,
            dt: 1e-2,
        }
    }
}

impl EqFreeConfig {
    pub fn validate(&self) -> Result<(), EqFreeError> {
        let checks = [
            ("t_skip", self.t_skip),
            ("t0", self.t0),
            ("delta", self.delta),
            ("fd_step", self.fd_step),
            ("fd_floor", self.fd_floor),
            ("newton_tol", self.newton_tol),
            ("dt", self.dt),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EqFreeError::Parameter(format!(
                    "config field `{name}` must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            fd_step: self.fd_step,
            fd_floor: self.fd_floor,
            max_backtrack: 8,
        }
    }
}

/// R M(t1; L x) and R M(t2; L x) from a single integration, t1 ≤ t2.
pub fn lift_evolve_restrict2(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x: &[f64],
    t1: f64,
    t2: f64,
) -> Result<(MacroState, MacroState), EqFreeError> {
    debug_assert!(t1 <= t2);
    let u = ops.lift(x)?;
    let u1 = integrate(system, &u, t1, cfg.dt)?;
    let r1 = ops.restrict(&u1)?;
    let u2 = integrate(system, &u1, t2 - t1, cfg.dt)?;
    let r2 = ops.restrict(&u2)?;
    Ok((r1, r2))
}

/// The explicit macroscopic time stepper Φ̃(t; x) = R M(t; L x).
pub fn phi_explicit(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    t: f64,
    x: &[f64],
) -> Result<MacroState, EqFreeError> {
    let u = ops.lift(x)?;
    let ut = integrate(system, &u, t, cfg.dt)?;
    ops.restrict(&ut)
}

/// The implicit macroscopic time stepper: the solution y of
/// R M(t_skip; L y) = R M(t_skip + t; L x), with the Newton iteration
/// seeded at y = x.
pub fn phi_implicit(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    t: f64,
    x: &[f64],
) -> Result<MacroState, EqFreeError> {
    let (_, target) = lift_evolve_restrict2(system, ops, cfg, x, cfg.t_skip, cfg.t_skip + t)?;
    let f = |y: &[f64]| -> Result<Vec<f64>, EqFreeError> {
        let ry = phi_explicit(system, ops, cfg, cfg.t_skip, y)?;
        Ok(ry.iter().zip(&target).map(|(a, b)| a - b).collect())
    };
    let (y, _) = newton::solve(&f, x, &cfg.newton_options())?;
    Ok(y)
}

/// A coarse equilibrium together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// The solver unknown x.
    pub unhealed: MacroState,
    /// R M(t_skip; L x) — the lifting-independent value to report.
    pub healed: MacroState,
    pub iterations: usize,
    pub residual: f64,
}

/// Residual of the coarse fixed-point equation,
/// g(x) = R M(t_skip + t0; L x) − R M(t_skip; L x).
pub fn equilibrium_residual(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x: &[f64],
) -> Result<Vec<f64>, EqFreeError> {
    let (r_skip, r_total) =
        lift_evolve_restrict2(system, ops, cfg, x, cfg.t_skip, cfg.t_skip + cfg.t0)?;
    Ok(r_total.iter().zip(&r_skip).map(|(a, b)| a - b).collect())
}

/// Find a coarse equilibrium: solve R M(t_skip + t0; L x) = R M(t_skip; L x)
/// by Newton from `x_guess`. Returns both the solver unknown (unhealed) and
/// the healed value — branches are reported in healed values.
pub fn find_equilibrium(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x_guess: &[f64],
) -> Result<Equilibrium, EqFreeError> {
    let f = |x: &[f64]| equilibrium_residual(system, ops, cfg, x);
    let (x, report) = newton::solve(&f, x_guess, &cfg.newton_options())?;
    let (healed, _) = lift_evolve_restrict2(system, ops, cfg, &x, cfg.t_skip, cfg.t_skip)?;
    Ok(Equilibrium {
        unhealed: x,
        healed,
        iterations: report.iterations,
        residual: report.residual,
    })
}

/// The two burst Jacobians at a point, plus the base burst values.
///
/// `a = ∂/∂x R M(t_skip + t0; L x)` and `b = ∂/∂x R M(t_skip; L x)`, both by
/// forward differences with independent columns. Shared by stability
/// analysis, the continuation corrector and the fold test function
/// (a − b = ∂g/∂x).
#[derive(Debug, Clone)]
pub struct BurstMatrices {
    pub r_skip: MacroState,
    pub r_total: MacroState,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

pub fn burst_matrices(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x: &[f64],
) -> Result<BurstMatrices, EqFreeError> {
    let n = ops.macro_dim();
    // Base burst plus one perturbed burst per macro component, all independent.
    let bursts: Vec<Result<(MacroState, MacroState), EqFreeError>> =
        par::map_indexed(n + 1, |k| {
            if k == 0 {
                lift_evolve_restrict2(system, ops, cfg, x, cfg.t_skip, cfg.t_skip + cfg.t0)
            } else {
                let j = k - 1;
                let h = (cfg.fd_step * x[j].abs()).max(cfg.fd_floor);
                let mut xj = x.to_vec();
                xj[j] += h;
                lift_evolve_restrict2(system, ops, cfg, &xj, cfg.t_skip, cfg.t_skip + cfg.t0)
            }
        });
    let mut it = bursts.into_iter();
    let (r_skip, r_total) = it.next().unwrap()?;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for (j, burst) in it.enumerate() {
        let (rs_j, rt_j) = burst?;
        let h = (cfg.fd_step * x[j].abs()).max(cfg.fd_floor);
        for i in 0..n {
            a[(i, j)] = (rt_j[i] - r_total[i]) / h;
            b[(i, j)] = (rs_j[i] - r_skip[i]) / h;
        }
    }
    Ok(BurstMatrices {
        r_skip,
        r_total,
        a,
        b,
    })
}

/// Eigenvalues of the generalized problem A v = λ B v, solved as eig(B⁻¹A).
///
/// Valid for the small macro dimensions used here; an ill-conditioned B is
/// reported as an error naming the weakest column rather than silently
/// regularized.
pub fn generalized_eigenvalues(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<Vec<Complex64>, EqFreeError> {
    let weakest_column = || {
        (0..b.ncols())
            .min_by(|&i, &j| {
                let ni = b.column(i).amax();
                let nj = b.column(j).amax();
                ni.partial_cmp(&nj).unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|c| c)
    };
    let lu = b.clone().lu();
    let c = lu
        .solve(a)
        .ok_or_else(|| EqFreeError::SingularMatrix {
            column: weakest_column(),
        })?;
    if !c.iter().all(|v| v.is_finite()) {
        return Err(EqFreeError::SingularMatrix {
            column: weakest_column(),
        });
    }
    Ok(c.complex_eigenvalues().iter().copied().collect())
}

/// Coarse stability of an equilibrium: the eigenvalues λ of A v = λ B v.
/// |λ| < 1 for all λ corresponds to stability.
pub fn stability(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x_eq: &[f64],
) -> Result<Vec<Complex64>, EqFreeError> {
    let m = burst_matrices(system, ops, cfg, x_eq)?;
    generalized_eigenvalues(&m.a, &m.b)
}

/// A projective-integration failure carrying the part of the trajectory
/// computed before the corrector diverged.
#[derive(Debug, Clone)]
pub struct ProjectiveError {
    pub completed: Vec<MacroState>,
    pub failed_step: usize,
    pub source: EqFreeError,
}

impl std::fmt::Display for ProjectiveError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "projective integration failed at step {} after {} points: {}",
            self.failed_step,
            self.completed.len(),
            self.source
        )
    }
}

impl std::error::Error for ProjectiveError {}

/// Projective integration of the coarse dynamics with an implicit Euler-type
/// update. Each step estimates
///
/// ```text
///     F(x_k) = [R M(t_skip + δ; L x_k) − R M(t_skip; L x_k)] / δ
/// ```
///
/// and solves R M(t_skip; L x_{k+1}) − R M(t_skip; L x_k) = dt_macro·F(x_k)
/// for x_{k+1}. `dt_macro` may exceed δ by orders of magnitude and may be
/// negative (integration backward in time). Returns the trajectory
/// [x_0, …, x_{n_steps}].
pub fn projective_integrate(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x0: &[f64],
    dt_macro: f64,
    n_steps: usize,
) -> Result<Vec<MacroState>, ProjectiveError> {
    let mut trajectory = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for step in 0..n_steps {
        match projective_step(system, ops, cfg, &x, dt_macro) {
            Ok(next) => {
                trajectory.push(next.clone());
                x = next;
            }
            Err(source) => {
                return Err(ProjectiveError {
                    completed: trajectory,
                    failed_step: step,
                    source,
                });
            }
        }
    }
    Ok(trajectory)
}

fn projective_step(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x: &[f64],
    dt_macro: f64,
) -> Result<MacroState, EqFreeError> {
    let (r_skip, r_delta) =
        lift_evolve_restrict2(system, ops, cfg, x, cfg.t_skip, cfg.t_skip + cfg.delta)?;
    let n = x.len();
    let mut target = vec![0.0; n];
    let mut seed = vec![0.0; n];
    for i in 0..n {
        let fi = (r_delta[i] - r_skip[i]) / cfg.delta;
        target[i] = r_skip[i] + dt_macro * fi;
        seed[i] = x[i] + dt_macro * fi;
    }
    let f = |y: &[f64]| -> Result<Vec<f64>, EqFreeError> {
        let ry = phi_explicit(system, ops, cfg, cfg.t_skip, y)?;
        Ok(ry.iter().zip(&target).map(|(a, b)| a - b).collect())
    };
    let (y, _) = newton::solve(&f, &seed, &cfg.newton_options())?;
    Ok(y)
}

/// Find a realistic microscopic state with a prescribed macroscopic value:
/// solve R M(t_skip; L y) = x_target for y and return u = M(t_skip; L y),
/// a state on which rapid transients have already settled.
pub fn match_restriction(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    x_target: &[f64],
) -> Result<MicroState, EqFreeError> {
    let f = |y: &[f64]| -> Result<Vec<f64>, EqFreeError> {
        let ry = phi_explicit(system, ops, cfg, cfg.t_skip, y)?;
        Ok(ry.iter().zip(x_target).map(|(a, b)| a - b).collect())
    };
    let (y, _) = newton::solve(&f, x_target, &cfg.newton_options())?;
    let u = ops.lift(&y)?;
    integrate(system, &u, cfg.t_skip, cfg.dt)
}

/// Sampled divergence profile between two microscopic states, with fitted
/// exponents from log-linear regression.
#[derive(Debug, Clone)]
pub struct HealingDiagnostic {
    /// Sample offsets t (the samples are taken at absolute time t_skip + t).
    pub times: Vec<f64>,
    /// d(t) = |R M(t_skip + t; u0) − R M(t_skip + t; u1)|.
    pub divergence: Vec<f64>,
    /// Fitted macroscopic growth rate ε̂ (slope of log d).
    pub epsilon_hat: Option<f64>,
    /// Fitted healing rate γ̂, from the intercept via d ≈ exp(ε̂ t − γ̂ t_skip)
    /// with an order-unity prefactor.
    pub gamma_hat: Option<f64>,
}

impl HealingDiagnostic {
    /// The fitted bound exp(ε̂ t − γ̂ t_skip) evaluated at offset `t`.
    pub fn fitted(&self, t: f64, t_skip: f64) -> Option<f64> {
        match (self.epsilon_hat, self.gamma_hat) {
            (Some(e), Some(g)) => Some((e * t - g * t_skip).exp()),
            _ => None,
        }
    }
}

/// Measure how fast two microscopic preparations of (approximately) the same
/// macroscopic state diverge after healing.
///
/// Both states are evolved by t_skip, then the restriction difference is
/// sampled every `sample_dt` over [0, horizon]. A log-linear fit of the
/// profile gives the growth rate ε̂ and, assuming the order-unity prefactor
/// of the separation-of-time-scales bound, the healing rate
/// γ̂ = −intercept / t_skip. This supports choosing t_skip for a given
/// problem; the fits are `None` when the profile is identically zero.
pub fn healing_diagnostic(
    system: &dyn MicroSystem,
    ops: &dyn OperatorPair,
    cfg: &EqFreeConfig,
    u0: &MicroState,
    u1: &MicroState,
    horizon: f64,
    sample_dt: f64,
) -> Result<HealingDiagnostic, EqFreeError> {
    assert!(sample_dt > 0.0 && horizon >= 0.0);
    let mut a = integrate(system, u0, cfg.t_skip, cfg.dt)?;
    let mut b = integrate(system, u1, cfg.t_skip, cfg.dt)?;
    let n_samples = (horizon / sample_dt).round() as usize;
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut divergence = Vec::with_capacity(n_samples + 1);
    for k in 0..=n_samples {
        let ra = ops.restrict(&a)?;
        let rb = ops.restrict(&b)?;
        let d = ra
            .iter()
            .zip(&rb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        times.push(k as f64 * sample_dt);
        divergence.push(d);
        if k < n_samples {
            a = integrate(system, &a, sample_dt, cfg.dt)?;
            b = integrate(system, &b, sample_dt, cfg.dt)?;
        }
    }

    // Log-linear regression over samples comfortably above underflow.
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&divergence)
        .filter(|(_, d)| **d > 1e-280)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    let (epsilon_hat, gamma_hat) = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 0.0 {
            let slope = (n * sxy - sx * sy) / denom;
            let intercept = (sy - slope * sx) / n;
            (Some(slope), Some(-intercept / cfg.t_skip))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };

    Ok(HealingDiagnostic {
        times,
        divergence,
        epsilon_hat,
        gamma_hat,
    })
}
