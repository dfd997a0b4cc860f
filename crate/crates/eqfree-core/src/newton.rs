//! Damped Newton iteration with forward-difference Jacobians.
//!
//! Shared by the implicit time stepper, equilibrium finding and the
//! continuation correctors. Jacobian columns are independent simulation
//! bursts and are evaluated through [`crate::par`], so they run concurrently
//! under the `parallel` feature.

use crate::error::EqFreeError;
use crate::par;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Residual norm at which the iteration is accepted.
    pub tol: f64,
    pub max_iter: usize,
    /// Forward-difference step, relative to the magnitude of each unknown.
    pub fd_step: f64,
    /// Absolute floor for the forward-difference step.
    pub fd_floor: f64,
    /// Backtracking halvings tried when a full step fails to reduce the
    /// residual norm.
    pub max_backtrack: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Forward-difference Jacobian of `f` at `y`, given `fy = f(y)`.
///
/// Column steps are max(fd_step·|y_i|, fd_floor); columns evaluate in
/// parallel.
pub fn fd_jacobian<F>(
    f: &F,
    y: &[f64],
    fy: &[f64],
    opts: &NewtonOptions,
) -> Result<DMatrix<f64>, EqFreeError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, EqFreeError> + Sync,
{
    let n = y.len();
    let m = fy.len();
    let cols: Vec<Result<Vec<f64>, EqFreeError>> = par::map_indexed(n, |j| {
        let h = (opts.fd_step * y[j].abs()).max(opts.fd_floor);
        let mut yj = y.to_vec();
        yj[j] += h;
        let fj = f(&yj)?;
        Ok(fj.iter().zip(fy).map(|(a, b)| (a - b) / h).collect())
    });
    let mut jac = DMatrix::zeros(m, n);
    for (j, col) in cols.into_iter().enumerate() {
        let col = col?;
        for i in 0..m {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

/// Solve f(y) = 0 by damped Newton iteration seeded at `y0`.
///
/// Accepts when the residual norm drops to `opts.tol`. A full Newton step
/// that fails to decrease the residual is halved up to `max_backtrack`
/// times; if no halving helps, or the iteration budget runs out, the solve
/// fails with the final residual attached.
pub fn solve<F>(
    f: &F,
    y0: &[f64],
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, NewtonReport), EqFreeError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, EqFreeError> + Sync,
{
    let mut y = y0.to_vec();
    let mut fy = f(&y)?;
    let mut res = norm(&fy);

    for iter in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok((
                y,
                NewtonReport {
                    iterations: iter,
                    residual: res,
                },
            ));
        }
        let jac = fd_jacobian(f, &y, &fy, opts)?;
        let rhs = DVector::from_iterator(fy.len(), fy.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or(EqFreeError::SingularMatrix { column: None })?;
        if !step.iter().all(|v| v.is_finite()) {
            return Err(EqFreeError::SingularMatrix { column: None });
        }

        let mut accepted = false;
        let mut damping = 1.0;
        for _ in 0..=opts.max_backtrack {
            let trial: Vec<f64> = y
                .iter()
                .zip(step.iter())
                .map(|(yi, si)| yi + damping * si)
                .collect();
            match f(&trial) {
                Ok(ft) => {
                    let rt = norm(&ft);
                    if rt < res || rt <= opts.tol {
                        y = trial;
                        fy = ft;
                        res = rt;
                        accepted = true;
                        break;
                    }
                }
                // A trial outside the lifting domain is treated like a
                // residual increase: back off and retry.
                Err(e) if e.is_recoverable() => {}
                Err(e) => return Err(e),
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(EqFreeError::NewtonDiverged {
                residual: res,
                iterations: iter + 1,
            });
        }
    }

    if res <= opts.tol {
        Ok((
            y,
            NewtonReport {
                iterations: opts.max_iter,
                residual: res,
            },
        ))
    } else {
        Err(EqFreeError::NewtonDiverged {
            residual: res,
            iterations: opts.max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const OPTS: NewtonOptions = NewtonOptions {
        tol: 1e-12,
        max_iter: 50,
        fd_step: 1e-7,
        fd_floor: 1e-9,
        max_backtrack: 8,
    };

    #[test]
    fn scalar_root() {
        let f = |y: &[f64]| Ok(vec![y[0] * y[0] - 2.0]);
        let (y, rep) = solve(&f, &[1.0], &OPTS).unwrap();
        assert_abs_diff_eq!(y[0], 2f64.sqrt(), epsilon = 1e-10);
        assert!(rep.residual <= 1e-12);
    }

    #[test]
    fn coupled_system() {
        // x² + y² = 1, y = x  →  (1/√2, 1/√2).
        let f = |y: &[f64]| Ok(vec![y[0] * y[0] + y[1] * y[1] - 1.0, y[1] - y[0]]);
        let (y, _) = solve(&f, &[0.8, 0.6], &OPTS).unwrap();
        assert_abs_diff_eq!(y[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-9);
    }

    #[test]
    fn seed_already_converged_returns_immediately() {
        let f = |y: &[f64]| Ok(vec![y[0] - 1.0]);
        let (y, rep) = solve(&f, &[1.0], &OPTS).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn divergence_reports_final_residual() {
        // No real root: x² + 1 = 0.
        let f = |y: &[f64]| Ok(vec![y[0] * y[0] + 1.0]);
        match solve(&f, &[1.0], &OPTS) {
            Err(EqFreeError::NewtonDiverged { residual, .. }) => assert!(residual >= 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
