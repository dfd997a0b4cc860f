//! Small closed-form systems used to validate the coarse machinery.
//!
//! Each system implements [`MicroSystem`] so the full lift-evolve-restrict
//! stack can be exercised against known answers: normal forms for fold,
//! pitchfork and Hopf bifurcations, simple linear decay, and a 2-D linear
//! slow-fast system with explicit eigenstructure. They are also reachable
//! from the CLI (`model = testsystem`).

use crate::coarse::OperatorPair;
use crate::error::EqFreeError;
use crate::micro::{MicroState, MicroSystem, ParameterSet};
use crate::MacroState;

/// Saddle-node normal form ẋ = p − x².
pub struct FoldSystem {
    pub p: f64,
}

impl MicroSystem for FoldSystem {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.p - u[0] * u[0];
    }
}

/// Quadratic family ẋ = p − x² + c with a second parameter shifting the fold.
pub struct ShiftedFoldSystem {
    pub p: f64,
    pub c: f64,
}

impl MicroSystem for ShiftedFoldSystem {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.p - u[0] * u[0] + self.c;
    }
}

/// Pitchfork normal form ẋ = p·x − x³.
pub struct PitchforkSystem {
    pub p: f64,
}

impl MicroSystem for PitchforkSystem {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.p * u[0] - u[0] * u[0] * u[0];
    }
}

/// Monotone stable family ẋ = p − x (equilibrium x = p, no events).
pub struct MonotoneSystem {
    pub p: f64,
}

impl MicroSystem for MonotoneSystem {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.p - u[0];
    }
}

/// Scalar linear decay ẋ = −rate·x.
pub struct LinearDecay {
    pub rate: f64,
}

impl MicroSystem for LinearDecay {
    fn dim(&self) -> usize {
        1
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = -self.rate * u[0];
    }
}

/// 2-D linear system with prescribed slow/fast eigenstructure.
///
/// Built as u̇ = P diag(−slow_rate, −fast_rate) P⁻¹ u with eigenvector
/// matrix P = [v_slow, v_fast]. The first coordinate is the macroscopic
/// observable, so `v_slow = (1, c)` makes the identity-like lifting
/// x ↦ x·v_slow exactly consistent on the slow subspace.
pub struct SlowFast {
    matrix: [[f64; 2]; 2],
    pub slow_rate: f64,
    pub fast_rate: f64,
    pub v_slow: [f64; 2],
    pub v_fast: [f64; 2],
}

impl SlowFast {
    pub fn new(slow_rate: f64, fast_rate: f64, v_slow: [f64; 2], v_fast: [f64; 2]) -> Self {
        let det = v_slow[0] * v_fast[1] - v_fast[0] * v_slow[1];
        assert!(det.abs() > 1e-12, "eigenvectors must be independent");
        // P Λ P⁻¹ with Λ = diag(-slow_rate, -fast_rate).
        let (ls, lf) = (-slow_rate, -fast_rate);
        let inv = [
            [v_fast[1] / det, -v_fast[0] / det],
            [-v_slow[1] / det, v_slow[0] / det],
        ];
        let mut m = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = v_slow[r] * ls * inv[0][c] + v_fast[r] * lf * inv[1][c];
            }
        }
        Self {
            matrix: m,
            slow_rate,
            fast_rate,
            v_slow,
            v_fast,
        }
    }

    /// Standard instance: slow rate 1, fast rate 100.
    pub fn standard() -> Self {
        Self::new(1.0, 100.0, [1.0, 0.5], [0.9, 1.0])
    }
}

impl MicroSystem for SlowFast {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.matrix[0][0] * u[0] + self.matrix[0][1] * u[1];
        out[1] = self.matrix[1][0] * u[0] + self.matrix[1][1] * u[1];
    }
}

/// Hopf normal form with rotation, radial part ṙ = (p1 − p2)·r − r³.
///
/// In Cartesian coordinates: ẋ = a·x − ω·y − x·r², ẏ = ω·x + a·y − y·r²
/// with a = p1 − p2. The trivial equilibrium loses stability at p1 = p2.
pub struct HopfNormalForm {
    pub p1: f64,
    pub p2: f64,
    pub omega: f64,
}

impl MicroSystem for HopfNormalForm {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        let a = self.p1 - self.p2;
        let r2 = u[0] * u[0] + u[1] * u[1];
        out[0] = a * u[0] - self.omega * u[1] - u[0] * r2;
        out[1] = self.omega * u[0] + a * u[1] - u[1] * r2;
    }
}

/// Identity operators for scalar systems whose state is already macroscopic.
pub struct IdentityOps;

impl OperatorPair for IdentityOps {
    fn macro_dim(&self) -> usize {
        1
    }
    fn lift(&self, x: &[f64]) -> Result<MicroState, EqFreeError> {
        Ok(MicroState::new(vec![x[0]]))
    }
    fn restrict(&self, u: &MicroState) -> Result<MacroState, EqFreeError> {
        Ok(vec![u.coords[0]])
    }
}

/// Lifting along a fixed direction in the 2-D slow-fast system; restriction
/// reads the first coordinate.
pub struct DirectionOps {
    pub direction: [f64; 2],
}

impl OperatorPair for DirectionOps {
    fn macro_dim(&self) -> usize {
        1
    }
    fn lift(&self, x: &[f64]) -> Result<MicroState, EqFreeError> {
        Ok(MicroState::new(vec![
            x[0] * self.direction[0],
            x[0] * self.direction[1],
        ]))
    }
    fn restrict(&self, u: &MicroState) -> Result<MacroState, EqFreeError> {
        Ok(vec![u.coords[0]])
    }
}

/// Radial operators for [`HopfNormalForm`]: lift r ↦ (r, 0), restrict to |u|.
pub struct RadialOps;

impl OperatorPair for RadialOps {
    fn macro_dim(&self) -> usize {
        1
    }
    fn lift(&self, x: &[f64]) -> Result<MicroState, EqFreeError> {
        Ok(MicroState::new(vec![x[0], 0.0]))
    }
    fn restrict(&self, u: &MicroState) -> Result<MacroState, EqFreeError> {
        Ok(vec![(u.coords[0] * u.coords[0] + u.coords[1] * u.coords[1]).sqrt()])
    }
}

/// Which normal form a [`TestFamily`] continues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestForm {
    Fold,
    ShiftedFold,
    Pitchfork,
    Monotone,
    Hopf,
}

impl TestForm {
    pub fn parse(name: &str) -> Result<Self, EqFreeError> {
        match name {
            "fold" => Ok(TestForm::Fold),
            "shifted-fold" => Ok(TestForm::ShiftedFold),
            "pitchfork" => Ok(TestForm::Pitchfork),
            "monotone" => Ok(TestForm::Monotone),
            "hopf" => Ok(TestForm::Hopf),
            other => Err(EqFreeError::Parameter(format!(
                "unknown test system form `{other}`"
            ))),
        }
    }
}

/// Parameterized family over the normal forms, for continuation runs and the
/// CLI's `testsystem` model. Parameter names: `p` (primary), `c` (secondary,
/// shifted fold), `p2` and `omega` (Hopf).
pub struct TestFamily {
    pub form: TestForm,
    pub params: ParameterSet,
}

impl TestFamily {
    pub fn new(form: TestForm, params: ParameterSet) -> Self {
        Self { form, params }
    }
}

impl crate::continuation::ProblemFamily for TestFamily {
    fn macro_dim(&self) -> usize {
        1
    }

    fn base_params(&self) -> ParameterSet {
        self.params.clone()
    }

    fn bind(
        &self,
        params: &ParameterSet,
    ) -> Result<crate::continuation::BoundProblem<'_>, EqFreeError> {
        let p = params.require("p")?;
        let (system, ops): (Box<dyn MicroSystem>, Box<dyn OperatorPair>) = match self.form {
            TestForm::Fold => (Box::new(FoldSystem { p }), Box::new(IdentityOps)),
            TestForm::ShiftedFold => (
                Box::new(ShiftedFoldSystem {
                    p,
                    c: params.get_or("c", 0.0),
                }),
                Box::new(IdentityOps),
            ),
            TestForm::Pitchfork => (Box::new(PitchforkSystem { p }), Box::new(IdentityOps)),
            TestForm::Monotone => (Box::new(MonotoneSystem { p }), Box::new(IdentityOps)),
            TestForm::Hopf => (
                Box::new(HopfNormalForm {
                    p1: p,
                    p2: params.get_or("p2", 0.0),
                    omega: params.get_or("omega", 1.0),
                }),
                Box::new(RadialOps),
            ),
        };
        Ok(crate::continuation::BoundProblem { system, ops })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::integrate;
    use approx::assert_abs_diff_eq;

    #[test]
    fn slow_fast_matrix_has_prescribed_eigenstructure() {
        let sys = SlowFast::standard();
        // A v_slow = -1 v_slow, A v_fast = -100 v_fast.
        let mut out = [0.0; 2];
        sys.rhs(&sys.v_slow, &mut out);
        assert_abs_diff_eq!(out[0], -sys.v_slow[0], epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -sys.v_slow[1], epsilon = 1e-12);
        sys.rhs(&sys.v_fast, &mut out);
        assert_abs_diff_eq!(out[0], -100.0 * sys.v_fast[0], epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -100.0 * sys.v_fast[1], epsilon = 1e-12);
    }

    #[test]
    fn hopf_radial_dynamics() {
        // Above onset (a = 0.5) the radius converges to sqrt(a).
        let sys = HopfNormalForm {
            p1: 0.5,
            p2: 0.0,
            omega: 1.0,
        };
        let u = integrate(&sys, &MicroState::new(vec![0.1, 0.0]), 40.0, 1e-2).unwrap();
        let r = (u.coords[0].powi(2) + u.coords[1].powi(2)).sqrt();
        assert_abs_diff_eq!(r, 0.5f64.sqrt(), epsilon = 1e-6);
    }
}
