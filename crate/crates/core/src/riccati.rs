//! Steady-state LTI observability Gramian.
//!
//! The LTI observability recursion converges to the fixed point of
//!
//! ```text
//! F = −ΦᵀQ⁻¹(F + Q⁻¹)⁻¹Q⁻¹Φ + ΦᵀQ⁻¹Φ + CᵀR⁻¹C                (first form)
//!   = ΦᵀFΦ − ΦᵀF(F + Q⁻¹)⁻¹(ΦᵀF)ᵀ + CᵀR⁻¹C                    (second form)
//! ```
//!
//! which is found here by plain fixed-point iteration from `F₁ = CᵀR⁻¹C`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::info::{Direction, SymmetricInfoMatrix};
use crate::linalg::cholesky_sym;
use crate::recursive::{backward_step, measurement_info, process_info};
use crate::system::TimeInvariantLinearSystem;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct DareSolution {
    pub f_inf: SymmetricInfoMatrix,
    /// Number of recursion steps applied after `F₁`.
    pub iterations: usize,
    /// `‖RHS(F) − F‖_F` of the second form at `f_inf`.
    pub residual: f64,
    pub converged: bool,
}

/// Iterates the observability recursion until
/// `‖F_{k+1} − F_k‖_F ≤ tol · max(1, ‖F_k‖_F)` or `max_iter` steps.
///
/// Running out of iterations is not an error: the last iterate is returned
/// with `converged = false`.
pub fn solve_dare_fixed_point(sys: &TimeInvariantLinearSystem, tol: f64, max_iter: usize) -> Result<DareSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Unsupported(format!("tolerance must be positive, got {tol}")));
    }
    let q_inv = process_info(sys.q(), 0)?;
    let meas = measurement_info(sys.c(), sys.r(), 0)?;
    let mut f = meas.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = backward_step(&f, sys.phi(), &q_inv, &meas, iterations)?;
        let delta = (&next - &f).norm();
        let scale = f.norm().max(1.0);
        f = next;
        iterations += 1;
        if delta <= tol * scale {
            converged = true;
            break;
        }
        if !delta.is_finite() {
            break;
        }
    }
    let residual = riccati_residual_with(sys, &f, &q_inv, &meas)?;
    Ok(DareSolution {
        f_inf: SymmetricInfoMatrix::symmetric(f, iterations + 1, 0, Direction::Forward),
        iterations,
        residual,
        converged,
    })
}

fn inner_factor(f: &DMatrix<f64>, q_inv: &DMatrix<f64>) -> Result<crate::linalg::Cholesky> {
    cholesky_sym(&(f + q_inv)).map_err(|pivot| Error::Conditioning {
        what: "F + Q⁻¹",
        step: 0,
        pivot,
    })
}

/// Right-hand side of the first displayed form.
pub fn riccati_rhs_first_form(sys: &TimeInvariantLinearSystem, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q_inv = process_info(sys.q(), 0)?;
    let meas = measurement_info(sys.c(), sys.r(), 0)?;
    let inner = inner_factor(f, &q_inv)?;
    let t = &q_inv * sys.phi();
    Ok(-(t.transpose() * inner.solve(&t)) + sys.phi().transpose() * &t + meas)
}

fn rhs_second_form(
    sys: &TimeInvariantLinearSystem,
    f: &DMatrix<f64>,
    q_inv: &DMatrix<f64>,
    meas: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let inner = inner_factor(f, q_inv)?;
    let phi = sys.phi();
    let pf = phi.transpose() * f;
    Ok(&pf * phi - &pf * inner.solve(&pf.transpose()) + meas)
}

/// Right-hand side of the second displayed form.
pub fn riccati_rhs_second_form(sys: &TimeInvariantLinearSystem, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q_inv = process_info(sys.q(), 0)?;
    let meas = measurement_info(sys.c(), sys.r(), 0)?;
    rhs_second_form(sys, f, &q_inv, &meas)
}

fn riccati_residual_with(
    sys: &TimeInvariantLinearSystem,
    f: &DMatrix<f64>,
    q_inv: &DMatrix<f64>,
    meas: &DMatrix<f64>,
) -> Result<f64> {
    Ok((rhs_second_form(sys, f, q_inv, meas)? - f).norm())
}

/// Frobenius norm of the Riccati defect (second form) at `f`.
pub fn riccati_residual(sys: &TimeInvariantLinearSystem, f: &SymmetricInfoMatrix) -> Result<f64> {
    Ok((riccati_rhs_second_form(sys, f.matrix())? - f.matrix()).norm())
}

/// Riccati defect evaluated with the first form.
pub fn riccati_residual_first_form(sys: &TimeInvariantLinearSystem, f: &SymmetricInfoMatrix) -> Result<f64> {
    Ok((riccati_rhs_first_form(sys, f.matrix())? - f.matrix()).norm())
}
