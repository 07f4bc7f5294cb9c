//! Observability/constructability dual systems.
//!
//! For a horizon-`N` system the dual reverses time and inverts the dynamics:
//!
//! ```text
//! Φ̄_{N−k,N−k−1} = Φ_{k+1,k}^{-1}
//! Q̄_{N−k−1}     = Φ_{k+1,k}^{-1} Q_k Φ_{k+1,k}^{-ᵀ}
//! C̄_{N−k} = C_k,  R̄_{N−k} = R_k
//! ```
//!
//! With `w = N + 1`, the dual's constructability Gramian equals the
//! original's observability Gramian and vice versa. The relation is tied to
//! the window: a different `w` needs a dual of the truncated horizon.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_sym, lu_solve, symmetrize};
use crate::system::{TimeInvariantLinearSystem, TimeVaryingLinearSystem};

#[derive(Debug, Clone)]
pub struct DualSystemMap<'a> {
    pub original: &'a TimeVaryingLinearSystem,
    pub dual: TimeVaryingLinearSystem,
    /// Always `N + 1`.
    pub window: usize,
}

fn singular(k: usize) -> Error {
    Error::Singular {
        what: format!("Φ_{{{},{k}}}", k + 1),
    }
}

/// `Φ^{-1} Q Φ^{-ᵀ}` as two solves, then symmetrised.
fn transformed_noise(phi: &DMatrix<f64>, q: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let x = lu_solve(phi, &q.transpose()).ok_or_else(|| singular(k))?;
    let y = lu_solve(phi, &x.transpose()).ok_or_else(|| singular(k))?;
    Ok(symmetrize(&y))
}

fn require_pd(q: &DMatrix<f64>, k: usize) -> Result<()> {
    cholesky_sym(q).map_err(|pivot| Error::NotPositiveDefinite {
        what: format!("process noise Q_{k} (dual systems need Q ≻ 0)"),
        pivot,
    })?;
    Ok(())
}

/// Time-varying dual over the full horizon (`w = N + 1`).
pub fn dual_ltv(sys: &TimeVaryingLinearSystem) -> Result<DualSystemMap<'_>> {
    let big_n = sys.horizon();
    let n = sys.state_dim();
    let mut phi = vec![DMatrix::zeros(n, n); big_n];
    let mut q = vec![DMatrix::zeros(n, n); big_n];
    for k in 0..big_n {
        require_pd(sys.q(k), k)?;
        let inv = lu_solve(sys.phi(k), &DMatrix::identity(n, n)).ok_or_else(|| singular(k))?;
        // Φ̄_{N−k,N−k−1} lives at index N−k−1.
        phi[big_n - k - 1] = inv;
        q[big_n - k - 1] = transformed_noise(sys.phi(k), sys.q(k), k)?;
    }
    let c = (0..=big_n).map(|j| sys.c(big_n - j).clone()).collect();
    let r = (0..=big_n).map(|j| sys.r(big_n - j).clone()).collect();
    Ok(DualSystemMap {
        original: sys,
        dual: TimeVaryingLinearSystem::new(phi, c, q, r)?,
        window: big_n + 1,
    })
}

/// Time-invariant dual `(Φ^{-1}, C, Φ^{-1} Q Φ^{-ᵀ}, R)`, valid for every window.
pub fn dual_lti(sys: &TimeInvariantLinearSystem) -> Result<TimeInvariantLinearSystem> {
    let n = sys.state_dim();
    require_pd(sys.q(), 0)?;
    let phi = lu_solve(sys.phi(), &DMatrix::identity(n, n)).ok_or_else(|| singular(0))?;
    let q = transformed_noise(sys.phi(), sys.q(), 0)?;
    TimeInvariantLinearSystem::new(phi, sys.c().clone(), q, sys.r().clone())
}
