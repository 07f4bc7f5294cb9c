//! Noise-free observability and constructability matrices and Gramians.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::info::{Direction, SymmetricInfoMatrix};
use crate::linalg::{lu_solve, numerical_rank, sym_eigenvalues, vstack};
use crate::system::TimeVaryingLinearSystem;

/// Singular values below this fraction of `σ_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackDirection {
    /// Rows `C_τ Φ_{τ,0}`, `τ = 0..w`.
    FromInitial,
    /// Rows `C_{N−τ} Φ_{N−τ,N}`, `τ = 0..w`.
    FromFinal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedOutputMatrix {
    pub matrix: DMatrix<f64>,
    pub direction: StackDirection,
    pub window: usize,
    /// Index of the state the rows are expressed in.
    pub anchor: usize,
}

impl StackedOutputMatrix {
    pub fn rank(&self) -> usize {
        numerical_rank(&self.matrix, RANK_TOL)
    }

    pub fn is_full_column_rank(&self) -> bool {
        self.rank() == self.matrix.ncols()
    }
}

pub(crate) fn check_window(sys: &TimeVaryingLinearSystem, w: usize) -> Result<()> {
    let max = sys.horizon() + 1;
    if w < 1 || w > max {
        return Err(Error::Window { w, min: 1, max });
    }
    Ok(())
}

/// `C_τ Φ_{τ,0}` for `τ = 0..w`.
pub(crate) fn observability_blocks(sys: &TimeVaryingLinearSystem, w: usize) -> Vec<DMatrix<f64>> {
    let n = sys.state_dim();
    let mut transition = DMatrix::identity(n, n);
    let mut blocks = Vec::with_capacity(w);
    for tau in 0..w {
        if tau > 0 {
            transition = sys.phi(tau - 1) * transition;
        }
        blocks.push(sys.c(tau) * &transition);
    }
    blocks
}

/// `C_{N−τ} Φ_{N,N−τ}^{-1}` for `τ = 0..w`, each by a linear solve.
pub(crate) fn constructability_blocks(sys: &TimeVaryingLinearSystem, w: usize) -> Result<Vec<DMatrix<f64>>> {
    let n = sys.state_dim();
    let big_n = sys.horizon();
    let mut transition = DMatrix::identity(n, n);
    let mut blocks = Vec::with_capacity(w);
    for tau in 0..w {
        let k = big_n - tau;
        if tau > 0 {
            // Φ_{N,k} = Φ_{N,k+1} Φ_{k+1,k}
            transition *= sys.phi(k);
        }
        let block = lu_solve(&transition.transpose(), &sys.c(k).transpose())
            .ok_or_else(|| Error::Singular {
                what: format!("state transition Φ_{{{big_n},{k}}}"),
            })?
            .transpose();
        blocks.push(block);
    }
    Ok(blocks)
}

/// Observability matrix `𝒪_w^{x0}`, rows in forward time from `C_0`.
pub fn observability_matrix(sys: &TimeVaryingLinearSystem, w: usize) -> Result<StackedOutputMatrix> {
    check_window(sys, w)?;
    Ok(StackedOutputMatrix {
        matrix: vstack(&observability_blocks(sys, w)),
        direction: StackDirection::FromInitial,
        window: w,
        anchor: 0,
    })
}

/// Constructability matrix `𝒪_w^{xN}`, rows in reverse time from `C_N`.
pub fn constructability_matrix(sys: &TimeVaryingLinearSystem, w: usize) -> Result<StackedOutputMatrix> {
    check_window(sys, w)?;
    Ok(StackedOutputMatrix {
        matrix: vstack(&constructability_blocks(sys, w)?),
        direction: StackDirection::FromFinal,
        window: w,
        anchor: sys.horizon(),
    })
}

/// `𝒪ᵀ𝒪`.
pub fn deterministic_gramian(m: &StackedOutputMatrix) -> SymmetricInfoMatrix {
    let g = m.matrix.transpose() * &m.matrix;
    let direction = match m.direction {
        StackDirection::FromInitial => Direction::Forward,
        StackDirection::FromFinal => Direction::Reverse,
    };
    SymmetricInfoMatrix::from_raw(g, m.window, m.anchor, direction)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnobservabilityMeasures {
    /// `λ_max / λ_min`, infinite when `λ_min ≤ 0`.
    pub condition_number: f64,
    /// `1 / λ_min`, infinite when `λ_min ≤ 0`.
    pub inverse_min_eigenvalue: f64,
}

pub fn unobservability_measures(g: &SymmetricInfoMatrix) -> UnobservabilityMeasures {
    let ev = sym_eigenvalues(g.matrix());
    let (min, max) = (ev[0], ev[ev.len() - 1]);
    if min <= 0.0 {
        return UnobservabilityMeasures {
            condition_number: f64::INFINITY,
            inverse_min_eigenvalue: f64::INFINITY,
        };
    }
    UnobservabilityMeasures {
        condition_number: max / min,
        inverse_min_eigenvalue: 1.0 / min,
    }
}
