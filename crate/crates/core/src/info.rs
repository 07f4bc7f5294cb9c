//! Fisher information / Gramian values and their window metadata.

use nalgebra::DMatrix;

use crate::linalg::{asymmetry, min_eigenvalue, symmetrize};

/// Which measurements the information is about, relative to the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Anchor is the earliest state of the window (observability).
    Forward,
    /// Anchor is the latest state of the window (constructability).
    Reverse,
    /// Measurements on both sides of an intermediate anchor.
    Both,
}

/// Symmetric nonnegative-definite `n×n` information matrix.
///
/// `matrix` is always exactly symmetric. `raw` keeps the value as computed
/// before the final symmetrisation so that the asymmetry produced by a
/// numerical method stays observable.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricInfoMatrix {
    matrix: DMatrix<f64>,
    raw: DMatrix<f64>,
    pub window: usize,
    pub anchor: usize,
    pub direction: Direction,
}

impl SymmetricInfoMatrix {
    /// Symmetrises `raw` and keeps it for diagnostics.
    pub fn from_raw(raw: DMatrix<f64>, window: usize, anchor: usize, direction: Direction) -> Self {
        Self {
            matrix: symmetrize(&raw),
            raw,
            window,
            anchor,
            direction,
        }
    }

    /// For values that are symmetric by construction (recursions).
    pub fn symmetric(m: DMatrix<f64>, window: usize, anchor: usize, direction: Direction) -> Self {
        let matrix = symmetrize(&m);
        Self {
            raw: matrix.clone(),
            matrix,
            window,
            anchor,
            direction,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `‖F − Fᵀ‖_F / ‖F‖_F` of the unsymmetrised value.
    pub fn sym_err(&self) -> f64 {
        asymmetry(&self.raw)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}
