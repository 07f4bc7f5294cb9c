//! Small dense linear-algebra helpers shared by the Gramian routines.
//!
//! Everything here works on `DMatrix<f64>`. Inverses of covariance-like
//! matrices are always applied through [`Cholesky::solve`]; general square
//! solves go through nalgebra's LU.

use nalgebra::{DMatrix, SymmetricEigen};

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factors the lower triangle of `a`. On failure returns the zero-based
    /// pivot at which a non-positive (or non-finite) diagonal appeared.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, usize> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of non-square matrix");
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d.is_nan() || d <= 0.0 || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `A X = B` by forward and back substitution.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.l.nrows();
        assert_eq!(b.nrows(), n, "Cholesky solve: row mismatch");
        let mut x = b.clone();
        for col in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, col)];
                }
                x[(i, col)] = s / self.l[(i, i)];
            }
        }
        x
    }

    /// `A^{-1}`, symmetrised.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        symmetrize(&self.solve(&DMatrix::identity(n, n)))
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Relative asymmetry `‖A − Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

/// Factors `(A + Aᵀ)/2`, returning the failing pivot on error.
pub fn cholesky_sym(a: &DMatrix<f64>) -> Result<Cholesky, usize> {
    Cholesky::factor(&symmetrize(a))
}

/// Solves `A X = B` for a general square `A` via LU. `None` if singular.
pub fn lu_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Largest over smallest singular value; infinite for a singular matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Entrywise relative difference `max|A − B| / max(max|A|, max|B|)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_err shape mismatch");
    let scale = max_abs(a).max(max_abs(b));
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(a - b)) / scale
}

/// Places `block` into `dst` with its top-left corner at `(row, col)`.
pub(crate) fn set_block(dst: &mut DMatrix<f64>, row: usize, col: usize, block: &DMatrix<f64>) {
    dst.view_mut((row, col), block.shape()).copy_from(block);
}

/// Block-diagonal matrix from square-or-rectangular blocks.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        set_block(&mut out, r, c, b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of blocks with equal column count.
pub fn vstack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        set_block(&mut out, r, 0, b);
        r += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, -1.0]);
        let x = Cholesky::factor(&a).unwrap().solve(&b);
        assert_relative_eq!(&a * &x, b, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(Cholesky::factor(&a).unwrap_err(), 1);
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(Cholesky::factor(&z).unwrap_err(), 0);
    }

    #[test]
    fn rank_and_condition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        assert!(condition_number(&a).is_infinite());
        assert_relative_eq!(condition_number(&DMatrix::<f64>::identity(3, 3)), 1.0);
    }

    #[test]
    fn asymmetry_of_symmetric_is_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(asymmetry(&a) > 0.0);
        assert_eq!(asymmetry(&symmetrize(&a)), 0.0);
    }
}
