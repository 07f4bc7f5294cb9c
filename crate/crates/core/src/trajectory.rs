//! Trajectory information matrix and its relation to the Gramians.
//!
//! The FIM of all measurements `y_0..y_{w−1}` with respect to the stacked
//! trajectory `x_0..x_{w−1}` (flat prior on `x_0`) is block-tridiagonal.
//! The corner blocks of its inverse are the inverses of the observability
//! and constructability Gramians, and the inverse of any diagonal block is
//! the total information about that intermediate state.

use nalgebra::DMatrix;

use crate::direct::{cons_fim_direct, obs_fim_direct, CovarianceConstruction};
use crate::error::{Error, Result};
use crate::info::{Direction, SymmetricInfoMatrix};
use crate::linalg::{cholesky_sym, rel_err, set_block, symmetrize};
use crate::recursive::{cons_recursion, measurement_info, obs_recursion_dual, process_info};
use crate::system::TimeVaryingLinearSystem;

/// Largest `w·n` for which the trajectory matrix is inverted densely.
pub const DENSE_CAP: usize = 512;

/// Tolerance of the corner and diagonal-block equivalences.
pub const RELATION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFim {
    pub matrix: DMatrix<f64>,
    pub window: usize,
    pub block: usize,
}

impl TrajectoryFim {
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.block;
        self.matrix.view((i * n, j * n), (n, n)).into_owned()
    }

    /// True when every block beyond the first off-diagonal is zero.
    pub fn is_block_tridiagonal(&self) -> bool {
        (0..self.window).all(|i| {
            (0..self.window)
                .filter(|j| i.abs_diff(*j) > 1)
                .all(|j| self.block(i, j).iter().all(|&v| v == 0.0))
        })
    }

    /// Dense `𝓕^{-1}` via Cholesky; `None` when `𝓕` is not positive definite.
    pub fn inverse(&self) -> Result<Option<DMatrix<f64>>> {
        let size = self.matrix.nrows();
        if size > DENSE_CAP {
            return Err(Error::TooLarge { size, cap: DENSE_CAP });
        }
        Ok(cholesky_sym(&self.matrix).ok().map(|c| c.inverse()))
    }
}

fn check_trajectory_window(sys: &TimeVaryingLinearSystem, w: usize) -> Result<()> {
    let max = sys.horizon() + 1;
    if w < 2 || w > max {
        return Err(Error::Window { w, min: 2, max });
    }
    Ok(())
}

/// Block-tridiagonal trajectory FIM over states `0..w`.
///
/// Diagonal blocks `CₖᵀRₖ⁻¹Cₖ + [k>0] Q_{k−1}⁻¹ + [k<w−1] ΦₖᵀQₖ⁻¹Φₖ`,
/// off-diagonal blocks `−ΦₖᵀQₖ⁻¹` at `(k, k+1)` and the transpose at
/// `(k+1, k)`.
pub fn assemble_trajectory_fim(sys: &TimeVaryingLinearSystem, w: usize) -> Result<TrajectoryFim> {
    check_trajectory_window(sys, w)?;
    let n = sys.state_dim();
    let mut m = DMatrix::zeros(w * n, w * n);
    let q_inv: Vec<_> = (0..w - 1).map(|k| process_info(sys.q(k), k)).collect::<Result<_>>()?;
    for k in 0..w {
        let mut d = measurement_info(sys.c(k), sys.r(k), k)?;
        if k > 0 {
            d += &q_inv[k - 1];
        }
        if k + 1 < w {
            let t = &q_inv[k] * sys.phi(k);
            d += sys.phi(k).transpose() * &t;
            set_block(&mut m, (k + 1) * n, k * n, &(-&t));
            set_block(&mut m, k * n, (k + 1) * n, &(-t.transpose()));
        }
        set_block(&mut m, k * n, k * n, &symmetrize(&d));
    }
    Ok(TrajectoryFim {
        matrix: m,
        window: w,
        block: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerReport {
    /// Relative error of the top-left block of `𝓕⁻¹` against `F_obs⁻¹`.
    pub top_left_rel_err: f64,
    /// Relative error of the bottom-right block against `F_cons⁻¹`.
    pub bottom_right_rel_err: f64,
    /// Set when `𝓕` or a Gramian could not be inverted.
    pub singular: Option<String>,
}

impl CornerReport {
    pub fn passed(&self) -> bool {
        self.singular.is_none() && self.top_left_rel_err <= RELATION_TOL && self.bottom_right_rel_err <= RELATION_TOL
    }
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cholesky_sym(m).ok().map(|c| c.inverse())
}

/// Checks the corners of `𝓕_w⁻¹` against the direct Gramians of the first
/// `w` measurements.
pub fn corner_check(sys: &TimeVaryingLinearSystem, w: usize) -> Result<CornerReport> {
    let traj = assemble_trajectory_fim(sys, w)?;
    let n = traj.block;
    let failed = |why: &str| CornerReport {
        top_left_rel_err: f64::INFINITY,
        bottom_right_rel_err: f64::INFINITY,
        singular: Some(why.to_string()),
    };
    let Some(inv) = traj.inverse()? else {
        return Ok(failed("trajectory information matrix is singular"));
    };
    let sub = sys.subsystem(0, w - 1)?;
    let obs = obs_fim_direct(&sub, w, CovarianceConstruction::MForm)?.fim;
    let cons = cons_fim_direct(&sub, w, CovarianceConstruction::MForm)?.fim;
    let (Some(obs_inv), Some(cons_inv)) = (spd_inverse(obs.matrix()), spd_inverse(cons.matrix())) else {
        return Ok(failed("a Gramian is singular"));
    };
    let tl = inv.view((0, 0), (n, n)).into_owned();
    let br = inv.view(((w - 1) * n, (w - 1) * n), (n, n)).into_owned();
    Ok(CornerReport {
        top_left_rel_err: rel_err(&tl, &obs_inv),
        bottom_right_rel_err: rel_err(&br, &cons_inv),
        singular: None,
    })
}

/// Total information about `x_k` from measurements `0..w`: observability
/// Gramian of `k..w` plus constructability Gramian of `0..=k`, minus the
/// measurement at `k` that both include.
pub fn intermediate_state_info(sys: &TimeVaryingLinearSystem, w: usize, k: usize) -> Result<SymmetricInfoMatrix> {
    crate::deterministic::check_window(sys, w)?;
    if k >= w {
        return Err(Error::OutOfHorizon {
            index: k,
            horizon: w - 1,
        });
    }
    let future = sys.subsystem(k, w - 1)?;
    let obs = obs_recursion_dual(&future, w - k)?;
    let past = sys.subsystem(0, k)?;
    let cons = cons_recursion(&past, k + 1)?;
    let shared = measurement_info(sys.c(k), sys.r(k), k)?;
    let total = obs.final_value().matrix() + cons.final_value().matrix() - shared;
    Ok(SymmetricInfoMatrix::symmetric(total, w, k, Direction::Both))
}

/// Inverses of the diagonal blocks of `𝓕_w⁻¹`; `None` if `𝓕_w` is singular.
pub fn diagonal_block_info(traj: &TrajectoryFim) -> Result<Option<Vec<DMatrix<f64>>>> {
    let Some(inv) = traj.inverse()? else {
        return Ok(None);
    };
    let n = traj.block;
    Ok((0..traj.window)
        .map(|k| spd_inverse(&inv.view((k * n, k * n), (n, n)).into_owned()))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateReport {
    /// Per-state relative error between the two routes.
    pub rel_errs: Vec<f64>,
    pub singular: bool,
}

impl IntermediateReport {
    pub fn passed(&self) -> bool {
        !self.singular && self.rel_errs.iter().all(|&e| e <= RELATION_TOL)
    }
}

/// Compares [`intermediate_state_info`] with the block-inverse route for
/// every `k < w`.
pub fn intermediate_state_check(sys: &TimeVaryingLinearSystem, w: usize) -> Result<IntermediateReport> {
    let traj = assemble_trajectory_fim(sys, w)?;
    let Some(blocks) = diagonal_block_info(&traj)? else {
        return Ok(IntermediateReport {
            rel_errs: Vec::new(),
            singular: true,
        });
    };
    let rel_errs = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| Ok(rel_err(intermediate_state_info(sys, w, k)?.matrix(), b)))
        .collect::<Result<_>>()?;
    Ok(IntermediateReport {
        rel_errs,
        singular: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::CovarianceConstruction::MForm;
    use crate::fixtures::{random_family_member, scalar_lti};
    use crate::linalg::min_eigenvalue;
    use crate::system::TimeInvariantLinearSystem;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_assembly() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(1);
        let t = assemble_trajectory_fim(&sys, 2).unwrap();
        assert_eq!(t.matrix, m(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let no_meas = scalar_lti(1.0, 0.0, 1.0, 1.0).lift(1);
        let t = assemble_trajectory_fim(&no_meas, 2).unwrap();
        assert_eq!(t.matrix, m(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(t.inverse().unwrap(), None);
    }

    #[test]
    fn block_structure() {
        for n in 1..=3 {
            let sys = random_family_member(n as u64, n, 1, 6);
            for w in 2..=7 {
                let t = assemble_trajectory_fim(&sys, w).unwrap();
                assert!(t.is_block_tridiagonal());
                assert_eq!(t.matrix, t.matrix.transpose());
            }
        }
        let sys = random_family_member(0, 2, 1, 3);
        assert!(matches!(
            assemble_trajectory_fim(&sys, 1),
            Err(Error::Window { min: 2, .. })
        ));
    }

    #[test]
    fn scalar_corners() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(1);
        let inv = assemble_trajectory_fim(&sys, 2).unwrap().inverse().unwrap().unwrap();
        assert_relative_eq!(inv, m(2, 2, &[2.0, 1.0, 1.0, 2.0]) / 3.0, epsilon = 1e-15);
        assert_relative_eq!(inv[(0, 0)], 1.0 / 1.5, epsilon = 1e-15);
        let report = corner_check(&sys, 2).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn decoupled_states_under_huge_noise() {
        let sys = TimeInvariantLinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 1e12,
            DMatrix::identity(2, 2),
        )
        .unwrap()
        .lift(1);
        let inv = assemble_trajectory_fim(&sys, 2).unwrap().inverse().unwrap().unwrap();
        let tl = inv.view((0, 0), (2, 2)).into_owned();
        let br = inv.view((2, 2), (2, 2)).into_owned();
        assert!(rel_err(&tl, &DMatrix::identity(2, 2)) < 1e-3);
        assert!(rel_err(&br, &DMatrix::identity(2, 2)) < 1e-3);
        assert!(corner_check(&sys, 2).unwrap().passed());
    }

    #[test]
    fn intermediate_boundaries() {
        let sys = random_family_member(9, 2, 1, 5);
        let w = 6;
        let first = intermediate_state_info(&sys, w, 0).unwrap();
        let obs = obs_fim_direct(&sys, w, MForm).unwrap().fim;
        assert!(rel_err(first.matrix(), obs.matrix()) < 1e-9);
        let last = intermediate_state_info(&sys, w, w - 1).unwrap();
        let cons = cons_fim_direct(&sys, w, MForm).unwrap().fim;
        assert!(rel_err(last.matrix(), cons.matrix()) < 1e-9);
    }

    #[test]
    fn intermediate_scalar_middle() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(2);
        let mid = intermediate_state_info(&sys, 3, 1).unwrap();
        assert_relative_eq!(mid.matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        // 𝓕₃ = [[2,−1,0],[−1,3,−1],[0,−1,2]]; the middle entry of its inverse
        // is det([[2,0],[0,2]]) / det(𝓕₃) = 4/8.
        let t = assemble_trajectory_fim(&sys, 3).unwrap();
        assert_eq!(t.matrix, m(3, 3, &[2.0, -1.0, 0.0, -1.0, 3.0, -1.0, 0.0, -1.0, 2.0]));
        let blocks = diagonal_block_info(&t).unwrap().unwrap();
        assert_relative_eq!(blocks[1][(0, 0)], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn relations_on_random_systems() {
        for seed in 0..15 {
            let sys = random_family_member(seed, 2, 1, 6);
            for w in 2..=7 {
                assert!(corner_check(&sys, w).unwrap().passed(), "seed {seed} w {w}");
                assert!(intermediate_state_check(&sys, w).unwrap().passed(), "seed {seed} w {w}");
            }
        }
    }

    #[test]
    fn total_information_dominates_each_side() {
        let sys = random_family_member(17, 2, 1, 6);
        let w = 7;
        for k in 0..w {
            let total = intermediate_state_info(&sys, w, k).unwrap();
            let future = obs_recursion_dual(&sys.subsystem(k, w - 1).unwrap(), w - k).unwrap();
            let past = cons_recursion(&sys.subsystem(0, k).unwrap(), k + 1).unwrap();
            for side in [future.final_value(), past.final_value()] {
                let d = total.matrix() - side.matrix();
                assert!(min_eigenvalue(&d) >= -1e-9 * total.matrix().norm());
            }
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(600);
        let t = assemble_trajectory_fim(&sys, 600).unwrap();
        assert!(matches!(t.inverse(), Err(Error::TooLarge { .. })));
    }
}
