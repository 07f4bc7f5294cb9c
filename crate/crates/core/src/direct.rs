//! Direct (non-recursive) stochastic Gramians.
//!
//! These stack every measurement of the window into one `wp`-vector, build
//! its full `wp×wp` covariance and apply [`fim_linear_gaussian`]. They are
//! the baseline that the recursions are compared against; for long windows
//! the stacked covariance becomes badly conditioned.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::deterministic::{check_window, constructability_blocks, observability_blocks};
use crate::error::{Error, Result};
use crate::info::{Direction, SymmetricInfoMatrix};
use crate::linalg::{block_diag, cholesky_sym, lu_solve, set_block, symmetrize, vstack};
use crate::system::TimeVaryingLinearSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceConstruction {
    /// `blkdiag(R_0, …)`: measurement noise only.
    BlockDiagonal,
    /// Explicit block sums (forward stack only).
    BlockSum,
    /// `ℛ + M 𝒬 Mᵀ`.
    MForm,
}

/// Covariance of a stacked window of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementCovariance {
    pub matrix: DMatrix<f64>,
    pub window: usize,
    /// State index the stacked measurements are expressed in.
    pub anchor: usize,
    pub direction: Direction,
    pub construction: CovarianceConstruction,
}

/// Direct FIM together with the time spent in the factor-and-solve.
#[derive(Debug, Clone)]
pub struct TimedFim {
    pub fim: SymmetricInfoMatrix,
    pub wall_ns: u64,
}

/// `Hᵀ Σ^{-1} H` via Cholesky solve on the symmetrised covariance.
///
/// The product `Hᵀ · solve(Σ, H)` is kept as the raw value, so any rounding
/// asymmetry shows up in [`SymmetricInfoMatrix::sym_err`].
pub fn fim_linear_gaussian(h: &DMatrix<f64>, cov: &MeasurementCovariance) -> Result<SymmetricInfoMatrix> {
    if h.nrows() != cov.matrix.nrows() {
        return Err(Error::Dimension(format!(
            "H has {} rows, covariance is {}x{}",
            h.nrows(),
            cov.matrix.nrows(),
            cov.matrix.ncols()
        )));
    }
    let chol = cholesky_sym(&cov.matrix).map_err(|pivot| Error::NotPositiveDefinite {
        what: format!("measurement covariance (w={})", cov.window),
        pivot,
    })?;
    let raw = h.transpose() * chol.solve(h);
    Ok(SymmetricInfoMatrix::from_raw(
        raw,
        cov.window,
        cov.anchor,
        cov.direction,
    ))
}

fn timed(h: &DMatrix<f64>, cov: &MeasurementCovariance) -> Result<TimedFim> {
    let start = Instant::now();
    let fim = fim_linear_gaussian(h, cov)?;
    let wall_ns = start.elapsed().as_nanos() as u64;
    Ok(TimedFim { fim, wall_ns })
}

/// `blkdiag(R_0..R_{w−1})`.
fn forward_measurement_noise(sys: &TimeVaryingLinearSystem, w: usize) -> DMatrix<f64> {
    block_diag(&sys.rs()[..w])
}

/// `blkdiag(R_N..R_{N−w+1})`.
fn reverse_measurement_noise(sys: &TimeVaryingLinearSystem, w: usize) -> DMatrix<f64> {
    let big_n = sys.horizon();
    let blocks: Vec<_> = (0..w).map(|tau| sys.r(big_n - tau).clone()).collect();
    block_diag(&blocks)
}

/// Observability FIM of `Y_w↓` ignoring process noise.
pub fn obs_fim_no_process_noise(sys: &TimeVaryingLinearSystem, w: usize) -> Result<SymmetricInfoMatrix> {
    check_window(sys, w)?;
    let h = vstack(&observability_blocks(sys, w));
    let cov = MeasurementCovariance {
        matrix: forward_measurement_noise(sys, w),
        window: w,
        anchor: 0,
        direction: Direction::Forward,
        construction: CovarianceConstruction::BlockDiagonal,
    };
    fim_linear_gaussian(&h, &cov)
}

/// Constructability FIM of `Y_w↑` ignoring process noise.
pub fn cons_fim_no_process_noise(sys: &TimeVaryingLinearSystem, w: usize) -> Result<SymmetricInfoMatrix> {
    check_window(sys, w)?;
    let h = vstack(&constructability_blocks(sys, w)?);
    let cov = MeasurementCovariance {
        matrix: reverse_measurement_noise(sys, w),
        window: w,
        anchor: sys.horizon(),
        direction: Direction::Reverse,
        construction: CovarianceConstruction::BlockDiagonal,
    };
    fim_linear_gaussian(&h, &cov)
}

/// Forward stacked covariance from explicit block sums.
///
/// Block `(0,0)` is `R_0` and the rest of the first block row and column is
/// zero. For `j ≥ k > 0`, block `(j,k)` is
/// `Σ_{i=1}^{k} C_j Φ_{j,i} Q_{i−1} (C_k Φ_{k,i})ᵀ`, plus `R_j` when `j = k`.
#[allow(clippy::needless_range_loop)]
pub fn meas_cov_block_sum(sys: &TimeVaryingLinearSystem, w: usize) -> Result<MeasurementCovariance> {
    check_window(sys, w)?;
    let p = sys.meas_dim();
    let n = sys.state_dim();

    // out[j][i] = C_j Φ_{j,i}, for 1 ≤ i ≤ j < w.
    let mut out: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(w);
    for j in 0..w {
        let mut row = vec![DMatrix::zeros(0, 0); j + 1];
        let mut transition = DMatrix::identity(n, n);
        for i in (1..=j).rev() {
            if i < j {
                transition = &transition * sys.phi(i);
            }
            row[i] = sys.c(j) * &transition;
        }
        out.push(row);
    }

    let mut cov = DMatrix::zeros(w * p, w * p);
    set_block(&mut cov, 0, 0, sys.r(0));
    for j in 1..w {
        for k in 1..=j {
            let mut block = DMatrix::zeros(p, p);
            for i in 1..=k {
                block += &out[j][i] * sys.q(i - 1) * out[k][i].transpose();
            }
            if j == k {
                block += sys.r(j);
            }
            set_block(&mut cov, j * p, k * p, &block);
            if j != k {
                set_block(&mut cov, k * p, j * p, &block.transpose());
            }
        }
    }
    Ok(MeasurementCovariance {
        matrix: cov,
        window: w,
        anchor: 0,
        direction: Direction::Forward,
        construction: CovarianceConstruction::BlockSum,
    })
}

/// Stacked covariance `ℛ_w + M_w 𝒬_w M_wᵀ` with the free trailing block of
/// `𝒬_w` set to zero.
pub fn meas_cov_m_form(sys: &TimeVaryingLinearSystem, w: usize, direction: Direction) -> Result<MeasurementCovariance> {
    let n = sys.state_dim();
    meas_cov_m_form_with_fill(sys, w, direction, &DMatrix::zeros(n, n))
}

/// [`meas_cov_m_form`] with an explicit value for the free trailing block of
/// `𝒬_w`. The block only ever multiplies the zero last block column of `M_w`.
pub fn meas_cov_m_form_with_fill(
    sys: &TimeVaryingLinearSystem,
    w: usize,
    direction: Direction,
    fill: &DMatrix<f64>,
) -> Result<MeasurementCovariance> {
    check_window(sys, w)?;
    let (p, n) = (sys.meas_dim(), sys.state_dim());
    let big_n = sys.horizon();
    let mut m = DMatrix::zeros(w * p, w * n);
    let mut q_blocks = Vec::with_capacity(w);
    let (noise, anchor) = match direction {
        Direction::Forward => {
            // [M]_{a,b} = C_a Φ_{a,b+1} for b < a.
            for a in 1..w {
                let mut transition = DMatrix::identity(n, n);
                for b in (0..a).rev() {
                    if b + 1 < a {
                        transition = &transition * sys.phi(b + 1);
                    }
                    set_block(&mut m, a * p, b * n, &(sys.c(a) * &transition));
                }
            }
            q_blocks.extend(sys.qs()[..w - 1].iter().cloned());
            (forward_measurement_noise(sys, w), 0)
        }
        Direction::Reverse => {
            // [M]_{a,b} = C_{N−a} Φ_{N−b,N−a}^{-1} for b < a.
            for a in 1..w {
                let mut transition = DMatrix::identity(n, n);
                for b in (0..a).rev() {
                    // Φ_{N−b,N−a} = Φ_{N−b,N−b−1} Φ_{N−b−1,N−a}
                    transition = sys.phi(big_n - b - 1) * &transition;
                    let block = lu_solve(&transition.transpose(), &sys.c(big_n - a).transpose())
                        .ok_or_else(|| Error::Singular {
                            what: format!("state transition Φ_{{{},{}}}", big_n - b, big_n - a),
                        })?
                        .transpose();
                    set_block(&mut m, a * p, b * n, &block);
                }
            }
            q_blocks.extend((0..w - 1).map(|b| sys.q(big_n - 1 - b).clone()));
            (reverse_measurement_noise(sys, w), big_n)
        }
        Direction::Both => {
            return Err(Error::Unsupported(
                "stacked covariance needs a forward or reverse direction".into(),
            ))
        }
    };
    q_blocks.push(fill.clone());
    let q_stack = block_diag(&q_blocks);
    let cov = noise + &m * q_stack * m.transpose();
    Ok(MeasurementCovariance {
        matrix: symmetrize(&cov),
        window: w,
        anchor,
        direction,
        construction: CovarianceConstruction::MForm,
    })
}

/// Direct stochastic observability Gramian `𝒪ᵀ R̃↘^{-1} 𝒪`.
pub fn obs_fim_direct(
    sys: &TimeVaryingLinearSystem,
    w: usize,
    construction: CovarianceConstruction,
) -> Result<TimedFim> {
    check_window(sys, w)?;
    let cov = match construction {
        CovarianceConstruction::BlockSum => meas_cov_block_sum(sys, w)?,
        CovarianceConstruction::MForm => meas_cov_m_form(sys, w, Direction::Forward)?,
        CovarianceConstruction::BlockDiagonal => {
            let start = Instant::now();
            let fim = obs_fim_no_process_noise(sys, w)?;
            return Ok(TimedFim {
                fim,
                wall_ns: start.elapsed().as_nanos() as u64,
            });
        }
    };
    let h = vstack(&observability_blocks(sys, w));
    timed(&h, &cov)
}

/// Direct stochastic constructability Gramian `𝒪ᵀ R̃↖^{-1} 𝒪`.
pub fn cons_fim_direct(
    sys: &TimeVaryingLinearSystem,
    w: usize,
    construction: CovarianceConstruction,
) -> Result<TimedFim> {
    check_window(sys, w)?;
    let cov = match construction {
        CovarianceConstruction::MForm => meas_cov_m_form(sys, w, Direction::Reverse)?,
        CovarianceConstruction::BlockSum => {
            return Err(Error::Unsupported(
                "the block-sum covariance is defined for the forward stack only".into(),
            ))
        }
        CovarianceConstruction::BlockDiagonal => {
            let start = Instant::now();
            let fim = cons_fim_no_process_noise(sys, w)?;
            return Ok(TimedFim {
                fim,
                wall_ns: start.elapsed().as_nanos() as u64,
            });
        }
    };
    let h = vstack(&constructability_blocks(sys, w)?);
    timed(&h, &cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_family_member, scalar_lti, shear_lti};
    use crate::linalg::{min_eigenvalue, rel_err};
    use crate::system::TimeInvariantLinearSystem;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    fn cov(matrix: DMatrix<f64>) -> MeasurementCovariance {
        MeasurementCovariance {
            window: matrix.nrows(),
            matrix,
            anchor: 0,
            direction: Direction::Forward,
            construction: CovarianceConstruction::BlockDiagonal,
        }
    }

    #[test]
    fn linear_gaussian_examples() {
        let f = fim_linear_gaussian(&DMatrix::identity(2, 2), &cov(DMatrix::identity(2, 2))).unwrap();
        assert_eq!(f.matrix(), &DMatrix::identity(2, 2));
        let f = fim_linear_gaussian(&m(2, 1, &[1.0, 1.0]), &cov(m(2, 2, &[1.0, 0.0, 0.0, 2.0]))).unwrap();
        assert_relative_eq!(f.matrix()[(0, 0)], 1.5, epsilon = 1e-15);
        let f = fim_linear_gaussian(&DMatrix::zeros(2, 3), &cov(DMatrix::identity(2, 2))).unwrap();
        assert_eq!(f.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn linear_gaussian_rejects_indefinite() {
        let err = fim_linear_gaussian(&DMatrix::identity(2, 2), &cov(m(2, 2, &[1.0, 2.0, 2.0, 1.0])));
        assert!(matches!(err, Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn no_noise_obs_examples() {
        let sys = TimeInvariantLinearSystem::new(
            m(2, 2, &[1.0, -1.0, 0.0, 1.0]),
            m(1, 2, &[1.0, 0.0]),
            DMatrix::identity(2, 2),
            m(1, 1, &[0.1]),
        )
        .unwrap()
        .lift(3);
        let f = obs_fim_no_process_noise(&sys, 1).unwrap();
        assert_relative_eq!(f.matrix(), &m(2, 2, &[10.0, 0.0, 0.0, 0.0]), epsilon = 1e-12);

        let (a, r) = (1.7, 0.3);
        let sys = scalar_lti(a, 1.0, 0.5, r).lift(2);
        let f = obs_fim_no_process_noise(&sys, 2).unwrap();
        assert_relative_eq!(f.matrix()[(0, 0)], 1.0 / r + a * a / r, max_relative = 1e-14);
    }

    #[test]
    fn no_noise_cons_examples() {
        let sys = scalar_lti(2.0, 1.0, 1.0, 1.0).lift(1);
        assert_relative_eq!(cons_fim_no_process_noise(&sys, 1).unwrap().matrix()[(0, 0)], 1.0);
        assert_relative_eq!(
            cons_fim_no_process_noise(&sys, 2).unwrap().matrix()[(0, 0)],
            1.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn no_noise_identity_dynamics_symmetry() {
        let base = random_family_member(3, 2, 2, 5);
        let lti = TimeInvariantLinearSystem::new(
            DMatrix::identity(2, 2),
            base.c(0).clone(),
            base.q(0).clone(),
            base.r(0).clone(),
        )
        .unwrap()
        .lift(5);
        for w in 1..=6 {
            let o = obs_fim_no_process_noise(&lti, w).unwrap();
            let c = cons_fim_no_process_noise(&lti, w).unwrap();
            assert!(rel_err(o.matrix(), c.matrix()) < 1e-13);
        }
    }

    #[test]
    fn block_sum_scalar_blocks() {
        let (q, r) = (0.7, 0.2);
        let sys = scalar_lti(1.0, 1.0, q, r).lift(3);
        let c2 = meas_cov_block_sum(&sys, 2).unwrap().matrix;
        assert_relative_eq!(c2, m(2, 2, &[r, 0.0, 0.0, r + q]), epsilon = 1e-15);
        let c3 = meas_cov_block_sum(&sys, 3).unwrap().matrix;
        assert_relative_eq!(
            c3,
            m(3, 3, &[r, 0.0, 0.0, 0.0, r + q, q, 0.0, q, r + 2.0 * q]),
            epsilon = 1e-15
        );
        assert_eq!(meas_cov_block_sum(&sys, 1).unwrap().matrix, m(1, 1, &[r]));
    }

    #[test]
    fn m_form_scalar_and_trivial() {
        let (q, r) = (0.7, 0.2);
        let sys = scalar_lti(1.0, 1.0, q, r).lift(3);
        let c2 = meas_cov_m_form(&sys, 2, Direction::Forward).unwrap().matrix;
        assert_relative_eq!(c2, m(2, 2, &[r, 0.0, 0.0, r + q]), epsilon = 1e-15);
        assert_eq!(
            meas_cov_m_form(&sys, 1, Direction::Forward).unwrap().matrix,
            m(1, 1, &[r])
        );
    }

    #[test]
    fn m_form_matches_theorem1_on_shear_reference() {
        let sys = crate::fixtures::shear_reference().lift(5);
        let a = meas_cov_block_sum(&sys, 3).unwrap().matrix;
        let b = meas_cov_m_form(&sys, 3, Direction::Forward).unwrap().matrix;
        assert!(rel_err(&a, &b) < 1e-10);
    }

    #[test]
    fn trailing_q_block_is_inert() {
        let sys = random_family_member(5, 3, 2, 4);
        for dir in [Direction::Forward, Direction::Reverse] {
            let zero = meas_cov_m_form(&sys, 5, dir).unwrap().matrix;
            let ident = meas_cov_m_form_with_fill(&sys, 5, dir, &DMatrix::identity(3, 3))
                .unwrap()
                .matrix;
            assert_eq!(zero, ident);
        }
    }

    #[test]
    fn direct_scalar_unit_system() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(1);
        for c in [CovarianceConstruction::BlockSum, CovarianceConstruction::MForm] {
            let f = obs_fim_direct(&sys, 2, c).unwrap().fim;
            assert_relative_eq!(f.matrix()[(0, 0)], 1.5, epsilon = 1e-12);
        }
        let f = cons_fim_direct(&sys, 2, CovarianceConstruction::MForm).unwrap().fim;
        assert_relative_eq!(f.matrix()[(0, 0)], 1.5, epsilon = 1e-12);
        assert!(matches!(
            cons_fim_direct(&sys, 2, CovarianceConstruction::BlockSum),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn direct_window_one() {
        let sys = random_family_member(8, 2, 2, 3);
        let expect0 = sys.c(0).transpose() * sys.r(0).clone().try_inverse().unwrap() * sys.c(0);
        let expect_n = sys.c(3).transpose() * sys.r(3).clone().try_inverse().unwrap() * sys.c(3);
        let f = obs_fim_direct(&sys, 1, CovarianceConstruction::BlockSum).unwrap().fim;
        assert!(rel_err(f.matrix(), &expect0) < 1e-12);
        let f = cons_fim_direct(&sys, 1, CovarianceConstruction::MForm).unwrap().fim;
        assert!(rel_err(f.matrix(), &expect_n) < 1e-12);
    }

    #[test]
    fn vanishing_process_noise_approaches_no_noise() {
        let base = shear_lti(1.0, 1.0);
        let sys = TimeInvariantLinearSystem::new(
            base.phi().clone(),
            base.c().clone(),
            DMatrix::identity(2, 2) * 1e-12,
            base.r().clone(),
        )
        .unwrap()
        .lift(4);
        let with = obs_fim_direct(&sys, 5, CovarianceConstruction::MForm).unwrap().fim;
        let without = obs_fim_no_process_noise(&sys, 5).unwrap();
        assert!(rel_err(with.matrix(), without.matrix()) < 1e-6);
    }

    #[test]
    fn identity_dynamics_obs_equals_cons() {
        let base = random_family_member(21, 2, 1, 1);
        let sys = TimeInvariantLinearSystem::new(
            DMatrix::identity(2, 2),
            base.c(0).clone(),
            base.q(0).clone(),
            base.r(0).clone(),
        )
        .unwrap()
        .lift(4);
        for w in 1..=5 {
            let o = obs_fim_direct(&sys, w, CovarianceConstruction::MForm).unwrap().fim;
            let c = cons_fim_direct(&sys, w, CovarianceConstruction::MForm).unwrap().fim;
            assert!(rel_err(o.matrix(), c.matrix()) < 1e-12);
        }
    }

    #[test]
    fn symmetrised_output_is_exactly_symmetric() {
        let sys = random_family_member(2, 3, 2, 6);
        let f = obs_fim_direct(&sys, 7, CovarianceConstruction::BlockSum).unwrap().fim;
        assert_eq!(f.matrix(), &f.matrix().transpose());
        assert!(f.min_eigenvalue() > 0.0);
    }

    #[test]
    fn process_noise_never_adds_information() {
        for seed in 0..10 {
            let sys = random_family_member(seed, 2, 1, 5);
            for w in 1..=6 {
                let with = obs_fim_direct(&sys, w, CovarianceConstruction::MForm).unwrap().fim;
                let without = obs_fim_no_process_noise(&sys, w).unwrap();
                let diff = without.matrix() - with.matrix();
                assert!(min_eigenvalue(&diff) >= -1e-9 * without.matrix().norm());
            }
        }
    }
}
