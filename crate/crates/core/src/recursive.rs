//! Recursive stochastic Gramians.
//!
//! Every recursion here works with `n×n` matrices only: the `wp×wp` stacked
//! covariance of the direct formulas is never formed. Inner inverses are
//! applied through Cholesky solves and each iterate is symmetrised, so the
//! returned values are exactly symmetric.

use nalgebra::DMatrix;

use crate::deterministic::check_window;
use crate::error::{Error, Result};
use crate::info::{Direction, SymmetricInfoMatrix};
use crate::linalg::{cholesky_sym, lu_solve, symmetrize};
use crate::system::{TimeInvariantLinearSystem, TimeVaryingLinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecursionMethod {
    ObsNoNoise,
    ConsNoNoise,
    ConsProcessNoise,
    ObsDual,
    ObsLti,
}

/// One iterate per step; the last one is the requested Gramian.
#[derive(Debug, Clone)]
pub struct RecursionTrace {
    pub method: RecursionMethod,
    pub steps: Vec<SymmetricInfoMatrix>,
}

impl RecursionTrace {
    pub fn final_value(&self) -> &SymmetricInfoMatrix {
        self.steps.last().expect("recursion traces are never empty")
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `Cᵀ R^{-1} C`.
pub(crate) fn measurement_info(c: &DMatrix<f64>, r: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let chol = cholesky_sym(r).map_err(|pivot| Error::NotPositiveDefinite {
        what: format!("measurement noise R_{k}"),
        pivot,
    })?;
    Ok(symmetrize(&(c.transpose() * chol.solve(c))))
}

pub(crate) fn process_info(q: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let chol = cholesky_sym(q).map_err(|pivot| Error::NotPositiveDefinite {
        what: format!("process noise Q_{k}"),
        pivot,
    })?;
    Ok(chol.inverse())
}

/// One step of the backward information recursion
///
/// ```text
/// F' = −Aᵀ Q⁻¹ (F + Q⁻¹)⁻¹ Q⁻¹ A + Aᵀ Q⁻¹ A + H
/// ```
///
/// where `A` is the forward transition out of the new anchor and `H` the
/// measurement information at that anchor.
pub(crate) fn backward_step(
    f: &DMatrix<f64>,
    a: &DMatrix<f64>,
    q_inv: &DMatrix<f64>,
    meas: &DMatrix<f64>,
    step: usize,
) -> Result<DMatrix<f64>> {
    let inner = cholesky_sym(&(f + q_inv)).map_err(|pivot| Error::Conditioning {
        what: "F + Q⁻¹",
        step,
        pivot,
    })?;
    let t = q_inv * a;
    let next = -(t.transpose() * inner.solve(&t)) + a.transpose() * &t + meas;
    Ok(symmetrize(&next))
}

/// Observability Gramian without process noise: each measurement adds
/// `(C_k Φ_{k,0})ᵀ R_k^{-1} C_k Φ_{k,0}`.
pub fn obs_recursion_no_noise(sys: &TimeVaryingLinearSystem, w: usize) -> Result<RecursionTrace> {
    check_window(sys, w)?;
    let n = sys.state_dim();
    let mut transition = DMatrix::identity(n, n);
    let mut f = DMatrix::zeros(n, n);
    let mut steps = Vec::with_capacity(w);
    for k in 0..w {
        if k > 0 {
            transition = sys.phi(k - 1) * transition;
        }
        let h = sys.c(k) * &transition;
        f += measurement_info(&h, sys.r(k), k)?;
        f = symmetrize(&f);
        steps.push(SymmetricInfoMatrix::symmetric(f.clone(), k + 1, 0, Direction::Forward));
    }
    Ok(RecursionTrace {
        method: RecursionMethod::ObsNoNoise,
        steps,
    })
}

/// Constructability Gramian without process noise, propagated forward
/// through `Φ^{-ᵀ} F Φ^{-1}`. Runs on the trailing `w` measurements.
pub fn cons_recursion_no_noise(sys: &TimeVaryingLinearSystem, w: usize) -> Result<RecursionTrace> {
    check_window(sys, w)?;
    let start = sys.horizon() + 1 - w;
    let mut f = measurement_info(sys.c(start), sys.r(start), start)?;
    let mut steps = Vec::with_capacity(w);
    steps.push(SymmetricInfoMatrix::symmetric(f.clone(), 1, start, Direction::Reverse));
    for k in start..start + w - 1 {
        let phi_t = sys.phi(k).transpose();
        let singular = || Error::Singular {
            what: format!("Φ_{{{},{k}}}", k + 1),
        };
        let x = lu_solve(&phi_t, &f).ok_or_else(singular)?;
        let propagated = lu_solve(&phi_t, &x.transpose()).ok_or_else(singular)?.transpose();
        f = symmetrize(&(propagated + measurement_info(sys.c(k + 1), sys.r(k + 1), k + 1)?));
        steps.push(SymmetricInfoMatrix::symmetric(
            f.clone(),
            k + 2 - start,
            k + 1,
            Direction::Reverse,
        ));
    }
    Ok(RecursionTrace {
        method: RecursionMethod::ConsNoNoise,
        steps,
    })
}

/// Constructability Gramian with process noise (posterior information
/// recursion, flat prior on the first state of the window):
///
/// ```text
/// F' = −Q⁻¹Φ (F + ΦᵀQ⁻¹Φ)⁻¹ ΦᵀQ⁻¹ + Q⁻¹ + Cᵀ R⁻¹ C
/// ```
///
/// Runs on the trailing `w` measurements; `w = N + 1` uses all of them.
pub fn cons_recursion(sys: &TimeVaryingLinearSystem, w: usize) -> Result<RecursionTrace> {
    check_window(sys, w)?;
    let start = sys.horizon() + 1 - w;
    let mut f = measurement_info(sys.c(start), sys.r(start), start)?;
    let mut steps = Vec::with_capacity(w);
    steps.push(SymmetricInfoMatrix::symmetric(f.clone(), 1, start, Direction::Reverse));
    for k in start..start + w - 1 {
        let q_inv = process_info(sys.q(k), k)?;
        let t = &q_inv * sys.phi(k);
        let inner = cholesky_sym(&(&f + sys.phi(k).transpose() * &t)).map_err(|pivot| Error::Conditioning {
            what: "F + ΦᵀQ⁻¹Φ",
            step: k - start,
            pivot,
        })?;
        let meas = measurement_info(sys.c(k + 1), sys.r(k + 1), k + 1)?;
        f = symmetrize(&(-(&t * inner.solve(&t.transpose())) + q_inv + meas));
        steps.push(SymmetricInfoMatrix::symmetric(
            f.clone(),
            k + 2 - start,
            k + 1,
            Direction::Reverse,
        ));
    }
    Ok(RecursionTrace {
        method: RecursionMethod::ConsProcessNoise,
        steps,
    })
}

/// Observability Gramian with process noise, run backward from the last
/// measurement of the window to `x_0`.
///
/// This is the constructability recursion of the dual system rewritten in
/// the original system's matrices. Intermediate steps are the Gramians of
/// the trailing measurements anchored at `x_j` (equivalently, the dual's
/// constructability iterates); the final step is anchored at `x_0`.
pub fn obs_recursion_dual(sys: &TimeVaryingLinearSystem, w: usize) -> Result<RecursionTrace> {
    check_window(sys, w)?;
    let last = w - 1;
    let mut f = measurement_info(sys.c(last), sys.r(last), last)?;
    let mut steps = Vec::with_capacity(w);
    steps.push(SymmetricInfoMatrix::symmetric(f.clone(), 1, last, Direction::Forward));
    for step in 0..last {
        let j = last - step - 1;
        let q_inv = process_info(sys.q(j), j)?;
        let meas = measurement_info(sys.c(j), sys.r(j), j)?;
        f = backward_step(&f, sys.phi(j), &q_inv, &meas, step)?;
        steps.push(SymmetricInfoMatrix::symmetric(
            f.clone(),
            step + 2,
            j,
            Direction::Forward,
        ));
    }
    Ok(RecursionTrace {
        method: RecursionMethod::ObsDual,
        steps,
    })
}

/// Time-invariant observability recursion; any `w ≥ 1`.
pub fn obs_recursion_lti(sys: &TimeInvariantLinearSystem, w: usize) -> Result<RecursionTrace> {
    if w == 0 {
        return Err(Error::Window {
            w,
            min: 1,
            max: usize::MAX,
        });
    }
    let q_inv = process_info(sys.q(), 0)?;
    let meas = measurement_info(sys.c(), sys.r(), 0)?;
    let mut f = meas.clone();
    let mut steps = Vec::with_capacity(w);
    steps.push(SymmetricInfoMatrix::symmetric(f.clone(), 1, 0, Direction::Forward));
    for step in 0..w - 1 {
        f = backward_step(&f, sys.phi(), &q_inv, &meas, step)?;
        steps.push(SymmetricInfoMatrix::symmetric(
            f.clone(),
            step + 2,
            0,
            Direction::Forward,
        ));
    }
    Ok(RecursionTrace {
        method: RecursionMethod::ObsLti,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::{
        cons_fim_direct, cons_fim_no_process_noise, obs_fim_direct, obs_fim_no_process_noise,
        CovarianceConstruction::{BlockSum, MForm},
    };
    use crate::duality::dual_ltv;
    use crate::fixtures::{oscillator, random_family_member, scalar_lti, shear_lti};
    use crate::linalg::{min_eigenvalue, rel_err};
    use approx::assert_relative_eq;

    fn scalar(v: &SymmetricInfoMatrix) -> f64 {
        v.matrix()[(0, 0)]
    }

    #[test]
    fn no_noise_identity_accumulates() {
        let sys = TimeInvariantLinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap()
        .lift(4);
        let trace = obs_recursion_no_noise(&sys, 5).unwrap();
        for (k, f) in trace.steps.iter().enumerate() {
            assert_eq!(f.matrix(), &(DMatrix::identity(2, 2) * (k + 1) as f64));
        }
        let cons = cons_recursion_no_noise(&sys, 5).unwrap();
        for (a, b) in trace.steps.iter().zip(&cons.steps) {
            assert_eq!(a.matrix(), b.matrix());
        }
    }

    #[test]
    fn no_noise_shear() {
        let sys = shear_lti(1.0, 1.0).lift(2);
        let f = obs_recursion_no_noise(&sys, 2).unwrap();
        assert_relative_eq!(
            f.final_value().matrix(),
            &DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn no_noise_cons_scalar() {
        let sys = scalar_lti(2.0, 1.0, 1.0, 1.0).lift(1);
        let f = cons_recursion_no_noise(&sys, 2).unwrap();
        assert_relative_eq!(scalar(f.final_value()), 1.25, epsilon = 1e-15);
    }

    #[test]
    fn no_noise_recursions_match_direct() {
        for seed in 0..20 {
            let sys = random_family_member(seed, 3, 2, 6);
            for w in 1..=7 {
                let rec = obs_recursion_no_noise(&sys, w).unwrap();
                let dir = obs_fim_no_process_noise(&sys, w).unwrap();
                assert!(rel_err(rec.final_value().matrix(), dir.matrix()) < 1e-12);
                let rec = cons_recursion_no_noise(&sys, w).unwrap();
                let dir = cons_fim_no_process_noise(&sys, w).unwrap();
                assert!(
                    rel_err(rec.final_value().matrix(), dir.matrix()) < 1e-12,
                    "seed {seed} w {w}"
                );
            }
        }
    }

    #[test]
    fn cons_recursion_scalar_unit() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(1);
        let f = cons_recursion(&sys, 2).unwrap();
        assert_relative_eq!(scalar(f.final_value()), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn cons_recursion_forgets_past_under_huge_noise() {
        let sys = scalar_lti(1.0, 1.0, 1e12, 1.0).lift(3);
        let trace = cons_recursion(&sys, 4).unwrap();
        for f in &trace.steps[1..] {
            assert!((scalar(f) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn cons_recursion_matches_direct() {
        for seed in 0..20 {
            let sys = random_family_member(seed, 2, 2, 6);
            for w in 1..=7 {
                let rec = cons_recursion(&sys, w).unwrap();
                let dir = cons_fim_direct(&sys, w, MForm).unwrap().fim;
                assert!(rel_err(rec.final_value().matrix(), dir.matrix()) < 1e-8);
                assert_eq!(rec.final_value().anchor, 6);
            }
        }
    }

    #[test]
    fn dual_recursion_scalar_unit() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(2);
        let f = obs_recursion_dual(&sys, 2).unwrap();
        assert_relative_eq!(scalar(f.final_value()), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn dual_recursion_scalar_three_steps() {
        // Oracle: 𝒪 = [1,1,1]ᵀ, R̃ = [[1,0,0],[0,2,1],[0,1,3]]. Solve R̃ x = 𝒪
        // by hand: x0 = 1; 2x1 + x2 = 1, x1 + 3x2 = 1 ⇒ x1 = 2/5, x2 = 1/5.
        let oracle = 1.0 + 2.0 / 5.0 + 1.0 / 5.0;
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(2);
        let f = obs_recursion_dual(&sys, 3).unwrap();
        assert_relative_eq!(scalar(f.final_value()), oracle, epsilon = 1e-14);
        let d = obs_fim_direct(&sys, 3, BlockSum).unwrap().fim;
        assert_relative_eq!(scalar(&d), oracle, epsilon = 1e-14);
    }

    #[test]
    fn dual_recursion_oscillator_first_fifteen() {
        let sys = oscillator();
        for w in 1..=15 {
            let rec = obs_recursion_dual(&sys, w).unwrap();
            let dir = obs_fim_direct(&sys, w, BlockSum).unwrap().fim;
            assert!(rel_err(rec.final_value().matrix(), dir.matrix()) < 1e-6, "w {w}");
            assert_eq!(rec.len(), w);
            assert_eq!(rec.final_value().anchor, 0);
        }
    }

    #[test]
    fn dual_recursion_equals_cons_recursion_of_dual() {
        for seed in 0..10 {
            let sys = random_family_member(seed, 3, 1, 5);
            for w in 1..=6 {
                let sub = sys.subsystem(0, w - 1).unwrap();
                let map = dual_ltv(&sub).unwrap();
                let via_dual = cons_recursion(&map.dual, w).unwrap();
                let direct = obs_recursion_dual(&sys, w).unwrap();
                for (a, b) in via_dual.steps.iter().zip(&direct.steps) {
                    assert!(rel_err(a.matrix(), b.matrix()) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn lti_scalar_iterates() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0);
        let t = obs_recursion_lti(&sys, 4).unwrap();
        let got: Vec<f64> = t.steps.iter().map(scalar).collect();
        let expect = [1.0, 1.5, 1.6, 21.0 / 13.0];
        for (g, e) in got.iter().zip(expect) {
            assert_relative_eq!(*g, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn lti_zero_measurement() {
        let sys = scalar_lti(1.0, 0.0, 1.0, 1.0);
        let t = obs_recursion_lti(&sys, 5).unwrap();
        assert!(t.steps.iter().all(|f| scalar(f) == 0.0));
    }

    #[test]
    fn lti_matches_lifted_dual_recursion() {
        for seed in 0..10 {
            let base = random_family_member(seed, 2, 1, 1);
            let lti = TimeInvariantLinearSystem::new(
                base.phi(0).clone(),
                base.c(0).clone(),
                base.q(0).clone(),
                base.r(0).clone(),
            )
            .unwrap();
            let lti_trace = obs_recursion_lti(&lti, 12).unwrap();
            let lifted = lti.lift(11);
            for w in 1..=12 {
                let ltv = obs_recursion_dual(&lifted, w).unwrap();
                assert!(rel_err(ltv.final_value().matrix(), lti_trace.steps[w - 1].matrix()) < 1e-10);
            }
        }
    }

    #[test]
    fn iterates_stay_symmetric_psd() {
        for seed in 0..10 {
            let sys = random_family_member(seed, 3, 2, 8);
            for trace in [cons_recursion(&sys, 9).unwrap(), obs_recursion_dual(&sys, 9).unwrap()] {
                for f in &trace.steps {
                    assert_eq!(f.matrix(), &f.matrix().transpose());
                    assert_eq!(f.sym_err(), 0.0);
                    assert!(min_eigenvalue(f.matrix()) >= -1e-9 * f.matrix().norm());
                }
            }
        }
    }

    #[test]
    fn window_checks() {
        let sys = scalar_lti(1.0, 1.0, 1.0, 1.0).lift(2);
        assert!(matches!(obs_recursion_dual(&sys, 4), Err(Error::Window { .. })));
        assert!(matches!(cons_recursion(&sys, 0), Err(Error::Window { .. })));
        assert!(obs_recursion_lti(&scalar_lti(1.0, 1.0, 1.0, 1.0), 0).is_err());
    }
}
