//! Autonomous discrete-time linear stochastic systems
//!
//! ```text
//! x_{k+1} = Φ_{k+1,k} x_k + w_k,   w_k ~ N(0, Q_k)
//! y_k     = C_k x_k + v_k,         v_k ~ N(0, R_k)
//! ```
//!
//! over a finite horizon `k = 0..=N`, together with state-transition algebra.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, cholesky_sym, condition_number, lu_solve};

/// Relative tolerance on `‖A − Aᵀ‖_F / ‖A‖_F` for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default cap on `cond(Φ_{k+1,k})`.
pub const PHI_CONDITION_CAP: f64 = 1e12;

/// Time-varying system over horizon `N`.
///
/// `phi[k]` is `Φ_{k+1,k}` and `q[k]` is `Q_k` for `k = 0..N`; `c[k]` and
/// `r[k]` exist for `k = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingLinearSystem {
    n: usize,
    p: usize,
    phi: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
}

/// Time-invariant system `(Φ, C, Q, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeInvariantLinearSystem {
    phi: DMatrix<f64>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str, k: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{what}[{k}] is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

impl TimeVaryingLinearSystem {
    /// Builds a system after checking that every dimension agrees.
    ///
    /// Positive definiteness and invertibility are not checked here; see
    /// [`validate`](Self::validate).
    pub fn new(
        phi: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let horizon = phi.len();
        if c.len() != horizon + 1 || r.len() != horizon + 1 || q.len() != horizon {
            return Err(Error::Dimension(format!(
                "sequence lengths phi={}, q={}, c={}, r={}; expected N, N, N+1, N+1",
                phi.len(),
                q.len(),
                c.len(),
                r.len()
            )));
        }
        let (p, n) = c[0].shape();
        if n == 0 || p == 0 {
            return Err(Error::Dimension("state and measurement dimensions must be ≥ 1".into()));
        }
        for (k, m) in phi.iter().enumerate() {
            check_shape(m, n, n, "phi", k)?;
        }
        for (k, m) in q.iter().enumerate() {
            check_shape(m, n, n, "q", k)?;
        }
        for (k, m) in c.iter().enumerate() {
            check_shape(m, p, n, "c", k)?;
        }
        for (k, m) in r.iter().enumerate() {
            check_shape(m, p, p, "r", k)?;
        }
        Ok(Self { n, p, phi, c, q, r })
    }

    /// Horizon `N`; the system has `N + 1` measurement times.
    pub fn horizon(&self) -> usize {
        self.phi.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn meas_dim(&self) -> usize {
        self.p
    }

    /// `Φ_{k+1,k}`.
    pub fn phi(&self, k: usize) -> &DMatrix<f64> {
        &self.phi[k]
    }

    pub fn c(&self, k: usize) -> &DMatrix<f64> {
        &self.c[k]
    }

    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k]
    }

    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k]
    }

    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phi
    }

    pub fn cs(&self) -> &[DMatrix<f64>] {
        &self.c
    }

    pub fn qs(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn rs(&self) -> &[DMatrix<f64>] {
        &self.r
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k > self.horizon() {
            return Err(Error::OutOfHorizon {
                index: k,
                horizon: self.horizon(),
            });
        }
        Ok(())
    }

    /// Ordered product `Φ_{ell,ell−1} ··· Φ_{k+1,k}` for `ell ≥ k`.
    pub(crate) fn forward_transition(&self, ell: usize, k: usize) -> DMatrix<f64> {
        debug_assert!(ell >= k && ell <= self.horizon());
        let mut m = DMatrix::identity(self.n, self.n);
        for j in k..ell {
            m = &self.phi[j] * m;
        }
        m
    }

    /// State transition matrix `Φ_{ell,k}`.
    ///
    /// Backward transitions (`ell < k`) are obtained by solving
    /// `Φ_{k,ell} X = I` rather than forming an explicit inverse.
    pub fn state_transition(&self, ell: usize, k: usize) -> Result<DMatrix<f64>> {
        self.check_index(ell)?;
        self.check_index(k)?;
        if ell >= k {
            return Ok(self.forward_transition(ell, k));
        }
        let fwd = self.forward_transition(k, ell);
        lu_solve(&fwd, &DMatrix::identity(self.n, self.n)).ok_or_else(|| Error::Singular {
            what: format!("state transition Φ_{{{k},{ell}}}"),
        })
    }

    /// The system restricted to times `start..=end`, re-indexed from zero.
    pub fn subsystem(&self, start: usize, end: usize) -> Result<Self> {
        self.check_index(end)?;
        if start > end {
            return Err(Error::OutOfHorizon {
                index: start,
                horizon: end,
            });
        }
        Ok(Self {
            n: self.n,
            p: self.p,
            phi: self.phi[start..end].to_vec(),
            c: self.c[start..=end].to_vec(),
            q: self.q[start..end].to_vec(),
            r: self.r[start..=end].to_vec(),
        })
    }

    /// Checks every invariant with the default conditioning cap.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with_cap(PHI_CONDITION_CAP)
    }

    pub fn validate_with_cap(&self, phi_condition_cap: f64) -> ValidationReport {
        let mut issues = Vec::new();
        for (k, q) in self.q.iter().enumerate() {
            check_covariance(q, CovarianceName::Q, k, &mut issues);
        }
        for (k, r) in self.r.iter().enumerate() {
            check_covariance(r, CovarianceName::R, k, &mut issues);
        }
        for (k, phi) in self.phi.iter().enumerate() {
            if phi.iter().any(|v| !v.is_finite()) {
                issues.push(ValidationIssue::NonFinite {
                    matrix: "phi",
                    index: k,
                });
                continue;
            }
            let cond = condition_number(phi);
            if cond.is_nan() || cond > phi_condition_cap {
                issues.push(ValidationIssue::IllConditioned {
                    index: k,
                    condition: cond,
                    cap: phi_condition_cap,
                });
            }
        }
        for (k, c) in self.c.iter().enumerate() {
            if c.iter().any(|v| !v.is_finite()) {
                issues.push(ValidationIssue::NonFinite { matrix: "c", index: k });
            }
        }
        ValidationReport { issues }
    }

    /// Returns `self` if [`validate`](Self::validate) passes.
    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.passed() {
            Ok(self)
        } else {
            Err(Error::Validation(report))
        }
    }
}

fn check_covariance(m: &DMatrix<f64>, name: CovarianceName, k: usize, issues: &mut Vec<ValidationIssue>) {
    if m.iter().any(|v| !v.is_finite()) {
        issues.push(ValidationIssue::NonFinite {
            matrix: name.as_str(),
            index: k,
        });
        return;
    }
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        issues.push(ValidationIssue::Asymmetric {
            matrix: name,
            index: k,
            relative: asym,
        });
    }
    if let Err(pivot) = cholesky_sym(m) {
        issues.push(ValidationIssue::NotPositiveDefinite {
            matrix: name,
            index: k,
            pivot,
        });
    }
}

impl TimeInvariantLinearSystem {
    pub fn new(phi: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        // Reuse the time-varying shape checks on a horizon-1 lift.
        TimeVaryingLinearSystem::new(
            vec![phi.clone()],
            vec![c.clone(), c.clone()],
            vec![q.clone()],
            vec![r.clone(), r.clone()],
        )?;
        Ok(Self { phi, c, q, r })
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Constant sequences over horizon `N`.
    pub fn lift(&self, horizon: usize) -> TimeVaryingLinearSystem {
        TimeVaryingLinearSystem {
            n: self.state_dim(),
            p: self.meas_dim(),
            phi: vec![self.phi.clone(); horizon],
            c: vec![self.c.clone(); horizon + 1],
            q: vec![self.q.clone(); horizon],
            r: vec![self.r.clone(); horizon + 1],
        }
    }

    pub fn validate(&self) -> ValidationReport {
        self.lift(1).validate()
    }

    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.passed() {
            Ok(self)
        } else {
            Err(Error::Validation(report))
        }
    }
}

/// `lift_lti`: the constant-sequence time-varying view of an LTI system.
pub fn lift_lti(sys: &TimeInvariantLinearSystem, horizon: usize) -> TimeVaryingLinearSystem {
    sys.lift(horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceName {
    Q,
    R,
}

impl CovarianceName {
    fn as_str(self) -> &'static str {
        match self {
            CovarianceName::Q => "q",
            CovarianceName::R => "r",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    Asymmetric {
        matrix: CovarianceName,
        index: usize,
        relative: f64,
    },
    NotPositiveDefinite {
        matrix: CovarianceName,
        index: usize,
        pivot: usize,
    },
    IllConditioned {
        index: usize,
        condition: f64,
        cap: f64,
    },
    NonFinite {
        matrix: &'static str,
        index: usize,
    },
}

impl ValidationIssue {
    /// Time index the issue refers to.
    pub fn index(&self) -> usize {
        match *self {
            ValidationIssue::Asymmetric { index, .. }
            | ValidationIssue::NotPositiveDefinite { index, .. }
            | ValidationIssue::IllConditioned { index, .. }
            | ValidationIssue::NonFinite { index, .. } => index,
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Asymmetric {
                matrix,
                index,
                relative,
            } => write!(
                f,
                "{}[{index}] is not symmetric (relative asymmetry {relative:.3e} > {SYMMETRY_TOL:e})",
                matrix.as_str()
            ),
            ValidationIssue::NotPositiveDefinite { matrix, index, pivot } => write!(
                f,
                "{}[{index}] is not positive definite (Cholesky pivot {pivot})",
                matrix.as_str()
            ),
            ValidationIssue::IllConditioned { index, condition, cap } => {
                write!(f, "phi[{index}] condition number {condition:.3e} exceeds {cap:e}")
            }
            ValidationIssue::NonFinite { matrix, index } => {
                write!(f, "{matrix}[{index}] has non-finite entries")
            }
        }
    }
}

/// Outcome of [`TimeVaryingLinearSystem::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "ok");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {issue}")?;
        }
        Ok(())
    }
}
