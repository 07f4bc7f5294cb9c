//! Window sweeps over the Gramian methods and the two experiment
//! reproductions built on them.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::direct::{cons_fim_direct, obs_fim_direct, CovarianceConstruction};
use crate::duality::dual_ltv;
use crate::error::{Error, Result};
use crate::info::SymmetricInfoMatrix;
use crate::io::format_float;
use crate::linalg::cholesky_sym;
use crate::recursive::{cons_recursion, measurement_info, obs_recursion_dual};
use crate::system::TimeVaryingLinearSystem;

/// Slack on diagonal monotonicity, relative to `‖F_prev‖_F`.
pub const MONOTONICITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    DirectBlockSum,
    DirectMform,
    RecursiveDual,
    NoNoise,
}

impl Method {
    /// Methods compared in a standard sweep.
    pub const SWEEP: [Method; 3] = [Method::DirectBlockSum, Method::DirectMform, Method::RecursiveDual];

    pub fn tag(self) -> &'static str {
        match self {
            Method::DirectBlockSum => "direct_thm1",
            Method::DirectMform => "direct_mform",
            Method::RecursiveDual => "recursive_dual",
            Method::NoNoise => "no_noise",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            Method::DirectBlockSum,
            Method::DirectMform,
            Method::RecursiveDual,
            Method::NoNoise,
        ]
        .into_iter()
        .find(|m| m.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramianKind {
    Obs,
    Cons,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianSweepRecord {
    pub method: Method,
    pub w: usize,
    /// Row-major entries of the FIM as computed, before symmetrisation.
    pub entries: Vec<f64>,
    pub sym_err: f64,
    pub min_eig: f64,
    pub wall_ns: u64,
    pub error: Option<String>,
}

impl GramianSweepRecord {
    pub fn from_fim(method: Method, w: usize, fim: &SymmetricInfoMatrix, wall_ns: u64) -> Self {
        let raw = fim.raw();
        let n = raw.nrows();
        let entries = (0..n).flat_map(|i| (0..n).map(move |j| raw[(i, j)])).collect();
        GramianSweepRecord {
            method,
            w,
            entries,
            sym_err: fim.sym_err(),
            min_eig: fim.min_eigenvalue(),
            wall_ns,
            error: None,
        }
    }

    pub fn failed(method: Method, w: usize, message: String, wall_ns: u64) -> Self {
        GramianSweepRecord {
            method,
            w,
            entries: Vec::new(),
            sym_err: f64::NAN,
            min_eig: f64::NAN,
            wall_ns,
            error: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Entry `(i, j)` (zero-based) of an `n×n` record.
    pub fn entry(&self, n: usize, i: usize, j: usize) -> f64 {
        self.entries[i * n + j]
    }
}

fn require_process_noise(sys: &TimeVaryingLinearSystem, w: usize) -> Result<()> {
    for k in 0..w.saturating_sub(1) {
        cholesky_sym(sys.q(k)).map_err(|_| {
            Error::Unsupported(format!(
                "recursive_dual needs Q ≻ 0, but Q_{k} is not positive definite"
            ))
        })?;
    }
    Ok(())
}

/// Observability Gramian of the first `w` measurements through the
/// constructability recursion of an independently built dual system.
pub fn obs_fim_via_dual(sys: &TimeVaryingLinearSystem, w: usize) -> Result<SymmetricInfoMatrix> {
    crate::deterministic::check_window(sys, w)?;
    let window = sys.subsystem(0, w - 1)?;
    let map = dual_ltv(&window)?;
    let trace = cons_recursion(&map.dual, w)?;
    let f = trace.final_value();
    Ok(SymmetricInfoMatrix::symmetric(
        f.matrix().clone(),
        w,
        0,
        crate::info::Direction::Forward,
    ))
}

/// One Gramian with one method.
///
/// `direct_thm1` and `recursive_dual` only exist for the observability
/// Gramian; `recursive_dual` also needs positive definite process noise.
pub fn compute_gramian(
    sys: &TimeVaryingLinearSystem,
    kind: GramianKind,
    method: Method,
    w: usize,
) -> Result<GramianSweepRecord> {
    crate::deterministic::check_window(sys, w)?;
    let start = Instant::now();
    let fim = match (kind, method) {
        (GramianKind::Obs, Method::DirectBlockSum) => obs_fim_direct(sys, w, CovarianceConstruction::BlockSum)?.fim,
        (GramianKind::Obs, Method::DirectMform) => obs_fim_direct(sys, w, CovarianceConstruction::MForm)?.fim,
        (GramianKind::Obs, Method::NoNoise) => obs_fim_direct(sys, w, CovarianceConstruction::BlockDiagonal)?.fim,
        (GramianKind::Obs, Method::RecursiveDual) => {
            require_process_noise(sys, w)?;
            obs_fim_via_dual(sys, w)?
        }
        (GramianKind::Cons, Method::DirectMform) => cons_fim_direct(sys, w, CovarianceConstruction::MForm)?.fim,
        (GramianKind::Cons, Method::NoNoise) => cons_fim_direct(sys, w, CovarianceConstruction::BlockDiagonal)?.fim,
        (GramianKind::Cons, m) => {
            return Err(Error::Unsupported(format!(
                "method {} is only available for the observability Gramian",
                m.tag()
            )))
        }
    };
    let wall_ns = start.elapsed().as_nanos() as u64;
    Ok(GramianSweepRecord::from_fim(method, w, &fim, wall_ns))
}

/// Observability Gramians for every `method × w ∈ 1..=w_max`, ordered by
/// `(method, w)`. Numerical failures become error rows.
pub fn run_sweep(sys: &TimeVaryingLinearSystem, w_max: usize, methods: &[Method]) -> Result<Vec<GramianSweepRecord>> {
    crate::deterministic::check_window(sys, w_max)?;
    let items: Vec<(Method, usize)> = methods.iter().flat_map(|&m| (1..=w_max).map(move |w| (m, w))).collect();
    let mut rows: Vec<GramianSweepRecord> = items
        .par_iter()
        .map(|&(method, w)| {
            let start = Instant::now();
            compute_gramian(sys, GramianKind::Obs, method, w).unwrap_or_else(|e| {
                GramianSweepRecord::failed(method, w, e.to_string(), start.elapsed().as_nanos() as u64)
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.method, r.w));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    /// Largest `sym_err` among successful rows.
    pub max_sym_err: f64,
    /// First `w` whose diagonal drops below its predecessor's, or whose row
    /// failed.
    pub first_monotonicity_break_w: Option<usize>,
}

/// Per-method summary of sweep rows (any order).
pub fn summarize(records: &[GramianSweepRecord], n: usize) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let mut rows: Vec<&GramianSweepRecord> = records.iter().filter(|r| r.method == method).collect();
            rows.sort_by_key(|r| r.w);
            let max_sym_err = rows.iter().filter(|r| r.is_ok()).map(|r| r.sym_err).fold(0.0, f64::max);
            let mut first_break = None;
            let mut prev: Option<&GramianSweepRecord> = None;
            for r in rows {
                if !r.is_ok() {
                    first_break = Some(r.w);
                    break;
                }
                if let Some(p) = prev {
                    let norm = p.entries.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let slack = MONOTONICITY_SLACK * norm;
                    if (0..n).any(|i| r.entry(n, i, i) < p.entry(n, i, i) - slack) {
                        first_break = Some(r.w);
                        break;
                    }
                }
                prev = Some(r);
            }
            MethodSummary {
                method,
                max_sym_err,
                first_monotonicity_break_w: first_break,
            }
        })
        .collect()
}

/// Per-state information split for the saturation experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationRow {
    pub k: usize,
    pub total_f11: f64,
    pub obs_f11: f64,
    pub cons_f11: f64,
}

/// Information about each `x_k`, `k = 0..=N`, from all `N + 1` measurements,
/// split into the future (observability) and past (constructability) parts.
pub fn information_profile(sys: &TimeVaryingLinearSystem) -> Result<Vec<InformationRow>> {
    let w = sys.horizon() + 1;
    let future = obs_recursion_dual(sys, w)?;
    let past = cons_recursion(sys, w)?;
    (0..w)
        .map(|k| {
            // future.steps[i] is anchored at x_{w−1−i}; past.steps[k] at x_k.
            let obs = future.steps[w - 1 - k].matrix();
            let cons = past.steps[k].matrix();
            let shared = measurement_info(sys.c(k), sys.r(k), k)?;
            Ok(InformationRow {
                k,
                total_f11: obs[(0, 0)] + cons[(0, 0)] - shared[(0, 0)],
                obs_f11: obs[(0, 0)],
                cons_f11: cons[(0, 0)],
            })
        })
        .collect()
}

/// Number of consecutive steps the plateau test looks at.
pub const PLATEAU_RUN: usize = 5;
/// Relative change below which consecutive totals count as flat.
pub const PLATEAU_TOL: f64 = 1e-3;

/// First interior `k` that starts `PLATEAU_RUN` consecutive steps of
/// relative change below `PLATEAU_TOL`.
pub fn find_plateau(rows: &[InformationRow]) -> Option<usize> {
    if rows.len() < PLATEAU_RUN + 3 {
        return None;
    }
    let flat = |k: usize| {
        let (a, b) = (rows[k].total_f11, rows[k + 1].total_f11);
        (b - a).abs() <= PLATEAU_TOL * a.abs().max(b.abs())
    };
    (1..rows.len() - 1 - PLATEAU_RUN).find(|&start| (start..start + PLATEAU_RUN).all(flat))
}

pub fn write_information_csv<W: Write>(rows: &[InformationRow], sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(["k", "total_f11", "obs_f11", "cons_f11"])?;
    for r in rows {
        wtr.write_record([
            r.k.to_string(),
            format_float(r.total_f11),
            format_float(r.obs_f11),
            format_float(r.cons_f11),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
