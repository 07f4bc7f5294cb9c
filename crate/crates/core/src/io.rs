//! System documents (JSON) and sweep CSV output.
//!
//! A document looks like
//!
//! ```json
//! { "kind": "ltv", "n": 2, "p": 1, "N": 30,
//!   "phi": [[2, "-1+sin(k*pi/18)"], ["cos(k*pi/18)", 1]],
//!   "c": [[1, 0]], "q": [[0.036, 0.012], [0.012, 0.06]], "r": [[0.1]] }
//! ```
//!
//! Each of `phi`, `c`, `q`, `r` is either one matrix (array of rows) whose
//! entries are numbers or expressions in `k`, evaluated at every time index,
//! or, for `ltv` documents, an explicit array of per-index matrices.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expr};
use crate::sweep::{GramianSweepRecord, MethodSummary};
use crate::system::{TimeInvariantLinearSystem, TimeVaryingLinearSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Lti,
    Ltv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expression(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// One matrix, evaluated at every `k`.
    Template(Vec<Vec<Entry>>),
    /// One matrix per time index.
    Sequence(Vec<Vec<Vec<Entry>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpecDocument {
    pub kind: SystemKind,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub phi: MatrixSpec,
    pub c: MatrixSpec,
    pub q: MatrixSpec,
    pub r: MatrixSpec,
}

/// A loaded, validated system.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSystem {
    Lti {
        system: TimeInvariantLinearSystem,
        /// Horizon to lift to when a time-varying view is needed.
        horizon: usize,
    },
    Ltv(TimeVaryingLinearSystem),
}

impl LoadedSystem {
    /// Time-varying view (LTI systems are lifted to their stored horizon).
    pub fn to_ltv(&self) -> TimeVaryingLinearSystem {
        match self {
            LoadedSystem::Lti { system, horizon } => system.lift(*horizon),
            LoadedSystem::Ltv(sys) => sys.clone(),
        }
    }

    pub fn as_lti(&self) -> Option<&TimeInvariantLinearSystem> {
        match self {
            LoadedSystem::Lti { system, .. } => Some(system),
            LoadedSystem::Ltv(_) => None,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            LoadedSystem::Lti { system, .. } => system.state_dim(),
            LoadedSystem::Ltv(sys) => sys.state_dim(),
        }
    }
}

/// Entries compiled once, evaluated per time index.
enum CompiledEntry {
    Const(f64),
    Expr(Expr),
}

struct CompiledMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<CompiledEntry>,
    uses_k: bool,
}

impl CompiledMatrix {
    fn compile(rows: &[Vec<Entry>], name: &str, shape: (usize, usize)) -> Result<Self> {
        if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
            return Err(Error::Schema(format!(
                "{name} must be {}x{} (array of {} rows with {} entries)",
                shape.0, shape.1, shape.0, shape.1
            )));
        }
        let mut entries = Vec::with_capacity(shape.0 * shape.1);
        let mut uses_k = false;
        for (i, row) in rows.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                entries.push(match e {
                    Entry::Number(v) => CompiledEntry::Const(*v),
                    Entry::Expression(text) => {
                        let expr = parse_expression(text).map_err(|source| Error::Expression {
                            location: format!("{name}[{i}][{j}]"),
                            source,
                        })?;
                        uses_k |= expr.uses_k();
                        CompiledEntry::Expr(expr)
                    }
                });
            }
        }
        Ok(Self {
            rows: shape.0,
            cols: shape.1,
            entries,
            uses_k,
        })
    }

    fn eval(&self, k: usize, name: &str) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = match &self.entries[i * self.cols + j] {
                    CompiledEntry::Const(v) => *v,
                    CompiledEntry::Expr(e) => e.eval(k as f64),
                };
                if !v.is_finite() {
                    return Err(Error::Schema(format!("{name}[{i}][{j}] is not finite at k={k}")));
                }
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

fn eval_sequence(spec: &MatrixSpec, name: &str, shape: (usize, usize), count: usize) -> Result<Vec<DMatrix<f64>>> {
    match spec {
        MatrixSpec::Template(rows) => {
            let m = CompiledMatrix::compile(rows, name, shape)?;
            (0..count).map(|k| m.eval(k, name)).collect()
        }
        MatrixSpec::Sequence(seq) => {
            if seq.len() != count {
                return Err(Error::Schema(format!(
                    "{name} lists {} matrices, expected {count}",
                    seq.len()
                )));
            }
            seq.iter()
                .enumerate()
                .map(|(k, rows)| {
                    let label = format!("{name}[{k}]");
                    CompiledMatrix::compile(rows, &label, shape)?.eval(k, &label)
                })
                .collect()
        }
    }
}

fn eval_constant(spec: &MatrixSpec, name: &str, shape: (usize, usize)) -> Result<DMatrix<f64>> {
    match spec {
        MatrixSpec::Template(rows) => {
            let m = CompiledMatrix::compile(rows, name, shape)?;
            if m.uses_k {
                return Err(Error::Schema(format!("{name}: lti documents may not depend on k")));
            }
            m.eval(0, name)
        }
        MatrixSpec::Sequence(_) => Err(Error::Schema(format!("{name}: lti documents take a single matrix"))),
    }
}

impl SystemSpecDocument {
    /// Evaluates every entry and validates the resulting system.
    pub fn build(&self) -> Result<LoadedSystem> {
        let (n, p) = (self.n, self.p);
        if n == 0 || p == 0 {
            return Err(Error::Schema("n and p must be at least 1".into()));
        }
        match self.kind {
            SystemKind::Lti => {
                let system = TimeInvariantLinearSystem::new(
                    eval_constant(&self.phi, "phi", (n, n))?,
                    eval_constant(&self.c, "c", (p, n))?,
                    eval_constant(&self.q, "q", (n, n))?,
                    eval_constant(&self.r, "r", (p, p))?,
                )?
                .validated()?;
                Ok(LoadedSystem::Lti {
                    system,
                    horizon: self.horizon.unwrap_or(0),
                })
            }
            SystemKind::Ltv => {
                let big_n = self
                    .horizon
                    .ok_or_else(|| Error::Schema("ltv documents need \"N\"".into()))?;
                let sys = TimeVaryingLinearSystem::new(
                    eval_sequence(&self.phi, "phi", (n, n), big_n)?,
                    eval_sequence(&self.c, "c", (p, n), big_n + 1)?,
                    eval_sequence(&self.q, "q", (n, n), big_n)?,
                    eval_sequence(&self.r, "r", (p, p), big_n + 1)?,
                )?
                .validated()?;
                Ok(LoadedSystem::Ltv(sys))
            }
        }
    }

    /// Numeric document describing `sys` exactly.
    pub fn from_system(sys: &LoadedSystem) -> Self {
        fn rows(m: &DMatrix<f64>) -> Vec<Vec<Entry>> {
            m.row_iter()
                .map(|r| r.iter().map(|&v| Entry::Number(v)).collect())
                .collect()
        }
        fn seq(ms: &[DMatrix<f64>]) -> MatrixSpec {
            MatrixSpec::Sequence(ms.iter().map(rows).collect())
        }
        match sys {
            LoadedSystem::Lti { system, horizon } => Self {
                kind: SystemKind::Lti,
                n: system.state_dim(),
                p: system.meas_dim(),
                horizon: Some(*horizon),
                phi: MatrixSpec::Template(rows(system.phi())),
                c: MatrixSpec::Template(rows(system.c())),
                q: MatrixSpec::Template(rows(system.q())),
                r: MatrixSpec::Template(rows(system.r())),
            },
            LoadedSystem::Ltv(s) => Self {
                kind: SystemKind::Ltv,
                n: s.state_dim(),
                p: s.meas_dim(),
                horizon: Some(s.horizon()),
                phi: seq(s.phis()),
                c: seq(s.cs()),
                q: seq(s.qs()),
                r: seq(s.rs()),
            },
        }
    }
}

pub fn parse_system(text: &str) -> Result<LoadedSystem> {
    let doc: SystemSpecDocument = serde_json::from_str(text)?;
    doc.build()
}

pub fn read_system<R: Read>(reader: R) -> Result<LoadedSystem> {
    let doc: SystemSpecDocument = serde_json::from_reader(reader)?;
    doc.build()
}

pub fn load_system(path: impl AsRef<Path>) -> Result<LoadedSystem> {
    read_system(BufReader::new(File::open(path)?))
}

pub fn write_system<W: Write>(sys: &LoadedSystem, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, &SystemSpecDocument::from_system(sys))?;
    Ok(())
}

/// Sweep CSV header for state dimension `n`.
pub fn sweep_header(n: usize) -> Vec<String> {
    let mut h = vec!["method".to_string(), "w".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            h.push(format!("f{i}{j}"));
        }
    }
    h.extend(["sym_err", "min_eig", "wall_ns", "error"].map(String::from));
    h
}

/// Shortest round-trip text for `v`, in exponent form for very small or
/// very large magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format_float(v)
    } else {
        String::new()
    }
}

/// Writes the header and one row per record.
///
/// Successful rows leave `error` empty; failed rows leave every numeric cell
/// empty and carry the message in `error`.
pub fn write_sweep_csv<W: Write>(records: &[GramianSweepRecord], n: usize, sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(sweep_header(n))?;
    for rec in records {
        let mut row = vec![rec.method.tag().to_string(), rec.w.to_string()];
        match &rec.error {
            None => {
                if rec.entries.len() != n * n {
                    return Err(Error::Dimension(format!(
                        "record has {} entries, expected {}",
                        rec.entries.len(),
                        n * n
                    )));
                }
                row.extend(rec.entries.iter().map(|&v| cell(v)));
                row.push(cell(rec.sym_err));
                row.push(cell(rec.min_eig));
                row.push(rec.wall_ns.to_string());
                row.push(String::new());
            }
            Some(msg) => {
                row.extend(std::iter::repeat_n(String::new(), n * n + 2));
                row.push(rec.wall_ns.to_string());
                row.push(msg.replace('\n', " "));
            }
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summaries: &[MethodSummary], sink: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(["method", "max_sym_err", "first_monotonicity_break_w"])?;
    for s in summaries {
        wtr.write_record([
            s.method.tag().to_string(),
            cell(s.max_sym_err),
            s.first_monotonicity_break_w.map(|w| w.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
