//! Reference interpreter for both the FIR/HLFIR input subset and the
//! standard-dialect output.

mod arith;
mod exec;
mod memory;
mod value;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ir::Module;

pub use arith::{binop, cmpi, reduction_init, reduction_op};
pub use exec::fortran_trip_count;
pub use memory::{Observed, Snapshots, StorageClass};
pub use value::{BufferView, RuntimeValue};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub step_budget: u64,
    pub trace_accesses: bool,
    pub count_ops: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step_budget: 100_000_000,
            trace_accesses: true,
            count_ops: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    OutOfBounds { array: String, index: Vec<i64>, shape: Vec<i64> },
    UseAfterFree(String),
    NullDereference,
    DivisionByZero,
    StepBudgetExceeded(u64),
    ZeroStep,
    Unsupported(String),
    Invalid(String),
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeErrorKind::OutOfBounds { array, index, shape } => {
                write!(f, "out-of-bounds access to {array} at {index:?} (shape {shape:?})")
            }
            RuntimeErrorKind::UseAfterFree(a) => write!(f, "use of {a} after it was released"),
            RuntimeErrorKind::NullDereference => f.write_str("dereference of a null reference"),
            RuntimeErrorKind::DivisionByZero => f.write_str("integer division by zero"),
            RuntimeErrorKind::StepBudgetExceeded(n) => write!(f, "step budget of {n} exceeded"),
            RuntimeErrorKind::ZeroStep => f.write_str("loop step is zero"),
            RuntimeErrorKind::Unsupported(s) => write!(f, "unsupported: {s}"),
            RuntimeErrorKind::Invalid(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{path}: {kind}")]
pub struct RuntimeError {
    pub path: String,
    pub kind: RuntimeErrorKind,
}

/// Counters and labeled element accesses collected during a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceRecord {
    pub counters: BTreeMap<String, u64>,
    pub accesses: Vec<(String, Vec<i64>)>,
    pub dropped_accesses: u64,
    pub stack_leaks: u64,
}

impl TraceRecord {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    /// Line-oriented export: `counter <name> <value>` then
    /// `access <array> <i,j,..>`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.counters {
            out.push_str(&format!("counter {k} {v}\n"));
        }
        out.push_str(&format!("counter stack_leaks {}\n", self.stack_leaks));
        for (a, idx) in &self.accesses {
            let idx: Vec<String> = idx.iter().map(i64::to_string).collect();
            if idx.is_empty() {
                out.push_str(&format!("access {a}\n"));
            } else {
                out.push_str(&format!("access {a} {}\n", idx.join(",")));
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub results: Vec<RuntimeValue>,
    pub trace: TraceRecord,
    /// Final contents of every labeled buffer, one entry per release.
    pub final_states: Snapshots,
    pub heap_leaks: Vec<String>,
    pub stack_leaks: u64,
}

const INTERP_STACK: usize = 1 << 29;

pub fn run_module(m: &Module, entry: &str, args: Vec<RuntimeValue>) -> Result<RunOutcome, RuntimeError> {
    run_module_with(m, entry, args, &RunOptions::default())
}

pub fn run_module_with(
    m: &Module,
    entry: &str,
    args: Vec<RuntimeValue>,
    opts: &RunOptions,
) -> Result<RunOutcome, RuntimeError> {
    let func = m
        .lookup_symbol(entry)
        .filter(|f| m.op(*f).name == "func.func")
        .ok_or_else(|| RuntimeError {
            path: format!("@{entry}"),
            kind: RuntimeErrorKind::Invalid(format!("no function named @{entry}")),
        })?;
    let run = || {
        let mut mc = exec::Machine::new(m, opts.clone())?;
        let args = mc.prepare_args(func, args)?;
        let results = mc.call(func, args, None)?;
        Ok::<_, RuntimeError>((results, mc.finish()))
    };
    // Deep recursion in the evaluated program recurses here too.
    let (results, (mut mem, trace)) = std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(INTERP_STACK)
            .spawn_scoped(s, run)
            .expect("spawn interpreter thread")
            .join()
            .unwrap_or_else(|p| std::panic::resume_unwind(p))
    })?;
    let heap_leaks = mem.live_heap_labels();
    mem.snapshot_live();
    Ok(RunOutcome {
        results,
        stack_leaks: trace.stack_leaks,
        trace,
        final_states: mem.snapshots,
        heap_leaks,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Equal,
    Mismatch(String),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("reference run failed: {0}")]
    Reference(RuntimeError),
    #[error("candidate run failed: {0}")]
    Candidate(RuntimeError),
}

fn values_close(a: &RuntimeValue, b: &RuntimeValue, tol: f64) -> bool {
    match (a, b) {
        (RuntimeValue::Float { value: x, width: wa }, RuntimeValue::Float { value: y, width: wb }) => {
            wa == wb && (x == y || (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
        }
        _ => a == b,
    }
}

fn observed_close(a: &Observed, b: &Observed, tol: f64) -> bool {
    match (a, b) {
        (Observed::Scalar(x), Observed::Scalar(y)) => values_close(x, y, tol),
        _ => a == b,
    }
}

/// Compares return values and labeled final states of two runs.
pub fn compare_outcomes(a: &RunOutcome, b: &RunOutcome, tol: f64) -> Verdict {
    if a.results.len() != b.results.len() {
        return Verdict::Mismatch(format!("result count {} vs {}", a.results.len(), b.results.len()));
    }
    for (i, (x, y)) in a.results.iter().zip(&b.results).enumerate() {
        let comparable = !matches!(x, RuntimeValue::Buffer(_)) || !matches!(y, RuntimeValue::Buffer(_));
        if comparable && !values_close(x, y, tol) {
            return Verdict::Mismatch(format!("result #{i}: {x} vs {y}"));
        }
    }
    let labels: std::collections::BTreeSet<&String> = a.final_states.keys().chain(b.final_states.keys()).collect();
    for label in labels {
        let (Some(sa), Some(sb)) = (a.final_states.get(label), b.final_states.get(label)) else {
            return Verdict::Mismatch(format!("{label}: present in only one run"));
        };
        if sa.len() != sb.len() {
            return Verdict::Mismatch(format!("{label}: {} vs {} instances", sa.len(), sb.len()));
        }
        for (k, (xa, xb)) in sa.iter().zip(sb).enumerate() {
            if xa.len() != xb.len() {
                return Verdict::Mismatch(format!("{label}[{k}]: {} vs {} elements", xa.len(), xb.len()));
            }
            for (e, (p, q)) in xa.iter().zip(xb).enumerate() {
                if !observed_close(p, q, tol) {
                    return Verdict::Mismatch(format!("{label}[{k}] element {e}: {p:?} vs {q:?}"));
                }
            }
        }
    }
    Verdict::Equal
}

/// Runs `entry` in both modules and compares observable behavior.
pub fn compare_runs(
    reference: &Module,
    candidate: &Module,
    entry: &str,
    args: &[RuntimeValue],
    tol: f64,
) -> Result<Verdict, CompareError> {
    let a = run_module(reference, entry, args.to_vec()).map_err(CompareError::Reference)?;
    let b = run_module(candidate, entry, args.to_vec()).map_err(CompareError::Candidate)?;
    Ok(compare_outcomes(&a, &b, tol))
}
