//! Optimization passes over the lowered standard-dialect IR.

pub mod analysis;
mod hoist;
mod kernels;
mod parallel;
mod affine;
mod static_shapes;

use std::collections::BTreeMap;

use crate::ir::{Diagnostic, Module};

pub use affine::promote_to_affine;
pub use hoist::hoist_descriptor_loads;
pub use kernels::acc_kernels_to_parallel;
pub use parallel::{parallelize_loops, DependenceSummary};
pub use static_shapes::promote_static_shapes;

/// Outcome of one pass application.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PassResult {
    pub changed: bool,
    pub stats: BTreeMap<String, u64>,
    pub diagnostics: Vec<Diagnostic>,
}

impl PassResult {
    pub(crate) fn bump(&mut self, key: &str, n: u64) {
        if n > 0 {
            *self.stats.entry(key.to_string()).or_insert(0) += n;
            self.changed = true;
        }
    }

    pub fn stat(&self, key: &str) -> u64 {
        self.stats.get(key).copied().unwrap_or(0)
    }

    /// `key=value` lines, sorted by key.
    pub fn format_stats(&self) -> String {
        self.stats.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub const PASS_NAMES: &[&str] = &[
    "promote-static-shapes",
    "hoist-descriptor-loads",
    "promote-to-affine",
    "parallelize-loops",
    "acc-kernels-to-parallel",
];

/// Runs a pass by its pipeline name. Returns `None` for unknown names.
pub fn run_pass(name: &str, m: &mut Module) -> Option<PassResult> {
    Some(match name {
        "promote-static-shapes" => promote_static_shapes(m),
        "hoist-descriptor-loads" => hoist_descriptor_loads(m),
        "promote-to-affine" => promote_to_affine(m),
        "parallelize-loops" => parallelize_loops(m),
        "acc-kernels-to-parallel" => acc_kernels_to_parallel(m),
        _ => return None,
    })
}
