//! Generic SSA IR: operations own regions, regions own blocks, blocks own
//! operations. Everything lives in per-module arenas addressed by ids.

mod attr;
mod module;
mod types;
mod verify;

use std::fmt;

pub use attr::{format_float, Attribute};
pub use module::{Block, BlockId, Module, OpId, Operation, OperationState, Region, RegionId, Value};
pub use types::{Dim, Type};
pub use verify::{verify_module, Dominance};

pub(crate) use attr::{is_bare_identifier, quote};
pub(crate) use types::write_list;

/// Row-major offset of the `i`-th element in Fortran (column-major) order.
pub fn column_major_to_row_major(shape: &[i64], mut i: usize) -> usize {
    let mut idx = vec![0usize; shape.len()];
    for (k, d) in shape.iter().enumerate() {
        let d = (*d).max(1) as usize;
        idx[k] = i % d;
        i /= d;
    }
    idx.iter().zip(shape).fold(0, |acc, (x, d)| acc * (*d).max(1) as usize + x)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IrError {
    #[error("type mismatch: expected {expected}, found {found}")]
    TypeMismatch { expected: String, found: String },
}

/// A verifier or pass diagnostic anchored at an op path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn at(m: &Module, op: OpId, message: impl Into<String>) -> Self {
        Diagnostic::new(m.op_path(op), message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::column_major_to_row_major;

    #[test]
    fn fortran_order_maps_to_row_major() {
        let order: Vec<usize> = (0..6).map(|i| column_major_to_row_major(&[2, 3], i)).collect();
        assert_eq!(order, [0, 3, 1, 4, 2, 5]);
        assert_eq!(column_major_to_row_major(&[5], 4), 4);
    }
}
