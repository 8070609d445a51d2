//! Small helpers shared by the optimization passes.

use crate::ir::{Attribute, Module, OpId, Type, Value};

pub const LOOP_OPS: &[&str] = &["scf.for", "affine.for", "scf.parallel", "scf.while"];

pub fn is_loop(m: &Module, op: OpId) -> bool {
    LOOP_OPS.contains(&m.op(op).name.as_str())
}

/// Integer value of an `arith.constant`.
pub fn constant_int(m: &Module, v: Value) -> Option<i64> {
    let op = m.defining_op(v)?;
    let d = m.op(op);
    if d.name != "arith.constant" {
        return None;
    }
    match d.attr("value") {
        Some(Attribute::Int(x, _)) => Some(*x),
        _ => None,
    }
}

/// Induction variable of a counted loop.
pub fn induction_var(m: &Module, op: OpId) -> Option<Value> {
    let b = m.entry_block(op)?;
    (!m.block(b).args.is_empty()).then(|| m.arg(b, 0))
}

/// True if `v` is defined inside some loop.
pub fn defined_in_loop(m: &Module, v: Value) -> bool {
    let owner = match m.defining_op(v) {
        Some(op) => m.parent_op(op),
        None => m.value_block(v).and_then(|b| m.block_parent_op(b)),
    };
    let mut cur = owner;
    while let Some(op) = cur {
        if is_loop(m, op) {
            return true;
        }
        cur = m.parent_op(op);
    }
    false
}

/// `base + offset`, where `base` is an accepted leaf value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexForm {
    pub base: Option<Value>,
    pub offset: i64,
}

/// Decomposes an index into `base + constant`, following addi/subi chains
/// with constant operands. `is_base` decides which leaves are acceptable.
pub fn index_form(m: &Module, v: Value, is_base: &dyn Fn(Value) -> bool) -> Option<IndexForm> {
    if let Some(c) = constant_int(m, v) {
        return Some(IndexForm { base: None, offset: c });
    }
    if is_base(v) {
        return Some(IndexForm { base: Some(v), offset: 0 });
    }
    let op = m.defining_op(v)?;
    let d = m.op(op);
    let (a, b) = match d.operands.as_slice() {
        [a, b] if m.value_type(v) == &Type::Index => (*a, *b),
        _ => return None,
    };
    match d.name.as_str() {
        "arith.addi" => {
            let (x, y) = (index_form(m, a, is_base)?, index_form(m, b, is_base)?);
            let base = match (x.base, y.base) {
                (Some(_), Some(_)) => return None,
                (p, q) => p.or(q),
            };
            Some(IndexForm {
                base,
                offset: x.offset.checked_add(y.offset)?,
            })
        }
        "arith.subi" => {
            let (x, y) = (index_form(m, a, is_base)?, index_form(m, b, is_base)?);
            if y.base.is_some() {
                return None;
            }
            Some(IndexForm {
                base: x.base,
                offset: x.offset.checked_sub(y.offset)?,
            })
        }
        "arith.muli" => {
            let (x, y) = (index_form(m, a, is_base)?, index_form(m, b, is_base)?);
            match (x, y) {
                (f, IndexForm { base: None, offset: 1 }) | (IndexForm { base: None, offset: 1 }, f) => Some(f),
                (IndexForm { base: None, offset: p }, IndexForm { base: None, offset: q }) => Some(IndexForm {
                    base: None,
                    offset: p.checked_mul(q)?,
                }),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Memory accesses: (memref operand, index operands, constant offsets, is
/// write).
pub fn access_parts(m: &Module, op: OpId) -> Option<(Value, Vec<Value>, Vec<i64>, bool)> {
    let d = m.op(op);
    let (mem_pos, write) = match d.name.as_str() {
        "memref.load" | "affine.load" => (0, false),
        "memref.store" | "affine.store" => (1, true),
        _ => return None,
    };
    let idx = d.operands[mem_pos + 1..].to_vec();
    let offsets = d
        .attr("offsets")
        .and_then(Attribute::as_dense)
        .map(<[i64]>::to_vec)
        .unwrap_or_else(|| vec![0; idx.len()]);
    Some((d.operands[mem_pos], idx, offsets, write))
}

/// Removes unused pure ops (constants and integer arithmetic) nested in
/// `root`, repeating until nothing changes.
pub fn remove_dead_arith(m: &mut Module, root: OpId) -> usize {
    let mut removed = 0;
    loop {
        let dead: Vec<OpId> = m
            .nested_ops(root)
            .into_iter()
            .filter(|o| {
                let d = m.op(*o);
                matches!(
                    d.name.as_str(),
                    "arith.constant" | "arith.addi" | "arith.subi" | "arith.muli" | "arith.index_cast"
                ) && m.results(*o).iter().all(|r| !m.has_uses(*r))
            })
            .collect();
        if dead.is_empty() {
            return removed;
        }
        for o in dead {
            m.erase_op(o);
            removed += 1;
        }
    }
}
