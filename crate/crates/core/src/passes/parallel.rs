use std::collections::BTreeSet;

use crate::ir::{Module, OpId, Value};

use super::analysis::{access_parts, index_form, induction_var, IndexForm};
use super::PassResult;

/// Storage an access may touch. Function arguments may alias each other;
/// unknown roots alias everything.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Root {
    Local(Value),
    /// Buffer currently held by an allocatable container.
    Held(Value),
    Arg,
    Global(String),
    Unknown,
}

impl Root {
    fn aliases(&self, other: &Root) -> bool {
        matches!(self, Root::Unknown) || matches!(other, Root::Unknown) || self == other
    }
}

/// How a memref value reaches its storage. Direct views address the whole
/// buffer, so equal index tuples mean equal elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum View {
    Direct(Value),
    Opaque(Value),
}

fn view_of(m: &Module, v: Value) -> (Root, View) {
    let Some(op) = m.defining_op(v) else {
        let entry_of_func = m
            .value_block(v)
            .and_then(|b| m.block_parent_op(b))
            .is_some_and(|p| m.op(p).name == "func.func");
        return if entry_of_func {
            (Root::Arg, View::Direct(v))
        } else {
            (Root::Unknown, View::Opaque(v))
        };
    };
    let d = m.op(op);
    match d.name.as_str() {
        "memref.alloca" | "memref.alloc" => (Root::Local(v), View::Direct(v)),
        "memref.get_global" => match d.attr("name").and_then(|a| a.as_symbol()) {
            Some(n) => (Root::Global(n.to_string()), View::Direct(v)),
            None => (Root::Unknown, View::Opaque(v)),
        },
        "memref.load" if d.operands.len() == 1 => {
            let outer = d.operands[0];
            match view_of(m, outer).0 {
                Root::Local(_) => (Root::Held(outer), View::Direct(outer)),
                _ => (Root::Unknown, View::Opaque(v)),
            }
        }
        "memref.subview" | "memref.cast" => (view_of(m, d.operands[0]).0, View::Opaque(v)),
        _ => (Root::Unknown, View::Opaque(v)),
    }
}

struct Access {
    root: Root,
    view: View,
    write: bool,
    forms: Option<Vec<IndexForm>>,
}

/// Reads, writes and loop-carried facts for one counted loop.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependenceSummary {
    pub reads: BTreeSet<Root>,
    pub writes: BTreeSet<Root>,
    pub carried: bool,
    pub reduction: bool,
}

const HARMLESS: &[&str] = &[
    "memref.load",
    "memref.store",
    "affine.load",
    "affine.store",
    "memref.alloca",
    "memref.dim",
    "memref.subview",
    "memref.cast",
    "memref.get_global",
    "scf.for",
    "scf.if",
    "scf.yield",
    "scf.parallel",
    "scf.reduce",
    "affine.for",
    "affine.yield",
    "memref.alloca_scope",
    "memref.alloca_scope.return",
    "ub.poison",
];

impl DependenceSummary {
    pub fn compute(m: &Module, lp: OpId) -> DependenceSummary {
        let mut s = DependenceSummary::default();
        let Some(iv) = induction_var(m, lp) else {
            s.carried = true;
            return s;
        };
        // Leaves allowed in index forms: induction variables of this loop
        // or loops inside it, and values fixed for the whole loop.
        let is_base = |v: Value| {
            if !m.defined_within(v, lp) {
                return true;
            }
            m.defining_op(v).is_none()
                && m.value_block(v)
                    .and_then(|b| m.block_parent_op(b))
                    .is_some_and(|p| matches!(m.op(p).name.as_str(), "scf.for" | "affine.for" | "scf.parallel"))
        };
        let mut accs = Vec::new();
        for o in m.nested_ops(lp) {
            let name = m.op(o).name.as_str();
            if !(HARMLESS.contains(&name) || name.starts_with("arith.") || name.starts_with("math.")) {
                s.carried = true;
            }
            let Some((mem, idx, offsets, write)) = access_parts(m, o) else { continue };
            let (root, view) = view_of(m, mem);
            if let Root::Local(r) | Root::Held(r) = &root {
                if m.defined_within(*r, lp) {
                    continue;
                }
            }
            let forms = idx
                .iter()
                .zip(offsets)
                .map(|(v, off)| {
                    let f = index_form(m, *v, &is_base)?;
                    Some(IndexForm {
                        base: f.base,
                        offset: f.offset.checked_add(off)?,
                    })
                })
                .collect();
            if write {
                s.writes.insert(root.clone());
            } else {
                s.reads.insert(root.clone());
            }
            accs.push(Access { root, view, write, forms });
        }
        for w in accs.iter().filter(|a| a.write) {
            let related: Vec<&Access> = accs.iter().filter(|a| a.root.aliases(&w.root)).collect();
            let Some(forms) = &w.forms else {
                s.carried = true;
                continue;
            };
            if forms.is_empty() {
                s.carried = true;
                if related.iter().any(|a| !a.write) {
                    s.reduction = true;
                }
                continue;
            }
            let consistent = related.iter().all(|a| {
                matches!(a.view, View::Direct(_)) && a.view == w.view && a.forms.as_ref() == Some(forms)
            });
            if !consistent || !forms.iter().any(|f| f.base == Some(iv)) {
                s.carried = true;
            }
        }
        s
    }
}

/// Marks loops without loop-carried dependences as `scf.parallel`.
pub fn parallelize_loops(m: &mut Module) -> PassResult {
    let mut res = PassResult::default();
    let loops: Vec<OpId> = m.collect_ops().into_iter().filter(|o| m.op(*o).name == "scf.for").collect();
    let eligible: Vec<OpId> = loops
        .into_iter()
        .filter(|l| {
            let s = DependenceSummary::compute(m, *l);
            !s.carried && !s.reduction
        })
        .collect();
    for &l in &eligible {
        make_parallel(m, l);
    }
    res.bump("loops_parallelized", eligible.len() as u64);
    res
}

pub(crate) fn make_parallel(m: &mut Module, l: OpId) {
    m.op_mut(l).name = "scf.parallel".into();
    let body = m.entry_block(l).expect("loop body");
    if let Some(&t) = m.block(body).ops().last() {
        if m.op(t).name == "scf.yield" {
            m.op_mut(t).name = "scf.reduce".into();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_module;

    fn one_loop(body: &str) -> String {
        format!(
            r#"func.func @f(%a: memref<8xf64>, %b: memref<8xf64>, %s: memref<f64>) {{
  %c0 = arith.constant 0 : index
  %c1 = arith.constant 1 : index
  %c7 = arith.constant 7 : index
  "scf.for"(%c0, %c7, %c1) ({{
  ^bb0(%i: index):
    %n = "arith.addi"(%i, %c1) : (index, index) -> index
{body}    "scf.yield"() : () -> ()
  }}) : (index, index, index) -> ()
  func.return
}}
"#
        )
    }

    fn summary(body: &str) -> DependenceSummary {
        let m = parse_module(&one_loop(body)).unwrap();
        let l = m.collect_ops().into_iter().find(|o| m.op(*o).name == "scf.for").unwrap();
        DependenceSummary::compute(&m, l)
    }

    #[test]
    fn elementwise_update_is_parallel() {
        let s = summary("    %x = \"memref.load\"(%a, %i) : (memref<8xf64>, index) -> f64\n    \"memref.store\"(%x, %a, %i) : (f64, memref<8xf64>, index) -> ()\n");
        assert!(!s.carried && !s.reduction);
    }

    #[test]
    fn shifted_read_is_carried() {
        let s = summary("    %x = \"memref.load\"(%a, %n) : (memref<8xf64>, index) -> f64\n    \"memref.store\"(%x, %a, %i) : (f64, memref<8xf64>, index) -> ()\n");
        assert!(s.carried);
    }

    #[test]
    fn arguments_may_alias() {
        let s = summary("    %x = \"memref.load\"(%b, %n) : (memref<8xf64>, index) -> f64\n    \"memref.store\"(%x, %a, %i) : (f64, memref<8xf64>, index) -> ()\n");
        assert!(s.carried);
    }

    #[test]
    fn scalar_accumulation_is_a_reduction() {
        let s = summary("    %x = \"memref.load\"(%s) : (memref<f64>) -> f64\n    %y = \"arith.addf\"(%x, %x) : (f64, f64) -> f64\n    \"memref.store\"(%y, %s) : (f64, memref<f64>) -> ()\n");
        assert!(s.carried && s.reduction);
    }
}
