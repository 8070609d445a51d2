use std::collections::BTreeMap;

use crate::ir::{Module, OpId, OperationState, Value};

use super::analysis::is_loop;
use super::PassResult;

/// Rank-0 load of a memref-of-memref.
fn is_descriptor_load(m: &Module, op: OpId) -> bool {
    let d = m.op(op);
    d.name == "memref.load"
        && d.operands.len() == 1
        && m.value_type(d.operands[0]).element().is_some_and(|e| e.is_memref())
}

/// True if something inside `lp` may change what `outer` holds.
fn writes_container(m: &Module, lp: OpId, outer: Value) -> bool {
    m.nested_ops(lp).into_iter().any(|o| {
        m.op(o).operands.contains(&outer) && !is_descriptor_load(m, o)
    })
}

fn target_loop(m: &Module, load: OpId, outer: Value) -> Option<OpId> {
    let mut target = None;
    let mut cur = load;
    while let Some(p) = m.parent_op(cur) {
        let name = m.op(p).name.as_str();
        if name == "func.func" || m.defined_within(outer, p) {
            break;
        }
        if is_loop(m, p) {
            if writes_container(m, p, outer) {
                break;
            }
            target = Some(p);
        } else if name != "scf.if" && name != "memref.alloca_scope" {
            break;
        }
        cur = p;
    }
    target
}

/// Moves descriptor loads out of loops that never store to the container,
/// merging loads of the same container hoisted to the same place.
pub fn hoist_descriptor_loads(m: &mut Module) -> PassResult {
    let mut res = PassResult::default();
    let mut groups: BTreeMap<(OpId, Value), Vec<OpId>> = BTreeMap::new();
    for op in m.collect_ops() {
        if !is_descriptor_load(m, op) {
            continue;
        }
        let outer = m.op(op).operands[0];
        if let Some(t) = target_loop(m, op, outer) {
            groups.entry((t, outer)).or_default().push(op);
        }
    }
    let mut hoisted = 0;
    for ((target, outer), loads) in groups {
        let ty = m.op(loads[0]).result_types[0].clone();
        let new = m.insert_before(target, OperationState::new("memref.load").operand(outer).result(ty));
        let nv = m.result(new, 0);
        for l in loads {
            let old = m.result(l, 0);
            m.replace_uses_where(old, nv, |_, _| true);
            m.erase_op(l);
            hoisted += 1;
        }
    }
    res.bump("loads_hoisted", hoisted);
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_module, print_module};

    fn nest(body: &str) -> String {
        format!(
            r#"func.func @f(%o: memref<memref<?xf64>>) {{
  %c0 = arith.constant 0 : index
  %c1 = arith.constant 1 : index
  %c4 = arith.constant 4 : index
  "scf.for"(%c0, %c4, %c1) ({{
  ^bb0(%i: index):
    "scf.for"(%c0, %c4, %c1) ({{
    ^bb0(%j: index):
{body}      "scf.yield"() : () -> ()
    }}) : (index, index, index) -> ()
    "scf.yield"() : () -> ()
  }}) : (index, index, index) -> ()
  func.return
}}
"#
        )
    }

    const READS: &str = "      %a = \"memref.load\"(%o) : (memref<memref<?xf64>>) -> memref<?xf64>\n      %x = \"memref.load\"(%a, %j) : (memref<?xf64>, index) -> f64\n      %b = \"memref.load\"(%o) : (memref<memref<?xf64>>) -> memref<?xf64>\n      \"memref.store\"(%x, %b, %i) : (f64, memref<?xf64>, index) -> ()\n";

    #[test]
    fn loads_leave_both_loops() {
        let mut m = parse_module(&nest(READS)).unwrap();
        let r = hoist_descriptor_loads(&mut m);
        assert_eq!(r.stat("loads_hoisted"), 2);
        let f = m.functions()[0];
        let body = m.entry_block(f).unwrap();
        let first_loop = m.block(body).ops().iter().position(|o| m.op(*o).name == "scf.for").unwrap();
        assert_eq!(m.op(m.block(body).ops()[first_loop - 1]).name, "memref.load");
        assert!(crate::ir::verify_module(&m, crate::dialect::register_dialects()).is_empty(), "{}", print_module(&m));
        assert!(!hoist_descriptor_loads(&mut m).changed);
    }

    #[test]
    fn store_to_container_pins_loads() {
        let body = format!("{READS}      %n = \"memref.alloc\"(%c4) : (index) -> memref<?xf64>\n      \"memref.store\"(%n, %o) : (memref<?xf64>, memref<memref<?xf64>>) -> ()\n");
        let mut m = parse_module(&nest(&body)).unwrap();
        assert!(!hoist_descriptor_loads(&mut m).changed);
    }
}
