use std::collections::BTreeSet;

use crate::ir::{Attribute, Module, OpId, OperationState, Type, Value};

use super::analysis::{access_parts, constant_int, defined_in_loop, index_form, induction_var, remove_dead_arith, IndexForm};
use super::PassResult;

fn symbol_like(m: &Module, v: Value) -> bool {
    constant_int(m, v).is_some() || !defined_in_loop(m, v)
}

fn is_candidate(m: &Module, op: OpId) -> bool {
    let d = m.op(op);
    d.name == "scf.for"
        && constant_int(m, d.operands[2]).is_some_and(|s| s > 0)
        && symbol_like(m, d.operands[0])
        && symbol_like(m, d.operands[1])
}

fn ranked_access(m: &Module, op: OpId) -> Option<(Value, Vec<Value>, Vec<i64>, bool)> {
    access_parts(m, op).filter(|(_, idx, _, _)| !idx.is_empty())
}

/// Index forms of an access, if every index is a constant or an accepted
/// induction variable plus a constant.
fn affine_forms(m: &Module, op: OpId, ivs: &BTreeSet<Value>) -> Option<Vec<IndexForm>> {
    let (_, idx, offsets, _) = ranked_access(m, op)?;
    idx.iter()
        .zip(offsets)
        .map(|(v, off)| {
            let f = index_form(m, *v, &|x| ivs.contains(&x))?;
            Some(IndexForm {
                base: f.base,
                offset: f.offset.checked_add(off)?,
            })
        })
        .collect()
}

/// Turns counted loops whose accesses are all induction variables plus
/// constants into `affine.for`, and their accesses into affine loads and
/// stores.
pub fn promote_to_affine(m: &mut Module) -> PassResult {
    let mut res = PassResult::default();
    let all = m.collect_ops();
    let mut cands: BTreeSet<OpId> = all.iter().copied().filter(|o| is_candidate(m, *o)).collect();
    let fixed: Vec<OpId> = all.iter().copied().filter(|o| m.op(*o).name == "affine.for").collect();
    loop {
        let ivs: BTreeSet<Value> = cands
            .iter()
            .chain(&fixed)
            .filter_map(|l| induction_var(m, *l))
            .collect();
        let bad: Vec<OpId> = cands
            .iter()
            .copied()
            .filter(|l| {
                m.nested_ops(*l).into_iter().any(|o| {
                    let name = m.op(o).name.as_str();
                    let plain = name == "memref.load" || name == "memref.store";
                    plain && ranked_access(m, o).is_some() && affine_forms(m, o, &ivs).is_none()
                })
            })
            .collect();
        if bad.is_empty() {
            break;
        }
        for b in bad {
            cands.remove(&b);
        }
    }
    let ivs: BTreeSet<Value> = cands
        .iter()
        .chain(&fixed)
        .filter_map(|l| induction_var(m, *l))
        .collect();

    let mut accesses = 0;
    for &l in &cands {
        for o in m.nested_ops(l) {
            let name = m.op(o).name.clone();
            if name != "memref.load" && name != "memref.store" {
                continue;
            }
            let Some(forms) = affine_forms(m, o, &ivs) else { continue };
            let first_idx = if name == "memref.load" { 1 } else { 2 };
            let mut operands = m.op(o).operands[..first_idx].to_vec();
            for f in &forms {
                let v = match f.base {
                    Some(v) => v,
                    None => {
                        let c = m.insert_before(
                            o,
                            OperationState::new("arith.constant")
                                .attr("value", Attribute::index(0))
                                .result(Type::Index),
                        );
                        m.result(c, 0)
                    }
                };
                operands.push(v);
            }
            let d = m.op_mut(o);
            d.name = name.replace("memref.", "affine.");
            d.operands = operands;
            d.attributes.insert(
                "offsets".into(),
                Attribute::DenseIndexArray(forms.iter().map(|f| f.offset).collect()),
            );
            accesses += 1;
        }
    }
    for &l in &cands {
        let step = constant_int(m, m.op(l).operands[2]).unwrap_or(1);
        let d = m.op_mut(l);
        d.name = "affine.for".into();
        d.operands.truncate(2);
        d.attributes.insert("step".into(), Attribute::index(step));
        let body = m.entry_block(l).expect("loop body");
        if let Some(&t) = m.block(body).ops().last() {
            if m.op(t).name == "scf.yield" {
                m.op_mut(t).name = "affine.yield".into();
            }
        }
    }
    for &l in &cands {
        remove_dead_arith(m, l);
    }
    res.bump("loops_affinized", cands.len() as u64);
    res.bump("accesses_affinized", accesses);
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_module, print_module};

    fn stencil(index: &str) -> String {
        format!(
            r#"func.func @f(%a: memref<8xf64>, %b: memref<8xf64>, %k: index) {{
  %c1 = arith.constant 1 : index
  %c7 = arith.constant 7 : index
  "scf.for"(%c1, %c7, %c1) ({{
  ^bb0(%i: index):
    %l = "arith.subi"(%i, %c1) : (index, index) -> index
    %r = "arith.addi"(%i, %c1) : (index, index) -> index
    %x = "memref.load"(%b, %l) : (memref<8xf64>, index) -> f64
    %y = "memref.load"(%b, {index}) : (memref<8xf64>, index) -> f64
    %s = "arith.addf"(%x, %y) : (f64, f64) -> f64
    "memref.store"(%s, %a, %i) : (f64, memref<8xf64>, index) -> ()
    "scf.yield"() : () -> ()
  }}) : (index, index, index) -> ()
  func.return
}}
"#
        )
    }

    #[test]
    fn stencil_becomes_affine() {
        let mut m = parse_module(&stencil("%r")).unwrap();
        let r = promote_to_affine(&mut m);
        assert_eq!(r.stat("loops_affinized"), 1);
        assert_eq!(r.stat("accesses_affinized"), 3);
        let text = print_module(&m);
        assert!(text.contains("offsets = array<i64: -1>") || text.contains("-1"), "{text}");
        assert!(!text.contains("memref.load"), "{text}");
        assert!(crate::ir::verify_module(&m, crate::dialect::register_dialects()).is_empty(), "{text}");
        assert!(!promote_to_affine(&mut m).changed);
    }

    #[test]
    fn data_dependent_index_is_left_alone() {
        let src = stencil("%k").replace("%y = \"memref.load\"(%b, %k)", "%kk = \"arith.muli\"(%i, %i) : (index, index) -> index\n    %y = \"memref.load\"(%b, %kk)");
        let mut m = parse_module(&src).unwrap();
        assert!(!promote_to_affine(&mut m).changed);
    }
}
