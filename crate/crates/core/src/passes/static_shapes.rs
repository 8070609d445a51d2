use crate::ir::{Attribute, Dim, Module, OpId, OperationState, Type, Value};

use super::analysis::constant_int;
use super::PassResult;

/// Whether a use of a memref value keeps working when the value's type
/// becomes more static.
fn retype_safe(m: &Module, user: OpId, pos: usize) -> bool {
    let name = m.op(user).name.as_str();
    match name {
        "memref.load" | "affine.load" | "memref.dim" | "memref.dealloc" | "memref.cast" | "memref.subview" => pos == 0,
        "memref.store" | "affine.store" => pos == 1,
        _ => name.starts_with("linalg.") || name.starts_with("acc.") || name.starts_with("gpu."),
    }
}

fn all_uses_safe(m: &Module, v: Value) -> bool {
    m.uses(v).into_iter().all(|(u, p)| retype_safe(m, u, p))
}

struct Plan {
    alloc: OpId,
    ty: Type,
    outer: Option<Value>,
    loads: Vec<Value>,
    poisons: Vec<OpId>,
}

fn plan(m: &Module, alloc: OpId) -> Option<Plan> {
    let d = m.op(alloc);
    let t = &d.result_types[0];
    if t.has_static_shape() {
        return None;
    }
    let mut consts = Vec::new();
    for v in &d.operands {
        let c = constant_int(m, *v)?;
        if c < 0 {
            return None;
        }
        consts.push(c);
    }
    let mut it = consts.into_iter();
    let shape: Vec<Dim> = t
        .shape()?
        .iter()
        .map(|dim| match dim {
            Dim::Static(n) => Some(Dim::Static(*n)),
            Dim::Dynamic => it.next().map(Dim::Static),
        })
        .collect::<Option<_>>()?;
    let ty = Type::memref(shape, t.element()?.clone());
    let a = m.result(alloc, 0);
    let mut outer = None;
    for (u, p) in m.uses(a) {
        let ud = m.op(u);
        if ud.name == "memref.store" && p == 0 && ud.operands.len() == 2 && outer.is_none() {
            outer = Some(ud.operands[1]);
        } else if !retype_safe(m, u, p) {
            return None;
        }
    }
    let mut loads = Vec::new();
    let mut poisons = Vec::new();
    if let Some(o) = outer {
        if m.defining_op(o).map(|op| m.op(op).name.as_str()) != Some("memref.alloca") {
            return None;
        }
        for (u, p) in m.uses(o) {
            let ud = m.op(u);
            match (ud.name.as_str(), p) {
                ("memref.load", 0) if ud.operands.len() == 1 => {
                    let l = m.result(u, 0);
                    if !all_uses_safe(m, l) {
                        return None;
                    }
                    loads.push(l);
                }
                ("memref.store", 1) if ud.operands.len() == 2 => {
                    let stored = ud.operands[0];
                    if stored == a {
                        continue;
                    }
                    let src = m.defining_op(stored)?;
                    if m.op(src).name != "ub.poison" || m.uses(stored).len() != 1 {
                        return None;
                    }
                    poisons.push(src);
                }
                _ => return None,
            }
        }
    }
    Some(Plan {
        alloc,
        ty,
        outer,
        loads,
        poisons,
    })
}

fn apply(m: &mut Module, p: Plan) {
    m.op_mut(p.alloc).operands.clear();
    let a = m.result(p.alloc, 0);
    m.set_value_type(a, p.ty.clone());
    if let Some(o) = p.outer {
        m.set_value_type(o, Type::scalar_memref(p.ty.clone()));
        for l in p.loads {
            m.set_value_type(l, p.ty.clone());
        }
        for op in p.poisons {
            let v = m.result(op, 0);
            m.set_value_type(v, p.ty.clone());
        }
    }
}

/// Folds `memref.dim` of a static dimension into a constant.
fn fold_dims(m: &mut Module) -> u64 {
    let mut n = 0;
    for op in m.collect_ops() {
        let d = m.op(op);
        if d.name != "memref.dim" {
            continue;
        }
        let Some(k) = constant_int(m, d.operands[1]) else { continue };
        let Some(ext) = m
            .value_type(d.operands[0])
            .shape()
            .and_then(|s| s.get(usize::try_from(k).ok()?).copied())
            .and_then(Dim::as_static)
        else {
            continue;
        };
        let c = m.insert_before(
            op,
            OperationState::new("arith.constant")
                .attr("value", Attribute::index(ext))
                .result(Type::Index),
        );
        let (old, new) = (m.result(op, 0), m.result(c, 0));
        m.replace_uses_where(old, new, |_, _| true);
        m.erase_op(op);
        n += 1;
    }
    n
}

/// Gives allocations with constant extents a static shape, together with the
/// descriptor container holding them and every load of that container.
pub fn promote_static_shapes(m: &mut Module) -> PassResult {
    let mut res = PassResult::default();
    let allocs: Vec<OpId> = m.collect_ops().into_iter().filter(|o| m.op(*o).name == "memref.alloc").collect();
    let mut promoted = 0;
    for a in allocs {
        // Each container may receive only a single allocation.
        if let Some(p) = plan(m, a) {
            if let Some(o) = p.outer {
                let stores = m
                    .uses(o)
                    .into_iter()
                    .filter(|(u, pos)| {
                        *pos == 1
                            && m.op(*u).name == "memref.store"
                            && m.defining_op(m.op(*u).operands[0]).map(|d| m.op(d).name.as_str()) != Some("ub.poison")
                    })
                    .count();
                if stores != 1 {
                    continue;
                }
            }
            apply(m, p);
            promoted += 1;
        }
    }
    res.bump("shapes_promoted", promoted);
    res.bump("dims_folded", fold_dims(m));
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_module, print_module};

    const SRC: &str = r#"func.func @f() -> f64 {
  %c0 = arith.constant 0 : index
  %c4 = arith.constant 4 : index
  %o = "memref.alloca"() : () -> memref<memref<?xf64>>
  %a = "memref.alloc"(%c4) : (index) -> memref<?xf64>
  "memref.store"(%a, %o) : (memref<?xf64>, memref<memref<?xf64>>) -> ()
  %l = "memref.load"(%o) : (memref<memref<?xf64>>) -> memref<?xf64>
  %n = "memref.dim"(%l, %c0) : (memref<?xf64>, index) -> index
  %x = "memref.load"(%l, %c0) : (memref<?xf64>, index) -> f64
  "memref.dealloc"(%l) : (memref<?xf64>) -> ()
  func.return %x : f64
}
"#;

    #[test]
    fn container_and_loads_are_retyped() {
        let mut m = parse_module(SRC).unwrap();
        let r = promote_static_shapes(&mut m);
        assert_eq!(r.stat("shapes_promoted"), 1);
        assert_eq!(r.stat("dims_folded"), 1);
        let text = print_module(&m);
        assert!(text.contains("memref<memref<4xf64>>"), "{text}");
        assert!(!text.contains("?x"), "{text}");
        assert!(crate::ir::verify_module(&m, crate::dialect::register_dialects()).is_empty());
        let again = promote_static_shapes(&mut m);
        assert!(!again.changed);
    }

    #[test]
    fn second_allocation_blocks_promotion() {
        let src = SRC.replace(
            "  %l = ",
            "  %b = \"memref.alloc\"(%c4) : (index) -> memref<?xf64>\n  \"memref.store\"(%b, %o) : (memref<?xf64>, memref<memref<?xf64>>) -> ()\n  %l = ",
        );
        let mut m = parse_module(&src).unwrap();
        assert!(!promote_static_shapes(&mut m).changed);
    }
}
