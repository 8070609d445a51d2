use crate::ir::{Module, OperationState};

fn already_wrapped(m: &Module, call: crate::ir::OpId) -> bool {
    let Some(parent) = m.parent_op(call) else { return false };
    if m.op(parent).name != "memref.alloca_scope" {
        return false;
    }
    let Some(b) = m.op(call).parent_block() else { return false };
    m.block(b).ops().len() == 2
}

/// Wraps every `func.call` in its own `memref.alloca_scope`. Calls that
/// already sit alone in a scope are left as they are. Returns the number of
/// scopes created.
pub fn insert_alloca_scopes(m: &mut Module) -> usize {
    let calls: Vec<_> = m
        .collect_ops()
        .into_iter()
        .filter(|op| m.op(*op).name == "func.call" && !already_wrapped(m, *op))
        .collect();
    for &call in &calls {
        let results = m.results(call);
        let types = m.op(call).result_types.clone();
        let (region, block) = m.region_with_block(vec![]);
        let scope = m.insert_before(call, OperationState::new("memref.alloca_scope").results(types).region(region));
        m.detach_op(call);
        m.attach_op(block, None, call);
        let ret = m.append(block, OperationState::new("memref.alloca_scope.return").operands(results.clone()));
        for (i, r) in results.into_iter().enumerate() {
            let nr = m.result(scope, i);
            m.replace_uses_where(r, nr, |_, user| user != ret);
        }
    }
    calls.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_module, print_module};

    #[test]
    fn each_call_gets_one_scope() {
        let src = "func.func @g() -> i32 {\n  %0 = arith.constant 1 : i32\n  func.return %0 : i32\n}\nfunc.func @f() -> i32 {\n  %0 = \"func.call\"() {callee = @g} : () -> i32\n  %1 = \"arith.addi\"(%0, %0) : (i32, i32) -> i32\n  func.return %1 : i32\n}\n";
        let mut m = parse_module(src).unwrap();
        assert_eq!(insert_alloca_scopes(&mut m), 1);
        let text = print_module(&m);
        assert_eq!(text.matches("memref.alloca_scope ").count(), 1);
        assert!(crate::ir::verify_module(&m, crate::dialect::register_dialects()).is_empty(), "{text}");
        assert_eq!(insert_alloca_scopes(&mut m), 0);
    }

    #[test]
    fn functions_without_calls_are_unchanged() {
        let src = "func.func @f() {\n  func.return\n}\n";
        let mut m = parse_module(src).unwrap();
        assert_eq!(insert_alloca_scopes(&mut m), 0);
        assert_eq!(print_module(&m), print_module(&parse_module(src).unwrap()));
    }
}
