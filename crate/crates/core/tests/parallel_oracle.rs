//! Loops marked parallel must not depend on iteration order: running every
//! `scf.parallel` backwards has to give the same observable behavior.

mod common;

use fir2std::interp::{compare_runs, Verdict};
use fir2std::ir::{Attribute, Module, OpId, OperationState, Type, Value};
use fir2std::lowering::lower_module;
use fir2std::passes::{self, DependenceSummary};

use common::*;

fn constant(m: &Module, v: Value) -> Option<i64> {
    let d = m.defining_op(v)?;
    (m.op(d).name == "arith.constant").then(|| m.op(d).attr("value").and_then(Attribute::as_int))?
}

/// Rewrites `scf.parallel` loops over `0..ub step 1` to visit `ub-1` down
/// to `0`. Returns how many loops were reversed.
fn reverse_parallel_loops(m: &mut Module) -> usize {
    let loops: Vec<OpId> = m.collect_ops().into_iter().filter(|o| m.op(*o).name == "scf.parallel").collect();
    let mut n = 0;
    for l in loops {
        let ops = m.op(l).operands.clone();
        if constant(m, ops[0]) != Some(0) || constant(m, ops[2]) != Some(1) {
            continue;
        }
        let body = m.entry_block(l).unwrap();
        let iv = m.arg(body, 0);
        let first = m.block(body).ops()[0];
        let one = m.insert_before(first, OperationState::new("arith.constant").attr("value", Attribute::index(1)).result(Type::Index));
        let one = m.result(one, 0);
        let t = m.insert_before(first, OperationState::new("arith.subi").operand(ops[1]).operand(iv).result(Type::Index));
        let tv = m.result(t, 0);
        let r = m.insert_before(first, OperationState::new("arith.subi").operand(tv).operand(one).result(Type::Index));
        let rv = m.result(r, 0);
        m.replace_uses_where(iv, rv, |_, user| user != t);
        n += 1;
    }
    n
}

fn parallelized(src: &str) -> Module {
    let mut m = lower_module(&parse(src)).unwrap();
    passes::hoist_descriptor_loads(&mut m);
    passes::acc_kernels_to_parallel(&mut m);
    passes::parallelize_loops(&mut m);
    m
}

#[test]
fn parallel_loops_are_order_independent() {
    let mut total = 0;
    for p in corpus() {
        let par = parallelized(&p.source);
        let mut rev = par.clone();
        let n = reverse_parallel_loops(&mut rev);
        if n == 0 {
            continue;
        }
        assert_verifies(&rev, &p.name);
        total += n;
        for args in &p.arg_sets {
            let v = compare_runs(&par, &rev, "main", args, 0.0);
            assert_eq!(v, Ok(Verdict::Equal), "{} {args:?}: reversing {n} parallel loops changed behavior", p.name);
        }
    }
    assert!(total >= 10, "only {total} parallel loops across the corpus");
}

const RECURRENCE: &str = r#"func.func @main() -> i32 {
  %c1 = arith.constant 1 : index
  %c2 = arith.constant 2 : index
  %c8 = arith.constant 8 : index
  %0 = "fir.alloca"() {in_type = !fir.array<8xi32>, uniq_name = "_QFEa"} : () -> !fir.ref<!fir.array<8xi32>>
  %sh = "fir.shape"(%c8) : (index) -> !fir.shape<1>
  %a = "hlfir.declare"(%0, %sh) {uniq_name = "_QFEa"} : (!fir.ref<!fir.array<8xi32>>, !fir.shape<1>) -> !fir.ref<!fir.array<8xi32>>
  %three = arith.constant 3 : i32
  %e1 = "hlfir.designate"(%a, %c1) : (!fir.ref<!fir.array<8xi32>>, index) -> !fir.ref<i32>
  "hlfir.assign"(%three, %e1) : (i32, !fir.ref<i32>) -> ()
  "fir.do_loop"(%c2, %c8, %c1) ({
  ^bb0(%i: index):
    %p = "arith.subi"(%i, %c1) : (index, index) -> index
    %ep = "hlfir.designate"(%a, %p) : (!fir.ref<!fir.array<8xi32>>, index) -> !fir.ref<i32>
    %x = "fir.load"(%ep) : (!fir.ref<i32>) -> i32
    %y = "arith.addi"(%x, %three) : (i32, i32) -> i32
    %ei = "hlfir.designate"(%a, %i) : (!fir.ref<!fir.array<8xi32>>, index) -> !fir.ref<i32>
    "hlfir.assign"(%y, %ei) : (i32, !fir.ref<i32>) -> ()
    "fir.result"() : () -> ()
  }) : (index, index, index) -> ()
  %e8 = "hlfir.designate"(%a, %c8) : (!fir.ref<!fir.array<8xi32>>, index) -> !fir.ref<i32>
  %r = "fir.load"(%e8) : (!fir.ref<i32>) -> i32
  func.return %r : i32
}
"#;

#[test]
fn recurrence_stays_sequential() {
    let m = parallelized(RECURRENCE);
    let names: Vec<String> = m.collect_ops().into_iter().map(|o| m.op(o).name.clone()).collect();
    assert!(names.contains(&"scf.for".to_string()) && !names.contains(&"scf.parallel".to_string()));
    let l = m.collect_ops().into_iter().find(|o| m.op(*o).name == "scf.for").unwrap();
    assert!(DependenceSummary::compute(&m, l).carried);
}

#[test]
fn oracle_detects_a_forced_recurrence() {
    let seq = parallelized(RECURRENCE);
    let mut forced = seq.clone();
    for o in forced.collect_ops() {
        match forced.op(o).name.as_str() {
            "scf.for" => forced.op_mut(o).name = "scf.parallel".into(),
            "scf.yield" => forced.op_mut(o).name = "scf.reduce".into(),
            _ => {}
        }
    }
    let mut rev = forced.clone();
    assert_eq!(reverse_parallel_loops(&mut rev), 1);
    assert!(matches!(compare_runs(&forced, &rev, "main", &[], 0.0), Ok(Verdict::Mismatch(_))));
}

#[test]
fn jacobi_sweeps_are_parallel() {
    let m = parallelized(&fixture("jacobi.fir"));
    let count = |n: &str| m.collect_ops().into_iter().filter(|o| m.op(*o).name == n).count();
    assert!(count("scf.parallel") >= 4, "{} parallel, {} sequential", count("scf.parallel"), count("scf.for"));
    assert!(count("scf.for") >= 1, "the time-step loop must stay sequential");
}
