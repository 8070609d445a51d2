use crate::ir::{Module, OpId};

use super::parallel::make_parallel;
use super::PassResult;

/// Inlines `acc.kernels` regions, turning every counted loop inside them
/// into `scf.parallel`, and maps data clauses onto host registration.
pub fn acc_kernels_to_parallel(m: &mut Module) -> PassResult {
    let mut res = PassResult::default();
    let kernels: Vec<OpId> = m.collect_ops().into_iter().filter(|o| m.op(*o).name == "acc.kernels").collect();
    let mut loops = 0;
    for &k in &kernels {
        for o in m.nested_ops(k) {
            if m.op(o).name == "scf.for" {
                make_parallel(m, o);
                loops += 1;
            }
        }
    }
    for &k in &kernels {
        if m.op(k).is_erased() {
            continue;
        }
        for b in m.region(m.op(k).regions()[0]).blocks().to_vec() {
            if let Some(&t) = m.block(b).ops().last() {
                if m.op(t).name == "acc.terminator" {
                    m.erase_op(t);
                }
            }
            m.splice_before(b, k);
        }
        m.erase_op(k);
    }
    let mut clauses = 0;
    for o in m.collect_ops() {
        let name = m.op(o).name.clone();
        let target = match name.as_str() {
            "acc.create" => "gpu.host_register",
            "acc.delete" | "acc.copyout" => "gpu.host_unregister",
            _ => continue,
        };
        if m.value_type(m.op(o).operands[0]).is_memref() {
            m.op_mut(o).name = target.into();
        } else {
            m.erase_op(o);
        }
        clauses += 1;
    }
    res.bump("kernels_inlined", kernels.len() as u64);
    res.bump("loops_parallelized", loops);
    res.bump("data_clauses_mapped", clauses);
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{parse_module, print_module};

    #[test]
    fn kernels_region_is_inlined() {
        let src = r#"func.func @f(%a: memref<4xf64>) {
  %c0 = arith.constant 0 : index
  %c1 = arith.constant 1 : index
  %c4 = arith.constant 4 : index
  %z = arith.constant 0.0 : f64
  "acc.create"(%a) : (memref<4xf64>) -> ()
  "acc.kernels"() ({
    "scf.for"(%c0, %c4, %c1) ({
    ^bb0(%i: index):
      "memref.store"(%z, %a, %i) : (f64, memref<4xf64>, index) -> ()
      "scf.yield"() : () -> ()
    }) : (index, index, index) -> ()
    "acc.terminator"() : () -> ()
  }) : () -> ()
  "acc.copyout"(%a) : (memref<4xf64>) -> ()
  func.return
}
"#;
        let mut m = parse_module(src).unwrap();
        let r = acc_kernels_to_parallel(&mut m);
        assert_eq!(r.stat("loops_parallelized"), 1);
        let text = print_module(&m);
        assert!(!text.contains("acc."), "{text}");
        assert!(text.contains("scf.parallel") && text.contains("gpu.host_register"), "{text}");
        assert!(crate::ir::verify_module(&m, crate::dialect::register_dialects()).is_empty(), "{text}");
        assert!(!acc_kernels_to_parallel(&mut m).changed);
    }
}
