//! Executes a program before and after lowering and compares the runs.

use fir2std::interp::{compare_runs, run_module, RuntimeValue};
use fir2std::lowering::lower_module;
use fir2std::passes;
use fir2std::text::parse_module;

fn main() {
    let src = parse_module(include_str!("../tests/fixtures/hoist_nest.fir")).expect("valid input");
    let lowered = lower_module(&src).unwrap_or_else(|e| panic!("{e}"));
    let mut hoisted = lowered.clone();
    passes::hoist_descriptor_loads(&mut hoisted);
    let args = [RuntimeValue::i32(6)];
    for (name, m) in [("source", &src), ("lowered", &lowered), ("hoisted", &hoisted)] {
        let out = run_module(m, "main", args.to_vec()).unwrap_or_else(|e| panic!("{e}"));
        println!("{name}: result {} descriptor loads {}", out.results[0], out.trace.counter("descriptor_loads"));
    }
    println!("{:?}", compare_runs(&src, &hoisted, "main", &args, 0.0));

    let uaf = parse_module(include_str!("../tests/fixtures/use_after_free.fir")).unwrap();
    if let Err(e) = run_module(&uaf, "main", vec![]) {
        println!("{e}");
    }
}
