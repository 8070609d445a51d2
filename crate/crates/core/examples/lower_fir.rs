//! Lowers an allocatable-array program from FIR/HLFIR to standard dialects.

use fir2std::lowering::lower_module;
use fir2std::text::{parse_module, print_module};

fn main() {
    let src = include_str!("../tests/fixtures/golden/alloc_array.fir");
    let m = parse_module(src).expect("valid input");
    let lowered = lower_module(&m).unwrap_or_else(|e| panic!("{e}"));
    print!("{}", print_module(&lowered));
}
