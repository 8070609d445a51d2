//! Parses a module in generic form and prints it back canonically.

use fir2std::text::{parse_module, print_module};

const SRC: &str = r#"func.func @scale(%a: memref<4xf64>, %k: f64) {
  %c0 = arith.constant 0 : index
  %c1 = arith.constant 1 : index
  %c4 = arith.constant 4 : index
  "scf.for"(%c0, %c4, %c1) ({
  ^bb0(%i: index):
    %x = "memref.load"(%a, %i) : (memref<4xf64>, index) -> f64
    %y = "arith.mulf"(%x, %k) : (f64, f64) -> f64
    "memref.store"(%y, %a, %i) : (f64, memref<4xf64>, index) -> ()
    "scf.yield"() : () -> ()
  }) : (index, index, index) -> ()
  func.return
}
"#;

fn main() {
    let m = parse_module(SRC).expect("valid input");
    let text = print_module(&m);
    print!("{text}");
    assert_eq!(print_module(&parse_module(&text).unwrap()), text);

    match parse_module("func.func @broken( {") {
        Ok(_) => unreachable!(),
        Err(e) => println!("error at {e}"),
    }
}
