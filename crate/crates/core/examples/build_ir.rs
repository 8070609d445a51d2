//! Builds a function with the arena API and verifies it against the
//! registered dialects.

use fir2std::dialect::register_dialects;
use fir2std::ir::{verify_module, Attribute, Module, OperationState, Type};
use fir2std::text::print_module;

fn main() {
    let mut m = Module::new();
    let (body, entry) = m.region_with_block(vec![Type::Integer(32), Type::Integer(32)]);
    let a = m.arg(entry, 0);
    let b = m.arg(entry, 1);
    let sum = m.append(entry, OperationState::new("arith.addi").operands([a, b]).result(Type::Integer(32)));
    let sum = m.result(sum, 0);
    m.append(entry, OperationState::new("func.return").operand(sum));
    let fn_type = Type::Function {
        inputs: vec![Type::Integer(32); 2],
        results: vec![Type::Integer(32)],
    };
    let top = m.body_block();
    m.append(
        top,
        OperationState::new("func.func")
            .attr("sym_name", Attribute::str("add"))
            .attr("function_type", Attribute::Type(fn_type))
            .region(body),
    );
    print!("{}", print_module(&m));
    let diags = verify_module(&m, register_dialects());
    println!("{} diagnostics", diags.len());
}
