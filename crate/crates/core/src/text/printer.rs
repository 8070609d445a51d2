use std::collections::HashMap;
use std::fmt::Write;

use crate::ir::{format_float, quote, write_list, Attribute, BlockId, Module, OpId, RegionId, Type, Value};

/// Canonical text of a module. Values are numbered `%0, %1, ...` per
/// function in definition order; blocks are `^bbN` by position in their
/// region.
pub fn print_module(m: &Module) -> String {
    let mut p = Printer {
        m,
        out: String::new(),
        names: HashMap::new(),
        next: 0,
        indent: 0,
    };
    for op in m.top_level_ops() {
        p.names.clear();
        p.next = 0;
        p.print_op(op);
    }
    p.out
}

struct Printer<'a> {
    m: &'a Module,
    out: String,
    names: HashMap<Value, String>,
    next: usize,
    indent: usize,
}

struct Sep<'a, T>(&'a [T]);

impl<T: std::fmt::Display> std::fmt::Display for Sep<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write_list(f, self.0)
    }
}

fn results_suffix(results: &[Type]) -> String {
    match results {
        [] => String::new(),
        [t] if !matches!(t, Type::Function { .. }) => format!(" -> {t}"),
        ts => format!(" -> ({})", Sep(ts)),
    }
}

impl Printer<'_> {
    fn line_start(&mut self) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn define(&mut self, v: Value, name: String) {
        self.names.insert(v, name);
    }

    fn fresh(&mut self) -> usize {
        self.next += 1;
        self.next - 1
    }

    fn name(&self, v: Value) -> String {
        self.names
            .get(&v)
            .cloned()
            .unwrap_or_else(|| "%<undefined>".to_string())
    }

    fn names_of(&self, vs: &[Value]) -> String {
        vs.iter().map(|v| self.name(*v)).collect::<Vec<_>>().join(", ")
    }

    fn types_of(&self, vs: &[Value]) -> Vec<Type> {
        vs.iter().map(|v| self.m.value_type(*v).clone()).collect()
    }

    fn define_block_args(&mut self, b: BlockId) -> String {
        let mut parts = Vec::new();
        for (i, t) in self.m.block(b).args.clone().iter().enumerate() {
            let name = format!("%{}", self.fresh());
            self.define(self.m.arg(b, i), name.clone());
            parts.push(format!("{name}: {t}"));
        }
        parts.join(", ")
    }

    fn print_op(&mut self, op: OpId) {
        let data = self.m.op(op);
        self.line_start();
        let n = data.result_types.len();
        if n > 0 {
            let k = self.fresh();
            if n == 1 {
                self.define(self.m.result(op, 0), format!("%{k}"));
                let _ = write!(self.out, "%{k} = ");
            } else {
                for i in 0..n {
                    self.define(self.m.result(op, i), format!("%{k}#{i}"));
                }
                let _ = write!(self.out, "%{k}:{n} = ");
            }
        }
        if !self.print_pretty(op) {
            self.print_generic(op);
        }
        self.out.push('\n');
    }

    fn attr_dict(&self, op: OpId, skip: &[&str]) -> String {
        let items: Vec<String> = self
            .m
            .op(op)
            .attributes
            .iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .map(|(k, v)| {
                let key = if crate::ir::is_bare_identifier(k) { k.clone() } else { quote(k) };
                match v {
                    Attribute::Unit => key,
                    v => format!("{key} = {v}"),
                }
            })
            .collect();
        if items.is_empty() {
            String::new()
        } else {
            format!(" {{{}}}", items.join(", "))
        }
    }

    fn only_attrs(&self, op: OpId, allowed: &[&str]) -> bool {
        self.m.op(op).attributes.keys().all(|k| allowed.contains(&k.as_str()))
    }

    fn print_generic(&mut self, op: OpId) {
        let data = self.m.op(op);
        let _ = write!(self.out, "{}({})", quote(&data.name), self.names_of(&data.operands));
        if !data.successors.is_empty() {
            let succ: Vec<String> = data.successors.iter().map(|b| self.block_label(*b)).collect();
            let _ = write!(self.out, "[{}]", succ.join(", "));
        }
        let regions = data.regions().to_vec();
        if !regions.is_empty() {
            self.out.push_str(" (");
            for (i, r) in regions.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.print_region(*r, false);
            }
            self.out.push(')');
        }
        let attrs = self.attr_dict(op, &[]);
        let data = self.m.op(op);
        let ft = Type::Function {
            inputs: self.types_of(&data.operands),
            results: data.result_types.clone(),
        };
        let _ = write!(self.out, "{attrs} : {ft}");
    }

    fn block_label(&self, b: BlockId) -> String {
        let region = self.m.block(b).parent_region();
        let idx = region
            .and_then(|r| self.m.region(r).blocks().iter().position(|x| *x == b))
            .unwrap_or(0);
        format!("^bb{idx}")
    }

    /// Prints `{ ... }`. The entry block's header is printed only when it
    /// has arguments not already shown by the enclosing op.
    fn print_region(&mut self, r: RegionId, entry_args_shown: bool) {
        self.out.push_str("{\n");
        self.indent += 1;
        let blocks = self.m.region(r).blocks().to_vec();
        for (i, b) in blocks.iter().enumerate() {
            let has_args = !self.m.block(*b).args.is_empty();
            if i > 0 || (has_args && !entry_args_shown) {
                self.indent -= 1;
                self.line_start();
                self.indent += 1;
                let args = self.define_block_args(*b);
                if args.is_empty() {
                    let _ = writeln!(self.out, "^bb{i}:");
                } else {
                    let _ = writeln!(self.out, "^bb{i}({args}):");
                }
            }
            for op in self.m.block(*b).ops().to_vec() {
                self.print_op(op);
            }
        }
        self.indent -= 1;
        self.line_start();
        self.out.push('}');
    }

    fn print_pretty(&mut self, op: OpId) -> bool {
        let m = self.m;
        let data = m.op(op);
        let operands = data.operands.clone();
        let ty = |i: usize| m.value_type(operands[i]).clone();
        match data.name.as_str() {
            "func.func" => {
                let Some(Attribute::Type(Type::Function { results, .. })) = data.attr("function_type") else {
                    return false;
                };
                let Some(sym) = m.symbol_name(op) else { return false };
                let Some(&r) = data.regions().first() else { return false };
                let Some(entry) = m.region(r).entry() else { return false };
                let results = results.clone();
                let extras = self.attr_dict(op, &["sym_name", "function_type"]);
                let sym = Attribute::SymbolRef(sym.to_string()).to_string();
                let args = self.define_block_args(entry);
                let _ = write!(self.out, "func.func {sym}({args}){}", results_suffix(&results));
                if !extras.is_empty() {
                    let _ = write!(self.out, " attributes{extras}");
                }
                self.out.push(' ');
                self.print_region(r, true);
                true
            }
            "func.return" | "scf.yield" | "memref.alloca_scope.return" => {
                if !data.attributes.is_empty() {
                    return false;
                }
                self.out.push_str(&data.name);
                if !operands.is_empty() {
                    let types = self.types_of(&operands);
                    let _ = write!(self.out, " {} : {}", self.names_of(&operands), Sep(&types));
                }
                true
            }
            "arith.constant" => {
                let Some(v) = data.attr("value") else { return false };
                if !self.only_attrs(op, &["value"]) {
                    return false;
                }
                let _ = write!(self.out, "arith.constant {v}");
                true
            }
            "memref.alloca" | "memref.alloc" => {
                if data.result_types.len() != 1 {
                    return false;
                }
                let attrs = self.attr_dict(op, &[]);
                let _ = write!(
                    self.out,
                    "{}({}){attrs} : {}",
                    data.name,
                    self.names_of(&operands),
                    data.result_types[0]
                );
                true
            }
            "memref.dealloc" if operands.len() == 1 && data.attributes.is_empty() => {
                let _ = write!(self.out, "memref.dealloc {} : {}", self.name(operands[0]), ty(0));
                true
            }
            "memref.load" if !operands.is_empty() && data.attributes.is_empty() => {
                let _ = write!(
                    self.out,
                    "memref.load {}[{}] : {}",
                    self.name(operands[0]),
                    self.names_of(&operands[1..]),
                    ty(0)
                );
                true
            }
            "memref.store" if operands.len() >= 2 && data.attributes.is_empty() => {
                let _ = write!(
                    self.out,
                    "memref.store {}, {}[{}] : {}",
                    self.name(operands[0]),
                    self.name(operands[1]),
                    self.names_of(&operands[2..]),
                    ty(1)
                );
                true
            }
            "memref.dim" if operands.len() == 2 && data.attributes.is_empty() => {
                let _ = write!(
                    self.out,
                    "memref.dim {}, {} : {}",
                    self.name(operands[0]),
                    self.name(operands[1]),
                    ty(0)
                );
                true
            }
            "memref.subview" => {
                let rest = operands.len().saturating_sub(1);
                if operands.is_empty() || !rest.is_multiple_of(3) || data.result_types.len() != 1 || !data.attributes.is_empty() {
                    return false;
                }
                let k = rest / 3;
                let _ = write!(
                    self.out,
                    "memref.subview {}[{}][{}][{}] : {} to {}",
                    self.name(operands[0]),
                    self.names_of(&operands[1..1 + k]),
                    self.names_of(&operands[1 + k..1 + 2 * k]),
                    self.names_of(&operands[1 + 2 * k..]),
                    ty(0),
                    data.result_types[0]
                );
                true
            }
            "memref.global" => {
                if !self.only_attrs(op, &["sym_name", "type", "initial_value"]) {
                    return false;
                }
                let (Some(sym), Some(t)) = (m.symbol_name(op), data.attr("type").and_then(Attribute::as_type)) else {
                    return false;
                };
                let _ = write!(self.out, "memref.global {} : {t}", Attribute::SymbolRef(sym.to_string()));
                if let Some(init) = data.attr("initial_value") {
                    let Some(items) = init.as_array() else { return false };
                    let Some(text) = dense_literal(items, t.rank() == Some(0)) else { return false };
                    let _ = write!(self.out, " = {text}");
                }
                true
            }
            "memref.get_global" if data.result_types.len() == 1 && self.only_attrs(op, &["name"]) => {
                let Some(name) = data.attr("name") else { return false };
                let _ = write!(self.out, "memref.get_global {name} : {}", data.result_types[0]);
                true
            }
            "memref.alloca_scope" if data.attributes.is_empty() && data.regions().len() == 1 => {
                let r = data.regions()[0];
                let results = data.result_types.clone();
                self.out.push_str("memref.alloca_scope");
                if !results.is_empty() {
                    let _ = write!(self.out, " -> ({})", Sep(&results));
                }
                self.out.push(' ');
                self.print_region(r, false);
                true
            }
            "linalg.reduce" => {
                if operands.len() != 2 || data.regions().len() != 1 || !self.only_attrs(op, &["dimensions"]) {
                    return false;
                }
                let Some(dims) = data.attr("dimensions").and_then(Attribute::as_dense) else { return false };
                let r = data.regions()[0];
                let Some(entry) = m.region(r).entry() else { return false };
                if m.region(r).blocks().len() != 1 {
                    return false;
                }
                let dims = dims.iter().map(i64::to_string).collect::<Vec<_>>().join(", ");
                let _ = write!(
                    self.out,
                    "linalg.reduce ins({} : {}) outs({} : {}) dimensions = [{dims}] ",
                    self.name(operands[0]),
                    ty(0),
                    self.name(operands[1]),
                    ty(1)
                );
                let args = self.define_block_args(entry);
                let _ = write!(self.out, "({args}) ");
                self.print_region(r, true);
                true
            }
            _ => false,
        }
    }
}

fn dense_literal(items: &[Attribute], scalar: bool) -> Option<String> {
    let mut parts = Vec::with_capacity(items.len());
    for a in items {
        parts.push(match a {
            Attribute::Int(v, _) => v.to_string(),
            Attribute::Float(v, _) => format_float(*v),
            _ => return None,
        });
    }
    if scalar {
        (parts.len() == 1).then(|| format!("dense<{}>", parts[0]))
    } else {
        Some(format!("dense<[{}]>", parts.join(", ")))
    }
}
