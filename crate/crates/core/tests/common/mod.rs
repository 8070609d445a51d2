#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fir2std::dialect::register_dialects;
use fir2std::interp::RuntimeValue;
use fir2std::ir::{verify_module, Module};
use fir2std::text::parse_module;

pub fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn fixture(rel: &str) -> String {
    let p = tests_dir().join("fixtures").join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn parse(src: &str) -> Module {
    parse_module(src).unwrap_or_else(|e| panic!("{e}"))
}

pub fn assert_verifies(m: &Module, what: &str) {
    let d = verify_module(m, register_dialects());
    assert!(d.is_empty(), "{what}: {}", d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"));
}

pub struct Program {
    pub name: String,
    pub source: String,
    pub arg_sets: Vec<Vec<RuntimeValue>>,
}

fn parse_args(line: &str) -> Vec<RuntimeValue> {
    line.split_whitespace()
        .map(|a| {
            if a.contains('.') {
                RuntimeValue::f64(a.parse().unwrap())
            } else {
                RuntimeValue::i32(a.parse().unwrap())
            }
        })
        .collect()
}

/// Corpus programs, each with the argument sets listed in its
/// `// args:` header lines.
pub fn corpus() -> Vec<Program> {
    let dir = tests_dir().join("corpus");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "fir"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let source = std::fs::read_to_string(&p).unwrap();
            let arg_sets = source
                .lines()
                .filter_map(|l| l.strip_prefix("// args:"))
                .map(parse_args)
                .collect();
            Program {
                name: p.file_stem().unwrap().to_string_lossy().into_owned(),
                source,
                arg_sets,
            }
        })
        .collect()
}

/// Every textual IR file under `tests/`.
pub fn all_ir_files() -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![tests_dir().join("corpus"), tests_dir().join("fixtures")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "fir" || e == "mlir") {
                out.push((p.display().to_string(), std::fs::read_to_string(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Loop program recording the visited index sequence into `_QFEseq`.
/// `step` is either a literal or `None` for a runtime step argument.
pub fn loop_probe(step: Option<i64>) -> String {
    let step_def = match step {
        Some(s) => format!("  %s = arith.constant {s} : index\n"),
        None => "  %s0 = \"hlfir.declare\"(%arg2) {fortran_attrs = \"intent_in\", uniq_name = \"_QFEs\"} : (!fir.ref<i32>) -> !fir.ref<i32>\n  %si = \"fir.load\"(%s0) : (!fir.ref<i32>) -> i32\n  %s = \"fir.convert\"(%si) : (i32) -> index\n".to_string(),
    };
    format!(
        r#"func.func @main(%arg0: !fir.ref<i32>, %arg1: !fir.ref<i32>, %arg2: !fir.ref<i32>) -> i32 {{
  %l0 = "hlfir.declare"(%arg0) {{fortran_attrs = "intent_in", uniq_name = "_QFEl"}} : (!fir.ref<i32>) -> !fir.ref<i32>
  %u0 = "hlfir.declare"(%arg1) {{fortran_attrs = "intent_in", uniq_name = "_QFEu"}} : (!fir.ref<i32>) -> !fir.ref<i32>
  %li = "fir.load"(%l0) : (!fir.ref<i32>) -> i32
  %ui = "fir.load"(%u0) : (!fir.ref<i32>) -> i32
  %l = "fir.convert"(%li) : (i32) -> index
  %u = "fir.convert"(%ui) : (i32) -> index
{step_def}  %c32 = arith.constant 32 : index
  %q0 = "fir.alloca"() {{in_type = !fir.array<32xi32>, uniq_name = "_QFEseq"}} : () -> !fir.ref<!fir.array<32xi32>>
  %qsh = "fir.shape"(%c32) : (index) -> !fir.shape<1>
  %q = "hlfir.declare"(%q0, %qsh) {{uniq_name = "_QFEseq"}} : (!fir.ref<!fir.array<32xi32>>, !fir.shape<1>) -> !fir.ref<!fir.array<32xi32>>
  %n0 = "fir.alloca"() {{in_type = i32, uniq_name = "_QFEn"}} : () -> !fir.ref<i32>
  %n = "hlfir.declare"(%n0) {{uniq_name = "_QFEn"}} : (!fir.ref<i32>) -> !fir.ref<i32>
  %zero = arith.constant 0 : i32
  %one = arith.constant 1 : i32
  "hlfir.assign"(%zero, %n) : (i32, !fir.ref<i32>) -> ()
  "fir.do_loop"(%l, %u, %s) ({{
  ^bb0(%i: index):
    %k = "fir.load"(%n) : (!fir.ref<i32>) -> i32
    %k1 = "arith.addi"(%k, %one) : (i32, i32) -> i32
    "hlfir.assign"(%k1, %n) : (i32, !fir.ref<i32>) -> ()
    %kx = "fir.convert"(%k1) : (i32) -> index
    %e = "hlfir.designate"(%q, %kx) : (!fir.ref<!fir.array<32xi32>>, index) -> !fir.ref<i32>
    %iv = "fir.convert"(%i) : (index) -> i32
    "hlfir.assign"(%iv, %e) : (i32, !fir.ref<i32>) -> ()
    "fir.result"() : () -> ()
  }}) : (index, index, index) -> ()
  %r = "fir.load"(%n) : (!fir.ref<i32>) -> i32
  func.return %r : i32
}}
"#
    )
}

fn elem_attr(v: &str, ty: &str) -> String {
    format!("{v} : {ty}")
}

/// `fir.global` holding a column-major array.
pub fn global_array(name: &str, ty: &str, dims: &[usize], values: &[String]) -> String {
    let shape: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    let init: Vec<String> = values.iter().map(|v| elem_attr(v, ty)).collect();
    format!(
        "\"fir.global\"() {{sym_name = \"{name}\", type = !fir.array<{}x{ty}>, init = [{}]}} : () -> ()\n",
        shape.join("x"),
        init.join(", ")
    )
}

pub fn array_type(ty: &str, dims: &[usize]) -> String {
    let shape: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("!fir.array<{}x{ty}>", shape.join("x"))
}

/// Declares a global array inside a function body; the declared value is
/// `%{var}`.
pub fn declare_global(var: &str, name: &str, ty: &str, dims: &[usize]) -> String {
    let at = array_type(ty, dims);
    let mut s = format!("  %{var}_a = \"fir.address_of\"() {{symbol = @{name}}} : () -> !fir.ref<{at}>\n");
    let mut ext = Vec::new();
    for (i, d) in dims.iter().enumerate() {
        s.push_str(&format!("  %{var}_e{i} = arith.constant {d} : index\n"));
        ext.push(format!("%{var}_e{i}"));
    }
    s.push_str(&format!(
        "  %{var}_sh = \"fir.shape\"({}) : ({}) -> !fir.shape<{}>\n",
        ext.join(", "),
        vec!["index"; dims.len()].join(", "),
        dims.len()
    ));
    s.push_str(&format!(
        "  %{var} = \"hlfir.declare\"(%{var}_a, %{var}_sh) {{uniq_name = \"{name}\"}} : (!fir.ref<{at}>, !fir.shape<{}>) -> !fir.ref<{at}>\n",
        dims.len()
    ));
    s
}

/// `c = matmul(a, b)` over global operands; the product is observable as
/// the final state of `_QFEc`. Inputs are column-major.
pub fn matmul_program(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> String {
    let fa: Vec<String> = a.iter().map(|x| fir2std::ir::format_float(*x)).collect();
    let fb: Vec<String> = b.iter().map(|x| fir2std::ir::format_float(*x)).collect();
    let ta = array_type("f64", &[m, k]);
    let tb = array_type("f64", &[k, n]);
    let tc = array_type("f64", &[m, n]);
    let mut s = global_array("_QMdEa", "f64", &[m, k], &fa);
    s.push_str(&global_array("_QMdEb", "f64", &[k, n], &fb));
    s.push_str("func.func @main() -> f64 {\n");
    s.push_str(&declare_global("a", "_QMdEa", "f64", &[m, k]));
    s.push_str(&declare_global("b", "_QMdEb", "f64", &[k, n]));
    s.push_str(&format!(
        "  %c = \"hlfir.matmul\"(%a, %b) {{uniq_name = \"_QFEc\"}} : (!fir.ref<{ta}>, !fir.ref<{tb}>) -> !fir.heap<{tc}>\n"
    ));
    s.push_str(&format!("  \"fir.freemem\"(%c) : (!fir.heap<{tc}>) -> ()\n"));
    s.push_str("  %z = arith.constant 0.0 : f64\n  func.return %z : f64\n}\n");
    s
}

/// `intrinsic(v)` or `dot_product(v, w)` over global i32 vectors.
pub fn reduction_program(intrinsic: &str, v: &[i32], w: Option<&[i32]>) -> String {
    let n = v.len();
    let sv: Vec<String> = v.iter().map(i32::to_string).collect();
    let t = array_type("i32", &[n]);
    let mut s = global_array("_QMdEv", "i32", &[n], &sv);
    if let Some(w) = w {
        let sw: Vec<String> = w.iter().map(i32::to_string).collect();
        s.push_str(&global_array("_QMdEw", "i32", &[n], &sw));
    }
    s.push_str("func.func @main() -> i32 {\n");
    s.push_str(&declare_global("v", "_QMdEv", "i32", &[n]));
    match w {
        Some(_) => {
            s.push_str(&declare_global("w", "_QMdEw", "i32", &[n]));
            s.push_str(&format!(
                "  %r = \"hlfir.{intrinsic}\"(%v, %w) : (!fir.ref<{t}>, !fir.ref<{t}>) -> i32\n"
            ));
        }
        None => s.push_str(&format!("  %r = \"hlfir.{intrinsic}\"(%v) : (!fir.ref<{t}>) -> i32\n")),
    }
    s.push_str("  func.return %r : i32\n}\n");
    s
}
