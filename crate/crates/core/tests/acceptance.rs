mod common;

use std::time::{Duration, Instant};

use fir2std::cli::{run_pipeline, PipelineConfig};
use fir2std::interp::{self, compare_runs, Observed, RuntimeErrorKind, RuntimeValue, Verdict};
use fir2std::ir::Module;
use fir2std::lowering::{insert_alloca_scopes, lower_module};
use fir2std::passes::{self, PASS_NAMES};
use fir2std::text::{parse_module, print_module};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn lower(src: &str) -> Result<Module, String> {
    let m = parse_module(src).map_err(|e| e.to_string())?;
    lower_module(&m).map_err(|e| e.to_string())
}

fn within(start: Instant, limit: Duration) -> Outcome {
    let t = start.elapsed();
    ensure!(t < limit, "took {t:?}, limit {limit:?}");
    Ok(())
}

/// Operation names of the first function, pre-order.
fn op_names(m: &Module) -> Vec<String> {
    let f = m.functions()[0];
    m.nested_ops(f).into_iter().map(|o| m.op(o).name.clone()).collect()
}

fn is_subsequence(needle: &[&str], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

fn golden_lowering() -> Outcome {
    let start = Instant::now();
    let expect: &[(&str, &[&str])] = &[
        ("if_intent_in", &["arith.constant", "arith.cmpi", "scf.if", "scf.yield", "scf.yield", "func.return"]),
        ("scalar_var", &["memref.alloca", "arith.constant", "memref.store", "memref.load", "func.return"]),
        (
            "alloc_array",
            &["memref.alloca", "arith.constant", "memref.alloc", "memref.store", "arith.constant", "arith.subi", "memref.load", "memref.store"],
        ),
        (
            "sum_reduce",
            &["memref.alloca", "arith.constant", "memref.store", "linalg.reduce", "arith.addi", "linalg.yield", "memref.load"],
        ),
    ];
    for (name, ops) in expect {
        let got = lower(&fixture(&format!("golden/{name}.fir")))?;
        let want = parse_module(&fixture(&format!("golden/{name}.mlir"))).map_err(|e| format!("{name}.mlir: {e}"))?;
        ensure!(print_module(&got) == print_module(&want), "{name}: output differs from the checked-in fixture:\n{}", print_module(&got));
        let names = op_names(&got);
        ensure!(is_subsequence(ops, &names), "{name}: op sequence {names:?}");
        ensure!(!names.iter().any(|n| n.starts_with("fir.") || n.starts_with("hlfir.")), "{name}: residual source ops");
    }

    let text = print_module(&lower(&fixture("golden/if_intent_in.fir"))?);
    ensure!(text.contains("(%0: i32)"), "intent(in) scalar not passed by value:\n{text}");

    let m = lower(&fixture("golden/alloc_array.fir"))?;
    let text = print_module(&m);
    ensure!(text.contains("memref<memref<?xi32>>"), "no outer container:\n{text}");
    ensure!(text.contains("arith.constant 10 : index") && text.contains("memref.alloc(%1)"), "no constant-10 allocation:\n{text}");
    ensure!(text.contains("arith.constant 1 : index"), "no origin constant:\n{text}");
    let out = interp::run_module(&m, "_QPalloc", vec![]).map_err(|e| e.to_string())?;
    let data = &out.final_states["_QFEdata.alloc"][0];
    ensure!(data[1] == Observed::Scalar(RuntimeValue::i32(100)), "data(2) is {:?}", data[1]);
    ensure!(data.iter().enumerate().all(|(i, v)| i == 1 || *v == Observed::Scalar(RuntimeValue::i32(0))), "stray writes: {data:?}");

    let text = print_module(&lower(&fixture("golden/sum_reduce.fir"))?);
    ensure!(text.contains("dimensions = [0]"), "reduce dimensions:\n{text}");
    within(start, Duration::from_secs(1))
}

fn differential_oracle() -> Outcome {
    let start = Instant::now();
    let corpus = corpus();
    ensure!(corpus.len() >= 30, "only {} corpus programs", corpus.len());
    for p in &corpus {
        ensure!(!p.arg_sets.is_empty(), "{}: no argument sets", p.name);
        let src = parse(&p.source);
        let low = lower(&p.source).map_err(|e| format!("{}: {e}", p.name))?;
        for args in &p.arg_sets {
            match compare_runs(&src, &low, "main", args, 0.0) {
                Ok(Verdict::Equal) => {}
                other => return Err(format!("{} {args:?}: {other:?}", p.name)),
            }
        }
    }
    within(start, Duration::from_secs(30))
}

fn pass_soundness() -> Outcome {
    let start = Instant::now();
    for p in corpus() {
        let low = lower(&p.source)?;
        let mut variants: Vec<(String, Module)> = Vec::new();
        for name in PASS_NAMES {
            let mut m = low.clone();
            let r = passes::run_pass(name, &mut m).unwrap();
            ensure!(r.changed == r.stats.values().any(|v| *v > 0), "{}: {name}: changed flag disagrees with stats", p.name);
            let once = print_module(&m);
            let again = passes::run_pass(name, &mut m).unwrap();
            ensure!(!again.changed && print_module(&m) == once, "{}: {name} is not idempotent", p.name);
            variants.push((name.to_string(), m));
        }
        let (piped, _) = run_pipeline(&PipelineConfig::default(), &parse(&p.source)).map_err(|e| format!("{}: {e}", p.name))?;
        let mut again = piped.clone();
        for name in &PipelineConfig::default().passes[1..] {
            let r = passes::run_pass(name, &mut again).unwrap();
            ensure!(!r.changed, "{}: pipeline not idempotent at {name}", p.name);
        }
        ensure!(print_module(&again) == print_module(&piped), "{}: pipeline rerun changed text", p.name);
        variants.push(("default pipeline".into(), piped));
        for (name, m) in &variants {
            for args in &p.arg_sets {
                match compare_runs(&low, m, "main", args, 0.0) {
                    Ok(Verdict::Equal) => {}
                    other => return Err(format!("{} after {name} {args:?}: {other:?}", p.name)),
                }
            }
        }
    }
    within(start, Duration::from_secs(60))
}

fn static_promotion() -> Outcome {
    let pos = lower(&fixture("static_128.fir"))?;
    let mut m = pos.clone();
    let r = passes::promote_static_shapes(&mut m);
    ensure!(r.stat("shapes_promoted") == 1, "stats {:?}", r.stats);
    let text = print_module(&m);
    ensure!(text.contains("memref.alloc() {uniq_name = \"_QFEu.alloc\"} : memref<128x128xf64>"), "not promoted:\n{text}");
    ensure!(!text.contains("?x?"), "dynamic shape left behind:\n{text}");
    let args = [RuntimeValue::i32(0)];
    ensure!(compare_runs(&pos, &m, "main", &args, 0.0) == Ok(Verdict::Equal), "promotion changed behavior");
    for neg in ["static_double_alloc.fir", "static_runtime_extent.fir"] {
        let low = lower(&fixture(neg))?;
        let mut m = low.clone();
        let r = passes::promote_static_shapes(&mut m);
        ensure!(!r.changed && print_module(&m) == print_module(&low), "{neg} was rewritten: {:?}", r.stats);
    }
    Ok(())
}

fn descriptor_loads(m: &Module) -> Result<u64, String> {
    let out = interp::run_module(m, "main", vec![RuntimeValue::i32(5)]).map_err(|e| e.to_string())?;
    Ok(out.trace.counter("descriptor_loads"))
}

fn hoisting() -> Outcome {
    let low = lower(&fixture("hoist_nest.fir"))?;
    let mut m = low.clone();
    let r = passes::hoist_descriptor_loads(&mut m);
    ensure!(r.stat("loads_hoisted") == 3, "stats {:?}", r.stats);
    let (before, after) = (descriptor_loads(&low)?, descriptor_loads(&m)?);
    ensure!(before == 3 * 125 && after == 1, "descriptor loads {before} -> {after}");

    let low = lower(&fixture("hoist_realloc.fir"))?;
    let mut m = low.clone();
    passes::hoist_descriptor_loads(&mut m);
    let (before, after) = (descriptor_loads(&low)?, descriptor_loads(&m)?);
    ensure!(before == after, "reallocating nest changed {before} -> {after}");
    Ok(())
}

fn affine_promotion() -> Outcome {
    let src = parse(&fixture("jacobi.fir"));
    let (out, stats) = run_pipeline(&PipelineConfig::default(), &src).map_err(|e| e.to_string())?;
    let names: Vec<String> = out.collect_ops().into_iter().map(|o| out.op(o).name.clone()).collect();
    let count = |n: &str| names.iter().filter(|x| *x == n).count();
    ensure!(count("affine.for") >= 1 && count("scf.for") == 0, "affine.for {} scf.for {}", count("affine.for"), count("scf.for"));
    ensure!(!names.iter().any(|n| n.starts_with("fir.") || n.starts_with("hlfir.")), "residual fir ops");
    let text = print_module(&out);
    let shifted = text.lines().any(|l| l.contains("affine.load") && (l.contains("offsets = array<i64: -1") || l.contains(", -1") || l.contains(", 1>")));
    ensure!(shifted, "no constant-offset stencil access:\n{text}");
    ensure!(stats.stat("loops_affinized") >= 1, "stats {:?}", stats.stats);
    ensure!(compare_runs(&src, &out, "main", &[], 0.0) == Ok(Verdict::Equal), "pipeline changed jacobi");
    Ok(())
}

fn run_lowered(src: &str) -> Result<interp::RunOutcome, String> {
    let m = lower(src)?;
    interp::run_module(&m, "main", vec![]).map_err(|e| e.to_string())
}

fn intrinsic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..20 {
        let (m, k, n) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16));
        let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let out = run_lowered(&matmul_program(&a, &b, m, k, n))?;
        let c = &out.final_states["_QFEc"][0];
        ensure!(c.len() == m * n, "case {case}: {} elements", c.len());
        for j in 0..n {
            for i in 0..m {
                let mut want = 0.0;
                for p in 0..k {
                    want += a[i + p * m] * b[p + j * k];
                }
                let Observed::Scalar(RuntimeValue::Float { value: got, .. }) = c[i * n + j] else {
                    return Err(format!("case {case}: non-float element"));
                };
                let scale = want.abs().max(1.0);
                ensure!((got - want).abs() <= 1e-12 * scale, "case {case} ({m}x{k}x{n}) c({i},{j}) = {got}, want {want}");
            }
        }
    }
    for case in 0..25 {
        let n = rng.gen_range(1..=24);
        let v: Vec<i32> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        let w: Vec<i32> = (0..n).map(|_| rng.gen_range(-50..=50)).collect();
        let checks: [(&str, Option<&[i32]>, i32); 4] = [
            ("sum", None, v.iter().fold(0i32, |s, x| s.wrapping_add(*x))),
            ("maxval", None, v.iter().fold(i32::MIN, |s, x| s.max(*x))),
            ("product", None, v.iter().fold(1i32, |s, x| s.wrapping_mul(*x))),
            ("dot_product", Some(&w), v.iter().zip(&w).fold(0i32, |s, (x, y)| s.wrapping_add(x.wrapping_mul(*y)))),
        ];
        for (op, other, want) in checks {
            let out = run_lowered(&reduction_program(op, &v, other))?;
            ensure!(out.results == vec![RuntimeValue::i32(want as i64)], "case {case}: {op}({v:?}) = {:?}, want {want}", out.results);
        }
    }
    Ok(())
}

fn malformed_inputs() -> Vec<String> {
    let mut cases: Vec<String> = [
        "func.func @f( {",
        "func.func @f() {\n  %0 = arith.constant 1 : i32\n",
        "func.func @f() -> i32 {\n  func.return %nope : i32\n}\n",
        "func.func @f() {\n  %0 = arith.constant : i32\n  func.return\n}\n",
        "func.func @f() {\n  %0 = arith.constant 1 : \n  func.return\n}\n",
        "func.func @f() {\n  \"x.y\"(%0) : (i32) -> ()\n  func.return\n}\n",
        "func.func @f() {\n  %0 = \"x.y\"() : () -> (i32\n  func.return\n}\n",
        "func.func @f() {\n  %0 = arith.constant 1 : i32\n  %0 = arith.constant 2 : i32\n  func.return\n}\n",
        "func.func @f() {\n  %0 = arith.constant 1 : memref<3x?xf64\n  func.return\n}\n",
        "func.func @f() {\n  \"cf.br\"()[^missing] : () -> ()\n}\n",
        "func.func @f() {\n  \"x.y\"() {a = } : () -> ()\n  func.return\n}\n",
        "func.func @f() {\n  \"x.y\"() {a = \"unterminated} : () -> ()\n  func.return\n}\n",
        "func.func @f() {\n  \"x.y\"() ({ : () -> ()\n  func.return\n}\n",
        "func.func @f() {\n  %0 = arith.constant 1 : !fir.ref<\n}\n",
        "func.func @f() {\n  %0:2 = \"x.y\"() : () -> i32\n  func.return\n}\n",
        "func.func @f() {\n  %a = \"x.y\"() : () -> i32\n  \"x.z\"(%a, %a) : (i32) -> ()\n  func.return\n}\n",
        "func.func @f(%a i32) {\n  func.return\n}\n",
        "func.func f() {\n  func.return\n}\n",
        "}",
        "func.func @f() {\n  %0 = arith.constant 99999999999999999999999 : i64\n  func.return\n}\n",
        "func.func @f() {\n  \"x.y\"() {offsets = array<i64: 1, } : () -> ()\n  func.return\n}\n",
        "func.func @f() {\n  ^bb0(\n}\n",
        "func.func @f() {\n  \"x.y\"() : () -> ()\n  func.return\n}\n}\n",
        "\"fir.global\"() {sym_name = \"g\", init = [1 : i32,} : () -> ()\n",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let singles: Vec<String> = all_ir_files()
        .into_iter()
        .map(|(_, t)| t)
        .filter(|t| t.matches("func.func").count() == 1 && !t.contains("fir.global"))
        .collect();
    let mut i = 0;
    while cases.len() < 100 {
        let t = &singles[i % singles.len()];
        let open = t.find('{').unwrap() + 1;
        let close = t.rfind('}').unwrap();
        let frac = (i * 37 % 97) as f64 / 97.0;
        let mut cut = open + ((close - open) as f64 * frac) as usize;
        while !t.is_char_boundary(cut) {
            cut -= 1;
        }
        cases.push(t[..cut].to_string());
        i += 1;
    }
    cases
}

fn parser_roundtrip() -> Outcome {
    let files = all_ir_files();
    ensure!(files.len() > 40, "only {} IR files", files.len());
    for (path, src) in &files {
        let m = parse_module(src).map_err(|e| format!("{path}: {e}"))?;
        let once = print_module(&m);
        let m2 = parse_module(&once).map_err(|e| format!("{path} reprint: {e}"))?;
        let twice = print_module(&m2);
        ensure!(once == twice, "{path}: print(parse(print(m))) != print(m)");
        if path.ends_with(".fir") {
            let low = lower_module(&m).map_err(|e| format!("{path}: {e}"))?;
            let t = print_module(&low);
            let again = print_module(&parse_module(&t).map_err(|e| format!("{path} lowered: {e}"))?);
            ensure!(t == again, "{path}: lowered text does not round-trip");
        }
    }
    let cases = malformed_inputs();
    ensure!(cases.len() == 100, "{} malformed cases", cases.len());
    for (i, case) in cases.iter().enumerate() {
        let r = std::panic::catch_unwind(|| parse_module(case));
        let Ok(r) = r else { return Err(format!("case {i} panicked: {case:?}")) };
        let Err(e) = r else { return Err(format!("case {i} parsed: {case:?}")) };
        ensure!(e.span.line >= 1 && e.span.column >= 1 && e.span.start <= case.len(), "case {i}: bad span {:?}", e.span);
        ensure!(e.to_string().starts_with(&format!("{}:{}:", e.span.line, e.span.column)), "case {i}: message {e}");
    }
    Ok(())
}

fn reference_sequence(l: i64, u: i64, s: i64) -> Vec<i64> {
    let mut seq = Vec::new();
    let mut x = l;
    while (s > 0 && x <= u) || (s < 0 && x >= u) {
        seq.push(x);
        x += s;
    }
    let trips = ((u - l + s) / s).max(0);
    assert_eq!(seq.len() as i64, trips, "enumeration disagrees with trip count for ({l},{u},{s})");
    seq
}

fn visited(m: &Module, args: Vec<RuntimeValue>) -> Result<Vec<i64>, String> {
    let out = interp::run_module(m, "main", args).map_err(|e| e.to_string())?;
    let n = out.results[0].as_int().unwrap() as usize;
    let cells = &out.final_states["_QFEseq"][0];
    cells[..n.min(cells.len())]
        .iter()
        .map(|c| match c {
            Observed::Scalar(v) => v.as_int().ok_or_else(|| "non-integer".to_string()),
            _ => Err("non-scalar".to_string()),
        })
        .collect()
}

fn loop_semantics() -> Outcome {
    let start = Instant::now();
    let steps: Vec<i64> = (-3..=3).filter(|s| *s != 0).collect();
    let runtime = lower(&loop_probe(None))?;
    let fixed: Vec<(i64, Module)> = steps.iter().map(|s| lower(&loop_probe(Some(*s))).map(|m| (*s, m))).collect::<Result<_, _>>()?;
    let mut checked = 0;
    for l in -6..=6 {
        for u in -6..=6 {
            for (s, m) in &fixed {
                let want = reference_sequence(l, u, *s);
                let a = |x: i64| RuntimeValue::i32(x);
                let got = visited(m, vec![a(l), a(u), a(0)])?;
                ensure!(got == want, "do i = {l}, {u}, {s} (constant step): {got:?}, want {want:?}");
                let got = visited(&runtime, vec![a(l), a(u), a(*s)])?;
                ensure!(got == want, "do i = {l}, {u}, {s} (runtime step): {got:?}, want {want:?}");
                checked += 1;
            }
        }
    }
    ensure!(checked == 13 * 13 * 6, "{checked} cases");
    within(start, Duration::from_secs(5))
}

fn lifetimes() -> Outcome {
    for p in corpus() {
        let src = parse(&p.source);
        let mut scoped = lower(&p.source)?;
        insert_alloca_scopes(&mut scoped);
        let cfg = PipelineConfig {
            passes: ["lower-fir", "insert-alloca-scopes", "promote-static-shapes", "hoist-descriptor-loads", "promote-to-affine", "parallelize-loops"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ..PipelineConfig::default()
        };
        let (piped, _) = run_pipeline(&cfg, &src).map_err(|e| e.to_string())?;
        for args in &p.arg_sets {
            for (what, m) in [("source", &src), ("scoped", &scoped), ("pipeline", &piped)] {
                let out = interp::run_module(m, "main", args.clone()).map_err(|e| format!("{} {what}: {e}", p.name))?;
                ensure!(out.stack_leaks == 0, "{} {what} {args:?}: {} stack buffers leaked", p.name, out.stack_leaks);
            }
        }
    }
    let src = parse(&fixture("use_after_free.fir"));
    let low = lower(&fixture("use_after_free.fir"))?;
    for (what, m) in [("source", &src), ("lowered", &low)] {
        match interp::run_module(m, "main", vec![]) {
            Err(e) if matches!(e.kind, RuntimeErrorKind::UseAfterFree(_)) && e.path.starts_with("@main/") => {}
            other => return Err(format!("{what}: expected use-after-free, got {:?}", other.map(|o| o.results))),
        }
    }
    Ok(())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("golden lowering", golden_lowering),
        ("differential oracle", differential_oracle),
        ("pass soundness", pass_soundness),
        ("static promotion", static_promotion),
        ("hoisting effectiveness", hoisting),
        ("affine promotion", affine_promotion),
        ("intrinsic oracle", intrinsic_oracle),
        ("parser", parser_roundtrip),
        ("loop semantics", loop_semantics),
        ("lifetime checks", lifetimes),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let ms = t.elapsed().as_millis();
        match &r {
            Ok(()) => println!("criterion {:>2} {name}: PASS ({ms} ms)", i + 1),
            Err(e) => {
                println!("criterion {:>2} {name}: FAIL ({ms} ms): {e}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
