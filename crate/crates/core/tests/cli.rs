mod common;

use std::io::Write;
use std::process::{Command, Stdio};

use fir2std::cli::{self, run, run_pipeline, ConfigError, PipelineConfig, PipelineError};
use fir2std::text::{parse_module, print_module};

use common::*;

fn path(rel: &str) -> String {
    tests_dir().join(rel).display().to_string()
}

fn fir2std(args: &[&str], stdin: &str) -> cli::CliOutput {
    let argv = std::iter::once("fir2std").chain(args.iter().copied());
    run(argv, &mut stdin.as_bytes())
}

#[test]
fn golden_lowering_through_the_driver() {
    let out = fir2std(&["--passes=lower-fir", &path("fixtures/golden/scalar_var.fir"), "--emit=text"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout, fixture("golden/scalar_var.mlir"));
}

#[test]
fn stats_report_promoted_shapes() {
    let out = fir2std(&["--passes=lower-fir,promote-static-shapes", &path("fixtures/static_128.fir"), "--emit=stats"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout, "shapes_promoted=1\n");
}

#[test]
fn output_is_deterministic_and_composes() {
    let jacobi = path("fixtures/jacobi.fir");
    let a = fir2std(&[&jacobi], "");
    let b = fir2std(&[&jacobi], "");
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(a, b);
    let m = parse_module(&a.stdout).unwrap();
    assert_verifies(&m, "emitted text");
    let again = fir2std(&["-", "--passes="], &a.stdout);
    assert_eq!(again.stdout, a.stdout);
    let more = fir2std(&["-", "--passes=parallelize-loops", "--emit=stats"], &a.stdout);
    assert_eq!(more.code, 0, "{}", more.stderr);
}

#[test]
fn default_pipeline_on_jacobi() {
    let m = parse(&fixture("jacobi.fir"));
    let (out, _) = run_pipeline(&PipelineConfig::default(), &m).unwrap();
    let text = print_module(&out);
    assert!(text.contains("affine.for"));
    assert!(!text.contains("\"fir.") && !text.contains("\"hlfir."));
}

#[test]
fn empty_pipeline_is_identity() {
    let src = fixture("jacobi.fir");
    let m = parse(&src);
    let cfg = PipelineConfig {
        passes: vec![],
        ..PipelineConfig::default()
    };
    let (out, r) = run_pipeline(&cfg, &m).unwrap();
    assert_eq!(print_module(&out), print_module(&m));
    assert!(r.stats.is_empty());
}

#[test]
fn optimization_before_lowering_is_rejected() {
    let cfg = PipelineConfig {
        passes: vec!["promote-to-affine".into(), "lower-fir".into()],
        ..PipelineConfig::default()
    };
    let m = parse(&fixture("jacobi.fir"));
    assert!(matches!(run_pipeline(&cfg, &m), Err(PipelineError::Config(ConfigError::BeforeLowering(_)))));
    let out = fir2std(&["--passes=promote-to-affine,lower-fir", &path("fixtures/jacobi.fir")], "");
    assert_eq!(out.code, cli::EXIT_USAGE);
}

#[test]
fn exit_codes() {
    let parse_err = fir2std(&["-"], "func.func @f() {\n  %0 = arith.constant : i32\n}\n");
    assert_eq!(parse_err.code, 1);
    assert!(parse_err.stderr.contains("<stdin>:2:"), "{}", parse_err.stderr);

    let verify_err = fir2std(&["-"], "func.func @f() -> i32 {\n  func.return\n}\n");
    assert_eq!(verify_err.code, 2);
    assert!(verify_err.stderr.contains("after parsing") && verify_err.stderr.contains("@f/0:func.return"), "{}", verify_err.stderr);

    let lowering_err = fir2std(
        &["-"],
        r#"func.func @main() -> i32 {
  %c = arith.constant 1 : i1
  %r = "fir.if"(%c) ({
    %a = arith.constant 1 : i32
    "fir.result"(%a) : (i32) -> ()
  }, {
    %b = arith.constant 2 : i32
    "fir.result"(%b) : (i32) -> ()
  }) : (i1) -> i32
  func.return %r : i32
}
"#,
    );
    assert_eq!(lowering_err.code, 3);
    assert!(lowering_err.stderr.contains("@main/1:fir.if"), "{}", lowering_err.stderr);

    let runtime_err = fir2std(&[&path("fixtures/use_after_free.fir"), "--interpret=main"], "");
    assert_eq!(runtime_err.code, 4);
    assert!(runtime_err.stderr.contains("@main/"), "{}", runtime_err.stderr);

    let bad_flag = fir2std(&["--emit=bogus", "-"], "");
    assert_eq!(bad_flag.code, cli::EXIT_USAGE);
}

#[test]
fn skipping_verification_lets_bad_input_through() {
    let out = fir2std(&["-", "--passes=hoist-descriptor-loads", "--no-verify-each"], "func.func @f() -> i32 {\n  func.return\n}\n");
    assert_eq!(out.code, 0, "{}", out.stderr);
}

#[test]
fn interpret_reports_results_and_trace() {
    let file = path("fixtures/hoist_nest.fir");
    let out = fir2std(&[&file, "--interpret=main", "--arg=i32:4", "--emit=trace"], "");
    assert_eq!(out.code, 0, "{}", out.stderr);
    let mut lines = out.stdout.lines();
    assert_eq!(lines.next(), Some("result 0 f64:1120.0"));
    assert!(out.stdout.contains("counter descriptor_loads 1\n"), "{}", out.stdout);
    assert!(out.stdout.contains("counter stack_leaks 0\n"));

    let text = fir2std(&[&file, "--interpret=main", "--arg=i32:4"], "");
    assert_eq!(text.code, 0);
    assert_eq!(text.stderr, "result 0 f64:1120.0\n");

    let budget = fir2std(&[&file, "--interpret=main", "--arg=i32:4", "--step-budget=50"], "");
    assert_eq!(budget.code, 4);
    assert!(budget.stderr.contains("step budget"), "{}", budget.stderr);
}

#[test]
fn trace_requires_an_entry() {
    let out = fir2std(&[&path("fixtures/jacobi.fir"), "--emit=trace"], "");
    assert_eq!(out.code, cli::EXIT_USAGE);
}

#[test]
fn binary_reads_standard_input() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fir2std"))
        .args(["-", "--passes=lower-fir"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(fixture("golden/if_intent_in.fir").as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), fixture("golden/if_intent_in.mlir"));

    let out = Command::new(env!("CARGO_BIN_EXE_fir2std")).arg("/nonexistent/input.fir").output().unwrap();
    assert_ne!(out.status.code(), Some(0));
}
