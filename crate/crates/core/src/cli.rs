//! `fir2std` command-line driver.

use std::io::Read;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use thiserror::Error;

use crate::dialect::register_dialects;
use crate::interp::{self, RunOptions, RuntimeValue, Verdict};
use crate::ir::{verify_module, Diagnostic, Module, Type};
use crate::lowering::{self, LoweringError};
use crate::passes::{self, PassResult, PASS_NAMES};
use crate::text::{parse_module, print_module};

pub const EXIT_PARSE: u8 = 1;
pub const EXIT_VERIFY: u8 = 2;
pub const EXIT_LOWERING: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

pub const DEFAULT_PIPELINE: &[&str] = &[
    "lower-fir",
    "promote-static-shapes",
    "hoist-descriptor-loads",
    "promote-to-affine",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    #[default]
    Text,
    Stats,
    Trace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpretSpec {
    pub entry: String,
    pub args: Vec<RuntimeValue>,
    pub tolerance: f64,
    pub step_budget: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub passes: Vec<String>,
    pub verify_each: bool,
    pub emit: Emit,
    pub interpret: Option<InterpretSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            passes: DEFAULT_PIPELINE.iter().map(|s| s.to_string()).collect(),
            verify_each: true,
            emit: Emit::Text,
            interpret: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown pass `{0}`")]
    UnknownPass(String),
    #[error("pass `{0}` must run after lower-fir")]
    BeforeLowering(String),
    #[error("lower-fir listed more than once")]
    RepeatedLowering,
    #[error("--emit=trace requires --interpret")]
    TraceWithoutInterpret,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.passes {
            if p != "lower-fir" && p != "insert-alloca-scopes" && !PASS_NAMES.contains(&p.as_str()) {
                return Err(ConfigError::UnknownPass(p.clone()));
            }
        }
        let lowerings = self.passes.iter().filter(|p| *p == "lower-fir").count();
        if lowerings > 1 {
            return Err(ConfigError::RepeatedLowering);
        }
        if let Some(pos) = self.passes.iter().position(|p| p == "lower-fir") {
            if let Some(p) = self.passes[..pos].first() {
                return Err(ConfigError::BeforeLowering(p.clone()));
            }
        }
        if self.emit == Emit::Trace && self.interpret.is_none() {
            return Err(ConfigError::TraceWithoutInterpret);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lowering(#[from] LoweringError),
    #[error("verification failed after {pass}:\n{}", render(.diagnostics))]
    Verify { pass: String, diagnostics: Vec<Diagnostic> },
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}\n")).collect()
}

fn merge(total: &mut PassResult, r: PassResult) {
    total.changed |= r.changed;
    for (k, v) in r.stats {
        *total.stats.entry(k).or_insert(0) += v;
    }
    total.diagnostics.extend(r.diagnostics);
}

fn check(m: &Module, pass: &str) -> Result<(), PipelineError> {
    let diagnostics = verify_module(m, register_dialects());
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Verify {
            pass: pass.to_string(),
            diagnostics,
        })
    }
}

/// Applies the configured passes in order, verifying after each one when
/// `verify_each` is set.
pub fn run_pipeline(cfg: &PipelineConfig, module: &Module) -> Result<(Module, PassResult), PipelineError> {
    cfg.validate()?;
    let mut m = module.clone();
    let mut total = PassResult::default();
    if cfg.verify_each && !cfg.passes.is_empty() {
        check(&m, "parsing")?;
    }
    for name in &cfg.passes {
        match name.as_str() {
            "lower-fir" => {
                m = lowering::lower_module(&m)?;
            }
            "insert-alloca-scopes" => {
                let mut r = PassResult::default();
                r.bump("scopes_inserted", lowering::insert_alloca_scopes(&mut m) as u64);
                merge(&mut total, r);
            }
            other => {
                let r = passes::run_pass(other, &mut m).ok_or_else(|| ConfigError::UnknownPass(other.into()))?;
                merge(&mut total, r);
            }
        }
        if cfg.verify_each {
            check(&m, name)?;
        }
    }
    Ok((m, total))
}

/// Parses `type:value`, e.g. `i32:7`, `f64:2.5`, `index:3`, `i1:1`.
pub fn parse_arg(s: &str) -> Result<RuntimeValue, String> {
    let (ty, val) = s.split_once(':').ok_or_else(|| format!("argument `{s}` is not of the form type:value"))?;
    let bad = || format!("cannot read `{val}` as {ty}");
    let ty = match ty {
        "index" => Type::Index,
        "f32" => Type::Float(32),
        "f64" => Type::Float(64),
        t if t.starts_with('i') => match t[1..].parse::<u32>() {
            Ok(w @ 1..=64) => Type::Integer(w),
            _ => return Err(format!("unsupported argument type `{t}`")),
        },
        t => return Err(format!("unsupported argument type `{t}`")),
    };
    match ty {
        Type::Float(w) => {
            let v: f64 = val.trim().parse().map_err(|_| bad())?;
            let v = if w == 32 { v as f32 as f64 } else { v };
            Ok(RuntimeValue::Float { value: v, width: w })
        }
        _ => {
            let v: i64 = val.trim().parse().map_err(|_| bad())?;
            RuntimeValue::from_int(v, &ty).ok_or_else(bad)
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fir2std", version, about = "Lower FIR/HLFIR to standard dialects and optimize")]
struct Args {
    /// Input file, or `-` for standard input.
    input: String,
    /// Comma-separated pass pipeline.
    #[arg(long, value_delimiter = ',')]
    passes: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Emit::Text)]
    emit: Emit,
    /// Entry function to execute on the input and the output module.
    #[arg(long)]
    interpret: Option<String>,
    /// Entry argument as `type:value`.
    #[arg(long = "arg", value_parser = parse_arg)]
    args: Vec<RuntimeValue>,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
    #[arg(long)]
    no_verify_each: bool,
    #[arg(long, default_value_t = RunOptions::default().step_budget)]
    step_budget: u64,
}

impl Args {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            passes: self
                .passes
                .clone()
                .map(|p| p.into_iter().filter(|s| !s.is_empty()).collect())
                .unwrap_or_else(|| PipelineConfig::default().passes),
            verify_each: !self.no_verify_each,
            emit: self.emit,
            interpret: self.interpret.as_ref().map(|entry| InterpretSpec {
                entry: entry.clone(),
                args: self.args.clone(),
                tolerance: self.tolerance,
                step_budget: self.step_budget,
            }),
        }
    }
}

/// Captured result of one invocation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CliOutput {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutput {
    fn fail(code: u8, msg: impl std::fmt::Display) -> Self {
        CliOutput {
            code,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

/// Runs the driver on `argv` (including the program name).
pub fn run<I, S>(argv: I, stdin: &mut dyn Read) -> CliOutput
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                CliOutput {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                CliOutput {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let cfg = args.config();
    if let Err(e) = cfg.validate() {
        return CliOutput::fail(EXIT_USAGE, e);
    }
    let source = if args.input == "-" {
        let mut s = String::new();
        if let Err(e) = stdin.read_to_string(&mut s) {
            return CliOutput::fail(EXIT_USAGE, format!("reading standard input: {e}"));
        }
        s
    } else {
        match std::fs::read_to_string(&args.input) {
            Ok(s) => s,
            Err(e) => return CliOutput::fail(EXIT_USAGE, format!("{}: {e}", args.input)),
        }
    };
    let display_name = if args.input == "-" { "<stdin>" } else { args.input.as_str() };
    let input = match parse_module(&source) {
        Ok(m) => m,
        Err(e) => return CliOutput::fail(EXIT_PARSE, format!("{display_name}:{e}")),
    };
    let (output, stats) = match run_pipeline(&cfg, &input) {
        Ok(r) => r,
        Err(e @ PipelineError::Verify { .. }) => return CliOutput::fail(EXIT_VERIFY, e),
        Err(e @ PipelineError::Lowering(_)) => return CliOutput::fail(EXIT_LOWERING, e),
        Err(e @ PipelineError::Config(_)) => return CliOutput::fail(EXIT_USAGE, e),
    };

    let mut out = CliOutput::default();
    match cfg.emit {
        Emit::Text => out.stdout = print_module(&output),
        Emit::Stats => out.stdout = stats.format_stats(),
        Emit::Trace => {}
    }
    let Some(spec) = &cfg.interpret else { return out };
    let opts = RunOptions {
        step_budget: spec.step_budget,
        ..RunOptions::default()
    };
    let reference = match interp::run_module_with(&input, &spec.entry, spec.args.clone(), &opts) {
        Ok(r) => r,
        Err(e) => return CliOutput::fail(EXIT_RUNTIME, format!("input module: {e}")),
    };
    let candidate = match interp::run_module_with(&output, &spec.entry, spec.args.clone(), &opts) {
        Ok(r) => r,
        Err(e) => return CliOutput::fail(EXIT_RUNTIME, format!("output module: {e}")),
    };
    let results: String = candidate
        .results
        .iter()
        .enumerate()
        .map(|(i, v)| format!("result {i} {v}\n"))
        .collect();
    if cfg.emit == Emit::Trace {
        out.stdout = results;
        out.stdout.push_str(&candidate.trace.export());
    } else {
        out.stderr = results;
    }
    if let Verdict::Mismatch(why) = interp::compare_outcomes(&reference, &candidate, spec.tolerance) {
        out.code = EXIT_MISMATCH;
        out.stderr.push_str(&format!("error: output module disagrees with input: {why}\n"));
    }
    out
}

pub fn main() -> ExitCode {
    let out = run(std::env::args_os(), &mut std::io::stdin().lock());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    ExitCode::from(out.code)
}
