//! Runs two pass pipelines over a Jacobi sweep: one ending in affine
//! promotion, one ending in loop parallelization.

use fir2std::cli::{run_pipeline, PipelineConfig};
use fir2std::text::{parse_module, print_module};

fn main() {
    let m = parse_module(include_str!("../tests/fixtures/jacobi.fir")).expect("valid input");
    let parallel = ["lower-fir", "promote-static-shapes", "hoist-descriptor-loads", "parallelize-loops"];
    for cfg in [
        PipelineConfig::default(),
        PipelineConfig {
            passes: parallel.iter().map(|s| s.to_string()).collect(),
            ..PipelineConfig::default()
        },
    ] {
        let (out, stats) = run_pipeline(&cfg, &m).unwrap_or_else(|e| panic!("{e}"));
        println!("== {}", cfg.passes.join(","));
        print!("{}", stats.format_stats());
        let text = print_module(&out);
        for op in ["affine.for", "scf.parallel", "scf.for"] {
            println!("{op}: {}", text.matches(&format!("\"{op}\"")).count());
        }
    }
}
