//! Drives the command-line front end in-process.

use fir2std::cli::run;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/static_128.fir");
    let out = run(
        ["fir2std", path, "--passes=lower-fir,promote-static-shapes", "--emit=stats", "--interpret=main", "--arg=i32:1"],
        &mut std::io::empty(),
    );
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    println!("exit {}", out.code);
}
