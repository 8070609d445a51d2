//! Textual IR: a parser accepting the generic op form plus a few custom
//! forms, and a canonical printer.

mod parser;
mod printer;

pub use parser::{parse_module, ParseError, SourceSpan};
pub use printer::print_module;
