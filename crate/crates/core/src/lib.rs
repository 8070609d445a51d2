//! Lowering of a Fortran-oriented IR subset (FIR/HLFIR) into standard
//! structured control flow, memref, affine and linalg dialects, with a
//! reference interpreter that checks every rewrite by execution.

pub mod cli;
pub mod dialect;
pub mod interp;
pub mod ir;
pub mod lowering;
pub mod passes;
pub mod text;
