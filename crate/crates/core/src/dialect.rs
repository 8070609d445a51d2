//! Declarative op specifications for the FIR/HLFIR subset and the standard
//! dialect subset.
//!
//! Each [`OpSpec`] states operand and result counts with per-position type
//! predicates, attribute requirements, region shape and terminator rules.
//! Rules that relate several types to each other (a load's result is the
//! memref element, a call matches its callee) live in a per-op custom check.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::ir::{Attribute, Module, OpId, Type, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TypeConstraint {
    Any,
    Integer,
    Bool,
    Index,
    IntOrIndex,
    Float,
    /// Integer, float or index.
    Numeric,
    MemRef,
    FirRef,
    FirHeap,
    FirRefOrHeap,
    FirShape,
}

impl TypeConstraint {
    pub fn accepts(self, t: &Type) -> bool {
        use TypeConstraint::*;
        match self {
            Any => true,
            Integer => t.is_integer(),
            Bool => t.is_bool(),
            Index => t.is_index(),
            IntOrIndex => t.is_integer() || t.is_index(),
            Float => t.is_float(),
            Numeric => t.is_scalar(),
            MemRef => t.is_memref(),
            FirRef => matches!(t, Type::FirRef(_)),
            FirHeap => matches!(t, Type::FirHeap(_)),
            FirRefOrHeap => matches!(t, Type::FirRef(_) | Type::FirHeap(_)),
            FirShape => matches!(t, Type::FirShape(_)),
        }
    }
}

/// Positional constraints plus an optional variadic tail.
#[derive(Clone, Debug)]
pub struct Arity {
    pub fixed: Vec<TypeConstraint>,
    pub variadic: Option<TypeConstraint>,
}

impl Arity {
    fn none() -> Self {
        Arity {
            fixed: Vec::new(),
            variadic: None,
        }
    }

    fn check(&self, what: &str, types: &[&Type], out: &mut Vec<String>) {
        let n = self.fixed.len();
        match self.variadic {
            None if types.len() != n => {
                out.push(format!("expected {n} {what}s, found {}", types.len()));
                return;
            }
            Some(_) if types.len() < n => {
                out.push(format!("expected at least {n} {what}s, found {}", types.len()));
                return;
            }
            _ => {}
        }
        for (i, t) in types.iter().enumerate() {
            let c = self.fixed.get(i).copied().or(self.variadic).unwrap_or(TypeConstraint::Any);
            if !c.accepts(t) {
                out.push(format!("{what} #{i} has type {t}, which does not satisfy {c:?}"));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttrKind {
    Int,
    Float,
    IntOrFloat,
    String,
    Type,
    Array,
    SymbolRef,
    Unit,
    DenseIndexArray,
    Any,
}

impl AttrKind {
    fn accepts(self, a: &Attribute) -> bool {
        matches!(
            (self, a),
            (AttrKind::Any, _)
                | (AttrKind::Int, Attribute::Int(..))
                | (AttrKind::Float, Attribute::Float(..))
                | (AttrKind::IntOrFloat, Attribute::Int(..) | Attribute::Float(..))
                | (AttrKind::String, Attribute::String(_))
                | (AttrKind::Type, Attribute::Type(_))
                | (AttrKind::Array, Attribute::Array(_))
                | (AttrKind::SymbolRef, Attribute::SymbolRef(_))
                | (AttrKind::Unit, Attribute::Unit)
                | (AttrKind::DenseIndexArray, Attribute::DenseIndexArray(_))
        )
    }
}

#[derive(Clone, Debug)]
pub struct AttrSpec {
    pub name: &'static str,
    pub kind: AttrKind,
    pub required: bool,
}

#[derive(Clone, Debug)]
pub struct RegionSpec {
    pub single_block: bool,
    /// Ops allowed as the last op of every block; empty means any.
    pub terminators: &'static [&'static str],
}

pub type CustomCheck = fn(&Module, OpId, &mut Vec<String>);

#[derive(Clone, Debug)]
pub struct OpSpec {
    pub name: &'static str,
    pub operands: Arity,
    pub results: Arity,
    pub attributes: Vec<AttrSpec>,
    pub regions: Vec<RegionSpec>,
    pub is_terminator: bool,
    pub successors: usize,
    pub custom: Option<CustomCheck>,
}

impl OpSpec {
    fn new(name: &'static str) -> Self {
        OpSpec {
            name,
            operands: Arity::none(),
            results: Arity::none(),
            attributes: Vec::new(),
            regions: Vec::new(),
            is_terminator: false,
            successors: 0,
            custom: None,
        }
    }

    fn operands(mut self, fixed: &[TypeConstraint]) -> Self {
        self.operands.fixed = fixed.to_vec();
        self
    }

    fn variadic_operands(mut self, c: TypeConstraint) -> Self {
        self.operands.variadic = Some(c);
        self
    }

    fn results(mut self, fixed: &[TypeConstraint]) -> Self {
        self.results.fixed = fixed.to_vec();
        self
    }

    fn variadic_results(mut self, c: TypeConstraint) -> Self {
        self.results.variadic = Some(c);
        self
    }

    fn attr(mut self, name: &'static str, kind: AttrKind) -> Self {
        self.attributes.push(AttrSpec {
            name,
            kind,
            required: true,
        });
        self
    }

    fn opt_attr(mut self, name: &'static str, kind: AttrKind) -> Self {
        self.attributes.push(AttrSpec {
            name,
            kind,
            required: false,
        });
        self
    }

    fn region(mut self, terminators: &'static [&'static str]) -> Self {
        self.regions.push(RegionSpec {
            single_block: true,
            terminators,
        });
        self
    }

    fn cfg_region(mut self, terminators: &'static [&'static str]) -> Self {
        self.regions.push(RegionSpec {
            single_block: false,
            terminators,
        });
        self
    }

    fn terminator(mut self) -> Self {
        self.is_terminator = true;
        self
    }

    fn successors(mut self, n: usize) -> Self {
        self.successors = n;
        self
    }

    fn custom(mut self, f: CustomCheck) -> Self {
        self.custom = Some(f);
        self
    }
}

/// Immutable map from op name to spec.
#[derive(Debug)]
pub struct DialectRegistry {
    specs: BTreeMap<&'static str, OpSpec>,
}

impl DialectRegistry {
    pub fn get(&self, name: &str) -> Option<&OpSpec> {
        self.specs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.specs.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.specs.keys().copied()
    }

    pub fn is_terminator(&self, name: &str) -> bool {
        self.get(name).map(|s| s.is_terminator).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

/// The shared registry. Built once; every call returns the same instance.
pub fn register_dialects() -> &'static DialectRegistry {
    static REGISTRY: OnceLock<DialectRegistry> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

/// Checks one op against its spec. Module-level rules (dominance,
/// terminator placement, symbol resolution) are checked by the verifier.
pub fn check_op(m: &Module, op: OpId, reg: &DialectRegistry) -> Vec<String> {
    let data = m.op(op);
    let Some(spec) = reg.get(&data.name) else {
        return vec![format!("unknown operation '{}'", data.name)];
    };
    let mut out = Vec::new();
    let operand_types: Vec<&Type> = data.operands.iter().map(|v| m.value_type(*v)).collect();
    spec.operands.check("operand", &operand_types, &mut out);
    let result_types: Vec<&Type> = data.result_types.iter().collect();
    spec.results.check("result", &result_types, &mut out);
    for a in &spec.attributes {
        match data.attr(a.name) {
            None if a.required => out.push(format!("missing required attribute '{}'", a.name)),
            Some(v) if !a.kind.accepts(v) => {
                out.push(format!("attribute '{}' must be {:?}, found {v}", a.name, a.kind))
            }
            _ => {}
        }
    }
    for (name, value) in &data.attributes {
        if let Attribute::Int(..) = value {
            if !value.int_fits() {
                out.push(format!("attribute '{name}' value {value} does not fit its type"));
            }
        }
    }
    if data.regions().len() != spec.regions.len() {
        out.push(format!(
            "expected {} regions, found {}",
            spec.regions.len(),
            data.regions().len()
        ));
    } else {
        for (i, (r, rs)) in data.regions().iter().zip(&spec.regions).enumerate() {
            let blocks = m.region(*r).blocks();
            if rs.single_block && blocks.len() != 1 {
                out.push(format!("region #{i} must have exactly one block, found {}", blocks.len()));
            }
            if !rs.terminators.is_empty() {
                for b in blocks {
                    match m.block(*b).ops().last() {
                        Some(last) if rs.terminators.contains(&m.op(*last).name.as_str()) => {}
                        Some(last) => out.push(format!(
                            "region #{i} block must be terminated by one of {:?}, found '{}'",
                            rs.terminators,
                            m.op(*last).name
                        )),
                        None => out.push(format!(
                            "region #{i} block must be terminated by one of {:?}",
                            rs.terminators
                        )),
                    }
                }
            }
        }
    }
    if data.successors.len() != spec.successors {
        out.push(format!(
            "expected {} successors, found {}",
            spec.successors,
            data.successors.len()
        ));
    }
    if out.is_empty() {
        if let Some(f) = spec.custom {
            f(m, op, &mut out);
        }
    }
    out
}

use TypeConstraint as T;

const FUNC_TERMINATORS: &[&str] = &["func.return", "cf.br", "cf.cond_br", "tmp.br", "tmp.cond_br"];

fn build_registry() -> DialectRegistry {
    let mut specs = vec![
        // fir
        OpSpec::new("fir.if")
            .operands(&[T::Bool])
            .variadic_results(T::Any)
            .region(&["fir.result"])
            .region(&["fir.result"])
            .custom(check_if_like),
        OpSpec::new("fir.result").variadic_operands(T::Any).terminator(),
        OpSpec::new("fir.do_loop")
            .operands(&[T::Index, T::Index, T::Index])
            .region(&["fir.result"])
            .custom(check_do_loop),
        OpSpec::new("fir.iterate_while")
            .operands(&[T::Index, T::Index, T::Index, T::Bool])
            .results(&[T::Bool])
            .region(&["fir.result"])
            .custom(check_iterate_while),
        OpSpec::new("fir.alloca")
            .variadic_operands(T::Index)
            .results(&[T::FirRef])
            .attr("in_type", AttrKind::Type)
            .opt_attr("uniq_name", AttrKind::String)
            .custom(check_fir_alloc),
        OpSpec::new("fir.allocmem")
            .variadic_operands(T::Index)
            .results(&[T::FirHeap])
            .attr("in_type", AttrKind::Type)
            .opt_attr("uniq_name", AttrKind::String)
            .custom(check_fir_alloc),
        OpSpec::new("fir.freemem").operands(&[T::FirHeap]),
        OpSpec::new("fir.load")
            .operands(&[T::FirRef])
            .results(&[T::Any])
            .custom(check_fir_load),
        OpSpec::new("fir.store")
            .operands(&[T::Any, T::FirRef])
            .custom(check_fir_store),
        OpSpec::new("fir.shape")
            .variadic_operands(T::Index)
            .results(&[T::FirShape])
            .custom(check_fir_shape),
        OpSpec::new("fir.zero_bits").results(&[T::FirHeap]),
        OpSpec::new("fir.convert")
            .operands(&[T::Any])
            .results(&[T::Any])
            .custom(check_convert),
        OpSpec::new("fir.global")
            .attr("sym_name", AttrKind::String)
            .attr("type", AttrKind::Type)
            .opt_attr("init", AttrKind::Array)
            .custom(check_global_init),
        OpSpec::new("fir.address_of")
            .attr("symbol", AttrKind::SymbolRef)
            .results(&[T::FirRef]),
        // hlfir
        OpSpec::new("hlfir.declare")
            .operands(&[T::Any])
            .variadic_operands(T::Any)
            .results(&[T::Any])
            .attr("uniq_name", AttrKind::String)
            .opt_attr("fortran_attrs", AttrKind::String)
            .opt_attr("lbs", AttrKind::DenseIndexArray)
            .custom(check_declare),
        OpSpec::new("hlfir.assign")
            .operands(&[T::Any, T::FirRef])
            .custom(check_fir_store),
        OpSpec::new("hlfir.designate")
            .operands(&[T::FirRefOrHeap])
            .variadic_operands(T::Index)
            .results(&[T::FirRef])
            .opt_attr("component", AttrKind::String)
            .opt_attr("triplets", AttrKind::Unit)
            .custom(check_designate),
        OpSpec::new("hlfir.sum")
            .operands(&[T::FirRefOrHeap])
            .variadic_operands(T::Any)
            .results(&[T::Numeric])
            .opt_attr("dim", AttrKind::Int)
            .custom(check_reduction_intrinsic),
        OpSpec::new("hlfir.maxval")
            .operands(&[T::FirRefOrHeap])
            .variadic_operands(T::Any)
            .results(&[T::Numeric])
            .opt_attr("dim", AttrKind::Int)
            .custom(check_reduction_intrinsic),
        OpSpec::new("hlfir.product")
            .operands(&[T::FirRefOrHeap])
            .variadic_operands(T::Any)
            .results(&[T::Numeric])
            .opt_attr("dim", AttrKind::Int)
            .custom(check_reduction_intrinsic),
        OpSpec::new("hlfir.dot_product")
            .operands(&[T::FirRefOrHeap, T::FirRefOrHeap])
            .results(&[T::Numeric])
            .custom(check_dot_product),
        OpSpec::new("hlfir.matmul")
            .operands(&[T::FirRefOrHeap, T::FirRefOrHeap])
            .results(&[T::FirHeap])
            .custom(check_matmul),
        OpSpec::new("hlfir.transpose")
            .operands(&[T::FirRefOrHeap])
            .results(&[T::FirHeap])
            .custom(check_transpose),
        OpSpec::new("hlfir.shape_of")
            .operands(&[T::FirRefOrHeap])
            .results(&[T::FirShape])
            .custom(check_shape_of),
        OpSpec::new("hlfir.get_extent")
            .operands(&[T::FirShape])
            .results(&[T::Index])
            .attr("dim", AttrKind::Int)
            .custom(check_get_extent),
        // arith
        OpSpec::new("arith.constant")
            .results(&[T::Numeric])
            .attr("value", AttrKind::IntOrFloat)
            .custom(check_constant),
        OpSpec::new("arith.cmpi")
            .operands(&[T::IntOrIndex, T::IntOrIndex])
            .results(&[T::Bool])
            .attr("predicate", AttrKind::String)
            .custom(check_cmpi),
        OpSpec::new("arith.cmpf")
            .operands(&[T::Float, T::Float])
            .results(&[T::Bool])
            .attr("predicate", AttrKind::String)
            .custom(check_cmpf),
        OpSpec::new("arith.index_cast")
            .operands(&[T::IntOrIndex])
            .results(&[T::IntOrIndex])
            .custom(check_index_cast),
        OpSpec::new("arith.sitofp")
            .operands(&[T::Integer])
            .results(&[T::Float]),
        OpSpec::new("arith.fptosi")
            .operands(&[T::Float])
            .results(&[T::Integer]),
        // scf
        OpSpec::new("scf.if")
            .operands(&[T::Bool])
            .variadic_results(T::Any)
            .region(&["scf.yield"])
            .region(&["scf.yield"])
            .custom(check_if_like),
        OpSpec::new("scf.for")
            .operands(&[T::Index, T::Index, T::Index])
            .region(&["scf.yield"])
            .custom(check_counted_loop),
        OpSpec::new("scf.while")
            .variadic_operands(T::Any)
            .variadic_results(T::Any)
            .region(&["scf.condition"])
            .region(&["scf.yield"])
            .custom(check_while),
        OpSpec::new("scf.condition")
            .operands(&[T::Bool])
            .variadic_operands(T::Any)
            .terminator(),
        OpSpec::new("scf.parallel")
            .operands(&[T::Index, T::Index, T::Index])
            .region(&["scf.reduce"])
            .custom(check_counted_loop),
        OpSpec::new("scf.yield").variadic_operands(T::Any).terminator(),
        OpSpec::new("scf.reduce").terminator(),
        // cf
        OpSpec::new("cf.br")
            .variadic_operands(T::Any)
            .successors(1)
            .terminator()
            .custom(check_br),
        OpSpec::new("cf.cond_br")
            .operands(&[T::Bool])
            .variadic_operands(T::Any)
            .successors(2)
            .terminator()
            .opt_attr("operandSegmentSizes", AttrKind::DenseIndexArray)
            .custom(check_cond_br),
        // relative-index branches used while lowering
        OpSpec::new("tmp.br")
            .variadic_operands(T::Any)
            .attr("dest", AttrKind::Int)
            .terminator(),
        OpSpec::new("tmp.cond_br")
            .operands(&[T::Bool])
            .variadic_operands(T::Any)
            .attr("true_dest", AttrKind::Int)
            .attr("false_dest", AttrKind::Int)
            .opt_attr("operandSegmentSizes", AttrKind::DenseIndexArray)
            .terminator(),
        // func
        OpSpec::new("func.func")
            .attr("sym_name", AttrKind::String)
            .attr("function_type", AttrKind::Type)
            .cfg_region(FUNC_TERMINATORS)
            .custom(check_func),
        OpSpec::new("func.return")
            .variadic_operands(T::Any)
            .terminator()
            .custom(check_return),
        OpSpec::new("func.call")
            .variadic_operands(T::Any)
            .variadic_results(T::Any)
            .attr("callee", AttrKind::SymbolRef)
            .custom(check_call),
        // memref
        OpSpec::new("memref.alloca")
            .variadic_operands(T::Index)
            .results(&[T::MemRef])
            .opt_attr("uniq_name", AttrKind::String)
            .custom(check_memref_alloc),
        OpSpec::new("memref.alloc")
            .variadic_operands(T::Index)
            .results(&[T::MemRef])
            .opt_attr("uniq_name", AttrKind::String)
            .custom(check_memref_alloc),
        OpSpec::new("memref.alloca_scope")
            .variadic_results(T::Any)
            .region(&["memref.alloca_scope.return"])
            .custom(check_alloca_scope),
        OpSpec::new("memref.alloca_scope.return")
            .variadic_operands(T::Any)
            .terminator(),
        OpSpec::new("memref.dealloc").operands(&[T::MemRef]),
        OpSpec::new("memref.load")
            .operands(&[T::MemRef])
            .variadic_operands(T::Index)
            .results(&[T::Any])
            .custom(check_memref_load),
        OpSpec::new("memref.store")
            .operands(&[T::Any, T::MemRef])
            .variadic_operands(T::Index)
            .custom(check_memref_store),
        OpSpec::new("memref.cast")
            .operands(&[T::MemRef])
            .results(&[T::MemRef])
            .custom(check_memref_cast),
        OpSpec::new("memref.dim")
            .operands(&[T::MemRef, T::Index])
            .results(&[T::Index]),
        OpSpec::new("memref.subview")
            .operands(&[T::MemRef])
            .variadic_operands(T::Index)
            .results(&[T::MemRef])
            .custom(check_subview),
        OpSpec::new("memref.global")
            .attr("sym_name", AttrKind::String)
            .attr("type", AttrKind::Type)
            .opt_attr("initial_value", AttrKind::Array)
            .custom(check_global_init),
        OpSpec::new("memref.get_global")
            .attr("name", AttrKind::SymbolRef)
            .results(&[T::MemRef]),
        // affine
        OpSpec::new("affine.for")
            .operands(&[T::Index, T::Index])
            .attr("step", AttrKind::Int)
            .region(&["affine.yield"])
            .custom(check_counted_loop),
        OpSpec::new("affine.load")
            .operands(&[T::MemRef])
            .variadic_operands(T::Index)
            .results(&[T::Any])
            .attr("offsets", AttrKind::DenseIndexArray)
            .custom(check_affine_load),
        OpSpec::new("affine.store")
            .operands(&[T::Any, T::MemRef])
            .variadic_operands(T::Index)
            .attr("offsets", AttrKind::DenseIndexArray)
            .custom(check_affine_store),
        OpSpec::new("affine.yield").variadic_operands(T::Any).terminator(),
        // linalg
        OpSpec::new("linalg.reduce")
            .operands(&[T::MemRef, T::MemRef])
            .attr("dimensions", AttrKind::DenseIndexArray)
            .region(&["linalg.yield"])
            .custom(check_linalg_reduce),
        OpSpec::new("linalg.matmul")
            .operands(&[T::MemRef, T::MemRef, T::MemRef])
            .custom(check_linalg_matmul),
        OpSpec::new("linalg.dot")
            .operands(&[T::MemRef, T::MemRef, T::MemRef])
            .custom(check_linalg_dot),
        OpSpec::new("linalg.transpose")
            .operands(&[T::MemRef, T::MemRef])
            .attr("permutation", AttrKind::DenseIndexArray)
            .custom(check_linalg_transpose),
        OpSpec::new("linalg.fill")
            .operands(&[T::Numeric, T::MemRef])
            .custom(check_linalg_fill),
        OpSpec::new("linalg.yield").variadic_operands(T::Any).terminator(),
        // acc (structural only)
        OpSpec::new("acc.kernels")
            .variadic_operands(T::Any)
            .region(&["acc.terminator"]),
        OpSpec::new("acc.terminator").terminator(),
        OpSpec::new("acc.create").operands(&[T::Any]),
        OpSpec::new("acc.delete").operands(&[T::Any]),
        OpSpec::new("acc.copyout").operands(&[T::Any]),
        // host registration markers left behind by the kernels rewrite
        OpSpec::new("gpu.host_register").operands(&[T::MemRef]),
        OpSpec::new("gpu.host_unregister").operands(&[T::MemRef]),
        OpSpec::new("ub.poison").results(&[T::Any]),
    ];
    for name in [
        "arith.addi",
        "arith.subi",
        "arith.muli",
        "arith.divsi",
        "arith.remsi",
        "arith.andi",
        "arith.ori",
        "arith.maxsi",
        "arith.minsi",
    ] {
        specs.push(
            OpSpec::new(name)
                .operands(&[T::IntOrIndex, T::IntOrIndex])
                .results(&[T::IntOrIndex])
                .custom(check_same_types),
        );
    }
    for name in ["arith.addf", "arith.subf", "arith.mulf", "arith.divf", "arith.maximumf"] {
        specs.push(
            OpSpec::new(name)
                .operands(&[T::Float, T::Float])
                .results(&[T::Float])
                .custom(check_same_types),
        );
    }
    specs.push(
        OpSpec::new("arith.select")
            .operands(&[T::Bool, T::Any, T::Any])
            .results(&[T::Any])
            .custom(check_select),
    );
    DialectRegistry {
        specs: specs.into_iter().map(|s| (s.name, s)).collect(),
    }
}

fn check_select(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (a, b) = (operand_ty(m, op, 1), operand_ty(m, op, 2));
    if a != b || *a != m.op(op).result_types[0] {
        out.push("select operands and result must share one type".into());
    }
}

fn ty(m: &Module, v: Value) -> &Type {
    m.value_type(v)
}

fn operand_ty(m: &Module, op: OpId, i: usize) -> &Type {
    m.value_type(m.op(op).operands[i])
}

fn terminator_operand_types(m: &Module, region: crate::ir::RegionId) -> Option<Vec<Type>> {
    let b = m.region(region).entry()?;
    let last = *m.block(b).ops().last()?;
    Some(m.op(last).operands.iter().map(|v| ty(m, *v).clone()).collect())
}

fn check_same_types(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    let (a, b, r) = (operand_ty(m, op, 0), operand_ty(m, op, 1), &d.result_types[0]);
    if a != b || a != r {
        out.push(format!("operand and result types must match, found {a}, {b} -> {r}"));
    }
}

fn check_constant(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    let r = &d.result_types[0];
    match d.attr("value") {
        Some(Attribute::Int(_, t)) | Some(Attribute::Float(_, t)) if t != r => {
            out.push(format!("value type {t} does not match result type {r}"))
        }
        Some(Attribute::Float(..)) if !r.is_float() => out.push("float value for non-float result".into()),
        Some(Attribute::Int(..)) if r.is_float() => out.push("integer value for float result".into()),
        _ => {}
    }
}

const CMPI_PREDICATES: &[&str] = &["eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge"];
const CMPF_PREDICATES: &[&str] = &["oeq", "one", "olt", "ole", "ogt", "oge", "ueq", "une", "ult", "ule", "ugt", "uge"];

fn check_cmpi(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_cmp(m, op, CMPI_PREDICATES, out)
}

fn check_cmpf(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_cmp(m, op, CMPF_PREDICATES, out)
}

fn check_cmp(m: &Module, op: OpId, allowed: &[&str], out: &mut Vec<String>) {
    let p = m.op(op).attr("predicate").and_then(Attribute::as_str).unwrap_or("");
    if !allowed.contains(&p) {
        out.push(format!("unknown comparison predicate '{p}'"));
    }
    let (a, b) = (operand_ty(m, op, 0), operand_ty(m, op, 1));
    if a != b {
        out.push(format!("compared operands differ in type: {a} vs {b}"));
    }
}

fn check_index_cast(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (a, r) = (operand_ty(m, op, 0), &m.op(op).result_types[0]);
    if a.is_index() == r.is_index() {
        out.push(format!("index_cast must convert between index and integer, found {a} -> {r}"));
    }
}

fn tl(ts: &[Type]) -> String {
    let parts: Vec<String> = ts.iter().map(Type::to_string).collect();
    format!("({})", parts.join(", "))
}

fn check_if_like(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    for (i, r) in d.regions().iter().enumerate() {
        if let Some(ts) = terminator_operand_types(m, *r) {
            if ts != d.result_types {
                out.push(format!("region #{i} yields {} but op results are {}", tl(&ts), tl(&d.result_types)));
            }
        }
    }
}

fn check_entry_args(m: &Module, op: OpId, expected: &[Type], out: &mut Vec<String>) {
    if let Some(b) = m.entry_block(op) {
        if m.block(b).args != expected {
            out.push(format!(
                "body entry block arguments must be {}, found {}",
                tl(expected),
                tl(&m.block(b).args)
            ));
        }
    }
}

fn check_do_loop(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_entry_args(m, op, &[Type::Index], out);
    if let Some(ts) = terminator_operand_types(m, m.op(op).regions()[0]) {
        if !ts.is_empty() {
            out.push("loop-carried values are not supported".into());
        }
    }
}

fn check_iterate_while(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_entry_args(m, op, &[Type::Index, Type::i1()], out);
    if let Some(ts) = terminator_operand_types(m, m.op(op).regions()[0]) {
        if ts != [Type::i1()] {
            out.push("body must yield exactly one i1 continue flag".into());
        }
    }
}

fn check_counted_loop(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_entry_args(m, op, &[Type::Index], out);
    if let Some(ts) = terminator_operand_types(m, m.op(op).regions()[0]) {
        if !ts.is_empty() {
            out.push("loop body terminator must not carry values".into());
        }
    }
    if m.op(op).name == "affine.for" {
        match m.op(op).attr("step").and_then(Attribute::as_int) {
            Some(s) if s > 0 => {}
            _ => out.push("affine.for step must be a positive constant".into()),
        }
    }
}

fn check_while(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    let inits: Vec<Type> = d.operands.iter().map(|v| ty(m, *v).clone()).collect();
    let (before, after) = (d.regions()[0], d.regions()[1]);
    if let Some(b) = m.region(before).entry() {
        if m.block(b).args != inits {
            out.push("before-region arguments must match the initial values".into());
        }
    }
    if let Some(ts) = terminator_operand_types(m, before) {
        if ts.first() != Some(&Type::i1()) || ts[1..] != d.result_types[..] {
            out.push("scf.condition must forward values matching the op results".into());
        }
    }
    if let Some(b) = m.region(after).entry() {
        if m.block(b).args != d.result_types {
            out.push("after-region arguments must match the op results".into());
        }
    }
    if let Some(ts) = terminator_operand_types(m, after) {
        if ts != inits {
            out.push("after-region must yield values matching the initial values".into());
        }
    }
}

fn successor_types_match(m: &Module, op: OpId, succ: usize, args: &[Value], out: &mut Vec<String>) {
    let b = m.op(op).successors[succ];
    let expected = &m.block(b).args;
    let found: Vec<Type> = args.iter().map(|v| ty(m, *v).clone()).collect();
    if *expected != found {
        out.push(format!("successor #{succ} expects {}, given {}", tl(expected), tl(&found)));
    }
}

fn check_br(m: &Module, op: OpId, out: &mut Vec<String>) {
    let args = m.op(op).operands.clone();
    successor_types_match(m, op, 0, &args, out);
}

/// Splits the operands of a conditional branch into (true args, false args).
pub fn cond_br_segments(m: &Module, op: OpId) -> Option<(Vec<Value>, Vec<Value>)> {
    let d = m.op(op);
    let rest = &d.operands[1..];
    match d.attr("operandSegmentSizes").and_then(Attribute::as_dense) {
        Some([1, t, f]) if (*t + *f) as usize == rest.len() => {
            let t = *t as usize;
            Some((rest[..t].to_vec(), rest[t..].to_vec()))
        }
        Some(_) => None,
        None if rest.is_empty() => Some((Vec::new(), Vec::new())),
        None => None,
    }
}

fn check_cond_br(m: &Module, op: OpId, out: &mut Vec<String>) {
    match cond_br_segments(m, op) {
        Some((t, f)) => {
            successor_types_match(m, op, 0, &t, out);
            successor_types_match(m, op, 1, &f, out);
        }
        None => out.push("operandSegmentSizes does not describe the operands".into()),
    }
}

fn function_type(m: &Module, func: OpId) -> Option<(&[Type], &[Type])> {
    match m.op(func).attr("function_type") {
        Some(Attribute::Type(Type::Function { inputs, results })) => Some((inputs, results)),
        _ => None,
    }
}

fn check_func(m: &Module, op: OpId, out: &mut Vec<String>) {
    let Some((inputs, _)) = function_type(m, op) else {
        out.push("function_type must be a function type".into());
        return;
    };
    if m.op(op).parent_block() != Some(m.body_block()) {
        out.push("func.func must be a top-level op".into());
    }
    let inputs = inputs.to_vec();
    check_entry_args(m, op, &inputs, out);
}

fn check_return(m: &Module, op: OpId, out: &mut Vec<String>) {
    let Some(f) = m.parent_op(op) else { return };
    if m.op(f).name != "func.func" {
        out.push("func.return must be directly inside func.func".into());
        return;
    }
    if let Some((_, results)) = function_type(m, f) {
        let found: Vec<Type> = m.op(op).operands.iter().map(|v| ty(m, *v).clone()).collect();
        if found != results {
            out.push(format!("returns {} but the function declares {}", tl(&found), tl(results)));
        }
    }
}

fn check_call(m: &Module, op: OpId, out: &mut Vec<String>) {
    let Some(name) = m.op(op).attr("callee").and_then(Attribute::as_symbol) else { return };
    let Some(f) = m.lookup_symbol(name) else {
        out.push(format!("call to undefined function @{name}"));
        return;
    };
    let Some((inputs, results)) = function_type(m, f) else { return };
    let found: Vec<Type> = m.op(op).operands.iter().map(|v| ty(m, *v).clone()).collect();
    if found != inputs {
        out.push(format!("call operands {} do not match @{name} inputs {}", tl(&found), tl(inputs)));
    }
    if m.op(op).result_types != results {
        out.push(format!("call results do not match @{name}"));
    }
}

fn check_fir_alloc(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    let Some(in_type) = d.attr("in_type").and_then(Attribute::as_type) else { return };
    let expected = if d.name == "fir.alloca" {
        Type::fir_ref(in_type.clone())
    } else {
        Type::fir_heap(in_type.clone())
    };
    if d.result_types[0] != expected {
        out.push(format!("result must be {expected}, found {}", d.result_types[0]));
    }
    let dynamic = in_type
        .shape()
        .map(|s| s.iter().filter(|x| x.as_static().is_none()).count())
        .unwrap_or(0);
    if dynamic != d.operands.len() {
        out.push(format!("{dynamic} dynamic extents need {dynamic} operands, found {}", d.operands.len()));
    }
}

fn check_fir_load(m: &Module, op: OpId, out: &mut Vec<String>) {
    let p = operand_ty(m, op, 0).pointee().cloned();
    if p.as_ref() != Some(&m.op(op).result_types[0]) {
        out.push("fir.load result must be the referenced type".into());
    }
}

fn check_fir_store(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (v, r) = (operand_ty(m, op, 0), operand_ty(m, op, 1));
    if r.pointee() != Some(v) {
        out.push(format!("cannot store {v} through {r}"));
    }
}

/// Shape-compatible: same rank and element, each dimension equal or dynamic
/// on one side.
pub fn shapes_compatible(a: &Type, b: &Type) -> bool {
    match (a.shape(), b.shape()) {
        (Some(x), Some(y)) => {
            x.len() == y.len()
                && a.element() == b.element()
                && x.iter().zip(y).all(|(p, q)| p == q || p.as_static().is_none() || q.as_static().is_none())
        }
        _ => a == b,
    }
}

fn check_convert(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (a, r) = (operand_ty(m, op, 0), &m.op(op).result_types[0]);
    let ok = match (a, r) {
        (Type::FirRef(_) | Type::FirHeap(_), Type::FirRef(_) | Type::FirHeap(_)) => {
            let (p, q) = (a.pointee().unwrap(), r.pointee().unwrap());
            p == q || shapes_compatible(p, q)
        }
        _ => (a.is_integer() || a.is_index()) && (r.is_integer() || r.is_index()),
    };
    if !ok {
        out.push(format!("cannot convert {a} to {r}"));
    }
}

fn check_memref_cast(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (a, r) = (operand_ty(m, op, 0), &m.op(op).result_types[0]);
    if !shapes_compatible(a, r) {
        out.push(format!("incompatible memref cast from {a} to {r}"));
    }
}

fn check_fir_shape(m: &Module, op: OpId, out: &mut Vec<String>) {
    let n = m.op(op).operands.len();
    if n == 0 || m.op(op).result_types[0] != Type::FirShape(n) {
        out.push(format!("fir.shape with {n} extents must produce !fir.shape<{n}>"));
    }
}

fn check_global_init(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    if d.parent_block() != Some(m.body_block()) {
        out.push("globals must be top-level ops".into());
    }
    let Some(t) = d.attr("type").and_then(Attribute::as_type) else { return };
    let init = d.attr("init").or_else(|| d.attr("initial_value")).and_then(Attribute::as_array);
    if d.name == "memref.global" && !t.is_memref() {
        out.push("memref.global type must be a memref".into());
    }
    if let Some(items) = init {
        let (len, elem) = match t {
            Type::MemRef { .. } | Type::FirArray { .. } => (t.static_len(), t.element().cloned()),
            other => (Some(1), Some(other.clone())),
        };
        if len != Some(items.len() as i64) {
            out.push(format!("initializer has {} values, type needs {len:?}", items.len()));
        }
        for a in items {
            let at = match a {
                Attribute::Int(_, t) | Attribute::Float(_, t) => Some(t),
                _ => None,
            };
            if at != elem.as_ref() {
                out.push(format!("initializer value {a} does not match element type"));
            }
        }
    }
}

/// Rank of the Fortran array a declare/designate base refers to.
fn fir_array_of(t: &Type) -> Option<&Type> {
    match t.pointee()? {
        a @ Type::FirArray { .. } => Some(a),
        Type::FirHeap(inner) => match &**inner {
            a @ Type::FirArray { .. } => Some(a),
            _ => None,
        },
        _ => None,
    }
}

fn check_declare(m: &Module, op: OpId, out: &mut Vec<String>) {
    let d = m.op(op);
    let base = operand_ty(m, op, 0);
    if d.result_types[0] != *base {
        out.push("hlfir.declare result must have the type of its memory operand".into());
    }
    let rank = fir_array_of(base).and_then(Type::rank).unwrap_or(0);
    let mut rest = &d.operands[1..];
    if let Some(first) = rest.first() {
        if let Type::FirShape(n) = ty(m, *first) {
            if *n != rank {
                out.push(format!("shape rank {n} does not match array rank {rank}"));
            }
            rest = &rest[1..];
        }
    }
    if !rest.is_empty() {
        if rest.len() != rank {
            out.push(format!("{} dynamic lower bounds given for rank {rank}", rest.len()));
        }
        if rest.iter().any(|v| !ty(m, *v).is_index()) {
            out.push("dynamic lower bounds must be index values".into());
        }
    }
    if let Some(lbs) = d.attr("lbs").and_then(Attribute::as_dense) {
        if lbs.len() != rank {
            out.push(format!("lbs has {} entries for rank {rank}", lbs.len()));
        }
        if !rest.is_empty() {
            out.push("static and dynamic lower bounds are exclusive".into());
        }
    }
}

/// Expected result type of a designate, or an error message.
pub fn designate_result_type(m: &Module, op: OpId) -> Result<Type, String> {
    let d = m.op(op);
    let base = ty(m, d.operands[0]);
    let subs = d.operands.len() - 1;
    let (array, elem_of_component) = match d.attr("component").and_then(Attribute::as_str) {
        Some(c) => {
            let Some(Type::FirDerived { members, name }) = base.pointee() else {
                return Err("component access on a non-derived base".into());
            };
            let Some((_, mt)) = members.iter().find(|(n, _)| n == c) else {
                return Err(format!("type {name} has no component '{c}'"));
            };
            if subs == 0 {
                return Ok(Type::fir_ref(mt.clone()));
            }
            (mt.clone(), true)
        }
        None => match fir_array_of(base) {
            Some(a) => (a.clone(), false),
            None => return Err(format!("cannot index into {base}")),
        },
    };
    let _ = elem_of_component;
    let (Some(rank), Some(elem)) = (array.rank(), array.element().cloned()) else {
        return Err(format!("cannot index into {array}"));
    };
    if d.attr("triplets").is_some() {
        if subs != 3 * rank {
            return Err(format!("section of rank {rank} needs {} operands, found {subs}", 3 * rank));
        }
        return Ok(Type::fir_ref(Type::fir_array(vec![crate::ir::Dim::Dynamic; rank], elem)));
    }
    if subs != rank {
        return Err(format!("{subs} subscripts for an array of rank {rank}"));
    }
    Ok(Type::fir_ref(elem))
}

fn check_designate(m: &Module, op: OpId, out: &mut Vec<String>) {
    match designate_result_type(m, op) {
        Ok(t) if t != m.op(op).result_types[0] => {
            out.push(format!("designate result must be {t}, found {}", m.op(op).result_types[0]))
        }
        Ok(_) => {}
        Err(e) => out.push(e),
    }
}

fn check_reduction_intrinsic(m: &Module, op: OpId, out: &mut Vec<String>) {
    let a = fir_array_of(operand_ty(m, op, 0));
    match a.and_then(Type::element) {
        Some(e) if *e == m.op(op).result_types[0] => {}
        _ => out.push("reduction result must be the array element type".into()),
    }
}

fn check_dot_product(m: &Module, op: OpId, out: &mut Vec<String>) {
    for i in 0..2 {
        let a = fir_array_of(operand_ty(m, op, i));
        if a.and_then(Type::rank) != Some(1) || a.and_then(Type::element) != Some(&m.op(op).result_types[0]) {
            out.push(format!("dot_product operand #{i} must be a rank-1 array of the result type"));
        }
    }
}

fn check_matmul(m: &Module, op: OpId, out: &mut Vec<String>) {
    let r = m.op(op).result_types[0].pointee().cloned();
    let elem = r.as_ref().and_then(Type::element);
    for i in 0..2 {
        let a = fir_array_of(operand_ty(m, op, i));
        if a.and_then(Type::rank) != Some(2) || a.and_then(Type::element) != elem {
            out.push(format!("matmul operand #{i} must be a rank-2 array of the result element type"));
        }
    }
    if r.as_ref().and_then(Type::rank) != Some(2) {
        out.push("matmul result must be a rank-2 heap array".into());
    }
}

fn check_transpose(m: &Module, op: OpId, out: &mut Vec<String>) {
    let r = m.op(op).result_types[0].pointee().cloned();
    let a = fir_array_of(operand_ty(m, op, 0));
    if a.and_then(Type::rank) != Some(2)
        || r.as_ref().and_then(Type::rank) != Some(2)
        || a.and_then(Type::element) != r.as_ref().and_then(Type::element)
    {
        out.push("transpose maps a rank-2 array to a rank-2 heap array of the same element".into());
    }
}

fn check_shape_of(m: &Module, op: OpId, out: &mut Vec<String>) {
    let rank = fir_array_of(operand_ty(m, op, 0)).and_then(Type::rank);
    if rank.map(Type::FirShape).as_ref() != Some(&m.op(op).result_types[0]) {
        out.push("shape_of result rank must match the array".into());
    }
}

fn check_get_extent(m: &Module, op: OpId, out: &mut Vec<String>) {
    let dim = m.op(op).attr("dim").and_then(Attribute::as_int).unwrap_or(-1);
    if let Type::FirShape(n) = operand_ty(m, op, 0) {
        if dim < 0 || dim as usize >= *n {
            out.push(format!("dim {dim} out of range for rank {n}"));
        }
    }
}

fn check_memref_alloc(m: &Module, op: OpId, out: &mut Vec<String>) {
    let t = &m.op(op).result_types[0];
    let dynamic = t.shape().map(|s| s.iter().filter(|d| d.as_static().is_none()).count()).unwrap_or(0);
    if dynamic != m.op(op).operands.len() {
        out.push(format!(
            "{t} has {dynamic} dynamic dimensions but {} size operands were given",
            m.op(op).operands.len()
        ));
    }
}

fn check_alloca_scope(m: &Module, op: OpId, out: &mut Vec<String>) {
    if let Some(ts) = terminator_operand_types(m, m.op(op).regions()[0]) {
        if ts != m.op(op).result_types {
            out.push("alloca_scope results must match its terminator operands".into());
        }
    }
}

fn check_access(m: &Module, op: OpId, memref_pos: usize, offsets: bool, out: &mut Vec<String>) -> Option<Type> {
    let mt = operand_ty(m, op, memref_pos).clone();
    let rank = mt.rank().unwrap_or(0);
    let n = m.op(op).operands.len() - memref_pos - 1;
    if n != rank {
        out.push(format!("{n} indices given for a memref of rank {rank}"));
    }
    if offsets {
        let len = m.op(op).attr("offsets").and_then(Attribute::as_dense).map(<[i64]>::len);
        if len != Some(rank) {
            out.push(format!("offsets must have one entry per dimension ({rank})"));
        }
    }
    mt.element().cloned()
}

fn check_memref_load(m: &Module, op: OpId, out: &mut Vec<String>) {
    if let Some(e) = check_access(m, op, 0, false, out) {
        if e != m.op(op).result_types[0] {
            out.push(format!("load result must be {e}"));
        }
    }
}

fn check_memref_store(m: &Module, op: OpId, out: &mut Vec<String>) {
    if let Some(e) = check_access(m, op, 1, false, out) {
        if e != *operand_ty(m, op, 0) {
            out.push(format!("stored value must be {e}"));
        }
    }
}

fn check_affine_load(m: &Module, op: OpId, out: &mut Vec<String>) {
    if let Some(e) = check_access(m, op, 0, true, out) {
        if e != m.op(op).result_types[0] {
            out.push(format!("load result must be {e}"));
        }
    }
}

fn check_affine_store(m: &Module, op: OpId, out: &mut Vec<String>) {
    if let Some(e) = check_access(m, op, 1, true, out) {
        if e != *operand_ty(m, op, 0) {
            out.push(format!("stored value must be {e}"));
        }
    }
}

fn check_subview(m: &Module, op: OpId, out: &mut Vec<String>) {
    let src = operand_ty(m, op, 0);
    let rank = src.rank().unwrap_or(0);
    let n = m.op(op).operands.len() - 1;
    if n != 3 * rank {
        out.push(format!("subview of rank {rank} needs {} operands, found {n}", 3 * rank));
    }
    let r = &m.op(op).result_types[0];
    if r.rank() != Some(rank) || r.element() != src.element() {
        out.push("subview result must keep rank and element type".into());
    }
}

fn check_linalg_reduce(m: &Module, op: OpId, out: &mut Vec<String>) {
    let (inp, outp) = (operand_ty(m, op, 0), operand_ty(m, op, 1));
    let dims = m.op(op).attr("dimensions").and_then(Attribute::as_dense).unwrap_or(&[]);
    let rank = inp.rank().unwrap_or(0);
    if dims.iter().any(|d| *d < 0 || *d as usize >= rank) {
        out.push("reduction dimension out of range".into());
    }
    if outp.rank() != Some(rank - dims.len().min(rank)) {
        out.push("output rank must be the input rank minus the reduced dimensions".into());
    }
    let elem = inp.element().cloned().unwrap_or(Type::Index);
    if outp.element() != Some(&elem) {
        out.push("input and output element types differ".into());
    }
    check_entry_args(m, op, &[elem.clone(), elem.clone()], out);
    if let Some(ts) = terminator_operand_types(m, m.op(op).regions()[0]) {
        if ts != [elem] {
            out.push("reduction body must yield one element".into());
        }
    }
}

fn check_linalg_ranks(m: &Module, op: OpId, ranks: &[usize], out: &mut Vec<String>) {
    let elem = operand_ty(m, op, 0).element().cloned();
    for (i, r) in ranks.iter().enumerate() {
        let t = operand_ty(m, op, i);
        if t.rank() != Some(*r) {
            out.push(format!("operand #{i} must have rank {r}"));
        }
        if t.element().cloned() != elem {
            out.push("operands must share an element type".into());
        }
    }
}

fn check_linalg_matmul(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_linalg_ranks(m, op, &[2, 2, 2], out)
}

fn check_linalg_dot(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_linalg_ranks(m, op, &[1, 1, 0], out)
}

fn check_linalg_transpose(m: &Module, op: OpId, out: &mut Vec<String>) {
    check_linalg_ranks(m, op, &[2, 2], out);
    let p = m.op(op).attr("permutation").and_then(Attribute::as_dense).unwrap_or(&[]);
    if p != [1, 0] {
        out.push("only the [1, 0] permutation is supported".into());
    }
}

fn check_linalg_fill(m: &Module, op: OpId, out: &mut Vec<String>) {
    if operand_ty(m, op, 1).element() != Some(operand_ty(m, op, 0)) {
        out.push("fill value must have the element type".into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Dim, OperationState};

    fn func(m: &mut Module) -> crate::ir::BlockId {
        let (r, b) = m.region_with_block(vec![]);
        m.append(
            m.body_block(),
            OperationState::new("func.func")
                .attr("sym_name", Attribute::str("f"))
                .attr("function_type", Attribute::Type(Type::Function { inputs: vec![], results: vec![] }))
                .region(r),
        );
        b
    }

    fn constant(m: &mut Module, b: crate::ir::BlockId, v: i64, t: Type) -> Value {
        let op = m.append(
            b,
            OperationState::new("arith.constant")
                .attr("value", Attribute::Int(v, t.clone()))
                .result(t),
        );
        m.result(op, 0)
    }

    #[test]
    fn scf_if_has_one_bool_operand_and_two_regions() {
        let spec = register_dialects().get("scf.if").unwrap();
        assert_eq!(spec.operands.fixed, vec![TypeConstraint::Bool]);
        assert_eq!(spec.operands.variadic, None);
        assert_eq!(spec.regions.len(), 2);
    }

    #[test]
    fn do_loop_has_three_index_operands_and_one_region() {
        let spec = register_dialects().get("fir.do_loop").unwrap();
        assert_eq!(spec.operands.fixed, vec![TypeConstraint::Index; 3]);
        assert_eq!(spec.regions.len(), 1);
    }

    #[test]
    fn unknown_names_are_absent() {
        assert!(register_dialects().get("nonexistent.op").is_none());
    }

    #[test]
    fn registry_is_shared_and_stable() {
        let a = register_dialects();
        let b = register_dialects();
        assert!(std::ptr::eq(a, b));
        assert!(a.names().eq(b.names()));
    }

    #[test]
    fn cmpi_eq_on_i32_is_clean() {
        let mut m = Module::new();
        let b = func(&mut m);
        let x = constant(&mut m, b, 3, Type::i32());
        let y = constant(&mut m, b, 50, Type::i32());
        let op = m.append(
            b,
            OperationState::new("arith.cmpi")
                .operands([x, y])
                .attr("predicate", Attribute::str("eq"))
                .result(Type::i1()),
        );
        assert!(check_op(&m, op, register_dialects()).is_empty());
        // deterministic
        assert_eq!(check_op(&m, op, register_dialects()), check_op(&m, op, register_dialects()));
    }

    #[test]
    fn scf_if_without_yield_is_rejected() {
        let mut m = Module::new();
        let b = func(&mut m);
        let c = constant(&mut m, b, 1, Type::i1());
        let (r1, b1) = m.region_with_block(vec![]);
        let (r2, b2) = m.region_with_block(vec![]);
        m.append(b2, OperationState::new("scf.yield"));
        let _ = b1;
        let op = m.append(b, OperationState::new("scf.if").operand(c).region(r1).region(r2));
        let diags = check_op(&m, op, register_dialects());
        assert_eq!(diags.len(), 1, "{diags:?}");
    }

    #[test]
    fn memref_store_index_count_must_match_rank() {
        let mut m = Module::new();
        let b = func(&mut m);
        let mem = m.append(
            b,
            OperationState::new("memref.alloca").result(Type::memref(vec![Dim::Static(4), Dim::Static(4)], Type::i32())),
        );
        let mem = m.result(mem, 0);
        let v = constant(&mut m, b, 1, Type::i32());
        let i = constant(&mut m, b, 0, Type::Index);
        let op = m.append(b, OperationState::new("memref.store").operands([v, mem, i]));
        let diags = check_op(&m, op, register_dialects());
        assert_eq!(diags.len(), 1, "{diags:?}");
    }

    #[test]
    fn unknown_op_yields_one_diagnostic() {
        let mut m = Module::new();
        let b = func(&mut m);
        let op = m.append(b, OperationState::new("foo.bar"));
        assert_eq!(check_op(&m, op, register_dialects()).len(), 1);
    }
}
