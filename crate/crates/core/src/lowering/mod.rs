//! Rewrites FIR/HLFIR-subset modules into the standard dialects.

mod scopes;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::interp::{fortran_trip_count, reduction_init, reduction_op, RuntimeValue};
use crate::ir::{Attribute, BlockId, Dim, Module, OpId, OperationState, RegionId, Type, Value};

pub use scopes::insert_alloca_scopes;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{path}: {message}")]
pub struct LoweringError {
    pub path: String,
    pub message: String,
}

/// Dimension origin (Fortran lower bound) of an array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Static(i64),
    Dynamic(Value),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepSign {
    Positive,
    Negative,
    Unknown,
}

impl StepSign {
    /// Classifies a step from its constant value, if any. Zero is rejected.
    pub fn classify(step: Option<i64>) -> Result<StepSign, String> {
        match step {
            Some(0) => Err("loop step is zero".into()),
            Some(s) if s > 0 => Ok(StepSign::Positive),
            Some(_) => Ok(StepSign::Negative),
            None => Ok(StepSign::Unknown),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageKind {
    DirectScalar,
    StackMemref,
    AllocatableOuter,
    Global,
    Argument,
    Derived,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageDescriptor {
    pub kind: StorageKind,
    /// Lowered value backing the variable; `None` for derived types, whose
    /// members live in `derived_members`.
    pub value: Option<Value>,
}

/// Bookkeeping shared by the lowering rules. Source-side values are keys,
/// lowered values are stored.
#[derive(Debug, Default)]
pub struct LoweringContext {
    pub declare_map: HashMap<Value, StorageDescriptor>,
    pub lower_bounds: HashMap<Value, Vec<Origin>>,
    /// (lowered function, source block ordinal) to lowered block.
    pub block_index_map: HashMap<(OpId, i64), BlockId>,
    pub derived_members: HashMap<(Value, String), Value>,
    pub pending_branches: Vec<OpId>,
}

/// Where a lowered array lives. Allocatables are read out of their outer
/// container at every access.
#[derive(Clone, Debug)]
enum Mem {
    Val(Value),
    Load(Value),
}

#[derive(Clone, Debug)]
enum Place {
    Scalar(Value),
    Buf { mem: Mem, origins: Vec<Origin> },
    Elem { mem: Mem, idx: Vec<Value> },
    Outer { outer: Value, origins: Vec<Origin> },
    Derived { members: Vec<(String, Value)> },
    Shape(Vec<Value>),
    ShapeOf(Mem),
    Null,
}

#[derive(Clone, Debug)]
enum Lowered {
    Val(Value),
    Place(Place),
}

#[derive(Clone, Debug, PartialEq)]
enum ParamKind {
    Value,
    Direct,
    Memref,
    Outer,
}

struct Signature {
    params: Vec<(ParamKind, Type)>,
    results: Vec<Type>,
}

/// Lowers a whole module. Any diagnostic aborts the lowering.
pub fn lower_module(src: &Module) -> Result<Module, LoweringError> {
    lower_module_with_context(src).map(|(m, _)| m)
}

pub fn lower_module_with_context(src: &Module) -> Result<(Module, LoweringContext), LoweringError> {
    let mut l = Lowerer {
        src,
        out: Module::new(),
        ctx: LoweringContext::default(),
        vals: HashMap::new(),
        sigs: HashMap::new(),
        cur: BlockId(0),
        func: None,
    };
    l.cur = l.out.body_block();
    l.compute_signatures()?;
    for op in src.top_level_ops() {
        l.lower_top(op)?;
    }
    l.resolve_branches()?;
    let mut out = l.out;
    insert_alloca_scopes(&mut out);
    Ok((out, l.ctx))
}

/// Lowers a FIR type to its memref-dialect counterpart.
pub fn lower_type(t: &Type) -> Result<Type, String> {
    Ok(match t {
        Type::FirArray { shape, element } => Type::memref(shape.clone(), lower_type(element)?),
        Type::FirRef(inner) | Type::FirHeap(inner) => match &**inner {
            Type::FirArray { .. } => lower_type(inner)?,
            Type::FirHeap(_) => Type::scalar_memref(lower_type(inner)?),
            s if s.is_scalar() => Type::scalar_memref(s.clone()),
            other => return Err(format!("unsupported reference to {other}")),
        },
        Type::FirShape(_) | Type::FirDerived { .. } | Type::Function { .. } => {
            return Err(format!("type {t} has no standard-dialect form"))
        }
        other => other.clone(),
    })
}

fn ones(n: usize) -> Vec<Origin> {
    vec![Origin::Static(1); n]
}

fn dynamic_of(t: &Type) -> Type {
    match t {
        Type::MemRef { shape, element } => Type::memref(vec![Dim::Dynamic; shape.len()], (**element).clone()),
        other => other.clone(),
    }
}

struct Lowerer<'a> {
    src: &'a Module,
    out: Module,
    ctx: LoweringContext,
    vals: HashMap<Value, Lowered>,
    sigs: HashMap<String, Signature>,
    cur: BlockId,
    func: Option<OpId>,
}

type LResult<T> = Result<T, LoweringError>;

impl<'a> Lowerer<'a> {
    fn fail<T>(&self, op: OpId, message: impl Into<String>) -> LResult<T> {
        Err(LoweringError {
            path: self.src.op_path(op),
            message: message.into(),
        })
    }

    fn emit(&mut self, st: OperationState) -> OpId {
        self.out.append(self.cur, st)
    }

    fn emit1(&mut self, st: OperationState) -> Value {
        let op = self.emit(st);
        self.out.result(op, 0)
    }

    fn const_int(&mut self, v: i64, t: Type) -> Value {
        self.emit1(
            OperationState::new("arith.constant")
                .attr("value", Attribute::Int(v, t.clone()))
                .result(t),
        )
    }

    fn const_index(&mut self, v: i64) -> Value {
        self.const_int(v, Type::Index)
    }

    fn binop(&mut self, name: &str, a: Value, b: Value) -> Value {
        let t = self.out.value_type(a).clone();
        self.emit1(OperationState::new(name).operand(a).operand(b).result(t))
    }

    fn src_constant(&self, v: Value) -> Option<i64> {
        let op = self.src.defining_op(v)?;
        let d = self.src.op(op);
        if d.name != "arith.constant" {
            return None;
        }
        match d.attr("value") {
            Some(Attribute::Int(x, _)) => Some(*x),
            _ => None,
        }
    }

    // ---- value lookup ----

    fn lookup(&self, op: OpId, v: Value) -> LResult<Lowered> {
        match self.vals.get(&v) {
            Some(l) => Ok(l.clone()),
            None => self.fail(op, "operand was not lowered (is it defined in a later block?)"),
        }
    }

    fn val(&self, op: OpId, v: Value) -> LResult<Value> {
        match self.lookup(op, v)? {
            Lowered::Val(x) => Ok(x),
            Lowered::Place(p) => self.fail(op, format!("expected a plain value, found storage {p:?}")),
        }
    }

    fn place(&self, op: OpId, v: Value) -> LResult<Place> {
        match self.lookup(op, v)? {
            Lowered::Place(p) => Ok(p),
            Lowered::Val(x) => {
                let t = self.out.value_type(x);
                if t.is_memref() {
                    let rank = t.rank().unwrap_or(0);
                    Ok(Place::Buf {
                        mem: Mem::Val(x),
                        origins: ones(rank),
                    })
                } else {
                    self.fail(op, "expected a memory reference")
                }
            }
        }
    }

    fn set_val(&mut self, v: Value, x: Value) {
        self.vals.insert(v, Lowered::Val(x));
    }

    fn set_place(&mut self, v: Value, p: Place) {
        self.vals.insert(v, Lowered::Place(p));
    }

    /// Materializes the memref a `Mem` refers to at the current point.
    fn resolve(&mut self, mem: &Mem) -> Value {
        match mem {
            Mem::Val(v) => *v,
            Mem::Load(outer) => {
                let inner = self.out.value_type(*outer).element().cloned().expect("outer memref");
                self.emit1(OperationState::new("memref.load").operand(*outer).result(inner))
            }
        }
    }

    // ---- signatures ----

    fn compute_signatures(&mut self) -> LResult<()> {
        for f in self.src.functions() {
            let Some(Attribute::Type(Type::Function { inputs, results })) = self.src.op(f).attr("function_type")
            else {
                return self.fail(f, "missing function_type");
            };
            let entry = self.src.entry_block(f);
            let mut params = Vec::new();
            for (i, t) in inputs.iter().enumerate() {
                let kind = match t {
                    Type::FirRef(inner) if inner.is_scalar() => {
                        let direct = entry.map(|b| self.intent_in_only(self.src.arg(b, i))).unwrap_or(false);
                        if direct {
                            ParamKind::Direct
                        } else {
                            ParamKind::Memref
                        }
                    }
                    Type::FirRef(inner) if matches!(**inner, Type::FirHeap(_)) => ParamKind::Outer,
                    Type::FirRef(_) | Type::FirHeap(_) => ParamKind::Memref,
                    _ => ParamKind::Value,
                };
                let lt = match kind {
                    ParamKind::Direct => t.pointee().cloned().unwrap_or(Type::Index),
                    _ => lower_type(t).map_err(|e| LoweringError {
                        path: self.src.op_path(f),
                        message: e,
                    })?,
                };
                params.push((kind, lt));
            }
            let mut rs = Vec::new();
            for r in results {
                if !r.is_scalar() {
                    return self.fail(f, format!("function result {r} is not a scalar"));
                }
                rs.push(r.clone());
            }
            let name = self.src.symbol_name(f).unwrap_or_default().to_string();
            self.sigs.insert(name, Signature { params, results: rs });
        }
        Ok(())
    }

    /// True if `arg` is only read, through a single intent(in) declare.
    fn intent_in_only(&self, arg: Value) -> bool {
        let uses = self.src.uses(arg);
        let [(decl, 0)] = uses.as_slice() else { return false };
        let d = self.src.op(*decl);
        if d.name != "hlfir.declare" {
            return false;
        }
        let intent_in = d
            .attr("fortran_attrs")
            .and_then(Attribute::as_str)
            .map(|s| s.split(',').any(|a| a.trim() == "intent_in"))
            .unwrap_or(false);
        intent_in
            && self
                .src
                .uses(self.src.result(*decl, 0))
                .iter()
                .all(|(u, _)| self.src.op(*u).name == "fir.load")
    }

    // ---- top level ----

    fn lower_top(&mut self, op: OpId) -> LResult<()> {
        let d = self.src.op(op);
        match d.name.as_str() {
            "func.func" => self.lower_func(op),
            "fir.global" => {
                let t = d.attr("type").and_then(Attribute::as_type).cloned().unwrap_or(Type::Index);
                let mt = match &t {
                    Type::FirArray { .. } => lower_type(&t).map_err(|e| LoweringError {
                        path: self.src.op_path(op),
                        message: e,
                    })?,
                    s if s.is_scalar() => Type::scalar_memref(s.clone()),
                    other => return self.fail(op, format!("unsupported global type {other}")),
                };
                if !mt.has_static_shape() {
                    return self.fail(op, "globals need a static shape");
                }
                let mut st = OperationState::new("memref.global")
                    .attr("sym_name", d.attr("sym_name").cloned().unwrap_or(Attribute::str("")))
                    .attr("type", Attribute::Type(mt.clone()));
                if let Some(items) = d.attr("init").and_then(Attribute::as_array) {
                    let shape: Vec<i64> = mt.shape().unwrap_or_default().iter().filter_map(|d| d.as_static()).collect();
                    let mut ordered = items.to_vec();
                    for (i, a) in items.iter().enumerate() {
                        if let Some(slot) = ordered.get_mut(crate::ir::column_major_to_row_major(&shape, i)) {
                            *slot = a.clone();
                        }
                    }
                    st = st.attr("initial_value", Attribute::Array(ordered));
                }
                self.emit(st);
                Ok(())
            }
            _ => {
                let new = self.clone_generic(op)?;
                let _ = new;
                Ok(())
            }
        }
    }

    fn lower_func(&mut self, f: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(f);
        let name = src.symbol_name(f).unwrap_or_default().to_string();
        let sig = &self.sigs[&name];
        let inputs: Vec<Type> = sig.params.iter().map(|(_, t)| t.clone()).collect();
        let kinds: Vec<ParamKind> = sig.params.iter().map(|(k, _)| k.clone()).collect();
        let results = sig.results.clone();
        let region = self.out.create_region();
        let mut st = OperationState::new("func.func");
        for (k, v) in &d.attributes {
            st = st.attr(k.clone(), v.clone());
        }
        st = st.attr(
            "function_type",
            Attribute::Type(Type::Function {
                inputs: inputs.clone(),
                results,
            }),
        );
        let new_f = self.out.append(self.out.body_block(), st.region(region));
        let saved = (self.cur, self.func);
        self.func = Some(new_f);
        let src_region = d.regions()[0];
        for (ordinal, &sb) in src.region(src_region).blocks().iter().enumerate() {
            let arg_types = if ordinal == 0 {
                inputs.clone()
            } else {
                let mut ts = Vec::new();
                for t in &src.block(sb).args {
                    ts.push(lower_type(t).map_err(|e| LoweringError {
                        path: src.op_path(f),
                        message: e,
                    })?);
                }
                ts
            };
            let nb = self.out.create_block(arg_types);
            self.out.append_block(region, nb);
            self.ctx.block_index_map.insert((new_f, ordinal as i64), nb);
            for i in 0..src.block(sb).args.len() {
                let sv = src.arg(sb, i);
                let nv = self.out.arg(nb, i);
                let kind = if ordinal == 0 { kinds[i].clone() } else { ParamKind::Value };
                match kind {
                    ParamKind::Direct => self.set_place(sv, Place::Scalar(nv)),
                    ParamKind::Outer => {
                        let rank = self.out.value_type(nv).element().and_then(Type::rank).unwrap_or(0);
                        self.set_place(
                            sv,
                            Place::Outer {
                                outer: nv,
                                origins: ones(rank),
                            },
                        )
                    }
                    _ => self.set_val(sv, nv),
                }
            }
            self.cur = nb;
            for &op in src.block(sb).ops() {
                self.lower_op(op)?;
            }
        }
        (self.cur, self.func) = saved;
        Ok(())
    }

    fn resolve_branches(&mut self) -> LResult<()> {
        for op in std::mem::take(&mut self.ctx.pending_branches) {
            let func = self.out.enclosing_func(op).expect("branch inside a function");
            let d = self.out.op(op).clone();
            let target = |key: &str| -> Result<BlockId, LoweringError> {
                let ord = d.attr(key).and_then(Attribute::as_int).unwrap_or(-1);
                self.ctx.block_index_map.get(&(func, ord)).copied().ok_or_else(|| LoweringError {
                    path: self.out.op_path(op),
                    message: format!("branch to block #{ord} which does not exist"),
                })
            };
            let st = if d.name == "tmp.br" {
                OperationState::new("cf.br").operands(d.operands.clone()).successor(target("dest")?)
            } else {
                let mut st = OperationState::new("cf.cond_br")
                    .operands(d.operands.clone())
                    .successor(target("true_dest")?)
                    .successor(target("false_dest")?);
                if let Some(seg) = d.attr("operandSegmentSizes") {
                    st = st.attr("operandSegmentSizes", seg.clone());
                }
                st
            };
            self.out.insert_before(op, st);
            self.out.erase_op(op);
        }
        Ok(())
    }

    // ---- regions ----

    /// Lowers the ops of a single-block source region into the current
    /// block, returning the mapped operands of its `fir.result`.
    fn lower_body(&mut self, region: RegionId) -> LResult<Vec<Value>> {
        let src = self.src;
        let Some(b) = src.region(region).entry() else { return Ok(Vec::new()) };
        let mut yielded = Vec::new();
        for &op in src.block(b).ops() {
            if src.op(op).name == "fir.result" {
                for v in &src.op(op).operands {
                    yielded.push(self.val(op, *v)?);
                }
            } else {
                self.lower_op(op)?;
            }
        }
        Ok(yielded)
    }

    fn in_block<T>(&mut self, b: BlockId, f: impl FnOnce(&mut Self) -> LResult<T>) -> LResult<T> {
        let saved = self.cur;
        self.cur = b;
        let r = f(self);
        self.cur = saved;
        r
    }

    // ---- ops ----

    fn lower_op(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let name = d.name.as_str();
        match name {
            "cf.br" | "cf.cond_br" => self.lower_branch(op),
            "func.call" => self.lower_call(op),
            "fir.if" => self.lower_if(op),
            "fir.do_loop" => self.lower_do_loop(op),
            "fir.iterate_while" => self.lower_iterate_while(op),
            "fir.alloca" => self.lower_alloca(op),
            "fir.allocmem" => {
                let t = d.attr("in_type").and_then(Attribute::as_type).cloned().unwrap_or(Type::Index);
                let mt = match &t {
                    Type::FirArray { .. } => self.lowered_type(op, &t)?,
                    s if s.is_scalar() => Type::scalar_memref(s.clone()),
                    other => return self.fail(op, format!("cannot heap-allocate {other}")),
                };
                let operands = d.operands.iter().map(|v| self.val(op, *v)).collect::<LResult<Vec<_>>>()?;
                let mut st = OperationState::new("memref.alloc").operands(operands).result(mt.clone());
                if let Some(u) = d.attr("uniq_name") {
                    st = st.attr("uniq_name", u.clone());
                }
                let v = self.emit1(st);
                let rank = mt.rank().unwrap_or(0);
                self.set_place(
                    src.result(op, 0),
                    Place::Buf {
                        mem: Mem::Val(v),
                        origins: ones(rank),
                    },
                );
                Ok(())
            }
            "fir.freemem" => {
                let m = match self.place(op, d.operands[0])? {
                    Place::Buf { mem, .. } => self.resolve(&mem),
                    _ => return self.fail(op, "freemem of something that is not an array"),
                };
                self.emit(OperationState::new("memref.dealloc").operand(m));
                Ok(())
            }
            "fir.zero_bits" => {
                self.set_place(src.result(op, 0), Place::Null);
                Ok(())
            }
            "fir.load" => self.lower_load(op),
            "fir.store" | "hlfir.assign" => self.lower_store(op),
            "fir.shape" => {
                let vs = d.operands.iter().map(|v| self.val(op, *v)).collect::<LResult<Vec<_>>>()?;
                self.set_place(src.result(op, 0), Place::Shape(vs));
                Ok(())
            }
            "fir.convert" => {
                let t = &d.result_types[0];
                if t.is_scalar() {
                    let v = self.val(op, d.operands[0])?;
                    let from = self.out.value_type(v).clone();
                    let r = if from == *t {
                        v
                    } else if from.is_index() || t.is_index() {
                        self.emit1(OperationState::new("arith.index_cast").operand(v).result(t.clone()))
                    } else {
                        return self.fail(op, format!("unsupported conversion {from} -> {t}"));
                    };
                    self.set_val(src.result(op, 0), r);
                } else {
                    let l = self.lookup(op, d.operands[0])?;
                    self.vals.insert(src.result(op, 0), l);
                }
                Ok(())
            }
            "fir.address_of" => {
                let sym = d.attr("symbol").cloned().unwrap_or(Attribute::SymbolRef(String::new()));
                let t = self.lowered_type(op, &d.result_types[0])?;
                let v = self.emit1(OperationState::new("memref.get_global").attr("name", sym).result(t.clone()));
                self.set_place(
                    src.result(op, 0),
                    Place::Buf {
                        mem: Mem::Val(v),
                        origins: ones(t.rank().unwrap_or(0)),
                    },
                );
                Ok(())
            }
            "hlfir.declare" => self.lower_declare(op),
            "hlfir.designate" => self.lower_designate(op),
            "hlfir.sum" | "hlfir.maxval" | "hlfir.product" => self.lower_reduction(op),
            "hlfir.dot_product" => self.lower_dot(op),
            "hlfir.matmul" | "hlfir.transpose" => self.lower_matrix(op),
            "hlfir.shape_of" => {
                let mem = match self.place(op, d.operands[0])? {
                    Place::Buf { mem, .. } => mem,
                    _ => return self.fail(op, "shape_of needs an array"),
                };
                self.set_place(src.result(op, 0), Place::ShapeOf(mem));
                Ok(())
            }
            "hlfir.get_extent" => {
                let dim = d.attr("dim").and_then(Attribute::as_int).unwrap_or(0);
                let r = match self.place(op, d.operands[0])? {
                    Place::Shape(vs) => vs[dim as usize],
                    Place::ShapeOf(mem) => {
                        let m = self.resolve(&mem);
                        let c = self.const_index(dim);
                        self.emit1(OperationState::new("memref.dim").operand(m).operand(c).result(Type::Index))
                    }
                    _ => return self.fail(op, "get_extent needs a shape"),
                };
                self.set_val(src.result(op, 0), r);
                Ok(())
            }
            "acc.create" | "acc.delete" | "acc.copyout" => {
                let v = match self.lookup(op, d.operands[0])? {
                    Lowered::Val(v) => v,
                    Lowered::Place(Place::Buf { mem, .. }) => self.resolve(&mem),
                    Lowered::Place(Place::Scalar(v)) => v,
                    Lowered::Place(p) => return self.fail(op, format!("unsupported data clause operand {p:?}")),
                };
                self.emit(OperationState::new(name).operand(v));
                Ok(())
            }
            n if n.starts_with("fir.") || n.starts_with("hlfir.") || n.starts_with("tmp.") => {
                self.fail(op, format!("no lowering for '{n}'"))
            }
            _ => self.clone_generic(op).map(|_| ()),
        }
    }

    fn lowered_type(&self, op: OpId, t: &Type) -> LResult<Type> {
        lower_type(t).map_err(|e| LoweringError {
            path: self.src.op_path(op),
            message: e,
        })
    }

    /// Copies a standard-dialect op, remapping operands and lowering nested
    /// regions.
    fn clone_generic(&mut self, op: OpId) -> LResult<OpId> {
        let src = self.src;
        let d = src.op(op);
        if !d.successors.is_empty() {
            return self.fail(op, "unexpected successors");
        }
        let mut st = OperationState::new(d.name.clone());
        for v in &d.operands {
            let x = match self.lookup(op, *v)? {
                Lowered::Val(x) => x,
                Lowered::Place(Place::Buf { mem, .. }) => self.resolve(&mem),
                Lowered::Place(Place::Scalar(x)) => x,
                Lowered::Place(p) => return self.fail(op, format!("cannot pass {p:?} to '{}'", d.name)),
            };
            st = st.operand(x);
        }
        for t in &d.result_types {
            st = st.result(self.lowered_type(op, t)?);
        }
        for (k, v) in &d.attributes {
            st = st.attr(k.clone(), v.clone());
        }
        let mut regions = Vec::new();
        for &r in d.regions() {
            let nr = self.out.create_region();
            for &sb in src.region(r).blocks() {
                let mut ts = Vec::new();
                for t in &src.block(sb).args {
                    ts.push(self.lowered_type(op, t)?);
                }
                let nb = self.out.create_block(ts);
                self.out.append_block(nr, nb);
                for i in 0..src.block(sb).args.len() {
                    let nv = self.out.arg(nb, i);
                    self.set_val(src.arg(sb, i), nv);
                }
                self.in_block(nb, |l| {
                    for &o in src.block(sb).ops() {
                        l.lower_op(o)?;
                    }
                    Ok(())
                })?;
            }
            regions.push(nr);
        }
        for r in regions {
            st = st.region(r);
        }
        let new = self.emit(st);
        for i in 0..d.result_types.len() {
            let nv = self.out.result(new, i);
            self.set_val(src.result(op, i), nv);
        }
        Ok(new)
    }

    fn lower_branch(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let ordinal = |b: BlockId| {
            let r = src.block(b).parent_region().expect("successor in a region");
            src.region(r).blocks().iter().position(|x| *x == b).unwrap_or(0) as i64
        };
        let operands = d.operands.iter().map(|v| self.val(op, *v)).collect::<LResult<Vec<_>>>()?;
        let st = if d.name == "cf.br" {
            OperationState::new("tmp.br")
                .operands(operands)
                .attr("dest", Attribute::index(ordinal(d.successors[0])))
        } else {
            let mut st = OperationState::new("tmp.cond_br")
                .operands(operands)
                .attr("true_dest", Attribute::index(ordinal(d.successors[0])))
                .attr("false_dest", Attribute::index(ordinal(d.successors[1])));
            if let Some(seg) = d.attr("operandSegmentSizes") {
                st = st.attr("operandSegmentSizes", seg.clone());
            }
            st
        };
        let new = self.emit(st);
        self.ctx.pending_branches.push(new);
        Ok(())
    }

    fn lower_call(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let callee = d.attr("callee").and_then(Attribute::as_symbol).unwrap_or_default().to_string();
        let Some(sig) = self.sigs.get(&callee) else {
            return self.fail(op, format!("call to unknown function @{callee}"));
        };
        let params: Vec<(ParamKind, Type)> = sig.params.clone();
        let results = sig.results.clone();
        let mut args = Vec::new();
        for (v, (kind, pt)) in d.operands.iter().zip(&params) {
            let l = self.lookup(op, *v)?;
            let a = match (kind, l) {
                (ParamKind::Value, Lowered::Val(x)) => x,
                (ParamKind::Direct, Lowered::Place(Place::Scalar(x))) => x,
                (ParamKind::Direct, Lowered::Place(Place::Buf { mem, .. })) => {
                    let m = self.resolve(&mem);
                    self.emit1(OperationState::new("memref.load").operand(m).result(pt.clone()))
                }
                (ParamKind::Direct, Lowered::Val(x)) if self.out.value_type(x).rank() == Some(0) => {
                    self.emit1(OperationState::new("memref.load").operand(x).result(pt.clone()))
                }
                (ParamKind::Direct, Lowered::Place(Place::Elem { mem, idx })) => {
                    let m = self.resolve(&mem);
                    self.emit1(OperationState::new("memref.load").operand(m).operands(idx).result(pt.clone()))
                }
                (ParamKind::Memref, Lowered::Place(Place::Buf { mem, .. })) => {
                    let m = self.resolve(&mem);
                    self.cast_to(m, pt)
                }
                (ParamKind::Memref, Lowered::Val(x)) if self.out.value_type(x).is_memref() => self.cast_to(x, pt),
                (ParamKind::Memref, Lowered::Place(Place::Scalar(x))) => {
                    let slot = self.emit1(OperationState::new("memref.alloca").result(pt.clone()));
                    self.emit(OperationState::new("memref.store").operand(x).operand(slot));
                    slot
                }
                (ParamKind::Outer, Lowered::Place(Place::Outer { outer, .. })) => outer,
                (k, l) => return self.fail(op, format!("cannot pass {l:?} as a {k:?} argument")),
            };
            args.push(a);
        }
        let new = self.emit(
            OperationState::new("func.call")
                .operands(args)
                .results(results.clone())
                .attr("callee", Attribute::SymbolRef(callee)),
        );
        for i in 0..results.len() {
            let nv = self.out.result(new, i);
            self.set_val(src.result(op, i), nv);
        }
        Ok(())
    }

    fn cast_to(&mut self, v: Value, t: &Type) -> Value {
        let from = self.out.value_type(v).clone();
        if from == *t {
            v
        } else {
            self.emit1(OperationState::new("memref.cast").operand(v).result(t.clone()))
        }
    }

    fn lower_if(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        if !d.result_types.is_empty() {
            return self.fail(op, "fir.if with results is not supported");
        }
        let c = self.val(op, d.operands[0])?;
        let mut regions = Vec::new();
        for &r in d.regions() {
            let (nr, nb) = self.out.region_with_block(vec![]);
            self.in_block(nb, |l| {
                l.lower_body(r)?;
                l.emit(OperationState::new("scf.yield"));
                Ok(())
            })?;
            regions.push(nr);
        }
        self.emit(OperationState::new("scf.if").operand(c).region(regions[0]).region(regions[1]));
        Ok(())
    }

    /// Trip count `max(0, (hi - lo + s) / s)` for a positive `s`.
    fn trip_count(&mut self, lo: Value, hi: Value, s: Value, consts: Option<(i64, i64, i64)>) -> Value {
        if let Some((l, u, st)) = consts {
            return self.const_index(fortran_trip_count(l, u, st));
        }
        let span = self.binop("arith.subi", hi, lo);
        let span = self.binop("arith.addi", span, s);
        let q = self.binop("arith.divsi", span, s);
        let zero = self.const_index(0);
        self.binop("arith.maxsi", q, zero)
    }

    /// Emits one normalized scf.for. `sign` must be known.
    fn emit_counted_loop(&mut self, op: OpId, sign: StepSign, lb: Value, ub: Value, step: Value) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let consts = match (self.src_constant(d.operands[0]), self.src_constant(d.operands[1]), self.src_constant(d.operands[2])) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        let step_const = self.src_constant(d.operands[2]);
        let (n, stride) = match sign {
            StepSign::Positive => (self.trip_count(lb, ub, step, consts.map(|(a, b, c)| (a, b, c))), step),
            _ => {
                let abs = match step_const {
                    Some(s) => self.const_index(-s),
                    None => {
                        let zero = self.const_index(0);
                        self.binop("arith.subi", zero, step)
                    }
                };
                (self.trip_count(ub, lb, abs, consts.map(|(a, b, c)| (b, a, -c))), abs)
            }
        };
        let zero = self.const_index(0);
        let one = self.const_index(1);
        let (region, body) = self.out.region_with_block(vec![Type::Index]);
        let t = self.out.arg(body, 0);
        let unit_step = matches!(step_const, Some(1) | Some(-1));
        self.in_block(body, |l| {
            let slot = l.emit1(OperationState::new("memref.alloca").result(Type::scalar_memref(Type::Index)));
            let scaled = if unit_step { t } else { l.binop("arith.muli", t, stride) };
            let idx = match sign {
                StepSign::Positive => l.binop("arith.addi", lb, scaled),
                _ => l.binop("arith.subi", lb, scaled),
            };
            l.emit(OperationState::new("memref.store").operand(idx).operand(slot));
            let sb = src.region(d.regions()[0]).entry().expect("loop body");
            l.set_val(src.arg(sb, 0), idx);
            l.lower_body(d.regions()[0])?;
            l.emit(OperationState::new("scf.yield"));
            Ok(())
        })?;
        self.emit(
            OperationState::new("scf.for")
                .operand(zero)
                .operand(n)
                .operand(one)
                .region(region),
        );
        Ok(())
    }

    fn lower_do_loop(&mut self, op: OpId) -> LResult<()> {
        let d = self.src.op(op);
        let sign = StepSign::classify(self.src_constant(d.operands[2])).or_else(|e| self.fail(op, e))?;
        let lb = self.val(op, d.operands[0])?;
        let ub = self.val(op, d.operands[1])?;
        let step = self.val(op, d.operands[2])?;
        match sign {
            StepSign::Unknown => {
                let zero = self.const_index(0);
                let c = self.emit1(
                    OperationState::new("arith.cmpi")
                        .operand(step)
                        .operand(zero)
                        .attr("predicate", Attribute::str("sgt"))
                        .result(Type::i1()),
                );
                let mut regions = Vec::new();
                for s in [StepSign::Positive, StepSign::Negative] {
                    let (nr, nb) = self.out.region_with_block(vec![]);
                    self.in_block(nb, |l| {
                        l.emit_counted_loop(op, s, lb, ub, step)?;
                        l.emit(OperationState::new("scf.yield"));
                        Ok(())
                    })?;
                    regions.push(nr);
                }
                self.emit(OperationState::new("scf.if").operand(c).region(regions[0]).region(regions[1]));
                Ok(())
            }
            s => self.emit_counted_loop(op, s, lb, ub, step),
        }
    }

    fn lower_iterate_while(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let sign = StepSign::classify(self.src_constant(d.operands[2])).or_else(|e| self.fail(op, e))?;
        if sign == StepSign::Unknown {
            return self.fail(op, "iterate_while needs a constant step");
        }
        let lb = self.val(op, d.operands[0])?;
        let ub = self.val(op, d.operands[1])?;
        let step = self.val(op, d.operands[2])?;
        let flag = self.val(op, d.operands[3])?;
        let carried = vec![Type::Index, Type::i1()];
        let (before, bb) = self.out.region_with_block(carried.clone());
        let (iv, f) = (self.out.arg(bb, 0), self.out.arg(bb, 1));
        self.in_block(bb, |l| {
            let pred = if sign == StepSign::Positive { "sle" } else { "sge" };
            let in_range = l.emit1(
                OperationState::new("arith.cmpi")
                    .operand(iv)
                    .operand(ub)
                    .attr("predicate", Attribute::str(pred))
                    .result(Type::i1()),
            );
            let go = l.binop("arith.andi", f, in_range);
            l.emit(OperationState::new("scf.condition").operand(go).operand(iv).operand(f));
            Ok(())
        })?;
        let (after, ab) = self.out.region_with_block(carried.clone());
        let (iv, f) = (self.out.arg(ab, 0), self.out.arg(ab, 1));
        self.in_block(ab, |l| {
            let slot = l.emit1(OperationState::new("memref.alloca").result(Type::scalar_memref(Type::Index)));
            l.emit(OperationState::new("memref.store").operand(iv).operand(slot));
            let sb = src.region(d.regions()[0]).entry().expect("loop body");
            l.set_val(src.arg(sb, 0), iv);
            l.set_val(src.arg(sb, 1), f);
            let ys = l.lower_body(d.regions()[0])?;
            let next = l.binop("arith.addi", iv, step);
            l.emit(OperationState::new("scf.yield").operand(next).operands(ys));
            Ok(())
        })?;
        let w = self.emit(
            OperationState::new("scf.while")
                .operand(lb)
                .operand(flag)
                .results(carried)
                .region(before)
                .region(after),
        );
        let r = self.out.result(w, 1);
        self.set_val(src.result(op, 0), r);
        Ok(())
    }

    fn lower_alloca(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let t = d.attr("in_type").and_then(Attribute::as_type).cloned().unwrap_or(Type::Index);
        let label = d.attr("uniq_name").and_then(Attribute::as_str).map(str::to_string);
        let alloca = |l: &mut Self, mt: Type, operands: Vec<Value>, label: Option<String>| {
            let mut st = OperationState::new("memref.alloca").operands(operands).result(mt);
            if let Some(u) = label {
                st = st.attr("uniq_name", Attribute::str(u));
            }
            l.emit1(st)
        };
        let operands = d.operands.iter().map(|v| self.val(op, *v)).collect::<LResult<Vec<_>>>()?;
        let place = match &t {
            s if s.is_scalar() => Place::Buf {
                mem: Mem::Val(alloca(self, Type::scalar_memref(s.clone()), vec![], label)),
                origins: vec![],
            },
            Type::FirArray { shape, .. } => {
                let mt = self.lowered_type(op, &t)?;
                Place::Buf {
                    mem: Mem::Val(alloca(self, mt, operands, label)),
                    origins: ones(shape.len()),
                }
            }
            Type::FirHeap(inner) => {
                let inner_t = match &**inner {
                    a @ Type::FirArray { .. } => dynamic_of(&self.lowered_type(op, a)?),
                    s if s.is_scalar() => Type::scalar_memref(s.clone()),
                    other => return self.fail(op, format!("unsupported allocatable {other}")),
                };
                let rank = inner_t.rank().unwrap_or(0);
                Place::Outer {
                    outer: alloca(self, Type::scalar_memref(inner_t), vec![], label),
                    origins: ones(rank),
                }
            }
            Type::FirDerived { members, .. } => {
                let mut out = Vec::new();
                for (mname, mt) in members {
                    let lt = match mt {
                        s if s.is_scalar() => Type::scalar_memref(s.clone()),
                        a @ Type::FirArray { .. } if a.has_static_shape() => self.lowered_type(op, a)?,
                        other => return self.fail(op, format!("unsupported component type {other}")),
                    };
                    let member_label = label.as_ref().map(|l| format!("{l}%{mname}"));
                    let v = alloca(self, lt, vec![], member_label);
                    self.ctx.derived_members.insert((src.result(op, 0), mname.clone()), v);
                    out.push((mname.clone(), v));
                }
                Place::Derived { members: out }
            }
            other => return self.fail(op, format!("cannot allocate {other}")),
        };
        self.set_place(src.result(op, 0), place);
        Ok(())
    }

    fn lower_declare(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let base = self.lookup(op, d.operands[0])?;
        let mut rest = &d.operands[1..];
        if rest.first().map(|v| matches!(src.value_type(*v), Type::FirShape(_))).unwrap_or(false) {
            rest = &rest[1..];
        }
        let origins = |l: &Self, rank: usize| -> LResult<Option<Vec<Origin>>> {
            if let Some(lbs) = d.attr("lbs").and_then(Attribute::as_dense) {
                return Ok(Some(lbs.iter().map(|o| Origin::Static(*o)).collect()));
            }
            if !rest.is_empty() {
                let vs = rest.iter().map(|v| l.val(op, *v).map(Origin::Dynamic)).collect::<LResult<Vec<_>>>()?;
                return Ok(Some(vs));
            }
            Ok(if rank == 0 { None } else { Some(ones(rank)) })
        };
        let from_arg = src.defining_op(d.operands[0]).is_none();
        let (place, desc) = match base {
            Lowered::Place(Place::Scalar(v)) => (
                Place::Scalar(v),
                StorageDescriptor {
                    kind: StorageKind::DirectScalar,
                    value: Some(v),
                },
            ),
            Lowered::Place(Place::Outer { outer, origins: o }) => {
                if d.attr("lbs").is_some() || !rest.is_empty() {
                    return self.fail(op, "lower bounds on allocatables are not supported");
                }
                (
                    Place::Outer { outer, origins: o },
                    StorageDescriptor {
                        kind: StorageKind::AllocatableOuter,
                        value: Some(outer),
                    },
                )
            }
            Lowered::Place(Place::Derived { members }) => (
                Place::Derived { members },
                StorageDescriptor {
                    kind: StorageKind::Derived,
                    value: None,
                },
            ),
            other => {
                let p = match other {
                    Lowered::Place(p) => p,
                    Lowered::Val(v) => Place::Buf {
                        mem: Mem::Val(v),
                        origins: vec![],
                    },
                };
                let Place::Buf { mem, .. } = p else {
                    return self.fail(op, "declare of unsupported storage");
                };
                let value = match &mem {
                    Mem::Val(v) => *v,
                    Mem::Load(o) => *o,
                };
                let rank = match &mem {
                    Mem::Val(v) => self.out.value_type(*v).rank().unwrap_or(0),
                    Mem::Load(o) => self.out.value_type(*o).element().and_then(Type::rank).unwrap_or(0),
                };
                let os = origins(self, rank)?.unwrap_or_default();
                if os.len() != rank {
                    return self.fail(op, "lower bounds do not match the array rank");
                }
                let global = src
                    .defining_op(d.operands[0])
                    .map(|o| src.op(o).name == "fir.address_of")
                    .unwrap_or(false);
                let kind = if from_arg {
                    StorageKind::Argument
                } else if global {
                    StorageKind::Global
                } else {
                    StorageKind::StackMemref
                };
                self.ctx.lower_bounds.insert(src.result(op, 0), os.clone());
                (
                    Place::Buf { mem, origins: os },
                    StorageDescriptor {
                        kind,
                        value: Some(value),
                    },
                )
            }
        };
        self.ctx.declare_map.insert(src.result(op, 0), desc);
        self.set_place(src.result(op, 0), place);
        Ok(())
    }

    fn subtract_origin(&mut self, sub: Value, origin: Origin) -> Value {
        match origin {
            Origin::Static(0) => sub,
            Origin::Static(o) => {
                let c = self.const_index(o);
                self.binop("arith.subi", sub, c)
            }
            Origin::Dynamic(v) => self.binop("arith.subi", sub, v),
        }
    }

    fn lower_designate(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let mut base = self.place(op, d.operands[0])?;
        let subs = d.operands[1..].iter().map(|v| self.val(op, *v)).collect::<LResult<Vec<_>>>()?;
        if let Some(c) = d.attr("component").and_then(Attribute::as_str) {
            let Place::Derived { members } = &base else {
                return self.fail(op, "component access on a non-derived value");
            };
            let Some((_, v)) = members.iter().find(|(n, _)| n == c) else {
                return self.fail(op, format!("no component named '{c}'"));
            };
            let rank = self.out.value_type(*v).rank().unwrap_or(0);
            base = Place::Buf {
                mem: Mem::Val(*v),
                origins: ones(rank),
            };
            if subs.is_empty() {
                self.set_place(src.result(op, 0), base);
                return Ok(());
            }
        }
        let Place::Buf { mem, origins } = base else {
            return self.fail(op, "designate of something that is not an array");
        };
        if d.attr("triplets").is_some() {
            let rank = origins.len();
            if subs.len() != 3 * rank {
                return self.fail(op, "section needs three operands per dimension");
            }
            let m = self.resolve(&mem);
            let (mut offs, mut sizes, mut strides) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..rank {
                let (lb, ub, st) = (subs[3 * k], subs[3 * k + 1], subs[3 * k + 2]);
                let srcs = &d.operands[1 + 3 * k..4 + 3 * k];
                let consts = match (self.src_constant(srcs[0]), self.src_constant(srcs[1]), self.src_constant(srcs[2])) {
                    (Some(a), Some(b), Some(c)) if c != 0 => Some((a, b, c)),
                    _ => None,
                };
                if self.src_constant(srcs[2]).map(|s| s <= 0).unwrap_or(true) {
                    return self.fail(op, "sections need a positive constant stride");
                }
                offs.push(self.subtract_origin(lb, origins[k]));
                sizes.push(self.trip_count(lb, ub, st, consts));
                strides.push(st);
            }
            let mt = dynamic_of(self.out.value_type(m));
            let v = self.emit1(
                OperationState::new("memref.subview")
                    .operand(m)
                    .operands(offs)
                    .operands(sizes)
                    .operands(strides)
                    .result(mt),
            );
            self.set_place(
                src.result(op, 0),
                Place::Buf {
                    mem: Mem::Val(v),
                    origins: ones(rank),
                },
            );
            return Ok(());
        }
        if subs.len() != origins.len() {
            return self.fail(op, format!("{} subscripts for an array of rank {}", subs.len(), origins.len()));
        }
        let idx: Vec<Value> = subs.iter().zip(&origins).map(|(s, o)| self.subtract_origin(*s, *o)).collect();
        self.set_place(src.result(op, 0), Place::Elem { mem, idx });
        Ok(())
    }

    fn lower_load(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let t = d.result_types[0].clone();
        let r = match self.place(op, d.operands[0])? {
            Place::Scalar(v) => Lowered::Val(v),
            Place::Buf { mem, origins } if origins.is_empty() => {
                let m = self.resolve(&mem);
                let et = self.out.value_type(m).element().cloned().unwrap_or(t);
                Lowered::Val(self.emit1(OperationState::new("memref.load").operand(m).result(et)))
            }
            Place::Elem { mem, idx } => {
                let m = self.resolve(&mem);
                Lowered::Val(self.emit1(OperationState::new("memref.load").operand(m).operands(idx).result(t)))
            }
            Place::Outer { outer, origins } => Lowered::Place(Place::Buf {
                mem: Mem::Load(outer),
                origins,
            }),
            p => return self.fail(op, format!("cannot load from {p:?}")),
        };
        self.vals.insert(src.result(op, 0), r);
        Ok(())
    }

    fn lower_store(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let value = self.lookup(op, d.operands[0])?;
        let target = self.place(op, d.operands[1])?;
        match target {
            Place::Outer { outer, .. } => {
                let inner_t = self.out.value_type(outer).element().cloned().expect("outer memref");
                let v = match value {
                    Lowered::Place(Place::Buf { mem, .. }) => {
                        let m = self.resolve(&mem);
                        self.cast_to(m, &inner_t)
                    }
                    Lowered::Place(Place::Null) => {
                        self.emit1(OperationState::new("ub.poison").result(inner_t.clone()))
                    }
                    other => return self.fail(op, format!("cannot store {other:?} into an allocatable")),
                };
                self.emit(OperationState::new("memref.store").operand(v).operand(outer));
            }
            Place::Buf { mem, origins } if origins.is_empty() => {
                let v = self.scalar_operand(op, value)?;
                let m = self.resolve(&mem);
                self.emit(OperationState::new("memref.store").operand(v).operand(m));
            }
            Place::Elem { mem, idx } => {
                let v = self.scalar_operand(op, value)?;
                let m = self.resolve(&mem);
                self.emit(OperationState::new("memref.store").operand(v).operand(m).operands(idx));
            }
            Place::Scalar(_) => return self.fail(op, "assignment to an intent(in) argument"),
            p => return self.fail(op, format!("unsupported assignment target {p:?}")),
        }
        Ok(())
    }

    fn scalar_operand(&self, op: OpId, l: Lowered) -> LResult<Value> {
        match l {
            Lowered::Val(v) => Ok(v),
            Lowered::Place(Place::Scalar(v)) => Ok(v),
            Lowered::Place(p) => self.fail(op, format!("array assignment from {p:?} is not supported")),
        }
    }

    fn array_operand(&mut self, op: OpId, v: Value) -> LResult<Value> {
        match self.place(op, v)? {
            Place::Buf { mem, .. } => Ok(self.resolve(&mem)),
            p => self.fail(op, format!("expected an array, found {p:?}")),
        }
    }

    fn lower_reduction(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        if d.operands.len() > 1 {
            return self.fail(op, "masked reductions are not supported");
        }
        if d.attr("dim").is_some() {
            return self.fail(op, "partial reductions along one dimension are not supported");
        }
        let kind = &d.name["hlfir.".len()..];
        let t = d.result_types[0].clone();
        let (Some(fold), Some(init)) = (reduction_op(kind, &t), reduction_init(kind, &t)) else {
            return self.fail(op, format!("{kind} over {t} is not supported"));
        };
        let input = self.array_operand(op, d.operands[0])?;
        let rank = self.out.value_type(input).rank().unwrap_or(0);
        let out = self.emit1(OperationState::new("memref.alloca").result(Type::scalar_memref(t.clone())));
        let c = self.constant_of(&init, &t);
        self.emit(OperationState::new("memref.store").operand(c).operand(out));
        let (region, body) = self.out.region_with_block(vec![t.clone(), t.clone()]);
        let (x, acc) = (self.out.arg(body, 0), self.out.arg(body, 1));
        self.in_block(body, |l| {
            let r = l.binop(fold, x, acc);
            l.emit(OperationState::new("linalg.yield").operand(r));
            Ok(())
        })?;
        self.emit(
            OperationState::new("linalg.reduce")
                .operand(input)
                .operand(out)
                .attr("dimensions", Attribute::DenseIndexArray((0..rank as i64).collect()))
                .region(region),
        );
        let r = self.emit1(OperationState::new("memref.load").operand(out).result(t));
        self.set_val(src.result(op, 0), r);
        Ok(())
    }

    fn constant_of(&mut self, v: &RuntimeValue, t: &Type) -> Value {
        let attr = match v {
            RuntimeValue::Float { value, .. } => Attribute::Float(*value, t.clone()),
            other => Attribute::Int(other.as_int().unwrap_or(0), t.clone()),
        };
        self.emit1(OperationState::new("arith.constant").attr("value", attr).result(t.clone()))
    }

    fn lower_dot(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let t = d.result_types[0].clone();
        let a = self.array_operand(op, d.operands[0])?;
        let b = self.array_operand(op, d.operands[1])?;
        let out = self.emit1(OperationState::new("memref.alloca").result(Type::scalar_memref(t.clone())));
        let z = self.constant_of(&RuntimeValue::zero(&t), &t);
        self.emit(OperationState::new("memref.store").operand(z).operand(out));
        self.emit(OperationState::new("linalg.dot").operand(a).operand(b).operand(out));
        let r = self.emit1(OperationState::new("memref.load").operand(out).result(t));
        self.set_val(src.result(op, 0), r);
        Ok(())
    }

    fn lower_matrix(&mut self, op: OpId) -> LResult<()> {
        let src = self.src;
        let d = src.op(op);
        let rt = self.lowered_type(op, &d.result_types[0])?;
        let elem = rt.element().cloned().unwrap_or(Type::f64());
        let a = self.array_operand(op, d.operands[0])?;
        let dim = |l: &mut Self, m: Value, k: i64| {
            let c = l.const_index(k);
            l.emit1(OperationState::new("memref.dim").operand(m).operand(c).result(Type::Index))
        };
        let (rows_of, cols_of) = if d.name == "hlfir.matmul" {
            let b = self.array_operand(op, d.operands[1])?;
            (a, Some(b))
        } else {
            (a, None)
        };
        // result extents, dynamic where the result type is
        let shape = rt.shape().unwrap_or(&[]).to_vec();
        let mut dynamic = Vec::new();
        for (k, s) in shape.iter().enumerate() {
            if s.as_static().is_none() {
                let v = match (d.name.as_str(), k, cols_of) {
                    ("hlfir.matmul", 0, _) => dim(self, rows_of, 0),
                    ("hlfir.matmul", _, Some(b)) => dim(self, b, 1),
                    (_, 0, _) => dim(self, a, 1),
                    _ => dim(self, a, 0),
                };
                dynamic.push(v);
            }
        }
        let mut st = OperationState::new("memref.alloc").operands(dynamic).result(rt.clone());
        if let Some(u) = d.attr("uniq_name") {
            st = st.attr("uniq_name", u.clone());
        }
        let out = self.emit1(st);
        if let Some(b) = cols_of {
            let z = self.constant_of(&RuntimeValue::zero(&elem), &elem);
            self.emit(OperationState::new("linalg.fill").operand(z).operand(out));
            self.emit(OperationState::new("linalg.matmul").operand(a).operand(b).operand(out));
        } else {
            self.emit(
                OperationState::new("linalg.transpose")
                    .operand(a)
                    .operand(out)
                    .attr("permutation", Attribute::DenseIndexArray(vec![1, 0])),
            );
        }
        self.set_place(
            src.result(op, 0),
            Place::Buf {
                mem: Mem::Val(out),
                origins: ones(2),
            },
        );
        Ok(())
    }
}

/// Names of dialects that must not survive lowering.
pub const SOURCE_DIALECTS: &[&str] = &["fir", "hlfir", "tmp"];

/// Ops of a lowered module that still belong to a source dialect.
pub fn residual_source_ops(m: &Module) -> Vec<String> {
    let mut out = BTreeMap::new();
    m.walk(|op| {
        let d = m.op(op).dialect().to_string();
        if SOURCE_DIALECTS.contains(&d.as_str()) {
            *out.entry(m.op(op).name.clone()).or_insert(0) += 1;
        }
    });
    out.into_keys().collect()
}

