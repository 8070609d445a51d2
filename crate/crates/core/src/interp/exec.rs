use std::collections::{BTreeSet, HashMap};

use super::arith::{self, ArithError};
use super::memory::{Memory, StorageClass};
use super::value::{BufferView, RuntimeValue};
use super::{RunOptions, RuntimeError, RuntimeErrorKind, TraceRecord};
use crate::dialect::cond_br_segments;
use crate::ir::{Attribute, BlockId, Dim, Module, OpId, RegionId, Type, Value};

type Env = HashMap<Value, RuntimeValue>;
type R<T> = Result<T, RuntimeError>;

enum Control {
    Next,
    Branch(BlockId, Vec<RuntimeValue>),
    Yield(Vec<RuntimeValue>),
    Return(Vec<RuntimeValue>),
}

const MAX_CALL_DEPTH: usize = 128;
const MAX_ACCESS_RECORDS: usize = 1_000_000;

pub(super) struct Machine<'m> {
    m: &'m Module,
    pub(super) mem: Memory,
    pub(super) trace: TraceRecord,
    opts: RunOptions,
    steps: u64,
    scopes: Vec<(usize, Vec<usize>)>,
    next_scope: usize,
    globals: HashMap<String, usize>,
    depth: usize,
    counters: HashMap<String, u64>,
}

fn err(m: &Module, op: OpId, kind: RuntimeErrorKind) -> RuntimeError {
    RuntimeError {
        path: m.op_path(op),
        kind,
    }
}

impl<'m> Machine<'m> {
    pub(super) fn new(m: &'m Module, opts: RunOptions) -> R<Self> {
        let mut mc = Machine {
            m,
            mem: Memory::default(),
            trace: TraceRecord::default(),
            opts,
            steps: 0,
            scopes: Vec::new(),
            next_scope: 0,
            globals: HashMap::new(),
            depth: 0,
            counters: HashMap::new(),
        };
        mc.init_globals()?;
        Ok(mc)
    }

    fn init_globals(&mut self) -> R<()> {
        for op in self.m.top_level_ops() {
            let data = self.m.op(op);
            let init_key = match data.name.as_str() {
                "memref.global" => "initial_value",
                "fir.global" => "init",
                _ => continue,
            };
            let (Some(name), Some(t)) = (self.m.symbol_name(op), data.attr("type").and_then(Attribute::as_type)) else {
                continue;
            };
            let (elem, shape) = match t {
                Type::MemRef { .. } | Type::FirArray { .. } => {
                    let shape = static_shape(t).ok_or_else(|| {
                        err(self.m, op, RuntimeErrorKind::Invalid("global with dynamic shape".into()))
                    })?;
                    (t.element().cloned().unwrap_or(Type::Index), shape)
                }
                other => (other.clone(), Vec::new()),
            };
            let fortran_order = data.name == "fir.global";
            let id = self.mem.allocate(elem.clone(), shape.clone(), StorageClass::Global, Some(name.to_string()));
            if let Some(items) = data.attr(init_key).and_then(Attribute::as_array) {
                for (i, a) in items.iter().enumerate() {
                    let i = if fortran_order { crate::ir::column_major_to_row_major(&shape, i) } else { i };
                    let v = match a {
                        Attribute::Int(v, _) => RuntimeValue::from_int(*v, &elem),
                        Attribute::Float(v, Type::Float(w)) => Some(RuntimeValue::Float {
                            value: super::value::round_float(*v, *w),
                            width: *w,
                        }),
                        _ => None,
                    };
                    if let (Some(v), Some(cell)) = (v, self.mem.buffers[id].cells.get_mut(i)) {
                        *cell = v;
                    }
                }
            }
            self.globals.insert(name.to_string(), id);
        }
        Ok(())
    }

    pub(super) fn finish(mut self) -> (Memory, TraceRecord) {
        let mut counters: Vec<(String, u64)> = self.counters.drain().collect();
        counters.sort();
        for (k, v) in counters {
            self.trace.counters.insert(k, v);
        }
        self.trace.counters.insert("steps".into(), self.steps);
        (self.mem, self.trace)
    }

    fn count(&mut self, name: &str) {
        match self.counters.get_mut(name) {
            Some(c) => *c += 1,
            None => {
                self.counters.insert(name.to_string(), 1);
            }
        }
    }

    // ---- scopes ----

    fn push_scope(&mut self) -> usize {
        let id = self.next_scope;
        self.next_scope += 1;
        self.scopes.push((id, Vec::new()));
        id
    }

    fn pop_scope(&mut self) {
        if let Some((_, bufs)) = self.scopes.pop() {
            for b in bufs {
                self.mem.release(b);
            }
        }
    }

    fn current_scope(&self) -> usize {
        self.scopes.last().map(|s| s.0).unwrap_or(0)
    }

    fn stack_alloc(&mut self, element: Type, shape: Vec<i64>, label: Option<String>) -> usize {
        let scope = self.current_scope();
        let id = self.mem.allocate(element, shape, StorageClass::Stack(scope), label);
        if let Some(s) = self.scopes.last_mut() {
            s.1.push(id);
        }
        id
    }

    /// Runs `f` inside a fresh allocation scope and checks that every stack
    /// buffer created inside it is gone afterwards.
    fn scoped<T>(&mut self, f: impl FnOnce(&mut Self) -> R<T>) -> R<T> {
        let before: BTreeSet<usize> = self.mem.live_stack().into_iter().collect();
        self.push_scope();
        let r = f(self);
        self.pop_scope();
        let after: BTreeSet<usize> = self.mem.live_stack().into_iter().collect();
        if before != after {
            self.trace.stack_leaks += after.difference(&before).count() as u64;
        }
        r
    }

    // ---- memory access ----

    fn check_live(&self, op: OpId, id: usize) -> R<()> {
        let b = self.mem.get(id);
        if b.live {
            Ok(())
        } else {
            Err(err(
                self.m,
                op,
                RuntimeErrorKind::UseAfterFree(b.label.clone().unwrap_or_else(|| format!("buffer#{id}"))),
            ))
        }
    }

    fn locate(&self, op: OpId, view: &BufferView, idx: &[i64]) -> R<usize> {
        self.check_live(op, view.buffer)?;
        match view.locate(idx) {
            Some(p) if (p as usize) < self.mem.get(view.buffer).cells.len() && p >= 0 => Ok(p as usize),
            _ => Err(err(
                self.m,
                op,
                RuntimeErrorKind::OutOfBounds {
                    array: self.mem.label_of(view.buffer).unwrap_or_else(|| format!("buffer#{}", view.buffer)),
                    index: idx.to_vec(),
                    shape: view.shape.clone(),
                },
            )),
        }
    }

    fn record_access(&mut self, buffer: usize, pos: usize) {
        if !self.opts.trace_accesses {
            return;
        }
        let Some(label) = self.mem.get(buffer).label.clone() else { return };
        if self.mem.get(buffer).members.is_some() {
            return;
        }
        if self.trace.accesses.len() >= MAX_ACCESS_RECORDS {
            self.trace.dropped_accesses += 1;
            return;
        }
        let idx = self.mem.unravel(buffer, pos as i64);
        self.trace.accesses.push((label, idx));
    }

    fn read(&mut self, op: OpId, view: &BufferView, idx: &[i64]) -> R<RuntimeValue> {
        let p = self.locate(op, view, idx)?;
        self.count("loads");
        self.record_access(view.buffer, p);
        let v = self.mem.buffers[view.buffer].cells[p].clone();
        if matches!(v, RuntimeValue::Buffer(_) | RuntimeValue::Null) {
            self.count("descriptor_loads");
        }
        Ok(v)
    }

    fn write(&mut self, op: OpId, view: &BufferView, idx: &[i64], v: RuntimeValue) -> R<()> {
        let p = self.locate(op, view, idx)?;
        self.count("stores");
        self.record_access(view.buffer, p);
        let elem = &self.mem.get(view.buffer).element;
        if elem.is_scalar() && !v.has_type(elem) {
            return Err(err(
                self.m,
                op,
                RuntimeErrorKind::Invalid(format!("storing {v} into a buffer of {elem}")),
            ));
        }
        self.mem.buffers[view.buffer].cells[p] = v;
        Ok(())
    }

    // ---- calls ----

    pub(super) fn call(&mut self, func: OpId, args: Vec<RuntimeValue>, site: Option<OpId>) -> R<Vec<RuntimeValue>> {
        let at = site.unwrap_or(func);
        if self.depth >= MAX_CALL_DEPTH {
            return Err(err(self.m, at, RuntimeErrorKind::Invalid("call depth limit exceeded".into())));
        }
        let Some(&region) = self.m.op(func).regions().first() else {
            return Err(err(self.m, at, RuntimeErrorKind::Invalid("function has no body".into())));
        };
        if self.m.region(region).blocks().is_empty() {
            return Err(err(self.m, at, RuntimeErrorKind::Invalid("function has no body".into())));
        }
        self.depth += 1;
        let mut env = Env::new();
        let r = self.scoped(|mc| mc.exec_region(region, args, &mut env));
        self.depth -= 1;
        match r? {
            Control::Return(v) | Control::Yield(v) => Ok(v),
            _ => Err(err(self.m, at, RuntimeErrorKind::Invalid("function ended without return".into()))),
        }
    }

    /// Boxes scalar arguments for reference parameters of the entry
    /// function. The boxes are unlabeled and live until the run ends.
    pub(super) fn prepare_args(&mut self, func: OpId, args: Vec<RuntimeValue>) -> R<Vec<RuntimeValue>> {
        let Some(Attribute::Type(Type::Function { inputs, .. })) = self.m.op(func).attr("function_type") else {
            return Err(err(self.m, func, RuntimeErrorKind::Invalid("missing function type".into())));
        };
        if inputs.len() != args.len() {
            return Err(err(
                self.m,
                func,
                RuntimeErrorKind::Invalid(format!("expected {} arguments, got {}", inputs.len(), args.len())),
            ));
        }
        let mut out = Vec::new();
        for (t, a) in inputs.clone().iter().zip(args) {
            let boxed_elem = match t {
                Type::FirRef(inner) if inner.is_scalar() => Some((**inner).clone()),
                Type::MemRef { shape, element } if shape.is_empty() && element.is_scalar() => Some((**element).clone()),
                _ => None,
            };
            match boxed_elem {
                Some(e) if !matches!(a, RuntimeValue::Buffer(_)) => {
                    if !a.has_type(&e) {
                        return Err(err(self.m, func, RuntimeErrorKind::Invalid(format!("argument {a} is not {e}"))));
                    }
                    let id = self.mem.allocate(e, Vec::new(), StorageClass::Global, None);
                    self.mem.buffers[id].cells[0] = a;
                    out.push(RuntimeValue::Buffer(self.mem.view_of(id)));
                }
                _ => {
                    if t.is_scalar() && !a.has_type(t) {
                        return Err(err(self.m, func, RuntimeErrorKind::Invalid(format!("argument {a} is not {t}"))));
                    }
                    out.push(a)
                }
            }
        }
        Ok(out)
    }

    // ---- regions ----

    fn exec_region(&mut self, region: RegionId, args: Vec<RuntimeValue>, env: &mut Env) -> R<Control> {
        let Some(mut block) = self.m.region(region).entry() else {
            return Ok(Control::Yield(Vec::new()));
        };
        let mut args = args;
        loop {
            let n = self.m.block(block).args.len();
            if n != args.len() {
                let owner = self.m.region(region).parent_op().expect("region owned by an op");
                return Err(err(
                    self.m,
                    owner,
                    RuntimeErrorKind::Invalid(format!("block expects {n} arguments, got {}", args.len())),
                ));
            }
            for (i, a) in args.drain(..).enumerate() {
                env.insert(self.m.arg(block, i), a);
            }
            let mut next = None;
            for &op in self.m.block(block).ops() {
                match self.exec_op(op, env)? {
                    Control::Next => {}
                    Control::Branch(b, a) => {
                        next = Some((b, a));
                        break;
                    }
                    c @ (Control::Yield(_) | Control::Return(_)) => return Ok(c),
                }
            }
            match next {
                Some((b, a)) => {
                    block = b;
                    args = a;
                }
                None => return Ok(Control::Yield(Vec::new())),
            }
        }
    }

    fn yielded(&mut self, op: OpId, c: Control) -> R<Vec<RuntimeValue>> {
        match c {
            Control::Yield(v) => Ok(v),
            _ => Err(err(self.m, op, RuntimeErrorKind::Invalid("unexpected control transfer out of region".into()))),
        }
    }

    fn run_nested(&mut self, op: OpId, region_index: usize, args: Vec<RuntimeValue>, env: &mut Env) -> R<Vec<RuntimeValue>> {
        let region = self.m.op(op).regions()[region_index];
        let c = self.exec_region(region, args, env)?;
        self.yielded(op, c)
    }

    // ---- helpers ----

    fn get(&self, env: &Env, op: OpId, v: Value) -> R<RuntimeValue> {
        env.get(&v)
            .cloned()
            .ok_or_else(|| err(self.m, op, RuntimeErrorKind::Invalid("operand has no value".into())))
    }

    fn operands(&self, env: &Env, op: OpId) -> R<Vec<RuntimeValue>> {
        self.m.op(op).operands.iter().map(|v| self.get(env, op, *v)).collect()
    }

    fn int(&self, op: OpId, v: &RuntimeValue) -> R<i64> {
        v.as_int()
            .ok_or_else(|| err(self.m, op, RuntimeErrorKind::Invalid(format!("expected an integer, got {v}"))))
    }

    fn view(&self, op: OpId, v: &RuntimeValue) -> R<BufferView> {
        match v {
            RuntimeValue::Buffer(b) => Ok(b.clone()),
            RuntimeValue::Null => Err(err(self.m, op, RuntimeErrorKind::NullDereference)),
            other => Err(err(self.m, op, RuntimeErrorKind::Invalid(format!("expected a buffer, got {other}")))),
        }
    }

    fn arith(&self, op: OpId, r: Result<RuntimeValue, ArithError>) -> R<RuntimeValue> {
        r.map_err(|e| match e {
            ArithError::DivisionByZero => err(self.m, op, RuntimeErrorKind::DivisionByZero),
            ArithError::TypeMismatch(s) => err(self.m, op, RuntimeErrorKind::Invalid(s)),
        })
    }

    fn set_results(&self, env: &mut Env, op: OpId, vals: Vec<RuntimeValue>) -> R<()> {
        let n = self.m.op(op).result_types.len();
        if vals.len() != n {
            return Err(err(
                self.m,
                op,
                RuntimeErrorKind::Invalid(format!("produced {} values for {n} results", vals.len())),
            ));
        }
        for (i, v) in vals.into_iter().enumerate() {
            env.insert(self.m.result(op, i), v);
        }
        Ok(())
    }

    fn label(&self, op: OpId) -> Option<String> {
        self.m.op(op).attr("uniq_name").and_then(Attribute::as_str).map(str::to_string)
    }

    fn extents(&self, op: OpId, shape: &[Dim], dynamic: &[RuntimeValue]) -> R<Vec<i64>> {
        let mut it = dynamic.iter();
        let mut out = Vec::with_capacity(shape.len());
        for d in shape {
            let n = match d {
                Dim::Static(n) => *n,
                Dim::Dynamic => {
                    let v = it
                        .next()
                        .ok_or_else(|| err(self.m, op, RuntimeErrorKind::Invalid("missing extent operand".into())))?;
                    self.int(op, v)?
                }
            };
            out.push(n.max(0));
        }
        Ok(out)
    }

    /// Allocates storage for a FIR `in_type`, returning the reference view.
    fn fir_allocate(&mut self, op: OpId, t: &Type, dynamic: &[RuntimeValue], heap: bool) -> R<RuntimeValue> {
        let label = self.label(op);
        let (elem, shape) = match t {
            Type::FirArray { shape, element } => ((**element).clone(), self.extents(op, shape, dynamic)?),
            other => (other.clone(), Vec::new()),
        };
        let alloc = |mc: &mut Self, e: Type, s: Vec<i64>, l: Option<String>| {
            if heap {
                mc.mem.allocate(e, s, StorageClass::Heap, l)
            } else {
                mc.stack_alloc(e, s, l)
            }
        };
        let id = match &elem {
            Type::FirDerived { members, .. } if shape.is_empty() => {
                let id = alloc(self, elem.clone(), vec![members.len() as i64], label.clone());
                let names: Vec<String> = members.iter().map(|(n, _)| n.clone()).collect();
                let mut children = Vec::new();
                for (k, (mname, mt)) in members.iter().enumerate() {
                    if let Type::FirArray { element, .. } = mt {
                        let s = static_shape(mt).ok_or_else(|| {
                            err(self.m, op, RuntimeErrorKind::Invalid("derived member with dynamic shape".into()))
                        })?;
                        let child_label = label.as_ref().map(|l| format!("{l}%{mname}"));
                        let c = alloc(self, (**element).clone(), s, child_label);
                        children.push(c);
                        self.mem.buffers[id].cells[k] = RuntimeValue::Buffer(self.mem.view_of(c));
                    } else {
                        self.mem.buffers[id].cells[k] = RuntimeValue::zero(mt);
                    }
                }
                // children are owned by the parent, not by the scope
                if let Some(s) = self.scopes.last_mut() {
                    s.1.retain(|b| !children.contains(b));
                }
                self.mem.buffers[id].members = Some(names);
                self.mem.buffers[id].children = children;
                return Ok(RuntimeValue::Buffer(BufferView {
                    buffer: id,
                    offset: 0,
                    shape: Vec::new(),
                    strides: Vec::new(),
                    origins: Vec::new(),
                }));
            }
            _ => alloc(self, elem, shape, label),
        };
        Ok(RuntimeValue::Buffer(self.mem.view_of(id)))
    }

    fn fir_elements(&mut self, op: OpId, v: &RuntimeValue) -> R<(BufferView, Vec<RuntimeValue>)> {
        let view = self.view(op, v)?;
        let mut out = Vec::new();
        for idx in view.indices() {
            out.push(self.read(op, &view, &idx)?);
        }
        Ok((view, out))
    }

    // ---- ops ----

    fn exec_op(&mut self, op: OpId, env: &mut Env) -> R<Control> {
        self.steps += 1;
        if self.steps > self.opts.step_budget {
            return Err(err(self.m, op, RuntimeErrorKind::StepBudgetExceeded(self.opts.step_budget)));
        }
        let m = self.m;
        let data = m.op(op);
        let name = data.name.as_str();
        if self.opts.count_ops {
            let key = format!("op.{name}");
            self.count(&key);
        }
        match name {
            "arith.constant" => {
                let t = &data.result_types[0];
                let v = match data.attr("value") {
                    Some(Attribute::Int(v, _)) => RuntimeValue::from_int(*v, t),
                    Some(Attribute::Float(v, Type::Float(w))) => Some(RuntimeValue::Float {
                        value: super::value::round_float(*v, *w),
                        width: *w,
                    }),
                    _ => None,
                };
                let v = v.ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid("bad constant".into())))?;
                self.set_results(env, op, vec![v])?;
            }
            "arith.addi" | "arith.subi" | "arith.muli" | "arith.divsi" | "arith.remsi" | "arith.andi" | "arith.ori"
            | "arith.maxsi" | "arith.minsi" | "arith.addf" | "arith.subf" | "arith.mulf" | "arith.divf"
            | "arith.maximumf" => {
                let a = self.get(env, op, data.operands[0])?;
                let b = self.get(env, op, data.operands[1])?;
                let r = self.arith(op, arith::binop(name, &a, &b))?;
                self.set_results(env, op, vec![r])?;
            }
            "arith.cmpi" | "arith.cmpf" => {
                let a = self.get(env, op, data.operands[0])?;
                let b = self.get(env, op, data.operands[1])?;
                let pred = data.attr("predicate").and_then(Attribute::as_str).unwrap_or("");
                let r = if name == "arith.cmpi" { arith::cmpi(pred, &a, &b) } else { arith::cmpf(pred, &a, &b) };
                let r = self.arith(op, r.map(RuntimeValue::Bool))?;
                self.set_results(env, op, vec![r])?;
            }
            "arith.index_cast" => {
                let a = self.get(env, op, data.operands[0])?;
                let r = self.arith(op, arith::cast(&a, &data.result_types[0]))?;
                self.set_results(env, op, vec![r])?;
            }
            "arith.select" => {
                let c = self.get(env, op, data.operands[0])?;
                let pick = if c.as_bool().unwrap_or(false) { 1 } else { 2 };
                let r = self.get(env, op, data.operands[pick])?;
                self.set_results(env, op, vec![r])?;
            }
            "arith.sitofp" => {
                let a = self.get(env, op, data.operands[0])?;
                let r = self.arith(op, arith::sitofp(&a, &data.result_types[0]))?;
                self.set_results(env, op, vec![r])?;
            }
            "arith.fptosi" => {
                let a = self.get(env, op, data.operands[0])?;
                let r = self.arith(op, arith::fptosi(&a, &data.result_types[0]))?;
                self.set_results(env, op, vec![r])?;
            }
            "fir.convert" => {
                let a = self.get(env, op, data.operands[0])?;
                let t = &data.result_types[0];
                let r = if t.is_scalar() { self.arith(op, arith::cast(&a, t))? } else { a };
                self.set_results(env, op, vec![r])?;
            }
            "memref.cast" => {
                let a = self.get(env, op, data.operands[0])?;
                self.set_results(env, op, vec![a])?;
            }
            "ub.poison" | "fir.zero_bits" => self.set_results(env, op, vec![RuntimeValue::Null])?,

            // control flow
            "fir.if" | "scf.if" => {
                let c = self.get(env, op, data.operands[0])?;
                let c = c
                    .as_bool()
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid("condition is not i1".into())))?;
                self.count(if c { "branch.then" } else { "branch.else" });
                let vals = self.run_nested(op, if c { 0 } else { 1 }, Vec::new(), env)?;
                self.set_results(env, op, vals)?;
            }
            "fir.result" | "scf.yield" | "affine.yield" | "linalg.yield" | "memref.alloca_scope.return" | "scf.reduce"
            | "acc.terminator" | "scf.condition" => {
                return Ok(Control::Yield(self.operands(env, op)?));
            }
            "func.return" => return Ok(Control::Return(self.operands(env, op)?)),
            "cf.br" => return Ok(Control::Branch(data.successors[0], self.operands(env, op)?)),
            "cf.cond_br" => {
                let c = self.get(env, op, data.operands[0])?.as_bool().unwrap_or(false);
                let (t, f) = cond_br_segments(m, op)
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid("bad operand segments".into())))?;
                let (dest, vals) = if c { (data.successors[0], t) } else { (data.successors[1], f) };
                let vals = vals.iter().map(|v| self.get(env, op, *v)).collect::<R<Vec<_>>>()?;
                return Ok(Control::Branch(dest, vals));
            }
            "fir.do_loop" => {
                let ops = self.operands(env, op)?;
                let (lb, ub, step) = (self.int(op, &ops[0])?, self.int(op, &ops[1])?, self.int(op, &ops[2])?);
                if step == 0 {
                    return Err(err(m, op, RuntimeErrorKind::ZeroStep));
                }
                let trip = fortran_trip_count(lb, ub, step);
                for k in 0..trip {
                    let iv = lb.wrapping_add(k.wrapping_mul(step));
                    self.run_nested(op, 0, vec![RuntimeValue::Index(iv)], env)?;
                }
            }
            "fir.iterate_while" => {
                let ops = self.operands(env, op)?;
                let (lb, ub, step) = (self.int(op, &ops[0])?, self.int(op, &ops[1])?, self.int(op, &ops[2])?);
                let mut flag = ops[3].as_bool().unwrap_or(false);
                if step == 0 {
                    return Err(err(m, op, RuntimeErrorKind::ZeroStep));
                }
                let mut iv = lb;
                while flag && if step > 0 { iv <= ub } else { iv >= ub } {
                    let r = self.run_nested(op, 0, vec![RuntimeValue::Index(iv), RuntimeValue::Bool(flag)], env)?;
                    flag = r.first().and_then(RuntimeValue::as_bool).unwrap_or(false);
                    iv += step;
                }
                self.set_results(env, op, vec![RuntimeValue::Bool(flag)])?;
            }
            "scf.for" | "scf.parallel" | "affine.for" => {
                let ops = self.operands(env, op)?;
                let (lb, ub) = (self.int(op, &ops[0])?, self.int(op, &ops[1])?);
                let step = if name == "affine.for" {
                    data.attr("step").and_then(Attribute::as_int).unwrap_or(1)
                } else {
                    self.int(op, &ops[2])?
                };
                if step <= 0 {
                    return Err(err(m, op, RuntimeErrorKind::ZeroStep));
                }
                let mut iv = lb;
                while iv < ub {
                    self.scoped(|mc| mc.run_nested(op, 0, vec![RuntimeValue::Index(iv)], env))?;
                    iv += step;
                }
            }
            "scf.while" => {
                let mut vals = self.operands(env, op)?;
                loop {
                    let c = self.scoped(|mc| mc.run_nested(op, 0, vals.clone(), env))?;
                    let Some((cond, rest)) = c.split_first() else {
                        return Err(err(m, op, RuntimeErrorKind::Invalid("missing condition".into())));
                    };
                    if !cond.as_bool().unwrap_or(false) {
                        vals = rest.to_vec();
                        break;
                    }
                    vals = self.scoped(|mc| mc.run_nested(op, 1, rest.to_vec(), env))?;
                }
                self.set_results(env, op, vals)?;
            }
            "func.call" => {
                let callee = data.attr("callee").and_then(Attribute::as_symbol).unwrap_or("");
                let f = m
                    .lookup_symbol(callee)
                    .filter(|f| m.op(*f).name == "func.func")
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid(format!("unknown function @{callee}"))))?;
                let args = self.operands(env, op)?;
                let r = self.call(f, args, Some(op))?;
                self.set_results(env, op, r)?;
            }
            "memref.alloca_scope" => {
                let r = self.scoped(|mc| mc.run_nested(op, 0, Vec::new(), env))?;
                self.set_results(env, op, r)?;
            }
            "acc.kernels" => {
                self.run_nested(op, 0, Vec::new(), env)?;
            }
            "acc.create" | "acc.delete" | "acc.copyout" | "gpu.host_register" | "gpu.host_unregister" => {}

            // FIR memory
            "fir.alloca" | "fir.allocmem" => {
                let t = data
                    .attr("in_type")
                    .and_then(Attribute::as_type)
                    .cloned()
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid("missing in_type".into())))?;
                let dynamic = self.operands(env, op)?;
                let v = self.fir_allocate(op, &t, &dynamic, name == "fir.allocmem")?;
                self.set_results(env, op, vec![v])?;
            }
            "fir.freemem" | "memref.dealloc" => {
                let v = self.get(env, op, data.operands[0])?;
                let view = self.view(op, &v)?;
                self.check_live(op, view.buffer)?;
                if self.mem.get(view.buffer).class != StorageClass::Heap {
                    return Err(err(m, op, RuntimeErrorKind::Invalid("freeing a non-heap buffer".into())));
                }
                self.mem.release(view.buffer);
            }
            "fir.load" => {
                let v = self.get(env, op, data.operands[0])?;
                let view = self.view(op, &v)?;
                let r = self.read(op, &view, &[])?;
                self.set_results(env, op, vec![r])?;
            }
            "fir.store" | "hlfir.assign" => {
                let val = self.get(env, op, data.operands[0])?;
                let r = self.get(env, op, data.operands[1])?;
                let view = self.view(op, &r)?;
                self.write(op, &view, &[], val)?;
            }
            "fir.shape" => {
                let ops = self.operands(env, op)?;
                let s = ops.iter().map(|v| self.int(op, v)).collect::<R<Vec<_>>>()?;
                self.set_results(env, op, vec![RuntimeValue::Shape(s)])?;
            }
            "hlfir.shape_of" => {
                let v = self.get(env, op, data.operands[0])?;
                let view = self.view(op, &v)?;
                self.set_results(env, op, vec![RuntimeValue::Shape(view.shape.clone())])?;
            }
            "hlfir.get_extent" => {
                let v = self.get(env, op, data.operands[0])?;
                let d = data.attr("dim").and_then(Attribute::as_int).unwrap_or(0) as usize;
                match v {
                    RuntimeValue::Shape(s) if d < s.len() => self.set_results(env, op, vec![RuntimeValue::Index(s[d])])?,
                    _ => return Err(err(m, op, RuntimeErrorKind::Invalid("bad extent query".into()))),
                }
            }
            "fir.address_of" | "memref.get_global" => {
                let key = if name == "fir.address_of" { "symbol" } else { "name" };
                let sym = data.attr(key).and_then(Attribute::as_symbol).unwrap_or("");
                let id = *self
                    .globals
                    .get(sym)
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid(format!("unknown global @{sym}"))))?;
                self.set_results(env, op, vec![RuntimeValue::Buffer(self.mem.view_of(id))])?;
            }
            "fir.global" | "memref.global" | "func.func" => {}
            "hlfir.declare" => {
                let ops = self.operands(env, op)?;
                let mut v = ops[0].clone();
                let mut rest = &ops[1..];
                if let Some(RuntimeValue::Shape(s)) = rest.first() {
                    if let RuntimeValue::Buffer(view) = &v {
                        if view.shape != *s {
                            return Err(err(
                                m,
                                op,
                                RuntimeErrorKind::Invalid(format!("shape {s:?} does not match storage {:?}", view.shape)),
                            ));
                        }
                    }
                    rest = &rest[1..];
                }
                if let RuntimeValue::Buffer(view) = &mut v {
                    if let Some(lbs) = data.attr("lbs").and_then(Attribute::as_dense) {
                        view.origins = lbs.to_vec();
                    } else if !rest.is_empty() {
                        view.origins = rest.iter().map(|x| self.int(op, x)).collect::<R<Vec<_>>>()?;
                    }
                }
                self.set_results(env, op, vec![v])?;
            }
            "hlfir.designate" => {
                let r = self.designate(op, env)?;
                self.set_results(env, op, vec![r])?;
            }
            "hlfir.sum" | "hlfir.maxval" | "hlfir.product" => {
                if data.operands.len() > 1 || data.attr("dim").is_some() {
                    return Err(err(m, op, RuntimeErrorKind::Unsupported("masked or partial reduction".into())));
                }
                let kind = &name["hlfir.".len()..];
                let t = data.result_types[0].clone();
                let fold = arith::reduction_op(kind, &t);
                let init = arith::reduction_init(kind, &t);
                let (Some(fold), Some(mut acc)) = (fold, init) else {
                    return Err(err(m, op, RuntimeErrorKind::Unsupported(format!("{kind} over {t}"))));
                };
                let base = self.get(env, op, data.operands[0])?;
                let (_, elems) = self.fir_elements(op, &base)?;
                for e in elems {
                    acc = self.arith(op, arith::binop(fold, &e, &acc))?;
                }
                self.set_results(env, op, vec![acc])?;
            }
            "hlfir.dot_product" => {
                let t = data.result_types[0].clone();
                let (add, mul) = if t.is_float() { ("arith.addf", "arith.mulf") } else { ("arith.addi", "arith.muli") };
                let a = self.get(env, op, data.operands[0])?;
                let b = self.get(env, op, data.operands[1])?;
                let (va, ea) = self.fir_elements(op, &a)?;
                let (vb, eb) = self.fir_elements(op, &b)?;
                if va.shape != vb.shape {
                    return Err(err(m, op, RuntimeErrorKind::Invalid("dot_product of arrays of different size".into())));
                }
                let mut acc = RuntimeValue::zero(&t);
                for (x, y) in ea.iter().zip(&eb) {
                    let p = self.arith(op, arith::binop(mul, x, y))?;
                    acc = self.arith(op, arith::binop(add, &acc, &p))?;
                }
                self.set_results(env, op, vec![acc])?;
            }
            "hlfir.matmul" => {
                let a = self.get(env, op, data.operands[0])?;
                let b = self.get(env, op, data.operands[1])?;
                let (va, vb) = (self.view(op, &a)?, self.view(op, &b)?);
                let elem = data.result_types[0].pointee().and_then(Type::element).cloned().unwrap_or(Type::f64());
                let (n, k, mm) = (va.shape[0], va.shape[1], vb.shape[1]);
                if vb.shape[0] != k {
                    return Err(err(m, op, RuntimeErrorKind::Invalid("matmul shapes do not conform".into())));
                }
                let (add, mul) = if elem.is_float() { ("arith.addf", "arith.mulf") } else { ("arith.addi", "arith.muli") };
                let id = self.mem.allocate(elem.clone(), vec![n, mm], StorageClass::Heap, self.label(op));
                let out = self.mem.view_of(id);
                for i in 0..n {
                    for j in 0..mm {
                        let mut acc = RuntimeValue::zero(&elem);
                        for p in 0..k {
                            let x = self.read(op, &va, &[i, p])?;
                            let y = self.read(op, &vb, &[p, j])?;
                            let prod = self.arith(op, arith::binop(mul, &x, &y))?;
                            acc = self.arith(op, arith::binop(add, &acc, &prod))?;
                        }
                        self.write(op, &out, &[i, j], acc)?;
                    }
                }
                self.set_results(env, op, vec![RuntimeValue::Buffer(out)])?;
            }
            "hlfir.transpose" => {
                let a = self.get(env, op, data.operands[0])?;
                let va = self.view(op, &a)?;
                let elem = data.result_types[0].pointee().and_then(Type::element).cloned().unwrap_or(Type::f64());
                let id = self.mem.allocate(elem, vec![va.shape[1], va.shape[0]], StorageClass::Heap, self.label(op));
                let out = self.mem.view_of(id);
                for idx in va.indices() {
                    let x = self.read(op, &va, &idx)?;
                    self.write(op, &out, &[idx[1], idx[0]], x)?;
                }
                self.set_results(env, op, vec![RuntimeValue::Buffer(out)])?;
            }

            // memref
            "memref.alloca" | "memref.alloc" => {
                let t = &data.result_types[0];
                let dynamic = self.operands(env, op)?;
                let shape = self.extents(op, t.shape().unwrap_or(&[]), &dynamic)?;
                let elem = t.element().cloned().unwrap_or(Type::Index);
                let label = self.label(op);
                let id = if name == "memref.alloca" {
                    self.stack_alloc(elem, shape, label)
                } else {
                    self.mem.allocate(elem, shape, StorageClass::Heap, label)
                };
                self.set_results(env, op, vec![RuntimeValue::Buffer(self.mem.view_of(id))])?;
            }
            "memref.load" | "affine.load" => {
                let ops = self.operands(env, op)?;
                let view = self.view(op, &ops[0])?;
                let idx = self.indices(op, &ops[1..])?;
                let r = self.read(op, &view, &idx)?;
                self.set_results(env, op, vec![r])?;
            }
            "memref.store" | "affine.store" => {
                let ops = self.operands(env, op)?;
                let view = self.view(op, &ops[1])?;
                let idx = self.indices(op, &ops[2..])?;
                self.write(op, &view, &idx, ops[0].clone())?;
            }
            "memref.dim" => {
                let ops = self.operands(env, op)?;
                let view = self.view(op, &ops[0])?;
                self.check_live(op, view.buffer)?;
                let d = self.int(op, &ops[1])?;
                let n = usize::try_from(d)
                    .ok()
                    .and_then(|d| view.shape.get(d).copied())
                    .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid(format!("dimension {d} out of range"))))?;
                self.set_results(env, op, vec![RuntimeValue::Index(n)])?;
            }
            "memref.subview" => {
                let ops = self.operands(env, op)?;
                let view = self.view(op, &ops[0])?;
                self.check_live(op, view.buffer)?;
                let k = view.rank();
                let nums = ops[1..].iter().map(|v| self.int(op, v)).collect::<R<Vec<_>>>()?;
                let mut out = view.clone();
                for d in 0..k {
                    let (off, size, st) = (nums[d], nums[k + d], nums[2 * k + d]);
                    if size < 0 || (size > 0 && (off < 0 || st <= 0 || off + (size - 1) * st >= view.shape[d])) {
                        return Err(err(
                            m,
                            op,
                            RuntimeErrorKind::OutOfBounds {
                                array: self.mem.label_of(view.buffer).unwrap_or_default(),
                                index: vec![off, size, st],
                                shape: view.shape.clone(),
                            },
                        ));
                    }
                    out.offset += off * view.strides[d];
                    out.shape[d] = size;
                    out.strides[d] = view.strides[d] * st;
                    out.origins[d] = 1;
                }
                self.set_results(env, op, vec![RuntimeValue::Buffer(out)])?;
            }

            // linalg
            "linalg.reduce" => {
                let ops = self.operands(env, op)?;
                let (vin, vout) = (self.view(op, &ops[0])?, self.view(op, &ops[1])?);
                let dims = data.attr("dimensions").and_then(Attribute::as_dense).unwrap_or(&[]).to_vec();
                for idx in vin.indices() {
                    let out_idx: Vec<i64> = idx
                        .iter()
                        .enumerate()
                        .filter(|(d, _)| !dims.contains(&(*d as i64)))
                        .map(|(_, i)| *i)
                        .collect();
                    let x = self.read(op, &vin, &idx)?;
                    let acc = self.read(op, &vout, &out_idx)?;
                    let r = self.run_nested(op, 0, vec![x, acc], env)?;
                    let v = r
                        .into_iter()
                        .next()
                        .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid("reduce body yields nothing".into())))?;
                    self.write(op, &vout, &out_idx, v)?;
                }
            }
            "linalg.matmul" | "linalg.dot" => {
                let ops = self.operands(env, op)?;
                let (va, vb, vc) = (self.view(op, &ops[0])?, self.view(op, &ops[1])?, self.view(op, &ops[2])?);
                let elem = m.value_type(data.operands[2]).element().cloned().unwrap_or(Type::f64());
                let (add, mul) = if elem.is_float() { ("arith.addf", "arith.mulf") } else { ("arith.addi", "arith.muli") };
                if name == "linalg.dot" {
                    for i in 0..va.shape[0] {
                        let x = self.read(op, &va, &[i])?;
                        let y = self.read(op, &vb, &[i])?;
                        let acc = self.read(op, &vc, &[])?;
                        let p = self.arith(op, arith::binop(mul, &x, &y))?;
                        let s = self.arith(op, arith::binop(add, &acc, &p))?;
                        self.write(op, &vc, &[], s)?;
                    }
                } else {
                    let (n, k, mm) = (va.shape[0], va.shape[1], vb.shape[1]);
                    if vb.shape[0] != k || vc.shape != [n, mm] {
                        return Err(err(m, op, RuntimeErrorKind::Invalid("matmul shapes do not conform".into())));
                    }
                    for i in 0..n {
                        for j in 0..mm {
                            for p in 0..k {
                                let x = self.read(op, &va, &[i, p])?;
                                let y = self.read(op, &vb, &[p, j])?;
                                let acc = self.read(op, &vc, &[i, j])?;
                                let prod = self.arith(op, arith::binop(mul, &x, &y))?;
                                let s = self.arith(op, arith::binop(add, &acc, &prod))?;
                                self.write(op, &vc, &[i, j], s)?;
                            }
                        }
                    }
                }
            }
            "linalg.transpose" => {
                let ops = self.operands(env, op)?;
                let (vin, vout) = (self.view(op, &ops[0])?, self.view(op, &ops[1])?);
                for idx in vin.indices() {
                    let x = self.read(op, &vin, &idx)?;
                    self.write(op, &vout, &[idx[1], idx[0]], x)?;
                }
            }
            "linalg.fill" => {
                let ops = self.operands(env, op)?;
                let vout = self.view(op, &ops[1])?;
                for idx in vout.indices() {
                    self.write(op, &vout, &idx, ops[0].clone())?;
                }
            }
            other => {
                return Err(err(m, op, RuntimeErrorKind::Unsupported(format!("cannot execute '{other}'"))));
            }
        }
        Ok(Control::Next)
    }

    fn indices(&self, op: OpId, vals: &[RuntimeValue]) -> R<Vec<i64>> {
        let mut idx = vals.iter().map(|v| self.int(op, v)).collect::<R<Vec<_>>>()?;
        if let Some(offsets) = self.m.op(op).attr("offsets").and_then(Attribute::as_dense) {
            for (i, o) in idx.iter_mut().zip(offsets) {
                *i += o;
            }
        }
        Ok(idx)
    }

    fn designate(&mut self, op: OpId, env: &Env) -> R<RuntimeValue> {
        let m = self.m;
        let data = m.op(op);
        let ops = self.operands(env, op)?;
        let mut view = self.view(op, &ops[0])?;
        self.check_live(op, view.buffer)?;
        let subs = ops[1..].iter().map(|v| self.int(op, v)).collect::<R<Vec<_>>>()?;
        if let Some(c) = data.attr("component").and_then(Attribute::as_str) {
            let buf = self.mem.get(view.buffer);
            let k = buf
                .members
                .as_ref()
                .and_then(|ms| ms.iter().position(|x| x == c))
                .ok_or_else(|| err(m, op, RuntimeErrorKind::Invalid(format!("no component '{c}'"))))?;
            let pos = view.offset as usize + k;
            match buf.cells[pos].clone() {
                RuntimeValue::Buffer(child) => view = child,
                _ => {
                    return Ok(RuntimeValue::Buffer(BufferView {
                        buffer: view.buffer,
                        offset: pos as i64,
                        shape: Vec::new(),
                        strides: Vec::new(),
                        origins: Vec::new(),
                    }));
                }
            }
            if subs.is_empty() {
                return Ok(RuntimeValue::Buffer(view));
            }
        }
        let oob = |mc: &Self, index: Vec<i64>, view: &BufferView| {
            err(
                m,
                op,
                RuntimeErrorKind::OutOfBounds {
                    array: mc.mem.label_of(view.buffer).unwrap_or_default(),
                    index,
                    shape: view.shape.clone(),
                },
            )
        };
        if data.attr("triplets").is_some() {
            let k = view.rank();
            if subs.len() != 3 * k {
                return Err(err(m, op, RuntimeErrorKind::Invalid("bad section".into())));
            }
            let mut out = view.clone();
            for d in 0..k {
                let (lb, ub, st) = (subs[3 * d], subs[3 * d + 1], subs[3 * d + 2]);
                if st == 0 {
                    return Err(err(m, op, RuntimeErrorKind::ZeroStep));
                }
                let n = fortran_trip_count(lb, ub, st);
                let start = lb - view.origins[d];
                let last = start + (n - 1).max(0) * st;
                if n > 0 && (start < 0 || start >= view.shape[d] || last < 0 || last >= view.shape[d]) {
                    return Err(oob(self, vec![lb, ub, st], &view));
                }
                out.offset += start * view.strides[d];
                out.shape[d] = n;
                out.strides[d] = view.strides[d] * st;
                out.origins[d] = 1;
            }
            return Ok(RuntimeValue::Buffer(out));
        }
        let idx: Vec<i64> = subs.iter().zip(&view.origins).map(|(s, o)| s - o).collect();
        let pos = view.locate(&idx).ok_or_else(|| oob(self, subs.clone(), &view))?;
        Ok(RuntimeValue::Buffer(BufferView {
            buffer: view.buffer,
            offset: pos,
            shape: Vec::new(),
            strides: Vec::new(),
            origins: Vec::new(),
        }))
    }
}

/// Iterations of a Fortran counted loop: max(0, (u - l + s) / s).
pub fn fortran_trip_count(l: i64, u: i64, s: i64) -> i64 {
    ((u - l + s) / s).max(0)
}

fn static_shape(t: &Type) -> Option<Vec<i64>> {
    t.shape()?.iter().map(|d| d.as_static()).collect()
}
