use std::collections::{BTreeMap, HashMap};

use super::attr::Attribute;
use super::types::Type;
use super::IrError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub(crate) u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub(crate) u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub(crate) u32);

/// An SSA value, identified by its owner and position. Printed names are
/// assigned only when a module is printed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    BlockArg { block: BlockId, index: u32 },
    OpResult { op: OpId, index: u32 },
}

#[derive(Clone, Debug)]
pub struct Operation {
    pub name: String,
    pub operands: Vec<Value>,
    pub result_types: Vec<Type>,
    pub attributes: BTreeMap<String, Attribute>,
    pub successors: Vec<BlockId>,
    regions: Vec<RegionId>,
    parent: Option<BlockId>,
    erased: bool,
}

impl Operation {
    pub fn dialect(&self) -> &str {
        self.name.split_once('.').map(|(d, _)| d).unwrap_or("")
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn parent_block(&self) -> Option<BlockId> {
        self.parent
    }

    pub fn attr(&self, name: &str) -> Option<&Attribute> {
        self.attributes.get(name)
    }

    pub fn is_erased(&self) -> bool {
        self.erased
    }
}

#[derive(Clone, Debug, Default)]
pub struct Block {
    pub args: Vec<Type>,
    ops: Vec<OpId>,
    parent: Option<RegionId>,
}

impl Block {
    pub fn ops(&self) -> &[OpId] {
        &self.ops
    }

    pub fn parent_region(&self) -> Option<RegionId> {
        self.parent
    }
}

#[derive(Clone, Debug, Default)]
pub struct Region {
    blocks: Vec<BlockId>,
    parent: Option<OpId>,
}

impl Region {
    pub fn blocks(&self) -> &[BlockId] {
        &self.blocks
    }

    pub fn parent_op(&self) -> Option<OpId> {
        self.parent
    }

    pub fn entry(&self) -> Option<BlockId> {
        self.blocks.first().copied()
    }
}

/// Everything needed to create an operation.
#[derive(Clone, Debug)]
pub struct OperationState {
    pub name: String,
    pub operands: Vec<Value>,
    pub result_types: Vec<Type>,
    pub attributes: BTreeMap<String, Attribute>,
    pub regions: Vec<RegionId>,
    pub successors: Vec<BlockId>,
}

impl OperationState {
    pub fn new(name: impl Into<String>) -> Self {
        OperationState {
            name: name.into(),
            operands: Vec::new(),
            result_types: Vec::new(),
            attributes: BTreeMap::new(),
            regions: Vec::new(),
            successors: Vec::new(),
        }
    }

    pub fn operand(mut self, v: Value) -> Self {
        self.operands.push(v);
        self
    }

    pub fn operands(mut self, vs: impl IntoIterator<Item = Value>) -> Self {
        self.operands.extend(vs);
        self
    }

    pub fn result(mut self, t: Type) -> Self {
        self.result_types.push(t);
        self
    }

    pub fn results(mut self, ts: impl IntoIterator<Item = Type>) -> Self {
        self.result_types.extend(ts);
        self
    }

    pub fn attr(mut self, name: impl Into<String>, value: Attribute) -> Self {
        self.attributes.insert(name.into(), value);
        self
    }

    pub fn region(mut self, r: RegionId) -> Self {
        self.regions.push(r);
        self
    }

    pub fn successor(mut self, b: BlockId) -> Self {
        self.successors.push(b);
        self
    }
}

/// The top-level container: a single region with one block holding
/// functions and globals.
#[derive(Clone, Debug)]
pub struct Module {
    ops: Vec<Operation>,
    blocks: Vec<Block>,
    regions: Vec<Region>,
    body: RegionId,
}

impl Default for Module {
    fn default() -> Self {
        Self::new()
    }
}

impl Module {
    pub fn new() -> Self {
        let mut m = Module {
            ops: Vec::new(),
            blocks: Vec::new(),
            regions: Vec::new(),
            body: RegionId(0),
        };
        let r = m.create_region();
        let b = m.create_block(Vec::new());
        m.append_block(r, b);
        m.body = r;
        m
    }

    pub fn body_region(&self) -> RegionId {
        self.body
    }

    pub fn body_block(&self) -> BlockId {
        self.regions[self.body.0 as usize].blocks[0]
    }

    pub fn op(&self, id: OpId) -> &Operation {
        &self.ops[id.0 as usize]
    }

    pub fn op_mut(&mut self, id: OpId) -> &mut Operation {
        &mut self.ops[id.0 as usize]
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0 as usize]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut Block {
        &mut self.blocks[id.0 as usize]
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0 as usize]
    }

    pub fn create_region(&mut self) -> RegionId {
        self.regions.push(Region::default());
        RegionId(self.regions.len() as u32 - 1)
    }

    pub fn create_block(&mut self, args: Vec<Type>) -> BlockId {
        self.blocks.push(Block {
            args,
            ..Block::default()
        });
        BlockId(self.blocks.len() as u32 - 1)
    }

    /// Region holding a single new block with the given arguments.
    pub fn region_with_block(&mut self, args: Vec<Type>) -> (RegionId, BlockId) {
        let r = self.create_region();
        let b = self.create_block(args);
        self.append_block(r, b);
        (r, b)
    }

    pub fn append_block(&mut self, region: RegionId, block: BlockId) {
        assert!(self.blocks[block.0 as usize].parent.is_none(), "block already attached");
        self.blocks[block.0 as usize].parent = Some(region);
        self.regions[region.0 as usize].blocks.push(block);
    }

    pub fn detach_block(&mut self, block: BlockId) {
        if let Some(r) = self.blocks[block.0 as usize].parent.take() {
            self.regions[r.0 as usize].blocks.retain(|b| *b != block);
        }
    }

    /// Creates a detached operation. Regions passed in the state become
    /// owned by the new op.
    pub fn create_op(&mut self, state: OperationState) -> OpId {
        let id = OpId(self.ops.len() as u32);
        for r in &state.regions {
            let region = &mut self.regions[r.0 as usize];
            assert!(region.parent.is_none(), "region already owned");
            region.parent = Some(id);
        }
        self.ops.push(Operation {
            name: state.name,
            operands: state.operands,
            result_types: state.result_types,
            attributes: state.attributes,
            successors: state.successors,
            regions: state.regions,
            parent: None,
            erased: false,
        });
        id
    }

    pub fn append(&mut self, block: BlockId, state: OperationState) -> OpId {
        let op = self.create_op(state);
        self.attach_op(block, None, op);
        op
    }

    pub fn insert_before(&mut self, anchor: OpId, state: OperationState) -> OpId {
        let op = self.create_op(state);
        self.move_before(op, anchor);
        op
    }

    /// Inserts a detached op into `block` at `index` (or at the end).
    pub fn attach_op(&mut self, block: BlockId, index: Option<usize>, op: OpId) {
        assert!(self.ops[op.0 as usize].parent.is_none(), "op already attached");
        let ops = &mut self.blocks[block.0 as usize].ops;
        match index {
            Some(i) => ops.insert(i, op),
            None => ops.push(op),
        }
        self.ops[op.0 as usize].parent = Some(block);
    }

    pub fn detach_op(&mut self, op: OpId) {
        if let Some(b) = self.ops[op.0 as usize].parent.take() {
            self.blocks[b.0 as usize].ops.retain(|o| *o != op);
        }
    }

    /// Detaches `op` (if attached) and re-attaches it right before `anchor`.
    pub fn move_before(&mut self, op: OpId, anchor: OpId) {
        self.detach_op(op);
        let block = self.op(anchor).parent.expect("anchor must be attached");
        let pos = self.position_in_block(anchor);
        self.attach_op(block, Some(pos), op);
    }

    pub fn move_after(&mut self, op: OpId, anchor: OpId) {
        self.detach_op(op);
        let block = self.op(anchor).parent.expect("anchor must be attached");
        let pos = self.position_in_block(anchor);
        self.attach_op(block, Some(pos + 1), op);
    }

    pub fn position_in_block(&self, op: OpId) -> usize {
        let b = self.op(op).parent.expect("op must be attached");
        self.block(b)
            .ops
            .iter()
            .position(|o| *o == op)
            .expect("parent block lists op")
    }

    /// Detaches and erases an op together with everything nested in it.
    pub fn erase_op(&mut self, op: OpId) {
        self.detach_op(op);
        let mut stack = vec![op];
        while let Some(o) = stack.pop() {
            self.ops[o.0 as usize].erased = true;
            for r in self.ops[o.0 as usize].regions.clone() {
                for b in self.regions[r.0 as usize].blocks.clone() {
                    stack.extend(self.blocks[b.0 as usize].ops.iter().copied());
                }
            }
        }
    }

    pub fn result(&self, op: OpId, index: usize) -> Value {
        debug_assert!(index < self.op(op).result_types.len());
        Value::OpResult {
            op,
            index: index as u32,
        }
    }

    pub fn results(&self, op: OpId) -> Vec<Value> {
        (0..self.op(op).result_types.len())
            .map(|i| self.result(op, i))
            .collect()
    }

    pub fn arg(&self, block: BlockId, index: usize) -> Value {
        debug_assert!(index < self.block(block).args.len());
        Value::BlockArg {
            block,
            index: index as u32,
        }
    }

    pub fn args(&self, block: BlockId) -> Vec<Value> {
        (0..self.block(block).args.len())
            .map(|i| self.arg(block, i))
            .collect()
    }

    pub fn add_block_arg(&mut self, block: BlockId, ty: Type) -> Value {
        self.blocks[block.0 as usize].args.push(ty);
        self.arg(block, self.block(block).args.len() - 1)
    }

    pub fn value_type(&self, v: Value) -> &Type {
        match v {
            Value::BlockArg { block, index } => &self.block(block).args[index as usize],
            Value::OpResult { op, index } => &self.op(op).result_types[index as usize],
        }
    }

    /// Op defining `v`, or `None` for block arguments.
    pub fn defining_op(&self, v: Value) -> Option<OpId> {
        match v {
            Value::OpResult { op, .. } => Some(op),
            Value::BlockArg { .. } => None,
        }
    }

    /// Block in which `v` becomes available.
    pub fn value_block(&self, v: Value) -> Option<BlockId> {
        match v {
            Value::BlockArg { block, .. } => Some(block),
            Value::OpResult { op, .. } => self.op(op).parent,
        }
    }

    pub fn parent_op(&self, op: OpId) -> Option<OpId> {
        let b = self.op(op).parent?;
        self.block_parent_op(b)
    }

    pub fn block_parent_op(&self, b: BlockId) -> Option<OpId> {
        let r = self.block(b).parent?;
        self.region(r).parent
    }

    /// Ancestors of `op`, innermost first, excluding `op` itself.
    pub fn ancestors(&self, op: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        let mut cur = self.parent_op(op);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent_op(p);
        }
        out
    }

    /// True if `op` is `ancestor` or nested inside it.
    pub fn is_within(&self, op: OpId, ancestor: OpId) -> bool {
        op == ancestor || self.ancestors(op).contains(&ancestor)
    }

    /// True if `v` is defined inside `op` (in one of its regions).
    pub fn defined_within(&self, v: Value, op: OpId) -> bool {
        match v {
            Value::OpResult { op: d, .. } => d != op && self.is_within(d, op),
            Value::BlockArg { block, .. } => match self.block_parent_op(block) {
                Some(p) => self.is_within(p, op),
                None => false,
            },
        }
    }

    /// The enclosing `func.func` of an op.
    pub fn enclosing_func(&self, op: OpId) -> Option<OpId> {
        std::iter::once(op)
            .chain(self.ancestors(op))
            .find(|o| self.op(*o).name == "func.func")
    }

    /// Top-level ops (functions and globals) in program order.
    pub fn top_level_ops(&self) -> Vec<OpId> {
        self.block(self.body_block()).ops.clone()
    }

    pub fn functions(&self) -> Vec<OpId> {
        self.top_level_ops()
            .into_iter()
            .filter(|o| self.op(*o).name == "func.func")
            .collect()
    }

    pub fn symbol_name(&self, op: OpId) -> Option<&str> {
        self.op(op).attr("sym_name").and_then(Attribute::as_str)
    }

    pub fn lookup_symbol(&self, name: &str) -> Option<OpId> {
        self.top_level_ops()
            .into_iter()
            .find(|o| self.symbol_name(*o) == Some(name))
    }

    /// Entry block of a function (or any single-region op).
    pub fn entry_block(&self, op: OpId) -> Option<BlockId> {
        let r = *self.op(op).regions.first()?;
        self.region(r).entry()
    }

    /// Pre-order walk over every op in the module: top-level ops in program
    /// order, then each op's regions, blocks and ops in order.
    pub fn walk(&self, mut visit: impl FnMut(OpId)) {
        for op in self.top_level_ops() {
            self.walk_from(op, &mut visit);
        }
    }

    pub fn walk_from(&self, op: OpId, visit: &mut impl FnMut(OpId)) {
        visit(op);
        for r in &self.op(op).regions {
            for b in &self.region(*r).blocks {
                for o in &self.block(*b).ops {
                    self.walk_from(*o, visit);
                }
            }
        }
    }

    pub fn collect_ops(&self) -> Vec<OpId> {
        let mut out = Vec::new();
        self.walk(|o| out.push(o));
        out
    }

    /// Ops nested inside `op` (excluding `op`), pre-order.
    pub fn nested_ops(&self, op: OpId) -> Vec<OpId> {
        let mut out = Vec::new();
        self.walk_from(op, &mut |o| out.push(o));
        out.remove(0);
        out
    }

    /// All (user, operand position) pairs referencing `v`.
    pub fn uses(&self, v: Value) -> Vec<(OpId, usize)> {
        let mut out = Vec::new();
        self.walk(|o| {
            for (i, x) in self.op(o).operands.iter().enumerate() {
                if *x == v {
                    out.push((o, i));
                }
            }
        });
        out
    }

    pub fn has_uses(&self, v: Value) -> bool {
        !self.uses(v).is_empty()
    }

    /// Rewrites every use of `old` to `new`. Returns the number of uses moved.
    pub fn replace_all_uses(&mut self, old: Value, new: Value) -> Result<usize, IrError> {
        let (told, tnew) = (self.value_type(old), self.value_type(new));
        if told != tnew {
            return Err(IrError::TypeMismatch {
                expected: told.to_string(),
                found: tnew.to_string(),
            });
        }
        if old == new {
            return Ok(0);
        }
        let mut n = 0;
        for o in self.collect_ops() {
            for x in self.ops[o.0 as usize].operands.iter_mut() {
                if *x == old {
                    *x = new;
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    /// Replaces uses of `old` with `new` only inside ops for which `filter`
    /// holds. Types are not checked.
    pub fn replace_uses_where(&mut self, old: Value, new: Value, filter: impl Fn(&Module, OpId) -> bool) {
        for o in self.collect_ops() {
            if !filter(self, o) {
                continue;
            }
            for x in self.ops[o.0 as usize].operands.iter_mut() {
                if *x == old {
                    *x = new;
                }
            }
        }
    }

    pub fn set_value_type(&mut self, v: Value, ty: Type) {
        match v {
            Value::BlockArg { block, index } => {
                self.blocks[block.0 as usize].args[index as usize] = ty
            }
            Value::OpResult { op, index } => self.ops[op.0 as usize].result_types[index as usize] = ty,
        }
    }

    /// Moves all ops of `from` to the end of `to`.
    pub fn splice_block(&mut self, from: BlockId, to: BlockId) {
        let ops = std::mem::take(&mut self.blocks[from.0 as usize].ops);
        for o in &ops {
            self.ops[o.0 as usize].parent = Some(to);
        }
        self.blocks[to.0 as usize].ops.extend(ops);
    }

    /// Moves all ops of `from` right before `anchor`.
    pub fn splice_before(&mut self, from: BlockId, anchor: OpId) {
        let ops = std::mem::take(&mut self.blocks[from.0 as usize].ops);
        let block = self.op(anchor).parent.expect("anchor attached");
        let mut pos = self.position_in_block(anchor);
        for o in ops {
            self.ops[o.0 as usize].parent = Some(block);
            self.blocks[block.0 as usize].ops.insert(pos, o);
            pos += 1;
        }
    }

    /// Human-readable location of an op: function symbol followed by the
    /// op index at each nesting level.
    pub fn op_path(&self, op: OpId) -> String {
        let mut chain: Vec<OpId> = self.ancestors(op);
        chain.reverse();
        chain.push(op);
        let mut out = String::new();
        for o in chain {
            let data = self.op(o);
            if let Some(b) = data.parent {
                if b == self.body_block() {
                    match self.symbol_name(o) {
                        Some(s) => out.push_str(&format!("@{s}")),
                        None => out.push_str(&data.name.to_string()),
                    }
                    continue;
                }
                let region = self.block(b).parent.expect("attached block");
                let owner = self.region(region).parent.expect("nested region");
                let ri = self.op(owner).regions.iter().position(|r| *r == region).unwrap_or(0);
                let bi = self.region(region).blocks.iter().position(|x| *x == b).unwrap_or(0);
                let oi = self.position_in_block(o);
                out.push('/');
                if ri > 0 || bi > 0 {
                    out.push_str(&format!("r{ri}.b{bi}."));
                }
                out.push_str(&format!("{oi}:{}", data.name));
            } else {
                out.push_str(&format!("<detached {}>", data.name));
            }
        }
        out
    }

    /// Structural equality: same ops, attributes, types, nesting and
    /// use-def shape, ignoring arena ids.
    pub fn structurally_equal(&self, other: &Module) -> bool {
        let mut map = HashMap::new();
        let mut blocks = HashMap::new();
        region_eq(self, self.body, other, other.body, &mut map, &mut blocks)
    }
}

fn region_eq(
    a: &Module,
    ra: RegionId,
    b: &Module,
    rb: RegionId,
    values: &mut HashMap<Value, Value>,
    blocks: &mut HashMap<BlockId, BlockId>,
) -> bool {
    let (ba, bb) = (&a.region(ra).blocks, &b.region(rb).blocks);
    if ba.len() != bb.len() {
        return false;
    }
    for (x, y) in ba.iter().zip(bb) {
        blocks.insert(*x, *y);
        let (xa, ya) = (&a.block(*x).args, &b.block(*y).args);
        if xa != ya {
            return false;
        }
        for i in 0..xa.len() {
            values.insert(a.arg(*x, i), b.arg(*y, i));
        }
    }
    for (x, y) in ba.iter().zip(bb) {
        let (oa, ob) = (&a.block(*x).ops, &b.block(*y).ops);
        if oa.len() != ob.len() {
            return false;
        }
        for (p, q) in oa.iter().zip(ob) {
            if !op_eq(a, *p, b, *q, values, blocks) {
                return false;
            }
        }
    }
    true
}

fn op_eq(
    a: &Module,
    pa: OpId,
    b: &Module,
    pb: OpId,
    values: &mut HashMap<Value, Value>,
    blocks: &mut HashMap<BlockId, BlockId>,
) -> bool {
    let (x, y) = (a.op(pa), b.op(pb));
    if x.name != y.name
        || x.result_types != y.result_types
        || x.attributes != y.attributes
        || x.operands.len() != y.operands.len()
        || x.regions.len() != y.regions.len()
        || x.successors.len() != y.successors.len()
    {
        return false;
    }
    for (u, v) in x.operands.iter().zip(&y.operands) {
        if values.get(u) != Some(v) {
            return false;
        }
    }
    for i in 0..x.result_types.len() {
        values.insert(a.result(pa, i), b.result(pb, i));
    }
    for (ra, rb) in x.regions.iter().zip(&y.regions) {
        if !region_eq(a, *ra, b, *rb, values, blocks) {
            return false;
        }
    }
    // Successors may point forward, so compare after the enclosing region
    // has registered its blocks; every region registers all blocks first.
    x.successors
        .iter()
        .zip(&y.successors)
        .all(|(s, t)| blocks.get(s) == Some(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn func_with_constants(n: usize) -> (Module, OpId, Vec<OpId>) {
        let mut m = Module::new();
        let (r, entry) = m.region_with_block(vec![]);
        let f = m.append(
            m.body_block(),
            OperationState::new("func.func")
                .attr("sym_name", Attribute::str("f"))
                .attr(
                    "function_type",
                    Attribute::Type(Type::Function {
                        inputs: vec![],
                        results: vec![],
                    }),
                )
                .region(r),
        );
        let consts = (0..n)
            .map(|i| {
                m.append(
                    entry,
                    OperationState::new("arith.constant")
                        .attr("value", Attribute::Int(i as i64, Type::i32()))
                        .result(Type::i32()),
                )
            })
            .collect();
        (m, f, consts)
    }

    #[test]
    fn walk_counts_func_and_ops() {
        let (m, _, _) = func_with_constants(2);
        let mut n = 0;
        m.walk(|_| n += 1);
        assert_eq!(n, 3);
    }

    #[test]
    fn walk_of_empty_module_is_empty() {
        let m = Module::new();
        assert!(m.collect_ops().is_empty());
    }

    #[test]
    fn replace_all_uses_counts_and_transfers() {
        let (mut m, f, c) = func_with_constants(2);
        let entry = m.entry_block(f).unwrap();
        let (a, b) = (m.result(c[0], 0), m.result(c[1], 0));
        for _ in 0..3 {
            m.append(
                entry,
                OperationState::new("arith.addi")
                    .operands([a, a])
                    .result(Type::i32()),
            );
        }
        assert_eq!(m.uses(a).len(), 6);
        assert_eq!(m.replace_all_uses(a, b).unwrap(), 6);
        assert!(m.uses(a).is_empty());
        assert_eq!(m.uses(b).len(), 6);
    }

    #[test]
    fn replace_all_uses_identity_and_unused() {
        let (mut m, _, c) = func_with_constants(2);
        let (a, b) = (m.result(c[0], 0), m.result(c[1], 0));
        assert_eq!(m.replace_all_uses(a, a).unwrap(), 0);
        assert_eq!(m.replace_all_uses(a, b).unwrap(), 0);
    }

    #[test]
    fn replace_all_uses_rejects_type_mismatch() {
        let (mut m, f, c) = func_with_constants(1);
        let entry = m.entry_block(f).unwrap();
        let idx = m.append(
            entry,
            OperationState::new("arith.constant")
                .attr("value", Attribute::index(0))
                .result(Type::Index),
        );
        let err = m
            .replace_all_uses(m.result(c[0], 0), m.result(idx, 0))
            .unwrap_err();
        assert!(matches!(err, IrError::TypeMismatch { .. }));
    }

    #[test]
    fn structural_equality_ignores_ids() {
        let (m1, _, _) = func_with_constants(3);
        let (m2, _, _) = func_with_constants(3);
        assert!(m1.structurally_equal(&m2));
        let (m3, _, _) = func_with_constants(2);
        assert!(!m1.structurally_equal(&m3));
    }

    #[test]
    fn op_path_names_function_and_position() {
        let (m, _, c) = func_with_constants(2);
        assert_eq!(m.op_path(c[1]), "@f/1:arith.constant");
    }
}
