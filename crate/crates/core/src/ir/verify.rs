use std::collections::{BTreeSet, HashMap};

use super::{Attribute, BlockId, Diagnostic, Module, OpId, RegionId, Type, Value};
use crate::dialect::{check_op, DialectRegistry};

/// Dominance queries with per-region dominator sets computed on demand.
///
/// Within a block, program order decides. Across blocks of one region,
/// dominators come from the successor graph rooted at the entry block.
/// Lookups climb through enclosing ops but never leave a `func.func`.
#[derive(Debug, Default)]
pub struct Dominance {
    cache: HashMap<RegionId, HashMap<BlockId, BTreeSet<BlockId>>>,
}

impl Dominance {
    pub fn new() -> Self {
        Self::default()
    }

    fn dominators(&mut self, m: &Module, region: RegionId) -> &HashMap<BlockId, BTreeSet<BlockId>> {
        self.cache.entry(region).or_insert_with(|| compute_dominators(m, region))
    }

    /// True if block `a` dominates block `b` (both in the same region).
    /// Unreachable blocks are dominated by every block.
    pub fn block_dominates(&mut self, m: &Module, a: BlockId, b: BlockId) -> bool {
        if a == b {
            return true;
        }
        let Some(region) = m.block(b).parent_region() else { return false };
        match self.dominators(m, region).get(&b) {
            Some(doms) => doms.contains(&a),
            None => true,
        }
    }

    /// True if `v` is visible and defined before `user` executes.
    pub fn value_dominates(&mut self, m: &Module, v: Value, user: OpId) -> bool {
        let def_block = match v {
            Value::BlockArg { block, .. } => block,
            Value::OpResult { op, .. } => match m.op(op).parent_block() {
                Some(b) if !m.op(op).is_erased() => b,
                _ => return false,
            },
        };
        let Some(def_region) = m.block(def_block).parent_region() else { return false };
        let mut cur = user;
        loop {
            let Some(b) = m.op(cur).parent_block() else { return false };
            if m.block(b).parent_region() == Some(def_region) {
                if b == def_block {
                    return match v {
                        Value::BlockArg { .. } => true,
                        Value::OpResult { op, .. } => {
                            op != cur && m.position_in_block(op) < m.position_in_block(cur)
                        }
                    };
                }
                return self.block_dominates(m, def_block, b);
            }
            match m.block_parent_op(b) {
                Some(p) if m.op(p).name != "func.func" => cur = p,
                _ => return false,
            }
        }
    }
}

fn successors_of(m: &Module, b: BlockId) -> Vec<BlockId> {
    m.block(b)
        .ops()
        .last()
        .map(|o| m.op(*o).successors.clone())
        .unwrap_or_default()
}

fn compute_dominators(m: &Module, region: RegionId) -> HashMap<BlockId, BTreeSet<BlockId>> {
    let blocks = m.region(region).blocks().to_vec();
    let mut out = HashMap::new();
    let Some(&entry) = blocks.first() else { return out };
    let mut reachable = BTreeSet::from([entry]);
    let mut stack = vec![entry];
    while let Some(b) = stack.pop() {
        for s in successors_of(m, b) {
            if reachable.insert(s) {
                stack.push(s);
            }
        }
    }
    let mut preds: HashMap<BlockId, Vec<BlockId>> = HashMap::new();
    for b in &blocks {
        if reachable.contains(b) {
            for s in successors_of(m, *b) {
                preds.entry(s).or_default().push(*b);
            }
        }
    }
    let all: BTreeSet<BlockId> = reachable.clone();
    for b in &reachable {
        out.insert(*b, if *b == entry { BTreeSet::from([entry]) } else { all.clone() });
    }
    let mut changed = true;
    while changed {
        changed = false;
        for b in blocks.iter().filter(|b| reachable.contains(b) && **b != entry) {
            let mut new: Option<BTreeSet<BlockId>> = None;
            for p in preds.get(b).map(Vec::as_slice).unwrap_or(&[]) {
                let pd = &out[p];
                new = Some(match new {
                    None => pd.clone(),
                    Some(acc) => acc.intersection(pd).copied().collect(),
                });
            }
            let mut new = new.unwrap_or_default();
            new.insert(*b);
            if new != out[b] {
                out.insert(*b, new);
                changed = true;
            }
        }
    }
    out
}

const TOP_LEVEL_OPS: &[&str] = &["func.func", "memref.global", "fir.global"];

/// Checks the whole module. An empty list means the module is valid.
pub fn verify_module(m: &Module, reg: &DialectRegistry) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut dom = Dominance::new();
    let mut seen = HashMap::new();
    for op in m.top_level_ops() {
        let data = m.op(op);
        if !TOP_LEVEL_OPS.contains(&data.name.as_str()) {
            diags.push(Diagnostic::at(m, op, format!("'{}' is not allowed at module level", data.name)));
        }
        if let Some(name) = m.symbol_name(op) {
            if seen.insert(name.to_string(), op).is_some() {
                diags.push(Diagnostic::at(m, op, format!("redefinition of symbol @{name}")));
            }
        }
    }
    m.walk(|op| {
        let data = m.op(op);
        match data.name.split_once('.') {
            Some((d, rest)) if !d.is_empty() && !rest.is_empty() => {}
            _ => diags.push(Diagnostic::at(m, op, format!("malformed op name '{}'", data.name))),
        }
        for msg in check_op(m, op, reg) {
            diags.push(Diagnostic::at(m, op, msg));
        }
        let block = data.parent_block().expect("walked ops are attached");
        if reg.is_terminator(&data.name) && m.block(block).ops().last() != Some(&op) {
            diags.push(Diagnostic::at(m, op, "terminator must be the last op in its block"));
        }
        for s in &data.successors {
            if m.block(*s).parent_region() != m.block(block).parent_region() {
                diags.push(Diagnostic::at(m, op, "successor block is not in the same region"));
            }
        }
        for (i, v) in data.operands.iter().enumerate() {
            if !dom.value_dominates(m, *v, op) {
                diags.push(Diagnostic::at(
                    m,
                    op,
                    format!("operand #{i} is not dominated by its definition"),
                ));
            }
        }
        check_symbol_use(m, op, &mut diags);
    });
    diags
}

fn check_symbol_use(m: &Module, op: OpId, diags: &mut Vec<Diagnostic>) {
    let data = m.op(op);
    let (attr, global_kind) = match data.name.as_str() {
        "memref.get_global" => ("name", "memref.global"),
        "fir.address_of" => ("symbol", "fir.global"),
        _ => return,
    };
    let Some(name) = data.attr(attr).and_then(Attribute::as_symbol) else { return };
    let target = m.lookup_symbol(name).filter(|g| m.op(*g).name == global_kind);
    let Some(g) = target else {
        diags.push(Diagnostic::at(m, op, format!("reference to undefined global @{name}")));
        return;
    };
    let Some(t) = m.op(g).attr("type").and_then(Attribute::as_type) else { return };
    let expected = if global_kind == "fir.global" { Type::fir_ref(t.clone()) } else { t.clone() };
    if data.result_types.first() != Some(&expected) {
        diags.push(Diagnostic::at(m, op, format!("@{name} has type {expected}")));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialect::register_dialects;
    use crate::ir::OperationState;

    fn empty_func(m: &mut Module) -> BlockId {
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

    #[test]
    fn empty_module_is_valid() {
        assert!(verify_module(&Module::new(), register_dialects()).is_empty());
    }

    #[test]
    fn use_before_def_is_one_dominance_error() {
        let mut m = Module::new();
        let b = empty_func(&mut m);
        let c = m.append(
            b,
            OperationState::new("arith.constant")
                .attr("value", Attribute::Int(1, Type::i32()))
                .result(Type::i32()),
        );
        let v = m.result(c, 0);
        let add = m.append(b, OperationState::new("arith.addi").operands([v, v]).result(Type::i32()));
        m.append(b, OperationState::new("func.return"));
        assert!(verify_module(&m, register_dialects()).is_empty());
        m.move_before(add, c);
        let add_v = m.result(add, 0);
        let _ = add_v;
        let diags = verify_module(&m, register_dialects());
        assert_eq!(diags.len(), 2, "{diags:?}");
        assert!(diags.iter().all(|d| d.message.contains("dominated")));
        // one op, one dominance problem per operand slot
        assert!(diags.iter().all(|d| d.path == "@f/0:arith.addi"));
    }

    #[test]
    fn duplicate_symbols_are_reported() {
        let mut m = Module::new();
        for _ in 0..2 {
            let b = empty_func(&mut m);
            m.append(b, OperationState::new("func.return"));
        }
        let diags = verify_module(&m, register_dialects());
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("redefinition"));
    }

    #[test]
    fn cross_block_dominance_follows_cfg() {
        let mut m = Module::new();
        let entry = empty_func(&mut m);
        let f = m.functions()[0];
        let region = m.op(f).regions()[0];
        let (b1, b2) = (m.create_block(vec![]), m.create_block(vec![]));
        m.append_block(region, b1);
        m.append_block(region, b2);
        m.append(entry, OperationState::new("cf.br").successor(b2));
        let c = m.append(
            b1,
            OperationState::new("arith.constant")
                .attr("value", Attribute::Int(1, Type::i32()))
                .result(Type::i32()),
        );
        m.append(b1, OperationState::new("cf.br").successor(b2));
        let v = m.result(c, 0);
        m.append(b2, OperationState::new("arith.addi").operands([v, v]).result(Type::i32()));
        m.append(b2, OperationState::new("func.return"));
        let diags = verify_module(&m, register_dialects());
        assert_eq!(diags.len(), 2, "{diags:?}");
    }
}
