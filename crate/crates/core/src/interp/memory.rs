use std::collections::BTreeMap;

use super::value::{BufferView, RuntimeValue};
use crate::ir::Type;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageClass {
    /// Owned by the allocation scope with this depth-independent id.
    Stack(usize),
    Heap,
    Global,
}

#[derive(Clone, Debug)]
pub struct MemoryBuffer {
    pub id: usize,
    pub element: Type,
    pub shape: Vec<i64>,
    pub cells: Vec<RuntimeValue>,
    pub class: StorageClass,
    pub live: bool,
    pub label: Option<String>,
    /// Member names of a derived-type buffer, one cell each.
    pub members: Option<Vec<String>>,
    /// Buffers released together with this one (array members).
    pub children: Vec<usize>,
}

/// One element of a snapshot. Buffer references are recorded by label so
/// that runs with different buffer numbering compare equal.
#[derive(Clone, Debug, PartialEq)]
pub enum Observed {
    Scalar(RuntimeValue),
    Ref(Option<String>),
    Null,
}

pub type Snapshots = BTreeMap<String, Vec<Vec<Observed>>>;

#[derive(Debug, Default)]
pub struct Memory {
    pub buffers: Vec<MemoryBuffer>,
    pub snapshots: Snapshots,
}

impl Memory {
    pub fn allocate(&mut self, element: Type, shape: Vec<i64>, class: StorageClass, label: Option<String>) -> usize {
        let n: i64 = shape.iter().product::<i64>().max(0);
        let id = self.buffers.len();
        self.buffers.push(MemoryBuffer {
            id,
            cells: vec![RuntimeValue::zero(&element); n as usize],
            element,
            shape,
            class,
            live: true,
            label,
            members: None,
            children: Vec::new(),
        });
        id
    }

    pub fn get(&self, id: usize) -> &MemoryBuffer {
        &self.buffers[id]
    }

    pub fn label_of(&self, id: usize) -> Option<String> {
        self.buffers.get(id).and_then(|b| b.label.clone())
    }

    fn observe(&self, v: &RuntimeValue) -> Observed {
        match v {
            RuntimeValue::Buffer(view) => Observed::Ref(self.label_of(view.buffer)),
            RuntimeValue::Null => Observed::Null,
            other => Observed::Scalar(other.clone()),
        }
    }

    /// Records the contents of a labeled buffer.
    pub fn snapshot(&mut self, id: usize) {
        let b = &self.buffers[id];
        let Some(label) = b.label.clone() else { return };
        match &b.members {
            Some(members) => {
                let entries: Vec<(String, Observed)> = members
                    .iter()
                    .zip(&b.cells)
                    .filter(|(_, c)| !matches!(c, RuntimeValue::Buffer(_)))
                    .map(|(m, c)| (format!("{label}%{m}"), self.observe(c)))
                    .collect();
                for (k, v) in entries {
                    self.snapshots.entry(k).or_default().push(vec![v]);
                }
            }
            None => {
                let data: Vec<Observed> = b.cells.iter().map(|c| self.observe(c)).collect();
                self.snapshots.entry(label).or_default().push(data);
            }
        }
    }

    /// Marks a buffer dead after recording its final state.
    pub fn release(&mut self, id: usize) {
        if !self.buffers[id].live {
            return;
        }
        self.snapshot(id);
        self.buffers[id].live = false;
        for c in self.buffers[id].children.clone() {
            self.release(c);
        }
    }

    pub fn live_stack(&self) -> Vec<usize> {
        self.buffers
            .iter()
            .filter(|b| b.live && matches!(b.class, StorageClass::Stack(_)))
            .map(|b| b.id)
            .collect()
    }

    pub fn live_heap_labels(&self) -> Vec<String> {
        self.buffers
            .iter()
            .filter(|b| b.live && b.class == StorageClass::Heap)
            .map(|b| b.label.clone().unwrap_or_else(|| format!("buffer#{}", b.id)))
            .collect()
    }

    /// Records every remaining live buffer, in allocation order.
    pub fn snapshot_live(&mut self) {
        for id in 0..self.buffers.len() {
            if self.buffers[id].live {
                self.snapshot(id);
            }
        }
    }

    pub fn view_of(&self, id: usize) -> BufferView {
        BufferView::contiguous(id, self.buffers[id].shape.clone())
    }

    pub fn unravel(&self, id: usize, pos: i64) -> Vec<i64> {
        let shape = &self.buffers[id].shape;
        let mut idx = vec![0; shape.len()];
        let mut rest = pos;
        for d in (0..shape.len()).rev() {
            let n = shape[d].max(1);
            idx[d] = rest % n;
            rest /= n;
        }
        idx
    }
}
