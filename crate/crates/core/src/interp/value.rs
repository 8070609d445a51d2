use std::fmt;

use crate::ir::Type;

/// A strided window onto a buffer. `origins` are the Fortran lower bounds
/// used by FIR-level subscripting; standard-dialect accesses ignore them.
#[derive(Clone, Debug, PartialEq)]
pub struct BufferView {
    pub buffer: usize,
    pub offset: i64,
    pub shape: Vec<i64>,
    pub strides: Vec<i64>,
    pub origins: Vec<i64>,
}

impl BufferView {
    pub fn contiguous(buffer: usize, shape: Vec<i64>) -> Self {
        let mut strides = vec![1; shape.len()];
        for i in (0..shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * shape[i + 1].max(1);
        }
        let origins = vec![1; shape.len()];
        BufferView {
            buffer,
            offset: 0,
            shape,
            strides,
            origins,
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> i64 {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear buffer position of zero-based `idx`, or `None` if out of
    /// bounds.
    pub fn locate(&self, idx: &[i64]) -> Option<i64> {
        if idx.len() != self.shape.len() {
            return None;
        }
        let mut pos = self.offset;
        for ((i, n), s) in idx.iter().zip(&self.shape).zip(&self.strides) {
            if *i < 0 || *i >= *n {
                return None;
            }
            pos += i * s;
        }
        Some(pos)
    }

    /// Zero-based indices of the view in row-major order.
    pub fn indices(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        if self.shape.iter().any(|n| *n <= 0) {
            return out;
        }
        let mut idx = vec![0i64; self.shape.len()];
        loop {
            out.push(idx.clone());
            let mut d = self.shape.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

/// Interpreter values.
#[derive(Clone, Debug, PartialEq)]
pub enum RuntimeValue {
    Int { value: i64, width: u32 },
    Float { value: f64, width: u32 },
    Index(i64),
    Bool(bool),
    Buffer(BufferView),
    /// A disassociated descriptor or null heap pointer.
    Null,
    Shape(Vec<i64>),
}

impl RuntimeValue {
    pub fn i32(v: i64) -> Self {
        RuntimeValue::Int {
            value: wrap(v, 32),
            width: 32,
        }
    }

    pub fn i64(v: i64) -> Self {
        RuntimeValue::Int { value: v, width: 64 }
    }

    pub fn f64(v: f64) -> Self {
        RuntimeValue::Float { value: v, width: 64 }
    }

    /// Zero value stored in freshly allocated cells of type `t`.
    pub fn zero(t: &Type) -> Self {
        match t {
            Type::Integer(1) => RuntimeValue::Bool(false),
            Type::Integer(w) => RuntimeValue::Int { value: 0, width: *w },
            Type::Float(w) => RuntimeValue::Float { value: 0.0, width: *w },
            Type::Index => RuntimeValue::Index(0),
            _ => RuntimeValue::Null,
        }
    }

    /// Builds a scalar of type `t` from an integer, wrapping as needed.
    pub fn from_int(v: i64, t: &Type) -> Option<Self> {
        match t {
            Type::Integer(1) => Some(RuntimeValue::Bool(v & 1 != 0)),
            Type::Integer(w) => Some(RuntimeValue::Int {
                value: wrap(v, *w),
                width: *w,
            }),
            Type::Index => Some(RuntimeValue::Index(v)),
            Type::Float(w) => Some(RuntimeValue::Float {
                value: round_float(v as f64, *w),
                width: *w,
            }),
            _ => None,
        }
    }

    /// Integer payload of an integer, index or boolean value.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            RuntimeValue::Int { value, .. } | RuntimeValue::Index(value) => Some(*value),
            RuntimeValue::Bool(b) => Some(*b as i64),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            RuntimeValue::Float { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            RuntimeValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_view(&self) -> Option<&BufferView> {
        match self {
            RuntimeValue::Buffer(v) => Some(v),
            _ => None,
        }
    }

    /// True if the value is an element of `t` (scalars only).
    pub fn has_type(&self, t: &Type) -> bool {
        match (self, t) {
            (RuntimeValue::Bool(_), Type::Integer(1)) => true,
            (RuntimeValue::Int { width, .. }, Type::Integer(w)) => width == w && *w != 1,
            (RuntimeValue::Float { width, .. }, Type::Float(w)) => width == w,
            (RuntimeValue::Index(_), Type::Index) => true,
            _ => false,
        }
    }
}

impl fmt::Display for RuntimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeValue::Int { value, width } => write!(f, "i{width}:{value}"),
            RuntimeValue::Float { value, width } => write!(f, "f{width}:{}", crate::ir::format_float(*value)),
            RuntimeValue::Index(v) => write!(f, "index:{v}"),
            RuntimeValue::Bool(b) => write!(f, "i1:{}", *b as i64),
            RuntimeValue::Buffer(v) => write!(f, "buffer#{}", v.buffer),
            RuntimeValue::Null => f.write_str("null"),
            RuntimeValue::Shape(s) => write!(f, "shape{s:?}"),
        }
    }
}

/// Two's complement wraparound of `v` to `width` bits, sign-extended.
pub fn wrap(v: i64, width: u32) -> i64 {
    if width >= 64 || width == 0 {
        v
    } else {
        let shift = 64 - width;
        (v << shift) >> shift
    }
}

/// Zero-extended payload, for unsigned comparisons.
pub fn unsigned(v: i64, width: u32) -> u64 {
    if width >= 64 {
        v as u64
    } else {
        (v as u64) & ((1u64 << width) - 1)
    }
}

pub fn round_float(v: f64, width: u32) -> f64 {
    if width == 32 {
        v as f32 as f64
    } else {
        v
    }
}
