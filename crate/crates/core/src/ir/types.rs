use std::fmt;

/// One dimension of a shaped type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    Static(i64),
    Dynamic,
}

impl Dim {
    pub fn as_static(self) -> Option<i64> {
        match self {
            Dim::Static(n) => Some(n),
            Dim::Dynamic => None,
        }
    }
}

/// Types of both dialect families.
///
/// `i1` doubles as the boolean type. Memrefs carry no layout: every memref
/// may be a strided view at runtime.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Integer(u32),
    Float(u32),
    Index,
    MemRef { shape: Vec<Dim>, element: Box<Type> },
    FirRef(Box<Type>),
    FirHeap(Box<Type>),
    FirArray { shape: Vec<Dim>, element: Box<Type> },
    FirShape(usize),
    FirDerived { name: String, members: Vec<(String, Type)> },
    Function { inputs: Vec<Type>, results: Vec<Type> },
}

impl Type {
    pub fn i1() -> Type {
        Type::Integer(1)
    }

    pub fn i32() -> Type {
        Type::Integer(32)
    }

    pub fn i64() -> Type {
        Type::Integer(64)
    }

    pub fn f32() -> Type {
        Type::Float(32)
    }

    pub fn f64() -> Type {
        Type::Float(64)
    }

    pub fn memref(shape: Vec<Dim>, element: Type) -> Type {
        Type::MemRef {
            shape,
            element: Box::new(element),
        }
    }

    pub fn scalar_memref(element: Type) -> Type {
        Type::memref(Vec::new(), element)
    }

    pub fn fir_ref(inner: Type) -> Type {
        Type::FirRef(Box::new(inner))
    }

    pub fn fir_heap(inner: Type) -> Type {
        Type::FirHeap(Box::new(inner))
    }

    pub fn fir_array(shape: Vec<Dim>, element: Type) -> Type {
        Type::FirArray {
            shape,
            element: Box::new(element),
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::Integer(_))
    }

    pub fn is_bool(&self) -> bool {
        matches!(self, Type::Integer(1))
    }

    pub fn is_float(&self) -> bool {
        matches!(self, Type::Float(_))
    }

    pub fn is_index(&self) -> bool {
        matches!(self, Type::Index)
    }

    pub fn is_memref(&self) -> bool {
        matches!(self, Type::MemRef { .. })
    }

    /// Integer, float or index: the values arithmetic operates on.
    pub fn is_scalar(&self) -> bool {
        self.is_integer() || self.is_float() || self.is_index()
    }

    /// Shape of a memref or fir array, `None` for anything else.
    pub fn shape(&self) -> Option<&[Dim]> {
        match self {
            Type::MemRef { shape, .. } | Type::FirArray { shape, .. } => Some(shape),
            _ => None,
        }
    }

    pub fn rank(&self) -> Option<usize> {
        self.shape().map(<[Dim]>::len)
    }

    /// Element type of a memref or fir array.
    pub fn element(&self) -> Option<&Type> {
        match self {
            Type::MemRef { element, .. } | Type::FirArray { element, .. } => Some(element),
            _ => None,
        }
    }

    /// Pointee of `!fir.ref` / `!fir.heap`.
    pub fn pointee(&self) -> Option<&Type> {
        match self {
            Type::FirRef(t) | Type::FirHeap(t) => Some(t),
            _ => None,
        }
    }

    pub fn has_static_shape(&self) -> bool {
        self.shape()
            .map(|s| s.iter().all(|d| matches!(d, Dim::Static(_))))
            .unwrap_or(false)
    }

    /// Number of elements of a statically shaped memref or array.
    pub fn static_len(&self) -> Option<i64> {
        let shape = self.shape()?;
        shape
            .iter()
            .map(|d| d.as_static())
            .try_fold(1i64, |acc, d| d.map(|d| acc * d))
    }

    pub fn int_width(&self) -> Option<u32> {
        match self {
            Type::Integer(w) | Type::Float(w) => Some(*w),
            _ => None,
        }
    }
}

fn write_dims(f: &mut fmt::Formatter<'_>, shape: &[Dim]) -> fmt::Result {
    for d in shape {
        match d {
            Dim::Static(n) => write!(f, "{n}x")?,
            Dim::Dynamic => f.write_str("?x")?,
        }
    }
    Ok(())
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Integer(w) => write!(f, "i{w}"),
            Type::Float(w) => write!(f, "f{w}"),
            Type::Index => f.write_str("index"),
            Type::MemRef { shape, element } => {
                f.write_str("memref<")?;
                write_dims(f, shape)?;
                write!(f, "{element}>")
            }
            Type::FirRef(t) => write!(f, "!fir.ref<{t}>"),
            Type::FirHeap(t) => write!(f, "!fir.heap<{t}>"),
            Type::FirArray { shape, element } => {
                f.write_str("!fir.array<")?;
                write_dims(f, shape)?;
                write!(f, "{element}>")
            }
            Type::FirShape(n) => write!(f, "!fir.shape<{n}>"),
            Type::FirDerived { name, members } => {
                write!(f, "!fir.type<{name}{{")?;
                for (i, (m, t)) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{m}:{t}")?;
                }
                f.write_str("}>")
            }
            Type::Function { inputs, results } => {
                f.write_str("(")?;
                write_list(f, inputs)?;
                f.write_str(") -> ")?;
                if results.len() == 1 && !matches!(results[0], Type::Function { .. }) {
                    write!(f, "{}", results[0])
                } else {
                    f.write_str("(")?;
                    write_list(f, results)?;
                    f.write_str(")")
                }
            }
        }
    }
}

pub(crate) fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, t) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{t}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_matches_mlir_spelling() {
        let t = Type::memref(vec![Dim::Dynamic, Dim::Dynamic], Type::f64());
        assert_eq!(t.to_string(), "memref<?x?xf64>");
        let outer = Type::scalar_memref(Type::memref(vec![Dim::Dynamic], Type::i32()));
        assert_eq!(outer.to_string(), "memref<memref<?xi32>>");
        let r = Type::fir_ref(Type::fir_heap(Type::fir_array(vec![Dim::Dynamic], Type::i32())));
        assert_eq!(r.to_string(), "!fir.ref<!fir.heap<!fir.array<?xi32>>>");
        let d = Type::FirDerived {
            name: "point".into(),
            members: vec![("a".into(), Type::i32()), ("b".into(), Type::f64())],
        };
        assert_eq!(d.to_string(), "!fir.type<point{a:i32,b:f64}>");
        let ft = Type::Function {
            inputs: vec![Type::i32()],
            results: vec![],
        };
        assert_eq!(ft.to_string(), "(i32) -> ()");
    }

    #[test]
    fn static_len_requires_all_static_dims() {
        let t = Type::memref(vec![Dim::Static(128), Dim::Static(128)], Type::f64());
        assert_eq!(t.static_len(), Some(16384));
        let t = Type::memref(vec![Dim::Static(4), Dim::Dynamic], Type::f64());
        assert_eq!(t.static_len(), None);
        assert_eq!(Type::scalar_memref(Type::i32()).static_len(), Some(1));
    }
}
