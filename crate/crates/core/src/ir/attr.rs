use std::fmt;

use super::types::Type;

/// Attribute values attached to operations.
#[derive(Clone, Debug)]
pub enum Attribute {
    Int(i64, Type),
    Float(f64, Type),
    String(String),
    Type(Type),
    Array(Vec<Attribute>),
    SymbolRef(String),
    Unit,
    DenseIndexArray(Vec<i64>),
}

impl Attribute {
    pub fn index(v: i64) -> Attribute {
        Attribute::Int(v, Type::Index)
    }

    pub fn str(s: impl Into<String>) -> Attribute {
        Attribute::String(s.into())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Attribute::Int(v, _) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Attribute::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Attribute::SymbolRef(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_type(&self) -> Option<&Type> {
        match self {
            Attribute::Type(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_dense(&self) -> Option<&[i64]> {
        match self {
            Attribute::DenseIndexArray(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Attribute]> {
        match self {
            Attribute::Array(v) => Some(v),
            _ => None,
        }
    }

    /// Whether an integer attribute value fits its declared width.
    pub fn int_fits(&self) -> bool {
        match self {
            Attribute::Int(v, Type::Integer(1)) => *v == 0 || *v == 1 || *v == -1,
            Attribute::Int(v, Type::Integer(w)) if *w < 64 => {
                let min = -(1i128 << (w - 1));
                let max = (1i128 << w) - 1;
                (*v as i128) >= min && (*v as i128) <= max
            }
            _ => true,
        }
    }
}

impl PartialEq for Attribute {
    fn eq(&self, other: &Self) -> bool {
        use Attribute::*;
        match (self, other) {
            (Int(a, ta), Int(b, tb)) => a == b && ta == tb,
            (Float(a, ta), Float(b, tb)) => a.to_bits() == b.to_bits() && ta == tb,
            (String(a), String(b)) => a == b,
            (Type(a), Type(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (SymbolRef(a), SymbolRef(b)) => a == b,
            (Unit, Unit) => true,
            (DenseIndexArray(a), DenseIndexArray(b)) => a == b,
            _ => false,
        }
    }
}

/// Prints a float so that it re-parses to the same bits and is lexically
/// distinguishable from an integer.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:?}");
        if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        format!("0x{:016X}", v.to_bits())
    }
}

pub(crate) fn is_bare_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$' || c == '.')
}

pub(crate) fn write_symbol(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_bare_identifier(name) {
        write!(f, "@{name}")
    } else {
        write!(f, "@{}", quote(name))
    }
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Int(v, Type::Integer(1)) => {
                f.write_str(if *v != 0 { "true" } else { "false" })
            }
            Attribute::Int(v, t) => write!(f, "{v} : {t}"),
            Attribute::Float(v, t) => write!(f, "{} : {t}", format_float(*v)),
            Attribute::String(s) => f.write_str(&quote(s)),
            Attribute::Type(t) => write!(f, "{t}"),
            Attribute::Array(items) => {
                f.write_str("[")?;
                super::types::write_list(f, items)?;
                f.write_str("]")
            }
            Attribute::SymbolRef(s) => write_symbol(f, s),
            Attribute::Unit => f.write_str("unit"),
            Attribute::DenseIndexArray(v) => {
                f.write_str("array<i64")?;
                for (i, x) in v.iter().enumerate() {
                    f.write_str(if i == 0 { ": " } else { ", " })?;
                    write!(f, "{x}")?;
                }
                f.write_str(">")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_attr_width_check() {
        assert!(Attribute::Int(127, Type::Integer(8)).int_fits());
        assert!(Attribute::Int(255, Type::Integer(8)).int_fits());
        assert!(Attribute::Int(-128, Type::Integer(8)).int_fits());
        assert!(!Attribute::Int(256, Type::Integer(8)).int_fits());
        assert!(!Attribute::Int(-129, Type::Integer(8)).int_fits());
        assert!(!Attribute::Int(2, Type::i1()).int_fits());
    }

    #[test]
    fn floats_always_look_like_floats() {
        assert_eq!(format_float(100.0), "100.0");
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(1e300), "1e300");
        assert_eq!(format_float(f64::INFINITY), "0x7FF0000000000000");
    }

    #[test]
    fn dense_array_spelling() {
        assert_eq!(Attribute::DenseIndexArray(vec![0, 1]).to_string(), "array<i64: 0, 1>");
        assert_eq!(Attribute::DenseIndexArray(vec![]).to_string(), "array<i64>");
    }
}
