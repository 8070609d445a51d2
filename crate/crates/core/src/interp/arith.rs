//! Scalar semantics shared by the op interpreter and the intrinsic folds.

use super::value::{round_float, unsigned, wrap, RuntimeValue};
use crate::ir::Type;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArithError {
    DivisionByZero,
    TypeMismatch(String),
}

fn int_parts(a: &RuntimeValue) -> Option<(i64, Option<u32>)> {
    match a {
        RuntimeValue::Int { value, width } => Some((*value, Some(*width))),
        RuntimeValue::Index(v) => Some((*v, None)),
        RuntimeValue::Bool(b) => Some((*b as i64, Some(1))),
        _ => None,
    }
}

fn make_int(v: i64, width: Option<u32>) -> RuntimeValue {
    match width {
        None => RuntimeValue::Index(v),
        Some(1) => RuntimeValue::Bool(v & 1 != 0),
        Some(w) => RuntimeValue::Int {
            value: wrap(v, w),
            width: w,
        },
    }
}

fn maximumf(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if a == 0.0 && b == 0.0 {
        if a.is_sign_positive() { a } else { b }
    } else {
        a.max(b)
    }
}

/// Evaluates a binary arith op on two runtime values of the same type.
pub fn binop(name: &str, a: &RuntimeValue, b: &RuntimeValue) -> Result<RuntimeValue, ArithError> {
    if let (RuntimeValue::Float { value: x, width }, RuntimeValue::Float { value: y, .. }) = (a, b) {
        let r = match name {
            "arith.addf" => x + y,
            "arith.subf" => x - y,
            "arith.mulf" => x * y,
            "arith.divf" => x / y,
            "arith.maximumf" => maximumf(*x, *y),
            _ => return Err(ArithError::TypeMismatch(format!("{name} on floats"))),
        };
        return Ok(RuntimeValue::Float {
            value: round_float(r, *width),
            width: *width,
        });
    }
    let (Some((x, w)), Some((y, _))) = (int_parts(a), int_parts(b)) else {
        return Err(ArithError::TypeMismatch(format!("{name} on {a} and {b}")));
    };
    let r = match name {
        "arith.addi" => x.wrapping_add(y),
        "arith.subi" => x.wrapping_sub(y),
        "arith.muli" => x.wrapping_mul(y),
        "arith.divsi" => {
            if y == 0 {
                return Err(ArithError::DivisionByZero);
            }
            if w == Some(1) {
                x
            } else {
                x.wrapping_div(y)
            }
        }
        "arith.remsi" => {
            if y == 0 {
                return Err(ArithError::DivisionByZero);
            }
            if w == Some(1) {
                0
            } else {
                x.wrapping_rem(y)
            }
        }
        "arith.andi" => x & y,
        "arith.ori" => x | y,
        "arith.maxsi" => x.max(y),
        "arith.minsi" => x.min(y),
        _ => return Err(ArithError::TypeMismatch(format!("{name} on integers"))),
    };
    Ok(make_int(r, w))
}

pub fn cmpi(pred: &str, a: &RuntimeValue, b: &RuntimeValue) -> Result<bool, ArithError> {
    let (Some((x, w)), Some((y, _))) = (int_parts(a), int_parts(b)) else {
        return Err(ArithError::TypeMismatch(format!("cmpi on {a} and {b}")));
    };
    let w = w.unwrap_or(64);
    let (ux, uy) = (unsigned(x, w), unsigned(y, w));
    Ok(match pred {
        "eq" => x == y,
        "ne" => x != y,
        "slt" => x < y,
        "sle" => x <= y,
        "sgt" => x > y,
        "sge" => x >= y,
        "ult" => ux < uy,
        "ule" => ux <= uy,
        "ugt" => ux > uy,
        "uge" => ux >= uy,
        p => return Err(ArithError::TypeMismatch(format!("unknown predicate {p}"))),
    })
}

pub fn cmpf(pred: &str, a: &RuntimeValue, b: &RuntimeValue) -> Result<bool, ArithError> {
    let (Some(x), Some(y)) = (a.as_float(), b.as_float()) else {
        return Err(ArithError::TypeMismatch(format!("cmpf on {a} and {b}")));
    };
    let unordered = x.is_nan() || y.is_nan();
    let (ordered_result, unordered_pred) = match pred {
        "oeq" => (x == y, false),
        "one" => (x != y, false),
        "olt" => (x < y, false),
        "ole" => (x <= y, false),
        "ogt" => (x > y, false),
        "oge" => (x >= y, false),
        "ueq" => (x == y, true),
        "une" => (x != y, true),
        "ult" => (x < y, true),
        "ule" => (x <= y, true),
        "ugt" => (x > y, true),
        "uge" => (x >= y, true),
        p => return Err(ArithError::TypeMismatch(format!("unknown predicate {p}"))),
    };
    Ok(if unordered { unordered_pred } else { ordered_result })
}

/// Converts between integer and index types.
pub fn cast(v: &RuntimeValue, to: &Type) -> Result<RuntimeValue, ArithError> {
    let Some((x, _)) = int_parts(v) else {
        return Err(ArithError::TypeMismatch(format!("cast of {v}")));
    };
    RuntimeValue::from_int(x, to).ok_or_else(|| ArithError::TypeMismatch(format!("cast to {to}")))
}

pub fn sitofp(v: &RuntimeValue, to: &Type) -> Result<RuntimeValue, ArithError> {
    match (int_parts(v), to) {
        (Some((x, _)), Type::Float(w)) => Ok(RuntimeValue::Float {
            value: round_float(x as f64, *w),
            width: *w,
        }),
        _ => Err(ArithError::TypeMismatch(format!("sitofp of {v}"))),
    }
}

/// Truncates toward zero, saturating at the bounds of the target width.
pub fn fptosi(v: &RuntimeValue, to: &Type) -> Result<RuntimeValue, ArithError> {
    match (v, to) {
        (RuntimeValue::Float { value, .. }, Type::Integer(w)) if !value.is_nan() => {
            let (lo, hi) = if *w >= 64 {
                (i64::MIN, i64::MAX)
            } else {
                (-(1i64 << (w - 1)), (1i64 << (w - 1)) - 1)
            };
            let x = value.trunc().clamp(lo as f64, hi as f64) as i64;
            RuntimeValue::from_int(x, to).ok_or_else(|| ArithError::TypeMismatch(format!("fptosi to {to}")))
        }
        _ => Err(ArithError::TypeMismatch(format!("fptosi of {v}"))),
    }
}

/// The op a reduction intrinsic folds with, for element type `t`.
pub fn reduction_op(intrinsic: &str, t: &Type) -> Option<&'static str> {
    let float = t.is_float();
    Some(match (intrinsic, float) {
        ("sum", false) => "arith.addi",
        ("sum", true) => "arith.addf",
        ("product", false) => "arith.muli",
        ("product", true) => "arith.mulf",
        ("maxval", false) => "arith.maxsi",
        ("maxval", true) => "arith.maximumf",
        _ => return None,
    })
}

/// Neutral starting value of a reduction over element type `t`.
pub fn reduction_init(intrinsic: &str, t: &Type) -> Option<RuntimeValue> {
    match (intrinsic, t) {
        ("sum", _) => Some(RuntimeValue::zero(t)),
        ("product", Type::Float(w)) => Some(RuntimeValue::Float { value: 1.0, width: *w }),
        ("product", _) => RuntimeValue::from_int(1, t),
        ("maxval", Type::Float(w)) => Some(RuntimeValue::Float {
            value: f64::NEG_INFINITY,
            width: *w,
        }),
        ("maxval", Type::Integer(w)) => RuntimeValue::from_int(if *w >= 64 { i64::MIN } else { -(1i64 << (w - 1)) }, t),
        ("maxval", Type::Index) => Some(RuntimeValue::Index(i64::MIN)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i32_add_wraps() {
        let r = binop("arith.addi", &RuntimeValue::i32(i32::MAX as i64), &RuntimeValue::i32(1)).unwrap();
        assert_eq!(r, RuntimeValue::i32(i32::MIN as i64));
    }

    #[test]
    fn i8_mul_wraps() {
        let a = RuntimeValue::Int { value: 16, width: 8 };
        let r = binop("arith.muli", &a, &a).unwrap();
        assert_eq!(r.as_int(), Some(0));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        assert_eq!(
            binop("arith.divsi", &RuntimeValue::i32(1), &RuntimeValue::i32(0)),
            Err(ArithError::DivisionByZero)
        );
        let r = binop("arith.divsi", &RuntimeValue::i32(i32::MIN as i64), &RuntimeValue::i32(-1)).unwrap();
        assert_eq!(r, RuntimeValue::i32(i32::MIN as i64));
        assert_eq!(binop("arith.divsi", &RuntimeValue::i32(-7), &RuntimeValue::i32(2)).unwrap(), RuntimeValue::i32(-3));
    }

    #[test]
    fn unsigned_compare_uses_width() {
        let m1 = RuntimeValue::i32(-1);
        let one = RuntimeValue::i32(1);
        assert!(cmpi("ugt", &m1, &one).unwrap());
        assert!(cmpi("slt", &m1, &one).unwrap());
    }

    #[test]
    fn f32_rounds_each_result() {
        let a = RuntimeValue::Float { value: 0.1f32 as f64, width: 32 };
        let r = binop("arith.addf", &a, &a).unwrap();
        assert_eq!(r.as_float(), Some((0.1f32 + 0.1f32) as f64));
    }

    #[test]
    fn maxval_neutral_is_type_minimum() {
        assert_eq!(reduction_init("maxval", &Type::i32()), Some(RuntimeValue::i32(i32::MIN as i64)));
        assert_eq!(reduction_init("product", &Type::i32()), Some(RuntimeValue::i32(1)));
    }
}
