mod common;

use std::sync::OnceLock;

use fir2std::interp::{self, Observed, RuntimeValue};
use fir2std::ir::{column_major_to_row_major, Module};
use fir2std::lowering::lower_module;
use fir2std::passes;
use fir2std::text::{parse_module, print_module};
use proptest::prelude::*;

use common::*;

fn runtime_loop() -> &'static Module {
    static M: OnceLock<Module> = OnceLock::new();
    M.get_or_init(|| lower_module(&parse(&loop_probe(None))).unwrap())
}

fn fixture_texts() -> &'static Vec<String> {
    static T: OnceLock<Vec<String>> = OnceLock::new();
    T.get_or_init(|| all_ir_files().into_iter().map(|(_, t)| t).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lowered_loop_visits_the_fortran_sequence(l in -15i64..=15, u in -15i64..=15, s in prop_oneof![-7i64..=-1, 1i64..=7]) {
        let trips = ((u - l + s) / s).max(0);
        let out = interp::run_module(runtime_loop(), "main", vec![RuntimeValue::i32(l), RuntimeValue::i32(u), RuntimeValue::i32(s)]).unwrap();
        prop_assert_eq!(out.results[0].as_int(), Some(trips));
        let cells = &out.final_states["_QFEseq"][0];
        for k in 0..trips as usize {
            prop_assert_eq!(&cells[k], &Observed::Scalar(RuntimeValue::i32(l + k as i64 * s)));
        }
    }

    #[test]
    fn integer_reductions_match_folds(v in prop::collection::vec(any::<i32>(), 1..20), seed in any::<u64>()) {
        let w: Vec<i32> = v.iter().enumerate().map(|(i, x)| x.rotate_left((seed % 31) as u32 + i as u32)).collect();
        let cases: [(&str, Option<&[i32]>, i32); 4] = [
            ("sum", None, v.iter().fold(0i32, |a, x| a.wrapping_add(*x))),
            ("product", None, v.iter().fold(1i32, |a, x| a.wrapping_mul(*x))),
            ("maxval", None, *v.iter().max().unwrap()),
            ("dot_product", Some(&w), v.iter().zip(&w).fold(0i32, |a, (x, y)| a.wrapping_add(x.wrapping_mul(*y)))),
        ];
        for (op, other, want) in cases {
            let src = parse(&reduction_program(op, &v, other));
            let low = lower_module(&src).unwrap();
            for m in [&src, &low] {
                let out = interp::run_module(m, "main", vec![]).unwrap();
                prop_assert_eq!(&out.results, &vec![RuntimeValue::i32(want as i64)], "{}", op);
            }
        }
    }

    #[test]
    fn float_constants_round_trip(x in any::<f64>()) {
        let src = format!("func.func @f() -> f64 {{\n  %0 = arith.constant {} : f64\n  func.return %0 : f64\n}}\n", fir2std::ir::format_float(x));
        let m = parse_module(&src).unwrap();
        let out = interp::run_module(&m, "f", vec![]).unwrap();
        let got = out.results[0].as_float().unwrap();
        prop_assert!(got.to_bits() == x.to_bits() || (got.is_nan() && x.is_nan()));
        prop_assert_eq!(print_module(&m), src);
    }

    #[test]
    fn fortran_order_is_a_permutation(shape in prop::collection::vec(1i64..5, 1..4)) {
        let n: i64 = shape.iter().product();
        let mut seen: Vec<usize> = (0..n as usize).map(|i| column_major_to_row_major(&shape, i)).collect();
        seen.sort();
        prop_assert_eq!(seen, (0..n as usize).collect::<Vec<_>>());
    }

    #[test]
    fn edited_text_never_crashes_the_parser(which in any::<prop::sample::Index>(), at in any::<prop::sample::Index>(), len in 0usize..6, ins in "[ -~\n]{0,4}") {
        let text = which.get(fixture_texts());
        let mut cut = at.index(text.len());
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        let mut end = (cut + len).min(text.len());
        while !text.is_char_boundary(end) {
            end -= 1;
        }
        let edited = format!("{}{}{}", &text[..cut], ins, &text[end..]);
        match parse_module(&edited) {
            Ok(m) => {
                let once = print_module(&m);
                let twice = print_module(&parse_module(&once).unwrap());
                prop_assert_eq!(once, twice);
            }
            Err(e) => {
                prop_assert!(e.span.start <= edited.len() && e.span.line >= 1 && e.span.column >= 1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn static_promotion_follows_the_extents(r in 1usize..9, c in 1usize..9, runtime in any::<bool>()) {
        let src = fixture("static_128.fir");
        let src = if runtime {
            src.replace("%n = arith.constant 128 : index", &"%n = \"arith.addi\"(%nn, %nn) : (index, index) -> index".to_string())
        } else {
            src.replace("%n = arith.constant 128 : index", &format!("%n = arith.constant {r} : index"))
        };
        let low = lower_module(&parse(&src)).unwrap();
        let mut m = low.clone();
        let res = passes::promote_static_shapes(&mut m);
        let text = print_module(&m);
        if runtime {
            prop_assert!(!res.changed);
        } else {
            prop_assert_eq!(res.stat("shapes_promoted"), 1);
            let promoted = format!("memref<{r}x{r}xf64>");
            prop_assert!(text.contains(&promoted), "{}", text);
        }
        let args = [RuntimeValue::i32(c as i64)];
        prop_assert_eq!(interp::compare_runs(&low, &m, "main", &args, 0.0), Ok(interp::Verdict::Equal));
    }
}
