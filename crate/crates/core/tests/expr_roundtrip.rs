use bbp_core::expr::{BinaryOp, UnaryOp};
use bbp_core::sampling::{draw_base_sample, DomainBox, SamplingPlan};
use bbp_core::{parse, Expression};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expression> {
    prop_oneof![
        (0usize..4).prop_map(Expression::Var),
        (-100.0f64..100.0).prop_map(Expression::Const),
        (-5i32..6).prop_map(|v| Expression::Const(v as f64)),
    ]
}

fn tree() -> impl Strategy<Value = Expression> {
    let unary = prop_oneof![
        Just(UnaryOp::Neg),
        Just(UnaryOp::Sin),
        Just(UnaryOp::Cos),
        Just(UnaryOp::Exp),
        Just(UnaryOp::Ln),
        Just(UnaryOp::Sqrt),
    ];
    let binary = prop_oneof![
        Just(BinaryOp::Add),
        Just(BinaryOp::Sub),
        Just(BinaryOp::Mul),
        Just(BinaryOp::Div),
        Just(BinaryOp::Pow),
    ];
    leaf().prop_recursive(5, 40, 2, move |inner| {
        prop_oneof![
            (unary.clone(), inner.clone()).prop_map(|(op, e)| Expression::unary(op, e)),
            (binary.clone(), inner.clone(), inner).prop_map(|(op, a, b)| Expression::binary(op, a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Printing then parsing gives a tree that evaluates identically, and
    /// printing is a fixed point after one round.
    #[test]
    fn print_parse_round_trip(e in tree()) {
        let text = e.to_string();
        let back = parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text.clone());

        let plan = SamplingPlan::new(DomainBox::uniform(4, -3.0, 3.0).unwrap(), 50, 3).unwrap();
        let x = draw_base_sample(&plan).unwrap();
        let a = e.evaluate::<f64>(&x).unwrap();
        let b = back.evaluate::<f64>(&x).unwrap();
        prop_assert_eq!(&a.valid, &b.valid, "{}", text);
        for k in 0..x.nrows() {
            if a.valid[k] {
                prop_assert_eq!(a.values[k].to_bits(), b.values[k].to_bits(), "{} row {}", text, k);
            }
        }
    }
}

#[test]
fn appendix_style_text_parses() {
    let e = parse("2 * x1 * sin(x2 + x3) − cos x4").unwrap();
    assert_eq!(e.to_string(), "2 * x1 * sin(x2 + x3) - cos(x4)");
    assert!(parse("2 x1").is_err());
}
