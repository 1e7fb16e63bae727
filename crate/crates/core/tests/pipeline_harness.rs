use bbp_core::engines::EngineConfig;
use bbp_core::harness::{builtin_cases, run_benchmark, BenchOptions, BenchReport};
use bbp_core::pipeline::Timings;
use bbp_core::sampling::DomainBox;
use bbp_core::separability::{bict_additive, VerdictKind};
use bbp_core::{detect_structure, parse, DetectionConfig, ExprOracle, SeparableStructure};
use proptest::prelude::*;

fn mask_timings(mut r: BenchReport) -> BenchReport {
    for c in &mut r.cases {
        c.t1 = 0.0;
        c.t2 = 0.0;
        c.t3 = 0.0;
        c.t = 0.0;
        c.ratio = 0.0;
    }
    r
}

#[test]
fn ground_truth_structures_are_detected() {
    for case in builtin_cases() {
        let found = detect_structure(&case.oracle(), &case.domain, &DetectionConfig::default()).unwrap();
        assert_eq!(found.structure, case.structure, "case {}", case.id);
    }
}

#[test]
fn benchmark_is_deterministic_apart_from_timings() {
    let opts = BenchOptions {
        cases: vec![2, 8],
        engine: EngineConfig::library(),
        seed: 42,
        ..BenchOptions::default()
    };
    let a = run_benchmark(&opts).unwrap();
    let b = run_benchmark(&opts).unwrap();
    for c in &a.cases {
        assert!(c.structure_match && c.meets_tolerance, "{c:?}");
        assert!((0.0..=1.0).contains(&c.ratio));
        assert!(c.direct.is_none());
    }
    assert_eq!(mask_timings(a), mask_timings(b));
}

#[test]
fn unknown_case_is_rejected() {
    let opts = BenchOptions {
        cases: vec![11],
        ..BenchOptions::default()
    };
    assert!(run_benchmark(&opts).is_err());
}

fn partition() -> impl Strategy<Value = (usize, Vec<Vec<Vec<usize>>>)> {
    (1usize..7).prop_flat_map(|n| {
        (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), proptest::collection::vec(0usize..3, n), proptest::collection::vec(0usize..3, n))
    })
    .prop_map(|(n, order, block_of, factor_of)| {
        let mut blocks = vec![vec![Vec::new(); 3]; 3];
        for (k, v) in order.into_iter().enumerate() {
            blocks[block_of[k]][factor_of[k]].push(v);
        }
        let blocks = blocks
            .into_iter()
            .map(|b| b.into_iter().filter(|f: &Vec<usize>| !f.is_empty()).collect::<Vec<_>>())
            .filter(|b| !b.is_empty())
            .collect();
        (n, blocks)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// A partition is canonical whatever order its blocks and factors come in.
    #[test]
    fn structure_is_order_independent((n, blocks) in partition()) {
        let a = SeparableStructure::new(n, blocks.clone()).unwrap();
        let mut rev: Vec<Vec<Vec<usize>>> = blocks.into_iter().rev().collect();
        for b in &mut rev {
            b.reverse();
            for f in b.iter_mut() {
                f.reverse();
            }
        }
        let b = SeparableStructure::new(n, rev).unwrap();
        prop_assert_eq!(&a, &b);
        let vars: usize = a.iter_factors().map(|(_, _, f)| f.len()).sum();
        prop_assert_eq!(vars, n);
        let doc = a.document(1e-6, 1);
        prop_assert_eq!(doc.structure().unwrap(), a);
    }

    #[test]
    fn timings_sum_and_ratio(t1 in 0.0f64..10.0, t2 in 0.0f64..10.0, t3 in 0.0f64..10.0) {
        let t = Timings::new(t1, t2, t3);
        prop_assert_eq!(t.t, t1 + t2 + t3);
        let r = t.detection_ratio();
        prop_assert!((0.0..=1.0).contains(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// A sum of one-variable shapes is always additively separable.
    #[test]
    fn sums_of_univariate_shapes_are_additive(
        a in 0.5f64..2.0, b in -1.0f64..1.0, c in 0.3f64..1.0, k in 1u32..4,
    ) {
        let text = format!("{a} * sin({b} * x1 + 0.3) + exp({c} * x2) + x1^{k}");
        let oracle = ExprOracle::new(parse(&text).unwrap(), 2).unwrap();
        let domain = DomainBox::uniform(2, -3.0, 3.0).unwrap();
        let v = bict_additive(&oracle, &[1], &domain, &DetectionConfig::default()).unwrap();
        prop_assert_eq!(v.kind, VerdictKind::AdditiveSeparable, "{}", text);
    }
}
