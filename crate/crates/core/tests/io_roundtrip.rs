mod common;

use common::random_instance;
use layerdp::io::{parse_mechanism, parse_space, MechanismDoc, SpaceDoc, SpaceInput};
use layerdp::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mechanism_files_round_trip(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let inst = random_instance(&mut rng, 8, 8);
        let (seq, _) = discretize(&inst.densities, inst.epsilon, Normalization::Global).unwrap();
        let init = extract_initial_values(&seq, &inst.spaces).unwrap();
        let doc = MechanismDoc::from_initial(&init, &inst.spaces);
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let back = parse_mechanism(&text).unwrap();
        prop_assert_eq!(back.to_initial(&inst.spaces).unwrap(), init);
        // writing again gives the same bytes
        prop_assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn space_files_round_trip(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let inst = random_instance(&mut rng, 8, 8);
        let text = serde_json::to_string(&SpaceDoc::from_spaces(&inst.spaces, &inst.f)).unwrap();
        let (spaces, f) = match parse_space(&text).unwrap() {
            SpaceInput::Finite(doc) => doc.build().unwrap(),
            other => panic!("parsed as {other:?}"),
        };
        prop_assert_eq!(spaces.datasets.ids(), inst.spaces.datasets.ids());
        prop_assert_eq!(spaces.values.points(), inst.spaces.values.points());
        prop_assert_eq!(f.images(), inst.f.images());
        for x in 0..spaces.datasets.len() {
            prop_assert_eq!(spaces.datasets.row(x), inst.spaces.datasets.row(x));
        }
    }
}

#[test]
fn graph_cache_round_trips() {
    let u = enumerate_graphs(5).unwrap();
    let text = serde_json::to_string(&u.to_cache()).unwrap();
    match parse_space(&text).unwrap() {
        SpaceInput::Graphs(v) => {
            assert_eq!(v.len(), u.len());
            for a in 0..u.len() {
                for b in 0..u.len() {
                    assert_eq!(u.dist(a, b), v.dist(a, b));
                }
            }
        }
        other => panic!("parsed as {other:?}"),
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(matches!(parse_space("{"), Err(Error::Malformed(_))));
    assert!(matches!(parse_space("{\"x\": 1}"), Err(Error::Malformed(_))));
    assert!(matches!(parse_mechanism("[]"), Err(Error::Malformed(_))));
}
