mod common;

use common::{none_absorbed, random_graph, random_program, reference_execute};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgqa_core::program::{
    execute, parse_pseudocode, parse_semantic_string, render_program, render_semantic, Answer, Program, PROBLEMATIC,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn executor_agrees_with_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, "img", 8);
        let p = random_program(&mut rng, 5);
        let got = execute(&p, &g);
        let (trace, answer) = reference_execute(&p, &g);
        prop_assert_eq!(&got.trace, &trace);
        prop_assert_eq!(&got.answer, &answer);
        prop_assert!(none_absorbed(&got.trace));
        prop_assert_eq!(got.trace.len(), p.len());
        prop_assert_eq!(got.answer.is_problematic(), got.trace.last().unwrap().is_none());
    }

    #[test]
    fn text_formats_round_trip(seed in any::<u64>()) {
        let p = random_program(&mut ChaCha8Rng::seed_from_u64(seed), 6);
        prop_assert_eq!(&parse_pseudocode(&render_program(&p)).unwrap(), &p);
        prop_assert_eq!(&parse_semantic_string(&render_semantic(&p)).unwrap(), &p);
        let json = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(&serde_json::from_str::<Program>(&json).unwrap(), &p);
    }
}

#[test]
fn worked_semantic_example() {
    let p = parse_semantic_string("select: table → relate: on, subject, apple → exist: ?").unwrap();
    assert_eq!(
        render_program(&p),
        "r0 = select(table)\nr1 = relate(r0, on, subject, apple)\nr2 = exist(r1)"
    );
    assert_eq!(parse_semantic_string(&render_semantic(&p)).unwrap(), p);
    assert_eq!(parse_semantic_string("select: table -> relate: on, subject, apple -> exist: ?").unwrap(), p);
}

#[test]
fn malformed_inputs_are_rejected_with_a_position() {
    for bad in ["", "select table", "select: table → frobnicate: x", "exist: ?", "select: table → compare: color"] {
        assert!(parse_semantic_string(bad).is_err(), "{bad}");
    }
    let err = parse_pseudocode("r0 = select(table)\nr1 = relate(r9, on, subject, apple)").unwrap_err();
    assert!(err.to_string().contains("r9"), "{err}");
}

#[test]
fn problematic_answer_text() {
    assert_eq!(Answer::Problematic.render(), PROBLEMATIC);
    assert_eq!(PROBLEMATIC, "the question itself is problematic");
}
