use moralframe_core::prompt::{
    count_explanation_lines, count_shots, parse_completion, render_parse_roundtrip, render_prompt, PromptTemplate,
};
use moralframe_testkit::cases::parse_cases;
use moralframe_testkit::synth;

#[test]
fn reference_completions_parse_to_their_frames() {
    for case in parse_cases() {
        let frame = parse_completion(case.completion, &case.item).unwrap_or_else(|e| panic!("{}: {e}", case.name));
        let want = case.expected();
        assert!(frame.matches(&want), "{}: got {:?}", case.name, frame);
    }
}

#[test]
fn every_synthetic_completion_style_round_trips() {
    let items = synth::corpus(200, 3, "rt");
    for (i, s) in items.iter().enumerate() {
        for style in 0..3 {
            let text = synth::completion_text(&s.truth, style + i);
            let frame = parse_completion(&text, &s.item).unwrap_or_else(|e| panic!("{} style {style}: {e}", s.item.id));
            assert!(frame.matches(&s.truth), "{} style {style}", s.item.id);
        }
        assert!(render_parse_roundtrip(&s.truth, &s.item).unwrap().matches(&s.truth));
    }
}

#[test]
fn synthetic_posts_render_into_the_full_protocol() {
    let template = PromptTemplate::default_protocol();
    for s in synth::corpus(20, 5, "p") {
        let prompt = render_prompt(&template, &s.item).unwrap();
        assert!(prompt.contains(&s.item.text));
        assert_eq!(count_shots(&prompt), 7);
        assert_eq!(count_explanation_lines(&prompt), 14);
    }
}

#[test]
fn random_valid_frames_round_trip_exactly() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for s in synth::corpus(300, 17, "g") {
        let frame = moralframe_testkit::differential::random_valid_frame(&mut rng, &s.item);
        assert_eq!(render_parse_roundtrip(&frame, &s.item).unwrap(), frame, "{}", s.item.id);
    }
}
