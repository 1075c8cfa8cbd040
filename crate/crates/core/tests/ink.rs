use hmer_core::evalkit::compare_slg;
use hmer_core::ink::*;
use hmer_core::synth::{random_corpus, render_latex, Grammar, Style, SynthSample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixtures() -> Vec<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = random_corpus(&Grammar::default(), &Style::default(), 36, &mut rng);
    for l in ["A_2>B_2", "x", "\\frac{a}{b}+x^{2}", "\\sum_{i}^{n}x_{i}"] {
        out.push(render_latex(l, &Style::default(), &mut rng).unwrap());
    }
    out
}

#[test]
fn inkml_lg_round_trip_is_byte_exact() {
    let corpus = fixtures();
    assert!(corpus.len() >= 30);
    for s in &corpus {
        let expr = s.expr.clone().with_latex_label(Some(s.latex.clone()));
        let xml = write_inkml(&expr, Some(&s.slg)).unwrap();
        let doc = parse_inkml(xml.as_bytes()).unwrap();
        assert_eq!(doc.expression.traces(), s.expr.traces());
        let slg = doc.slg.expect("ground truth rebuilt");
        let t = compare_slg(&slg, &s.slg).unwrap();
        assert!(t.exp && slg.len() == s.slg.len(), "{}", s.latex);

        let lg = write_lg(&slg);
        let back = parse_lg(&lg).unwrap();
        assert!(back.same_structure(&slg));
        assert_eq!(write_lg(&back), lg);
    }
}

#[test]
fn latex_is_a_fixed_point() {
    for s in fixtures() {
        let latex = slg_to_latex(&s.slg).unwrap();
        let plan = parse_latex_structure(&latex).unwrap();
        assert_eq!(plan.len(), s.slg.len());
        assert_eq!(plan.to_latex().unwrap(), latex);
        assert_eq!(
            normalize_latex(&s.latex),
            normalize_latex(&latex),
            "{}",
            s.latex
        );
        let mathml = slg_to_mathml(&s.slg).unwrap();
        assert!(mathml.starts_with("<math"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn serde_and_lg_agree(seed in 0u64..100_000) {
        let s = random_corpus(&Grammar::default(), &Style::default(), 1, &mut ChaCha8Rng::seed_from_u64(seed)).remove(0);
        let json = serde_json::to_string(&s.slg).unwrap();
        let back: StrokeLabelGraph = serde_json::from_str(&json).unwrap();
        prop_assert!(back.same_structure(&s.slg));
        let lg = write_lg(&s.slg);
        prop_assert_eq!(write_lg(&parse_lg(&lg).unwrap()), lg);
    }
}
