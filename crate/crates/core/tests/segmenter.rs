use std::collections::BTreeSet;

use hmer_core::segmenter::*;
use hmer_core::synth::{random_corpus, Grammar, Style};
use hmer_core::toy::{segmentation_corpus, segnet_train};
use hmer_core::TraceId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn groups(gs: Vec<Vec<TraceId>>) -> BTreeSet<BTreeSet<TraceId>> {
    gs.into_iter().map(|g| g.into_iter().collect()).collect()
}

#[test]
fn toy_model_overfits_its_windows() {
    let corpus: Vec<_> = segmentation_corpus(1)
        .into_iter()
        .map(|s| (s.expr, s.slg))
        .collect();
    assert_eq!(corpus.len(), 30);
    let (net, rep) = train_segnet(&corpus, SegNetConfig::toy(), &segnet_train(1)).unwrap();
    assert_eq!(rep.accuracy, 1.0, "{rep:?}");
    for (expr, slg) in &corpus {
        let want: BTreeSet<BTreeSet<TraceId>> =
            slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
        assert_eq!(groups(segment_expression(expr, &net).unwrap()), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn oracle_segmentation_partitions_the_traces(seed in 0u64..100_000) {
        let s = random_corpus(&Grammar::default(), &Style::default(), 1, &mut ChaCha8Rng::seed_from_u64(seed)).remove(0);
        let got = segment_expression(&s.expr, &OracleMask::new(&s.slg)).unwrap();
        let flat: Vec<TraceId> = got.iter().flatten().copied().collect();
        prop_assert_eq!(flat.len(), s.expr.traces().len());
        let want: BTreeSet<BTreeSet<TraceId>> = s.slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
        prop_assert_eq!(groups(got), want);
        let st = sorting_stats(&s.expr, &s.slg, &SegOptions::default());
        prop_assert_eq!(st.windows, s.slg.len());
    }
}
