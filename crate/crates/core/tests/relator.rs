use std::collections::BTreeSet;

use hmer_core::ink::{Expression, Point, RelationLabel, SymbolInventory, Trace, TraceId};
use hmer_core::nnet::TrainConfig;
use hmer_core::relator::*;
use hmer_core::synth::{random_corpus, Grammar, Style};
use hmer_core::Edge;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scores(n: usize, rng: &mut ChaCha8Rng, spread: f64) -> PairScores {
    let l: Vec<f64> = (0..n * n * 7 + n * 7)
        .map(|_| rng.gen_range(-spread..spread))
        .collect();
    scores_from_logits(n, &l)
}

#[test]
fn fuzz_decoded_trees_validate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10);
        let s = random_scores(n, &mut rng, 8.0);
        let e = decode_tree(&s);
        assert_eq!(e.len(), n);
        check_decoded(n, &e).unwrap();
    }
}

#[test]
fn decode_reaches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut close = 0;
    let total = 300;
    for _ in 0..total {
        let n = rng.gen_range(1..=6);
        let s = random_scores(n, &mut rng, 6.0);
        let dec = tree_score(&s, &decode_tree(&s));
        let (_, opt) = exhaustive_tree(&s);
        assert!(dec <= opt + 1e-9);
        if (dec - opt).exp() >= 0.95 {
            close += 1;
        }
    }
    assert!(close as f64 >= 0.9 * total as f64, "{close}/{total}");
}

#[test]
fn extreme_scores_still_decode() {
    let n = 5;
    let mut l = vec![0.0; n * n * 7 + n * 7];
    for (k, v) in l.iter_mut().enumerate() {
        *v = if k % 3 == 0 { 1e4 } else { -1e4 };
    }
    let s = scores_from_logits(n, &l);
    check_decoded(n, &decode_tree(&s)).unwrap();
    check_decoded(4, &decode_tree(&PairScores::empty(4))).unwrap();
}

proptest! {
    #[test]
    fn raising_a_selected_edge_keeps_it(seed in 0u64..10_000, n in 2usize..8, pick in 0usize..64, bump in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(n, &mut rng, 5.0);
        let edges = decode_tree(&s);
        let pairwise: Vec<&Edge> = edges.iter().filter(|e| e.label != RelationLabel::LineStart).collect();
        let e = *pairwise[pick % pairwise.len()];
        let (i, j) = match e.src {
            hmer_core::EdgeSource::Node(i) => (i as usize, e.dst as usize),
            hmer_core::EdgeSource::Root => unreachable!(),
        };
        let mut v = *s.pair(i, j);
        v[e.label.index()] += bump;
        let mut raised = s.clone();
        raised.set_pair(i, j, v);
        prop_assert!(decode_tree(&raised).contains(&e));
    }

    #[test]
    fn decode_is_deterministic_and_valid(seed in 0u64..10_000, n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(n, &mut rng, 10.0);
        let e = decode_tree(&s);
        prop_assert!(check_decoded(n, &e).is_ok());
        prop_assert_eq!(e, decode_tree(&s));
    }
}

#[test]
fn oracle_scores_reproduce_reference_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inv = SymbolInventory::from_labels(hmer_core::synth::GLYPH_LABELS.iter().copied());
    for s in random_corpus(&Grammar::default(), &Style::default(), 25, &mut rng) {
        let (symbols, ids) = reference_symbols(&s.expr, &s.slg, &inv).unwrap();
        let (_, edges) = relate(&OracleRelations::new(&s.slg), &symbols).unwrap();
        let mut got: Vec<Edge> = edges
            .iter()
            .map(|e| match e.src {
                hmer_core::EdgeSource::Root => Edge::root(ids[e.dst as usize]),
                hmer_core::EdgeSource::Node(i) => {
                    Edge::new(ids[i as usize], ids[e.dst as usize], e.label)
                }
            })
            .collect();
        let mut want = s.slg.edges().to_vec();
        got.sort_by_key(|e| e.dst);
        want.sort_by_key(|e| e.dst);
        assert_eq!(got, want, "{}", s.latex);
    }
}

#[test]
fn revise_with_unchanged_classes_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inv = SymbolInventory::from_labels(hmer_core::synth::GLYPH_LABELS.iter().copied());
    let cfg = RelNetConfig::toy(inv.len());
    let net = RelNet::new(cfg, 3);
    for s in random_corpus(&Grammar::default(), &Style::default(), 5, &mut rng) {
        let (symbols, _) = reference_symbols(&s.expr, &s.slg, &inv).unwrap();
        let groups: Vec<BTreeSet<TraceId>> = symbols
            .iter()
            .map(|x| x.traces.iter().map(|t| t.id()).collect())
            .collect();
        let probs: Vec<Vec<f64>> = symbols.iter().map(|x| x.probs.clone()).collect();
        let first = relate(&net, &symbols).unwrap();
        let second = revise_relations(&net, &s.expr, &groups, &probs, &inv).unwrap();
        assert_eq!(first, second);
    }
}

fn stroke(
    id: TraceId,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Trace {
    let pts = (0..6)
        .map(|k| {
            let t = k as f64 / 5.0;
            Point::new(
                x0 + w * t + rng.gen_range(-jitter..jitter),
                y0 + h * (t * 3.0).sin().abs() + rng.gen_range(-jitter..jitter),
            )
        })
        .collect();
    Trace::new(id, pts).unwrap()
}

fn one_hot(inv: &SymbolInventory, l: &str) -> Vec<f64> {
    let c = inv.index_of(l).unwrap();
    (0..inv.len())
        .map(|k| if k == c { 1.0 } else { 0.0 })
        .collect()
}

/// A small symbol written low after a base symbol is a subscript when read
/// as "2" and a baseline neighbour when read as "y", whose body hangs below
/// the baseline.
#[test]
fn corrected_class_turns_subscript_into_right() {
    let inv = SymbolInventory::from_labels(["x", "2", "y"]);
    let cfg = RelNetConfig::toy(inv.len());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let layout = |rng: &mut ChaCha8Rng, j: f64| {
        Expression::new(
            vec![
                stroke(0, 0.0, 0.0, 1.0, 1.0, j, rng),
                stroke(1, 1.2, 0.7, 0.6, 0.8, j, rng),
            ],
            "",
            None,
        )
        .unwrap()
    };
    let mut data = Vec::new();
    for _ in 0..6 {
        let e = layout(&mut rng, 0.03);
        for (l, rel) in [("2", RelationLabel::Sub), ("y", RelationLabel::Right)] {
            let syms = rel_symbols(
                &e,
                &[BTreeSet::from([0]), BTreeSet::from([1])],
                &[one_hot(&inv, "x"), one_hot(&inv, l)],
                &inv,
            );
            data.push((
                pair_input(None, &syms[0], &cfg),
                RelationLabel::LineStart.index(),
            ));
            data.push((pair_input(None, &syms[1], &cfg), 6));
            data.push((pair_input(Some(&syms[0]), &syms[1], &cfg), rel.index()));
        }
    }
    let tc = TrainConfig {
        epochs: 300,
        batch_size: 12,
        micro_batch: 0,
        lr: 1e-2,
        min_lr: 1e-3,
        target_accuracy: Some(1.0),
        seed: 2,
        ..TrainConfig::default()
    };
    let (net, rep) = train_relnet(&data, cfg, &tc).unwrap();
    assert_eq!(rep.accuracy, 1.0);

    let e = layout(&mut rng, 0.01);
    let groups = [BTreeSet::from([0]), BTreeSet::from([1])];
    let first = relate(
        &net,
        &rel_symbols(&e, &groups, &[one_hot(&inv, "x"), one_hot(&inv, "2")], &inv),
    )
    .unwrap()
    .1;
    assert_eq!(first[1], Edge::new(0, 1, RelationLabel::Sub));
    let revised = revise_relations(
        &net,
        &e,
        &groups,
        &[one_hot(&inv, "x"), one_hot(&inv, "y")],
        &inv,
    )
    .unwrap()
    .1;
    assert_eq!(revised[1], Edge::new(0, 1, RelationLabel::Right));
}
