use std::collections::{BTreeSet, HashMap};

use hmer_core::annotator::*;
use hmer_core::ink::{parse_inkml, write_inkml, SymbolInventory};
use hmer_core::nnet::{NnError, TrainConfig};
use hmer_core::synth::{random_corpus, render_latex, Grammar, Style, SynthSample, GLYPH_LABELS};
use hmer_core::{Expression, StrokeLabelGraph, SymbolNode, TraceId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Distributions looked up by trace group; unknown groups get a uniform one.
struct Scripted {
    inventory: SymbolInventory,
    table: HashMap<BTreeSet<TraceId>, Vec<f64>>,
}

impl Reclassifier for Scripted {
    fn inventory(&self) -> &SymbolInventory {
        &self.inventory
    }

    fn classify_groups(
        &self,
        _: &Expression,
        groups: &[BTreeSet<TraceId>],
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let n = self.inventory.len();
        Ok(groups
            .iter()
            .map(|g| {
                self.table
                    .get(g)
                    .cloned()
                    .unwrap_or_else(|| vec![1.0 / n as f64; n])
            })
            .collect())
    }
}

/// Distribution that ranks `labels` in the given order ahead of the rest.
fn ranking(inv: &SymbolInventory, labels: &[&str]) -> Vec<f64> {
    let mut p = vec![0.0; inv.len()];
    for (r, l) in labels.iter().enumerate() {
        p[inv.index_of(l).unwrap()] = 1.0 / (r + 2) as f64;
    }
    let z: f64 = p.iter().sum();
    p.iter().map(|x| x / z).collect()
}

fn sample(latex: &str, seed: u64) -> SynthSample {
    render_latex(
        latex,
        &Style::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn groups(slg: &StrokeLabelGraph) -> Vec<BTreeSet<TraceId>> {
    slg.nodes().iter().map(|n| n.trace_ids.clone()).collect()
}

#[test]
fn crohme_check_uses_groups_then_top10() {
    let s = sample("A_2>B", 1);
    let labels = ["A", "B", "2", ">", "x", "y", "z", "a", "b", "c", "n", "i"];
    let inv = SymbolInventory::from_labels(labels);
    let mut table = HashMap::new();
    for n in s.slg.nodes() {
        table.insert(n.trace_ids.clone(), ranking(&inv, &[n.label.as_str()]));
    }
    let stub = Scripted {
        inventory: inv.clone(),
        table: table.clone(),
    };
    let gt = groups(&s.slg);
    assert_eq!(
        crosscheck_crohme(&s.expr, &s.slg, Some(&gt), &stub).unwrap(),
        None
    );
    let mut merged = gt.clone();
    let last = merged.pop().unwrap();
    merged.last_mut().unwrap().extend(last);
    assert_eq!(
        crosscheck_crohme(&s.expr, &s.slg, Some(&merged), &stub).unwrap(),
        Some(RejectReason::GroupMismatch)
    );
    assert_eq!(
        crosscheck_crohme(&s.expr, &s.slg, None, &stub).unwrap(),
        None
    );

    let sub = s.slg.nodes().iter().find(|n| n.label == "2").unwrap();
    let mut others: Vec<&str> = labels.iter().copied().filter(|l| *l != "2").collect();
    others.truncate(10);
    let mut order = others.clone();
    order.push("2");
    let mut eleventh = table.clone();
    eleventh.insert(sub.trace_ids.clone(), ranking(&inv, &order));
    let stub11 = Scripted {
        inventory: inv.clone(),
        table: eleventh,
    };
    assert_eq!(
        crosscheck_crohme(&s.expr, &s.slg, None, &stub11).unwrap(),
        Some(RejectReason::Top10)
    );
    let mut order10 = others[..9].to_vec();
    order10.push("2");
    let mut tenth = table;
    tenth.insert(sub.trace_ids.clone(), ranking(&inv, &order10));
    let stub10 = Scripted {
        inventory: inv,
        table: tenth,
    };
    assert_eq!(
        crosscheck_crohme(&s.expr, &s.slg, None, &stub10).unwrap(),
        None
    );
}

#[test]
fn mathwriting_acceptance_matches_hand_count() {
    let inv = SymbolInventory::from_labels(GLYPH_LABELS.iter().copied());
    let corpus: Vec<SynthSample> = ["x+1", "a_2", "A>B", "n^2=4", "y-3"]
        .iter()
        .enumerate()
        .map(|(i, l)| sample(l, i as u64))
        .collect();
    let flips = [false, true, false, true, false];
    let mut accepted = 0;
    for (s, flip) in corpus.iter().zip(flips) {
        let mut table = HashMap::new();
        for (k, n) in s.slg.nodes().iter().enumerate() {
            let top = if flip && k == 1 {
                "z"
            } else {
                n.label.as_str()
            };
            table.insert(n.trace_ids.clone(), ranking(&inv, &[top, n.label.as_str()]));
        }
        let stub = Scripted {
            inventory: inv.clone(),
            table,
        };
        let verdict = crosscheck_mathwriting(&s.expr, &s.slg, &stub).unwrap();
        assert_eq!(verdict.is_some(), flip);
        if verdict.is_none() {
            accepted += 1;
            assert_eq!(
                crosscheck_crohme(&s.expr, &s.slg, None, &stub).unwrap(),
                None
            );
        } else {
            assert_eq!(verdict, Some(RejectReason::Top1));
        }
    }
    assert_eq!(accepted, 3);
}

fn toy_vocab() -> AnnotVocab {
    AnnotVocab::new(SymbolInventory::from_labels(GLYPH_LABELS.iter().copied()))
}

fn train_toy(corpus: &[SynthSample]) -> (AnnotNet, f64) {
    let labels: Vec<String> = GLYPH_LABELS.iter().map(|s| s.to_string()).collect();
    let cfg = AnnotNetConfig::toy(&labels);
    let mut steps = Vec::new();
    for s in corpus {
        steps
            .extend(training_steps(&s.expr, &s.slg, &s.latex, &toy_vocab(), cfg.resample).unwrap());
    }
    let tc = TrainConfig {
        epochs: 300,
        batch_size: 16,
        micro_batch: 0,
        lr: 1e-2,
        min_lr: 1e-3,
        target_accuracy: Some(1.0),
        seed: 1,
        ..TrainConfig::default()
    };
    let (net, rep) = train_annotnet(&steps, cfg, &tc).unwrap();
    (net, rep.accuracy)
}

#[test]
fn toy_model_aligns_its_training_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let corpus = random_corpus(&Grammar::default(), &Style::default(), 30, &mut rng);
    let (net, acc) = train_toy(&corpus);
    assert_eq!(acc, 1.0);
    for s in &corpus {
        let slg = annotate_expression(&s.expr, &s.latex, &net).unwrap();
        assert!(slg.same_structure(&s.slg), "{}", s.latex);
        slg.check_traces(&s.expr).unwrap();
    }
}

#[test]
fn corpus_run_counts_and_round_trips() {
    let fixtures = [sample("x+1", 10), sample("a_2>B", 11), sample("A_1", 12)];
    let (net, acc) = train_toy(&fixtures);
    assert_eq!(acc, 1.0);

    let input = tempfile::tempdir().unwrap();
    let output = tempfile::tempdir().unwrap();
    for (i, s) in fixtures.iter().enumerate().take(2) {
        let expr = s.expr.clone().with_latex_label(Some(s.latex.clone()));
        std::fs::write(
            input.path().join(format!("f{i}.inkml")),
            write_inkml(&expr, None).unwrap(),
        )
        .unwrap();
    }
    let bad = &fixtures[2];
    let mut nodes: Vec<SymbolNode> = bad.slg.nodes().to_vec();
    let moved: TraceId = *nodes[0].trace_ids.iter().next_back().unwrap();
    nodes[0].trace_ids.remove(&moved);
    nodes[1].trace_ids.insert(moved);
    let wrong = StrokeLabelGraph::new(nodes, bad.slg.edges().to_vec()).unwrap();
    std::fs::write(
        input.path().join("f2.inkml"),
        write_inkml(&bad.expr, Some(&wrong)).unwrap(),
    )
    .unwrap();
    std::fs::write(input.path().join("notes.txt"), "ignored").unwrap();

    let inv = SymbolInventory::from_labels(["x", "+", "1", "a", "2", ">", "B", "A"]);
    let stub = Scripted {
        inventory: inv,
        table: HashMap::new(),
    };
    let report =
        annotate_corpus(input.path(), &net, &Checker::Crohme(&stub), output.path()).unwrap();
    assert_eq!(report.counts(), (2, 1, 0), "{report:?}");
    assert_eq!(report.rejected_by_reason.get("group-mismatch"), Some(&1));
    assert!(report.to_text().contains("group-mismatch"));

    for (i, s) in fixtures.iter().enumerate().take(2) {
        let bytes = std::fs::read(output.path().join(format!("f{i}.inkml"))).unwrap();
        let doc = parse_inkml(&bytes).unwrap();
        let back = doc.slg.unwrap();
        assert_eq!(groups(&back), groups(&s.slg));
        assert!(back.same_structure(&s.slg));
    }
    assert!(!output.path().join("f2.inkml").exists());

    let empty = tempfile::tempdir().unwrap();
    let r = annotate_corpus(empty.path(), &net, &Checker::None, output.path()).unwrap();
    assert_eq!(r.counts(), (0, 0, 0));
}

#[test]
fn unreadable_files_are_failures() {
    let input = tempfile::tempdir().unwrap();
    std::fs::write(input.path().join("broken.inkml"), "<ink><trace>1 2,</ink").unwrap();
    let s = sample("x", 1);
    let bare = s.expr.clone().with_latex_label(None);
    std::fs::write(
        input.path().join("nolabel.inkml"),
        write_inkml(&bare, None).unwrap(),
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let oracle = OracleAnnot::new(&s.slg, toy_vocab());
    let r = annotate_corpus(input.path(), &oracle, &Checker::None, out.path()).unwrap();
    assert_eq!(r.counts(), (0, 0, 2));
}
