//! Micro-corpora and small training recipes for overfit runs.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotator::{
    train_annotnet, training_steps, AnnotNet, AnnotNetConfig, AnnotVocab, Reclassifier,
};
use crate::classifier::{
    baseline_order, expression_symbols, featurize_symbol, train_classifier, ClassifierReport,
    DualNet, DualNetConfig, LabeledSymbol, StructMask,
};
use crate::corrector::{
    corr_sample, train_corrector, CorrNet, CorrNetConfig, CorrReport, CorrSample, CorrSymbol,
};
use crate::ink::{BBox, RelationLabel, SymbolId, SymbolInventory, TraceId};
use crate::nnet::{save_model, NnError, TrainConfig, TrainReport};
use crate::pipeline::Models;
use crate::relator::{rel_symbols, train_relnet, training_pairs, PairInput, RelNet, RelNetConfig};
use crate::segmenter::{train_segnet, SegNet, SegNetConfig};
use crate::synth::{random_corpus, render_latex, Grammar, Style, SynthSample, GLYPH_LABELS};

pub fn glyph_inventory() -> SymbolInventory {
    SymbolInventory::from_labels(GLYPH_LABELS.iter().copied())
}

fn corpus(grammar: &Grammar, n: usize, seed: u64) -> Vec<SynthSample> {
    random_corpus(
        grammar,
        &Style::default(),
        n,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

/// 30 short expressions without fractions or sums.
pub fn segmentation_corpus(seed: u64) -> Vec<SynthSample> {
    let g = Grammar {
        max_terms: 2,
        p_frac: 0.0,
        p_sum: 0.0,
        ..Grammar::default()
    };
    corpus(&g, 30, seed)
}

pub const GLYPH_CLASSES: [&str; 10] = ["0", "1", "2", "3", "x", "y", "a", "+", "=", "("];

/// 20 renderings of each of ten isolated glyphs.
pub fn glyph_corpus(
    seed: u64,
    features: &crate::classifier::FeatureOptions,
) -> (SymbolInventory, Vec<LabeledSymbol>) {
    let inv = SymbolInventory::from_labels(GLYPH_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    for (class, l) in GLYPH_CLASSES.iter().enumerate() {
        for _ in 0..20 {
            let s = render_latex(l, &Style::default(), &mut rng).expect("glyph renders");
            let t: Vec<_> = s.expr.traces().iter().collect();
            data.push(LabeledSymbol {
                features: featurize_symbol(&t, &[], StructMask::default(), features),
                class,
            });
        }
    }
    (inv, data)
}

/// 20 expressions with sub- and superscripts among plain neighbours.
pub fn relation_corpus(seed: u64) -> Vec<SynthSample> {
    corpus(&Grammar::default(), 20, seed)
}

pub fn annotation_corpus(seed: u64) -> Vec<SynthSample> {
    corpus(&Grammar::default(), 30, seed)
}

pub fn pipeline_corpus(seed: u64) -> Vec<SynthSample> {
    corpus(&Grammar::default(), 20, seed)
}

pub const CORRECTION_LABELS: [&str; 8] = ["x", "y", "a", "=", "+", "O", "0", "1"];

/// Round glyph distributions that read as the letter except right after
/// "=", where the target is the digit.
pub fn correction_corpus(seed: u64) -> (SymbolInventory, Vec<CorrSample>) {
    let inv = SymbolInventory::from_labels(CORRECTION_LABELS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[&str]; 8] = [
        &["x", "=", "O"],
        &["a", "=", "O"],
        &["O", "+", "x"],
        &["O", "=", "y"],
        &["y", "+", "O", "=", "O"],
        &["x", "+", "O"],
        &["O", "=", "O"],
        &["a", "+", "1", "=", "O"],
    ];
    let mut out = Vec::new();
    for _ in 0..2 {
        for tokens in shapes {
            let mut symbols = Vec::new();
            let mut targets = Vec::new();
            for (i, t) in tokens.iter().enumerate() {
                let probs = if *t == "O" {
                    let o = rng.gen_range(0.45..0.6);
                    correction_dist(&inv, &[("O", o), ("0", 1.0 - o)])
                } else {
                    correction_dist(&inv, &[(t, 0.9), ("1", 0.1)])
                };
                let target = if *t == "O" && i > 0 && tokens[i - 1] == "=" {
                    "0"
                } else {
                    t
                };
                symbols.push(CorrSymbol {
                    probs,
                    bbox: slot(i),
                    incoming: Some(if i == 0 {
                        RelationLabel::LineStart
                    } else {
                        RelationLabel::Right
                    }),
                });
                targets.push(inv.index_of(target).expect("label listed"));
            }
            out.push(CorrSample { symbols, targets });
        }
    }
    (inv, out)
}

/// Normalized distribution with the given label weights.
pub fn correction_dist(inv: &SymbolInventory, weights: &[(&str, f64)]) -> Vec<f64> {
    let mut p = vec![0.0; inv.len()];
    for (l, w) in weights {
        p[inv.index_of(l).expect("label listed")] = *w;
    }
    let z: f64 = p.iter().sum();
    p.iter().map(|x| x / z).collect()
}

/// Box of the `i`-th symbol in a left-to-right row.
pub fn slot(i: usize) -> BBox {
    BBox {
        min_x: 1.5 * i as f64,
        min_y: 0.0,
        max_x: 1.5 * i as f64 + 1.0,
        max_y: 1.0,
    }
}

fn overfit(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        micro_batch: 0,
        lr,
        min_lr: 1e-3,
        target_accuracy: Some(1.0),
        seed,
        ..TrainConfig::default()
    }
}

pub fn segnet_train(seed: u64) -> TrainConfig {
    TrainConfig {
        micro_batch: 8,
        ..overfit(200, 8, 1e-2, seed)
    }
}

pub fn classifier_train(seed: u64) -> TrainConfig {
    overfit(150, 16, 1e-2, seed)
}

pub fn relnet_train(seed: u64) -> TrainConfig {
    overfit(200, 32, 1e-2, seed)
}

pub fn corrector_train(seed: u64) -> TrainConfig {
    TrainConfig {
        finetune_epochs: 20,
        augment: true,
        ..overfit(200, 8, 5e-3, seed)
    }
}

pub fn annotnet_train(seed: u64) -> TrainConfig {
    overfit(300, 16, 1e-2, seed)
}

pub fn train_toy_annotnet(
    corpus: &[SynthSample],
    seed: u64,
) -> Result<(AnnotNet, TrainReport), NnError> {
    let labels: Vec<String> = GLYPH_LABELS.iter().map(|s| s.to_string()).collect();
    let cfg = AnnotNetConfig::toy(&labels);
    let vocab = AnnotVocab::new(glyph_inventory());
    let mut steps = Vec::new();
    for s in corpus {
        steps.extend(
            training_steps(&s.expr, &s.slg, &s.latex, &vocab, cfg.resample)
                .map_err(|e| NnError::Data(e.to_string()))?,
        );
    }
    train_annotnet(&steps, cfg, &annotnet_train(seed))
}

/// Train accuracies of the stage networks of a pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToyReports {
    pub segnet: TrainReport,
    pub classifier: ClassifierReport,
    pub corrector: CorrReport,
    pub relnet: TrainReport,
}

pub struct ToyModels {
    pub segnet: SegNet,
    pub dualnet: DualNet,
    pub relnet: RelNet,
    pub corrnet: CorrNet,
    pub reports: ToyReports,
}

fn sorted_groups(s: &SynthSample) -> (Vec<BTreeSet<TraceId>>, Vec<SymbolId>) {
    let groups: Vec<BTreeSet<TraceId>> =
        s.slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
    let order = baseline_order(&s.expr, &groups);
    (
        order.iter().map(|&i| groups[i].clone()).collect(),
        order.iter().map(|&i| s.slg.nodes()[i].id).collect(),
    )
}

/// Trains the four recognition networks on one annotated corpus. The
/// corrector learns from the trained classifier's distributions and the
/// relation network from both the classifier's and the corrector's, so
/// each stage sees the inputs it will get at recognition time.
pub fn train_pipeline(corpus: &[SynthSample], seed: u64) -> Result<ToyModels, NnError> {
    let inv = glyph_inventory();
    let pairs: Vec<_> = corpus
        .iter()
        .map(|s| (s.expr.clone(), s.slg.clone()))
        .collect();
    let (segnet, seg_rep) = train_segnet(&pairs, SegNetConfig::toy(), &segnet_train(seed))?;

    let dcfg = DualNetConfig::toy(inv.clone());
    let mut symbols = Vec::new();
    for s in corpus {
        symbols.extend(expression_symbols(&s.expr, &s.slg, &inv, &dcfg.features)?);
    }
    let (dualnet, cls_rep) = train_classifier(&symbols, None, dcfg, &classifier_train(seed))?;

    let mut samples = Vec::new();
    let mut class_probs = Vec::new();
    for s in corpus {
        let (groups, ids) = sorted_groups(s);
        let probs = dualnet.classify_groups(&s.expr, &groups)?;
        let by_id: HashMap<SymbolId, Vec<f64>> =
            ids.iter().copied().zip(probs.iter().cloned()).collect();
        samples.push(corr_sample(&s.expr, &s.slg, &by_id, &inv)?);
        class_probs.push(probs);
    }
    let (corrnet, corr_rep) = train_corrector(
        &samples,
        CorrNetConfig::toy(inv.len()),
        &corrector_train(seed),
    )?;

    let rcfg = RelNetConfig::toy(inv.len());
    let mut data: Vec<(PairInput, usize)> = Vec::new();
    for (s, probs) in corpus.iter().zip(&class_probs) {
        let (groups, ids) = sorted_groups(s);
        data.extend(training_pairs(
            &rel_symbols(&s.expr, &groups, probs, &inv),
            &s.slg,
            &ids,
            &rcfg,
        ));
        let by_id: HashMap<SymbolId, Vec<f64>> =
            ids.iter().copied().zip(probs.iter().cloned()).collect();
        let (order, seq) = crate::corrector::corr_sequence(&s.expr, &s.slg, &by_id)?;
        if let Some(out) = crate::corrector::try_correct(&corrnet, &seq)? {
            let at: HashMap<SymbolId, Vec<f64>> = order.into_iter().zip(out).collect();
            let corrected: Vec<Vec<f64>> = ids.iter().map(|id| at[id].clone()).collect();
            data.extend(training_pairs(
                &rel_symbols(&s.expr, &groups, &corrected, &inv),
                &s.slg,
                &ids,
                &rcfg,
            ));
        }
    }
    let (relnet, rel_rep) = train_relnet(&data, rcfg, &relnet_train(seed))?;

    Ok(ToyModels {
        segnet,
        dualnet,
        relnet,
        corrnet,
        reports: ToyReports {
            segnet: seg_rep,
            classifier: cls_rep,
            corrector: corr_rep,
            relnet: rel_rep,
        },
    })
}

impl ToyModels {
    pub fn models(self) -> Models {
        Models::new(
            self.segnet,
            self.dualnet,
            self.relnet,
            Some(self.corrnet),
            "toy",
        )
    }

    /// Writes the four model files under their default names.
    pub fn save(&self, dir: &Path) -> Result<(), NnError> {
        std::fs::create_dir_all(dir)?;
        save_model(&dir.join("segnet.bin"), &self.segnet.to_file())?;
        save_model(&dir.join("dualnet.bin"), &self.dualnet.to_file())?;
        save_model(&dir.join("relnet.bin"), &self.relnet.to_file())?;
        save_model(&dir.join("corrnet.bin"), &self.corrnet.to_file())
    }
}
