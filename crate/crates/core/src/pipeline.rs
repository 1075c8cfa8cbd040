//! Five-stage recognition: segment, classify, relate, correct, re-relate.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::{AnnotNet, Reclassifier};
use crate::classifier::{baseline_order, top_k, DualNet};
use crate::corrector::{apply_correction, corr_sequence, try_correct, CorrNet, CorrSymbol};
use crate::evalkit::{aggregate, compare_slg, ExprTally, MetricsReport};
use crate::ink::{
    parse_inkml, slg_to_latex, slg_to_mathml, write_lg, Edge, Expression, StrokeLabelGraph,
    SymbolId, SymbolInventory, SymbolNode, TraceId,
};
use crate::nnet::{load_model, NnError};
use crate::relator::{rel_symbols, relate, OracleRelations, PairScores, RelNet, RelationScorer};
use crate::segmenter::{
    segment_expression, MaskPredictor, OracleMask, SegNet, SegOptions, SegWindow,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Segment,
    Classify,
    Relate,
    Correct,
    Revise,
    Render,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Classify => "classify",
            Stage::Relate => "relate",
            Stage::Correct => "correct",
            Stage::Revise => "revise",
            Stage::Render => "render",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
    #[error("stage {stage} failed: {msg}")]
    Stage {
        stage: Stage,
        msg: String,
        partial: Box<Artifacts>,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn file_err(path: &Path, msg: impl ToString) -> PipelineError {
    PipelineError::File {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

/// Pipeline settings, read from TOML. Model paths are relative to `model_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model_dir: PathBuf,
    pub segnet: PathBuf,
    pub dualnet: PathBuf,
    pub relnet: PathBuf,
    pub corrnet: PathBuf,
    pub annotnet: PathBuf,
    /// Class inventory the classifier must have been trained with.
    pub inventory: Option<PathBuf>,
    pub seg_threshold: Option<f64>,
    pub correction: bool,
    /// Second relation pass; only runs after correction.
    pub revise: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model_dir: PathBuf::from("models"),
            segnet: PathBuf::from("segnet.bin"),
            dualnet: PathBuf::from("dualnet.bin"),
            relnet: PathBuf::from("relnet.bin"),
            corrnet: PathBuf::from("corrnet.bin"),
            annotnet: PathBuf::from("annotnet.bin"),
            inventory: None,
            seg_threshold: None,
            correction: true,
            revise: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_model_dir(dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            model_dir: dir.into(),
            ..PipelineConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let c: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
        let mut c = Self::from_toml(&text)?;
        if c.model_dir.is_relative() {
            if let Some(parent) = path.parent() {
                c.model_dir = parent.join(&c.model_dir);
            }
        }
        Ok(c)
    }

    fn check(&self) -> Result<(), PipelineError> {
        if let Some(t) = self.seg_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(PipelineError::Config(format!(
                    "seg_threshold {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Whether stage 5 runs: it needs stage 4.
    pub fn revise_enabled(&self) -> bool {
        self.correction && self.revise
    }

    pub fn path(&self, file: &Path) -> PathBuf {
        self.model_dir.join(file)
    }
}

/// Stage 4 behind a common interface; `None` keeps the classifier output.
pub trait LabelCorrector: Sync {
    fn correct(
        &self,
        expr: &Expression,
        groups: &[BTreeSet<TraceId>],
        symbols: &[CorrSymbol],
    ) -> Result<Option<Vec<Vec<f64>>>, NnError>;
}

impl LabelCorrector for CorrNet {
    fn correct(
        &self,
        _: &Expression,
        _: &[BTreeSet<TraceId>],
        symbols: &[CorrSymbol],
    ) -> Result<Option<Vec<Vec<f64>>>, NnError> {
        try_correct(self, symbols)
    }
}

fn one_hot(inventory: &SymbolInventory, label: Option<&str>) -> Vec<f64> {
    let n = inventory.len();
    match label.and_then(|l| inventory.index_of(l)) {
        Some(c) => (0..n).map(|k| if k == c { 1.0 } else { 0.0 }).collect(),
        None => vec![1.0 / n as f64; n],
    }
}

/// Reference labels looked up by trace group; unknown groups are uniform.
pub struct OracleClassifier {
    inventory: SymbolInventory,
    labels: HashMap<BTreeSet<TraceId>, String>,
}

impl OracleClassifier {
    pub fn new(slg: &StrokeLabelGraph, inventory: SymbolInventory) -> Self {
        OracleClassifier {
            inventory,
            labels: slg
                .nodes()
                .iter()
                .map(|n| (n.trace_ids.clone(), n.label.clone()))
                .collect(),
        }
    }

    fn dist(&self, group: &BTreeSet<TraceId>) -> Vec<f64> {
        one_hot(&self.inventory, self.labels.get(group).map(String::as_str))
    }
}

impl Reclassifier for OracleClassifier {
    fn inventory(&self) -> &SymbolInventory {
        &self.inventory
    }

    fn classify_groups(
        &self,
        _: &Expression,
        groups: &[BTreeSet<TraceId>],
    ) -> Result<Vec<Vec<f64>>, NnError> {
        Ok(groups.iter().map(|g| self.dist(g)).collect())
    }
}

impl LabelCorrector for OracleClassifier {
    fn correct(
        &self,
        _: &Expression,
        groups: &[BTreeSet<TraceId>],
        _: &[CorrSymbol],
    ) -> Result<Option<Vec<Vec<f64>>>, NnError> {
        Ok(Some(groups.iter().map(|g| self.dist(g)).collect()))
    }
}

struct Thresholded<'a> {
    inner: &'a dyn MaskPredictor,
    threshold: f64,
}

impl MaskPredictor for Thresholded<'_> {
    fn options(&self) -> SegOptions {
        SegOptions {
            threshold: self.threshold,
            ..self.inner.options()
        }
    }

    fn predict(&self, window: &SegWindow) -> Result<Vec<f64>, NnError> {
        self.inner.predict(window)
    }
}

/// One model (or oracle) per stage, shared read-only.
pub struct Models {
    pub segmenter: Box<dyn MaskPredictor + Send>,
    pub classifier: Box<dyn Reclassifier + Send>,
    pub relations: Box<dyn RelationScorer + Send>,
    pub corrector: Option<Box<dyn LabelCorrector + Send>>,
    pub tag: String,
}

impl Models {
    pub fn new(
        segnet: SegNet,
        dualnet: DualNet,
        relnet: RelNet,
        corrnet: Option<CorrNet>,
        tag: impl Into<String>,
    ) -> Self {
        Models {
            segmenter: Box::new(segnet),
            classifier: Box::new(dualnet),
            relations: Box::new(relnet),
            corrector: corrnet.map(|c| Box::new(c) as Box<dyn LabelCorrector + Send>),
            tag: tag.into(),
        }
    }

    /// Ground-truth stand-ins for every stage, read off `slg`.
    pub fn oracle(slg: &StrokeLabelGraph, inventory: SymbolInventory) -> Self {
        Models {
            segmenter: Box::new(OracleMask::new(slg)),
            classifier: Box::new(OracleClassifier::new(slg, inventory.clone())),
            relations: Box::new(OracleRelations::new(slg)),
            corrector: Some(Box::new(OracleClassifier::new(slg, inventory))),
            tag: "oracle".into(),
        }
    }

    /// Loads the stage models named by `config`; the corrector only when
    /// correction is enabled.
    pub fn load(config: &PipelineConfig) -> Result<Self, PipelineError> {
        fn read<T>(
            config: &PipelineConfig,
            file: &Path,
            from: impl FnOnce(crate::nnet::ModelFile) -> Result<T, NnError>,
        ) -> Result<T, PipelineError> {
            let path = config.path(file);
            let m = load_model(&path).map_err(|e| file_err(&path, e))?;
            from(m).map_err(|e| file_err(&path, e))
        }
        let segnet = read(config, &config.segnet, SegNet::from_file)?;
        let dualnet = read(config, &config.dualnet, DualNet::from_file)?;
        let relnet = read(config, &config.relnet, RelNet::from_file)?;
        if let Some(p) = &config.inventory {
            let inv = SymbolInventory::load(p).map_err(|e| file_err(p, e))?;
            if inv.labels() != dualnet.inventory().labels() {
                return Err(file_err(p, "inventory differs from the classifier's"));
            }
        }
        if relnet.config.classes != dualnet.inventory().len() {
            return Err(PipelineError::Config(format!(
                "relation model expects {} classes, classifier has {}",
                relnet.config.classes,
                dualnet.inventory().len()
            )));
        }
        let corrnet = if config.correction {
            let c = read(config, &config.corrnet, CorrNet::from_file)?;
            if c.config.classes != dualnet.inventory().len() {
                return Err(PipelineError::Config(format!(
                    "correction model expects {} classes, classifier has {}",
                    c.config.classes,
                    dualnet.inventory().len()
                )));
            }
            Some(c)
        } else {
            None
        };
        let tag = format!(
            "{}@{}",
            env!("CARGO_PKG_VERSION"),
            config.model_dir.display()
        );
        Ok(Models::new(segnet, dualnet, relnet, corrnet, tag))
    }

    pub fn load_annotator(config: &PipelineConfig) -> Result<AnnotNet, PipelineError> {
        let path = config.path(&config.annotnet);
        let m = load_model(&path).map_err(|e| file_err(&path, e))?;
        AnnotNet::from_file(m).map_err(|e| file_err(&path, e))
    }

    pub fn inventory(&self) -> &SymbolInventory {
        self.classifier.inventory()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub ms: f64,
}

/// Intermediate results, kept for inspection and attached to stage errors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub stages: Vec<Stage>,
    /// Stage 1 output, right to left.
    pub peeled: Vec<Vec<TraceId>>,
    /// Groups in reading order; node `i` of every graph below owns `groups[i]`.
    pub groups: Vec<BTreeSet<TraceId>>,
    pub class_probs: Vec<Vec<f64>>,
    pub relation_scores: Option<PairScores>,
    pub initial: Option<StrokeLabelGraph>,
    pub corrected_probs: Option<Vec<Vec<f64>>>,
    pub corrected: Option<StrokeLabelGraph>,
    pub revised_scores: Option<PairScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolScore {
    pub id: SymbolId,
    pub label: String,
    pub score: f64,
    pub traces: Vec<TraceId>,
    pub top: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecognitionResult {
    pub slg: StrokeLabelGraph,
    pub latex: String,
    pub mathml: String,
    pub timings: Vec<StageTiming>,
    pub scores: Vec<SymbolScore>,
    pub artifacts: Artifacts,
}

fn build_slg(
    groups: &[BTreeSet<TraceId>],
    probs: &[Vec<f64>],
    edges: Vec<Edge>,
    inv: &SymbolInventory,
) -> Result<StrokeLabelGraph, String> {
    let nodes = groups
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (g, p))| {
            let (c, q) = top_k(p, 1)
                .first()
                .copied()
                .ok_or("empty class distribution")?;
            let label = inv
                .label(c)
                .ok_or_else(|| format!("class {c} outside the inventory"))?;
            Ok(SymbolNode::new(i as SymbolId, g.iter().copied(), label).with_score(q))
        })
        .collect::<Result<Vec<_>, String>>()?;
    StrokeLabelGraph::new(nodes, edges).map_err(|e| e.to_string())
}

struct Run<'a> {
    art: Artifacts,
    timings: Vec<StageTiming>,
    clock: Instant,
    models: &'a Models,
}

impl Run<'_> {
    fn step<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&Artifacts, &Models) -> Result<T, String>,
    ) -> Result<T, PipelineError> {
        self.clock = Instant::now();
        let out = f(&self.art, self.models);
        self.timings.push(StageTiming {
            stage,
            ms: self.clock.elapsed().as_secs_f64() * 1e3,
        });
        match out {
            Ok(v) => {
                self.art.stages.push(stage);
                Ok(v)
            }
            Err(msg) => Err(PipelineError::Stage {
                stage,
                msg,
                partial: Box::new(self.art.clone()),
            }),
        }
    }
}

/// Runs the stages in order on one expression.
pub fn recognize(
    expr: &Expression,
    models: &Models,
    config: &PipelineConfig,
) -> Result<RecognitionResult, PipelineError> {
    let mut run = Run {
        art: Artifacts::default(),
        timings: Vec::new(),
        clock: Instant::now(),
        models,
    };
    let inv = models.inventory().clone();

    run.art.peeled = run.step(Stage::Segment, |_, m| {
        if expr.traces().is_empty() {
            return Err("expression has no traces".into());
        }
        let seg: &dyn MaskPredictor = &*m.segmenter;
        let res = match config.seg_threshold {
            Some(threshold) => segment_expression(
                expr,
                &Thresholded {
                    inner: seg,
                    threshold,
                },
            ),
            None => segment_expression(expr, seg),
        };
        res.map_err(|e| e.to_string())
    })?;
    let mut peeled: Vec<BTreeSet<TraceId>> = run
        .art
        .peeled
        .iter()
        .rev()
        .map(|g| g.iter().copied().collect())
        .collect();
    let order = baseline_order(expr, &peeled);
    run.art.groups = order
        .iter()
        .map(|&i| std::mem::take(&mut peeled[i]))
        .collect();

    run.art.class_probs = run.step(Stage::Classify, |a, m| {
        let p = m
            .classifier
            .classify_groups(expr, &a.groups)
            .map_err(|e| e.to_string())?;
        if p.len() != a.groups.len() || p.iter().any(|d| d.len() != inv.len()) {
            return Err("classifier output does not match the groups and inventory".into());
        }
        Ok(p)
    })?;

    let (scores, slg) = run.step(Stage::Relate, |a, m| {
        let (s, edges) = relate(
            &*m.relations,
            &rel_symbols(expr, &a.groups, &a.class_probs, &inv),
        )
        .map_err(|e| e.to_string())?;
        let slg = build_slg(&a.groups, &a.class_probs, edges, &inv)?;
        Ok((s, slg))
    })?;
    run.art.relation_scores = Some(scores);
    run.art.initial = Some(slg.clone());
    let mut slg = slg;
    let mut probs = run.art.class_probs.clone();

    if config.correction {
        if let Some(corrector) = &models.corrector {
            let corrected = run.step(Stage::Correct, |a, _| {
                let initial = a.initial.as_ref().expect("stage 3 ran");
                let by_id: HashMap<SymbolId, Vec<f64>> = a
                    .class_probs
                    .iter()
                    .cloned()
                    .enumerate()
                    .map(|(i, p)| (i as SymbolId, p))
                    .collect();
                let (ids, seq) = corr_sequence(expr, initial, &by_id).map_err(|e| e.to_string())?;
                let seq_groups: Vec<BTreeSet<TraceId>> = ids
                    .iter()
                    .map(|&id| a.groups[id as usize].clone())
                    .collect();
                let Some(out) = corrector
                    .correct(expr, &seq_groups, &seq)
                    .map_err(|e| e.to_string())?
                else {
                    return Ok(None);
                };
                if out.len() != ids.len() || out.iter().any(|d| d.len() != inv.len()) {
                    return Err("corrector output does not match the sequence and inventory".into());
                }
                let mut positional = a.class_probs.clone();
                for (&id, p) in ids.iter().zip(&out) {
                    positional[id as usize] = p.clone();
                }
                Ok(Some((
                    apply_correction(initial, &ids, &out, &inv),
                    positional,
                )))
            })?;
            if let Some((g, p)) = corrected {
                run.art.corrected = Some(g.clone());
                run.art.corrected_probs = Some(p.clone());
                slg = g;
                probs = p;
                if config.revise_enabled() {
                    let (s, g) = run.step(Stage::Revise, |a, m| {
                        let (s, edges) =
                            relate(&*m.relations, &rel_symbols(expr, &a.groups, &probs, &inv))
                                .map_err(|e| e.to_string())?;
                        Ok((s, build_slg(&a.groups, &probs, edges, &inv)?))
                    })?;
                    run.art.revised_scores = Some(s);
                    slg = g;
                }
            }
        }
    }

    let (latex, mathml) = run.step(Stage::Render, |_, _| {
        let latex = slg_to_latex(&slg).map_err(|e| e.to_string())?;
        let mathml = slg_to_mathml(&slg).map_err(|e| e.to_string())?;
        Ok((latex, mathml))
    })?;
    let scores = slg
        .nodes()
        .iter()
        .map(|n| SymbolScore {
            id: n.id,
            label: n.label.clone(),
            score: n.score,
            traces: n.trace_ids.iter().copied().collect(),
            top: top_k(&probs[n.id as usize], 5)
                .into_iter()
                .filter_map(|(c, p)| inv.label(c).map(|l| (l.to_string(), p)))
                .collect(),
        })
        .collect();
    Ok(RecognitionResult {
        slg,
        latex,
        mathml,
        timings: run.timings,
        scores,
        artifacts: run.art,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub name: String,
    pub latex: Option<String>,
    pub error: Option<String>,
    pub tally: Option<ExprTally>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub items: Vec<BatchItem>,
    /// Present when at least one input carries ground truth.
    pub metrics: Option<MetricsReport>,
}

fn recognize_file(
    path: &Path,
    models: &Models,
    config: &PipelineConfig,
    output: &Path,
) -> BatchItem {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut item = BatchItem {
        name,
        latex: None,
        error: None,
        tally: None,
    };
    let doc = match std::fs::read(path)
        .map_err(|e| e.to_string())
        .and_then(|b| parse_inkml(&b).map_err(|e| e.to_string()))
    {
        Ok(d) => d,
        Err(e) => {
            item.error = Some(e);
            return item;
        }
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let result = recognize(&doc.expression, models, config);
    if let Some(reference) = &doc.slg {
        item.tally = Some(match &result {
            Ok(r) => match compare_slg(&r.slg, reference) {
                Ok(t) => t,
                Err(e) => {
                    item.error = Some(e.to_string());
                    ExprTally {
                        symbols: reference.len(),
                        ..ExprTally::default()
                    }
                }
            },
            Err(_) => ExprTally {
                symbols: reference.len(),
                ..ExprTally::default()
            },
        });
    }
    match result {
        Ok(r) => {
            let written = std::fs::write(output.join(format!("{stem}.lg")), write_lg(&r.slg))
                .and_then(|_| {
                    std::fs::write(output.join(format!("{stem}.tex")), format!("{}\n", r.latex))
                });
            if let Err(e) = written {
                item.error = Some(e.to_string());
            }
            item.latex = Some(r.latex);
        }
        Err(e) => item.error = Some(e.to_string()),
    }
    item
}

/// Recognizes every `.inkml` file of `input` in parallel, writing
/// `<stem>.lg` and `<stem>.tex` to `output`. Failed files are reported
/// per item and count as entirely wrong when ground truth exists.
pub fn recognize_batch(
    input: &Path,
    models: &Models,
    config: &PipelineConfig,
    output: &Path,
) -> Result<BatchReport, PipelineError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| file_err(input, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "inkml"))
        .collect();
    paths.sort();
    std::fs::create_dir_all(output).map_err(|e| file_err(output, e))?;
    let items: Vec<BatchItem> = paths
        .par_iter()
        .map(|p| recognize_file(p, models, config, output))
        .collect();
    let tallies: Vec<&ExprTally> = items.iter().filter_map(|i| i.tally.as_ref()).collect();
    let metrics = (!tallies.is_empty()).then(|| aggregate(tallies));
    Ok(BatchReport { items, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_latex, Style, GLYPH_LABELS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn glyph_inventory() -> SymbolInventory {
        SymbolInventory::from_labels(GLYPH_LABELS.iter().copied())
    }

    #[test]
    fn oracle_reproduces_fig1() {
        let s = render_latex(
            "A_2>B_2",
            &Style::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let models = Models::oracle(&s.slg, glyph_inventory());
        let r = recognize(&s.expr, &models, &PipelineConfig::default()).unwrap();
        assert_eq!(r.latex, "A_{2}>B_{2}");
        assert!(compare_slg(&r.slg, &s.slg).unwrap().exp);
        assert_eq!(
            r.artifacts.stages,
            [
                Stage::Segment,
                Stage::Classify,
                Stage::Relate,
                Stage::Correct,
                Stage::Revise,
                Stage::Render
            ]
        );
        assert_eq!(r.timings.len(), 6);
        assert_eq!(r.scores.len(), 5);
        assert_eq!(r.latex, slg_to_latex(&r.slg).unwrap());
    }

    #[test]
    fn correction_off_skips_stages_four_and_five() {
        let s = render_latex("x+1", &Style::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let models = Models::oracle(&s.slg, glyph_inventory());
        let config = PipelineConfig {
            correction: false,
            ..PipelineConfig::default()
        };
        let r = recognize(&s.expr, &models, &config).unwrap();
        assert_eq!(
            r.artifacts.stages,
            [
                Stage::Segment,
                Stage::Classify,
                Stage::Relate,
                Stage::Render
            ]
        );
        assert_eq!(Some(&r.slg), r.artifacts.initial.as_ref());
        let no_revise = PipelineConfig {
            revise: false,
            ..PipelineConfig::default()
        };
        let r = recognize(&s.expr, &models, &no_revise).unwrap();
        assert!(!r.artifacts.stages.contains(&Stage::Revise));
        assert!(r.artifacts.stages.contains(&Stage::Correct));
    }

    struct Broken;

    impl RelationScorer for Broken {
        fn score(&self, _: &[crate::relator::RelSymbol]) -> Result<PairScores, NnError> {
            Err(NnError::Data("no scores".into()))
        }
    }

    #[test]
    fn failures_name_the_stage_and_keep_partials() {
        let s = render_latex("a_2", &Style::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut models = Models::oracle(&s.slg, glyph_inventory());
        models.relations = Box::new(Broken);
        let err = recognize(&s.expr, &models, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Relate));
        assert!(err.to_string().contains("relate"));
        let PipelineError::Stage { partial, .. } = err else {
            unreachable!()
        };
        assert_eq!(partial.groups.len(), 2);
        assert_eq!(partial.class_probs.len(), 2);
        assert_eq!(partial.stages, [Stage::Segment, Stage::Classify]);

        let empty = Expression::new(Vec::new(), "", None).unwrap();
        let err = recognize(&empty, &models, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Segment));
    }

    #[test]
    fn config_toml() {
        let c = PipelineConfig::from_toml(
            "model_dir = \"m\"\ncorrection = false\nseg_threshold = 0.4\n",
        )
        .unwrap();
        assert_eq!(c.path(&c.relnet), PathBuf::from("m/relnet.bin"));
        assert!(!c.revise_enabled());
        assert!(PipelineConfig::from_toml("seg_threshold = 2.0").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        let err = Models::load(&PipelineConfig::with_model_dir("/nonexistent"))
            .err()
            .unwrap();
        assert!(err.to_string().contains("segnet.bin"), "{err}");
    }
}
