//! Alignment of a LaTeX label to raw traces, cross-checking filters and
//! corpus annotation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{baseline_order, top_k, DualNet};
use crate::geometry::normalize_window;
use crate::ink::{
    parse_inkml, parse_latex_structure, write_inkml, AnnotStep, Edge, Expression, LatexError,
    RelationLabel, SlgError, StrokeLabelGraph, SymbolId, SymbolInventory, SymbolNode, Trace,
    TraceId,
};
use crate::nnet::graph::sigmoid;
use crate::nnet::layers::{BiLstm, Dense};
use crate::nnet::{
    fit, Graph, ModelFile, NnError, ParamSet, Tensor, TrainConfig, TrainReport, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum AnnotError {
    #[error("latex: {0}")]
    Latex(#[from] LatexError),
    #[error("expression has no traces")]
    NoTraces,
    #[error("step {step} ('{symbol}') selected no traces")]
    EmptySelection { step: usize, symbol: String },
    #[error("{0} traces left unassigned")]
    Unassigned(usize),
    #[error("graph: {0}")]
    Graph(#[from] SlgError),
    #[error("model: {0}")]
    Model(#[from] NnError),
    #[error("{path}: {msg}")]
    File { path: PathBuf, msg: String },
}

/// Class vocabulary of the annotator: the inventory plus one
/// out-of-vocabulary bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotVocab {
    inventory: SymbolInventory,
}

impl AnnotVocab {
    pub fn new(inventory: SymbolInventory) -> Self {
        AnnotVocab { inventory }
    }

    pub fn len(&self) -> usize {
        self.inventory.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, label: &str) -> usize {
        self.inventory
            .index_of(label)
            .unwrap_or(self.inventory.len())
    }

    pub fn oov(&self) -> usize {
        self.inventory.len()
    }

    pub fn inventory(&self) -> &SymbolInventory {
        &self.inventory
    }
}

/// Per-point channels: x, y, pen-up, trace ordinal, reference flag.
pub const ANNOT_POINT_FEATURES: usize = 5;

/// Network input for one step: the reference symbol's traces followed by
/// every remaining trace, plus the step description.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotInput {
    /// Plan step id of the symbol being located.
    pub step: usize,
    pub reference: Vec<TraceId>,
    pub remaining: Vec<TraceId>,
    pub resample: usize,
    /// `[(reference + remaining) · resample, ANNOT_POINT_FEATURES]`.
    pub points: Tensor,
    /// `[1, context_dim]`.
    pub context: Tensor,
}

pub fn context_dim(vocab: &AnnotVocab) -> usize {
    3 * vocab.len() + 2 * RelationLabel::COUNT
}

fn step_context(step: &AnnotStep, vocab: &AnnotVocab) -> Vec<f64> {
    let v = vocab.len();
    let r = RelationLabel::COUNT;
    let mut c = vec![0.0; context_dim(vocab)];
    c[vocab.index(&step.s_next.1)] = 1.0;
    c[v + step.rel.index()] = 1.0;
    if let Some((_, l)) = &step.s_ref {
        c[v + r + vocab.index(l)] = 1.0;
    }
    for (l, rel) in &step.neighbors {
        c[2 * v + r + vocab.index(l)] = 1.0;
        c[3 * v + r + rel.index()] = 1.0;
    }
    c
}

pub fn annot_input(
    expr: &Expression,
    reference: &[TraceId],
    remaining: &[TraceId],
    step: &AnnotStep,
    vocab: &AnnotVocab,
    resample: usize,
) -> AnnotInput {
    let m = resample.max(1);
    let ids: Vec<TraceId> = reference.iter().chain(remaining).copied().collect();
    let traces: Vec<&Trace> = ids.iter().filter_map(|t| expr.trace(*t)).collect();
    let nw = normalize_window(&traces, m);
    let n = traces.len();
    let mut data = Vec::with_capacity(n * m * ANNOT_POINT_FEATURES);
    for (k, pts) in nw.traces.iter().enumerate() {
        let flag = if k < reference.len() { 1.0 } else { 0.0 };
        let ord = k as f64 / n.max(1) as f64;
        for (i, p) in pts.iter().enumerate() {
            data.extend_from_slice(&[p.x, p.y, if i + 1 == m { 1.0 } else { 0.0 }, ord, flag]);
        }
    }
    AnnotInput {
        step: step.s_next.0,
        reference: reference.to_vec(),
        remaining: remaining.to_vec(),
        resample: m,
        points: Tensor::matrix(n * m, ANNOT_POINT_FEATURES, data),
        context: Tensor::row(step_context(step, vocab)),
    }
}

/// Selects the traces of the next symbol among the remaining ones.
pub trait AnnotPredictor: Sync {
    fn vocab(&self) -> &AnnotVocab;
    fn resample(&self) -> usize;
    fn threshold(&self) -> f64 {
        0.5
    }
    /// One probability per remaining trace.
    fn predict(&self, input: &AnnotInput) -> Result<Vec<f64>, NnError>;
}

/// Aligns `latex` to the traces of `expr`: one mask prediction per symbol
/// in reading order, each consuming the selected traces.
pub fn annotate_expression(
    expr: &Expression,
    latex: &str,
    predictor: &dyn AnnotPredictor,
) -> Result<StrokeLabelGraph, AnnotError> {
    let plan = parse_latex_structure(latex)?;
    if expr.traces().is_empty() {
        return Err(AnnotError::NoTraces);
    }
    let mut remaining = expr.trace_ids();
    let mut groups: HashMap<usize, Vec<TraceId>> = HashMap::new();
    for step in plan.annot_steps() {
        let reference = step
            .s_ref
            .as_ref()
            .and_then(|(id, _)| groups.get(id).cloned())
            .unwrap_or_default();
        let chosen: Vec<TraceId> = if remaining.is_empty() {
            Vec::new()
        } else {
            let input = annot_input(
                expr,
                &reference,
                &remaining,
                &step,
                predictor.vocab(),
                predictor.resample(),
            );
            let p = predictor.predict(&input)?;
            remaining
                .iter()
                .zip(&p)
                .filter(|(_, &q)| q >= predictor.threshold())
                .map(|(t, _)| *t)
                .collect()
        };
        if chosen.is_empty() {
            return Err(AnnotError::EmptySelection {
                step: step.s_next.0,
                symbol: step.s_next.1.clone(),
            });
        }
        remaining.retain(|t| !chosen.contains(t));
        groups.insert(step.s_next.0, chosen);
    }
    if !remaining.is_empty() {
        return Err(AnnotError::Unassigned(remaining.len()));
    }
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for s in plan.steps() {
        nodes.push(SymbolNode::new(
            s.id as SymbolId,
            groups[&s.id].iter().copied(),
            s.symbol.as_str(),
        ));
        edges.push(match s.parent {
            None => Edge::root(s.id as SymbolId),
            Some(p) => Edge::new(p as SymbolId, s.id as SymbolId, s.relation),
        });
    }
    Ok(StrokeLabelGraph::new(nodes, edges)?)
}

/// Masks read off a reference graph whose node ids are the plan step ids.
pub struct OracleAnnot {
    vocab: AnnotVocab,
    groups: HashMap<usize, BTreeSet<TraceId>>,
}

impl OracleAnnot {
    pub fn new(slg: &StrokeLabelGraph, vocab: AnnotVocab) -> Self {
        OracleAnnot {
            vocab,
            groups: slg
                .nodes()
                .iter()
                .map(|n| (n.id as usize, n.trace_ids.clone()))
                .collect(),
        }
    }
}

impl AnnotPredictor for OracleAnnot {
    fn vocab(&self) -> &AnnotVocab {
        &self.vocab
    }

    fn resample(&self) -> usize {
        2
    }

    fn predict(&self, input: &AnnotInput) -> Result<Vec<f64>, NnError> {
        let g = self.groups.get(&input.step);
        Ok(input
            .remaining
            .iter()
            .map(|t| {
                if g.is_some_and(|g| g.contains(t)) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotNetConfig {
    pub labels: Vec<String>,
    pub hidden: usize,
    pub layers: usize,
    pub embed: usize,
    pub head: usize,
    pub dropout: f64,
    pub resample: usize,
    pub threshold: f64,
}

impl Default for AnnotNetConfig {
    fn default() -> Self {
        AnnotNetConfig {
            labels: SymbolInventory::default().labels().to_vec(),
            hidden: 64,
            layers: 2,
            embed: 32,
            head: 64,
            dropout: 0.2,
            resample: 16,
            threshold: 0.5,
        }
    }
}

impl AnnotNetConfig {
    pub fn toy(labels: &[String]) -> Self {
        AnnotNetConfig {
            labels: labels.to_vec(),
            hidden: 12,
            embed: 8,
            head: 12,
            dropout: 0.0,
            resample: 6,
            ..AnnotNetConfig::default()
        }
    }
}

/// Context embedding broadcast over the points, BiLSTM stack, dense head,
/// per-trace mean of point logits.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotNet {
    pub config: AnnotNetConfig,
    pub params: ParamSet,
    vocab: AnnotVocab,
}

pub const ANNOTNET_KIND: &str = "annotnet";

impl AnnotNet {
    fn embed(&self) -> Dense {
        Dense::new("annot.embed", context_dim(&self.vocab), self.config.embed)
    }

    fn lstms(&self) -> Vec<BiLstm> {
        let c = &self.config;
        (0..c.layers.max(1))
            .map(|i| {
                BiLstm::new(
                    &format!("annot.lstm{i}"),
                    if i == 0 {
                        ANNOT_POINT_FEATURES + c.embed
                    } else {
                        2 * c.hidden
                    },
                    c.hidden,
                )
            })
            .collect()
    }

    fn fc1(&self) -> Dense {
        Dense::new("annot.fc1", 2 * self.config.hidden, self.config.head)
    }

    fn fc2(&self) -> Dense {
        Dense::new("annot.fc2", self.config.head, 1)
    }

    fn shell(config: AnnotNetConfig, params: ParamSet) -> Self {
        let vocab = AnnotVocab::new(SymbolInventory::from_labels(config.labels.iter()));
        AnnotNet {
            config,
            params,
            vocab,
        }
    }

    pub fn new(config: AnnotNetConfig, seed: u64) -> Self {
        let mut net = Self::shell(config, ParamSet::new());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        net.embed().init(&mut p, &mut rng);
        for l in net.lstms() {
            l.init(&mut p, &mut rng);
        }
        net.fc1().init(&mut p, &mut rng);
        net.fc2().init(&mut p, &mut rng);
        net.params = p;
        net
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NnError> {
        let net = Self::shell(file.unpack(ANNOTNET_KIND)?, file.params);
        net.embed().check(&net.params)?;
        for l in net.lstms() {
            l.check(&net.params)?;
        }
        net.fc1().check(&net.params)?;
        net.fc2().check(&net.params)?;
        Ok(net)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::pack(ANNOTNET_KIND, &self.config, self.params.clone())
    }

    /// Logits `[remaining, 1]`.
    pub fn forward(&self, g: &mut Graph, x: &AnnotInput) -> Result<Var, NnError> {
        let rows = x.points.rows();
        let ctx = g.input(x.context.clone());
        let e = self.embed().forward(g, ctx)?;
        let ones = g.input(Tensor::filled(&[rows, 1], 1.0));
        let e = g.matmul(ones, e);
        let pts = g.input(x.points.clone());
        let mut h = g.concat_cols(&[pts, e]);
        for l in self.lstms() {
            h = l.forward(g, h)?;
            h = g.dropout(h, self.config.dropout);
        }
        let h = self.fc1().forward(g, h)?;
        let h = g.relu(h);
        let z = self.fc2().forward(g, h)?;
        let m = x.resample;
        let skip = x.reference.len();
        let pooled: Vec<Var> = (0..x.remaining.len())
            .map(|i| {
                let s = g.slice_rows(z, (skip + i) * m, m);
                g.mean_rows(s)
            })
            .collect();
        Ok(g.concat_rows(&pooled))
    }
}

impl AnnotPredictor for AnnotNet {
    fn vocab(&self) -> &AnnotVocab {
        &self.vocab
    }

    fn resample(&self) -> usize {
        self.config.resample
    }

    fn threshold(&self) -> f64 {
        self.config.threshold
    }

    fn predict(&self, input: &AnnotInput) -> Result<Vec<f64>, NnError> {
        let mut g = Graph::eval(&self.params);
        let z = self.forward(&mut g, input)?;
        Ok(g.value(z).data().iter().map(|&v| sigmoid(v)).collect())
    }
}

/// Teacher-forced steps of a synthetic sample whose node ids equal the
/// plan step ids of `latex`.
pub fn training_steps(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    latex: &str,
    vocab: &AnnotVocab,
    resample: usize,
) -> Result<Vec<(AnnotInput, Vec<f64>)>, AnnotError> {
    let plan = parse_latex_structure(latex)?;
    let mut remaining = expr.trace_ids();
    let mut out = Vec::new();
    let group = |id: usize| -> Result<Vec<TraceId>, AnnotError> {
        Ok(slg
            .node(id as SymbolId)
            .ok_or(AnnotError::Unassigned(0))?
            .trace_ids
            .iter()
            .copied()
            .collect())
    };
    for step in plan.annot_steps() {
        let reference = match &step.s_ref {
            Some((id, _)) => group(*id)?,
            None => Vec::new(),
        };
        let target = group(step.s_next.0)?;
        let input = annot_input(expr, &reference, &remaining, &step, vocab, resample);
        let t = remaining
            .iter()
            .map(|r| if target.contains(r) { 1.0 } else { 0.0 })
            .collect();
        out.push((input, t));
        remaining.retain(|r| !target.contains(r));
    }
    Ok(out)
}

/// Fraction of symbols whose predicted trace set equals the reference.
pub fn symbol_accuracy(
    predictor: &dyn AnnotPredictor,
    steps: &[(AnnotInput, Vec<f64>)],
) -> Result<f64, NnError> {
    let mut ok = 0;
    for (x, t) in steps {
        let p = predictor.predict(x)?;
        ok += p
            .iter()
            .zip(t)
            .all(|(q, y)| (*q >= predictor.threshold()) == (*y > 0.5)) as usize;
    }
    Ok(ok as f64 / steps.len().max(1) as f64)
}

pub fn train_annotnet(
    steps: &[(AnnotInput, Vec<f64>)],
    config: AnnotNetConfig,
    train: &TrainConfig,
) -> Result<(AnnotNet, TrainReport), NnError> {
    if steps.is_empty() {
        return Err(NnError::Data("no annotation steps".into()));
    }
    let mut net = AnnotNet::new(config, train.seed);
    let shape = AnnotNet::shell(net.config.clone(), ParamSet::new());
    let w_fg = train.w_fg;
    let report = fit(
        train,
        &mut net.params,
        steps.len(),
        |g, idx| {
            let mut total: Option<Var> = None;
            for &i in idx {
                let (x, t) = &steps[i];
                let z = shape.forward(g, x)?;
                let l = g.weighted_bce_logits(z, t, w_fg);
                total = Some(match total {
                    Some(acc) => g.add(acc, l),
                    None => l,
                });
            }
            let total = total.expect("non-empty micro-batch");
            Ok(g.scale(total, 1.0 / idx.len() as f64))
        },
        |p| {
            let probe = AnnotNet::shell(shape.config.clone(), p.clone());
            symbol_accuracy(&probe, steps)
        },
    )?;
    Ok((net, report))
}

/// Why a cross-check rejected an annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    GroupMismatch,
    Top10,
    Top1,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::GroupMismatch => "group-mismatch",
            RejectReason::Top10 => "top10",
            RejectReason::Top1 => "top1",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class distributions for given trace groups.
pub trait Reclassifier: Sync {
    fn inventory(&self) -> &SymbolInventory;
    fn classify_groups(
        &self,
        expr: &Expression,
        groups: &[BTreeSet<TraceId>],
    ) -> Result<Vec<Vec<f64>>, NnError>;
}

impl Reclassifier for DualNet {
    fn inventory(&self) -> &SymbolInventory {
        DualNet::inventory(self)
    }

    fn classify_groups(
        &self,
        expr: &Expression,
        groups: &[BTreeSet<TraceId>],
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let order = baseline_order(expr, groups);
        let sorted: Vec<BTreeSet<TraceId>> = order.iter().map(|&i| groups[i].clone()).collect();
        let probs = self.classify_sequence(expr, &sorted)?;
        let mut out = vec![Vec::new(); groups.len()];
        for (p, &i) in probs.into_iter().zip(&order) {
            out[i] = p;
        }
        Ok(out)
    }
}

fn rank_of(label: &str, probs: &[f64], inventory: &SymbolInventory) -> Option<usize> {
    let c = inventory.index_of(label)?;
    Some(
        top_k(probs, probs.len())
            .iter()
            .position(|&(k, _)| k == c)?
            + 1,
    )
}

fn node_groups(slg: &StrokeLabelGraph) -> Vec<BTreeSet<TraceId>> {
    slg.nodes().iter().map(|n| n.trace_ids.clone()).collect()
}

/// With reference groups, the segmentation must match them exactly;
/// without, every label must rank in the classifier's top ten.
pub fn crosscheck_crohme(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    reference: Option<&[BTreeSet<TraceId>]>,
    classifier: &dyn Reclassifier,
) -> Result<Option<RejectReason>, NnError> {
    if let Some(r) = reference {
        let a: BTreeSet<&BTreeSet<TraceId>> = r.iter().collect();
        let groups = node_groups(slg);
        let b: BTreeSet<&BTreeSet<TraceId>> = groups.iter().collect();
        return Ok((a != b).then_some(RejectReason::GroupMismatch));
    }
    let probs = classifier.classify_groups(expr, &node_groups(slg))?;
    let ok = slg
        .nodes()
        .iter()
        .zip(&probs)
        .all(|(n, p)| rank_of(&n.label, p, classifier.inventory()).is_some_and(|r| r <= 10));
    Ok((!ok).then_some(RejectReason::Top10))
}

/// Every symbol's top reclassification must equal its label.
pub fn crosscheck_mathwriting(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    classifier: &dyn Reclassifier,
) -> Result<Option<RejectReason>, NnError> {
    let probs = classifier.classify_groups(expr, &node_groups(slg))?;
    let ok = slg
        .nodes()
        .iter()
        .zip(&probs)
        .all(|(n, p)| rank_of(&n.label, p, classifier.inventory()) == Some(1));
    Ok((!ok).then_some(RejectReason::Top1))
}

/// Filter applied to each annotation in [`annotate_corpus`].
pub enum Checker<'a> {
    None,
    Crohme(&'a dyn Reclassifier),
    MathWriting(&'a dyn Reclassifier),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum FileOutcome {
    Annotated,
    Rejected { reason: String },
    Failed { error: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub annotated: usize,
    pub rejected: usize,
    pub failed: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    pub files: BTreeMap<String, FileOutcome>,
}

impl CorpusReport {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.annotated, self.rejected, self.failed)
    }

    fn record(&mut self, name: String, outcome: FileOutcome) {
        match &outcome {
            FileOutcome::Annotated => self.annotated += 1,
            FileOutcome::Rejected { reason } => {
                self.rejected += 1;
                *self.rejected_by_reason.entry(reason.clone()).or_default() += 1;
            }
            FileOutcome::Failed { .. } => self.failed += 1,
        }
        self.files.insert(name, outcome);
    }

    pub fn to_text(&self) -> String {
        let total = self.annotated + self.rejected + self.failed;
        let mut s = String::new();
        writeln!(s, "files      {total}").unwrap();
        writeln!(s, "annotated  {}", self.annotated).unwrap();
        writeln!(s, "rejected   {}", self.rejected).unwrap();
        for (r, n) in &self.rejected_by_reason {
            writeln!(s, "  {r:<14} {n}").unwrap();
        }
        writeln!(s, "failed     {}", self.failed).unwrap();
        s
    }
}

fn annotate_file(
    path: &Path,
    predictor: &dyn AnnotPredictor,
    checker: &Checker,
    out_dir: &Path,
) -> Result<FileOutcome, AnnotError> {
    let file_err = |msg: String| AnnotError::File {
        path: path.to_path_buf(),
        msg,
    };
    let bytes = std::fs::read(path).map_err(|e| file_err(e.to_string()))?;
    let doc = parse_inkml(&bytes).map_err(|e| file_err(e.to_string()))?;
    let latex = doc
        .expression
        .latex_label()
        .ok_or_else(|| file_err("no LaTeX label".into()))?
        .trim()
        .trim_matches('$')
        .to_string();
    let slg = annotate_expression(&doc.expression, &latex, predictor)?;
    slg.check_traces(&doc.expression)?;
    let reference: Option<Vec<BTreeSet<TraceId>>> = (!doc.groups.is_empty()).then(|| {
        doc.groups
            .iter()
            .map(|g| g.trace_ids.iter().copied().collect())
            .collect()
    });
    let verdict = match checker {
        Checker::None => None,
        Checker::Crohme(c) => crosscheck_crohme(&doc.expression, &slg, reference.as_deref(), *c)?,
        Checker::MathWriting(c) => crosscheck_mathwriting(&doc.expression, &slg, *c)?,
    };
    if let Some(r) = verdict {
        return Ok(FileOutcome::Rejected {
            reason: r.as_str().to_string(),
        });
    }
    let xml = write_inkml(&doc.expression, Some(&slg)).map_err(|e| file_err(e.to_string()))?;
    let name = path.file_name().expect("listed files have names");
    std::fs::write(out_dir.join(name), xml).map_err(|e| file_err(e.to_string()))?;
    Ok(FileOutcome::Annotated)
}

/// Annotates every `.inkml` file of `input`, writing accepted ones with
/// their trace groups and MathML to `output`.
pub fn annotate_corpus(
    input: &Path,
    predictor: &dyn AnnotPredictor,
    checker: &Checker,
    output: &Path,
) -> Result<CorpusReport, AnnotError> {
    let io = |path: &Path, e: std::io::Error| AnnotError::File {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "inkml"))
        .collect();
    files.sort();
    std::fs::create_dir_all(output).map_err(|e| io(output, e))?;
    let mut report = CorpusReport::default();
    for f in files {
        let name = f
            .file_name()
            .expect("listed files have names")
            .to_string_lossy()
            .into_owned();
        let outcome = match annotate_file(&f, predictor, checker, output) {
            Ok(o) => o,
            Err(e) => FileOutcome::Failed {
                error: e.to_string(),
            },
        };
        report.record(name, outcome);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_latex, Style};

    fn vocab() -> AnnotVocab {
        AnnotVocab::new(SymbolInventory::from_labels(["A", "B", "2", ">", "x"]))
    }

    #[test]
    fn single_symbol() {
        let expr = Expression::from_point_arrays(&[vec![[0.0, 0.0], [1.0, 1.0]]]).unwrap();
        let slg =
            StrokeLabelGraph::new(vec![SymbolNode::new(0, [0], "x")], vec![Edge::root(0)]).unwrap();
        let out = annotate_expression(&expr, "x", &OracleAnnot::new(&slg, vocab())).unwrap();
        assert_eq!(out, slg);
    }

    #[test]
    fn oracle_recovers_subscripted_comparison() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = render_latex("A_2>B_2", &Style::default(), &mut rng).unwrap();
        let out =
            annotate_expression(&s.expr, "A_2>B_2", &OracleAnnot::new(&s.slg, vocab())).unwrap();
        assert!(out.same_structure(&s.slg));
    }

    #[test]
    fn extra_symbol_fails_and_leftover_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = render_latex("A>B", &Style::default(), &mut rng).unwrap();
        let o = OracleAnnot::new(&s.slg, vocab());
        assert!(
            matches!(annotate_expression(&s.expr, "A>B_2", &o), Err(AnnotError::EmptySelection { symbol, .. }) if symbol == "2")
        );
        assert!(matches!(
            annotate_expression(&s.expr, "A>", &o),
            Err(AnnotError::Unassigned(_))
        ));
    }

    #[test]
    fn unknown_symbols_share_a_bucket() {
        let v = vocab();
        assert_eq!(v.index("\\alpha"), v.oov());
        assert_eq!(v.index("\\beta"), v.oov());
        assert_ne!(v.index("A"), v.oov());
    }

    #[test]
    fn net_outputs_per_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = render_latex("A_2>B", &Style::default(), &mut rng).unwrap();
        let labels: Vec<String> = vocab().inventory().labels().to_vec();
        let net = AnnotNet::new(AnnotNetConfig::toy(&labels), 1);
        let steps = training_steps(&s.expr, &s.slg, "A_2>B", net.vocab(), net.resample()).unwrap();
        assert_eq!(steps.len(), 4);
        for (x, t) in &steps {
            let p = net.predict(x).unwrap();
            assert_eq!(p.len(), t.len());
            assert!(p.iter().all(|q| *q > 0.0 && *q < 1.0));
        }
        let back =
            AnnotNet::from_file(ModelFile::from_bytes(&net.to_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(
            back.predict(&steps[1].0).unwrap(),
            net.predict(&steps[1].0).unwrap()
        );
    }
}
