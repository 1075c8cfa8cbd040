//! Stage 1: incremental symbol segmentation. Windows are grown from the
//! rightmost unsegmented trace along the trace MST; a mask network picks
//! the traces that belong with the anchor and the loop peels them off.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    augment, build_trace_graph, mst_sort, normalize_window, rightmost_trace, AffineParams,
};
use crate::ink::{Expression, StrokeLabelGraph, SymbolId, Trace, TraceId};
use crate::nnet::graph::sigmoid;
use crate::nnet::layers::{BiLstm, Dense, Mha};
use crate::nnet::{
    fit, Graph, ModelFile, NnError, ParamSet, Tensor, TrainConfig, TrainReport, Var,
};

pub const MAX_CANDIDATES: usize = 20;
/// Per-point channels: x, y, trace ordinal / [`MAX_CANDIDATES`], pen-up flag.
pub const SEG_FEATURES: usize = 4;

/// Window construction and decision settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegOptions {
    pub max_candidates: usize,
    pub resample: usize,
    pub threshold: f64,
}

impl Default for SegOptions {
    fn default() -> Self {
        SegOptions {
            max_candidates: MAX_CANDIDATES,
            resample: crate::geometry::DEFAULT_RESAMPLE,
            threshold: 0.5,
        }
    }
}

/// Candidate traces around the current anchor with their point features.
#[derive(Clone, Debug, PartialEq)]
pub struct SegWindow {
    pub anchor: TraceId,
    /// MST attachment order from the anchor; `candidates[0] == anchor`.
    pub candidates: Vec<TraceId>,
    /// `[candidates.len() · resample, SEG_FEATURES]`.
    pub features: Tensor,
    pub resample: usize,
    pub degenerate: bool,
}

/// Builds the window over the given unsegmented traces.
pub fn build_window(traces: &[&Trace], opts: &SegOptions) -> SegWindow {
    let anchor = rightmost_trace(traces.iter().copied()).expect("window over at least one trace");
    let graph = build_trace_graph(traces.iter().copied());
    let candidates =
        mst_sort(&graph, anchor, opts.max_candidates.max(1)).expect("anchor is in the graph");
    let by_id: HashMap<TraceId, &Trace> = traces.iter().map(|t| (t.id(), *t)).collect();
    let ordered: Vec<&Trace> = candidates.iter().map(|id| by_id[id]).collect();
    let m = opts.resample.max(1);
    let nw = normalize_window(&ordered, m);
    let mut data = Vec::with_capacity(ordered.len() * m * SEG_FEATURES);
    for (i, pts) in nw.traces.iter().enumerate() {
        for (k, p) in pts.iter().enumerate() {
            let pen_up = if k + 1 == m { 1.0 } else { 0.0 };
            data.extend_from_slice(&[p.x, p.y, i as f64 / MAX_CANDIDATES as f64, pen_up]);
        }
    }
    SegWindow {
        anchor,
        features: Tensor::matrix(ordered.len() * m, SEG_FEATURES, data),
        candidates,
        resample: m,
        degenerate: nw.degenerate,
    }
}

/// Per-candidate membership probabilities for a window.
pub trait MaskPredictor: Sync {
    fn options(&self) -> SegOptions {
        SegOptions::default()
    }

    fn predict(&self, window: &SegWindow) -> Result<Vec<f64>, NnError>;
}

/// Traces accepted for the anchor's symbol. The anchor is always accepted.
pub fn accept(window: &SegWindow, probs: &[f64], threshold: f64) -> Vec<TraceId> {
    window
        .candidates
        .iter()
        .zip(probs)
        .enumerate()
        .filter(|(i, (_, &p))| *i == 0 || p >= threshold)
        .map(|(_, (&id, _))| id)
        .collect()
}

/// Partitions the expression's traces into symbols, in peel-off order
/// (right to left). Every iteration removes at least the anchor.
pub fn segment_expression(
    expr: &Expression,
    predictor: &dyn MaskPredictor,
) -> Result<Vec<Vec<TraceId>>, NnError> {
    let opts = predictor.options();
    let mut remaining: Vec<&Trace> = expr.traces().iter().collect();
    let mut groups = Vec::new();
    while !remaining.is_empty() {
        let window = build_window(&remaining, &opts);
        let probs = predictor.predict(&window)?;
        if probs.len() != window.candidates.len() {
            return Err(NnError::Data(format!(
                "mask has {} entries for {} candidates",
                probs.len(),
                window.candidates.len()
            )));
        }
        let mut group = accept(&window, &probs, opts.threshold);
        group.sort_unstable();
        remaining.retain(|t| group.binary_search(&t.id()).is_err());
        groups.push(group);
    }
    Ok(groups)
}

/// Trace-to-symbol map of a labelled graph.
pub fn symbol_of_trace(slg: &StrokeLabelGraph) -> HashMap<TraceId, SymbolId> {
    slg.nodes()
        .iter()
        .flat_map(|n| n.trace_ids.iter().map(move |&t| (t, n.id)))
        .collect()
}

/// Accepts exactly the candidates that share the anchor's reference symbol.
#[derive(Clone, Debug)]
pub struct OracleMask {
    group: HashMap<TraceId, SymbolId>,
    pub opts: SegOptions,
}

impl OracleMask {
    pub fn new(slg: &StrokeLabelGraph) -> Self {
        OracleMask {
            group: symbol_of_trace(slg),
            opts: SegOptions::default(),
        }
    }
}

impl MaskPredictor for OracleMask {
    fn options(&self) -> SegOptions {
        self.opts
    }

    fn predict(&self, window: &SegWindow) -> Result<Vec<f64>, NnError> {
        Ok(window_targets(window, &self.group))
    }
}

fn window_targets(window: &SegWindow, group: &HashMap<TraceId, SymbolId>) -> Vec<f64> {
    let a = group.get(&window.anchor);
    window
        .candidates
        .iter()
        .map(|c| {
            if a.is_some() && group.get(c) == a {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Teacher-forced windows of one annotated expression with their targets.
pub fn training_windows(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    opts: &SegOptions,
) -> Vec<(SegWindow, Vec<f64>)> {
    let group = symbol_of_trace(slg);
    let mut remaining: Vec<&Trace> = expr.traces().iter().collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let w = build_window(&remaining, opts);
        let target = window_targets(&w, &group);
        let anchor_sym = group.get(&w.anchor).copied();
        remaining.retain(|t| {
            t.id() != w.anchor
                && (anchor_sym.is_none() || group.get(&t.id()) != anchor_sym.as_ref())
        });
        out.push((w, target));
    }
    out
}

/// Window statistics for the MST candidate ordering against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SortingStats {
    pub windows: usize,
    /// Windows whose candidates contain every trace of the anchor's symbol.
    pub recalled: usize,
    /// Windows where those traces are exactly the leading candidates.
    pub exact: usize,
}

impl SortingStats {
    pub fn candidate_recall(&self) -> f64 {
        ratio(self.recalled, self.windows)
    }

    pub fn order_exactness(&self) -> f64 {
        ratio(self.exact, self.windows)
    }

    pub fn merge(&mut self, o: &SortingStats) {
        self.windows += o.windows;
        self.recalled += o.recalled;
        self.exact += o.exact;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn sorting_stats(expr: &Expression, slg: &StrokeLabelGraph, opts: &SegOptions) -> SortingStats {
    let group = symbol_of_trace(slg);
    let mut s = SortingStats::default();
    let mut remaining: Vec<&Trace> = expr.traces().iter().collect();
    while !remaining.is_empty() {
        let w = build_window(&remaining, opts);
        let sym = group.get(&w.anchor).copied();
        let truth: BTreeSet<TraceId> = remaining
            .iter()
            .map(|t| t.id())
            .filter(|t| *t == w.anchor || (sym.is_some() && group.get(t) == sym.as_ref()))
            .collect();
        let cands: BTreeSet<TraceId> = w.candidates.iter().copied().collect();
        let lead: BTreeSet<TraceId> = w.candidates.iter().take(truth.len()).copied().collect();
        s.windows += 1;
        s.recalled += truth.is_subset(&cands) as usize;
        s.exact += (lead == truth) as usize;
        remaining.retain(|t| !truth.contains(&t.id()));
    }
    s
}

/// Architecture of [`SegNet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegNetConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub options: SegOptions,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            hidden: 64,
            layers: 2,
            heads: 8,
            options: SegOptions::default(),
        }
    }
}

impl SegNetConfig {
    /// Small variant for desk-scale training.
    pub fn toy() -> Self {
        SegNetConfig {
            hidden: 8,
            layers: 2,
            heads: 2,
            options: SegOptions {
                resample: 8,
                ..SegOptions::default()
            },
        }
    }
}

/// BiLSTM stack, residual self-attention, per-point logit, per-trace mean.
#[derive(Clone, Debug, PartialEq)]
pub struct SegNet {
    pub config: SegNetConfig,
    pub params: ParamSet,
}

pub const SEGNET_KIND: &str = "segnet";

impl SegNet {
    fn lstms(&self) -> Vec<BiLstm> {
        lstm_stack(&self.config)
    }

    fn mha(&self) -> Mha {
        Mha::new("seg.mha", 2 * self.config.hidden, self.config.heads)
    }

    fn head(&self) -> Dense {
        Dense::new("seg.head", 2 * self.config.hidden, 1)
    }

    pub fn new(config: SegNetConfig, seed: u64) -> Self {
        let mut net = SegNet {
            config,
            params: ParamSet::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        for l in net.lstms() {
            l.init(&mut p, &mut rng);
        }
        net.mha().init(&mut p, &mut rng);
        net.head().init(&mut p, &mut rng);
        net.params = p;
        net
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NnError> {
        let config: SegNetConfig = file.unpack(SEGNET_KIND)?;
        let net = SegNet {
            config,
            params: file.params,
        };
        for l in net.lstms() {
            l.check(&net.params)?;
        }
        net.mha().check(&net.params)?;
        net.head().check(&net.params)?;
        Ok(net)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::pack(SEGNET_KIND, &self.config, self.params.clone())
    }

    /// Per-candidate logits `[n, 1]`.
    pub fn forward(&self, g: &mut Graph, window: &SegWindow) -> Result<Var, NnError> {
        let x = g.input(window.features.clone());
        let mut h = x;
        for l in self.lstms() {
            h = l.forward(g, h)?;
        }
        let a = self.mha().forward(g, h)?;
        let h = g.add(h, a);
        let z = self.head().forward(g, h)?;
        let m = window.resample;
        let pooled: Vec<Var> = (0..window.candidates.len())
            .map(|i| {
                let s = g.slice_rows(z, i * m, m);
                g.mean_rows(s)
            })
            .collect();
        Ok(g.concat_rows(&pooled))
    }
}

fn lstm_stack(c: &SegNetConfig) -> Vec<BiLstm> {
    (0..c.layers.max(1))
        .map(|i| {
            BiLstm::new(
                &format!("seg.lstm{i}"),
                if i == 0 { SEG_FEATURES } else { 2 * c.hidden },
                c.hidden,
            )
        })
        .collect()
}

impl MaskPredictor for SegNet {
    fn options(&self) -> SegOptions {
        self.config.options
    }

    fn predict(&self, window: &SegWindow) -> Result<Vec<f64>, NnError> {
        let mut g = Graph::eval(&self.params);
        let z = self.forward(&mut g, window)?;
        Ok(g.value(z).data().iter().map(|&v| sigmoid(v)).collect())
    }
}

/// Fraction of windows whose accepted set equals the target set.
pub fn window_accuracy(
    predictor: &dyn MaskPredictor,
    windows: &[(SegWindow, Vec<f64>)],
) -> Result<f64, NnError> {
    let opts = predictor.options();
    let mut ok = 0;
    for (w, t) in windows {
        let p = predictor.predict(w)?;
        let got: BTreeSet<TraceId> = accept(w, &p, opts.threshold).into_iter().collect();
        let want: BTreeSet<TraceId> = accept(w, t, 0.5).into_iter().collect();
        ok += (got == want) as usize;
    }
    Ok(ratio(ok, windows.len()))
}

/// Trains a segmentation network on teacher-forced windows. With
/// `augment`, every expression also contributes one randomly distorted copy.
pub fn train_segnet(
    corpus: &[(Expression, StrokeLabelGraph)],
    config: SegNetConfig,
    train: &TrainConfig,
) -> Result<(SegNet, TrainReport), NnError> {
    let mut windows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5e6);
    for (expr, slg) in corpus {
        windows.extend(training_windows(expr, slg, &config.options));
        if train.augment {
            let traces = augment(expr.traces(), &AffineParams::default(), &mut rng)
                .map_err(|e| NnError::Data(e.to_string()))?;
            let aug = Expression::new(traces, expr.source_id(), None).expect("ids preserved");
            windows.extend(training_windows(&aug, slg, &config.options));
        }
    }
    if windows.is_empty() {
        return Err(NnError::Data("no segmentation windows".into()));
    }
    let mut net = SegNet::new(config, train.seed);
    let shape = net.clone();
    let w_fg = train.w_fg;
    let report = fit(
        train,
        &mut net.params,
        windows.len(),
        |g, idx| {
            let mut total: Option<Var> = None;
            for &i in idx {
                let (w, t) = &windows[i];
                let z = shape.forward(g, w)?;
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
            let probe = SegNet {
                config: shape.config.clone(),
                params: p.clone(),
            };
            window_accuracy(&probe, &windows)
        },
    )?;
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::Point;
    use crate::synth::{render_latex, Style};

    fn line(id: TraceId, x0: f64, x1: f64) -> Trace {
        Trace::new(id, vec![Point::new(x0, 0.0), Point::new(x1, 1.0)]).unwrap()
    }

    struct AnchorOnly;

    impl MaskPredictor for AnchorOnly {
        fn predict(&self, w: &SegWindow) -> Result<Vec<f64>, NnError> {
            Ok(vec![0.0; w.candidates.len()])
        }
    }

    #[test]
    fn single_trace_window() {
        let t = line(3, 0.0, 1.0);
        let w = build_window(&[&t], &SegOptions::default());
        assert_eq!(w.candidates, vec![3]);
        assert_eq!(w.features.shape(), &[32, SEG_FEATURES]);
        assert_eq!(accept(&w, &[0.0], 0.5), vec![3]);
    }

    #[test]
    fn window_caps_candidates_at_twenty() {
        let ts: Vec<Trace> = (0..25).map(|i| line(i, i as f64, i as f64 + 0.5)).collect();
        let refs: Vec<&Trace> = ts.iter().collect();
        let w = build_window(&refs, &SegOptions::default());
        assert_eq!(w.candidates.len(), 20);
        assert_eq!(w.anchor, 24);
        assert_eq!(w.candidates[0], 24);
        assert_eq!(w.candidates[1], 23);
    }

    #[test]
    fn anchor_only_gives_singletons() {
        let ts: Vec<Trace> = (0..6)
            .map(|i| line(i, i as f64 * 2.0, i as f64 * 2.0 + 1.0))
            .collect();
        let e = Expression::new(ts, "", None).unwrap();
        let groups = segment_expression(&e, &AnchorOnly).unwrap();
        assert_eq!(groups, (0..6).rev().map(|i| vec![i]).collect::<Vec<_>>());
    }

    #[test]
    fn oracle_recovers_fig1_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = render_latex("A_2>B_2", &Style::default(), &mut rng).unwrap();
        let groups = segment_expression(&s.expr, &OracleMask::new(&s.slg)).unwrap();
        assert_eq!(groups.len(), 5);
        let mut got: Vec<BTreeSet<TraceId>> = groups
            .into_iter()
            .map(|g| g.into_iter().collect())
            .collect();
        let mut want: Vec<BTreeSet<TraceId>> =
            s.slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        let st = sorting_stats(&s.expr, &s.slg, &SegOptions::default());
        assert_eq!(st.windows, 5);
        assert_eq!(st.candidate_recall(), 1.0);
    }

    #[test]
    fn random_weights_give_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = render_latex("x+1", &Style::default(), &mut rng).unwrap();
        let net = SegNet::new(SegNetConfig::toy(), 1);
        let w = build_window(
            &s.expr.traces().iter().collect::<Vec<_>>(),
            &net.config.options,
        );
        let p = net.predict(&w).unwrap();
        assert_eq!(p.len(), w.candidates.len());
        assert!(p.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        let back =
            SegNet::from_file(ModelFile::from_bytes(&net.to_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.predict(&w).unwrap(), p);
    }
}
