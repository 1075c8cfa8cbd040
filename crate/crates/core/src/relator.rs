//! Stages 3 and 5: pairwise relation scoring over symbols in baseline
//! order and decoding of the scores into a relation tree.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{baseline_order, top_k, StructMask};
use crate::geometry::{normalize_window, DEFAULT_RESAMPLE};
use crate::ink::{
    BBox, Edge, EdgeSource, Expression, RelationLabel, StrokeLabelGraph, SymbolCategory, SymbolId,
    SymbolInventory, SymbolNode, Trace, TraceId,
};
use crate::nnet::graph::log_softmax_rows;
use crate::nnet::layers::{BiLstm, Dense, LayerNorm, Mha};
use crate::nnet::{
    fit, Graph, ModelFile, NnError, ParamSet, Tensor, TrainConfig, TrainReport, Var,
};
use crate::segmenter::symbol_of_trace;

const R: usize = RelationLabel::COUNT;
const NONE: usize = 6;
const LINE_START: usize = 5;

/// A symbol as seen by the relation stage.
#[derive(Clone, Debug, PartialEq)]
pub struct RelSymbol {
    pub traces: Vec<Trace>,
    pub probs: Vec<f64>,
    pub mask: StructMask,
}

/// Log-probabilities over the six relations and `none` for every forward
/// pair `(i, j)`, `i < j`, and for every `(ROOT, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScores {
    n: usize,
    pairs: Vec<[f64; R]>,
    root: Vec<[f64; R]>,
}

impl PairScores {
    /// Scores with every vector set to `none` with certainty.
    pub fn empty(n: usize) -> Self {
        let mut v = [f64::NEG_INFINITY; R];
        v[NONE] = 0.0;
        PairScores {
            n,
            pairs: vec![v; n * n],
            root: vec![v; n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pair(&self, i: usize, j: usize) -> &[f64; R] {
        assert!(i < j && j < self.n, "pair ({i}, {j}) out of range");
        &self.pairs[i * self.n + j]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, logp: [f64; R]) {
        assert!(i < j && j < self.n, "pair ({i}, {j}) out of range");
        self.pairs[i * self.n + j] = logp;
    }

    pub fn root(&self, j: usize) -> &[f64; R] {
        &self.root[j]
    }

    pub fn set_root(&mut self, j: usize, logp: [f64; R]) {
        self.root[j] = logp;
    }

    /// Pair matrix as CSV: `src,dst,right,sup,sub,over,under,line_start,none`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("src,dst");
        for r in RelationLabel::ALL {
            s.push(',');
            s.push_str(r.as_str());
        }
        s.push('\n');
        let mut row = |src: String, j: usize, v: &[f64; R]| {
            s.push_str(&format!("{src},{j}"));
            for x in v {
                s.push_str(&format!(",{x:.6}"));
            }
            s.push('\n');
        };
        for j in 0..self.n {
            row("ROOT".into(), j, &self.root[j]);
        }
        for i in 0..self.n {
            for j in i + 1..self.n {
                row(i.to_string(), j, self.pair(i, j));
            }
        }
        s
    }
}

const CLAMP: f64 = 1e6;
const FORBIDDEN: f64 = 1e9;

fn gain(v: &[f64; R], r: RelationLabel) -> f64 {
    (v[r.index()].max(-CLAMP) - v[NONE].max(-CLAMP)).clamp(-CLAMP, CLAMP)
}

/// Log-likelihood of a tree: every forward pair contributes the score of
/// its edge label or of `none`, every ROOT pair that of `line_start` or `none`.
pub fn tree_score(scores: &PairScores, edges: &[Edge]) -> f64 {
    let n = scores.len();
    let mut label: HashMap<(Option<usize>, usize), usize> = HashMap::new();
    for e in edges {
        let src = match e.src {
            EdgeSource::Root => None,
            EdgeSource::Node(s) => Some(s as usize),
        };
        label.insert((src, e.dst as usize), e.label.index());
    }
    let pick = |v: &[f64; R], k: Option<&usize>| v[*k.unwrap_or(&NONE)].max(-CLAMP);
    let mut total = 0.0;
    for j in 0..n {
        total += pick(scores.root(j), label.get(&(None, j)));
        for i in 0..j {
            total += pick(scores.pair(i, j), label.get(&(Some(i), j)));
        }
    }
    total
}

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`),
/// by shortest augmenting paths with potentials.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let (mut p, mut way) = (vec![0usize; m + 1], vec![0usize; m + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut ans = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            ans[p[j] - 1] = j - 1;
        }
    }
    ans
}

/// Decodes scores into a tree over node indices. Node 0 takes the
/// `line_start` edge (no earlier symbol can point at it); every other node
/// gets exactly one incoming edge from an earlier node, and each source
/// holds at most one outgoing edge per relation. Among those trees the one
/// with the highest [`tree_score`] is returned.
pub fn decode_tree(scores: &PairScores) -> Vec<Edge> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    let mut edges = vec![Edge::root(0)];
    if n == 1 {
        return edges;
    }
    let k = RelationLabel::PAIRWISE.len();
    let cols = (n - 1) * k;
    let cost: Vec<Vec<f64>> = (1..n)
        .map(|j| {
            (0..cols)
                .map(|c| {
                    let (i, r) = (c / k, RelationLabel::PAIRWISE[c % k]);
                    if i < j {
                        -gain(scores.pair(i, j), r)
                    } else {
                        FORBIDDEN
                    }
                })
                .collect()
        })
        .collect();
    for (row, c) in hungarian(&cost).into_iter().enumerate() {
        let (i, r) = (c / k, RelationLabel::PAIRWISE[c % k]);
        edges.push(Edge::new(i as SymbolId, (row + 1) as SymbolId, r));
    }
    edges
}

/// Best tree by depth-first enumeration of every constraint-satisfying
/// assignment. Exponential; for checking [`decode_tree`] on small inputs.
pub fn exhaustive_tree(scores: &PairScores) -> (Vec<Edge>, f64) {
    let n = scores.len();
    let k = RelationLabel::PAIRWISE.len();
    let mut used = vec![[false; 5]; n];
    let mut cur: Vec<(usize, usize)> = Vec::new();
    let mut best: (f64, Vec<(usize, usize)>) = (f64::NEG_INFINITY, Vec::new());
    fn dfs(
        j: usize,
        n: usize,
        k: usize,
        scores: &PairScores,
        used: &mut Vec<[bool; 5]>,
        cur: &mut Vec<(usize, usize)>,
        acc: f64,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if j == n {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for i in 0..j {
            for r in 0..k {
                if used[i][r] {
                    continue;
                }
                used[i][r] = true;
                cur.push((i, r));
                let g = gain(scores.pair(i, j), RelationLabel::PAIRWISE[r]);
                dfs(j + 1, n, k, scores, used, cur, acc + g, best);
                cur.pop();
                used[i][r] = false;
            }
        }
    }
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    dfs(1, n, k, scores, &mut used, &mut cur, 0.0, &mut best);
    let mut edges = vec![Edge::root(0)];
    for (j, &(i, r)) in best.1.iter().enumerate() {
        edges.push(Edge::new(
            i as SymbolId,
            (j + 1) as SymbolId,
            RelationLabel::PAIRWISE[r],
        ));
    }
    let s = tree_score(scores, &edges);
    (edges, s)
}

/// True when no source has two outgoing edges with the same relation.
pub fn one_max_holds(edges: &[Edge]) -> bool {
    let mut seen = BTreeSet::new();
    edges.iter().all(|e| seen.insert((e.src, e.label)))
}

/// Validator for decoded index trees: SLG invariants plus one-max.
pub fn check_decoded(n: usize, edges: &[Edge]) -> Result<(), String> {
    let nodes: Vec<SymbolNode> = (0..n)
        .map(|i| SymbolNode::new(i as SymbolId, [i as TraceId], "x"))
        .collect();
    crate::ink::validate(&nodes, edges).map_err(|e| e.to_string())?;
    if !one_max_holds(edges) {
        return Err("a source emits two edges with the same relation".into());
    }
    Ok(())
}

/// Source of pair scores for the pipeline.
pub trait RelationScorer: Sync {
    fn score(&self, symbols: &[RelSymbol]) -> Result<PairScores, NnError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelNetConfig {
    pub classes: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub head: usize,
    pub leaky_slope: f64,
    pub top_k: usize,
    pub resample: usize,
    pub attention: bool,
}

impl Default for RelNetConfig {
    fn default() -> Self {
        RelNetConfig {
            classes: 101,
            hidden: 64,
            layers: 2,
            heads: 8,
            dropout: 0.4,
            head: 128,
            leaky_slope: 0.01,
            top_k: 5,
            resample: DEFAULT_RESAMPLE,
            attention: true,
        }
    }
}

impl RelNetConfig {
    pub fn toy(classes: usize) -> Self {
        RelNetConfig {
            classes,
            hidden: 8,
            heads: 2,
            head: 16,
            dropout: 0.1,
            resample: 6,
            ..RelNetConfig::default()
        }
    }

    fn static_dim(&self) -> usize {
        GEOM_FEATURES + 2 * self.classes + 2 * SymbolCategory::COUNT + 1
    }
}

/// Per-point channels: x, y, pen-up flag, owner flag (0 source, 1 target).
pub const PAIR_POINT_FEATURES: usize = 4;
const GEOM_FEATURES: usize = 7;

/// Input of one pair (or ROOT pair when `src` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput {
    pub seq: Tensor,
    pub stat: Tensor,
}

fn truncated(p: &[f64], k: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    for (c, q) in top_k(p, k) {
        if c < classes {
            v[c] = q;
        }
    }
    v
}

fn geometry_features(a: &BBox, b: &BBox) -> [f64; GEOM_FEATURES] {
    let s = a.width().max(a.height()).max(1e-6);
    let (ca, cb) = (a.center(), b.center());
    [
        (cb.x - ca.x) / s,
        (cb.y - ca.y) / s,
        (b.min_x - a.max_x) / s,
        (b.min_y - a.max_y) / s,
        (a.min_y - b.max_y) / s,
        (b.height().max(1e-6 * s) / a.height().max(1e-6 * s)).ln(),
        (b.width().max(1e-6 * s) / a.width().max(1e-6 * s)).ln(),
    ]
}

pub fn pair_input(src: Option<&RelSymbol>, dst: &RelSymbol, cfg: &RelNetConfig) -> PairInput {
    let mut traces: Vec<&Trace> = Vec::new();
    let mut owner = Vec::new();
    if let Some(s) = src {
        traces.extend(s.traces.iter());
        owner.extend(std::iter::repeat_n(0.0, s.traces.len()));
    }
    traces.extend(dst.traces.iter());
    owner.extend(std::iter::repeat_n(1.0, dst.traces.len()));
    let m = cfg.resample.max(1);
    let nw = normalize_window(&traces, m);
    let mut data = Vec::with_capacity(traces.len() * m * PAIR_POINT_FEATURES);
    for (t, pts) in nw.traces.iter().enumerate() {
        for (k, p) in pts.iter().enumerate() {
            data.extend_from_slice(&[p.x, p.y, if k + 1 == m { 1.0 } else { 0.0 }, owner[t]]);
        }
    }
    let bb = |s: &RelSymbol| BBox::of_traces(s.traces.iter()).expect("symbols have traces");
    let mut stat = Vec::with_capacity(cfg.static_dim());
    match src {
        Some(s) => {
            stat.extend(geometry_features(&bb(s), &bb(dst)));
            stat.extend(truncated(&s.probs, cfg.top_k, cfg.classes));
        }
        None => {
            stat.extend([0.0; GEOM_FEATURES]);
            stat.extend(vec![0.0; cfg.classes]);
        }
    }
    stat.extend(truncated(&dst.probs, cfg.top_k, cfg.classes));
    stat.extend(src.map_or([0.0; SymbolCategory::COUNT], |s| s.mask.0));
    stat.extend(dst.mask.0);
    stat.push(if src.is_none() { 1.0 } else { 0.0 });
    PairInput {
        seq: Tensor::matrix(traces.len() * m, PAIR_POINT_FEATURES, data),
        stat: Tensor::row(stat),
    }
}

/// BiLSTM stack, self-attention, mean pooling, static pair features,
/// dense → layer norm → leaky ReLU → dense over the seven classes.
#[derive(Clone, Debug, PartialEq)]
pub struct RelNet {
    pub config: RelNetConfig,
    pub params: ParamSet,
}

pub const RELNET_KIND: &str = "relnet";

impl RelNet {
    fn lstms(&self) -> Vec<BiLstm> {
        let c = &self.config;
        (0..c.layers.max(1))
            .map(|i| {
                BiLstm::new(
                    &format!("rel.lstm{i}"),
                    if i == 0 {
                        PAIR_POINT_FEATURES
                    } else {
                        2 * c.hidden
                    },
                    c.hidden,
                )
            })
            .collect()
    }

    fn mha(&self) -> Mha {
        Mha::new("rel.mha", 2 * self.config.hidden, self.config.heads)
    }

    fn fc1(&self) -> Dense {
        Dense::new(
            "rel.fc1",
            2 * self.config.hidden + self.config.static_dim(),
            self.config.head,
        )
    }

    fn ln(&self) -> LayerNorm {
        LayerNorm::new("rel.ln", self.config.head)
    }

    fn fc2(&self) -> Dense {
        Dense::new("rel.fc2", self.config.head, R)
    }

    pub fn new(config: RelNetConfig, seed: u64) -> Self {
        let mut net = RelNet {
            config,
            params: ParamSet::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        for l in net.lstms() {
            l.init(&mut p, &mut rng);
        }
        net.mha().init(&mut p, &mut rng);
        net.fc1().init(&mut p, &mut rng);
        net.ln().init(&mut p);
        net.fc2().init(&mut p, &mut rng);
        net.params = p;
        net
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NnError> {
        let net = RelNet {
            config: file.unpack(RELNET_KIND)?,
            params: file.params,
        };
        for l in net.lstms() {
            l.check(&net.params)?;
        }
        net.mha().check(&net.params)?;
        net.fc1().check(&net.params)?;
        net.ln().check(&net.params)?;
        net.fc2().check(&net.params)?;
        Ok(net)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::pack(RELNET_KIND, &self.config, self.params.clone())
    }

    /// Unnormalized class scores `[1, 7]` of one pair.
    pub fn forward(&self, g: &mut Graph, x: &PairInput) -> Result<Var, NnError> {
        let mut h = g.input(x.seq.clone());
        for l in self.lstms() {
            h = l.forward(g, h)?;
            h = g.dropout(h, self.config.dropout);
        }
        if self.config.attention {
            let a = self.mha().forward(g, h)?;
            h = g.add(h, a);
        }
        let pooled = g.mean_rows(h);
        let stat = g.input(x.stat.clone());
        let z = g.concat_cols(&[pooled, stat]);
        let z = self.fc1().forward(g, z)?;
        let z = self.ln().forward(g, z)?;
        let z = g.leaky_relu(z, self.config.leaky_slope);
        self.fc2().forward(g, z)
    }

    pub fn log_probs(&self, x: &PairInput) -> Result<[f64; R], NnError> {
        let mut g = Graph::eval(&self.params);
        let z = self.forward(&mut g, x)?;
        let lp = g.log_softmax_rows(z);
        Ok(g.value(lp).data().try_into().expect("seven classes"))
    }
}

impl RelationScorer for RelNet {
    fn score(&self, symbols: &[RelSymbol]) -> Result<PairScores, NnError> {
        let n = symbols.len();
        let mut s = PairScores::empty(n);
        for j in 0..n {
            s.set_root(
                j,
                self.log_probs(&pair_input(None, &symbols[j], &self.config))?,
            );
            for i in 0..j {
                s.set_pair(
                    i,
                    j,
                    self.log_probs(&pair_input(Some(&symbols[i]), &symbols[j], &self.config))?,
                );
            }
        }
        Ok(s)
    }
}

/// Scores then decodes; used for both the first and the revised pass.
pub fn relate(
    scorer: &dyn RelationScorer,
    symbols: &[RelSymbol],
) -> Result<(PairScores, Vec<Edge>), NnError> {
    let s = scorer.score(symbols)?;
    let e = decode_tree(&s);
    Ok((s, e))
}

/// Target relation of every forward and ROOT pair of a reference tree,
/// given which reference node sits at each baseline position.
pub fn pair_targets(slg: &StrokeLabelGraph, order: &[SymbolId]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let pos: HashMap<SymbolId, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = order.len();
    let mut pairs = vec![vec![NONE; n]; n];
    let mut root = vec![NONE; n];
    for e in slg.edges() {
        let j = pos[&e.dst];
        match e.src {
            EdgeSource::Root => root[j] = LINE_START,
            EdgeSource::Node(s) => {
                let i = pos[&s];
                if i < j {
                    pairs[i][j] = e.label.index();
                }
            }
        }
    }
    (pairs, root)
}

/// One training example per forward pair and per ROOT pair.
pub fn training_pairs(
    symbols: &[RelSymbol],
    slg: &StrokeLabelGraph,
    order: &[SymbolId],
    cfg: &RelNetConfig,
) -> Vec<(PairInput, usize)> {
    let (pairs, root) = pair_targets(slg, order);
    let mut out = Vec::new();
    for j in 0..symbols.len() {
        out.push((pair_input(None, &symbols[j], cfg), root[j]));
        for i in 0..j {
            out.push((pair_input(Some(&symbols[i]), &symbols[j], cfg), pairs[i][j]));
        }
    }
    out
}

pub fn pair_accuracy(net: &RelNet, data: &[(PairInput, usize)]) -> Result<f64, NnError> {
    let mut ok = 0;
    for (x, y) in data {
        let lp = net.log_probs(x)?;
        let best = (0..R)
            .max_by(|&a, &b| lp[a].total_cmp(&lp[b]).then(b.cmp(&a)))
            .unwrap();
        ok += (best == *y) as usize;
    }
    Ok(ok as f64 / data.len().max(1) as f64)
}

pub fn train_relnet(
    data: &[(PairInput, usize)],
    config: RelNetConfig,
    train: &TrainConfig,
) -> Result<(RelNet, TrainReport), NnError> {
    if data.is_empty() {
        return Err(NnError::Data("no relation pairs".into()));
    }
    let mut net = RelNet::new(config, train.seed);
    let shape = RelNet {
        config: net.config.clone(),
        params: ParamSet::new(),
    };
    let report = fit(
        train,
        &mut net.params,
        data.len(),
        |g, idx| {
            let mut rows = Vec::with_capacity(idx.len());
            for &i in idx {
                rows.push(shape.forward(g, &data[i].0)?);
            }
            let z = g.concat_rows(&rows);
            let t: Vec<usize> = idx.iter().map(|&i| data[i].1).collect();
            Ok(g.cross_entropy(z, &t, &vec![1.0; idx.len()]))
        },
        |p| {
            let probe = RelNet {
                config: shape.config.clone(),
                params: p.clone(),
            };
            pair_accuracy(&probe, data)
        },
    )?;
    Ok((net, report))
}

/// Symbols for the relation stage from groups already in baseline order.
/// Each mask covers the argmax labels of the preceding symbols.
pub fn rel_symbols(
    expr: &Expression,
    groups: &[BTreeSet<TraceId>],
    probs: &[Vec<f64>],
    inventory: &SymbolInventory,
) -> Vec<RelSymbol> {
    let labels: Vec<&str> = probs
        .iter()
        .map(|p| {
            top_k(p, 1)
                .first()
                .and_then(|&(c, _)| inventory.label(c))
                .unwrap_or_default()
        })
        .collect();
    groups
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (g, p))| RelSymbol {
            traces: g.iter().filter_map(|t| expr.trace(*t)).cloned().collect(),
            probs: p.clone(),
            mask: StructMask::from_previous(&labels[..i], inventory),
        })
        .collect()
}

/// Second relation pass over the same groups with corrected class
/// distributions.
pub fn revise_relations(
    scorer: &dyn RelationScorer,
    expr: &Expression,
    groups: &[BTreeSet<TraceId>],
    corrected: &[Vec<f64>],
    inventory: &SymbolInventory,
) -> Result<(PairScores, Vec<Edge>), NnError> {
    relate(scorer, &rel_symbols(expr, groups, corrected, inventory))
}

/// Reference groups in baseline order with one-hot class distributions,
/// plus the reference node id at every position.
pub fn reference_symbols(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    inventory: &SymbolInventory,
) -> Result<(Vec<RelSymbol>, Vec<SymbolId>), NnError> {
    let groups: Vec<BTreeSet<TraceId>> = slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
    let order = baseline_order(expr, &groups);
    let sorted: Vec<BTreeSet<TraceId>> = order.iter().map(|&i| groups[i].clone()).collect();
    let probs = order
        .iter()
        .map(|&i| {
            let l = &slg.nodes()[i].label;
            let c = inventory
                .index_of(l)
                .ok_or_else(|| NnError::Data(format!("label '{l}' not in inventory")))?;
            Ok((0..inventory.len())
                .map(|k| if k == c { 1.0 } else { 0.0 })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>, NnError>>()?;
    let ids = order.iter().map(|&i| slg.nodes()[i].id).collect();
    Ok((rel_symbols(expr, &sorted, &probs, inventory), ids))
}

/// Training pairs of one annotated expression.
pub fn expression_pairs(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    inventory: &SymbolInventory,
    cfg: &RelNetConfig,
) -> Result<Vec<(PairInput, usize)>, NnError> {
    let (symbols, ids) = reference_symbols(expr, slg, inventory)?;
    Ok(training_pairs(&symbols, slg, &ids, cfg))
}

/// Scores read off a reference graph: the reference relation of each pair
/// is certain, everything else is `none`.
pub struct OracleRelations {
    owner: HashMap<TraceId, SymbolId>,
    slg: StrokeLabelGraph,
}

impl OracleRelations {
    pub fn new(slg: &StrokeLabelGraph) -> Self {
        OracleRelations {
            owner: symbol_of_trace(slg),
            slg: slg.clone(),
        }
    }

    fn certain(k: usize) -> [f64; R] {
        let mut v = [f64::NEG_INFINITY; R];
        v[k] = 0.0;
        v
    }
}

impl RelationScorer for OracleRelations {
    fn score(&self, symbols: &[RelSymbol]) -> Result<PairScores, NnError> {
        let ids: Vec<Option<SymbolId>> = symbols
            .iter()
            .map(|s| {
                s.traces
                    .first()
                    .and_then(|t| self.owner.get(&t.id()).copied())
            })
            .collect();
        let mut sc = PairScores::empty(symbols.len());
        for j in 0..symbols.len() {
            let Some(inc) = ids[j].and_then(|d| self.slg.incoming(d)) else {
                continue;
            };
            match inc.src {
                EdgeSource::Root => sc.set_root(j, Self::certain(LINE_START)),
                EdgeSource::Node(s) => {
                    if let Some(i) = (0..j).find(|&i| ids[i] == Some(s)) {
                        sc.set_pair(i, j, Self::certain(inc.label.index()));
                    }
                }
            }
        }
        Ok(sc)
    }
}

/// Normalizes arbitrary finite logits into pair scores (for fuzzing).
pub fn scores_from_logits(n: usize, logits: &[f64]) -> PairScores {
    assert_eq!(logits.len(), n * n * R + n * R, "logit count");
    let norm = |s: &[f64]| -> [f64; R] {
        let t = log_softmax_rows(&Tensor::row(s.to_vec()));
        t.data().try_into().unwrap()
    };
    let mut sc = PairScores::empty(n);
    for j in 0..n {
        sc.set_root(j, norm(&logits[n * n * R + j * R..n * n * R + (j + 1) * R]));
        for i in 0..j {
            let o = (i * n + j) * R;
            sc.set_pair(i, j, norm(&logits[o..o + R]));
        }
    }
    sc
}
