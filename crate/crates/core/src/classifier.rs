//! Stage 2: dual-pathway symbol classification. A BiLSTM reads the
//! normalized trajectory, a small VGG-style CNN reads the glyph rendered
//! over its neighbours, and a fusion head combines both with a coarse
//! category mask of already classified symbols.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    rasterize, resample, spatial_normalize_symbol, DEFAULT_RESAMPLE, RASTER_SIZE,
};
use crate::ink::{
    BBox, Expression, Point, StrokeLabelGraph, SymbolCategory, SymbolInventory, Trace, TraceId,
};
use crate::nnet::graph::softmax_rows;
use crate::nnet::layers::{AttentionPool, BiLstm, ConvBlock, Dense, LayerNorm};
use crate::nnet::{
    Graph, ModelFile, NnError, ParamSet, Plateau, Tensor, TrainConfig, TrainReport, Trainer, Var,
};

/// Per-point trajectory channels: x, y, pen-up flag.
pub const TRAJ_FEATURES: usize = 3;
/// Symbols whose categories make up the structural mask.
pub const MASK_NEIGHBOURS: usize = 2;

/// One bit per [`SymbolCategory`] present among already classified neighbours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructMask(pub [f64; SymbolCategory::COUNT]);

impl StructMask {
    pub fn from_categories(cats: impl IntoIterator<Item = SymbolCategory>) -> Self {
        let mut m = [0.0; SymbolCategory::COUNT];
        for c in cats {
            m[c.index()] = 1.0;
        }
        StructMask(m)
    }

    /// Mask over the last [`MASK_NEIGHBOURS`] of `previous` labels.
    pub fn from_previous(previous: &[&str], inventory: &SymbolInventory) -> Self {
        let start = previous.len().saturating_sub(MASK_NEIGHBOURS);
        StructMask::from_categories(previous[start..].iter().map(|l| inventory.category_of(l)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureOptions {
    pub resample: usize,
    pub image_size: usize,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            resample: DEFAULT_RESAMPLE,
            image_size: RASTER_SIZE,
        }
    }
}

/// Network inputs for one symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFeatures {
    /// `[traces · resample, TRAJ_FEATURES]`.
    pub traj: Tensor,
    /// Row-major `image_size²` intensities.
    pub image: Vec<f64>,
    pub mask: StructMask,
}

pub fn featurize_symbol(
    symbol: &[&Trace],
    context: &[&Trace],
    mask: StructMask,
    opts: &FeatureOptions,
) -> SymbolFeatures {
    let raw: Vec<Vec<Point>> = symbol.iter().map(|t| t.points().to_vec()).collect();
    let norm = spatial_normalize_symbol(&raw);
    let m = opts.resample.max(1);
    let mut data = Vec::with_capacity(norm.len() * m * TRAJ_FEATURES);
    for pts in &norm {
        for (k, p) in resample(pts, m).iter().enumerate() {
            data.extend_from_slice(&[p.x, p.y, if k + 1 == m { 1.0 } else { 0.0 }]);
        }
    }
    let prim: Vec<&[Point]> = symbol.iter().map(|t| t.points()).collect();
    let ctx: Vec<&[Point]> = context.iter().map(|t| t.points()).collect();
    let img = rasterize(&prim, &ctx, opts.image_size);
    let n = opts.image_size;
    SymbolFeatures {
        traj: Tensor::matrix(norm.len() * m, TRAJ_FEATURES, data),
        image: (0..n * n).map(|i| img.get(i % n, i / n)).collect(),
        mask,
    }
}

/// Indices of `groups` sorted by leftmost point (ties by smallest trace id).
pub fn baseline_order(expr: &Expression, groups: &[BTreeSet<TraceId>]) -> Vec<usize> {
    let key = |g: &BTreeSet<TraceId>| {
        let x = g
            .iter()
            .filter_map(|t| expr.trace(*t))
            .map(|t| t.min_x())
            .fold(f64::INFINITY, f64::min);
        (x, g.iter().next().copied().unwrap_or(TraceId::MAX))
    };
    let mut idx: Vec<usize> = (0..groups.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ka, kb) = (key(&groups[a]), key(&groups[b]));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });
    idx
}

/// Features of `groups[i]` for groups already in baseline order: the
/// previous and next symbols are rendered as context and the mask covers
/// the labels assigned so far.
pub fn featurize_in_sequence(
    expr: &Expression,
    groups: &[BTreeSet<TraceId>],
    i: usize,
    previous: &[&str],
    inventory: &SymbolInventory,
    opts: &FeatureOptions,
) -> SymbolFeatures {
    let traces =
        |g: &BTreeSet<TraceId>| g.iter().filter_map(|t| expr.trace(*t)).collect::<Vec<_>>();
    let symbol = traces(&groups[i]);
    let mut context = Vec::new();
    if i > 0 {
        context.extend(traces(&groups[i - 1]));
    }
    if i + 1 < groups.len() {
        context.extend(traces(&groups[i + 1]));
    }
    featurize_symbol(
        &symbol,
        &context,
        StructMask::from_previous(previous, inventory),
        opts,
    )
}

/// `(class, probability)` of the `k` most likely classes, ties by index.
pub fn top_k(probs: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualNetConfig {
    pub inventory: SymbolInventory,
    pub features: FeatureOptions,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub conv_channels: Vec<usize>,
    pub projection: usize,
    pub fusion: Vec<usize>,
    pub dropout: f64,
}

impl Default for DualNetConfig {
    fn default() -> Self {
        DualNetConfig {
            inventory: SymbolInventory::default(),
            features: FeatureOptions::default(),
            lstm_hidden: 256,
            lstm_layers: 3,
            conv_channels: vec![16, 32, 64, 128, 128],
            projection: 256,
            fusion: vec![512, 256],
            dropout: 0.4,
        }
    }
}

impl DualNetConfig {
    pub fn toy(inventory: SymbolInventory) -> Self {
        DualNetConfig {
            inventory,
            features: FeatureOptions {
                resample: 8,
                image_size: 24,
            },
            lstm_hidden: 8,
            lstm_layers: 2,
            conv_channels: vec![4, 8, 8],
            projection: 16,
            fusion: vec![32, 32],
            dropout: 0.4,
        }
    }

    pub fn classes(&self) -> usize {
        self.inventory.len()
    }

    fn conv_side(&self) -> usize {
        self.conv_channels
            .iter()
            .fold(self.features.image_size, |s, _| s / 2)
    }
}

/// The dual-pathway classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct DualNet {
    pub config: DualNetConfig,
    pub params: ParamSet,
}

pub const DUALNET_KIND: &str = "dualnet";

struct Layers {
    lstms: Vec<(BiLstm, LayerNorm)>,
    pool: AttentionPool,
    convs: Vec<ConvBlock>,
    proj: Dense,
    fusion: Vec<Dense>,
}

impl DualNet {
    fn layers(&self) -> Layers {
        let c = &self.config;
        let h2 = 2 * c.lstm_hidden;
        let lstms = (0..c.lstm_layers.max(1))
            .map(|i| {
                (
                    BiLstm::new(
                        &format!("cls.lstm{i}"),
                        if i == 0 { TRAJ_FEATURES } else { h2 },
                        c.lstm_hidden,
                    ),
                    LayerNorm::new(format!("cls.ln{i}"), h2),
                )
            })
            .collect();
        let mut chans = 1;
        let convs = c
            .conv_channels
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let b = ConvBlock::new(format!("cls.conv{i}"), chans, o);
                chans = o;
                b
            })
            .collect();
        let side = c.conv_side();
        let proj = Dense::new("cls.proj", chans * side * side, c.projection);
        let mut width = h2 + c.projection + SymbolCategory::COUNT;
        let mut fusion = Vec::new();
        for (i, &w) in c
            .fusion
            .iter()
            .chain(std::iter::once(&c.classes()))
            .enumerate()
        {
            fusion.push(Dense::new(format!("cls.fc{i}"), width, w));
            width = w;
        }
        Layers {
            lstms,
            pool: AttentionPool::new("cls.pool", h2),
            convs,
            proj,
            fusion,
        }
    }

    pub fn new(config: DualNetConfig, seed: u64) -> Result<Self, NnError> {
        if config.classes() == 0 {
            return Err(NnError::Data("empty class inventory".into()));
        }
        if config.conv_side() == 0 {
            return Err(NnError::Data("image too small for the conv stack".into()));
        }
        let mut net = DualNet {
            config,
            params: ParamSet::new(),
        };
        let l = net.layers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &mut net.params;
        for (b, ln) in &l.lstms {
            b.init(p, &mut rng);
            ln.init(p);
        }
        l.pool.init(p, &mut rng);
        for c in &l.convs {
            c.init(p, &mut rng);
        }
        l.proj.init(p, &mut rng);
        for d in &l.fusion {
            d.init(p, &mut rng);
        }
        Ok(net)
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NnError> {
        let config = file.unpack(DUALNET_KIND)?;
        let net = DualNet {
            config,
            params: file.params,
        };
        let l = net.layers();
        for (b, ln) in &l.lstms {
            b.check(&net.params)?;
            ln.check(&net.params)?;
        }
        l.pool.check(&net.params)?;
        for c in &l.convs {
            c.check(&net.params)?;
        }
        l.proj.check(&net.params)?;
        for d in &l.fusion {
            d.check(&net.params)?;
        }
        Ok(net)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::pack(DUALNET_KIND, &self.config, self.params.clone())
    }

    pub fn inventory(&self) -> &SymbolInventory {
        &self.config.inventory
    }

    /// Logits `[N, C]`. With `cnn` false the image pathway is replaced by
    /// zeros (ablation).
    pub fn forward(
        &self,
        g: &mut Graph,
        batch: &[&SymbolFeatures],
        cnn: bool,
    ) -> Result<Var, NnError> {
        let l = self.layers();
        let c = &self.config;
        let s = c.features.image_size;
        let mut pooled = Vec::with_capacity(batch.len());
        for f in batch {
            let mut h = g.input(f.traj.clone());
            for (b, ln) in &l.lstms {
                h = b.forward(g, h)?;
                h = ln.forward(g, h)?;
            }
            pooled.push(l.pool.forward(g, h)?);
        }
        let traj = g.concat_rows(&pooled);
        let n = batch.len();
        let img = if cnn {
            for f in batch {
                if f.image.len() != s * s {
                    return Err(NnError::Shape {
                        layer: "cls.image".into(),
                        expected: format!("{s}x{s} image"),
                        got: vec![f.image.len()],
                    });
                }
            }
            let data: Vec<f64> = batch.iter().flat_map(|f| f.image.iter().copied()).collect();
            let mut x = g.input(Tensor::new(vec![n, 1, s, s], data));
            for b in &l.convs {
                x = b.forward(g, x)?;
            }
            let flat = g.shape(x)[1..].iter().product();
            let x = g.reshape(x, &[n, flat]);
            let p = l.proj.forward(g, x)?;
            g.relu(p)
        } else {
            g.input(Tensor::zeros(&[n, c.projection]))
        };
        let mask = g.input(Tensor::matrix(
            n,
            SymbolCategory::COUNT,
            batch.iter().flat_map(|f| f.mask.0).collect(),
        ));
        let mut h = g.concat_cols(&[traj, img, mask]);
        let last = l.fusion.len() - 1;
        for (i, d) in l.fusion.iter().enumerate() {
            h = d.forward(g, h)?;
            if i < last {
                h = g.relu(h);
                h = g.dropout(h, c.dropout);
            }
        }
        Ok(h)
    }

    pub fn logits(&self, batch: &[&SymbolFeatures], cnn: bool) -> Result<Tensor, NnError> {
        let mut g = Graph::eval(&self.params);
        let z = self.forward(&mut g, batch, cnn)?;
        Ok(g.value(z).clone())
    }

    /// Class distribution for each symbol.
    pub fn classify_batch(&self, batch: &[&SymbolFeatures]) -> Result<Vec<Vec<f64>>, NnError> {
        let p = softmax_rows(&self.logits(batch, true)?);
        Ok((0..p.rows()).map(|r| p.row_slice(r).to_vec()).collect())
    }

    pub fn classify(&self, f: &SymbolFeatures) -> Result<Vec<f64>, NnError> {
        Ok(self.classify_batch(&[f])?.remove(0))
    }

    /// Classifies groups given in baseline order left to right, feeding
    /// each predicted label into the masks of the following symbols.
    pub fn classify_sequence(
        &self,
        expr: &Expression,
        groups: &[BTreeSet<TraceId>],
    ) -> Result<Vec<Vec<f64>>, NnError> {
        let inv = self.inventory();
        let mut labels: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for i in 0..groups.len() {
            let prev: Vec<&str> = labels.iter().map(String::as_str).collect();
            let f = featurize_in_sequence(expr, groups, i, &prev, inv, &self.config.features);
            let p = self.classify(&f)?;
            labels.push(inv.label(top_k(&p, 1)[0].0).unwrap_or_default().to_string());
            out.push(p);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSymbol {
    pub features: SymbolFeatures,
    pub class: usize,
}

/// Teacher-forced training symbols of one annotated expression.
pub fn expression_symbols(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    inventory: &SymbolInventory,
    opts: &FeatureOptions,
) -> Result<Vec<LabeledSymbol>, NnError> {
    let groups: Vec<BTreeSet<TraceId>> = slg.nodes().iter().map(|n| n.trace_ids.clone()).collect();
    let order = baseline_order(expr, &groups);
    let sorted: Vec<BTreeSet<TraceId>> = order.iter().map(|&i| groups[i].clone()).collect();
    let labels: Vec<&str> = order
        .iter()
        .map(|&i| slg.nodes()[i].label.as_str())
        .collect();
    (0..sorted.len())
        .map(|i| {
            let class = inventory
                .index_of(labels[i])
                .ok_or_else(|| NnError::Data(format!("label '{}' not in inventory", labels[i])))?;
            Ok(LabeledSymbol {
                features: featurize_in_sequence(expr, &sorted, i, &labels[..i], inventory, opts),
                class,
            })
        })
        .collect()
}

/// Relative class frequencies; classes absent from the data get the
/// frequency of a single sample.
pub fn class_frequencies(data: &[LabeledSymbol], classes: usize) -> Result<Vec<f64>, NnError> {
    if data.is_empty() {
        return Err(NnError::Data("empty training set".into()));
    }
    let mut counts = vec![0usize; classes];
    for s in data {
        *counts
            .get_mut(s.class)
            .ok_or_else(|| NnError::Data(format!("class {} outside 0..{classes}", s.class)))? += 1;
    }
    let n = data.len() as f64;
    Ok(counts.iter().map(|&c| c.max(1) as f64 / n).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossPhase {
    Balanced,
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleEvent {
    Continue,
    Switched,
    Stop,
}

/// Class-balanced loss until the monitored loss plateaus, then standard
/// loss until it plateaus again.
#[derive(Clone, Debug)]
pub struct LossSchedule {
    pub phase: LossPhase,
    plateau: Plateau,
}

impl LossSchedule {
    pub fn new(patience: usize) -> Self {
        LossSchedule {
            phase: LossPhase::Balanced,
            plateau: Plateau::new(patience),
        }
    }

    pub fn observe(&mut self, monitored: f64) -> ScheduleEvent {
        if !self.plateau.observe(monitored) {
            return ScheduleEvent::Continue;
        }
        match self.phase {
            LossPhase::Balanced => {
                self.phase = LossPhase::Standard;
                self.plateau.reset();
                ScheduleEvent::Switched
            }
            LossPhase::Standard => ScheduleEvent::Stop,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train: TrainReport,
    pub switch_epoch: Option<usize>,
    pub monitored: Vec<f64>,
}

fn sample_weights(data: &[LabeledSymbol], idx: &[usize], w: &[f64]) -> (Vec<usize>, Vec<f64>) {
    idx.iter()
        .map(|&i| (data[i].class, w[data[i].class]))
        .unzip()
}

/// Eval-mode loss of the given phase over a data set.
pub fn phase_loss(
    net: &DualNet,
    data: &[LabeledSymbol],
    freqs: &[f64],
    phase: LossPhase,
) -> Result<f64, NnError> {
    let w = crate::nnet::class_weights(freqs, phase == LossPhase::Balanced)?;
    let mut g = Graph::eval(&net.params);
    let batch: Vec<&SymbolFeatures> = data.iter().map(|s| &s.features).collect();
    let z = net.forward(&mut g, &batch, true)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let (t, sw) = sample_weights(data, &idx, &w);
    let l = g.cross_entropy(z, &t, &sw);
    Ok(g.value(l).data()[0])
}

pub fn train_accuracy(net: &DualNet, data: &[LabeledSymbol]) -> Result<f64, NnError> {
    let batch: Vec<&SymbolFeatures> = data.iter().map(|s| &s.features).collect();
    let pred = net.logits(&batch, true)?.argmax_rows();
    let ok = pred
        .iter()
        .zip(data)
        .filter(|(p, s)| **p == s.class)
        .count();
    Ok(ok as f64 / data.len().max(1) as f64)
}

/// Trains with the balanced→standard schedule. The monitored loss is the
/// validation loss when a validation set is given, else the training loss.
pub fn train_classifier(
    data: &[LabeledSymbol],
    validation: Option<&[LabeledSymbol]>,
    config: DualNetConfig,
    train: &TrainConfig,
) -> Result<(DualNet, ClassifierReport), NnError> {
    let freqs = class_frequencies(data, config.classes())?;
    if let Some(v) = validation {
        class_frequencies(v, config.classes())?;
    }
    let mut net = DualNet::new(config, train.seed)?;
    let shape = DualNet {
        config: net.config.clone(),
        params: ParamSet::new(),
    };
    let mut trainer = Trainer::new(train.clone());
    let mut schedule = LossSchedule::new(train.patience.max(1));
    let mut report = ClassifierReport::default();
    for epoch in 0..train.epochs {
        let w = crate::nnet::class_weights(&freqs, schedule.phase == LossPhase::Balanced)?;
        let loss = trainer.epoch(&mut net.params, data.len(), |g, idx| {
            let batch: Vec<&SymbolFeatures> = idx.iter().map(|&i| &data[i].features).collect();
            let z = shape.forward(g, &batch, true)?;
            let (t, sw) = sample_weights(data, idx, &w);
            Ok(g.cross_entropy(z, &t, &sw))
        })?;
        report.train.losses.push(loss);
        report.train.epochs += 1;
        let monitored = phase_loss(&net, validation.unwrap_or(data), &freqs, schedule.phase)?;
        report.monitored.push(monitored);
        if let Some(target) = train.target_accuracy {
            report.train.accuracy = train_accuracy(&net, data)?;
            if report.train.accuracy >= target {
                break;
            }
        }
        match schedule.observe(monitored) {
            ScheduleEvent::Continue => {}
            ScheduleEvent::Switched => report.switch_epoch = Some(epoch + 1),
            ScheduleEvent::Stop => break,
        }
    }
    report.train.accuracy = train_accuracy(&net, data)?;
    Ok((net, report))
}

/// Bounding box of a set of traces, if any exist.
pub fn group_bbox(expr: &Expression, group: &BTreeSet<TraceId>) -> Option<BBox> {
    BBox::of_traces(group.iter().filter_map(|t| expr.trace(*t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_latex, Style};

    fn glyph_traces(latex: &str, seed: u64) -> Vec<Trace> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        render_latex(latex, &Style::default(), &mut rng)
            .unwrap()
            .expr
            .traces()
            .to_vec()
    }

    fn toy_inventory() -> SymbolInventory {
        SymbolInventory::from_labels(["x", "1", "+", "a"])
    }

    #[test]
    fn mask_encodes_recent_categories() {
        let inv = SymbolInventory::default();
        let m = StructMask::from_previous(&["\\alpha", "x", "="], &inv);
        let on: Vec<usize> = (0..9).filter(|&i| m.0[i] == 1.0).collect();
        assert_eq!(
            on,
            vec![
                SymbolCategory::Latin.index(),
                SymbolCategory::Relation.index()
            ]
        );
        assert_eq!(StructMask::from_previous(&[], &inv), StructMask::default());
    }

    #[test]
    fn trajectory_is_scale_and_shift_invariant() {
        let t = glyph_traces("x", 1);
        let moved: Vec<Trace> = t
            .iter()
            .map(|tr| {
                Trace::new(
                    tr.id(),
                    tr.points()
                        .iter()
                        .map(|p| Point::new(7.0 * p.x + 30.0, 7.0 * p.y - 5.0))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let opts = FeatureOptions::default();
        let a = featurize_symbol(
            &t.iter().collect::<Vec<_>>(),
            &[],
            StructMask::default(),
            &opts,
        );
        let b = featurize_symbol(
            &moved.iter().collect::<Vec<_>>(),
            &[],
            StructMask::default(),
            &opts,
        );
        for (x, y) in a.traj.data().iter().zip(b.traj.data()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert_eq!(a.traj.shape(), &[64, 3]);
        assert_eq!(a.image.len(), 100 * 100);
    }

    #[test]
    fn no_context_means_no_half_intensity_context() {
        let t = glyph_traces("+", 2);
        let f = featurize_symbol(
            &t.iter().collect::<Vec<_>>(),
            &[],
            StructMask::default(),
            &FeatureOptions::default(),
        );
        assert!(f.image.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(f.image.contains(&1.0));
    }

    #[test]
    fn probabilities_sum_to_one_and_cnn_is_live() {
        let net = DualNet::new(DualNetConfig::toy(toy_inventory()), 3).unwrap();
        let t = glyph_traces("a", 3);
        let f = featurize_symbol(
            &t.iter().collect::<Vec<_>>(),
            &[],
            StructMask::default(),
            &net.config.features,
        );
        let p = net.classify(&f).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let with = net.logits(&[&f], true).unwrap();
        let without = net.logits(&[&f], false).unwrap();
        assert_ne!(with, without);
        let back =
            DualNet::from_file(ModelFile::from_bytes(&net.to_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.inventory().labels(), net.inventory().labels());
        assert_eq!(back.classify(&f).unwrap(), p);
    }

    #[test]
    fn schedule_switches_then_stops() {
        let mut s = LossSchedule::new(2);
        assert_eq!(s.observe(1.0), ScheduleEvent::Continue);
        assert_eq!(s.observe(1.1), ScheduleEvent::Continue);
        assert_eq!(s.observe(1.2), ScheduleEvent::Switched);
        assert_eq!(s.phase, LossPhase::Standard);
        assert_eq!(s.observe(0.9), ScheduleEvent::Continue);
        assert_eq!(s.observe(0.95), ScheduleEvent::Continue);
        assert_eq!(s.observe(0.95), ScheduleEvent::Stop);
    }

    #[test]
    fn uniform_frequencies_make_phases_equal() {
        let net = DualNet::new(DualNetConfig::toy(toy_inventory()), 4).unwrap();
        let data: Vec<LabeledSymbol> = ["x", "1", "+", "a"]
            .iter()
            .enumerate()
            .map(|(c, l)| {
                let t = glyph_traces(l, c as u64);
                LabeledSymbol {
                    features: featurize_symbol(
                        &t.iter().collect::<Vec<_>>(),
                        &[],
                        StructMask::default(),
                        &net.config.features,
                    ),
                    class: c,
                }
            })
            .collect();
        let f = class_frequencies(&data, 4).unwrap();
        let a = phase_loss(&net, &data, &f, LossPhase::Balanced).unwrap();
        let b = phase_loss(&net, &data, &f, LossPhase::Standard).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(class_frequencies(&[], 4).is_err());
    }

    #[test]
    fn baseline_order_sorts_by_left_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = render_latex("\\frac{a}{b}+1", &Style::default(), &mut rng).unwrap();
        let groups: Vec<BTreeSet<TraceId>> = s
            .slg
            .nodes()
            .iter()
            .rev()
            .map(|n| n.trace_ids.clone())
            .collect();
        let order = baseline_order(&s.expr, &groups);
        let labels: Vec<&str> = order
            .iter()
            .map(|&i| s.slg.nodes()[s.slg.len() - 1 - i].label.as_str())
            .collect();
        assert_eq!(labels[0], "-");
        assert_eq!(labels[labels.len() - 1], "1");
    }
}
