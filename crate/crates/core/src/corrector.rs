//! Stage 4: transformer correction of class distributions over the symbol
//! sequence in reading order.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::top_k;
use crate::ink::{
    BBox, ConversionError, Expression, LayoutTree, RelationLabel, StrokeLabelGraph, SymbolId,
    SymbolInventory,
};
use crate::nnet::graph::softmax_rows;
use crate::nnet::layers::{Dense, LayerNorm, TransformerLayer};
use crate::nnet::{
    fit, Graph, ModelFile, NnError, ParamSet, Tensor, TrainConfig, TrainReport, Var,
};

/// Box channels: center x, center y, width, height relative to the expression box.
pub const BOX_FEATURES: usize = 4;

/// Symbol ids of `slg` in reading order: depth first from the root, each
/// node before its sup, sub, over and under children and its right
/// neighbour last.
pub fn order_symbols(slg: &StrokeLabelGraph) -> Result<Vec<SymbolId>, ConversionError> {
    let tree = LayoutTree::from_slg(slg)?;
    Ok(tree
        .reading_order()
        .into_iter()
        .map(|n| tree.id(n))
        .collect())
}

/// One position of the correction sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrSymbol {
    pub probs: Vec<f64>,
    pub bbox: BBox,
    pub incoming: Option<RelationLabel>,
}

/// Sequence of `slg` in reading order with the given per-symbol
/// distributions; returns the ids alongside.
pub fn corr_sequence(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    probs: &HashMap<SymbolId, Vec<f64>>,
) -> Result<(Vec<SymbolId>, Vec<CorrSymbol>), NnError> {
    let order = order_symbols(slg).map_err(|e| NnError::Data(e.to_string()))?;
    let mut out = Vec::with_capacity(order.len());
    for &id in &order {
        let node = slg.node(id).expect("ordered ids exist");
        let bbox = BBox::of_traces(node.trace_ids.iter().filter_map(|t| expr.trace(*t)))
            .ok_or_else(|| NnError::Data(format!("symbol {id} has no ink")))?;
        let p = probs
            .get(&id)
            .ok_or_else(|| NnError::Data(format!("no distribution for symbol {id}")))?;
        out.push(CorrSymbol {
            probs: p.clone(),
            bbox,
            incoming: slg.incoming(id).map(|e| e.label),
        });
    }
    Ok((order, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrNetConfig {
    pub classes: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub capacity: usize,
    pub top_k: usize,
    pub use_relations: bool,
    /// Augmented copies of each sequence in the first training phase.
    pub augment_copies: usize,
    /// Weight of the random distribution mixed into augmented inputs.
    pub augment_mix: f64,
    pub augment_box_sigma: f64,
}

impl Default for CorrNetConfig {
    fn default() -> Self {
        CorrNetConfig {
            classes: 101,
            d_model: 256,
            heads: 8,
            layers: 3,
            head_hidden: 128,
            dropout: 0.1,
            leaky_slope: 0.01,
            capacity: 128,
            top_k: 5,
            use_relations: true,
            augment_copies: 2,
            augment_mix: 0.3,
            augment_box_sigma: 0.02,
        }
    }
}

impl CorrNetConfig {
    pub fn toy(classes: usize) -> Self {
        CorrNetConfig {
            classes,
            d_model: 16,
            heads: 2,
            head_hidden: 16,
            ..CorrNetConfig::default()
        }
    }

    pub fn input_dim(&self) -> usize {
        self.classes + BOX_FEATURES + RelationLabel::COUNT
    }
}

/// Rows of the input matrix `x_t`.
pub fn corr_inputs(symbols: &[CorrSymbol], cfg: &CorrNetConfig) -> Tensor {
    let frame = symbols
        .iter()
        .map(|s| s.bbox)
        .reduce(|a, b| a.union(&b))
        .unwrap_or(BBox {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 1.0,
            max_y: 1.0,
        });
    let scale = frame.width().max(frame.height()).max(1e-9);
    let mut data = Vec::with_capacity(symbols.len() * cfg.input_dim());
    for s in symbols {
        let mut p = vec![0.0; cfg.classes];
        for (c, q) in top_k(&s.probs, cfg.top_k) {
            if c < cfg.classes {
                p[c] = q;
            }
        }
        data.extend(p);
        let c = s.bbox.center();
        data.extend([
            (c.x - frame.min_x) / scale,
            (c.y - frame.min_y) / scale,
            s.bbox.width() / scale,
            s.bbox.height() / scale,
        ]);
        let mut r = [0.0; RelationLabel::COUNT];
        if let (true, Some(l)) = (cfg.use_relations, s.incoming) {
            r[l.index()] = 1.0;
        }
        data.extend(r);
    }
    Tensor::matrix(symbols.len(), cfg.input_dim(), data)
}

/// `E_t = W_e x_t + p_t`, pre-norm encoder layers, final norm, dense →
/// leaky ReLU → dropout → dense over the classes.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrNet {
    pub config: CorrNetConfig,
    pub params: ParamSet,
}

pub const CORRNET_KIND: &str = "corrnet";
const POS: &str = "corr.pos";

impl CorrNet {
    fn embed(&self) -> Dense {
        Dense::new("corr.embed", self.config.input_dim(), self.config.d_model)
    }

    fn layers(&self) -> Vec<TransformerLayer> {
        (0..self.config.layers)
            .map(|i| {
                TransformerLayer::new(
                    &format!("corr.enc{i}"),
                    self.config.d_model,
                    self.config.heads,
                    self.config.dropout,
                )
            })
            .collect()
    }

    fn norm(&self) -> LayerNorm {
        LayerNorm::new("corr.ln", self.config.d_model)
    }

    fn fc1(&self) -> Dense {
        Dense::new("corr.fc1", self.config.d_model, self.config.head_hidden)
    }

    fn fc2(&self) -> Dense {
        Dense::new("corr.fc2", self.config.head_hidden, self.config.classes)
    }

    pub fn new(config: CorrNetConfig, seed: u64) -> Self {
        let mut net = CorrNet {
            config,
            params: ParamSet::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        net.embed().init(&mut p, &mut rng);
        let normal = Normal::new(0.0, 0.02).expect("valid sigma");
        let (cap, d) = (net.config.capacity, net.config.d_model);
        p.insert(
            POS,
            Tensor::matrix(
                cap,
                d,
                (0..cap * d).map(|_| normal.sample(&mut rng)).collect(),
            ),
            true,
        );
        for l in net.layers() {
            l.init(&mut p, &mut rng);
        }
        net.norm().init(&mut p);
        net.fc1().init(&mut p, &mut rng);
        net.fc2().init(&mut p, &mut rng);
        net.params = p;
        net
    }

    pub fn from_file(file: ModelFile) -> Result<Self, NnError> {
        let net = CorrNet {
            config: file.unpack(CORRNET_KIND)?,
            params: file.params,
        };
        net.embed().check(&net.params)?;
        match net.params.get(POS) {
            Some(t) if t.shape() == [net.config.capacity, net.config.d_model] => {}
            Some(t) => {
                return Err(NnError::Shape {
                    layer: POS.into(),
                    expected: format!("[{}, {}]", net.config.capacity, net.config.d_model),
                    got: t.shape().to_vec(),
                })
            }
            None => return Err(NnError::MissingParam(POS.into())),
        }
        for l in net.layers() {
            l.check(&net.params)?;
        }
        net.norm().check(&net.params)?;
        net.fc1().check(&net.params)?;
        net.fc2().check(&net.params)?;
        Ok(net)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::pack(CORRNET_KIND, &self.config, self.params.clone())
    }

    /// Logits `[T, C]` for an input matrix `[T, input_dim]`.
    pub fn forward(&self, g: &mut Graph, x: &Tensor) -> Result<Var, NnError> {
        let t = x.rows();
        if t > self.config.capacity {
            return Err(NnError::Capacity {
                len: t,
                max: self.config.capacity,
            });
        }
        let x = g.input(x.clone());
        let e = self.embed().forward(g, x)?;
        let pos = g.param(POS);
        let pos = g.slice_rows(pos, 0, t);
        let mut h = g.add(e, pos);
        for l in self.layers() {
            h = l.forward(g, h)?;
        }
        let h = self.norm().forward(g, h)?;
        let h = self.fc1().forward(g, h)?;
        let h = g.leaky_relu(h, self.config.leaky_slope);
        let h = g.dropout(h, self.config.dropout);
        self.fc2().forward(g, h)
    }

    /// Corrected distributions, one per input position.
    pub fn correct(&self, symbols: &[CorrSymbol]) -> Result<Vec<Vec<f64>>, NnError> {
        if symbols.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::eval(&self.params);
        let z = self.forward(&mut g, &corr_inputs(symbols, &self.config))?;
        let p = softmax_rows(g.value(z));
        Ok((0..p.rows()).map(|r| p.row_slice(r).to_vec()).collect())
    }
}

/// Relabels `slg` with the argmax of each corrected distribution; nodes,
/// traces and edges are carried over unchanged.
pub fn apply_correction(
    slg: &StrokeLabelGraph,
    order: &[SymbolId],
    corrected: &[Vec<f64>],
    inventory: &SymbolInventory,
) -> StrokeLabelGraph {
    let mut labels = BTreeMap::new();
    for (&id, p) in order.iter().zip(corrected) {
        if let Some(&(c, q)) = top_k(p, 1).first() {
            if let Some(l) = inventory.label(c) {
                labels.insert(id, (l.to_string(), q));
            }
        }
    }
    slg.with_labels(&labels)
}

/// Training sequence with reference classes.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrSample {
    pub symbols: Vec<CorrSymbol>,
    pub targets: Vec<usize>,
}

/// Sample from an annotated expression and the classifier's distributions.
pub fn corr_sample(
    expr: &Expression,
    slg: &StrokeLabelGraph,
    probs: &HashMap<SymbolId, Vec<f64>>,
    inventory: &SymbolInventory,
) -> Result<CorrSample, NnError> {
    let (order, symbols) = corr_sequence(expr, slg, probs)?;
    let targets = order
        .iter()
        .map(|id| {
            let l = &slg.node(*id).expect("ordered ids exist").label;
            inventory
                .index_of(l)
                .ok_or_else(|| NnError::Data(format!("label '{l}' not in inventory")))
        })
        .collect::<Result<_, _>>()?;
    Ok(CorrSample { symbols, targets })
}

/// Mixes each distribution with a random one and jitters the boxes.
pub fn augment_sample<R: Rng + ?Sized>(
    s: &CorrSample,
    cfg: &CorrNetConfig,
    rng: &mut R,
) -> CorrSample {
    let jitter = Normal::new(0.0, cfg.augment_box_sigma.max(0.0)).expect("valid sigma");
    let symbols = s
        .symbols
        .iter()
        .map(|x| {
            let noise: Vec<f64> = (0..x.probs.len())
                .map(|_| -rng.gen::<f64>().max(1e-12).ln())
                .collect();
            let z: f64 = noise.iter().sum();
            let probs = x
                .probs
                .iter()
                .zip(&noise)
                .map(|(p, n)| (1.0 - cfg.augment_mix) * p + cfg.augment_mix * n / z)
                .collect();
            let s = x.bbox.width().max(x.bbox.height()).max(1e-9);
            let mut d = || jitter.sample(rng) * s;
            let bbox = BBox {
                min_x: x.bbox.min_x + d(),
                min_y: x.bbox.min_y + d(),
                max_x: x.bbox.max_x + d(),
                max_y: x.bbox.max_y + d(),
            };
            CorrSymbol {
                probs,
                bbox: BBox {
                    min_x: bbox.min_x.min(bbox.max_x),
                    min_y: bbox.min_y.min(bbox.max_y),
                    max_x: bbox.max_x.max(bbox.min_x),
                    max_y: bbox.max_y.max(bbox.min_y),
                },
                incoming: x.incoming,
            }
        })
        .collect();
    CorrSample {
        symbols,
        targets: s.targets.clone(),
    }
}

pub fn sequence_accuracy(net: &CorrNet, data: &[CorrSample]) -> Result<f64, NnError> {
    let (mut ok, mut total) = (0, 0);
    for s in data {
        for (p, &t) in net.correct(&s.symbols)?.iter().zip(&s.targets) {
            ok += (top_k(p, 1)[0].0 == t) as usize;
            total += 1;
        }
    }
    Ok(ok as f64 / total.max(1) as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrReport {
    /// First phase, on clean plus augmented sequences.
    pub augmented: TrainReport,
    /// Second phase, clean sequences only.
    pub clean: TrainReport,
    pub augmented_samples: usize,
}

fn run_phase(
    net: &mut CorrNet,
    data: &[CorrSample],
    train: &TrainConfig,
) -> Result<TrainReport, NnError> {
    let shape = CorrNet {
        config: net.config.clone(),
        params: ParamSet::new(),
    };
    let inputs: Vec<Tensor> = data
        .iter()
        .map(|s| corr_inputs(&s.symbols, &shape.config))
        .collect();
    fit(
        train,
        &mut net.params,
        data.len(),
        |g, idx| {
            let mut total: Option<Var> = None;
            for &i in idx {
                let z = shape.forward(g, &inputs[i])?;
                let t = &data[i].targets;
                let l = g.cross_entropy(z, t, &vec![1.0; t.len()]);
                total = Some(match total {
                    Some(acc) => g.add(acc, l),
                    None => l,
                });
            }
            let total = total.expect("non-empty micro-batch");
            Ok(g.scale(total, 1.0 / idx.len() as f64))
        },
        |p| {
            let probe = CorrNet {
                config: shape.config.clone(),
                params: p.clone(),
            };
            sequence_accuracy(&probe, data)
        },
    )
}

/// Two phases: `train.epochs` on the clean data plus augmented copies
/// (when `train.augment`), then `train.finetune_epochs` on clean data.
pub fn train_corrector(
    data: &[CorrSample],
    config: CorrNetConfig,
    train: &TrainConfig,
) -> Result<(CorrNet, CorrReport), NnError> {
    if data.is_empty() {
        return Err(NnError::Data("no correction sequences".into()));
    }
    for s in data {
        if s.symbols.len() != s.targets.len() {
            return Err(NnError::Data("sequence and target lengths differ".into()));
        }
        if s.symbols.len() > config.capacity {
            return Err(NnError::Capacity {
                len: s.symbols.len(),
                max: config.capacity,
            });
        }
    }
    let mut net = CorrNet::new(config, train.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0xc0e);
    let mut first: Vec<CorrSample> = data.to_vec();
    if train.augment {
        for _ in 0..net.config.augment_copies {
            for s in data {
                first.push(augment_sample(s, &net.config, &mut rng));
            }
        }
    }
    let mut report = CorrReport {
        augmented_samples: first.len() - data.len(),
        ..CorrReport::default()
    };
    report.augmented = run_phase(&mut net, &first, train)?;
    if train.finetune_epochs > 0 {
        let clean = TrainConfig {
            epochs: train.finetune_epochs,
            augment: false,
            ..train.clone()
        };
        report.clean = run_phase(&mut net, data, &clean)?;
    } else {
        report.clean.accuracy = sequence_accuracy(&net, data)?;
    }
    Ok((net, report))
}

/// Error-tolerant correction for the pipeline: `None` when the sequence
/// does not fit.
pub fn try_correct(
    net: &CorrNet,
    symbols: &[CorrSymbol],
) -> Result<Option<Vec<Vec<f64>>>, NnError> {
    match net.correct(symbols) {
        Ok(p) => Ok(Some(p)),
        Err(NnError::Capacity { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::{Edge, SymbolNode};

    fn bbox(x: f64) -> BBox {
        BBox {
            min_x: x,
            min_y: 0.0,
            max_x: x + 1.0,
            max_y: 1.0,
        }
    }

    fn seq(n: usize, c: usize) -> Vec<CorrSymbol> {
        (0..n)
            .map(|i| CorrSymbol {
                probs: (0..c)
                    .map(|k| {
                        if k == i % c {
                            0.7
                        } else {
                            0.3 / (c - 1) as f64
                        }
                    })
                    .collect(),
                bbox: bbox(i as f64 * 1.5),
                incoming: Some(if i == 0 {
                    RelationLabel::LineStart
                } else {
                    RelationLabel::Right
                }),
            })
            .collect()
    }

    #[test]
    fn order_follows_reading_rule() {
        let nodes = vec![
            SymbolNode::new(0, [0], "A"),
            SymbolNode::new(1, [1], "2"),
            SymbolNode::new(2, [2], ">"),
            SymbolNode::new(3, [3], "B"),
            SymbolNode::new(4, [4, 5], "2"),
        ];
        let edges = vec![
            Edge::root(0),
            Edge::new(0, 2, RelationLabel::Right),
            Edge::new(0, 1, RelationLabel::Sub),
            Edge::new(2, 3, RelationLabel::Right),
            Edge::new(3, 4, RelationLabel::Sub),
        ];
        let slg = StrokeLabelGraph::new(nodes, edges).unwrap();
        assert_eq!(order_symbols(&slg).unwrap(), vec![0, 1, 2, 3, 4]);
        let frac = StrokeLabelGraph::new(
            vec![
                SymbolNode::new(0, [0], "-"),
                SymbolNode::new(1, [1], "a"),
                SymbolNode::new(2, [2], "b"),
                SymbolNode::new(3, [3], "+"),
            ],
            vec![
                Edge::root(0),
                Edge::new(0, 3, RelationLabel::Right),
                Edge::new(0, 2, RelationLabel::Under),
                Edge::new(0, 1, RelationLabel::Over),
            ],
        )
        .unwrap();
        assert_eq!(order_symbols(&frac).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn outputs_are_distributions_and_capacity_is_enforced() {
        let cfg = CorrNetConfig {
            capacity: 6,
            ..CorrNetConfig::toy(4)
        };
        let net = CorrNet::new(cfg, 1);
        for p in net.correct(&seq(5, 4)).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            net.correct(&seq(7, 4)),
            Err(NnError::Capacity { len: 7, max: 6 })
        ));
        assert_eq!(try_correct(&net, &seq(7, 4)).unwrap(), None);
        let back =
            CorrNet::from_file(ModelFile::from_bytes(&net.to_file().to_bytes()).unwrap()).unwrap();
        assert_eq!(
            back.correct(&seq(3, 4)).unwrap(),
            net.correct(&seq(3, 4)).unwrap()
        );
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut net = CorrNet::new(CorrNetConfig::toy(5), 2);
        for name in ["corr.fc2.w", "corr.fc2.b"] {
            let id = net.params.id(name).unwrap();
            let t = net.params.value(id).map(|_| 0.0);
            *net.params.value_mut(id) = t;
        }
        for p in net.correct(&seq(4, 5)).unwrap() {
            for q in p {
                assert!((q - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positions_matter() {
        let net = CorrNet::new(CorrNetConfig::toy(4), 3);
        let s = seq(4, 4);
        let mut shuffled = s.clone();
        shuffled.swap(0, 3);
        let a = net.correct(&s).unwrap();
        let b = net.correct(&shuffled).unwrap();
        assert!(a[0].iter().zip(&b[3]).any(|(x, y)| (x - y).abs() > 1e-9));
    }
}
