use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul, Tensor};

pub type ParamId = usize;

/// Named weights and buffers of a model. Buffers (e.g. batch-norm running
/// statistics) are stored alongside weights but never receive gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    trainable: Vec<bool>,
    index: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a tensor.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        if let Some(&id) = self.index.get(&name) {
            self.values[id] = value;
            self.trainable[id] = trainable;
            return id;
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.trainable.push(trainable);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor, bool)> {
        self.names
            .iter()
            .zip(&self.values)
            .zip(&self.trainable)
            .map(|((n, v), t)| (n.as_str(), v, *t))
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.iter()
            .filter(|(_, _, t)| *t)
            .map(|(_, v, _)| v.len())
            .sum()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm2d {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    MeanRows(Var),
    SumAll(Var),
    LstmCell {
        gates: Var,
        c_prev: Var,
    },
    WeightedBce {
        logits: Var,
        targets: Vec<f64>,
        w_fg: f64,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Tensor,
    },
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Forward tape for reverse-mode differentiation.
///
/// A graph borrows the weights it reads; `backward` returns gradients
/// keyed by parameter id so that callers can accumulate them across graphs
/// before an optimizer step.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    train: bool,
    rng: ChaCha8Rng,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    /// Inference graph: dropout is the identity and batch norm uses running
    /// statistics.
    pub fn eval(params: &'p ParamSet) -> Self {
        Self::build(params, false, 0)
    }

    /// Training graph; `seed` drives dropout masks.
    pub fn train(params: &'p ParamSet, seed: u64) -> Self {
        Self::build(params, true, seed)
    }

    fn build(params: &'p ParamSet, train: bool, seed: u64) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer_updates: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0] {
            Node {
                op: Op::Param(id), ..
            } => self.params.value(*id),
            Node { value, .. } => value.as_ref().expect("node value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Smallest distance of any (leaky) ReLU input to its kink at zero.
    pub fn relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.value(x).data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Recorded running-statistic updates `(buffer id, new value)`.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// The node for a named parameter, created once per graph.
    pub fn param(&mut self, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"));
        self.param_id(id)
    }

    pub fn param_id(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), false, self.value(b), false);
        self.push(Op::MatMul(a, b), out)
    }

    fn zip(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "{what}: shape mismatch");
        Tensor::new(
            ta.shape().to_vec(),
            ta.data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        let n = tx.cols();
        assert_eq!(
            tb.len(),
            n,
            "add_bias: {} bias values for {n} columns",
            tb.len()
        );
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        self.push(Op::AddBias(x, b), out)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(Op::Scale(x, s), out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), out)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu(x, slope), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), rows, "concat_cols: row counts differ");
                out.extend_from_slice(t.row_slice(r));
            }
        }
        self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::matrix(rows, total, out),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows: column counts differ");
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        self.push(
            Op::ConcatRows(parts.to_vec()),
            Tensor::matrix(rows, cols, out),
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let t = self.value(x);
        assert!(start + width <= t.cols(), "slice_cols out of range");
        let mut out = Vec::with_capacity(t.rows() * width);
        for r in 0..t.rows() {
            out.extend_from_slice(&t.row_slice(r)[start..start + width]);
        }
        let rows = t.rows();
        self.push(Op::SliceCols(x, start), Tensor::matrix(rows, width, out))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Var {
        let t = self.value(x);
        assert!(start + count <= t.rows(), "slice_rows out of range");
        let c = t.cols();
        let out = t.data()[start * c..(start + count) * c].to_vec();
        self.push(Op::SliceRows(x, start), Tensor::matrix(count, c, out))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(Op::Transpose(x), out)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(Op::SoftmaxRows(x), out)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let out = log_softmax_rows(self.value(x));
        self.push(Op::LogSoftmaxRows(x), out)
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` of length `n`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = t.row_slice(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            Tensor::matrix(m, n, out),
        )
    }

    /// Inverted dropout: identity at inference, scaled Bernoulli mask in training.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.train || p <= 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let t = self.value(x);
        let out = Tensor::new(
            t.shape().to_vec(),
            t.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        );
        self.push(Op::Dropout(x, mask), out)
    }

    /// 3×3 convolution, stride 1, zero padding 1. `x` is `[N, C, H, W]`,
    /// `w` is `[O, C, 3, 3]`, `b` has `O` values.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let [n, c, h, wd] = dims4(tx);
        let o = tw.shape()[0];
        assert_eq!(tw.shape(), &[o, c, 3, 3], "conv2d weight shape");
        let mut out = vec![0.0; n * o * h * wd];
        let (xd, wdat) = (tx.data(), tw.data());
        for s in 0..n {
            for oc in 0..o {
                let plane = &mut out[(s * o + oc) * h * wd..(s * o + oc + 1) * h * wd];
                plane.iter_mut().for_each(|v| *v = tb.data()[oc]);
                for ic in 0..c {
                    let xin = &xd[(s * c + ic) * h * wd..(s * c + ic + 1) * h * wd];
                    let k = &wdat[(oc * c + ic) * 9..(oc * c + ic + 1) * 9];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let kv = k[ky * 3 + kx];
                            if kv == 0.0 {
                                continue;
                            }
                            for y in 0..h {
                                let iy = y as isize + ky as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let irow = &xin[iy as usize * wd..(iy as usize + 1) * wd];
                                let orow = &mut plane[y * wd..(y + 1) * wd];
                                let (x0, x1) = (
                                    if kx == 0 { 1 } else { 0 },
                                    if kx == 2 { wd - 1 } else { wd },
                                );
                                for xo in x0..x1 {
                                    orow[xo] += kv * irow[xo + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(Op::Conv2d { x, w, b }, Tensor::new(vec![n, o, h, wd], out))
    }

    /// Per-channel batch normalization of `[N, C, H, W]`. Training graphs
    /// use batch statistics and record updated running statistics into
    /// `running_mean`/`running_var` with the given momentum.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: ParamId,
        running_var: ParamId,
        momentum: f64,
    ) -> Var {
        let tx = self.value(x);
        let [n, c, h, w] = dims4(tx);
        let per = (n * h * w) as f64;
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut means = vec![0.0; c];
        let mut vars = vec![0.0; c];
        let batch_stats = self.train;
        if batch_stats {
            for ch in 0..c {
                let vals = (0..n)
                    .flat_map(|s| tx.data()[(s * c + ch) * h * w..(s * c + ch + 1) * h * w].iter());
                let mean = vals.clone().sum::<f64>() / per;
                means[ch] = mean;
                vars[ch] = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / per;
            }
        } else {
            means.copy_from_slice(self.params.value(running_mean).data());
            vars.copy_from_slice(self.params.value(running_var).data());
        }
        let inv_std: Vec<f64> = vars.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; tx.len()];
        let mut out = vec![0.0; tx.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * h * w;
                for i in base..base + h * w {
                    let v = (tx.data()[i] - means[ch]) * inv_std[ch];
                    xhat[i] = v;
                    out[i] = v * g[ch] + b[ch];
                }
            }
        }
        let shape = tx.shape().to_vec();
        if batch_stats {
            let unbiased = if per > 1.0 { per / (per - 1.0) } else { 1.0 };
            let rm = self.params.value(running_mean).data();
            let rv = self.params.value(running_var).data();
            let new_m: Vec<f64> = rm
                .iter()
                .zip(&means)
                .map(|(r, m)| (1.0 - momentum) * r + momentum * m)
                .collect();
            let new_v: Vec<f64> = rv
                .iter()
                .zip(&vars)
                .map(|(r, v)| (1.0 - momentum) * r + momentum * v * unbiased)
                .collect();
            self.buffer_updates
                .push((running_mean, Tensor::new(vec![c], new_m)));
            self.buffer_updates
                .push((running_var, Tensor::new(vec![c], new_v)));
        }
        self.push(
            Op::BatchNorm2d {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            Tensor::new(shape, out),
        )
    }

    /// 2×2 max pooling with stride 2 (odd trailing rows/columns dropped).
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let [n, c, h, w] = dims4(tx);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0; out.len()];
        for p in 0..n * c {
            let base = p * h * w;
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * xo + dx;
                        if tx.data()[i] > tx.data()[best] {
                            best = i;
                        }
                    }
                    let o = (p * oh + y) * ow + xo;
                    out[o] = tx.data()[best];
                    argmax[o] = best;
                }
            }
        }
        self.push(
            Op::MaxPool2 { x, argmax },
            Tensor::new(vec![n, c, oh, ow], out),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshaped(shape.to_vec());
        self.push(Op::Reshape(x), out)
    }

    /// Column means of `[m, n]` as `[1, n]`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= m as f64);
        self.push(Op::MeanRows(x), Tensor::row(out))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    /// Fused LSTM cell. `gates` is `[B, 4h]` of pre-activations in the order
    /// input, forget, cell, output; returns `[B, 2h]` holding `h | c`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let (tg, tc) = (self.value(gates), self.value(c_prev));
        let (bsz, h) = (tc.rows(), tc.cols());
        assert_eq!(tg.shape(), &[bsz, 4 * h], "lstm_cell gate shape");
        let mut out = vec![0.0; bsz * 2 * h];
        for r in 0..bsz {
            let g = tg.row_slice(r);
            for k in 0..h {
                let (i, f) = (sigmoid(g[k]), sigmoid(g[h + k]));
                let (cc, o) = (g[2 * h + k].tanh(), sigmoid(g[3 * h + k]));
                let c = f * tc.at(r, k) + i * cc;
                out[r * 2 * h + k] = o * c.tanh();
                out[r * 2 * h + h + k] = c;
            }
        }
        self.push(
            Op::LstmCell { gates, c_prev },
            Tensor::matrix(bsz, 2 * h, out),
        )
    }

    /// Mean weighted binary cross-entropy on logits; positives weigh `w_fg`.
    pub fn weighted_bce_logits(&mut self, logits: Var, targets: &[f64], w_fg: f64) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), targets.len(), "bce: target count");
        let loss = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| w_fg * t * softplus(-z) + (1.0 - t) * softplus(z))
            .sum::<f64>()
            / targets.len() as f64;
        self.push(
            Op::WeightedBce {
                logits,
                targets: targets.to_vec(),
                w_fg,
            },
            Tensor::scalar(loss),
        )
    }

    /// Weighted mean cross-entropy of row logits against class targets:
    /// `Σ w_i·(−log p_i[y_i]) / Σ w_i`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), targets.len(), "cross_entropy: target count");
        assert_eq!(weights.len(), targets.len(), "cross_entropy: weight count");
        let logp = log_softmax_rows(z);
        let total: f64 = weights.iter().sum();
        let loss = targets
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(r, (&y, &w))| -w * logp.at(r, y))
            .sum::<f64>()
            / total;
        let probs = logp.map(f64::exp);
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    /// Reverse pass from `root`, seeded with ones.
    pub fn backward(&self, root: Var) -> Grads {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::filled(self.value(root).shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();
        for (&id, &v) in &self.param_vars {
            if self.params.is_trainable(id) {
                params[id] = grads[v.0].take();
            }
        }
        Grads {
            nodes: grads,
            params,
        }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = self.nodes[i].value.as_ref();
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(e) => e.add_assign(&t),
            slot => *slot = Some(t),
        };
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                acc(*a, matmul(g, false, self.value(*b), true));
                acc(*b, matmul(self.value(*a), true, g, false));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(
                    *a,
                    like(*a, gd.iter().zip(tb.data()).map(|(x, y)| x * y).collect()),
                );
                acc(
                    *b,
                    like(*b, gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect()),
                );
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                let n = g.cols();
                let mut gb = vec![0.0; n];
                for row in gd.chunks(n) {
                    for (o, v) in gb.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                acc(*b, like(*b, gb));
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * s)),
            Op::Sigmoid(x) => {
                let y = out.unwrap().data();
                acc(
                    *x,
                    like(
                        *x,
                        gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect(),
                    ),
                );
            }
            Op::Tanh(x) => {
                let y = out.unwrap().data();
                acc(
                    *x,
                    like(
                        *x,
                        gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect(),
                    ),
                );
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                acc(
                    *x,
                    like(
                        *x,
                        gd.iter()
                            .zip(xv)
                            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                            .collect(),
                    ),
                );
            }
            Op::LeakyRelu(x, s) => {
                let xv = self.value(*x).data();
                acc(
                    *x,
                    like(
                        *x,
                        gd.iter()
                            .zip(xv)
                            .map(|(g, x)| if *x > 0.0 { *g } else { s * g })
                            .collect(),
                    ),
                );
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g.row_slice(r)[start..start + w]);
                    }
                    acc(*p, Tensor::matrix(rows, w, d));
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut start = 0;
                for p in parts {
                    let r = self.value(*p).rows();
                    acc(
                        *p,
                        Tensor::matrix(r, c, gd[start * c..(start + r) * c].to_vec()),
                    );
                    start += r;
                }
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (rows, cols, w) = (tx.rows(), tx.cols(), g.cols());
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                }
                acc(*x, Tensor::matrix(rows, cols, d));
            }
            Op::SliceRows(x, start) => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut d = vec![0.0; tx.len()];
                d[start * c..start * c + gd.len()].copy_from_slice(gd);
                acc(*x, like(*x, d));
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::SoftmaxRows(x) => {
                let y = out.unwrap();
                let n = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        d[r * n + c] = yr[c] * (gr[c] - dot);
                    }
                }
                acc(*x, like(*x, d));
            }
            Op::LogSoftmaxRows(x) => {
                let y = out.unwrap();
                let n = y.cols();
                let mut d = vec![0.0; y.len()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let s: f64 = gr.iter().sum();
                    for c in 0..n {
                        d[r * n + c] = gr[c] - yr[c].exp() * s;
                    }
                }
                acc(*x, like(*x, d));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = g.cols();
                let gam = self.value(*gamma).data();
                let mut dx = vec![0.0; g.len()];
                let mut dg = vec![0.0; n];
                let mut db = vec![0.0; n];
                for r in 0..g.rows() {
                    let gr = g.row_slice(r);
                    let xh = &xhat[r * n..(r + 1) * n];
                    let mut sum = 0.0;
                    let mut dot = 0.0;
                    for c in 0..n {
                        dg[c] += gr[c] * xh[c];
                        db[c] += gr[c];
                        let dxh = gr[c] * gam[c];
                        sum += dxh;
                        dot += dxh * xh[c];
                    }
                    for c in 0..n {
                        let dxh = gr[c] * gam[c];
                        dx[r * n + c] =
                            inv_std[r] / n as f64 * (n as f64 * dxh - sum - xh[c] * dot);
                    }
                }
                acc(*x, like(*x, dx));
                acc(*gamma, like(*gamma, dg));
                acc(*beta, like(*beta, db));
            }
            Op::Dropout(x, mask) => {
                acc(
                    *x,
                    like(*x, gd.iter().zip(mask).map(|(g, m)| g * m).collect()),
                );
            }
            Op::Conv2d { x, w, b } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let [n, c, h, wd] = dims4(tx);
                let o = tw.shape()[0];
                let (xd, wdat) = (tx.data(), tw.data());
                let mut dx = vec![0.0; tx.len()];
                let mut dw = vec![0.0; tw.len()];
                let mut db = vec![0.0; o];
                for s in 0..n {
                    for oc in 0..o {
                        let gp = &gd[(s * o + oc) * h * wd..(s * o + oc + 1) * h * wd];
                        db[oc] += gp.iter().sum::<f64>();
                        for ic in 0..c {
                            let xoff = (s * c + ic) * h * wd;
                            let koff = (oc * c + ic) * 9;
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let kv = wdat[koff + ky * 3 + kx];
                                    let mut dk = 0.0;
                                    for y in 0..h {
                                        let iy = y as isize + ky as isize - 1;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let irow = xoff + iy as usize * wd;
                                        let (x0, x1) = (
                                            if kx == 0 { 1 } else { 0 },
                                            if kx == 2 { wd - 1 } else { wd },
                                        );
                                        for xo in x0..x1 {
                                            let gv = gp[y * wd + xo];
                                            let ii = irow + xo + kx - 1;
                                            dk += gv * xd[ii];
                                            dx[ii] += gv * kv;
                                        }
                                    }
                                    dw[koff + ky * 3 + kx] += dk;
                                }
                            }
                        }
                    }
                }
                acc(*x, like(*x, dx));
                acc(*w, like(*w, dw));
                acc(*b, like(*b, db));
            }
            Op::BatchNorm2d {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let tx = self.value(*x);
                let [n, c, h, w] = dims4(tx);
                let per = (n * h * w) as f64;
                let gam = self.value(*gamma).data();
                let mut dx = vec![0.0; tx.len()];
                let mut dg = vec![0.0; c];
                let mut db = vec![0.0; c];
                for ch in 0..c {
                    let idx =
                        || (0..n).flat_map(move |s| (s * c + ch) * h * w..(s * c + ch + 1) * h * w);
                    let mut sum = 0.0;
                    let mut dot = 0.0;
                    for i in idx() {
                        dg[ch] += gd[i] * xhat[i];
                        db[ch] += gd[i];
                        let dxh = gd[i] * gam[ch];
                        sum += dxh;
                        dot += dxh * xhat[i];
                    }
                    for i in idx() {
                        let dxh = gd[i] * gam[ch];
                        dx[i] = if *batch_stats {
                            inv_std[ch] / per * (per * dxh - sum - xhat[i] * dot)
                        } else {
                            dxh * inv_std[ch]
                        };
                    }
                }
                acc(*x, like(*x, dx));
                acc(*gamma, like(*gamma, dg));
                acc(*beta, like(*beta, db));
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src] += gd[o];
                }
                acc(*x, like(*x, dx));
            }
            Op::Reshape(x) => acc(*x, like(*x, gd.to_vec())),
            Op::MeanRows(x) => {
                let tx = self.value(*x);
                let m = tx.rows() as f64;
                let d: Vec<f64> = (0..tx.rows())
                    .flat_map(|_| gd.iter().map(|v| v / m))
                    .collect();
                acc(*x, like(*x, d));
            }
            Op::SumAll(x) => acc(*x, Tensor::filled(self.value(*x).shape(), gd[0])),
            Op::LstmCell { gates, c_prev } => {
                let (tg, tc) = (self.value(*gates), self.value(*c_prev));
                let (bsz, h) = (tc.rows(), tc.cols());
                let y = out.unwrap();
                let mut dg = vec![0.0; bsz * 4 * h];
                let mut dc_prev = vec![0.0; bsz * h];
                for r in 0..bsz {
                    let gr = tg.row_slice(r);
                    for k in 0..h {
                        let (i, f) = (sigmoid(gr[k]), sigmoid(gr[h + k]));
                        let (cc, o) = (gr[2 * h + k].tanh(), sigmoid(gr[3 * h + k]));
                        let c = y.at(r, h + k);
                        let tcv = c.tanh();
                        let (gh, gc) = (g.at(r, k), g.at(r, h + k));
                        let dc = gc + gh * o * (1.0 - tcv * tcv);
                        let base = r * 4 * h;
                        dg[base + k] = dc * cc * i * (1.0 - i);
                        dg[base + h + k] = dc * tc.at(r, k) * f * (1.0 - f);
                        dg[base + 2 * h + k] = dc * i * (1.0 - cc * cc);
                        dg[base + 3 * h + k] = gh * tcv * o * (1.0 - o);
                        dc_prev[r * h + k] = dc * f;
                    }
                }
                acc(*gates, like(*gates, dg));
                acc(*c_prev, like(*c_prev, dc_prev));
            }
            Op::WeightedBce {
                logits,
                targets,
                w_fg,
            } => {
                let z = self.value(*logits).data();
                let nn = targets.len() as f64;
                let d = z
                    .iter()
                    .zip(targets)
                    .map(|(&z, &t)| {
                        let p = sigmoid(z);
                        gd[0] * (w_fg * t * (p - 1.0) + (1.0 - t) * p) / nn
                    })
                    .collect();
                acc(*logits, like(*logits, d));
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let total: f64 = weights.iter().sum();
                let mut d = probs.data().to_vec();
                let c = probs.cols();
                for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
                    for k in 0..c {
                        d[r * c + k] *= w;
                    }
                    d[r * c + y] -= w;
                }
                d.iter_mut().for_each(|v| *v *= gd[0] / total);
                acc(*logits, like(*logits, d));
            }
        }
    }
}

fn dims4(t: &Tensor) -> [usize; 4] {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected [N, C, H, W], got {s:?}");
    [s[0], s[1], s[2], s[3]]
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_softmax_rows(t: &Tensor) -> Tensor {
    let n = t.cols();
    let mut out = t.data().to_vec();
    for row in out.chunks_mut(n) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Tensor::new(t.shape().to_vec(), out)
}

pub fn softmax_rows(t: &Tensor) -> Tensor {
    let n = t.cols();
    let mut out = t.data().to_vec();
    for row in out.chunks_mut(n) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Tensor::new(t.shape().to_vec(), out)
}

/// Gradients from one backward pass.
pub struct Grads {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the root with respect to any node.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id].as_ref()
    }

    pub fn into_params(self) -> ParamGrads {
        ParamGrads(self.params)
    }
}

/// Parameter gradients, accumulable across graphs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads(pub Vec<Option<Tensor>>);

impl ParamGrads {
    pub fn zeros(n: usize) -> Self {
        ParamGrads(vec![None; n])
    }

    pub fn accumulate(&mut self, other: ParamGrads) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), None);
        }
        for (mine, theirs) in self.0.iter_mut().zip(other.0) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => a.add_assign(&b),
                (None, Some(b)) => *mine = Some(b),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.0.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(Tensor::norm_sq)
            .sum::<f64>()
            .sqrt()
    }
}
