use rand::Rng;

use super::graph::{Graph, ParamSet, Var};
use super::init::{he, orthogonal_blocks, xavier};
use super::tensor::Tensor;
use super::{shape_err, NnError};

fn check_cols(g: &Graph, x: Var, layer: &str, want: usize) -> Result<(), NnError> {
    let s = g.shape(x);
    if s.len() != 2 || s[1] != want {
        return Err(shape_err(layer, format!("[*, {want}]"), s));
    }
    Ok(())
}

fn check_param(p: &ParamSet, name: &str, shape: &[usize]) -> Result<(), NnError> {
    match p.get(name) {
        None => Err(NnError::MissingParam(name.to_string())),
        Some(t) if t.shape() != shape => Err(shape_err(name, format!("{shape:?}"), t.shape())),
        Some(_) => Ok(()),
    }
}

/// Fully connected layer `x·W + b` with `W` of shape `[input, output]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Dense {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        p.insert(
            format!("{}.w", self.name),
            xavier(self.input, self.output, rng),
            true,
        );
        p.insert(
            format!("{}.b", self.name),
            Tensor::zeros(&[self.output]),
            true,
        );
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        check_param(p, &format!("{}.w", self.name), &[self.input, self.output])?;
        check_param(p, &format!("{}.b", self.name), &[self.output])
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        check_cols(g, x, &self.name, self.input)?;
        let w = g.param(&format!("{}.w", self.name));
        let b = g.param(&format!("{}.b", self.name));
        let y = g.matmul(x, w);
        Ok(g.add_bias(y, b))
    }
}

/// Row-wise layer normalization with learned scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        LayerNorm {
            name: name.into(),
            dim,
        }
    }

    pub fn init(&self, p: &mut ParamSet) {
        p.insert(
            format!("{}.gamma", self.name),
            Tensor::filled(&[self.dim], 1.0),
            true,
        );
        p.insert(
            format!("{}.beta", self.name),
            Tensor::zeros(&[self.dim]),
            true,
        );
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        check_param(p, &format!("{}.gamma", self.name), &[self.dim])?;
        check_param(p, &format!("{}.beta", self.name), &[self.dim])
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        check_cols(g, x, &self.name, self.dim)?;
        let gamma = g.param(&format!("{}.gamma", self.name));
        let beta = g.param(&format!("{}.beta", self.name));
        Ok(g.layer_norm(x, gamma, beta))
    }
}

/// Unidirectional LSTM over a `[T, input]` sequence.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Lstm {
            name: name.into(),
            input,
            hidden,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        let h = self.hidden;
        p.insert(
            format!("{}.wx", self.name),
            xavier(self.input, 4 * h, rng),
            true,
        );
        p.insert(
            format!("{}.wh", self.name),
            orthogonal_blocks(h, 4, rng),
            true,
        );
        let mut b = Tensor::zeros(&[4 * h]);
        b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        p.insert(format!("{}.b", self.name), b, true);
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        let h = self.hidden;
        check_param(p, &format!("{}.wx", self.name), &[self.input, 4 * h])?;
        check_param(p, &format!("{}.wh", self.name), &[h, 4 * h])?;
        check_param(p, &format!("{}.b", self.name), &[4 * h])
    }

    /// Hidden states `[T, hidden]`, aligned with input time steps. With
    /// `reverse` the recurrence runs from the last step to the first.
    pub fn forward(&self, g: &mut Graph, x: Var, reverse: bool) -> Result<Var, NnError> {
        check_cols(g, x, &self.name, self.input)?;
        let h = self.hidden;
        let steps = g.shape(x)[0];
        let wx = g.param(&format!("{}.wx", self.name));
        let wh = g.param(&format!("{}.wh", self.name));
        let b = g.param(&format!("{}.b", self.name));
        let xw = g.matmul(x, wx);
        let xw = g.add_bias(xw, b);
        let mut hs = vec![None; steps];
        let mut state: Option<(Var, Var)> = None;
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xt = g.slice_rows(xw, t, 1);
            let (gates, c_prev) = match state {
                Some((hp, cp)) => {
                    let r = g.matmul(hp, wh);
                    (g.add(xt, r), cp)
                }
                None => (xt, g.input(Tensor::zeros(&[1, h]))),
            };
            let out = g.lstm_cell(gates, c_prev);
            let ht = g.slice_cols(out, 0, h);
            let ct = g.slice_cols(out, h, h);
            hs[t] = Some(ht);
            state = Some((ht, ct));
        }
        let hs: Vec<Var> = hs
            .into_iter()
            .map(|v| v.expect("every step visited"))
            .collect();
        if hs.is_empty() {
            return Err(shape_err(&self.name, "at least one time step", g.shape(x)));
        }
        Ok(g.concat_rows(&hs))
    }
}

/// Forward and backward LSTMs, outputs concatenated to `[T, 2·hidden]`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        BiLstm {
            fwd: Lstm::new(format!("{name}.fwd"), input, hidden),
            bwd: Lstm::new(format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        self.fwd.init(p, rng);
        self.bwd.init(p, rng);
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        self.fwd.check(p)?;
        self.bwd.check(p)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let f = self.fwd.forward(g, x, false)?;
        let b = self.bwd.forward(g, x, true)?;
        Ok(g.concat_cols(&[f, b]))
    }
}

/// Multi-head scaled dot-product self-attention over `[T, dim]`.
#[derive(Clone, Debug)]
pub struct Mha {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
}

impl Mha {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize) -> Self {
        assert!(
            heads > 0 && dim.is_multiple_of(heads),
            "dim {dim} not divisible by {heads} heads"
        );
        Mha {
            name: name.into(),
            dim,
            heads,
        }
    }

    fn proj(&self, which: &str) -> Dense {
        Dense::new(format!("{}.{which}", self.name), self.dim, self.dim)
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        for w in ["q", "k", "v", "o"] {
            self.proj(w).init(p, rng);
        }
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        for w in ["q", "k", "v", "o"] {
            self.proj(w).check(p)?;
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        check_cols(g, x, &self.name, self.dim)?;
        let q = self.proj("q").forward(g, x)?;
        let k = self.proj("k").forward(g, x)?;
        let v = self.proj("v").forward(g, x)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let kt = g.transpose(kh);
            let s = g.matmul(qh, kt);
            let s = g.scale(s, scale);
            let a = g.softmax_rows(s);
            outs.push(g.matmul(a, vh));
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_cols(&outs)
        };
        self.proj("o").forward(g, cat)
    }
}

/// Pre-norm encoder layer: `x + MHA(LN(x))`, then `x + FFN(LN(x))` with a
/// ReLU feed-forward of width `4·dim`.
#[derive(Clone, Debug)]
pub struct TransformerLayer {
    pub ln1: LayerNorm,
    pub mha: Mha,
    pub ln2: LayerNorm,
    pub ff1: Dense,
    pub ff2: Dense,
    pub dropout: f64,
}

impl TransformerLayer {
    pub fn new(name: &str, dim: usize, heads: usize, dropout: f64) -> Self {
        TransformerLayer {
            ln1: LayerNorm::new(format!("{name}.ln1"), dim),
            mha: Mha::new(format!("{name}.mha"), dim, heads),
            ln2: LayerNorm::new(format!("{name}.ln2"), dim),
            ff1: Dense::new(format!("{name}.ff1"), dim, 4 * dim),
            ff2: Dense::new(format!("{name}.ff2"), 4 * dim, dim),
            dropout,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        self.ln1.init(p);
        self.mha.init(p, rng);
        self.ln2.init(p);
        self.ff1.init(p, rng);
        self.ff2.init(p, rng);
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        self.ln1.check(p)?;
        self.mha.check(p)?;
        self.ln2.check(p)?;
        self.ff1.check(p)?;
        self.ff2.check(p)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let n = self.ln1.forward(g, x)?;
        let a = self.mha.forward(g, n)?;
        let a = g.dropout(a, self.dropout);
        let x = g.add(x, a);
        let n = self.ln2.forward(g, x)?;
        let f = self.ff1.forward(g, n)?;
        let f = g.relu(f);
        let f = self.ff2.forward(g, f)?;
        let f = g.dropout(f, self.dropout);
        Ok(g.add(x, f))
    }
}

/// 3×3 convolution, batch norm, ReLU, 2×2 max pooling on `[N, C, H, W]`.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub name: String,
    pub input: usize,
    pub output: usize,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl ConvBlock {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        ConvBlock {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        let (n, c, o) = (&self.name, self.input, self.output);
        p.insert(format!("{n}.w"), he(&[o, c, 3, 3], c * 9, rng), true);
        p.insert(format!("{n}.b"), Tensor::zeros(&[o]), true);
        p.insert(format!("{n}.gamma"), Tensor::filled(&[o], 1.0), true);
        p.insert(format!("{n}.beta"), Tensor::zeros(&[o]), true);
        p.insert(format!("{n}.running_mean"), Tensor::zeros(&[o]), false);
        p.insert(format!("{n}.running_var"), Tensor::filled(&[o], 1.0), false);
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        let (n, c, o) = (&self.name, self.input, self.output);
        check_param(p, &format!("{n}.w"), &[o, c, 3, 3])?;
        for s in ["b", "gamma", "beta", "running_mean", "running_var"] {
            check_param(p, &format!("{n}.{s}"), &[o])?;
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.input || s[2] < 2 || s[3] < 2 {
            return Err(shape_err(
                &self.name,
                format!("[N, {}, H≥2, W≥2]", self.input),
                s,
            ));
        }
        let n = &self.name;
        let (w, b) = (g.param(&format!("{n}.w")), g.param(&format!("{n}.b")));
        let (gamma, beta) = (
            g.param(&format!("{n}.gamma")),
            g.param(&format!("{n}.beta")),
        );
        let rm = g
            .params()
            .id(&format!("{n}.running_mean"))
            .ok_or_else(|| NnError::MissingParam(format!("{n}.running_mean")))?;
        let rv = g
            .params()
            .id(&format!("{n}.running_var"))
            .ok_or_else(|| NnError::MissingParam(format!("{n}.running_var")))?;
        let y = g.conv2d(x, w, b);
        let y = g.batch_norm2d(y, gamma, beta, rm, rv, BN_MOMENTUM);
        let y = g.relu(y);
        Ok(g.max_pool2(y))
    }
}

/// Single-query attention pooling of `[T, dim]` into `[1, dim]`.
#[derive(Clone, Debug)]
pub struct AttentionPool {
    pub name: String,
    pub dim: usize,
}

impl AttentionPool {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        AttentionPool {
            name: name.into(),
            dim,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut ParamSet, rng: &mut R) {
        p.insert(format!("{}.q", self.name), xavier(self.dim, 1, rng), true);
    }

    pub fn check(&self, p: &ParamSet) -> Result<(), NnError> {
        check_param(p, &format!("{}.q", self.name), &[self.dim, 1])
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        check_cols(g, x, &self.name, self.dim)?;
        let q = g.param(&format!("{}.q", self.name));
        let s = g.matmul(x, q);
        let s = g.scale(s, 1.0 / (self.dim as f64).sqrt());
        let s = g.transpose(s);
        let a = g.softmax_rows(s);
        Ok(g.matmul(a, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let d = Dense::new("d", 3, 3);
        let mut p = ParamSet::new();
        p.insert("d.w", Tensor::identity(3), true);
        p.insert("d.b", Tensor::zeros(&[3]), true);
        let mut g = Graph::eval(&p);
        let xt = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        let x = g.input(xt.clone());
        let y = d.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y), &xt);
    }

    #[test]
    fn dense_shape_error_names_layer() {
        let d = Dense::new("head", 3, 2);
        let mut p = ParamSet::new();
        d.init(&mut p, &mut ChaCha8Rng::seed_from_u64(0));
        let mut g = Graph::eval(&p);
        let x = g.input(Tensor::zeros(&[1, 4]));
        let err = d.forward(&mut g, x).unwrap_err().to_string();
        assert!(err.contains("head") && err.contains("[1, 4]"), "{err}");
    }

    #[test]
    fn uniform_attention_averages_values() {
        let m = Mha::new("att", 4, 2);
        let mut p = ParamSet::new();
        for w in ["q", "k"] {
            p.insert(format!("att.{w}.w"), Tensor::zeros(&[4, 4]), true);
            p.insert(format!("att.{w}.b"), Tensor::zeros(&[4]), true);
        }
        for w in ["v", "o"] {
            p.insert(format!("att.{w}.w"), Tensor::identity(4), true);
            p.insert(format!("att.{w}.b"), Tensor::zeros(&[4]), true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xt = rand_tensor(&[5, 4], &mut rng);
        let mut g = Graph::eval(&p);
        let x = g.input(xt.clone());
        let y = m.forward(&mut g, x).unwrap();
        for c in 0..4 {
            let mean = (0..5).map(|r| xt.at(r, c)).sum::<f64>() / 5.0;
            for r in 0..5 {
                assert!((g.value(y).at(r, c) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilstm_output_dim_and_time_alignment() {
        let l = BiLstm::new("rnn", 3, 4);
        let mut p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        l.init(&mut p, &mut rng);
        l.check(&p).unwrap();
        let xt = rand_tensor(&[6, 3], &mut rng);
        let mut g = Graph::eval(&p);
        let x = g.input(xt.clone());
        let y = l.forward(&mut g, x).unwrap();
        assert_eq!(g.shape(y), &[6, 8]);
        let prefix = Tensor::matrix(3, 3, xt.data()[..9].to_vec());
        let mut g2 = Graph::eval(&p);
        let x2 = g2.input(prefix);
        let y2 = l.fwd.forward(&mut g2, x2, false).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert!((g.value(y).at(r, c) - g2.value(y2).at(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let l = Lstm::new("l", 2, 3);
        let mut p = ParamSet::new();
        l.init(&mut p, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(
            p.get("l.b").unwrap().data(),
            &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]
        );
    }

    #[test]
    fn conv_block_halves_spatial_dims() {
        let c = ConvBlock::new("c", 1, 2);
        let mut p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        c.init(&mut p, &mut rng);
        let mut g = Graph::train(&p, 0);
        let x = g.input(rand_tensor(&[2, 1, 6, 6], &mut rng));
        let y = c.forward(&mut g, x).unwrap();
        assert_eq!(g.shape(y), &[2, 2, 3, 3]);
        assert_eq!(g.take_buffer_updates().len(), 2);
    }

    #[test]
    fn dropout_inference_is_identity_and_train_preserves_mean() {
        let p = ParamSet::new();
        let xt = Tensor::filled(&[1, 100_000], 2.0);
        let mut g = Graph::eval(&p);
        let x = g.input(xt.clone());
        let y = g.dropout(x, 0.4);
        assert_eq!(g.value(y), &xt);
        let mut g = Graph::train(&p, 11);
        let x = g.input(xt);
        let y = g.dropout(x, 0.4);
        let mean = g.value(y).data().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 2.0).abs() / 2.0 < 0.01, "{mean}");
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = ParamSet::new();
        let mut g = Graph::eval(&p);
        let x = g.input(Tensor::matrix(2, 3, vec![1e4, -1e4, 0.0, -1e4, -1e4, -1e4]));
        let s = g.softmax_rows(x);
        let l = g.log_softmax_rows(x);
        for r in 0..2 {
            let sum: f64 = g.value(s).row_slice(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(g.value(l).row_slice(r).iter().all(|v| v.is_finite()));
        }
    }
}
