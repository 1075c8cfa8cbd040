use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, ParamSet, Var};
use super::layers::{AttentionPool, BiLstm, ConvBlock, Dense, LayerNorm, Mha, TransformerLayer};
use super::tensor::Tensor;
use super::NnError;

/// Relative error `‖a − n‖ / (‖a‖ + ‖n‖)` between analytic and numeric
/// gradients of one tensor. Gradients that vanish on both sides (below
/// 1e-6 in norm) count as agreeing.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
}

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(n)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale =
        a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-6 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares backprop against central differences for every trainable
/// parameter and every input of `build`. The scalar objective is the sum of
/// the output weighted by a fixed random projection. Training-mode graphs
/// with a fixed seed are used so dropout masks repeat between evaluations.
pub fn check_gradients<F>(
    params: &ParamSet,
    inputs: &[Tensor],
    eps: f64,
    seed: u64,
    build: F,
) -> Result<Vec<GradCheck>, NnError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NnError>,
{
    let mut proj: Option<Tensor> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut eval = |p: &ParamSet,
                    xs: &[Tensor],
                    want_grads: bool|
     -> Result<(f64, Vec<Tensor>, Vec<Option<Tensor>>), NnError> {
        let mut g = Graph::train(p, seed);
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let out = build(&mut g, &vars)?;
        let r = proj
            .get_or_insert_with(|| {
                let s = g.shape(out).to_vec();
                let n = s.iter().product();
                Tensor::new(s, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .clone();
        let rv = g.input(r);
        let m = g.mul(out, rv);
        let loss = g.sum_all(m);
        let value = g.value(loss).data()[0];
        if !want_grads {
            return Ok((value, vec![], vec![]));
        }
        let grads = g.backward(loss);
        let gx = vars
            .iter()
            .zip(xs)
            .map(|(v, x)| {
                grads
                    .wrt(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(x.shape()))
            })
            .collect();
        let gp = (0..p.len()).map(|id| grads.param(id).cloned()).collect();
        Ok((value, gx, gp))
    };

    let (_, gx, gp) = eval(params, inputs, true)?;
    let mut report = Vec::new();

    for (i, x) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; x.len()];
        let mut xs = inputs.to_vec();
        for k in 0..x.len() {
            xs[i].data_mut()[k] = x.data()[k] + eps;
            let up = eval(params, &xs, false)?.0;
            xs[i].data_mut()[k] = x.data()[k] - eps;
            let down = eval(params, &xs, false)?.0;
            xs[i].data_mut()[k] = x.data()[k];
            numeric[k] = (up - down) / (2.0 * eps);
        }
        report.push(GradCheck {
            name: format!("input{i}"),
            rel_err: rel_err(gx[i].data(), &numeric),
        });
    }

    let mut p = params.clone();
    for id in 0..params.len() {
        if !params.is_trainable(id) {
            continue;
        }
        let orig = params.value(id).clone();
        let mut numeric = vec![0.0; orig.len()];
        for k in 0..orig.len() {
            p.value_mut(id).data_mut()[k] = orig.data()[k] + eps;
            let up = eval(&p, inputs, false)?.0;
            p.value_mut(id).data_mut()[k] = orig.data()[k] - eps;
            let down = eval(&p, inputs, false)?.0;
            p.value_mut(id).data_mut()[k] = orig.data()[k];
            numeric[k] = (up - down) / (2.0 * eps);
        }
        let analytic = gp[id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(orig.shape()));
        report.push(GradCheck {
            name: params.name(id).to_string(),
            rel_err: rel_err(analytic.data(), &numeric),
        });
    }
    Ok(report)
}

/// [`Graph::relu_margin`] of one training-mode evaluation of `build`.
pub fn kink_margin<F>(
    params: &ParamSet,
    inputs: &[Tensor],
    seed: u64,
    build: F,
) -> Result<f64, NnError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NnError>,
{
    let mut g = Graph::train(params, seed);
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    build(&mut g, &vars)?;
    Ok(g.relu_margin())
}

/// Draws inputs until no ReLU input sits within `margin` of zero, where
/// central differences would straddle the kink.
fn draw_smooth(
    p: &ParamSet,
    shape: &[usize],
    seed: u64,
    margin: f64,
    rng: &mut ChaCha8Rng,
    f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var, NnError>,
) -> Result<Tensor, NnError> {
    let mut x = random(shape, rng);
    for _ in 0..100 {
        if kink_margin(p, std::slice::from_ref(&x), seed, f)? > margin {
            break;
        }
        x = random(shape, rng);
    }
    Ok(x)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn perturbed(p: &mut ParamSet, rng: &mut ChaCha8Rng) {
    for id in 0..p.len() {
        if p.is_trainable(id) {
            p.value_mut(id)
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
    }
}

const KINK_MARGIN: f64 = 2e-3;

/// Worst relative error per layer kind over randomized small shapes.
pub fn layer_suite(seed: u64, eps: f64) -> Result<Vec<(String, f64)>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |label: &str,
                   p: ParamSet,
                   xs: Vec<Tensor>,
                   f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var, NnError>|
     -> Result<(), NnError> {
        let r = check_gradients(&p, &xs, eps, seed, f)?;
        let worst = r.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        out.push((label.to_string(), worst));
        Ok(())
    };

    let dense = Dense::new("dense", 8, 5);
    let mut p = ParamSet::new();
    dense.init(&mut p, &mut rng);
    perturbed(&mut p, &mut rng);
    let x = random(&[4, 8], &mut rng);
    run("dense", p, vec![x], &|g, v| dense.forward(g, v[0]))?;

    let ln = LayerNorm::new("ln", 8);
    let mut p = ParamSet::new();
    ln.init(&mut p);
    perturbed(&mut p, &mut rng);
    let x = random(&[4, 8], &mut rng);
    run("layer_norm", p, vec![x], &|g, v| ln.forward(g, v[0]))?;

    let lstm = BiLstm::new("bilstm", 8, 3);
    let mut p = ParamSet::new();
    lstm.init(&mut p, &mut rng);
    let x = random(&[4, 8], &mut rng);
    run("bilstm", p, vec![x], &|g, v| lstm.forward(g, v[0]))?;

    let mha = Mha::new("mha", 8, 2);
    let mut p = ParamSet::new();
    mha.init(&mut p, &mut rng);
    perturbed(&mut p, &mut rng);
    let x = random(&[4, 8], &mut rng);
    run("mha", p, vec![x], &|g, v| mha.forward(g, v[0]))?;

    let tl = TransformerLayer::new("enc", 8, 2, 0.1);
    let mut p = ParamSet::new();
    tl.init(&mut p, &mut rng);
    perturbed(&mut p, &mut rng);
    let f = |g: &mut Graph, v: &[Var]| tl.forward(g, v[0]);
    let x = draw_smooth(&p, &[4, 8], seed, KINK_MARGIN, &mut rng, &f)?;
    run("transformer_layer", p, vec![x], &f)?;

    let conv = ConvBlock::new("conv", 2, 3);
    let mut p = ParamSet::new();
    conv.init(&mut p, &mut rng);
    perturbed(&mut p, &mut rng);
    let f = |g: &mut Graph, v: &[Var]| conv.forward(g, v[0]);
    let x = draw_smooth(&p, &[2, 2, 4, 4], seed, KINK_MARGIN, &mut rng, &f)?;
    run("conv_block", p, vec![x], &f)?;

    let pool = AttentionPool::new("pool", 8);
    let mut p = ParamSet::new();
    pool.init(&mut p, &mut rng);
    perturbed(&mut p, &mut rng);
    let x = random(&[4, 8], &mut rng);
    run("attention_pool", p, vec![x], &|g, v| pool.forward(g, v[0]))?;

    let x = random(&[4, 8], &mut rng);
    let y = random(&[4, 8], &mut rng);
    run(
        "dropout_concat_slice",
        ParamSet::new(),
        vec![x, y],
        &|g, v| {
            let d = g.dropout(v[0], 0.4);
            let c = g.concat_cols(&[d, v[1]]);
            let s = g.slice_cols(c, 3, 9);
            let r = g.concat_rows(&[s, s]);
            let r = g.slice_rows(r, 2, 5);
            let m = g.mean_rows(r);
            let m = g.reshape(m, &[3, 3]);
            Ok(g.softmax_rows(m))
        },
    )?;

    let targets = vec![1.0, 0.0, 0.0, 1.0];
    let x = random(&[4, 1], &mut rng);
    run("weighted_bce", ParamSet::new(), vec![x], &|g, v| {
        Ok(g.weighted_bce_logits(v[0], &targets, 5.0))
    })?;

    let x = random(&[4, 8], &mut rng);
    run("cross_entropy", ParamSet::new(), vec![x], &|g, v| {
        Ok(g.cross_entropy(v[0], &[0, 7, 3, 3], &[1.0, 2.0, 0.5, 0.5]))
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(rel_err(&[1.0, 2.0], &[1.0, 2.0]) == 0.0);
        assert!(rel_err(&[1.0, 0.0], &[0.0, 1.0]) > 0.5);
    }

    #[test]
    fn elementwise_ops_pass() {
        let p = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::matrix(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let b = Tensor::matrix(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let r = check_gradients(&p, &[a, b], 1e-4, 0, |g, v| {
            let s = g.sub(v[0], v[1]);
            let m = g.mul(s, v[0]);
            let t = g.tanh(m);
            let s2 = g.sigmoid(v[1]);
            let l = g.leaky_relu(s2, 0.01);
            let a = g.add(t, l);
            let tr = g.transpose(a);
            let ls = g.log_softmax_rows(tr);
            Ok(g.scale(ls, 0.5))
        })
        .unwrap();
        for c in r {
            assert!(c.rel_err < 1e-6, "{c:?}");
        }
    }
}
