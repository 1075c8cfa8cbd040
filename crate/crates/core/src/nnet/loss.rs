use super::graph::log_softmax_rows;
use super::tensor::Tensor;
use super::NnError;

pub const DEFAULT_W_FG: f64 = 5.0;

const P_EPS: f64 = 1e-12;

/// Mean weighted binary cross-entropy on probabilities and its gradient
/// with respect to `pred`.
pub fn weighted_bce(pred: &[f64], target: &[f64], w_fg: f64) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "weighted_bce: length mismatch");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let p = p.clamp(P_EPS, 1.0 - P_EPS);
        loss += -w_fg * t * p.ln() - (1.0 - t) * (1.0 - p).ln();
        grad.push((-w_fg * t / p + (1.0 - t) / (1.0 - p)) / n);
    }
    (loss / n, grad)
}

/// Per-class weights `1/f_c`, or all ones when `balanced` is false.
pub fn class_weights(freqs: &[f64], balanced: bool) -> Result<Vec<f64>, NnError> {
    if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(NnError::Data("class frequencies must be positive".into()));
    }
    Ok(if balanced {
        freqs.iter().map(|f| 1.0 / f).collect()
    } else {
        vec![1.0; freqs.len()]
    })
}

/// Cross-entropy over row logits with per-class weights, reduced as
/// `Σ w_{y_i}·CE_i / Σ w_{y_i}`. Returns the loss and its logit gradient.
pub fn class_balanced_ce(
    logits: &Tensor,
    targets: &[usize],
    freqs: &[f64],
    balanced: bool,
) -> Result<(f64, Tensor), NnError> {
    let (m, c) = (logits.rows(), logits.cols());
    if targets.len() != m || freqs.len() != c {
        return Err(NnError::Shape {
            layer: "class_balanced_ce".into(),
            expected: format!("{} targets and {} frequencies", m, c),
            got: vec![targets.len(), freqs.len()],
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(NnError::Data(format!("target class {bad} outside 0..{c}")));
    }
    let w = class_weights(freqs, balanced)?;
    let logp = log_softmax_rows(logits);
    let total: f64 = targets.iter().map(|&t| w[t]).sum();
    let mut loss = 0.0;
    let mut grad = logp.map(f64::exp);
    for (r, &t) in targets.iter().enumerate() {
        let wt = w[t] / total;
        loss -= wt * logp.at(r, t);
        let row = &mut grad.data_mut()[r * c..(r + 1) * c];
        row.iter_mut().for_each(|v| *v *= wt);
        row[t] -= wt;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::graph::{Graph, ParamSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_closed_forms() {
        assert!(weighted_bce(&[1.0, 1.0], &[1.0, 1.0], 5.0).0.abs() < 1e-9);
        let (l, _) = weighted_bce(&[0.5], &[1.0], 5.0);
        assert!((l - 5.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_scalar_loop_and_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t: Vec<f64> = (0..16)
            .map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 })
            .collect();
        let p: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let mut oracle = 0.0;
        for i in 0..16 {
            if t[i] == 1.0 {
                oracle -= 5.0 * p[i].ln();
            } else {
                oracle -= (1.0 - p[i]).ln();
            }
        }
        oracle /= 16.0;
        let (l, grad) = weighted_bce(&p, &t, 5.0);
        assert!((l - oracle).abs() < 1e-9);
        let params = ParamSet::new();
        let mut g = Graph::eval(&params);
        let zv = g.input(Tensor::matrix(16, 1, z.clone()));
        let lv = g.weighted_bce_logits(zv, &t, 5.0);
        assert!((g.value(lv).data()[0] - oracle).abs() < 1e-9);
        let gz = g.backward(lv);
        for i in 0..16 {
            let chain = grad[i] * p[i] * (1.0 - p[i]);
            assert!((gz.wrt(zv).unwrap().data()[i] - chain).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_frequencies_equal_plain_ce() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits = Tensor::matrix(5, 3, (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let targets = [0, 2, 1, 1, 0];
        let (a, ga) = class_balanced_ce(&logits, &targets, &[0.2, 0.2, 0.2], true).unwrap();
        let (b, gb) = class_balanced_ce(&logits, &targets, &[0.2, 0.2, 0.2], false).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(ga, gb);
    }

    #[test]
    fn rare_class_weight_ratio() {
        let w = class_weights(&[0.9, 0.1], true).unwrap();
        assert!((w[1] / w[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn ce_matches_scalar_loop_and_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = Tensor::matrix(6, 4, (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let targets = [3, 0, 1, 1, 2, 0];
        let freqs = [0.4, 0.3, 0.2, 0.1];
        let mut num = 0.0;
        let mut den = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = logits.row_slice(r);
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            num += (1.0 / freqs[t]) * (lse - row[t]);
            den += 1.0 / freqs[t];
        }
        let (l, grad) = class_balanced_ce(&logits, &targets, &freqs, true).unwrap();
        assert!((l - num / den).abs() < 1e-9);
        let params = ParamSet::new();
        let mut g = Graph::eval(&params);
        let z = g.input(logits.clone());
        let w: Vec<f64> = targets.iter().map(|&t| 1.0 / freqs[t]).collect();
        let lv = g.cross_entropy(z, &targets, &w);
        assert!((g.value(lv).data()[0] - l).abs() < 1e-12);
        let gr = g.backward(lv);
        for (a, b) in gr.wrt(z).unwrap().data().iter().zip(grad.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(class_balanced_ce(&logits, &[0], &[0.0, 1.0], true).is_err());
        assert!(class_balanced_ce(&logits, &[2], &[0.5, 0.5], true).is_err());
        assert!(class_balanced_ce(&logits, &[0, 1], &[0.5, 0.5], true).is_err());
    }
}
