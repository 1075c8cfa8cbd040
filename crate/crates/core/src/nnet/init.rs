use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;

/// Glorot uniform for an `[fan_in, fan_out]` matrix.
pub fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-a..a))
        .collect();
    Tensor::matrix(fan_in, fan_out, data)
}

/// He normal with the given fan-in, arbitrary shape.
pub fn he<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let s = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            s * z
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Random `n`×`n` orthogonal matrix (Gram–Schmidt on a Gaussian draw).
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            rows.push(v);
        }
    }
    Tensor::matrix(n, n, rows.concat())
}

/// `[h, k·h]` made of `k` orthogonal blocks side by side.
pub fn orthogonal_blocks<R: Rng + ?Sized>(h: usize, k: usize, rng: &mut R) -> Tensor {
    let blocks: Vec<Tensor> = (0..k).map(|_| orthogonal(h, rng)).collect();
    let mut data = Vec::with_capacity(h * h * k);
    for r in 0..h {
        for b in &blocks {
            data.extend_from_slice(b.row_slice(r));
        }
    }
    Tensor::matrix(h, k * h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::tensor::matmul;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthonormal() {
        let q = orthogonal(6, &mut ChaCha8Rng::seed_from_u64(1));
        let qqt = matmul(&q, false, &q, true);
        for (a, b) in qqt.data().iter().zip(Tensor::identity(6).data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn xavier_bounds() {
        let w = xavier(10, 20, &mut ChaCha8Rng::seed_from_u64(2));
        let a = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= a));
        assert_eq!(w.shape(), &[10, 20]);
    }
}
