use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamGrads, ParamSet, Var};
use super::optim::{cosine_lr, AdamW, AdamWConfig};
use super::NnError;

/// Hyperparameters shared by all stage trainers. Loaded from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Samples per independently evaluated graph; 0 means the whole batch.
    pub micro_batch: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub clip: f64,
    pub seed: u64,
    pub patience: usize,
    pub w_fg: f64,
    pub augment: bool,
    /// Epochs of the second phase (clean fine-tuning / standard loss).
    pub finetune_epochs: usize,
    /// Stop once training accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            micro_batch: 1,
            lr: 1e-4,
            min_lr: 0.0,
            weight_decay: 1e-4,
            clip: 5.0,
            seed: 0,
            patience: 5,
            w_fg: 5.0,
            augment: false,
            finetune_epochs: 0,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, NnError> {
        toml::from_str(text).map_err(|e| NnError::Data(format!("training config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip: Some(self.clip),
            ..AdamWConfig::default()
        }
    }
}

/// Minibatch AdamW loop with cosine annealing over `period` epochs.
///
/// Micro-batches of a minibatch are differentiated in parallel and their
/// gradients reduced in index order, so results do not depend on thread
/// scheduling.
pub struct Trainer {
    pub config: TrainConfig,
    pub period: usize,
    opt: AdamW,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        let period = config.epochs;
        Trainer {
            opt: AdamW::new(config.adamw()),
            config,
            period,
            epoch: 0,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.config.lr, self.config.min_lr, self.epoch, self.period)
    }

    /// Runs one epoch over samples `0..n` in a seeded shuffled order.
    /// `loss_fn` must return the mean loss over the given sample indices.
    /// Returns the sample-weighted mean training loss.
    pub fn epoch<F>(&mut self, params: &mut ParamSet, n: usize, loss_fn: F) -> Result<f64, NnError>
    where
        F: Fn(&mut Graph, &[usize]) -> Result<Var, NnError> + Sync,
    {
        if n == 0 {
            return Err(NnError::Data("empty training set".into()));
        }
        let seed = self
            .config
            .seed
            .wrapping_mul(0x9e37_79b9)
            .wrapping_add(self.epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let lr = self.current_lr();
        let bs = self.config.batch_size.max(1);
        let micro = if self.config.micro_batch == 0 {
            bs
        } else {
            self.config.micro_batch
        };
        let mut total = 0.0;
        for (b, batch) in order.chunks(bs).enumerate() {
            let shared: &ParamSet = params;
            let results: Vec<Result<(f64, ParamGrads, Vec<_>), NnError>> = batch
                .par_chunks(micro)
                .enumerate()
                .map(|(m, idx)| {
                    let gseed = seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add((b * 4096 + m) as u64);
                    let mut g = Graph::train(shared, gseed);
                    let loss = loss_fn(&mut g, idx)?;
                    let value = g.value(loss).data()[0];
                    let mut grads = g.backward(loss).into_params();
                    grads.scale(idx.len() as f64 / batch.len() as f64);
                    Ok((value * idx.len() as f64, grads, g.take_buffer_updates()))
                })
                .collect();
            let mut acc = ParamGrads::zeros(params.len());
            let mut updates = Vec::new();
            for r in results {
                let (l, g, u) = r?;
                if !l.is_finite() {
                    return Err(NnError::Data(format!(
                        "non-finite loss in epoch {}",
                        self.epoch
                    )));
                }
                total += l;
                acc.accumulate(g);
                updates.extend(u);
            }
            self.opt.step(params, &mut acc, lr);
            for (id, t) in updates {
                *params.value_mut(id) = t;
            }
        }
        self.epoch += 1;
        Ok(total / n as f64)
    }
}

/// Outcome of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub losses: Vec<f64>,
    pub accuracy: f64,
}

/// Runs up to `config.epochs` epochs, stopping early once `accuracy`
/// reaches `config.target_accuracy`. The final accuracy is always measured.
pub fn fit<F, A>(
    config: &TrainConfig,
    params: &mut ParamSet,
    n: usize,
    loss_fn: F,
    mut accuracy: A,
) -> Result<TrainReport, NnError>
where
    F: Fn(&mut Graph, &[usize]) -> Result<Var, NnError> + Sync,
    A: FnMut(&ParamSet) -> Result<f64, NnError>,
{
    let mut trainer = Trainer::new(config.clone());
    let mut report = TrainReport::default();
    for _ in 0..config.epochs {
        report.losses.push(trainer.epoch(params, n, &loss_fn)?);
        report.epochs += 1;
        if let Some(target) = config.target_accuracy {
            report.accuracy = accuracy(params)?;
            if report.accuracy >= target {
                return Ok(report);
            }
        }
    }
    report.accuracy = accuracy(params)?;
    Ok(report)
}

/// Patience tracker on a monitored loss.
#[derive(Clone, Debug)]
pub struct Plateau {
    pub patience: usize,
    best: f64,
    bad: usize,
}

impl Plateau {
    pub fn new(patience: usize) -> Self {
        Plateau {
            patience,
            best: f64::INFINITY,
            bad: 0,
        }
    }

    /// Records a value; true once `patience` consecutive observations
    /// have failed to improve on the best so far.
    pub fn observe(&mut self, value: f64) -> bool {
        if value < self.best - 1e-12 {
            self.best = value;
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        self.bad >= self.patience
    }

    pub fn reset(&mut self) {
        self.best = f64::INFINITY;
        self.bad = 0;
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::layers::Dense;
    use crate::nnet::tensor::Tensor;

    #[test]
    fn plateau_fires_after_patience() {
        let mut p = Plateau::new(3);
        assert!(!p.observe(1.0));
        assert!(!p.observe(0.5));
        assert!(!p.observe(0.6));
        assert!(!p.observe(0.5));
        assert!(p.observe(0.7));
        p.reset();
        assert!(!p.observe(9.0));
    }

    #[test]
    fn config_from_toml() {
        let c = TrainConfig::from_toml("epochs = 3\nlr = 0.01\nseed = 7\n").unwrap();
        assert_eq!((c.epochs, c.lr, c.seed), (3, 0.01, 7));
        assert_eq!(c.batch_size, TrainConfig::default().batch_size);
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
    }

    fn fit(seed: u64) -> (Vec<f64>, ParamSet) {
        let xs: Vec<[f64; 2]> = (0..16)
            .map(|i| [i as f64 / 8.0 - 1.0, (i % 3) as f64 - 1.0])
            .collect();
        let ys: Vec<usize> = xs.iter().map(|x| (x[0] + x[1] > 0.0) as usize).collect();
        let d = Dense::new("d", 2, 2);
        let mut p = ParamSet::new();
        d.init(&mut p, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut t = Trainer::new(TrainConfig {
            epochs: 30,
            batch_size: 4,
            micro_batch: 2,
            lr: 0.05,
            seed,
            ..TrainConfig::default()
        });
        let mut losses = Vec::new();
        for _ in 0..30 {
            let l = t
                .epoch(&mut p, 16, |g, idx| {
                    let data: Vec<f64> = idx.iter().flat_map(|&i| xs[i]).collect();
                    let x = g.input(Tensor::matrix(idx.len(), 2, data));
                    let z = d.forward(g, x)?;
                    let y: Vec<usize> = idx.iter().map(|&i| ys[i]).collect();
                    Ok(g.cross_entropy(z, &y, &vec![1.0; idx.len()]))
                })
                .unwrap();
            losses.push(l);
        }
        (losses, p)
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let (a, pa) = fit(3);
        let (b, pb) = fit(3);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert!(a.last().unwrap() < &(a[0] * 0.7), "{a:?}");
    }
}
