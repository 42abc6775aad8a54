//! Minibatch Adam with periodic dev checkpoints and patience-based stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Training examples between dev evaluations.
    pub checkpoint_interval: usize,
    /// Examples per epoch; `None` means the size of the training split.
    pub epoch_size: Option<usize>,
    /// Checkpoints without improvement before stopping; `None` means one epoch's worth.
    pub patience: Option<usize>,
    pub max_epochs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            checkpoint_interval: 1000,
            epoch_size: None,
            patience: None,
            max_epochs: 60,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn epoch_examples(&self, train_len: usize) -> usize {
        self.epoch_size.unwrap_or(train_len)
    }

    pub fn patience_checkpoints(&self, train_len: usize) -> usize {
        self.patience.unwrap_or_else(|| (self.epoch_examples(train_len) / self.checkpoint_interval.max(1)).max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub examples_seen: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<CheckpointRecord>,
    pub best_checkpoint: usize,
    pub best_dev_loss: f64,
    pub epochs: usize,
    pub steps: usize,
    pub stop: StopReason,
}

/// Shuffled batches that never mix keys. Groups are chunked independently,
/// then the chunk order is shuffled.
pub fn bucketed_batches<K: Ord + Clone, R: Rng + ?Sized>(keys: &[K], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<K, Vec<usize>> = Default::default();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    let mut batches = Vec::new();
    for mut idx in groups.into_values() {
        idx.shuffle(rng);
        batches.extend(idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

/// Runs the optimisation loop and leaves the best checkpoint in `params`.
///
/// `step_loss` returns the batch loss and gradients aligned with the store;
/// `dev_loss` scores the current parameters on held-out data.
pub fn train<T, R, B, S, D>(
    params: &mut ParamStore<T>,
    config: &TrainConfig,
    train_len: usize,
    rng: &mut R,
    mut make_batches: B,
    mut step_loss: S,
    mut dev_loss: D,
) -> Result<TrainReport>
where
    T: Scalar,
    R: Rng + ?Sized,
    B: FnMut(&mut R) -> Vec<Vec<usize>>,
    S: FnMut(&ParamStore<T>, &[usize]) -> Result<(f64, Vec<Option<Tensor<T>>>)>,
    D: FnMut(&ParamStore<T>) -> Result<f64>,
{
    let mut adam = AdamState::new(params, config.adam);
    let patience = config.patience_checkpoints(train_len);
    let epoch_examples = config.epoch_examples(train_len).max(1);
    let interval = config.checkpoint_interval.max(1);

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, ParamStore<T>)> = None;
    let mut since_best = 0;
    let (mut seen, mut steps, mut epochs) = (0usize, 0usize, 0usize);
    let mut next_checkpoint = interval;
    let (mut window_loss, mut window_batches) = (0.0, 0usize);
    let mut stop = StopReason::MaxEpochs;

    'outer: while epochs < config.max_epochs {
        let mut epoch_seen = 0;
        epochs += 1;
        while epoch_seen < epoch_examples {
            for batch in make_batches(rng) {
                if epoch_seen >= epoch_examples {
                    break;
                }
                let (loss, grads) = step_loss(params, &batch)?;
                steps += 1;
                if !loss.is_finite() {
                    return Err(Error::Divergence { step: steps, loss });
                }
                adam.step(params, &grads)?;
                window_loss += loss;
                window_batches += 1;
                seen += batch.len();
                epoch_seen += batch.len();
                if seen >= next_checkpoint {
                    next_checkpoint += interval * ((seen - next_checkpoint) / interval + 1);
                    let dev = dev_loss(params)?;
                    if !dev.is_finite() {
                        return Err(Error::Divergence { step: steps, loss: dev });
                    }
                    history.push(CheckpointRecord {
                        examples_seen: seen,
                        train_loss: window_loss / window_batches as f64,
                        dev_loss: dev,
                    });
                    window_loss = 0.0;
                    window_batches = 0;
                    if best.as_ref().is_none_or(|(_, b, _)| dev < *b) {
                        best = Some((history.len() - 1, dev, params.clone()));
                        since_best = 0;
                    } else {
                        since_best += 1;
                        if since_best >= patience {
                            stop = StopReason::Patience;
                            break 'outer;
                        }
                    }
                }
            }
        }
    }

    let (best_checkpoint, best_dev_loss) = match best {
        Some((i, loss, snapshot)) => {
            params.copy_from(&snapshot)?;
            (i, loss)
        }
        None => {
            // fewer examples than one checkpoint interval
            let dev = dev_loss(params)?;
            history.push(CheckpointRecord {
                examples_seen: seen,
                train_loss: if window_batches > 0 { window_loss / window_batches as f64 } else { f64::NAN },
                dev_loss: dev,
            });
            (0, dev)
        }
    };
    Ok(TrainReport { history, best_checkpoint, best_dev_loss, epochs, steps, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Least squares fit of y = 3x - 1 with a deliberately noisy dev set.
    fn fit(config: &TrainConfig, seed: u64) -> (ParamStore<f64>, TrainReport) {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 100.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let mut params = ParamStore::new();
        let w = params.add("w", Tensor::zeros(&[1, 1]));
        let b = params.add("b", Tensor::zeros(&[1]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keys = vec![0u8; xs.len()];
        let report = train(
            &mut params,
            config,
            xs.len(),
            &mut rng,
            |r| bucketed_batches(&keys, config.batch_size, r),
            |p, idx| {
                let mut g = Graph::new();
                let wv = g.param(p, w);
                let bv = g.param(p, b);
                let x = g.constant(Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| xs[i]).collect()).unwrap());
                let y = g.constant(Tensor::new(vec![idx.len(), 1], idx.iter().map(|&i| ys[i]).collect()).unwrap());
                let pred = g.matmul(x, wv)?;
                let pred = g.add_row(pred, bv)?;
                let loss = g.mse(pred, y)?;
                let grads = g.backward(loss)?;
                Ok((g.value(loss).data()[0], grads.collect(p)))
            },
            |p| {
                let (wv, bv) = (p.get(w).data()[0], p.get(b).data()[0]);
                Ok((wv - 3.0).powi(2) + (bv + 1.0).powi(2))
            },
        )
        .unwrap();
        (params, report)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            checkpoint_interval: 50,
            patience: Some(5),
            max_epochs: 400,
            adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn reloads_best_checkpoint_and_converges() {
        let (params, report) = fit(&config(), 1);
        assert!(report.best_dev_loss < 1e-3, "{report:?}");
        let best = report.history[report.best_checkpoint].dev_loss;
        assert_eq!(best, report.best_dev_loss);
        assert!(report.history.iter().all(|c| c.dev_loss >= best));
        let w = params.get(params.find("w").unwrap()).data()[0];
        let b = params.get(params.find("b").unwrap()).data()[0];
        assert_eq!((w - 3.0).powi(2) + (b + 1.0).powi(2), best);
    }

    #[test]
    fn patience_stops_after_that_many_stale_checkpoints() {
        let (_, report) = fit(&config(), 2);
        if report.stop == StopReason::Patience {
            assert_eq!(report.history.len() - 1 - report.best_checkpoint, 5);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, ra) = fit(&config(), 3);
        let (b, rb) = fit(&config(), 3);
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn default_patience_is_one_epoch_of_checkpoints() {
        let c = TrainConfig::default();
        assert_eq!(c.patience_checkpoints(40_000), 40);
    }

    #[test]
    fn buckets_never_mix_keys() {
        let keys: Vec<u8> = (0..100).map(|i| (i % 3) as u8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = bucketed_batches(&keys, 8, &mut rng);
        let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        for b in &batches {
            assert!(b.len() <= 8 && b.iter().all(|&i| keys[i] == keys[b[0]]));
        }
    }

    #[test]
    fn divergence_is_an_error() {
        let mut params = ParamStore::<f64>::new();
        params.add("w", Tensor::zeros(&[1]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = train(
            &mut params,
            &TrainConfig::default(),
            10,
            &mut rng,
            |_| vec![vec![0]],
            |p, _| Ok((f64::NAN, vec![Some(Tensor::zeros(p.get(p.find("w").unwrap()).shape()))])),
            |_| Ok(0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 1, .. }));
    }
}
