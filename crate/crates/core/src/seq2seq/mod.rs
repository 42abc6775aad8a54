//! GRU sequence-to-sequence models over digit strings.

mod gru;
mod linear_srn;
mod model;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gru::{gru_step, BoundGru, GruCell};
pub use linear_srn::linear_srn_decomposition_check;
pub use model::{argmax, group_indices, Arch, BoundModel, Example, ModelConfig, Seq2Seq};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::sequences::{Dataset, Split, TaskKind};
use crate::training::{bucketed_batches, train, TrainConfig, TrainReport};

/// Examples for one split of a dataset under `task`.
pub fn task_examples(dataset: &Dataset, split: Split, task: TaskKind) -> Result<Vec<Example>> {
    dataset.split(split).iter().map(|s| Example::for_task(s, task)).collect()
}

/// Trains with Adam on length- (or shape-) bucketed batches and reloads the
/// checkpoint with the lowest dev loss.
pub fn train_seq2seq<T: Scalar>(
    model: &mut Seq2Seq<T>,
    dataset: &Dataset,
    task: TaskKind,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    let train_set = task_examples(dataset, Split::Train, task)?;
    let dev_set = task_examples(dataset, Split::Dev, task)?;
    train_on_examples(model, &train_set, &dev_set, config, seed)
}

pub fn train_on_examples<T: Scalar>(
    model: &mut Seq2Seq<T>,
    train_set: &[Example],
    dev_set: &[Example],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::InvalidSequence("training and dev splits must be non-empty".into()));
    }
    let keys: Vec<String> = train_set.iter().map(|e| model.batch_key(e)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = model.config;
    let mut params = std::mem::take(&mut model.params);
    let result = train(
        &mut params,
        config,
        train_set.len(),
        &mut rng,
        |r| bucketed_batches(&keys, config.batch_size, r),
        |p, idx| {
            let m = Seq2Seq::from_params(cfg, p.clone())?;
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_set[i]).collect();
            m.loss_and_grads(&batch)
        },
        |p| Seq2Seq::from_params(cfg, p.clone())?.mean_loss(dev_set),
    );
    model.params = params;
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Fraction of sequences reproduced without error.
    pub exact: f64,
    /// Fraction of output positions predicted correctly.
    pub per_position: f64,
}

pub fn score_predictions(predictions: &[Vec<u8>], targets: &[&[u8]]) -> Accuracy {
    let (mut exact, mut right, mut total) = (0usize, 0usize, 0usize);
    for (p, t) in predictions.iter().zip(targets) {
        let hits = p.iter().zip(t.iter()).filter(|(a, b)| a == b).count();
        exact += usize::from(hits == t.len() && p.len() == t.len());
        right += hits;
        total += t.len();
    }
    let n = predictions.len().max(1) as f64;
    Accuracy { exact: exact as f64 / n, per_position: right as f64 / total.max(1) as f64 }
}

pub fn sequence_accuracy<T: Scalar>(model: &Seq2Seq<T>, examples: &[Example]) -> Result<Accuracy> {
    let predictions = model.predict_all(examples)?;
    let targets: Vec<&[u8]> = examples.iter().map(|e| e.target.as_slice()).collect();
    Ok(score_predictions(&predictions, &targets))
}

/// Sidecar written next to a model checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model: ModelConfig,
    pub task: TaskKind,
    pub seed: u64,
    pub dataset_hash: String,
    /// Internal cell choices, recorded so checkpoints stay interpretable.
    pub cells: String,
}

pub const CELL_DESCRIPTION: &str = "gru(h' = (1-z)h + z*cand); tree-encoder parent = gru(x=left, h=right), leaf = gru(x=embed, h=0); \
hidden-only decoder step = gru(x=h, h=h); tree decoder child = gru_{L|R}(x=parent, h=parent)";

impl ModelManifest {
    pub fn new(model: ModelConfig, task: TaskKind, seed: u64, dataset_hash: impl Into<String>) -> Self {
        ModelManifest { model, task, seed, dataset_hash: dataset_hash.into(), cells: CELL_DESCRIPTION.into() }
    }
}

/// Writes `<stem>.ckpt` and `<stem>.json`.
pub fn save_model<T: Scalar>(model: &Seq2Seq<T>, manifest: &ModelManifest, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.params.save(&dir.join(format!("{stem}.ckpt")))?;
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&json_path, e))
}

pub fn load_model<T: Scalar>(dir: &Path, stem: &str) -> Result<(Seq2Seq<T>, ModelManifest)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    let params = ParamStore::load(&dir.join(format!("{stem}.ckpt")))?;
    Ok((Seq2Seq::from_params(manifest.model, params)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{generate_dataset, DatasetConfig};

    #[test]
    fn perfect_predictions_score_one_and_exact_never_exceeds_per_position() {
        let t: Vec<&[u8]> = vec![&[1, 2, 3], &[4], &[5, 6]];
        let perfect: Vec<Vec<u8>> = t.iter().map(|s| s.to_vec()).collect();
        assert_eq!(score_predictions(&perfect, &t), Accuracy { exact: 1.0, per_position: 1.0 });
        let partial = vec![vec![1, 2, 0], vec![4], vec![0, 0]];
        let acc = score_predictions(&partial, &t);
        assert!((acc.exact - 1.0 / 3.0).abs() < 1e-12);
        assert!((acc.per_position - 3.0 / 6.0).abs() < 1e-12);
        assert!(acc.exact <= acc.per_position);
    }

    #[test]
    fn uniform_guessing_on_length_six_is_one_in_a_million() {
        // every one of the 10^6 length-6 outputs guessed once against a fixed target
        let target: &[u8] = &[3, 1, 4, 1, 5, 9];
        let preds: Vec<Vec<u8>> = (0..1_000_000u32)
            .map(|mut k| {
                (0..6)
                    .map(|_| {
                        let d = (k % 10) as u8;
                        k /= 10;
                        d
                    })
                    .collect()
            })
            .collect();
        let targets = vec![target; preds.len()];
        let acc = score_predictions(&preds, &targets);
        assert!((acc.exact - 1e-6).abs() < 1e-15);
        assert!((acc.per_position - 0.1).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Seq2Seq::<f64>::new(ModelConfig::new(Arch::Tree, Arch::Bi), &mut rng);
        let manifest = ModelManifest::new(m.config, TaskKind::Reverse, 4, "abc");
        save_model(&m, &manifest, dir.path(), "m").unwrap();
        let (back, man) = load_model::<f64>(dir.path(), "m").unwrap();
        assert_eq!(man, manifest);
        assert_eq!(back.params, m.params);
    }

    #[test]
    fn training_is_deterministic_and_lowers_dev_loss() {
        let data = generate_dataset(&DatasetConfig { train: 96, dev: 32, test: 8, min_len: 1, max_len: 3, seed: 2 }).unwrap();
        let config = TrainConfig { checkpoint_interval: 32, max_epochs: 3, ..TrainConfig::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut m = Seq2Seq::<f64>::new(ModelConfig::new(Arch::Uni, Arch::Uni), &mut rng);
            let dev = task_examples(&data, Split::Dev, TaskKind::Autoencode).unwrap();
            let before = m.mean_loss(&dev).unwrap();
            let report = train_seq2seq(&mut m, &data, TaskKind::Autoencode, &config, 9).unwrap();
            let after = m.mean_loss(&dev).unwrap();
            (report, before, after, m.params)
        };
        let (ra, before, after, pa) = run();
        let (rb, _, _, pb) = run();
        assert_eq!(ra, rb);
        assert_eq!(pa, pb);
        assert!(after < before);
        assert!((after - ra.best_dev_loss).abs() < 1e-12);
    }
}
