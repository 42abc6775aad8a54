use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{fit_tpdn, FitData, Structure, TpdnConfig, TpdnModel};
use crate::error::Result;
use crate::roles::{RoleMode, RoleScheme};
use crate::scalar::Scalar;
use crate::seq2seq::{argmax, group_indices, score_predictions, Accuracy, Example, Seq2Seq};
use crate::training::TrainConfig;

/// Decodes TPDN compositions with a frozen seq2seq decoder and scores the
/// outputs against the task targets.
pub fn substitution_accuracy<T: Scalar>(tpdn: &TpdnModel<T>, decoder: &Seq2Seq<T>, examples: &[Example]) -> Result<Accuracy> {
    let structures = examples.iter().map(|e| Structure::from_digits(&e.input)).collect::<Result<Vec<_>>>()?;
    let encodings = tpdn.compose_all(&structures)?;
    decoded_accuracy(decoder, examples, &encodings)
}

/// Accuracy of `decoder` fed arbitrary encodings, one per example.
pub fn decoded_accuracy<T: Scalar>(decoder: &Seq2Seq<T>, examples: &[Example], encodings: &[Vec<T>]) -> Result<Accuracy> {
    let mut predictions = vec![Vec::new(); examples.len()];
    let decode_key = |e: &Example| match decoder.config.decoder {
        crate::seq2seq::Arch::Tree => e.target_shape.key(),
        _ => e.target.len().to_string(),
    };
    for idx in group_indices(examples, decode_key).into_values() {
        for chunk in idx.chunks(256) {
            let first = &examples[chunk[0]];
            let encs: Vec<&[T]> = chunk.iter().map(|&i| encodings[i].as_slice()).collect();
            let logits = decoder.decode_batch(&encs, first.target.len(), Some(&first.target_shape))?;
            for (l, &i) in logits.iter().zip(chunk) {
                predictions[i] = (0..l.rows()).map(|r| argmax(l.row(r)) as u8).collect();
            }
        }
    }
    let targets: Vec<&[u8]> = examples.iter().map(|e| e.target.as_slice()).collect();
    Ok(score_predictions(&predictions, &targets))
}

/// Normal vectors whose per-dimension mean and standard deviation match
/// the training targets, one per original target in each split.
pub fn baseline_targets<T: Scalar>(data: &FitData<T>, seed: u64) -> FitData<T> {
    let d = data.output_dim();
    let n = data.train.1.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for v in &data.train.1 {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x.to_f64_lossy() / n;
        }
    }
    let mut std = vec![0.0; d];
    for v in &data.train.1 {
        for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
            *s += (x.to_f64_lossy() - m).powi(2) / n;
        }
    }
    std.iter_mut().for_each(|s| *s = s.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<T>> {
        (0..count)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(rng);
                        T::from_f64_lossy(mean[j] + std[j] * z)
                    })
                    .collect()
            })
            .collect()
    };
    let train = draw(data.train.1.len(), &mut rng);
    let dev = draw(data.dev.1.len(), &mut rng);
    let test = draw(data.test.1.len(), &mut rng);
    FitData {
        train: (data.train.0.clone(), train),
        dev: (data.dev.0.clone(), dev),
        test: (data.test.0.clone(), test),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMse {
    pub fitted: f64,
    pub baseline: f64,
    pub ratio: f64,
}

/// Divides `fitted_test_mse` by the test MSE of the same TPDN setup fitted
/// to [`baseline_targets`].
pub fn normalized_mse<T: Scalar>(
    fitted_test_mse: f64,
    data: &FitData<T>,
    scheme: RoleScheme,
    config: &TpdnConfig,
    train_config: &TrainConfig,
    mode: RoleMode,
    seed: u64,
) -> Result<NormalizedMse> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let baseline_data = baseline_targets(data, rng.random());
    let fit = fit_tpdn(&baseline_data, scheme, config, train_config, mode, rng.random())?;
    Ok(NormalizedMse { fitted: fitted_test_mse, baseline: fit.test_mse, ratio: fitted_test_mse / fit.test_mse })
}
