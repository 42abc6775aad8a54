//! On-disk cache of datasets, trained models, encoder outputs and fits.
//!
//! Every artifact is keyed by a hash of the settings that produced it, so a
//! changed configuration never reuses a stale file. Files are written to a
//! temporary name and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::roles::{RoleMode, RoleScheme};
use crate::seq2seq::{load_model, save_model, sequence_accuracy, task_examples, Accuracy, Arch, Example, ModelConfig, ModelManifest, Seq2Seq};
use crate::sequences::{generate_dataset, Dataset, DatasetConfig, Split, TaskKind};
use crate::tpdn::{fit_tpdn, normalized_mse, substitution_accuracy, EmbeddingCorpus, FitData, Structure, TpdnConfig};
use crate::training::{TrainConfig, TrainReport};

/// Short stable digest of any serialisable value.
pub fn config_hash<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_string(value).expect("config serialises");
    hex::encode(&Sha256::digest(json.as_bytes())[..6])
}

/// Seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{label}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_json<D: DeserializeOwned>(path: &Path) -> Result<Option<D>> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

/// Identifies one trained seq2seq model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelKey {
    pub task: TaskKind,
    pub encoder: Arch,
    pub decoder: Arch,
    pub seed: u64,
}

impl ModelKey {
    pub fn stem(&self) -> String {
        format!("{}-{}-{}-s{}", self.task, self.encoder, self.decoder, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub report: TrainReport,
    pub test_accuracy: Accuracy,
}

pub struct TrainedModel {
    pub key: ModelKey,
    pub model: Seq2Seq<f64>,
    pub summary: TrainingSummary,
    pub test_examples: Vec<Example>,
}

/// Everything that determines one TPDN fit besides the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub scheme: RoleScheme,
    pub tpdn: TpdnConfig,
    pub train: TrainConfig,
    pub role_mode: RoleMode,
    pub normalized_mse: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub settings: FitSettings,
    pub substitution: Accuracy,
    pub train_mse: f64,
    pub test_mse: f64,
    pub baseline_mse: Option<f64>,
    pub normalized_mse: Option<f64>,
    pub param_count: usize,
    pub epochs: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentStore {
    root: PathBuf,
}

impl ExperimentStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ExperimentStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_path(&self, config: &DatasetConfig) -> PathBuf {
        self.root.join("data").join(format!("dataset-{}.tsv", config_hash(config)))
    }

    /// Generates the dataset once, then reloads it.
    pub fn dataset(&self, config: &DatasetConfig) -> Result<Dataset> {
        let path = self.dataset_path(config);
        if path.exists() {
            return Dataset::load(&path, config.seed);
        }
        let data = generate_dataset(config)?;
        write_atomic(&path, data.to_file_string(true).as_bytes())?;
        Ok(data)
    }

    fn model_dir(&self, data: &DatasetConfig, train: &TrainConfig) -> PathBuf {
        self.root.join("models").join(config_hash(&(data, train)))
    }

    /// Trains the model unless a finished checkpoint is already cached.
    pub fn model(&self, key: ModelKey, data_config: &DatasetConfig, train: &TrainConfig) -> Result<TrainedModel> {
        let dir = self.model_dir(data_config, train);
        let stem = key.stem();
        let summary_path = dir.join(format!("{stem}.summary.json"));
        let data = self.dataset(data_config)?;
        let test_examples = task_examples(&data, Split::Test, key.task)?;
        if let Some(summary) = read_json::<TrainingSummary>(&summary_path)? {
            let (model, _) = load_model(&dir, &stem)?;
            return Ok(TrainedModel { key, model, summary, test_examples });
        }
        log::info!("training {stem}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(key.seed, "init"));
        let mut model = Seq2Seq::new(ModelConfig::new(key.encoder, key.decoder), &mut rng);
        let report = crate::seq2seq::train_seq2seq(&mut model, &data, key.task, train, derive_seed(key.seed, "train"))?;
        let test_accuracy = sequence_accuracy(&model, &test_examples)?;
        let manifest = ModelManifest::new(model.config, key.task, key.seed, data.content_hash());
        save_model(&model, &manifest, &dir, &stem)?;
        let summary = TrainingSummary { report, test_accuracy };
        write_json(&summary_path, &summary)?;
        Ok(TrainedModel { key, model, summary, test_examples })
    }

    /// Encoder outputs for every split, cached in the corpus text format.
    pub fn encodings(&self, trained: &TrainedModel, data_config: &DatasetConfig, train: &TrainConfig) -> Result<FitData<f64>> {
        let dir = self.model_dir(data_config, train).join("encodings");
        let data = self.dataset(data_config)?;
        let mut splits = Vec::new();
        for split in [Split::Train, Split::Dev, Split::Test] {
            let path = dir.join(format!("{}-{}.txt", trained.key.stem(), split.name()));
            let seqs: Vec<Vec<u8>> = data.split(split).iter().map(|s| s.digits().to_vec()).collect();
            let corpus = if path.exists() {
                EmbeddingCorpus::load(&path)?
            } else {
                let examples = task_examples(&data, split, trained.key.task)?;
                let vectors = trained.model.encode_all(&examples)?;
                let corpus = EmbeddingCorpus::from_digit_vectors(&seqs, &vectors, None)?;
                write_atomic(&path, corpus.to_file_string().as_bytes())?;
                corpus
            };
            if corpus.len() != seqs.len() {
                return Err(Error::Checkpoint(format!("{} holds {} records, expected {}", path.display(), corpus.len(), seqs.len())));
            }
            let structures = seqs.iter().map(|s| Structure::from_digits(s)).collect::<Result<Vec<_>>>()?;
            splits.push((structures, corpus.vectors::<f64>()));
        }
        let test = splits.pop().expect("three splits");
        let dev = splits.pop().expect("three splits");
        let train = splits.pop().expect("three splits");
        Ok(FitData { train, dev, test })
    }

    fn fit_path(&self, key: ModelKey, data_config: &DatasetConfig, train: &TrainConfig, settings: &FitSettings) -> PathBuf {
        self.model_dir(data_config, train)
            .join("fits")
            .join(key.stem())
            .join(format!("{}-{}.json", settings.scheme, config_hash(settings)))
    }

    pub fn cached_fit(&self, key: ModelKey, data_config: &DatasetConfig, train: &TrainConfig, settings: &FitSettings) -> Result<Option<FitOutcome>> {
        read_json(&self.fit_path(key, data_config, train, settings))
    }

    /// Fits (or reloads) one TPDN against a trained model's encodings.
    pub fn fit(
        &self,
        trained: &TrainedModel,
        encodings: &FitData<f64>,
        data_config: &DatasetConfig,
        train: &TrainConfig,
        settings: &FitSettings,
    ) -> Result<FitOutcome> {
        let path = self.fit_path(trained.key, data_config, train, settings);
        if let Some(outcome) = read_json::<FitOutcome>(&path)? {
            return Ok(outcome);
        }
        let outcome = self.fit_uncached(trained, encodings, settings)?;
        write_json(&path, &outcome)?;
        Ok(outcome)
    }

    /// Runs the fit without consulting or updating the cache.
    pub fn fit_uncached(&self, trained: &TrainedModel, encodings: &FitData<f64>, settings: &FitSettings) -> Result<FitOutcome> {
        let seed = derive_seed(trained.key.seed, &format!("tpdn:{}", config_hash(settings)));
        let fit = fit_tpdn(encodings, settings.scheme, &settings.tpdn, &settings.train, settings.role_mode, seed)?;
        let substitution = substitution_accuracy(&fit.model, &trained.model, &trained.test_examples)?;
        let norm = if settings.normalized_mse {
            Some(normalized_mse(
                fit.test_mse,
                encodings,
                settings.scheme,
                &settings.tpdn,
                &settings.train,
                settings.role_mode,
                derive_seed(seed, "baseline"),
            )?)
        } else {
            None
        };
        let outcome = FitOutcome {
            settings: settings.clone(),
            substitution,
            train_mse: fit.train_mse,
            test_mse: fit.test_mse,
            baseline_mse: norm.map(|n| n.baseline),
            normalized_mse: norm.map(|n| n.ratio),
            param_count: fit.model.params.numel(),
            epochs: fit.report.epochs,
        };
        Ok(outcome)
    }

    /// Relative paths of every file under the store root.
    pub fn artifacts(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        if !self.root.exists() {
            return Ok(out);
        }
        for entry in walkdir::WalkDir::new(&self.root).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Checkpoint(e.to_string()))?;
            if entry.file_type().is_file() {
                let rel = entry.path().strip_prefix(&self.root).unwrap_or(entry.path());
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(out)
    }
}
