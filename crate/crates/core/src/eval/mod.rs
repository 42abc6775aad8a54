//! Experiment grids, sweeps, ablations and analogy diagnostics.

mod analogy;
mod experiments;
mod store;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use analogy::{
    analogy_distances, build_role_diagnostic_analogies, cancels, rearrangements, signed_bindings, Analogy, AnalogyReport,
    Rearrangement,
};
pub use experiments::{
    ablate_final_linear, compare_binding_ops, sweep_embedding_dims, AblationRow, BindingOpRow, DimCell, FitContext,
};
pub use store::{
    config_hash, derive_seed, write_atomic, ExperimentStore, FitOutcome, FitSettings, ModelKey, TrainedModel, TrainingSummary,
};

use crate::error::{Error, Result};
use crate::roles::{RoleMode, RoleScheme};
use crate::seq2seq::Arch;
use crate::sequences::{DatasetConfig, TaskKind};
use crate::tpdn::TpdnConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub tasks: Vec<TaskKind>,
    pub encoders: Vec<Arch>,
    pub decoders: Vec<Arch>,
    pub schemes: Vec<RoleScheme>,
    pub seeds: Vec<u64>,
    pub data: DatasetConfig,
    /// Seq2seq training.
    pub train: TrainConfig,
    pub tpdn: TpdnConfig,
    pub tpdn_train: TrainConfig,
    pub role_mode: RoleMode,
    pub normalized_mse: bool,
    pub workers: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            tasks: TaskKind::ALL.to_vec(),
            encoders: Arch::ALL.to_vec(),
            decoders: Arch::ALL.to_vec(),
            schemes: RoleScheme::ALL.to_vec(),
            seeds: (0..5).collect(),
            data: DatasetConfig::default(),
            train: TrainConfig::default(),
            tpdn: TpdnConfig::default(),
            tpdn_train: TrainConfig::default(),
            role_mode: RoleMode::Strict,
            normalized_mse: true,
            workers: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("tasks", self.tasks.len()),
            ("encoders", self.encoders.len()),
            ("decoders", self.decoders.len()),
            ("schemes", self.schemes.len()),
            ("seeds", self.seeds.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::InvalidSequence(format!("grid axis `{name}` is empty")));
        }
        self.tpdn.validate()
    }

    /// One entry per trained model, in a fixed order.
    pub fn model_keys(&self) -> Vec<ModelKey> {
        let mut keys = Vec::new();
        for &task in &self.tasks {
            for &encoder in &self.encoders {
                for &decoder in &self.decoders {
                    for &seed in &self.seeds {
                        keys.push(ModelKey { task, encoder, decoder, seed });
                    }
                }
            }
        }
        keys
    }

    pub fn fit_settings(&self, scheme: RoleScheme) -> FitSettings {
        FitSettings {
            scheme,
            tpdn: self.tpdn,
            train: self.tpdn_train.clone(),
            role_mode: self.role_mode,
            normalized_mse: self.normalized_mse,
        }
    }
}

/// One grid cell for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: TaskKind,
    pub encoder: Arch,
    pub decoder: Arch,
    pub scheme: RoleScheme,
    pub seed: u64,
    pub train_acc: f64,
    pub subst_acc: f64,
    pub norm_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub task: TaskKind,
    pub encoder: Arch,
    pub decoder: Arch,
    pub scheme: Option<RoleScheme>,
    pub seed: u64,
    pub reason: String,
}

impl CellFailure {
    pub fn cell_name(&self) -> String {
        let scheme = self.scheme.map_or_else(|| "*".to_string(), |s| s.to_string());
        format!("{}/{}/{}/{}/s{}", self.task, self.encoder, self.decoder, scheme, self.seed)
    }
}

/// Seed-averaged view of one (task, encoder, decoder, scheme) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub task: TaskKind,
    pub encoder: Arch,
    pub decoder: Arch,
    pub scheme: RoleScheme,
    pub seeds: Vec<u64>,
    pub train_acc: f64,
    pub subst_acc: f64,
    pub norm_mse: Option<f64>,
}

type CellKey = (TaskKind, Arch, Arch, RoleScheme);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

pub const CSV_HEADER: &str = "task,encoder,decoder,scheme,seed,train_acc,subst_acc,norm_mse";

impl ResultTable {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.task, a.encoder, a.decoder, a.scheme, a.seed).cmp(&(b.task, b.encoder, b.decoder, b.scheme, b.seed))
        });
        self.failures.sort_by(|a, b| {
            (a.task, a.encoder, a.decoder, a.scheme, a.seed).cmp(&(b.task, b.encoder, b.decoder, b.scheme, b.seed))
        });
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        if self.rows.is_empty() {
            return Ok(format!("{CSV_HEADER}\n"));
        }
        let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::Parse { line: 1, message: format!("unexpected header `{}`", header.join(",")) });
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>().map_err(csv_error)?;
        Ok(ResultTable { rows, failures: Vec::new() })
    }

    pub fn failures_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell", "reason"]).map_err(csv_error)?;
        for f in &self.failures {
            w.write_record([f.cell_name(), f.reason.clone()]).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn get(&self, task: TaskKind, encoder: Arch, decoder: Arch, scheme: RoleScheme) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.task == task && r.encoder == encoder && r.decoder == decoder && r.scheme == scheme)
            .collect()
    }

    /// Arithmetic means over seeds. Normalized MSE is averaged only when
    /// every seed has it.
    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut cells: BTreeMap<CellKey, Vec<&ResultRow>> = BTreeMap::new();
        for r in &self.rows {
            cells.entry((r.task, r.encoder, r.decoder, r.scheme)).or_default().push(r);
        }
        cells
            .into_iter()
            .map(|((task, encoder, decoder, scheme), rows)| {
                let n = rows.len() as f64;
                let norm: Option<Vec<f64>> = rows.iter().map(|r| r.norm_mse).collect();
                CellSummary {
                    task,
                    encoder,
                    decoder,
                    scheme,
                    seeds: rows.iter().map(|r| r.seed).collect(),
                    train_acc: rows.iter().map(|r| r.train_acc).sum::<f64>() / n,
                    subst_acc: rows.iter().map(|r| r.subst_acc).sum::<f64>() / n,
                    norm_mse: norm.map(|v| v.iter().sum::<f64>() / n),
                }
            })
            .collect()
    }

    pub fn summary(&self, task: TaskKind, encoder: Arch, decoder: Arch, scheme: RoleScheme) -> Option<CellSummary> {
        self.summaries()
            .into_iter()
            .find(|s| s.task == task && s.encoder == encoder && s.decoder == decoder && s.scheme == scheme)
    }

    /// Mean substitution accuracy per scheme, one line per architecture and task.
    pub fn render(&self) -> String {
        let summaries = self.summaries();
        let mut schemes: Vec<RoleScheme> = summaries.iter().map(|s| s.scheme).collect();
        schemes.sort();
        schemes.dedup();
        let mut lines: BTreeMap<(TaskKind, Arch, Arch), _> = BTreeMap::new();
        for s in &summaries {
            let entry = lines.entry((s.task, s.encoder, s.decoder)).or_insert((s.train_acc, BTreeMap::new()));
            entry.1.insert(s.scheme, s.subst_acc);
        }
        let mut out = String::from("task\tencoder\tdecoder\ttrain");
        for s in &schemes {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
        for ((task, enc, dec), (train, by_scheme)) in lines {
            let _ = write!(out, "{task}\t{enc}\t{dec}\t{train:.3}");
            for s in &schemes {
                match by_scheme.get(s) {
                    Some(v) => {
                        let _ = write!(out, "\t{v:.3}");
                    }
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        for f in &self.failures {
            let _ = writeln!(out, "failed {}: {}", f.cell_name(), f.reason);
        }
        out
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse { line: e.position().map_or(0, |p| p.line() as usize), message: e.to_string() }
}

/// Machine-readable record of one grid run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub dataset_hash: String,
    pub code_version: String,
    pub spec: GridSpec,
    pub artifacts: Vec<String>,
    pub failures: Vec<CellFailure>,
}

/// Trains (or reloads) every model in the grid and fits one TPDN per scheme.
///
/// A failing model or fit is recorded in `failures` and the rest of the grid
/// carries on. Model units run on a pool of `spec.workers` threads.
pub fn run_experiment_grid(spec: &GridSpec, store: &ExperimentStore) -> Result<ResultTable> {
    spec.validate()?;
    store.dataset(&spec.data)?;
    let keys = spec.model_keys();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let units: Vec<(Vec<ResultRow>, Vec<CellFailure>)> = pool.install(|| {
        use rayon::prelude::*;
        keys.par_iter().map(|&key| run_unit(spec, store, key)).collect()
    });
    let mut table = ResultTable::default();
    for (rows, failures) in units {
        table.rows.extend(rows);
        table.failures.extend(failures);
    }
    table.sort();
    Ok(table)
}

fn run_unit(spec: &GridSpec, store: &ExperimentStore, key: ModelKey) -> (Vec<ResultRow>, Vec<CellFailure>) {
    let fail = |scheme: Option<RoleScheme>, e: &Error| CellFailure {
        task: key.task,
        encoder: key.encoder,
        decoder: key.decoder,
        scheme,
        seed: key.seed,
        reason: e.to_string(),
    };
    let trained = match store.model(key, &spec.data, &spec.train) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("{} failed: {e}", key.stem());
            return (Vec::new(), vec![fail(None, &e)]);
        }
    };
    log::info!("{} trained, exact match {:.4}", key.stem(), trained.summary.test_accuracy.exact);
    let mut encodings = None;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &scheme in &spec.schemes {
        let settings = spec.fit_settings(scheme);
        let outcome = match store.cached_fit(key, &spec.data, &spec.train, &settings) {
            Ok(Some(o)) => Ok(o),
            Ok(None) => {
                if encodings.is_none() {
                    match store.encodings(&trained, &spec.data, &spec.train) {
                        Ok(enc) => encodings = Some(enc),
                        Err(e) => {
                            failures.push(fail(Some(scheme), &e));
                            continue;
                        }
                    }
                }
                let enc = encodings.as_ref().expect("encodings loaded");
                store.fit(&trained, enc, &spec.data, &spec.train, &settings)
            }
            Err(e) => Err(e),
        };
        match outcome {
            Ok(outcome) => {
                log::info!("{} {scheme}: substitution {:.4}", key.stem(), outcome.substitution.exact);
                rows.push(ResultRow {
                    task: key.task,
                    encoder: key.encoder,
                    decoder: key.decoder,
                    scheme,
                    seed: key.seed,
                    train_acc: trained.summary.test_accuracy.exact,
                    subst_acc: outcome.substitution.exact,
                    norm_mse: outcome.normalized_mse,
                });
            }
            Err(e) => {
                log::warn!("{} {scheme} failed: {e}", key.stem());
                failures.push(fail(Some(scheme), &e));
            }
        }
    }
    (rows, failures)
}

/// Writes `results.csv`, `failures.csv`, `summary.txt` and `manifest.json`
/// into the store root. The manifest lists every file under the root.
pub fn write_run(spec: &GridSpec, store: &ExperimentStore, table: &ResultTable) -> Result<RunManifest> {
    let root = store.root();
    write_atomic(&root.join("results.csv"), table.to_csv()?.as_bytes())?;
    write_atomic(&root.join("failures.csv"), table.failures_csv()?.as_bytes())?;
    write_atomic(&root.join("summary.txt"), table.render().as_bytes())?;
    let dataset_hash = store.dataset(&spec.data)?.content_hash();
    let mut artifacts = store.artifacts()?;
    artifacts.retain(|a| a != "manifest.json");
    artifacts.push("manifest.json".into());
    artifacts.sort();
    let manifest = RunManifest {
        config_hash: full_hash(spec),
        dataset_hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        artifacts,
        failures: table.failures.clone(),
    };
    write_atomic(&root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn full_hash<S: Serialize>(value: &S) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(serde_json::to_string(value).expect("config serialises").as_bytes()))
}

pub fn read_results(path: &Path) -> Result<ResultTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ResultTable::from_csv(&text)
}
