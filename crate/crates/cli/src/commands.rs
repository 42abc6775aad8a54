use std::fmt::Display;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tpdn_core::eval::{
    ablate_final_linear, analogy_distances, build_role_diagnostic_analogies, compare_binding_ops, full_hash, run_experiment_grid,
    sweep_embedding_dims, write_atomic, write_run, ExperimentStore, FitContext, FitSettings, GridSpec, ModelKey, TrainedModel,
};
use tpdn_core::roles::RoleScheme;
use tpdn_core::seq2seq::Arch;
use tpdn_core::sequences::{generate_dataset, TaskKind};
use tpdn_core::tpdn::{fit_model, load_filler_embeddings, role_vocabulary, EmbeddingCorpus, FitData, TpdnModel};
use tpdn_core::tree::parse;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime { cell: String, message: String },
}

type Outcome<T = ()> = Result<T, Failure>;

fn runtime<E: Display>(cell: impl Into<String>) -> impl FnOnce(E) -> Failure {
    let cell = cell.into();
    move |e| Failure::Runtime { cell, message: e.to_string() }
}

#[derive(Serialize)]
struct CommandManifest<'a> {
    command: &'a str,
    config_hash: String,
    dataset_hash: Option<String>,
    code_version: &'static str,
    config: &'a RunConfig,
    artifacts: Vec<String>,
}

/// Rewrites `manifest.json` to list every file under the output root.
fn write_manifest(name: &str, config: &RunConfig, store: &ExperimentStore, dataset_hash: Option<String>) -> Outcome {
    let mut artifacts = store.artifacts().map_err(runtime(name))?;
    artifacts.retain(|a| a != "manifest.json");
    artifacts.push("manifest.json".into());
    artifacts.sort();
    let manifest = CommandManifest {
        command: name,
        config_hash: full_hash(config),
        dataset_hash,
        code_version: env!("CARGO_PKG_VERSION"),
        config,
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&store.root().join("manifest.json"), text.as_bytes()).map_err(runtime(name))
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S], cell: &str) -> Outcome {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(runtime(cell))?;
    }
    let bytes = w.into_inner().map_err(runtime(cell))?;
    write_atomic(path, &bytes).map_err(runtime(cell))
}

pub fn run(name: &str, config: &RunConfig) -> Outcome {
    let store = ExperimentStore::new(config.out_dir());
    match name {
        "gen-data" => gen_data(config, &store),
        "train" => train(config, &store),
        "fit-tpdn" => fit_tpdn(config, &store),
        "substitute" => substitute(config, &store),
        "grid" => grid(config, &store),
        "sweep-dims" => sweep_dims(config, &store),
        "ablate-linear" => ablate(config, &store),
        "bind-ops" => bind_ops(config, &store),
        "analogy" => analogy(config, &store),
        "ingest" => ingest(config, &store),
        other => Err(Failure::Usage(format!("unknown command `{other}`"))),
    }
}

fn gen_data(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let data = generate_dataset(&config.dataset()).map_err(runtime("gen-data"))?;
    let path = store.root().join("dataset.tsv");
    write_atomic(&path, data.to_file_string(true).as_bytes()).map_err(runtime("gen-data"))?;
    println!("wrote {} sequences to {}", data.len(), path.display());
    write_manifest("gen-data", config, store, Some(data.content_hash()))
}

fn model_key(config: &RunConfig, default_task: TaskKind) -> ModelKey {
    ModelKey { task: config.task_or(default_task), encoder: config.encoder, decoder: config.decoder, seed: config.seed }
}

fn cell(key: &ModelKey, scheme: Option<RoleScheme>) -> String {
    let scheme = scheme.map_or_else(|| "*".to_string(), |s| s.to_string());
    format!("{}/{}/{}/{}/s{}", key.task, key.encoder, key.decoder, scheme, key.seed)
}

fn trained(config: &RunConfig, store: &ExperimentStore, key: ModelKey) -> Outcome<TrainedModel> {
    let model = store.model(key, &config.dataset(), &config.seq2seq_training()).map_err(runtime(cell(&key, None)))?;
    println!(
        "model {}: test exact match {:.4}, per position {:.4} ({} epochs)",
        key.stem(),
        model.summary.test_accuracy.exact,
        model.summary.test_accuracy.per_position,
        model.summary.report.epochs
    );
    Ok(model)
}

fn encodings(config: &RunConfig, store: &ExperimentStore, model: &TrainedModel) -> Outcome<FitData<f64>> {
    store.encodings(model, &config.dataset(), &config.seq2seq_training()).map_err(runtime(cell(&model.key, None)))
}

fn dataset_hash(config: &RunConfig, store: &ExperimentStore) -> Option<String> {
    store.dataset(&config.dataset()).ok().map(|d| d.content_hash())
}

fn train(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    trained(config, store, model_key(config, TaskKind::Autoencode))?;
    write_manifest("train", config, store, dataset_hash(config, store))
}

fn fit_tpdn(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Autoencode);
    let model = trained(config, store, key)?;
    let enc = encodings(config, store, &model)?;
    let scheme = config.scheme_or(RoleScheme::Bi);
    let settings = FitSettings {
        scheme,
        tpdn: config.tpdn(enc.output_dim()),
        train: config.tpdn_training(),
        role_mode: config.role_mode,
        normalized_mse: config.normalized_mse,
    };
    let out = store
        .fit(&model, &enc, &config.dataset(), &config.seq2seq_training(), &settings)
        .map_err(runtime(cell(&key, Some(scheme))))?;
    println!(
        "{scheme}: train mse {:.6}, test mse {:.6}, normalized mse {}, substitution {:.4} ({} parameters)",
        out.train_mse,
        out.test_mse,
        out.normalized_mse.map_or_else(|| "-".into(), |v| format!("{v:.4}")),
        out.substitution.exact,
        out.param_count
    );
    write_manifest("fit-tpdn", config, store, dataset_hash(config, store))
}

#[derive(Serialize)]
struct SubstitutionRow {
    scheme: RoleScheme,
    subst_acc: f64,
    per_position: f64,
    test_mse: f64,
}

fn substitute(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Autoencode);
    let model = trained(config, store, key)?;
    let enc = encodings(config, store, &model)?;
    let mut rows = Vec::new();
    for &scheme in &config.schemes {
        let settings = FitSettings {
            scheme,
            tpdn: config.tpdn(enc.output_dim()),
            train: config.tpdn_training(),
            role_mode: config.role_mode,
            normalized_mse: false,
        };
        let out = store
            .fit(&model, &enc, &config.dataset(), &config.seq2seq_training(), &settings)
            .map_err(runtime(cell(&key, Some(scheme))))?;
        println!("{scheme}\t{:.4}", out.substitution.exact);
        rows.push(SubstitutionRow { scheme, subst_acc: out.substitution.exact, per_position: out.substitution.per_position, test_mse: out.test_mse });
    }
    write_csv(&store.root().join(format!("substitution-{}.csv", key.stem())), &rows, &cell(&key, None))?;
    write_manifest("substitute", config, store, dataset_hash(config, store))
}

fn grid_spec(config: &RunConfig) -> GridSpec {
    GridSpec {
        tasks: config.tasks.clone(),
        encoders: config.encoders.clone(),
        decoders: config.decoders.clone(),
        schemes: config.schemes.clone(),
        seeds: (config.seed..config.seed + config.seeds as u64).collect(),
        data: config.dataset(),
        train: config.seq2seq_training(),
        tpdn: config.tpdn(60),
        tpdn_train: config.tpdn_training(),
        role_mode: config.role_mode,
        normalized_mse: config.normalized_mse,
        workers: config.workers,
    }
}

fn grid(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let spec = grid_spec(config);
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let table = run_experiment_grid(&spec, store).map_err(runtime("grid"))?;
    write_run(&spec, store, &table).map_err(runtime("grid"))?;
    print!("{}", table.render());
    println!("{} rows written to {}", table.rows.len(), store.root().join("results.csv").display());
    match table.failures.first() {
        None => Ok(()),
        Some(first) => Err(Failure::Runtime {
            cell: first.cell_name(),
            message: format!("{} ({} failed cells in total, see failures.csv)", first.reason, table.failures.len()),
        }),
    }
}

fn context<'a>(
    config: &'a RunConfig,
    store: &'a ExperimentStore,
    model: &'a TrainedModel,
    enc: &'a FitData<f64>,
    data: &'a tpdn_core::sequences::DatasetConfig,
    train: &'a tpdn_core::training::TrainConfig,
) -> FitContext<'a> {
    FitContext {
        store,
        trained: model,
        encodings: enc,
        data,
        train,
        tpdn_train: config.tpdn_training(),
        role_mode: config.role_mode,
    }
}

fn sweep_dims(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Reverse);
    let model = trained(config, store, key)?;
    let enc = encodings(config, store, &model)?;
    let (data, train) = (config.dataset(), config.seq2seq_training());
    let scheme = config.scheme_or(RoleScheme::Rtl);
    let ctx = context(config, store, &model, &enc, &data, &train);
    let cells = sweep_embedding_dims(&ctx, scheme, &config.filler_dims, &config.role_dims).map_err(runtime(cell(&key, Some(scheme))))?;
    println!("filler\trole\tsubst_acc");
    for c in &cells {
        println!("{}\t{}\t{:.3}", c.filler_dim, c.role_dim, c.subst_acc);
    }
    write_csv(&store.root().join(format!("sweep-{}-{scheme}.csv", key.stem())), &cells, &cell(&key, Some(scheme)))?;
    write_manifest("sweep-dims", config, store, dataset_hash(config, store))
}

fn ablate(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Reverse);
    let scheme = config.scheme_or(RoleScheme::Rtl);
    let pairs: Vec<(usize, usize)> = config.pairs.iter().map(|p| (p.0, p.1)).collect();
    if let Some(p) = config.pairs.iter().find(|p| p.0 * p.1 != 60) {
        return Err(Failure::Usage(format!("pair {p}: filler x role must equal the encoding width 60 without the final linear layer")));
    }
    let model = trained(config, store, key)?;
    let enc = encodings(config, store, &model)?;
    let (data, train) = (config.dataset(), config.seq2seq_training());
    let ctx = context(config, store, &model, &enc, &data, &train);
    let rows = ablate_final_linear(&ctx, scheme, &pairs).map_err(runtime(cell(&key, Some(scheme))))?;
    println!("filler\trole\twith_linear\twithout_linear");
    for r in &rows {
        println!("{}\t{}\t{:.3}\t{:.3}", r.filler_dim, r.role_dim, r.with_linear, r.without_linear);
    }
    write_csv(&store.root().join(format!("ablation-{}-{scheme}.csv", key.stem())), &rows, &cell(&key, Some(scheme)))?;
    write_manifest("ablate-linear", config, store, dataset_hash(config, store))
}

fn bind_ops(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Reverse);
    let model = trained(config, store, key)?;
    let enc = encodings(config, store, &model)?;
    let (data, train) = (config.dataset(), config.seq2seq_training());
    let ctx = context(config, store, &model, &enc, &data, &train);
    let rows = compare_binding_ops(&ctx, &config.ops, &config.dims, &config.schemes).map_err(runtime(cell(&key, None)))?;
    println!("binding\tdim\tscheme\tsubst_acc\tparams");
    for r in &rows {
        println!("{}\t{}\t{}\t{:.3}\t{}", r.binding.name(), r.dim, r.scheme, r.subst_acc, r.param_count);
    }
    write_csv(&store.root().join(format!("bind-ops-{}.csv", key.stem())), &rows, &cell(&key, None))?;
    write_manifest("bind-ops", config, store, dataset_hash(config, store))
}

fn digits(d: &[u8]) -> String {
    d.iter().map(u8::to_string).collect()
}

#[derive(Serialize)]
struct AnalogyRow {
    a: String,
    b: String,
    c: String,
    d: String,
    schemes: String,
    distance: f64,
    normalized: f64,
}

#[derive(Serialize)]
struct SchemeDistance {
    scheme: RoleScheme,
    analogies: usize,
    mean_normalized_distance: f64,
}

fn analogy(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let key = model_key(config, TaskKind::Autoencode);
    let model = trained(config, store, key)?;
    let set = build_role_diagnostic_analogies(&config.schemes, config.per_scheme);
    let needs_tree = model.model.config.encoder == Arch::Tree;
    let encode = |t: &[u8]| -> tpdn_core::Result<Vec<f64>> {
        let tree = if needs_tree { Some(parse(t)?) } else { None };
        model.model.encode(t, tree.as_ref())
    };
    let report = analogy_distances(encode, &set).map_err(runtime(cell(&key, None)))?;
    let rows: Vec<AnalogyRow> = set
        .iter()
        .zip(&report.per_analogy)
        .map(|(a, rs)| AnalogyRow {
            a: digits(&a.a),
            b: digits(&a.b),
            c: digits(&a.c),
            d: digits(&a.d),
            schemes: a.schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join(" "),
            distance: rs[0].distance,
            normalized: rs[0].normalized,
        })
        .collect();
    let summary: Vec<SchemeDistance> = report
        .per_scheme
        .iter()
        .filter(|(s, _)| config.schemes.contains(s))
        .map(|(&scheme, &d)| SchemeDistance { scheme, analogies: set.iter().filter(|a| a.holds_under(scheme)).count(), mean_normalized_distance: d })
        .collect();
    println!("scheme\tanalogies\tmean_normalized_distance");
    for s in &summary {
        println!("{}\t{}\t{:.4}", s.scheme, s.analogies, s.mean_normalized_distance);
    }
    let c = cell(&key, None);
    write_csv(&store.root().join(format!("analogies-{}.csv", key.stem())), &rows, &c)?;
    write_csv(&store.root().join(format!("analogy-distances-{}.csv", key.stem())), &summary, &c)?;
    write_manifest("analogy", config, store, dataset_hash(config, store))
}

#[derive(Serialize)]
struct IngestSummary {
    input: String,
    scheme: RoleScheme,
    records: usize,
    dim: usize,
    pretrained_fillers: bool,
    train_mse: f64,
    test_mse: f64,
    epochs: usize,
}

fn ingest(config: &RunConfig, store: &ExperimentStore) -> Outcome {
    let input = config.input.as_ref().ok_or_else(|| Failure::Usage("ingest needs --input".into()))?;
    let corpus = EmbeddingCorpus::load(input).map_err(runtime("ingest"))?;
    let hint = match corpus.scheme_hint.as_deref() {
        Some(h) => Some(h.parse::<RoleScheme>().map_err(runtime("ingest"))?),
        None => None,
    };
    let scheme = config.scheme.or(hint).unwrap_or(RoleScheme::Ltr);
    let c = format!("ingest/{scheme}");
    let data: FitData<f64> = corpus.split(config.dev_frac, config.test_frac, config.seed);
    let vocabulary = corpus.vocabulary();
    let pretrained = match &config.fillers {
        None => None,
        Some(path) => {
            let (tokens, table) = load_filler_embeddings(path).map_err(runtime(&c))?;
            let rows: Vec<Vec<f64>> = vocabulary
                .iter()
                .map(|t| {
                    tokens.iter().position(|x| x == t).map(|i| table.row(i).to_vec()).ok_or_else(|| Failure::Runtime {
                        cell: c.clone(),
                        message: format!("filler `{t}` has no embedding in {}", path.display()),
                    })
                })
                .collect::<Outcome<_>>()?;
            Some(tpdn_core::Tensor::from_rows(&rows))
        }
    };
    let roles = role_vocabulary(scheme, &data.train.0).map_err(runtime(&c))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let has_pretrained = pretrained.is_some();
    let model = TpdnModel::new(config.tpdn(corpus.dim), scheme, vocabulary, roles, config.role_mode, pretrained, &mut rng)
        .map_err(runtime(&c))?;
    let fit = fit_model(model, &data, &config.tpdn_training(), &mut rng).map_err(runtime(&c))?;
    let summary = IngestSummary {
        input: input.display().to_string(),
        scheme,
        records: corpus.len(),
        dim: corpus.dim,
        pretrained_fillers: has_pretrained,
        train_mse: fit.train_mse,
        test_mse: fit.test_mse,
        epochs: fit.report.epochs,
    };
    println!("{scheme}: {} records, train mse {:.6}, test mse {:.6}", summary.records, summary.train_mse, summary.test_mse);
    let path = store.root().join(format!("ingest-{scheme}.json"));
    write_atomic(&path, serde_json::to_string_pretty(&summary).expect("summary serialises").as_bytes()).map_err(runtime(&c))?;
    write_manifest("ingest", config, store, None)
}
