//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Training-dependent criteria reuse a resumable cache (default
//! `target/acceptance-cache`, override with `TPDN_ACCEPTANCE_CACHE`). A cold
//! cache trains every model and takes hours on one core. Red
//! training-dependent criteria are reported without failing the run unless
//! `TPDN_ACCEPTANCE_STRICT=1`; property and determinism criteria always fail
//! the run when red.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;

use common::{rel_err, rng, FD_STEP};
use rand::Rng;
use tpdn_core::autodiff::Graph;
use tpdn_core::eval::{
    ablate_final_linear, analogy_distances, build_role_diagnostic_analogies, compare_binding_ops, run_experiment_grid,
    signed_bindings, sweep_embedding_dims, ExperimentStore, FitContext, GridSpec, ModelKey, ResultTable,
};
use tpdn_core::roles::{bindings_for, RoleMode, RoleScheme};
use tpdn_core::seq2seq::{linear_srn_decomposition_check, Arch, Example, ModelConfig, Seq2Seq};
use tpdn_core::sequences::{generate_dataset, DatasetConfig, DigitSequence, Split, TaskKind};
use tpdn_core::tensor::Tensor;
use tpdn_core::tpdn::{fit_tpdn, BindingOp, FitData, Structure, TpdnConfig, TpdnModel};
use tpdn_core::training::TrainConfig;
use tpdn_core::tree::{parse, parse_derivation};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn cache_dir() -> PathBuf {
    std::env::var_os("TPDN_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache"))
}

fn seq2seq_training() -> TrainConfig {
    TrainConfig { max_epochs: 30, ..TrainConfig::default() }
}

struct Ledger {
    training_red: usize,
    property_red: usize,
}

impl Ledger {
    fn record(&mut self, id: &str, training: bool, pass: bool, detail: String) {
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            if training {
                self.training_red += 1;
            } else {
                self.property_red += 1;
            }
        }
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn subst(t: &ResultTable, task: TaskKind, enc: Arch, dec: Arch, scheme: RoleScheme) -> f64 {
    t.summary(task, enc, dec, scheme).map_or(f64::NAN, |s| s.subst_acc)
}

fn train_acc(t: &ResultTable, task: TaskKind, enc: Arch, dec: Arch) -> f64 {
    t.summary(task, enc, dec, RoleScheme::Ltr).map_or(f64::NAN, |s| s.train_acc)
}

fn row_line(t: &ResultTable, task: TaskKind, enc: Arch, dec: Arch) -> String {
    RoleScheme::ALL.iter().map(|&s| format!("{s}={:.3}", subst(t, task, enc, dec, s))).collect::<Vec<_>>().join(" ")
}

fn strictly_best(t: &ResultTable, task: TaskKind, enc: Arch, dec: Arch, scheme: RoleScheme) -> bool {
    let v = subst(t, task, enc, dec, scheme);
    RoleScheme::ALL.iter().filter(|&&s| s != scheme).all(|&s| subst(t, task, enc, dec, s) < v)
}

fn grid(tasks: &[TaskKind], encoders: &[Arch], decoders: &[Arch]) -> GridSpec {
    GridSpec {
        tasks: tasks.to_vec(),
        encoders: encoders.to_vec(),
        decoders: decoders.to_vec(),
        seeds: SEEDS.to_vec(),
        train: seq2seq_training(),
        normalized_mse: false,
        ..GridSpec::default()
    }
}

fn failures_note(t: &ResultTable) -> String {
    if t.failures.is_empty() {
        String::new()
    } else {
        format!(" [{} failed cells: {}]", t.failures.len(), t.failures.iter().map(|f| f.cell_name()).collect::<Vec<_>>().join(", "))
    }
}

fn training_criteria(ledger: &mut Ledger, store: &ExperimentStore) -> tpdn_core::Result<()> {
    let uni = run_experiment_grid(&grid(&TaskKind::ALL, &[Arch::Uni], &[Arch::Uni]), store)?;
    let tree = run_experiment_grid(&grid(&[TaskKind::Autoencode], &[Arch::Tree, Arch::Uni], &[Arch::Tree]), store)?;
    use Arch::{Tree as T, Uni as U};
    use RoleScheme::*;
    use TaskKind::*;

    let ae = train_acc(&uni, Autoencode, U, U);
    let tt = train_acc(&tree, Autoencode, T, T);
    let others: Vec<f64> = [Reverse, Sort, Interleave].iter().map(|&k| train_acc(&uni, k, U, U)).collect();
    ledger.record(
        "C1 training accuracy",
        true,
        ae >= 0.99 && tt >= 0.97 && others.iter().all(|&a| a >= 0.99),
        format!(
            "uni/uni autoencode {ae:.4} (>=0.99), tree/tree autoencode {tt:.4} (>=0.97), uni/uni reverse/sort/interleave {:.4}/{:.4}/{:.4} (>=0.99){}{}",
            others[0],
            others[1],
            others[2],
            failures_note(&uni),
            failures_note(&tree)
        ),
    );

    let s = |k, r| subst(&uni, k, U, U, r);
    let sort_best = RoleScheme::ALL.iter().map(|&r| s(Sort, r)).fold(f64::MIN, f64::max);
    let checks = [
        ("autoencode", s(Autoencode, Bi) >= 0.9 && s(Autoencode, Ltr) >= 0.75 && s(Autoencode, Rtl) <= 0.25 && s(Autoencode, Bow) <= 0.05),
        ("reverse", s(Reverse, Rtl) >= 0.9 && s(Reverse, Bi) >= 0.9 && s(Reverse, Ltr) <= 0.2),
        ("sort", s(Sort, Bow) >= 0.8 && s(Sort, Bow) >= sort_best - 0.05),
        ("interleave", s(Interleave, Bi) >= 0.9 && s(Interleave, Ltr) <= 0.45 && s(Interleave, Rtl) <= 0.35),
    ];
    let detail = TaskKind::ALL
        .iter()
        .zip(&checks)
        .map(|(&k, (name, ok))| format!("{name}{}: {}", if *ok { "" } else { " (red)" }, row_line(&uni, k, U, U)))
        .collect::<Vec<_>>()
        .join("; ");
    ledger.record("C2 uni/uni role-scheme signature", true, checks.iter().all(|c| c.1), detail);

    let tt_tree = subst(&tree, Autoencode, T, T, Tree);
    let ok = tt_tree >= 0.85 && strictly_best(&tree, Autoencode, T, T, Tree) && strictly_best(&tree, Autoencode, U, T, Tree);
    ledger.record(
        "C3 tree signature",
        true,
        ok,
        format!(
            "tree/tree: {} (tree >=0.85, strictly best); uni/tree: {} (tree best)",
            row_line(&tree, Autoencode, T, T),
            row_line(&tree, Autoencode, U, T)
        ),
    );

    let train = seq2seq_training();
    let dataset = DatasetConfig::default();
    let (mut ablation, mut sweep, mut ep60, mut cc20, mut cc60) = (vec![], vec![], vec![], vec![], vec![]);
    for seed in SEEDS {
        let key = ModelKey { task: Reverse, encoder: U, decoder: U, seed };
        let trained = store.model(key, &dataset, &train)?;
        let encodings = store.encodings(&trained, &dataset, &train)?;
        let ctx = FitContext {
            store,
            trained: &trained,
            encodings: &encodings,
            data: &dataset,
            train: &train,
            tpdn_train: TrainConfig::default(),
            role_mode: RoleMode::Strict,
        };
        ablation.push(ablate_final_linear(&ctx, Rtl, &[(5, 12)])?.remove(0));
        sweep.push(sweep_embedding_dims(&ctx, Rtl, &[30], &[2, 6, 12])?);
        ep60.push(compare_binding_ops(&ctx, &[BindingOp::ElementwiseProduct], &[60], &[Rtl])?.remove(0).subst_acc);
        cc20.push(compare_binding_ops(&ctx, &[BindingOp::CircularConvolution], &[20], &RoleScheme::ALL)?);
        cc60.push(compare_binding_ops(&ctx, &[BindingOp::CircularConvolution], &[60], &[Rtl, Bi])?);
    }

    let with = mean(ablation.iter().map(|r| r.with_linear));
    let without = mean(ablation.iter().map(|r| r.without_linear));
    ledger.record(
        "C4 final linear ablation",
        true,
        with >= 0.8 && without <= 0.05,
        format!("reverse rtl filler 5 / role 12: with M {with:.3} (>=0.8), without M {without:.3} (<=0.05)"),
    );

    let at = |r: usize| mean(sweep.iter().map(|cells| cells.iter().find(|c| c.role_dim == r).expect("swept").subst_acc));
    let (r2, r6, r12) = (at(2), at(6), at(12));
    ledger.record(
        "C5 dimensionality plateau",
        true,
        r6.min(r12) - r2 >= 0.5,
        format!("reverse rtl filler 30: role 2 {r2:.3}, role 6 {r6:.3}, role 12 {r12:.3} (min(role>=6) - role 2 >= 0.5)"),
    );

    let ep = mean(ep60);
    let cc20_by: Vec<(RoleScheme, f64)> = RoleScheme::ALL
        .iter()
        .map(|&r| (r, mean(cc20.iter().map(|rows| rows.iter().find(|x| x.scheme == r).expect("fitted").subst_acc))))
        .collect();
    let cc60_at = |r: RoleScheme| mean(cc60.iter().map(|rows| rows.iter().find(|x| x.scheme == r).expect("fitted").subst_acc));
    let (cr, cb) = (cc60_at(Rtl), cc60_at(Bi));
    ledger.record(
        "C6 binding operations",
        true,
        ep >= 0.9 && cc20_by.iter().all(|(_, v)| *v <= 0.2) && cr - cb >= 0.5,
        format!(
            "elementwise 60 rtl {ep:.3} (>=0.9); circular 20 {} (each <=0.2); circular 60 rtl {cr:.3} bi {cb:.3} (gap >=0.5)",
            cc20_by.iter().map(|(r, v)| format!("{r}={v:.3}")).collect::<Vec<_>>().join(" ")
        ),
    );
    Ok(())
}

fn seq2seq_gradient_error() -> f64 {
    let batch = [Example::new(vec![5, 2, 3], vec![3, 2, 5]).unwrap(), Example::new(vec![8, 1, 4], vec![4, 1, 8]).unwrap()];
    let batch: Vec<&Example> = batch.iter().collect();
    let loss = |m: &Seq2Seq<f64>| {
        let mut g = Graph::new();
        let bm = m.bind(&mut g, false);
        let l = bm.loss(&mut g, &batch).unwrap();
        g.value(l).data()[0]
    };
    let mut worst = 0.0f64;
    for (n, enc) in Arch::ALL.into_iter().enumerate() {
        for (k, dec) in Arch::ALL.into_iter().enumerate() {
            let config = ModelConfig { encoder: enc, decoder: dec, embed_dim: 4, hidden: 6, vocab: 10 };
            let mut m = Seq2Seq::new(config, &mut rng(40 + (3 * n + k) as u64));
            let (_, grads) = m.loss_and_grads(&batch).unwrap();
            let ids: Vec<_> = m.params.ids().collect();
            for (i, id) in ids.into_iter().enumerate() {
                let analytic = grads[i].clone().unwrap_or_else(|| Tensor::zeros(m.params.get(id).shape()));
                for j in 0..m.params.get(id).len() {
                    let orig = m.params.get(id).data()[j];
                    m.params.get_mut(id).data_mut()[j] = orig + FD_STEP;
                    let plus = loss(&m);
                    m.params.get_mut(id).data_mut()[j] = orig - FD_STEP;
                    let minus = loss(&m);
                    m.params.get_mut(id).data_mut()[j] = orig;
                    worst = worst.max(rel_err(analytic.data()[j], (plus - minus) / (2.0 * FD_STEP)));
                }
            }
        }
    }
    worst
}

fn digit_structures(n: usize, seed: u64) -> (Vec<Structure>, Vec<Structure>, Vec<Structure>) {
    let data = generate_dataset(&DatasetConfig { train: n, dev: n / 8, test: n / 8, min_len: 1, max_len: 6, seed }).unwrap();
    let s = |split| data.split(split).iter().map(|x| Structure::from_digits(x.digits()).unwrap()).collect();
    (s(Split::Train), s(Split::Dev), s(Split::Test))
}

fn tpdn_gradient_error() -> f64 {
    let (train, _, _) = digit_structures(64, 5);
    let mut worst = 0.0f64;
    for binding in BindingOp::ALL {
        for use_final_linear in [true, false] {
            let out = if use_final_linear { 5 } else if binding == BindingOp::TensorProduct { 16 } else { 4 };
            let config = TpdnConfig { filler_dim: 4, role_dim: 4, binding, use_final_linear, output_dim: out };
            let mut m = TpdnModel::<f64>::for_digits(config, RoleScheme::Bi, &train, RoleMode::Strict, &mut rng(6)).unwrap();
            let n = train[0].tokens.len();
            let same: Vec<Structure> = train.iter().filter(|s| s.tokens.len() == n).take(3).cloned().collect();
            let mut r = rng(7);
            let targets: Vec<Vec<f64>> = same.iter().map(|_| (0..out).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
            let items = m.encode_targets(&same, &targets).unwrap();
            let batch: Vec<_> = items.iter().collect();
            let net = m.net.clone();
            let (_, grads) = net.loss_and_grads(&m.params, &batch).unwrap();
            let loss = |p: &tpdn_core::ParamStore| {
                let mut g = Graph::new();
                let l = net.loss(&mut g, p, false, &batch).unwrap();
                g.value(l).data()[0]
            };
            let ids: Vec<_> = m.params.ids().collect();
            for (i, id) in ids.into_iter().enumerate() {
                let analytic = grads[i].clone().unwrap_or_else(|| Tensor::zeros(m.params.get(id).shape()));
                for j in 0..m.params.get(id).len() {
                    let orig = m.params.get(id).data()[j];
                    m.params.get_mut(id).data_mut()[j] = orig + FD_STEP;
                    let plus = loss(&m.params);
                    m.params.get_mut(id).data_mut()[j] = orig - FD_STEP;
                    let minus = loss(&m.params);
                    m.params.get_mut(id).data_mut()[j] = orig;
                    worst = worst.max(rel_err(analytic.data()[j], (plus - minus) / (2.0 * FD_STEP)));
                }
            }
        }
    }
    worst
}

fn self_recovery_mse() -> f64 {
    let (train, dev, test) = digit_structures(3000, 1);
    let config = TpdnConfig { filler_dim: 6, role_dim: 6, output_dim: 12, ..TpdnConfig::default() };
    let teacher = TpdnModel::<f64>::for_digits(config, RoleScheme::Ltr, &train, RoleMode::Strict, &mut rng(101)).unwrap();
    let t = |s: &[Structure]| teacher.compose_all(s).unwrap();
    let data = FitData { train: (train.clone(), t(&train)), dev: (dev.clone(), t(&dev)), test: (test.clone(), t(&test)) };
    let training = TrainConfig {
        max_epochs: 150,
        patience: Some(30),
        adam: tpdn_core::optim::AdamConfig { lr: 0.003, ..Default::default() },
        ..TrainConfig::default()
    };
    let fit = fit_tpdn(&data, RoleScheme::Ltr, &config, &training, RoleMode::Strict, 2).unwrap();
    fit.test_mse.max(fit.train_mse)
}

fn linear_srn_deviation() -> f64 {
    let mut r = rng(12);
    let w = Tensor::uniform(&[5, 5], 0.4, &mut r);
    let u = Tensor::uniform(&[5, 3], 1.0, &mut r);
    let inputs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    linear_srn_decomposition_check(&w, &u, &inputs).unwrap()
}

fn role_oracles_match() -> bool {
    let roles = |s: RoleScheme, d: &[u8]| -> Vec<String> {
        bindings_for(s, &DigitSequence::new(d.to_vec()).unwrap()).into_iter().map(|b| format!("{}:{}", b.filler, b.role)).collect()
    };
    let a = [3, 1, 1, 6];
    let b = [5, 2, 3, 1, 9, 7];
    roles(RoleScheme::Ltr, &a) == ["3:ltr:0", "1:ltr:1", "1:ltr:2", "6:ltr:3"]
        && roles(RoleScheme::Rtl, &a) == ["3:rtl:3", "1:rtl:2", "1:rtl:1", "6:rtl:0"]
        && roles(RoleScheme::Bi, &a) == ["3:bi:0_3", "1:bi:1_2", "1:bi:2_1", "6:bi:3_0"]
        && roles(RoleScheme::Wickel, &a) == ["3:wickel:#_1", "1:wickel:3_1", "1:wickel:1_6", "6:wickel:1_#"]
        && roles(RoleScheme::Tree, &a) == ["3:tree:L", "1:tree:RLL", "1:tree:RLR", "6:tree:RR"]
        && roles(RoleScheme::Bow, &a) == ["3:bow:r0", "1:bow:r0", "1:bow:r0", "6:bow:r0"]
        && roles(RoleScheme::Ltr, &b) == ["5:ltr:0", "2:ltr:1", "3:ltr:2", "1:ltr:3", "9:ltr:4", "7:ltr:5"]
        && roles(RoleScheme::Rtl, &b) == ["5:rtl:5", "2:rtl:4", "3:rtl:3", "1:rtl:2", "9:rtl:1", "7:rtl:0"]
        && roles(RoleScheme::Bi, &b) == ["5:bi:0_5", "2:bi:1_4", "3:bi:2_3", "1:bi:3_2", "9:bi:4_1", "7:bi:5_0"]
        && roles(RoleScheme::Wickel, &b)
            == ["5:wickel:#_2", "2:wickel:5_3", "3:wickel:2_1", "1:wickel:3_9", "9:wickel:1_7", "7:wickel:9_#"]
        && roles(RoleScheme::Tree, &b) == ["5:tree:LL", "2:tree:LRLL", "3:tree:LRLR", "1:tree:LRRL", "9:tree:LRRR", "7:tree:R"]
        && parse(&b).unwrap().bracketed() == "[[5 [[2 3] [1 9]]] 7]"
}

fn derivation_matches() -> bool {
    parse_derivation(&[5, 2, 3, 7, 1, 9]).unwrap()
        == [
            "5 2 3 7 1 9",
            "5 2 3 7 [1 9]",
            "5 [2 3] 7 [1 9]",
            "5 [[2 3] 7] [1 9]",
            "[5 [[2 3] 7]] [1 9]",
            "[[5 [[2 3] 7]] [1 9]]",
        ]
}

/// Worst distance on cancelling analogies and the worst mismatch against the
/// symbolic residual elsewhere, for an exact TPR without a final map.
fn analogy_agreement() -> (f64, f64) {
    let set = build_role_diagnostic_analogies(&RoleScheme::ALL, 8);
    let mut zero = 0.0f64;
    let mut mismatch = 0.0f64;
    for scheme in [RoleScheme::Ltr, RoleScheme::Rtl, RoleScheme::Bi, RoleScheme::Wickel, RoleScheme::Tree] {
        let structures: Vec<Structure> =
            set.iter().flat_map(|a| a.terms().map(|t| Structure::from_digits(t).unwrap())).collect();
        let config = TpdnConfig { filler_dim: 6, role_dim: 10, use_final_linear: false, output_dim: 60, ..TpdnConfig::default() };
        let model = TpdnModel::<f64>::for_digits(config, scheme, &structures, RoleMode::Strict, &mut rng(21)).unwrap();
        let encode = |t: &[u8]| model.compose(&bindings_for(scheme, &DigitSequence::new(t.to_vec()).unwrap()));
        let report = analogy_distances(encode, &set).unwrap();
        for (a, rs) in set.iter().zip(&report.per_analogy) {
            let mut residual = vec![0.0; 60];
            for (b, n) in signed_bindings(scheme, &a.a, &a.b, &a.c, &a.d) {
                for (s, v) in residual.iter_mut().zip(model.compose(&[b]).unwrap()) {
                    *s += f64::from(n) * v;
                }
            }
            let norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
            for r in rs {
                if a.holds_under(scheme) {
                    zero = zero.max(r.distance);
                }
                mismatch = mismatch.max((r.distance - norm).abs());
            }
        }
    }
    (zero, mismatch)
}

fn property_criteria(ledger: &mut Ledger) {
    let seq = seq2seq_gradient_error();
    let tpdn = tpdn_gradient_error();
    let srn = linear_srn_deviation();
    let recovery = self_recovery_mse();
    let oracles = role_oracles_match();
    let derivation = derivation_matches();
    let (zero, mismatch) = analogy_agreement();
    ledger.record(
        "C7 property suites",
        false,
        seq < 1e-4 && tpdn < 1e-4 && srn < 1e-9 && recovery < 1e-4 && oracles && derivation && zero < 1e-10 && mismatch < 1e-9,
        format!(
            "seq2seq grad rel err {seq:.1e}, tpdn grad rel err {tpdn:.1e} (<1e-4); linear srn {srn:.1e} (<1e-9); self-recovery mse {recovery:.1e} (<1e-4); role oracles {}; derivation {}; analogy cancel distance {zero:.1e} (<1e-10), residual mismatch {mismatch:.1e}",
            if oracles { "match" } else { "differ" },
            if derivation { "match" } else { "differs" },
        ),
    );
}

fn determinism_criterion(ledger: &mut Ledger, store: &ExperimentStore) -> tpdn_core::Result<()> {
    // a cheap cell from scratch in two fresh stores
    let spec = GridSpec {
        tasks: vec![TaskKind::Reverse],
        encoders: vec![Arch::Bi],
        decoders: vec![Arch::Uni],
        schemes: vec![RoleScheme::Bi, RoleScheme::Wickel],
        seeds: vec![7],
        data: DatasetConfig { train: 1500, dev: 300, test: 300, min_len: 1, max_len: 4, seed: 3 },
        train: TrainConfig { max_epochs: 2, checkpoint_interval: 500, ..TrainConfig::default() },
        tpdn_train: TrainConfig { max_epochs: 3, checkpoint_interval: 500, ..TrainConfig::default() },
        ..GridSpec::default()
    };
    let run = || -> tpdn_core::Result<String> {
        let dir = tempfile::tempdir().expect("temp dir");
        run_experiment_grid(&spec, &ExperimentStore::new(dir.path()))?.to_csv()
    };
    let (first, second) = (run()?, run()?);

    // one full-size cell refitted against its cached result
    let data = DatasetConfig::default();
    let train = seq2seq_training();
    let key = ModelKey { task: TaskKind::Autoencode, encoder: Arch::Uni, decoder: Arch::Uni, seed: 0 };
    let trained = store.model(key, &data, &train)?;
    let settings = grid(&[TaskKind::Autoencode], &[Arch::Uni], &[Arch::Uni]).fit_settings(RoleScheme::Bi);
    let encodings = store.encodings(&trained, &data, &train)?;
    let cached = store.fit(&trained, &encodings, &data, &train, &settings)?;
    let fresh = store.fit_uncached(&trained, &encodings, &settings)?;
    let same_cell = cached == fresh;
    ledger.record(
        "C8 determinism",
        false,
        first == second && same_cell && first.lines().count() == 3,
        format!(
            "fresh reruns {}; autoencode uni/uni bi s0 refit {} (subst {} vs {})",
            if first == second { "identical" } else { "differ" },
            if same_cell { "identical" } else { "differs" },
            fresh.substitution.exact,
            cached.substitution.exact
        ),
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut ledger = Ledger { training_red: 0, property_red: 0 };
    let store = ExperimentStore::new(cache_dir());
    println!("acceptance cache: {}", store.root().display());
    property_criteria(&mut ledger);
    if let Err(e) = training_criteria(&mut ledger, &store) {
        ledger.record("C1-C6 training criteria", true, false, format!("aborted: {e}"));
    }
    if let Err(e) = determinism_criterion(&mut ledger, &store) {
        ledger.record("C8 determinism", false, false, format!("aborted: {e}"));
    }
    let strict = std::env::var("TPDN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!(
        "acceptance: {} property/determinism red, {} training-dependent red{}",
        ledger.property_red,
        ledger.training_red,
        if strict { " (strict)" } else { "" }
    );
    if ledger.property_red > 0 || (strict && ledger.training_red > 0) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
