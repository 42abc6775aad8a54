use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &["--train-size", "200", "--dev-size", "40", "--test-size", "40", "--max-len", "4", "--epochs", "1", "--tpdn-epochs", "2"];

fn tpdn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpdn")).args(args).arg("--out").arg(out).env("RUST_LOG", "warn").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = tpdn(&["gen-data", "--seed", "7", "--train-size", "500"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("dataset.tsv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let manifest = std::fs::read_to_string(a.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("dataset.tsv"));

    let c = tempfile::tempdir().unwrap();
    tpdn(&["gen-data", "--seed", "8", "--train-size", "500"], c.path());
    assert_ne!(read(&a), read(&c));
}

#[test]
fn one_cell_grid_gives_one_row_and_a_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["grid", "--tasks", "autoencode", "--encoders", "uni", "--decoders", "uni", "--schemes", "bi", "--seeds", "1"];
    args.extend_from_slice(TINY);
    let o = tpdn(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("autoencode,uni,uni,bi,0,"));

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for entry in walkdir::WalkDir::new(dir.path()).into_iter().filter_map(Result::ok).filter(|e| e.file_type().is_file()) {
        let rel = entry.path().strip_prefix(dir.path()).unwrap().to_string_lossy().replace('\\', "/");
        assert!(listed.contains(&rel.as_str()), "orphan artifact {rel}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "command = \"gen-data\"\nseed = 3\ntrain_size = 50\ndev_size = 10\ntest_size = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = tpdn(&["gen-data", "--config", cfg.to_str().unwrap(), "--train-size", "60"], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("dataset.tsv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("train")).count(), 60);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tpdn(&["grid", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(tpdn(&["grid", "--schemes", "zigzag"], dir.path()).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "hiden = 60\n").unwrap();
    let o = tpdn(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hiden"));
    let o = tpdn(&["ablate-linear", "--pairs", "5x11"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn runtime_failures_exit_one_and_name_the_cell() {
    // strict roles: twenty training sequences leave test wickelroles unseen
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "grid", "--tasks", "reverse", "--encoders", "uni", "--decoders", "uni", "--schemes", "wickel", "--seeds", "1", "--seed", "1",
        "--train-size", "20", "--dev-size", "10", "--test-size", "300", "--max-len", "4", "--epochs", "1", "--tpdn-epochs", "1",
    ];
    let o = tpdn(&args, dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("reverse/uni/uni/wickel/s1"), "{}", stderr(&o));
    assert!(dir.path().join("failures.csv").exists());
}

fn synthetic_corpus(path: &Path) {
    // exact LTR tensor product representation over three words
    let words = ["a", "b", "c"];
    let filler = |w: usize| [1.0 + w as f64, (w as f64 * 0.7).sin()];
    let role = |r: usize| [(r as f64 + 1.0).cos(), 0.5 * r as f64, 1.0];
    let mut text = String::from("dim=6 scheme_hint=ltr\n");
    for len in 1..=3u32 {
        for code in 0..3usize.pow(len) {
            let seq: Vec<usize> = (0..len).map(|i| code / 3usize.pow(i) % 3).collect();
            let mut v = [0.0; 6];
            for (pos, &w) in seq.iter().enumerate() {
                for (i, f) in filler(w).iter().enumerate() {
                    for (j, r) in role(pos).iter().enumerate() {
                        v[i * 3 + j] += f * r;
                    }
                }
            }
            let tokens: Vec<&str> = seq.iter().map(|&w| words[w]).collect();
            let values: Vec<String> = v.iter().map(f64::to_string).collect();
            text.push_str(&format!("{}\t{}\n", tokens.join(" "), values.join(",")));
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn ingest_fits_a_synthetic_corpus_with_the_hinted_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    synthetic_corpus(&corpus);
    let args = ["ingest", "--input", corpus.to_str().unwrap(), "--filler-dim", "2", "--role-dim", "3", "--tpdn-epochs", "1500", "--tpdn-lr", "0.02", "--lenient-roles"];
    let o = tpdn(&args, &dir.path().join("out"));
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/ingest-ltr.json")).unwrap()).unwrap();
    assert_eq!(summary["records"], 39);
    assert!(summary["train_mse"].as_f64().unwrap() < 1e-3, "{summary}");

    let fillers = dir.path().join("fillers.txt");
    std::fs::write(&fillers, "dim=2 scheme_hint=\na\t1,0\nb\t0,1\n").unwrap();
    let mut with_fillers = args.to_vec();
    with_fillers.extend(["--fillers", fillers.to_str().unwrap()]);
    let o = tpdn(&with_fillers, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("filler `c`"), "{}", stderr(&o));
}
