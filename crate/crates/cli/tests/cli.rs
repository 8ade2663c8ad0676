use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dap_core::checkpoint::Checkpoint;
use dap_core::corpus::{read_corpus, write_corpus};
use dap_core::model::{Hyperparams, ModelParams};
use ndarray::{Array2, Array3};

const TOY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/toy_corpus.txt");

fn dap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dap")).args(args).env_remove("DAP_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

const RAW: &str = r#"{"author_id": "ann", "timestamp": 0, "text": "The garden roses bloom while the garden bees hum near roses"}
{"author_id": "ann", "timestamp": 8, "text": "Roses again in the garden and bees near the old garden wall"}
{"author_id": "bob", "timestamp": 3, "text": "Chemo session today then scans and more chemo next week scans"}
{"author_id": "bob", "timestamp": 12, "text": "Scans came back clear after chemo so no more chemo for now"}
{"author_id": "cy", "timestamp": 1, "tokens": ["walk", "dog", "park", "walk", "dog", "rain"]}
{"author_id": "cy", "timestamp": 16, "tokens": ["rain", "dog", "walk", "park", "park", "rain"]}
"#;

#[test]
fn prepare_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("raw.jsonl"), RAW).unwrap();
    let raw = p(dir.path(), "raw.jsonl");
    let (a, b) = (p(dir.path(), "a.txt"), p(dir.path(), "b.txt"));
    let o = dap(&["prepare", &raw, "--out", &a, "--min-words", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("D=6"));
    assert_eq!(code(&dap(&["prepare", &raw, "--out", &b, "--min-words", "3"])), 0);
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());

    let corpus = read_corpus(text.as_slice()).unwrap();
    let mut again = Vec::new();
    write_corpus(&corpus, &mut again).unwrap();
    assert_eq!(again, text);

    let capped = p(dir.path(), "c.txt");
    assert_eq!(code(&dap(&["prepare", &raw, "--out", &capped, "--min-words", "1", "--vocab-cap", "5"])), 0);
    let c = read_corpus(fs::read(&capped).unwrap().as_slice()).unwrap();
    assert!(c.vocab_size() <= 5);
}

#[test]
fn prepare_reports_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let raw = p(dir.path(), "raw.jsonl");
    fs::write(&raw, format!("{}\n{{\"author_id\": \"x\"}}\n", RAW.lines().next().unwrap())).unwrap();
    let o = dap(&["prepare", &raw, "--out", &p(dir.path(), "o.txt")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

fn train(out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", TOY, "--topics", "5", "--personas", "3", "--out", out];
    let trace = format!("{out}.trace");
    args.extend(["--trace", &trace]);
    args.extend(extra);
    dap(&args)
}

#[test]
fn train_exit_codes_and_equivalent_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.json"), p(dir.path(), "b.json"));
    let o = train(&a, &["--rho", "0", "--max-iters", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&train(&b, &["--rho", "0.0", "--max-iters", "200"])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let short = p(dir.path(), "short.json");
    assert_eq!(code(&train(&short, &["--max-iters", "2"])), 2);
    assert!(Checkpoint::load(Path::new(&short)).is_ok());
    let trace = fs::read_to_string(format!("{short}.trace")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["objective"].is_f64()));

    assert_eq!(code(&dap(&["train", TOY, "--topics", "0"])), 1);
    assert_eq!(code(&dap(&["train", TOY, "--personas", "-2"])), 1);
}

#[test]
fn thread_count_does_not_change_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.json"), p(dir.path(), "b.json"));
    assert_eq!(code(&train(&a, &["--threads", "1", "--max-iters", "6"])), 2);
    assert_eq!(code(&train(&b, &["--threads", "8", "--max-iters", "6"])), 2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let c = p(dir.path(), "c.json");
    let trace = format!("{c}.trace");
    let o = Command::new(env!("CARGO_BIN_EXE_dap"))
        .args(["train", TOY, "--topics", "5", "--personas", "3", "--max-iters", "6", "--out", &c, "--trace", &trace])
        .env("DAP_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "run.cfg");
    fs::write(&cfg, "# toy run\ntopics = 5\npersonas = 3\nmax-iters = 2\n").unwrap();
    let (a, b) = (p(dir.path(), "a.json"), p(dir.path(), "b.json"));
    let o = dap(&["train", TOY, "--config", &cfg, "--max-iters", "3", "--out", &a, "--trace", &format!("{a}.t")]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(format!("{a}.t")).unwrap().lines().count(), 3);
    let ck = Checkpoint::load(Path::new(&a)).unwrap();
    assert_eq!((ck.hyper.num_topics, ck.hyper.num_personas), (5, 3));

    fs::write(&cfg, "topics = 5\npersonas = 3\nmax-iters = 3\n").unwrap();
    assert_eq!(code(&dap(&["train", TOY, "--config", &cfg, "--out", &b, "--trace", &format!("{b}.t")])), 2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    fs::write(&cfg, "topics = 5\ncolour = blue\n").unwrap();
    let o = dap(&["train", TOY, "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

fn uniform_checkpoint(dir: &Path, v: usize) -> (String, String) {
    let corpus = read_corpus(fs::read(TOY).unwrap().as_slice()).unwrap();
    assert_eq!(corpus.vocab_size(), v);
    let t = corpus.num_steps();
    let params = ModelParams {
        beta: Array2::from_elem((1, v), 1.0 / v as f64),
        alpha: Array3::zeros((t, 1, 1)),
        alpha_var: Array3::from_elem((t, 1, 1), 0.2),
        alpha_hat: Array3::zeros((t, 1, 1)),
        delta: Array2::from_elem((corpus.num_authors(), 1), 0.1),
        schedule: corpus.delta().to_vec(),
    };
    let path = p(dir, "uniform.json");
    Checkpoint::new(Hyperparams::new(1, 1), params, &corpus).save(Path::new(&path)).unwrap();
    (path, TOY.to_string())
}

#[test]
fn eval_of_uniform_model_is_log_v() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, test) = uniform_checkpoint(dir.path(), 100);
    let out = p(dir.path(), "eval.json");
    let csv = p(dir.path(), "eval.csv");
    let o = dap(&["eval", &ck, &test, "--out", &out, "--per-time-csv", &csv]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let pwll = r["pwll"].as_f64().unwrap();
    assert!((pwll + 100f64.ln()).abs() < 1e-12);
    assert!((r["perplexity"].as_f64().unwrap() - (-pwll).exp()).abs() < 1e-9);
    for key in ["per_time_pwll", "per_doc_pwll", "num_docs", "num_tokens"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    for key in ["mean", "sd", "min", "q25", "median", "q75", "max"] {
        assert!(r["per_doc_pwll"].get(key).is_some(), "{key}");
    }
    assert!(fs::read_to_string(&csv).unwrap().starts_with("t,pwll,sd\n"));
}

#[test]
fn split_train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = (p(dir.path(), "train.txt"), p(dir.path(), "test.txt"));
    assert_eq!(code(&dap(&["split", TOY, "--test-frac", "0.2", "--seed", "3", "--train-out", &tr, "--test-out", &te])), 0);
    let model = p(dir.path(), "m.json");
    let o = dap(&["train", &tr, "--topics", "5", "--personas", "3", "--out", &model, "--trace", &p(dir.path(), "t")]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let (e1, e2) = (p(dir.path(), "e1.json"), p(dir.path(), "e2.json"));
    assert_eq!(code(&dap(&["eval", &model, &te, "--out", &e1, "--per-time-csv", &p(dir.path(), "c1")])), 0);
    assert_eq!(code(&dap(&["eval", &model, &te, "--out", &e2, "--per-time-csv", &p(dir.path(), "c2")])), 0);
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&e2).unwrap());

    let (rj, rc) = (p(dir.path(), "r.json"), p(dir.path(), "r.csv"));
    assert_eq!(code(&dap(&["report", &model, "--out", &rj, "--trajectory-csv", &rc])), 0);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rj).unwrap()).unwrap();
    assert_eq!(r["top_topics"].as_array().unwrap().len(), 3);
    assert!(r["mean_pairwise_cosine"].is_f64());
    let csv = fs::read_to_string(&rc).unwrap();
    assert!(csv.starts_with("persona,t,rank,topic,mass\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 5 * 3);
}

#[test]
fn sample_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = p(dir.path(), name);
        let args = [
            "sample", "--topics", "4", "--personas", "2", "--steps", "3", "--authors", "5", "--doc-length", "12",
            "--vocab-size", "30", "--seed", seed, "--out", &out, "--truth", &format!("{out}.truth"),
            "--raw", &format!("{out}.raw"),
        ];
        assert_eq!(code(&dap(&args)), 0);
        PathBuf::from(out)
    };
    let (a, b, c) = (run("a", "1"), run("b", "1"), run("c", "2"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let corpus = read_corpus(fs::read(&a).unwrap().as_slice()).unwrap();
    assert_eq!((corpus.num_steps(), corpus.num_authors(), corpus.num_docs()), (3, 5, 15));
    assert!(corpus.docs().iter().all(|d| d.len() == 12));
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.with_extension("truth")).unwrap()).unwrap();
    assert_eq!(truth["persona"].as_array().unwrap().len(), 15);
    assert_eq!(fs::read_to_string(a.with_extension("raw")).unwrap().lines().count(), 15);
}

#[test]
fn help_lists_defaults() {
    let o = dap(&["train", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--topics", "--personas", "--rho", "--sigma", "--measurement-noise", "--eta", "--omega", "--seed", "--max-iters", "--tol", "--threads", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
    for default in ["[default: 25]", "[default: 15]", "[default: 0.2]", "[env: DAP_THREADS="] {
        assert!(text.contains(default), "{default}");
    }
    assert_eq!(code(&dap(&["--help"])), 0);
    assert_eq!(code(&dap(&["bogus"])), 1);
}
