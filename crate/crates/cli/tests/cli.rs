use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pvec_cli::commands::{Manifest, UserPredictionReport};
use pvec_core::format;

fn pvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = pvec(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic world with a trained background model.
struct World {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl World {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = root.join("synth.toml");
        fs::write(
            &cfg,
            "out = \"unused\"\n[synth]\nusers = 3\nvocab_size = 120\ntopics = 6\nsentences_per_user = 100\nbackground_authors = 10\nbackground_sentences = 600\n",
        )
        .unwrap();
        ok(&["synth", "--config", s(&cfg), "--out", s(&root.join("syn"))]);
        ok(&[
            "train-background",
            "--corpus",
            s(&root.join("syn/background.txt")),
            "--out",
            s(&root.join("bg")),
            "--dim",
            "8",
            "--epochs",
            "2",
        ]);
        World { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn adapt(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "adapt".to_owned(),
            "--background".into(),
            s(&self.path("bg")).into(),
            "--users-dir".into(),
            s(&self.path("syn/users")).into(),
            "--out".into(),
            s(&self.path(out)).into(),
        ];
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        pvec(&refs)
    }

    fn eval(&self, models: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "eval".to_owned(),
            "--models".into(),
            s(&self.path(models)).into(),
            "--users-dir".into(),
            s(&self.path("syn/users")).into(),
            "--out".into(),
            s(&self.path(out)).into(),
        ];
        args.extend(extra.iter().map(|a| a.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        pvec(&refs)
    }
}

#[test]
fn missing_corpus_names_the_path() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.txt");
    let out = pvec(&["train-background", "--corpus", s(&missing), "--out", s(&d.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(pvec(&["eval", "--task", "everything"]).status.code(), Some(1));
    assert_eq!(pvec(&["train-background", "--out", "x"]).status.code(), Some(1));
    assert_eq!(pvec(&["--help"]).status.code(), Some(0));
}

#[test]
fn background_outputs_are_consistent() {
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c.txt");
    fs::write(&corpus, "the cat sat\nthe dog sat\na cat ran\n\nthe end\n").unwrap();
    let out = d.path().join("bg");
    ok(&["train-background", "--corpus", s(&corpus), "--out", s(&out), "--dim", "3", "--epochs", "2"]);
    for f in ["vocab.tsv", "background.vec", "background.vec.out", "train.log"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let vec_text = fs::read_to_string(out.join("background.vec")).unwrap();
    assert_eq!(vec_text.lines().next(), Some("7 3"));
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    assert!(log.lines().last().unwrap().starts_with("epoch=2 pairs="));
    assert!(!out.join(".pvec.lock").exists());
}

#[test]
fn written_model_reloads_exactly() {
    use pvec_core::corpus::{build_vocab, index_corpus};
    use pvec_core::sgns::{train_background, TrainConfig};
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c.txt");
    let text = "a b c d\nb c d e\nc d e a\nd e a b\n";
    fs::write(&corpus, text).unwrap();
    let out = d.path().join("bg");
    ok(&["train-background", "--corpus", s(&corpus), "--out", s(&out), "--dim", "4", "--epochs", "3", "--seed", "9"]);

    let raw: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let vocab = build_vocab(&raw, 1).unwrap();
    let config = TrainConfig {
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let (model, _) = train_background(&index_corpus(&raw, &vocab), &vocab, 4, &config, &mut |_| {}).unwrap();
    let (words, input, output) = format::read_embedding_pair(&out.join("background.vec")).unwrap();
    assert_eq!(words, vocab.words());
    assert_eq!(input, model.input);
    assert_eq!(output, model.output);
}

#[test]
fn adapt_writes_one_mapping_per_user() {
    let w = World::new();
    assert!(w.adapt("layer", &["--mode", "layer", "--epochs", "2"]).status.success());
    let m = Manifest::read(&w.path("layer")).unwrap();
    assert_eq!(m.users.len(), 3);
    for u in &m.users {
        assert_eq!(u.provenance.as_str(), "adaptive_layer");
        assert_eq!(u.trainable_parameters, 64);
        assert!(w.path("layer").join(&u.embedding).is_file());
        assert!(w.path("layer").join(u.layer.as_ref().unwrap()).is_file());
    }

    assert!(w.adapt("retrain", &["--mode", "retrain", "--epochs", "1"]).status.success());
    let r = Manifest::read(&w.path("retrain")).unwrap();
    assert!(r.users.iter().all(|u| u.provenance.as_str() == "retrain"
        && u.trainable_parameters == 2 * r.vocab_size * 8
        && u.layer.is_none()));
    let text = fs::read_to_string(w.path("retrain/manifest.json")).unwrap();
    assert!(text.contains("\"provenance\": \"retrain\""));
}

#[test]
fn identity_layer_without_training_copies_background() {
    let w = World::new();
    assert!(w
        .adapt("id", &["--mode", "layer", "--init", "identity", "--epochs", "0"])
        .status
        .success());
    let bg = fs::read(w.path("bg/background.vec")).unwrap();
    let bg_out = fs::read(w.path("bg/background.vec.out")).unwrap();
    for u in ["user00", "user01", "user02"] {
        assert_eq!(fs::read(w.path(&format!("id/{u}.vec"))).unwrap(), bg);
        assert_eq!(fs::read(w.path(&format!("id/{u}.vec.out"))).unwrap(), bg_out);
    }
}

#[test]
fn users_without_training_pairs_are_skipped() {
    let w = World::new();
    fs::write(w.path("syn/users/zed.txt"), "unknownword\n\n\n\nanother\n").unwrap();
    let out = w.adapt("m", &["--mode", "layer", "--epochs", "1"]);
    assert!(out.status.success());
    let m = Manifest::read(&w.path("m")).unwrap();
    assert_eq!(m.users.len(), 3);
    assert_eq!(m.skipped.len(), 1);
    assert_eq!(m.skipped[0].user_id, "zed");
    assert!(w.eval("m", "e", &["--task", "user-pred"]).status.success());
}

#[test]
fn identical_mappings_give_uniform_posteriors() {
    let w = World::new();
    assert!(w.adapt("same", &["--mode", "background"]).status.success());
    let out = w.eval("same", "e", &["--task", "both"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(w.path("e/user_prediction.json")).unwrap();
    let report: UserPredictionReport = serde_json::from_str(&text).unwrap();
    // 100 lines per user: test split is the last 20, one document each.
    assert_eq!(report.summary.documents, 3);
    for item in &report.items {
        assert_eq!(item.predicted, "user00");
        for p in item.posterior.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }
    assert!((report.summary.accuracy - 1.0 / 3.0).abs() < 1e-12);

    let tsv = fs::read_to_string(w.path("e/user_prediction.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + report.items.len());

    let sc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.path("e/sentence_completion.json")).unwrap()).unwrap();
    let summary = &sc["summary"];
    assert!(summary["top_pct"].is_number() && summary["mrr_within"].is_number());
    assert_eq!(summary["cutoff"], 500);
    let counted = summary["sentences"].as_u64().unwrap()
        + sc["excluded_short"].as_u64().unwrap()
        + sc["degenerate"].as_u64().unwrap();
    assert_eq!(counted, 60);
}

#[test]
fn missing_mapping_fails_eval() {
    let w = World::new();
    assert!(w.adapt("m", &["--mode", "background"]).status.success());
    fs::remove_file(w.path("m/user01.vec")).unwrap();
    let out = w.eval("m", "e", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("user01.vec"));
}

#[test]
fn locked_output_directory_is_refused() {
    let w = World::new();
    fs::create_dir_all(w.path("busy")).unwrap();
    fs::write(w.path("busy/.pvec.lock"), "").unwrap();
    let out = w.adapt("busy", &["--mode", "background"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn synth_is_deterministic_and_validates() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    for out in [&a, &b] {
        ok(&["synth", "--out", s(out), "--users", "2", "--sentences-per-user", "40", "--background-sentences", "50"]);
    }
    for f in ["background.txt", "truth.json", "anchors.txt", "users/user00.txt", "users/user01.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let bad = pvec(&["synth", "--out", s(&d.path().join("c")), "--topics", "0"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn probe_reports_every_mapping() {
    let w = World::new();
    assert!(w.adapt("m", &["--mode", "layer", "--epochs", "1"]).status.success());
    ok(&[
        "probe",
        "--models",
        s(&w.path("m")),
        "--anchors",
        s(&w.path("syn/anchors.txt")),
        "--out",
        s(&w.path("p")),
        "--include-background",
    ]);
    let text = fs::read_to_string(w.path("p/affinity.txt")).unwrap();
    for label in ["user00", "user01", "user02", "background"] {
        assert!(text.contains(&format!("# mapping={label} ")), "{label}");
    }
    let bad_anchor = w.path("bad.txt");
    fs::write(&bad_anchor, "positive: notaword\nnegative: neg0\n").unwrap();
    let out = pvec(&["probe", "--models", s(&w.path("m")), "--anchors", s(&bad_anchor), "--out", s(&w.path("p2"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("notaword"));
}

#[test]
fn explicit_priors_shift_predictions() {
    let w = World::new();
    assert!(w.adapt("same", &["--mode", "background"]).status.success());
    let priors = w.path("priors.txt");
    fs::write(&priors, "user00 1\nuser01 1\nuser02 8\n").unwrap();
    assert!(w
        .eval("same", "e", &["--task", "user-pred", "--priors", s(&priors)])
        .status
        .success());
    let report: UserPredictionReport =
        serde_json::from_str(&fs::read_to_string(w.path("e/user_prediction.json")).unwrap()).unwrap();
    for item in &report.items {
        assert_eq!(item.predicted, "user02");
        assert!((item.posterior["user02"] - 0.8).abs() < 1e-12);
    }
}
