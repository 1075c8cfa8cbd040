use std::path::Path;
use std::process::{Command, Output};

use hmer_core::ink::{parse_lg, write_lg};
use hmer_core::nnet::load_model;
use hmer_core::synth::{random_corpus, Grammar, Style};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hmer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmer"))
        .args(args)
        .env_remove("HMER_MODEL_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_then_oracle_recognize() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&hmer(&[
        "synth",
        p(dir.path()),
        "--count",
        "3",
        "--seed",
        "4",
    ]));
    assert_eq!(out.trim(), "wrote 3 files");
    let file = dir.path().join("synth_0000.inkml");

    let text = stdout(&hmer(&["recognize", p(&file), "--oracle"]));
    let lg_end = text.rfind("\n\n").unwrap();
    let slg = parse_lg(&text[..lg_end + 1]).unwrap();
    let latex = text[lg_end..].trim();
    assert_eq!(hmer_core::ink::slg_to_latex(&slg).unwrap(), latex);

    let json: serde_json::Value = serde_json::from_str(&stdout(&hmer(&[
        "recognize",
        p(&file),
        "--oracle",
        "--json",
    ])))
    .unwrap();
    assert_eq!(json["latex"], latex);
    assert_eq!(json["model"], "oracle");
}

#[test]
fn evaluating_a_directory_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (i, s) in random_corpus(&Grammar::default(), &Style::default(), 4, &mut rng)
        .iter()
        .enumerate()
    {
        std::fs::write(dir.path().join(format!("f{i}.lg")), write_lg(&s.slg)).unwrap();
    }
    let json: serde_json::Value = serde_json::from_str(&stdout(&hmer(&[
        "evaluate",
        p(dir.path()),
        p(dir.path()),
        "--json",
    ])))
    .unwrap();
    assert_eq!(json["metrics"]["exp"]["correct"], 4);
    assert_eq!(json["metrics"]["exp"]["total"], 4);
    let table = stdout(&hmer(&["evaluate", p(dir.path()), p(dir.path())]));
    assert!(table.contains("100.00"), "{table}");
}

#[test]
fn toy_training_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    stdout(&hmer(&["synth", p(&corpus), "--count", "4"]));
    let train = dir.path().join("train.toml");
    std::fs::write(&train, "epochs = 2\nbatch_size = 4\nlr = 0.01\n").unwrap();
    let out = dir.path().join("models/dualnet.bin");
    let report = stdout(&hmer(&[
        "train-classify",
        p(&corpus),
        "--out",
        p(&out),
        "--toy",
        "--train",
        p(&train),
    ]));
    assert!(report.contains("epochs 2"), "{report}");
    load_model(&out).unwrap();
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = hmer(&["recognize", p(&dir.path().join("missing.inkml"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    stdout(&hmer(&["synth", p(dir.path()), "--count", "1"]));
    let o = hmer(&[
        "recognize",
        p(&dir.path().join("synth_0000.inkml")),
        "--model-dir",
        p(&dir.path().join("none")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = hmer(&[
        "train-correct",
        p(dir.path()),
        "--out",
        p(&dir.path().join("c.bin")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--classifier"));
}
