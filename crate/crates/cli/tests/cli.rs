use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[data]
pairs = 400
classifier_sentences = 300

[classifier]
embed_dim = 8
hidden = 8
epochs = 3

[model]
hidden = 12
embed_dim = 8
emotion_dim = 6
attention_dim = 8

[pretrain]
max_epochs = 1

[train]
max_epochs = 1

[decode]
beam = 2
max_len = 5

[eval]
max_posts = 10
"#;

fn ecm(config: &Path, work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecm"))
        .arg("--config")
        .arg(config)
        .arg("--workdir")
        .arg(work)
        .args(args)
        .env_remove("ECM_CHECKPOINT")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let work = dir.path().join("run");

    ok(ecm(&config, &work, &["gen-data", "--seed", "7"]));
    let first = std::fs::read(work.join("dialogues.jsonl")).unwrap();
    let other = dir.path().join("again");
    ok(ecm(&config, &work, &["gen-data", "--seed", "7", "--out", other.to_str().unwrap()]));
    assert_eq!(first, std::fs::read(other.join("dialogues.jsonl")).unwrap());
    assert_eq!(std::fs::read(work.join("sentences.jsonl")).unwrap(), std::fs::read(other.join("sentences.jsonl")).unwrap());

    let report: Value = serde_json::from_str(&ok(ecm(&config, &work, &["train-classifier"]))).unwrap();
    assert!(report["neural"]["accuracy"].as_f64().is_some() && report["lexicon"]["accuracy"].as_f64().is_some());
    let table = ok(ecm(&config, &work, &["annotate"]));
    assert!(table.contains("Total") && table.contains("400"));
    ok(ecm(&config, &work, &["pretrain"]));
    ok(ecm(&config, &work, &["train", "--variant", "ecm"]));
    assert!(work.join("model.ckpt").exists());
    let log = std::fs::read_to_string(work.join("train.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let eval: Value = serde_json::from_str(&ok(ecm(&config, &work, &["evaluate"]))).unwrap();
    for field in ["perplexity", "emotion_accuracy", "per_category", "neural_accuracy", "alpha_on_emotion_words", "posts", "generations", "empty_generations", "test_examples"] {
        assert!(eval.get(field).is_some(), "missing {field}");
    }
    assert_eq!(eval["generations"].as_u64().unwrap(), 6 * eval["posts"].as_u64().unwrap());

    let eip: Value = serde_json::from_str(&ok(ecm(&config, &work, &["eip", "--csv", work.join("eip.csv").to_str().unwrap()]))).unwrap();
    assert_eq!(eip["values"].as_array().unwrap().len(), 6);
    assert_eq!(std::fs::read_to_string(work.join("eip.csv")).unwrap().lines().count(), 7);

    let chat = ok(ecm(&config, &work, &["chat", "--emotion", "sad", "--trace", "my dog is here", "the rain again"]));
    let lines: Vec<Value> = chat.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["result"]["emotion"], "Sad");
    assert_eq!(lines[0]["result"]["trace"].as_array().unwrap().len(), lines[0]["result"]["tokens"].as_array().unwrap().len());
    let all = ok(ecm(&config, &work, &["generate", "my dog is here"]));
    let v: Value = serde_json::from_str(all.trim()).unwrap();
    assert_eq!(v["result"].as_object().unwrap().len(), 6);

    let missing = Command::new(env!("CARGO_BIN_EXE_ecm"))
        .args(["--config", config.to_str().unwrap(), "--workdir", work.to_str().unwrap(), "chat", "hello"])
        .env("ECM_CHECKPOINT", dir.path().join("nope.ckpt"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    let err: Value = serde_json::from_str(err.trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("nope.ckpt"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, SMALL).unwrap();
    assert_eq!(ecm(&config, dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ecm(&config, dir.path(), &["chat", "--beam", "many", "x"]).status.code(), Some(2));
    let out = ecm(&config, dir.path(), &["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(serde_json::from_slice::<Value>(&out.stderr).unwrap()["error"].is_string());

    std::fs::write(&config, "[model]\nhiden = 3\n").unwrap();
    assert_eq!(ecm(&config, dir.path(), &["gen-data"]).status.code(), Some(1));
}
