//! Drives the `trgpt` binary end to end.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{dump_xml, turkish_corpus};
use trgpt::corpus::ArticleRecord;
use trgpt::instruct::InstructionRecord;
use trgpt::train::read_log;

const CONFIG: &str = r#"
[tokenizer]
vocab_size = 500

[split]
val_fraction = 0.1

[model]
n_layer = 1
n_head = 2
d_model = 32
context_len = 16

[schedule]
lr_max = 0.005
warmup_steps = 10
total_steps = 120

[trainer]
batch_size = 8
log_interval = 10
eval_interval = 20
eval_iters = 2
"#;

fn trgpt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trgpt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = trgpt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(trgpt(dir.path(), &[]).status.code(), Some(2));
    assert_eq!(trgpt(dir.path(), &["ingest", "--bogus"]).status.code(), Some(2));
    assert_eq!(trgpt(dir.path(), &["train", "--steps", "many"]).status.code(), Some(2));
    assert_eq!(trgpt(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = trgpt(dir.path(), &["ingest", "--dump", "nope.xml", "--out", "c.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());
    std::fs::write(dir.path().join("x.jsonl"), "{not json\n").unwrap();
    let bad = trgpt(dir.path(), &["tokenizer", "train", "--corpus", "x.jsonl", "--out", "t.bpe"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[model]\nn_layers = 3\n").unwrap();
    assert_eq!(trgpt(dir.path(), &["--config", "bad.toml", "version"]).status.code(), Some(2));
}

#[test]
fn version_lists_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["version"]);
    for tag in ["TOKSHRD1", "GPTCKPT1", "TOKFTEX1", "bpe-v1", "tr-alpaca-v1"] {
        assert!(out.contains(tag), "{out}");
    }
}

#[test]
fn full_pipeline_with_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("dump.xml"), dump_xml(&turkish_corpus(80, 5))).unwrap();
    std::fs::write(d.join("cfg.toml"), CONFIG).unwrap();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "cfg.toml"];
        full.extend_from_slice(args);
        ok(d, &full)
    };

    let ingest: serde_json::Value =
        serde_json::from_str(&run(&["ingest", "--dump", "dump.xml", "--out", "corpus.jsonl"])).unwrap();
    assert_eq!(ingest["records_emitted"], 80, "{ingest}");
    run(&["tokenizer", "train", "--corpus", "corpus.jsonl", "--out", "tok.bpe"]);
    let stats: serde_json::Value =
        serde_json::from_str(&run(&["stats", "--model", "tok.bpe", "--corpus", "corpus.jsonl"])).unwrap();
    assert!(stats["total_tokens"].as_u64().unwrap() > 0, "{stats}");
    run(&["pack", "--corpus", "corpus.jsonl", "--model", "tok.bpe", "--out-dir", "shards"]);

    run(&["train", "--data-dir", "shards", "--out-dir", "whole", "--steps", "120"]);
    run(&["train", "--data-dir", "shards", "--out-dir", "split", "--steps", "60"]);
    run(&["train", "--data-dir", "shards", "--out-dir", "split", "--steps", "120", "--resume", "split/ckpt.bin"]);
    for f in ["ckpt.bin", "log.csv"] {
        assert_eq!(
            std::fs::read(d.join("whole").join(f)).unwrap(),
            std::fs::read(d.join("split").join(f)).unwrap(),
            "{f} differs after resume"
        );
    }

    let rows = read_log(&d.join("whole/log.csv")).unwrap();
    let first = rows.first().unwrap().train_loss;
    let last = rows.last().unwrap().train_loss;
    assert!(last < first, "loss did not decrease: {first} -> {last}");
    assert!(rows.iter().any(|r| r.val_loss.is_some()));

    run(&["plot-loss", "--log", "whole/log.csv", "--out", "loss.svg"]);
    assert!(std::fs::read_to_string(d.join("loss.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn instruct_translate_and_pack() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let records = [
        InstructionRecord::new("Üç ana renk nedir?", "", "Kırmızı, mavi ve sarı."),
        InstructionRecord::new("Bu cümleyi çevir.", "Merhaba dünya", "Hello world"),
    ];
    let text: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(d.join("tr.jsonl"), &text).unwrap();
    std::fs::write(d.join("corpus.txt"), text.repeat(5)).unwrap();

    ok(d, &["instruct", "translate", "--in", "tr.jsonl", "--out", "same.jsonl", "--adapter", "identity"]);
    assert_eq!(std::fs::read_to_string(d.join("same.jsonl")).unwrap(), text);
    assert!(!d.join("same.jsonl.cursor").exists());

    std::fs::write(
        d.join("corpus.jsonl"),
        format!("{}\n", serde_json::to_string(&ArticleRecord::new(1, "t", text.repeat(5))).unwrap()),
    )
    .unwrap();
    ok(d, &["tokenizer", "train", "--corpus", "corpus.jsonl", "--vocab", "300", "--out", "tok.bpe"]);
    let report: serde_json::Value = serde_json::from_str(&ok(
        d,
        &["instruct", "pack", "--in", "same.jsonl", "--model", "tok.bpe", "--ctx", "256", "--epochs", "2", "--out", "ft.bin"],
    ))
    .unwrap();
    assert_eq!(report["examples"], 4, "{report}");
    assert!(std::fs::read(d.join("ft.bin")).unwrap().starts_with(b"TOKFTEX1"));
}
