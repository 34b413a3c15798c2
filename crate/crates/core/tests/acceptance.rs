//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trgpt::bpe::{corpus_stats, train_bpe, train_bpe_with, TrainOptions};
use trgpt::corpus::ArticleRecord;
use trgpt::data::{split_corpus, Batch, SplitSpec, TokenShard};
use trgpt::gpt::{GptConfig, GptParams, Sampling};
use trgpt::instruct::{
    load_dataset, pack_finetune, render_prompt, render_prompt_parts, translate_file, write_dataset, FileTranslator,
    IdentityTranslator, InstructError, InstructionRecord, PackOptions, TranslateError, TranslateOptions, Translator,
};
use trgpt::train::{adamw_update, AdamWConfig, LrSchedule, TrainConfig, Trainer};

use common::{dump_xml, naive_encode, random_bytes, turkish_corpus};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn bpe_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    let mut check = |model: &trgpt::bpe::TokenizerModel, bytes: &[u8]| -> Result<(), String> {
        let ids = model.encode_bytes(bytes);
        let reference = naive_encode(model.merges(), bytes);
        ensure(ids == reference, || format!("encode differs on {bytes:?}: {ids:?} vs {reference:?}"))?;
        let back = model.decode_bytes(&ids).map_err(|e| e.to_string())?;
        ensure(back == bytes, || format!("decode(encode(x)) != x for {bytes:?}"))?;
        checked += 1;
        Ok(())
    };

    let fixture = train_bpe(["aaabdaaabac"], 259).map_err(|e| e.to_string())?;
    ensure(fixture.merges() == [(97, 97), (97, 98), (256, 257)], || format!("{:?}", fixture.merges()))?;
    ensure(fixture.encode("aaabdaaabac") == [258, 100, 258, 97, 99], || "aaabdaaabac encoding".into())?;
    check(&fixture, b"aaabdaaabac")?;
    let abab = train_bpe(["abab"], 257).map_err(|e| e.to_string())?;
    ensure(abab.encode("abab") == [256, 256], || "abab encoding".into())?;
    check(&abab, b"abab")?;

    let corpus = turkish_corpus(40, 77);
    let model = train_bpe(corpus.iter(), 800).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..150 {
        let bytes = random_bytes(&mut rng, 200);
        check(&model, &bytes)?;
        check(&fixture, &bytes)?;
    }
    for text in turkish_corpus(20, 78) {
        check(&model, text.as_bytes())?;
    }
    within(Duration::from_secs(10), started)?;
    Ok(format!("{checked} strings identical to the rescan encoder in {:.1?}", started.elapsed()))
}

fn compression_monotonicity() -> Outcome {
    let corpus = turkish_corpus(100, 100);
    let small = train_bpe(corpus.iter(), 1000).map_err(|e| e.to_string())?;
    let large = train_bpe(corpus.iter(), 4000).map_err(|e| e.to_string())?;
    let s = corpus_stats(&small, corpus.clone());
    let l = corpus_stats(&large, corpus.clone());
    ensure(l.total_tokens <= s.total_tokens, || {
        format!("4k vocab gave {} tokens, 1k vocab {}", l.total_tokens, s.total_tokens)
    })?;
    Ok(format!("1k vocab {} tokens, 4k vocab {} tokens", s.total_tokens, l.total_tokens))
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let cfg = GptConfig {
        n_layer: 1,
        n_head: 1,
        d_model: 8,
        vocab_size: 16,
        context_len: 4,
        dropout: 0.0,
    };
    let mut params = GptParams::<f64>::init(&cfg, 3).map_err(|e| e.to_string())?;
    // Move every tensor off its special initial value (unit gains, zero
    // biases) so no term of the gradient vanishes by construction.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (_, t) in params.tensors_mut() {
        for x in t.data.iter_mut() {
            *x += rand::Rng::gen_range(&mut rng, -0.2..0.2);
        }
    }
    let batch = Batch {
        batch_size: 2,
        context_len: 4,
        inputs: vec![1, 7, 3, 12, 9, 9, 0, 15],
        targets: vec![7, 3, 12, 5, 9, 0, 15, 2],
    };
    let analytic = params.backward(&batch).map_err(|e| e.to_string())?.grads;
    let h = 1e-3;
    let mut worst = (0.0f64, String::new());
    let mut zero_tensors = Vec::new();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (ti, name) in names.iter().enumerate() {
        let mut probe = params.clone();
        let len = params.tensors()[ti].1.len();
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            let orig = params.tensors()[ti].1.data[i];
            probe.tensors_mut()[ti].1.data[i] = orig + h;
            let plus = probe.forward(&batch).map_err(|e| e.to_string())?.loss;
            probe.tensors_mut()[ti].1.data[i] = orig - h;
            let minus = probe.forward(&batch).map_err(|e| e.to_string())?.loss;
            probe.tensors_mut()[ti].1.data[i] = orig;
            numeric.push((plus - minus) / (2.0 * h));
        }
        let a = &analytic.tensors()[ti].1.data;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(&numeric));
        // A gradient that is identically zero (the key bias only shifts each
        // score row by a constant) has no meaningful relative error; both
        // sides must then vanish.
        let err = if scale < 1e-8 {
            zero_tensors.push(name.clone());
            norm(&diff)
        } else {
            norm(&diff) / scale
        };
        ensure(err < 1e-4, || format!("{name}: relative error {err:.3e}"))?;
        if err > worst.0 {
            worst = (err, name.clone());
        }
    }
    within(Duration::from_secs(60), started)?;
    Ok(format!(
        "{} tensors, worst relative error {:.2e} ({}), identically zero: {:?}",
        names.len(),
        worst.0,
        worst.1,
        zero_tensors
    ))
}

fn causality() -> Outcome {
    let cfg = GptConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 16,
        vocab_size: 32,
        context_len: 8,
        dropout: 0.0,
    };
    let params = GptParams::<f32>::init(&cfg, 8).map_err(|e| e.to_string())?;
    let tokens: Vec<u32> = vec![3, 14, 15, 9, 26, 5, 3, 5];
    let base = params.logits(&tokens, 1, 8).map_err(|e| e.to_string())?;
    let v = cfg.vocab_size;
    for t in 0..8 {
        let mut changed = tokens.clone();
        changed[t] = (changed[t] + 1) % 32;
        let out = params.logits(&changed, 1, 8).map_err(|e| e.to_string())?;
        for pos in 0..8 {
            let same = base[pos * v..(pos + 1) * v] == out[pos * v..(pos + 1) * v];
            if pos < t {
                ensure(same, || format!("token {t} changed logits at earlier position {pos}"))?;
            } else if pos == t {
                ensure(!same, || format!("token {t} did not affect its own position"))?;
            }
        }
    }
    Ok("8 perturbations, earlier positions bitwise unchanged".into())
}

fn uniform_logit_loss() -> Outcome {
    let cfg = GptConfig {
        n_layer: 2,
        n_head: 2,
        d_model: 8,
        vocab_size: 50,
        context_len: 6,
        dropout: 0.0,
    };
    let params = GptParams::<f32>::zeros(&cfg).map_err(|e| e.to_string())?;
    let batch = Batch {
        batch_size: 2,
        context_len: 6,
        inputs: vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        targets: vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13],
    };
    let out = params.forward(&batch).map_err(|e| e.to_string())?;
    let err = (f64::from(out.loss) - 50f64.ln()).abs();
    ensure(out.logits.iter().all(|&l| l == 0.0), || "logits not exactly zero".into())?;
    ensure(err < 1e-6, || format!("loss {} vs ln 50, error {err:.2e}", out.loss))?;
    Ok(format!("loss {} = ln 50 within {err:.1e}", out.loss))
}

fn adamw_and_schedule() -> Outcome {
    let (mut theta, mut m, mut v) = ([1.0f64], [0.0f64], [0.0f64]);
    adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, 0.1, &AdamWConfig::default(), true);
    let hand = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8) + 0.1);
    ensure((theta[0] - hand).abs() < 1e-9, || format!("theta' {} vs {hand}", theta[0]))?;
    ensure((theta[0] - 0.89).abs() < 1e-7, || format!("theta' {} not ≈ 0.89", theta[0]))?;

    let schedule = LrSchedule::new(6e-4, 200, 2000).map_err(|e| e.to_string())?;
    ensure(schedule.lr_at(200) == 6e-4, || format!("lr_at(warmup) = {}", schedule.lr_at(200)))?;
    ensure(schedule.lr_at(2000) == schedule.lr_min, || format!("lr_at(total) = {}", schedule.lr_at(2000)))?;
    let mid = schedule.lr_at(200 + 900);
    let expected = (schedule.lr_max + schedule.lr_min) / 2.0;
    ensure((mid - expected).abs() < 1e-12, || format!("midpoint {mid} vs {expected}"))?;
    Ok(format!("theta' = {:.10}, midpoint lr = {mid:.6e}", theta[0]))
}

fn training_smoke() -> Outcome {
    let started = Instant::now();
    let text = "merhaba dünya, bugün hava güzel. ".repeat(400);
    let tokenizer = train_bpe_with([text.as_str()], 264, TrainOptions { reserve_separator: true })
        .map_err(|e| e.to_string())?;
    let tokens = tokenizer.encode(&text);
    let vocab = tokenizer.vocab_size() as u32;
    let shard = TokenShard::new(vocab, tokenizer.separator(), tokens.clone()).map_err(|e| e.to_string())?;

    let mut cfg = TrainConfig::desk(vocab as usize);
    cfg.model = GptConfig {
        n_layer: 1,
        n_head: 2,
        d_model: 32,
        vocab_size: vocab as usize,
        context_len: 16,
        dropout: 0.0,
    };
    cfg.schedule = LrSchedule::new(1e-2, 20, 200).map_err(|e| e.to_string())?;
    cfg.batch_size = 8;
    cfg.eval_iters = 4;
    cfg.eval_interval = 50;
    let mut trainer = Trainer::new(cfg, &shard, None).map_err(|e| e.to_string())?;
    let (initial, _) = trainer.estimate().map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = trainer.run(200, dir.path()).map_err(|e| e.to_string())?;
    let last = summary.final_train_loss;
    ensure(last < 0.5 * initial, || format!("loss {initial:.3} -> {last:.3}"))?;

    let prompt = &tokens[..16];
    let wanted = &tokens[16..16 + 64];
    let got = trainer
        .params()
        .generate(prompt, 64, &Sampling::greedy())
        .map_err(|e| e.to_string())?;
    let hits = got.iter().zip(wanted).filter(|(a, b)| a == b).count();
    let accuracy = hits as f64 / wanted.len() as f64;
    ensure(accuracy > 0.95, || format!("greedy accuracy {accuracy:.3}"))?;
    within(Duration::from_secs(300), started)?;
    Ok(format!(
        "loss {initial:.3} -> {last:.3}, greedy accuracy {:.1}% in {:.1?}",
        accuracy * 100.0,
        started.elapsed()
    ))
}

/// Validation ids of records 1..=10000 at val_fraction 0.001, seed 1337.
const SPLIT_SNAPSHOT: &[u64] = &[364, 749, 1505, 3065, 3112, 3436, 6422, 7130, 8740];

fn split_contract() -> Outcome {
    let records: Vec<ArticleRecord> = (1..=10_000u64).map(|id| ArticleRecord::new(id, format!("t{id}"), "x")).collect();
    let spec = SplitSpec::new(0.001, 1337).map_err(|e| e.to_string())?;
    let (train, val) = split_corpus(records.clone(), &spec);
    let (train2, val2) = split_corpus(records, &spec);
    let val_ids: Vec<u64> = val.iter().map(|r| r.id).collect();
    let train_ids: Vec<u64> = train.iter().map(|r| r.id).collect();
    ensure(val_ids == val2.iter().map(|r| r.id).collect::<Vec<_>>(), || "val differs between runs".into())?;
    ensure(train_ids == train2.iter().map(|r| r.id).collect::<Vec<_>>(), || "train differs between runs".into())?;
    ensure(train.len() + val.len() == 10_000, || "partition not exhaustive".into())?;
    ensure(val_ids.iter().all(|id| !train_ids.contains(id)), || "partition not disjoint".into())?;
    ensure(val_ids == SPLIT_SNAPSHOT, || format!("val ids {val_ids:?} differ from the snapshot"))?;
    Ok(format!("{} val / {} train, matches snapshot", val.len(), train.len()))
}

fn paper_records() -> Vec<InstructionRecord> {
    vec![
        InstructionRecord::new(
            "Sağlıklı kalmak için 3 ipucu verin.",
            "",
            "1. Dengeli bir diyet yiyin ve bol miktarda meyve ve sebze içerdiğinizden emin olun. 2. Vücudunuzu aktif ve güçlü tutmak için düzenli olarak egzersiz yapın. 3. Yeterli uyku alın ve tutarlı bir uyku programı tutun.",
        ),
        InstructionRecord::new("Üç ana renk nedir?", "", "Üç ana renk kırmızı, mavi ve sarıdır."),
    ]
}

/// Delegates to `inner` until `budget` calls have been made, then reports
/// itself unavailable.
struct Outage<'a, T> {
    inner: &'a T,
    budget: std::sync::atomic::AtomicUsize,
}

impl<T: Translator> Translator for Outage<'_, T> {
    fn translate(&self, text: &str, s: &str, t: &str) -> Result<String, TranslateError> {
        use std::sync::atomic::Ordering;
        let left = self.budget.load(Ordering::SeqCst);
        if left == 0 {
            return Err(TranslateError::Unavailable("connection refused".into()));
        }
        self.budget.store(left - 1, Ordering::SeqCst);
        self.inner.translate(text, s, t)
    }
}

fn instruction_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = dir.path().join("tr.jsonl");
    std::fs::write(
        &src,
        paper_records().iter().map(|r| r.to_json_line() + "\n").collect::<String>(),
    )
    .map_err(|e| e.to_string())?;

    let loaded = load_dataset(&src).map_err(|e| e.to_string())?;
    ensure(loaded.records == paper_records() && loaded.rejects.is_empty(), || "load mismatch".into())?;
    for r in &loaded.records {
        ensure(r.check().is_ok(), || format!("record invalid: {r:?}"))?;
        ensure(!render_prompt(r).contains("### Girdi:"), || "empty girdi rendered an input section".into())?;
    }

    let corpus: Vec<String> = loaded.records.iter().map(render_prompt).collect();
    let tokenizer = train_bpe_with(corpus.iter(), 400, TrainOptions { reserve_separator: true })
        .map_err(|e| e.to_string())?;
    let opts = PackOptions {
        epochs: 1,
        ..PackOptions::new(1024)
    };
    let pack = pack_finetune(&loaded.records, &tokenizer, &opts).map_err(|e| e.to_string())?;
    for ex in &pack.examples {
        let record = loaded
            .records
            .iter()
            .find(|r| {
                let (p, _) = render_prompt_parts(r);
                ex.token_ids.starts_with(&tokenizer.encode(&p))
            })
            .ok_or("example matches no record")?;
        let (p, resp) = render_prompt_parts(record);
        let prompt_len = tokenizer.encode(&p).len();
        let response_len = tokenizer.encode(&resp).len() + 1;
        let zeros = ex.loss_mask.iter().take_while(|&&m| m == 0).count();
        ensure(zeros == prompt_len, || format!("{zeros} masked tokens, prompt has {prompt_len}"))?;
        let ones: usize = ex.loss_mask.iter().map(|&m| usize::from(m)).sum();
        ensure(ones == response_len, || format!("mask sum {ones}, response has {response_len}"))?;
    }

    let same = dir.path().join("identity.jsonl");
    translate_file(&src, &same, &IdentityTranslator, "tr", "tr", &quick()).map_err(|e| e.to_string())?;
    ensure(
        std::fs::read(&same).map_err(|e| e.to_string())? == std::fs::read(&src).map_err(|e| e.to_string())?,
        || "identity translation changed bytes".into(),
    )?;

    let english = [
        InstructionRecord::new("Give three tips for staying healthy.", "", "1. Eat a balanced diet."),
        InstructionRecord::new("What are the three primary colors?", "", "The three primary colors are red, blue and yellow."),
    ];
    let en = dir.path().join("en.jsonl");
    write_dataset(&en, &english).map_err(|e| e.to_string())?;
    let table = [
        ("Give three tips for staying healthy.", "Sağlıklı kalmak için 3 ipucu verin."),
        ("1. Eat a balanced diet.", "1. Dengeli bir diyet yiyin."),
        ("What are the three primary colors?", "Üç ana renk nedir?"),
        ("The three primary colors are red, blue and yellow.", "Üç ana renk kırmızı, mavi ve sarıdır."),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let client = FileTranslator::new(table);
    let whole = dir.path().join("whole.jsonl");
    translate_file(&en, &whole, &client, "en", "tr", &quick()).map_err(|e| e.to_string())?;
    let resumed = dir.path().join("resumed.jsonl");
    let flaky = Outage {
        inner: &client,
        budget: 2.into(),
    };
    match translate_file(&en, &resumed, &flaky, "en", "tr", &quick()) {
        Err(InstructError::Interrupted { next_index: 1, .. }) => {}
        other => return Err(format!("expected an interruption at record 1, got {other:?}")),
    }
    translate_file(&en, &resumed, &client, "en", "tr", &quick()).map_err(|e| e.to_string())?;
    let whole_bytes = std::fs::read(&whole).map_err(|e| e.to_string())?;
    ensure(whole_bytes == std::fs::read(&resumed).map_err(|e| e.to_string())?, || {
        "resumed output differs".into()
    })?;
    ensure(String::from_utf8_lossy(&whole_bytes).contains("Üç ana renk nedir?"), || "mapping not applied".into())?;
    Ok("2 records packed with exact masks; identity and resumed runs byte-identical".into())
}

fn quick() -> TranslateOptions {
    TranslateOptions {
        max_attempts: 3,
        backoff_ms: 0,
        concurrency: 1,
    }
}

const PIPELINE_CONFIG: &str = r#"
[tokenizer]
vocab_size = 600

[split]
val_fraction = 0.1

[model]
n_layer = 1
n_head = 2
d_model = 16
context_len = 16

[schedule]
lr_max = 0.003
warmup_steps = 5
total_steps = 40

[trainer]
batch_size = 4
log_interval = 5
eval_interval = 10
eval_iters = 2
"#;

fn run_pipeline(root: &Path, threads: &str) -> Result<(), String> {
    let dump = root.join("dump.xml");
    std::fs::write(&dump, dump_xml(&turkish_corpus(60, 11))).map_err(|e| e.to_string())?;
    let config = root.join("pipeline.toml");
    std::fs::write(&config, PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 4] = [
        vec!["ingest".into(), "--dump".into(), p("dump.xml"), "--out".into(), p("corpus.jsonl")],
        vec!["tokenizer".into(), "train".into(), "--corpus".into(), p("corpus.jsonl"), "--out".into(), p("tok.bpe")],
        vec!["pack".into(), "--corpus".into(), p("corpus.jsonl"), "--model".into(), p("tok.bpe"), "--out-dir".into(), p("shards")],
        vec!["train".into(), "--data-dir".into(), p("shards"), "--out-dir".into(), p("run"), "--steps".into(), "30".into()],
    ];
    for args in steps {
        let mut full = vec!["trgpt".to_string(), "--config".into(), p("pipeline.toml"), "--threads".into(), threads.into()];
        full.extend(args.iter().cloned());
        let code = trgpt::cli::run(full, &mut std::io::sink());
        ensure(code == 0, || format!("`{}` exited with {code}", args.join(" ")))?;
    }
    Ok(())
}

fn end_to_end_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(a.path(), "1")?;
    run_pipeline(b.path(), "4")?;
    let files = ["corpus.jsonl", "tok.bpe", "shards/train.bin", "shards/val.bin", "run/ckpt.bin", "run/log.csv"];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    let log = std::fs::read_to_string(a.path().join("run/log.csv")).map_err(|e| e.to_string())?;
    Ok(format!("{} artifacts bitwise identical across 1 and 4 threads ({} log rows)", files.len(), log.lines().count() - 1))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("BPE oracle equivalence", bpe_oracle_equivalence),
        ("compression monotonicity", compression_monotonicity),
        ("gradient check", gradient_check),
        ("causality", causality),
        ("uniform-logit loss", uniform_logit_loss),
        ("AdamW and schedule hand values", adamw_and_schedule),
        ("training smoke", training_smoke),
        ("split contract", split_contract),
        ("instruction round trip", instruction_round_trip),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
