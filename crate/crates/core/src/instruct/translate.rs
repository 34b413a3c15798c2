use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{io_err, load_dataset, InstructError, InstructionRecord, Reject};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TranslateError {
    /// The backend refused this text; retrying will not help.
    #[error("translation rejected: {0}")]
    Rejected(String),
    /// Transient failure; worth retrying.
    #[error("translator unavailable: {0}")]
    Unavailable(String),
}

/// Machine-translation backend.
pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError>;

    fn translate_batch(&self, texts: &[&str], source: &str, target: &str) -> Result<Vec<String>, TranslateError> {
        texts.iter().map(|t| self.translate(t, source, target)).collect()
    }

    fn health_check(&self) -> Result<(), TranslateError> {
        Ok(())
    }
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslateError> {
        Ok(text.to_string())
    }
}

pub struct UppercaseTranslator;

impl Translator for UppercaseTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslateError> {
        Ok(text.to_uppercase())
    }
}

/// Looks texts up in a JSON object mapping source text to translation.
pub struct FileTranslator {
    table: HashMap<String, String>,
}

impl FileTranslator {
    pub fn new(table: HashMap<String, String>) -> Self {
        FileTranslator { table }
    }

    pub fn load(path: &Path) -> Result<Self, InstructError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let table = serde_json::from_str(&text).map_err(|e| InstructError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Self::new(table))
    }
}

impl Translator for FileTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslateError> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| TranslateError::Rejected(format!("no entry for {text:?}")))
    }
}

/// Runs `program args...` once per text with the language pair in
/// `SOURCE_LANG` and `TARGET_LANG`, feeding the text on stdin and reading
/// the translation from stdout.
pub struct CommandTranslator {
    program: String,
    args: Vec<String>,
}

impl CommandTranslator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandTranslator {
            program: program.into(),
            args,
        }
    }
}

impl Translator for CommandTranslator {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .env("SOURCE_LANG", source)
            .env("TARGET_LANG", target)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| TranslateError::Unavailable(format!("cannot start {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input = text.to_string();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let mut out = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut out)
            .map_err(|e| TranslateError::Unavailable(e.to_string()))?;
        let _ = writer.join();
        let status = child.wait().map_err(|e| TranslateError::Unavailable(e.to_string()))?;
        if !status.success() {
            return Err(TranslateError::Unavailable(format!("{} exited with {status}", self.program)));
        }
        let out = String::from_utf8(out).map_err(|_| TranslateError::Rejected("output is not UTF-8".into()))?;
        Ok(out.strip_suffix('\n').unwrap_or(&out).to_string())
    }

    fn health_check(&self) -> Result<(), TranslateError> {
        self.translate("", "en", "en").map(|_| ())
    }
}

/// Builds an adapter from `identity`, `uppercase`, `file:<path>` or
/// `command:<program> [args...]`.
pub fn adapter_from_spec(spec: &str) -> Result<Box<dyn Translator>, InstructError> {
    if let Some(path) = spec.strip_prefix("file:") {
        return Ok(Box::new(FileTranslator::load(Path::new(path))?));
    }
    if let Some(cmd) = spec.strip_prefix("command:") {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| InstructError::Config("command adapter needs a program".into()))?;
        return Ok(Box::new(CommandTranslator::new(program, parts.collect())));
    }
    match spec {
        "identity" => Ok(Box::new(IdentityTranslator)),
        "uppercase" => Ok(Box::new(UppercaseTranslator)),
        other => Err(InstructError::Config(format!(
            "unknown adapter {other:?}; use identity, uppercase, file:<path> or command:<program>"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslateOptions {
    pub max_attempts: u32,
    /// First retry waits this long, doubling after each further failure.
    pub backoff_ms: u64,
    /// Records translated concurrently.
    pub concurrency: usize,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            max_attempts: 3,
            backoff_ms: 500,
            concurrency: 4,
        }
    }
}

enum Outcome {
    Done(InstructionRecord),
    Failed(String),
    Unavailable(String),
}

fn with_retry(
    client: &dyn Translator,
    texts: &[&str],
    source: &str,
    target: &str,
    opts: &TranslateOptions,
) -> Result<Vec<String>, TranslateError> {
    let mut attempt = 0;
    loop {
        match client.translate_batch(texts, source, target) {
            Err(TranslateError::Unavailable(msg)) => {
                attempt += 1;
                if attempt >= opts.max_attempts.max(1) {
                    return Err(TranslateError::Unavailable(msg));
                }
                let wait = opts.backoff_ms.saturating_mul(1 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(wait));
            }
            other => return other,
        }
    }
}

fn translate_record(
    record: &InstructionRecord,
    client: &dyn Translator,
    source: &str,
    target: &str,
    opts: &TranslateOptions,
) -> Outcome {
    let fields = [&record.komut, &record.girdi, &record.cikti];
    let texts: Vec<&str> = fields.iter().filter(|f| !f.is_empty()).map(|f| f.as_str()).collect();
    let translated = match with_retry(client, &texts, source, target, opts) {
        Ok(t) if t.len() == texts.len() => t,
        Ok(t) => return Outcome::Failed(format!("translator returned {} texts for {}", t.len(), texts.len())),
        Err(TranslateError::Rejected(msg)) => return Outcome::Failed(msg),
        Err(TranslateError::Unavailable(msg)) => return Outcome::Unavailable(msg),
    };
    let mut it = translated.into_iter();
    let mut next = |f: &String| if f.is_empty() { String::new() } else { it.next().expect("counted") };
    let out = InstructionRecord {
        komut: next(fields[0]),
        girdi: next(fields[1]),
        cikti: next(fields[2]),
    };
    match out.check() {
        Ok(()) => Outcome::Done(out),
        Err(reason) => Outcome::Failed(format!("translation left the record invalid: {reason}")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TranslateReport {
    pub records: Vec<InstructionRecord>,
    pub failures: Vec<Reject>,
}

/// Translates `records[start..]` in windows of `opts.concurrency`, calling
/// `sink` for each result in input order. Stops at the first record whose
/// client stays unavailable after all retries.
fn drive(
    records: &[InstructionRecord],
    start: usize,
    client: &dyn Translator,
    source: &str,
    target: &str,
    opts: &TranslateOptions,
    mut sink: impl FnMut(usize, Result<InstructionRecord, String>) -> Result<(), InstructError>,
) -> Result<(), InstructError> {
    let window = opts.concurrency.max(1);
    let mut index = start;
    while index < records.len() {
        let end = (index + window).min(records.len());
        let outcomes: Vec<Outcome> = records[index..end]
            .par_iter()
            .map(|r| translate_record(r, client, source, target, opts))
            .collect();
        for outcome in outcomes {
            match outcome {
                Outcome::Done(r) => sink(index, Ok(r))?,
                Outcome::Failed(reason) => sink(index, Err(reason))?,
                Outcome::Unavailable(message) => {
                    return Err(InstructError::Interrupted {
                        next_index: index,
                        message,
                    })
                }
            }
            index += 1;
        }
    }
    Ok(())
}

/// In-memory translation. Output order follows input order and
/// `records.len() + failures.len()` equals the input length.
pub fn translate_dataset(
    records: &[InstructionRecord],
    client: &dyn Translator,
    source: &str,
    target: &str,
    opts: &TranslateOptions,
) -> Result<TranslateReport, InstructError> {
    client
        .health_check()
        .map_err(|e| InstructError::Unhealthy(e.to_string()))?;
    let mut report = TranslateReport {
        records: Vec::new(),
        failures: Vec::new(),
    };
    drive(records, 0, client, source, target, opts, |index, r| {
        match r {
            Ok(rec) => report.records.push(rec),
            Err(reason) => report.failures.push(Reject { index, reason }),
        }
        Ok(())
    })?;
    Ok(report)
}

/// Progress marker stored next to the output while a run is incomplete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Cursor {
    next_index: usize,
    out_bytes: u64,
    failure_bytes: u64,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cursor_path(out: &Path) -> PathBuf {
    sibling(out, ".cursor")
}

pub fn failures_path(out: &Path) -> PathBuf {
    sibling(out, ".failures.jsonl")
}

#[derive(Debug, Clone, Serialize)]
pub struct TranslateFileReport {
    pub total: usize,
    pub resumed_from: usize,
    pub translated: usize,
    pub failed: usize,
    pub rejected_on_load: usize,
    pub failures_file: PathBuf,
}

fn open_truncated(path: &Path, len: u64) -> Result<File, InstructError> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(path)
        .map_err(io_err(path))?;
    file.set_len(len).map_err(io_err(path))?;
    let mut file = file;
    use std::io::Seek;
    file.seek(std::io::SeekFrom::End(0)).map_err(io_err(path))?;
    Ok(file)
}

fn write_cursor(path: &Path, cursor: &Cursor) -> Result<(), InstructError> {
    let tmp = sibling(path, ".tmp");
    std::fs::write(&tmp, serde_json::to_vec(cursor).expect("plain struct")).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Translates a dataset file into canonical JSON lines at `out`. Failed
/// records go to `<out>.failures.jsonl`. Progress is recorded in
/// `<out>.cursor` after every record; if that file exists the run
/// continues where the previous one stopped, and it is removed on success.
pub fn translate_file(
    input: &Path,
    out: &Path,
    client: &dyn Translator,
    source: &str,
    target: &str,
    opts: &TranslateOptions,
) -> Result<TranslateFileReport, InstructError> {
    let dataset = load_dataset(input)?;
    client
        .health_check()
        .map_err(|e| InstructError::Unhealthy(e.to_string()))?;
    let cursor_file = cursor_path(out);
    let fail_file = failures_path(out);
    let mut cursor = if cursor_file.exists() {
        let bytes = std::fs::read(&cursor_file).map_err(io_err(&cursor_file))?;
        serde_json::from_slice(&bytes).map_err(|e| InstructError::Parse {
            path: cursor_file.clone(),
            message: e.to_string(),
        })?
    } else {
        Cursor {
            next_index: 0,
            out_bytes: 0,
            failure_bytes: 0,
        }
    };
    if cursor.next_index > dataset.records.len() {
        return Err(InstructError::Config(format!(
            "cursor points past the end of {}",
            input.display()
        )));
    }
    let resumed_from = cursor.next_index;
    let mut out_w = open_truncated(out, cursor.out_bytes)?;
    let mut fail_w = open_truncated(&fail_file, cursor.failure_bytes)?;
    write_cursor(&cursor_file, &cursor)?;

    let mut translated = 0;
    let mut failed = 0;
    drive(&dataset.records, resumed_from, client, source, target, opts, |index, result| {
        match result {
            Ok(rec) => {
                let line = rec.to_json_line() + "\n";
                out_w.write_all(line.as_bytes()).map_err(io_err(out))?;
                cursor.out_bytes += line.len() as u64;
                translated += 1;
            }
            Err(reason) => {
                let line = serde_json::to_string(&Reject { index, reason }).expect("plain struct") + "\n";
                fail_w.write_all(line.as_bytes()).map_err(io_err(&fail_file))?;
                cursor.failure_bytes += line.len() as u64;
                failed += 1;
            }
        }
        out_w.flush().map_err(io_err(out))?;
        fail_w.flush().map_err(io_err(&fail_file))?;
        cursor.next_index = index + 1;
        write_cursor(&cursor_file, &cursor)
    })?;
    std::fs::remove_file(&cursor_file).map_err(io_err(&cursor_file))?;
    Ok(TranslateFileReport {
        total: dataset.records.len(),
        resumed_from,
        translated,
        failed,
        rejected_on_load: dataset.rejects.len(),
        failures_file: fail_file,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn opts() -> TranslateOptions {
        TranslateOptions {
            max_attempts: 3,
            backoff_ms: 0,
            concurrency: 3,
        }
    }

    fn records(n: usize) -> Vec<InstructionRecord> {
        (0..n)
            .map(|i| InstructionRecord::new(format!("do {i}"), if i % 2 == 0 { String::new() } else { format!("in {i}") }, format!("out {i}")))
            .collect()
    }

    /// Fails every call after the first `budget`.
    struct Dying {
        budget: AtomicUsize,
    }

    impl Translator for Dying {
        fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslateError> {
            let left = self.budget.load(Ordering::SeqCst);
            if left == 0 {
                return Err(TranslateError::Unavailable("down".into()));
            }
            self.budget.store(left - 1, Ordering::SeqCst);
            Ok(text.to_uppercase())
        }
        fn translate_batch(&self, texts: &[&str], s: &str, t: &str) -> Result<Vec<String>, TranslateError> {
            // Whole batch succeeds or fails, so the outcome is per record.
            let out = texts.iter().map(|x| self.translate(x, s, t)).collect::<Result<Vec<_>, _>>();
            out
        }
    }

    /// Unavailable for the first two calls.
    struct Flaky {
        calls: AtomicUsize,
    }

    impl Translator for Flaky {
        fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslateError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TranslateError::Unavailable("busy".into()))
            } else {
                Ok(format!("<{text}>"))
            }
        }
    }

    #[test]
    fn uppercase_preserves_empties() {
        let input = records(100);
        let report = translate_dataset(&input, &UppercaseTranslator, "en", "tr", &opts()).unwrap();
        assert_eq!(report.records.len(), 100);
        for (a, b) in input.iter().zip(&report.records) {
            assert_eq!(b.komut, a.komut.to_uppercase());
            assert_eq!(b.girdi.is_empty(), a.girdi.is_empty());
        }
    }

    #[test]
    fn retries_transient_failures() {
        let client = Flaky {
            calls: AtomicUsize::new(0),
        };
        let one = [InstructionRecord::new("a", "", "b")];
        let report = translate_dataset(&one, &client, "en", "tr", &opts()).unwrap();
        assert_eq!(report.records[0], InstructionRecord::new("<a>", "", "<b>"));
    }

    #[test]
    fn rejections_are_reported_in_order() {
        let mut table = HashMap::new();
        table.insert("do 0".to_string(), "yap 0".to_string());
        table.insert("out 0".to_string(), "çık 0".to_string());
        let report = translate_dataset(&records(2), &FileTranslator::new(table), "en", "tr", &opts()).unwrap();
        assert_eq!(report.records, vec![InstructionRecord::new("yap 0", "", "çık 0")]);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].index, 1);
    }

    #[test]
    fn interrupted_then_resumed_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        super::super::write_dataset(&input, &records(20)).unwrap();

        let full = dir.path().join("full.jsonl");
        translate_file(&input, &full, &UppercaseTranslator, "en", "tr", &opts()).unwrap();

        let part = dir.path().join("part.jsonl");
        let dying = Dying {
            budget: AtomicUsize::new(17),
        };
        let mut o = opts();
        o.concurrency = 1;
        let err = translate_file(&input, &part, &dying, "en", "tr", &o).unwrap_err();
        assert!(matches!(err, InstructError::Interrupted { .. }), "{err}");
        assert!(cursor_path(&part).exists());
        let report = translate_file(&input, &part, &UppercaseTranslator, "en", "tr", &opts()).unwrap();
        assert!(report.resumed_from > 0);
        assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
        assert!(!cursor_path(&part).exists());
    }

    #[test]
    fn adapter_specs() {
        assert!(adapter_from_spec("identity").is_ok());
        assert!(adapter_from_spec("nope").is_err());
        let cat = adapter_from_spec("command:cat").unwrap();
        assert_eq!(cat.translate("merhaba", "en", "tr").unwrap(), "merhaba");
    }
}
