//! Instruction datasets in the komut/girdi/çıktı scheme: loading, machine
//! translation through a pluggable client, prompt rendering and masked
//! fine-tuning examples.

mod finetune;
mod template;
mod translate;

pub use finetune::{pack_finetune, FinetuneExample, FinetunePack, FinetuneShard, PackOptions, FINETUNE_MAGIC};
pub use template::{render_prompt, render_prompt_parts, TEMPLATE_VERSION};
pub use translate::{
    adapter_from_spec, translate_dataset, translate_file, CommandTranslator, FileTranslator, IdentityTranslator,
    TranslateError, TranslateFileReport, TranslateOptions, TranslateReport, Translator, UppercaseTranslator,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bpe::TokenizerError;

#[derive(Debug, Error)]
pub enum InstructError {
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{rejected} of {total} records rejected; the key scheme is probably wrong")]
    TooManyRejects { rejected: usize, total: usize },
    #[error("translation stopped at record {next_index}: {message}; rerun to resume")]
    Interrupted { next_index: usize, message: String },
    #[error("translator is not healthy: {0}")]
    Unhealthy(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> InstructError + '_ {
    move |source| InstructError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One instruction example. `girdi` may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub komut: String,
    pub girdi: String,
    #[serde(rename = "çıktı")]
    pub cikti: String,
}

impl InstructionRecord {
    pub fn new(komut: impl Into<String>, girdi: impl Into<String>, cikti: impl Into<String>) -> Self {
        InstructionRecord {
            komut: komut.into(),
            girdi: girdi.into(),
            cikti: cikti.into(),
        }
    }

    /// Problems that make the record unusable, if any.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.komut.trim().is_empty() {
            Err("missing instruction")
        } else if self.cikti.trim().is_empty() {
            Err("missing output")
        } else {
            Ok(())
        }
    }

    /// Canonical single-line JSON form.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("strings always serialize")
    }
}

/// Field names used by a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KeyScheme {
    /// `komut` / `girdi` / `çıktı`
    Turkish,
    /// `instruction` / `input` / `output`
    Alpaca,
}

impl KeyScheme {
    fn keys(self) -> [&'static str; 3] {
        match self {
            KeyScheme::Turkish => ["komut", "girdi", "çıktı"],
            KeyScheme::Alpaca => ["instruction", "input", "output"],
        }
    }

    fn detect(obj: &Map<String, Value>) -> Option<Self> {
        [KeyScheme::Turkish, KeyScheme::Alpaca]
            .into_iter()
            .find(|s| s.keys().iter().any(|k| obj.contains_key(*k)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// Zero-based position of the record in the file.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadedDataset {
    pub scheme: Option<KeyScheme>,
    pub records: Vec<InstructionRecord>,
    pub rejects: Vec<Reject>,
}

/// Largest tolerated share of rejected records.
pub const MAX_REJECT_RATIO: f64 = 0.10;

fn record_from_value(value: &Value, scheme: KeyScheme) -> Result<InstructionRecord, String> {
    let obj = value.as_object().ok_or("not an object")?;
    let [k, g, c] = scheme.keys();
    let field = |key: &str, missing: &str| -> Result<String, String> {
        match obj.get(key) {
            None | Some(Value::Null) => Err(missing.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("field {key} is not a string")),
        }
    };
    let komut = field(k, "missing instruction")?;
    let girdi = match obj.get(g) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(format!("field {g} is not a string")),
    };
    let cikti = field(c, "missing output")?;
    let record = InstructionRecord { komut, girdi, cikti };
    record.check().map_err(str::to_string)?;
    Ok(record)
}

/// Parses line-delimited or array-form JSON text.
pub fn parse_dataset(text: &str, path: &Path) -> Result<LoadedDataset, InstructError> {
    let items: Vec<Result<Value, String>> = if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(text).map_err(|e| InstructError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        values.into_iter().map(Ok).collect()
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| format!("invalid JSON: {e}")))
            .collect()
    };

    let scheme = items
        .iter()
        .find_map(|v| v.as_ref().ok().and_then(Value::as_object).and_then(KeyScheme::detect));
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let parsed = match (item, scheme) {
            (Err(e), _) => Err(e.clone()),
            (Ok(_), None) => Err("unknown key scheme".to_string()),
            (Ok(v), Some(s)) => record_from_value(v, s),
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => rejects.push(Reject { index, reason }),
        }
    }
    let total = items.len();
    if total > 0 && rejects.len() as f64 > MAX_REJECT_RATIO * total as f64 {
        return Err(InstructError::TooManyRejects {
            rejected: rejects.len(),
            total,
        });
    }
    Ok(LoadedDataset {
        scheme,
        records,
        rejects,
    })
}

pub fn load_dataset(path: &Path) -> Result<LoadedDataset, InstructError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_dataset(&text, path)
}

/// Writes records as canonical JSON lines.
pub fn write_dataset(path: &Path, records: &[InstructionRecord]) -> Result<(), InstructError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedDataset, InstructError> {
        parse_dataset(text, Path::new("mem"))
    }

    #[test]
    fn turkish_jsonl() {
        let line = r#"{"komut":"Üç ana renk nedir?","girdi":"","çıktı":"Üç ana renk kırmızı, mavi ve sarıdır."}"#;
        let ds = parse(line).unwrap();
        assert_eq!(ds.scheme, Some(KeyScheme::Turkish));
        assert_eq!(ds.records[0].girdi, "");
        assert_eq!(ds.records[0].to_json_line(), line);
    }

    #[test]
    fn alpaca_array() {
        let text = r#"[{"instruction":"Add","input":"1,2","output":"3"},{"instruction":"Hi","output":"Hello"}]"#;
        let ds = parse(text).unwrap();
        assert_eq!(ds.scheme, Some(KeyScheme::Alpaca));
        assert_eq!(ds.records[1], InstructionRecord::new("Hi", "", "Hello"));
    }

    #[test]
    fn empty_file() {
        let ds = parse("").unwrap();
        assert!(ds.records.is_empty() && ds.rejects.is_empty());
    }

    #[test]
    fn missing_output_is_rejected() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!("{{\"komut\":\"k{i}\",\"girdi\":\"\",\"çıktı\":\"c\"}}\n"));
        }
        text.push_str("{\"komut\":\"x\",\"girdi\":\"\"}\n");
        let ds = parse(&text).unwrap();
        assert_eq!(ds.records.len(), 10);
        assert_eq!(
            ds.rejects,
            vec![Reject {
                index: 10,
                reason: "missing output".into()
            }]
        );
    }

    #[test]
    fn too_many_rejects_abort() {
        let text = "{\"komut\":\"a\",\"çıktı\":\"b\"}\n{\"komut\":\"a\"}\n";
        assert!(matches!(parse(text), Err(InstructError::TooManyRejects { rejected: 1, total: 2 })));
    }

    #[test]
    fn broken_array_is_parse_error() {
        assert!(matches!(parse("[{\"komut\":"), Err(InstructError::Parse { .. })));
    }
}
