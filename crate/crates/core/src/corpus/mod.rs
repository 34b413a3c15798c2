//! Wikipedia dump ingestion: stream pages, keep main-namespace articles,
//! strip markup and write one JSON record per line.

mod clean;
mod dump;

pub use clean::{clean_markup, has_residual_markup};
pub use dump::{open_dump, parse_dump, Codec, DumpReader, RawPage};

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pages are cleaned in batches of this size on the rayon pool; output order
/// follows dump order.
const CLEAN_BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed dump XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("unsupported dump compression `.{0}` (expected .xml, .bz2 or .gz)")]
    UnsupportedCompression(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line} of {path}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// One cleaned article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: u64,
    pub title: String,
    pub body: String,
    pub char_len: usize,
}

impl ArticleRecord {
    pub fn new(id: u64, title: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let char_len = body.chars().count();
        ArticleRecord {
            id,
            title: title.into(),
            body,
            char_len,
        }
    }
}

/// Counts for one ingest run. `pages_seen` is partitioned exactly by the
/// four drop/emit counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub pages_seen: u64,
    pub redirects_dropped: u64,
    /// Pages whose cleaned body is empty or shorter than `min_chars`.
    pub empty_dropped: u64,
    pub records_emitted: u64,
    /// Pages outside the main namespace.
    pub other_dropped: u64,
    pub total_chars: u64,
}

impl IngestReport {
    pub fn is_consistent(&self) -> bool {
        self.pages_seen
            == self.redirects_dropped + self.empty_dropped + self.records_emitted + self.other_dropped
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Bodies with fewer characters are dropped. Empty bodies are always dropped.
    pub min_chars: usize,
}

enum Outcome {
    Redirect,
    OtherNamespace,
    Empty,
    Keep(ArticleRecord),
}

fn classify(page: RawPage, min_chars: usize) -> Outcome {
    if page.namespace != 0 {
        return Outcome::OtherNamespace;
    }
    if page.is_redirect {
        return Outcome::Redirect;
    }
    let record = ArticleRecord::new(page.id, page.title, clean_markup(&page.wikitext));
    if record.char_len == 0 || record.char_len < min_chars {
        Outcome::Empty
    } else {
        Outcome::Keep(record)
    }
}

/// Streams `source` through the cleaner into `sink`.
pub fn ingest_to_writer<R: BufRead, W: Write>(
    source: R,
    sink: &mut W,
    options: IngestOptions,
) -> Result<IngestReport, IngestError> {
    let io_err = |source| IngestError::Io {
        path: PathBuf::from("<sink>"),
        source,
    };
    let mut report = IngestReport::default();
    let mut pages = parse_dump(source);
    let mut batch = Vec::with_capacity(CLEAN_BATCH);
    loop {
        batch.clear();
        for page in pages.by_ref().take(CLEAN_BATCH) {
            batch.push(page?);
        }
        if batch.is_empty() {
            break;
        }
        let outcomes: Vec<Outcome> = batch
            .par_drain(..)
            .map(|page| classify(page, options.min_chars))
            .collect();
        for outcome in outcomes {
            report.pages_seen += 1;
            match outcome {
                Outcome::Redirect => report.redirects_dropped += 1,
                Outcome::OtherNamespace => report.other_dropped += 1,
                Outcome::Empty => report.empty_dropped += 1,
                Outcome::Keep(record) => {
                    report.records_emitted += 1;
                    report.total_chars += record.char_len as u64;
                    serde_json::to_writer(&mut *sink, &record)
                        .map_err(|e| io_err(std::io::Error::other(e)))?;
                    sink.write_all(b"\n").map_err(io_err)?;
                }
            }
        }
    }
    sink.flush().map_err(io_err)?;
    Ok(report)
}

/// Ingests the dump at `dump` into the record file `out`.
///
/// Output is written to a `.partial` sibling and renamed on success; on any
/// error the partial file is removed.
pub fn ingest(dump: &Path, out: &Path, options: IngestOptions) -> Result<IngestReport, IngestError> {
    let source = open_dump(dump)?;
    write_atomically(out, |writer| ingest_to_writer(source, writer, options))
}

pub(crate) fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

fn write_atomically<T>(
    out: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<T, IngestError>,
) -> Result<T, IngestError> {
    let partial = partial_path(out);
    let io_err = |source| IngestError::Io {
        path: out.to_path_buf(),
        source,
    };
    let file = File::create(&partial).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    let result = body(&mut writer).and_then(|value| {
        let file = writer.into_inner().map_err(|e| io_err(e.into_error()))?;
        file.sync_all().map_err(io_err)?;
        Ok(value)
    });
    match result {
        Ok(value) => {
            fs::rename(&partial, out).map_err(io_err)?;
            Ok(value)
        }
        Err(e) => {
            let _ = fs::remove_file(&partial);
            Err(e)
        }
    }
}

/// Iterates the records of a line-delimited record file.
pub fn read_records(path: &Path) -> Result<RecordReader, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RecordReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line: 0,
    })
}

pub struct RecordReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Iterator for RecordReader {
    type Item = Result<ArticleRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line += 1;
            let line = match line {
                Ok(line) => line,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(|e| IngestError::Record {
                path: self.path.clone(),
                line: self.line,
                message: e.to_string(),
            }));
        }
    }
}

/// Loads every record of a record file into memory.
pub fn load_records(path: &Path) -> Result<Vec<ArticleRecord>, IngestError> {
    read_records(path)?.collect()
}

/// Writes `records` as a line-delimited record file.
pub fn write_records(path: &Path, records: &[ArticleRecord]) -> Result<(), IngestError> {
    write_atomically(path, |writer| {
        for record in records {
            serde_json::to_writer(&mut *writer, record).map_err(|e| IngestError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e),
            })?;
            writer.write_all(b"\n").map_err(|source| IngestError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    })
}
