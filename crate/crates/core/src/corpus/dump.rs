//! Streaming reader for MediaWiki XML export dumps.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use bzip2::read::MultiBzDecoder;
use flate2::read::MultiGzDecoder;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::IngestError;

/// One `<page>` element as it appears in the dump, before any cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub id: u64,
    pub title: String,
    pub namespace: i64,
    pub wikitext: String,
    pub is_redirect: bool,
}

/// Compression codec of a dump file, chosen from its extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    Plain,
    Bzip2,
    Gzip,
}

impl Codec {
    pub fn from_path(path: &Path) -> Result<Codec, IngestError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            None | Some("xml") => Ok(Codec::Plain),
            Some("bz2") => Ok(Codec::Bzip2),
            Some("gz") => Ok(Codec::Gzip),
            Some(other) => Err(IngestError::UnsupportedCompression(other.to_string())),
        }
    }
}

/// Opens a dump file, wrapping it in the decompressor its extension asks for.
pub fn open_dump(path: &Path) -> Result<Box<dyn BufRead + Send>, IngestError> {
    let codec = Codec::from_path(path)?;
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    Ok(match codec {
        Codec::Plain => Box::new(reader),
        Codec::Bzip2 => Box::new(BufReader::new(MultiBzDecoder::new(reader))),
        Codec::Gzip => Box::new(BufReader::new(MultiGzDecoder::new(reader))),
    })
}

#[derive(Default)]
struct PageBuilder {
    id: Option<u64>,
    title: String,
    namespace: i64,
    wikitext: String,
    is_redirect: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    None,
    Title,
    Namespace,
    PageId,
    Text,
}

/// Pull parser over a dump. Yields pages in document order and holds at most
/// one page in memory at a time.
pub struct DumpReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    stack: Vec<Vec<u8>>,
    page: Option<PageBuilder>,
    field: Field,
    scratch: String,
    done: bool,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(source: R) -> Self {
        let reader = Reader::from_reader(source);
        DumpReader {
            reader,
            buf: Vec::with_capacity(64 * 1024),
            stack: Vec::new(),
            page: None,
            field: Field::None,
            scratch: String::new(),
            done: false,
        }
    }

    fn parse_error(&self, message: impl Into<String>) -> IngestError {
        IngestError::Xml {
            offset: self.reader.buffer_position(),
            message: message.into(),
        }
    }

    fn parent_is(&self, name: &[u8]) -> bool {
        self.stack.last().map(|n| n.as_slice() == name).unwrap_or(false)
    }

    fn open(&mut self, name: Vec<u8>, is_empty: bool) {
        match name.as_slice() {
            b"page" if self.page.is_none() => self.page = Some(PageBuilder::default()),
            b"redirect" if self.parent_is(b"page") => {
                if let Some(page) = self.page.as_mut() {
                    page.is_redirect = true;
                }
            }
            _ => {}
        }
        if !is_empty && self.page.is_some() {
            self.field = match name.as_slice() {
                b"title" if self.parent_is(b"page") => Field::Title,
                b"ns" if self.parent_is(b"page") => Field::Namespace,
                b"id" if self.parent_is(b"page") => Field::PageId,
                b"text" if self.parent_is(b"revision") => Field::Text,
                _ => Field::None,
            };
            self.scratch.clear();
        }
        if !is_empty {
            self.stack.push(name);
        }
    }

    fn close(&mut self, name: &[u8]) -> Result<Option<RawPage>, IngestError> {
        match self.stack.pop() {
            Some(open) if open.as_slice() == name => {}
            Some(open) => {
                return Err(self.parse_error(format!(
                    "mismatched closing tag </{}>, expected </{}>",
                    String::from_utf8_lossy(name),
                    String::from_utf8_lossy(&open)
                )))
            }
            None => {
                return Err(self.parse_error(format!(
                    "unexpected closing tag </{}>",
                    String::from_utf8_lossy(name)
                )))
            }
        }
        let field = std::mem::replace(&mut self.field, Field::None);
        let Some(page) = self.page.as_mut() else {
            return Ok(None);
        };
        match field {
            Field::Title => page.title = std::mem::take(&mut self.scratch),
            Field::Namespace => {
                page.namespace = self.scratch.trim().parse().map_err(|_| {
                    IngestError::Xml {
                        offset: self.reader.buffer_position(),
                        message: format!("invalid namespace {:?}", self.scratch),
                    }
                })?
            }
            Field::PageId => {
                if page.id.is_none() {
                    page.id = Some(self.scratch.trim().parse().map_err(|_| IngestError::Xml {
                        offset: self.reader.buffer_position(),
                        message: format!("invalid page id {:?}", self.scratch),
                    })?);
                }
            }
            Field::Text => page.wikitext = std::mem::take(&mut self.scratch),
            Field::None => {}
        }
        if name == b"page" {
            let page = self.page.take().unwrap_or_default();
            let id = page
                .id
                .ok_or_else(|| self.parse_error("page without an <id> element"))?;
            let is_redirect = page.is_redirect || looks_like_redirect(&page.wikitext);
            return Ok(Some(RawPage {
                id,
                title: page.title,
                namespace: page.namespace,
                wikitext: page.wikitext,
                is_redirect,
            }));
        }
        Ok(None)
    }

    fn next_page(&mut self) -> Result<Option<RawPage>, IngestError> {
        loop {
            self.buf.clear();
            let event = self
                .reader
                .read_event_into(&mut self.buf)
                .map_err(|e| IngestError::Xml {
                    offset: self.reader.error_position(),
                    message: e.to_string(),
                })?;
            match event {
                Event::Start(e) => {
                    let name = e.name().as_ref().to_vec();
                    self.open(name, false);
                }
                Event::Empty(e) => {
                    let name = e.name().as_ref().to_vec();
                    self.open(name, true);
                }
                Event::End(e) => {
                    let name = e.name().as_ref().to_vec();
                    if let Some(page) = self.close(&name)? {
                        return Ok(Some(page));
                    }
                }
                Event::Text(e) => {
                    if self.field != Field::None {
                        let text = e.unescape().map_err(|err| IngestError::Xml {
                            offset: self.reader.buffer_position(),
                            message: err.to_string(),
                        })?;
                        self.scratch.push_str(&text);
                    }
                }
                Event::CData(e) => {
                    if self.field != Field::None {
                        self.scratch.push_str(&String::from_utf8_lossy(&e));
                    }
                }
                Event::Eof => {
                    if let Some(open) = self.stack.last() {
                        return Err(self.parse_error(format!(
                            "unexpected end of input inside <{}>",
                            String::from_utf8_lossy(open)
                        )));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<RawPage, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_page() {
            Ok(Some(page)) => Some(Ok(page)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams raw pages out of `source`.
pub fn parse_dump<R: BufRead>(source: R) -> DumpReader<R> {
    DumpReader::new(source)
}

// Redirect pages normally carry a <redirect/> element; older exports only
// have the magic word at the start of the text.
fn looks_like_redirect(wikitext: &str) -> bool {
    let head: String = wikitext.trim_start().chars().take(16).collect();
    let upper = head.to_uppercase();
    upper.starts_with("#REDIRECT") || upper.starts_with("#YÖNLENDİR") || upper.starts_with("#YÖNLENDIR")
}
