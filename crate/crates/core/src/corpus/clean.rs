//! Wikitext to plaintext reduction.
//!
//! Cleaning removes markup rather than rendering it. The passes, in order:
//!
//! 1. HTML comments `<!-- ... -->` are removed.
//! 2. Content-bearing extension tags (`<ref>`, `<math>`, `<gallery>`, ...)
//!    are removed together with their content; self-closing forms too.
//! 3. Templates `{{...}}` and tables `{| ... |}` are removed, nesting-aware.
//! 4. Wiki links `[[target|label]]` become `label` (or `target` when there is
//!    no label). Category, file and image links are removed entirely.
//! 5. External links `[url anchor]` become `anchor`.
//! 6. Remaining HTML/XML tags are removed, keeping their inner text.
//! 7. `&nbsp;`, `&ndash;`, `&mdash;` and `&thinsp;` are decoded.
//! 8. Emphasis quote runs (`''`, `'''`, ...), heading markers (runs of two or
//!    more `=`) and behaviour switches such as `__TOC__` are stripped.
//! 9. List/indent markers at line start are stripped, whitespace inside a
//!    line collapses to single spaces, and paragraphs end up separated by a
//!    single blank line.
//!
//! An opening construct without its closer (`{{`, `{|`, `[[`, `[http...`,
//! `<!--`, `</...`, or an extension tag) drops everything from the opener to
//! the end of its paragraph.
//!
//! The whole sequence is repeated until the text stops changing, so
//! `clean_markup` is idempotent.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

const MAX_ROUNDS: usize = 32;

/// Extension tags whose content is not article prose.
const DROPPED_TAGS: &[&str] = &[
    "ref",
    "references",
    "math",
    "chem",
    "gallery",
    "timeline",
    "imagemap",
    "score",
    "graph",
    "mapframe",
    "syntaxhighlight",
    "source",
];

/// Link namespaces that carry no prose (English and Turkish names).
const DROPPED_LINK_NAMESPACES: &[&str] = &[
    "file", "image", "media", "category", "dosya", "resim", "görüntü", "kategori", "ortam",
];

/// Reduces `wikitext` to plaintext. Total: never fails, whatever the input.
pub fn clean_markup(wikitext: &str) -> String {
    let mut current = clean_once(wikitext);
    for _ in 0..MAX_ROUNDS {
        let next = clean_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn clean_once(text: &str) -> String {
    let text = strip_comments(text);
    let text = strip_dropped_tags(&text);
    let text = strip_braces(&text);
    let text = reduce_wiki_links(&text);
    let text = reduce_external_links(&text);
    let text = strip_tags(&text);
    let text = decode_entities(&text);
    let text = strip_inline_markers(&text);
    normalize_whitespace(&text)
}

/// Index of the blank line that ends the paragraph containing `from`
/// (pointing at its first newline), or `text.len()`.
fn paragraph_end(text: &str, from: usize) -> usize {
    let bytes = text.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t' || bytes[j] == b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                return i;
            }
            if j >= bytes.len() {
                return i;
            }
        }
        i += 1;
    }
    bytes.len()
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    while let Some(pos) = text[rest..].find("<!--") {
        let start = rest + pos;
        out.push_str(&text[rest..start]);
        rest = match text[start + 4..].find("-->") {
            Some(end) => start + 4 + end + 3,
            None => paragraph_end(text, start),
        };
    }
    out.push_str(&text[rest..]);
    out
}

fn dropped_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let names = DROPPED_TAGS.join("|");
        Regex::new(&format!(r"(?i)<({names})(\s[^<>]*)?/?>")).expect("valid regex")
    })
}

fn closing_tag_regex(name: &str) -> &'static Regex {
    static RES: OnceLock<HashMap<&'static str, Regex>> = OnceLock::new();
    let map = RES.get_or_init(|| {
        DROPPED_TAGS
            .iter()
            .map(|&tag| (tag, Regex::new(&format!(r"(?i)</{tag}\s*>")).expect("valid regex")))
            .collect()
    });
    &map[name]
}

fn strip_dropped_tags(text: &str) -> String {
    let re = dropped_tag_regex();
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    while let Some(caps) = re.captures_at(text, rest) {
        let whole = caps.get(0).expect("match");
        out.push_str(&text[rest..whole.start()]);
        if whole.as_str().ends_with("/>") {
            rest = whole.end();
            continue;
        }
        let name = caps[1].to_ascii_lowercase();
        rest = match closing_tag_regex(&name).find_at(text, whole.end()) {
            Some(m) => m.end(),
            None => paragraph_end(text, whole.start()),
        };
    }
    out.push_str(&text[rest..]);
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Brace {
    Template,
    Table,
}

/// End (exclusive) of the template or table opening at `start`.
fn match_braces(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack: Vec<Brace> = Vec::new();
    let mut i = start;
    while i + 1 < bytes.len() {
        let pair = (bytes[i], bytes[i + 1]);
        let closed = match (stack.last(), pair) {
            (_, (b'{', b'{')) => {
                stack.push(Brace::Template);
                false
            }
            (_, (b'{', b'|')) => {
                stack.push(Brace::Table);
                false
            }
            (Some(Brace::Template), (b'}', b'}')) | (Some(Brace::Table), (b'|', b'}')) => {
                stack.pop();
                true
            }
            _ => {
                i += 1;
                continue;
            }
        };
        i += 2;
        if closed && stack.is_empty() {
            return Some(i);
        }
    }
    None
}

fn strip_braces(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && (bytes[i + 1] == b'{' || bytes[i + 1] == b'|') {
            out.push_str(&text[rest..i]);
            let end = match_braces(bytes, i).unwrap_or_else(|| paragraph_end(text, i));
            rest = end;
            i = end;
        } else {
            i += 1;
        }
    }
    out.push_str(&text[rest..]);
    out
}

/// End (exclusive) of the wiki link opening at `start`, with the byte range
/// of its inner content.
fn match_link(bytes: &[u8], start: usize) -> Option<(usize, usize)> {
    let mut depth = 0usize;
    let mut i = start;
    while i + 1 < bytes.len() {
        if bytes[i] == b'[' && bytes[i + 1] == b'[' {
            depth += 1;
            i += 2;
        } else if bytes[i] == b']' && bytes[i + 1] == b']' {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return Some((i, i - 2));
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Splits link content at its first `|` that is not inside a nested link.
fn split_link(content: &str) -> (&str, Option<&str>) {
    let bytes = content.as_bytes();
    let mut depth = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        if i + 1 < bytes.len() && bytes[i] == b'[' && bytes[i + 1] == b'[' {
            depth += 1;
            i += 2;
            continue;
        }
        if i + 1 < bytes.len() && bytes[i] == b']' && bytes[i + 1] == b']' {
            depth = depth.saturating_sub(1);
            i += 2;
            continue;
        }
        if bytes[i] == b'|' && depth == 0 {
            return (&content[..i], Some(&content[i + 1..]));
        }
        i += 1;
    }
    (content, None)
}

fn is_dropped_link(target: &str) -> bool {
    let target = target.trim();
    if target.starts_with(':') {
        return false;
    }
    match target.split_once(':') {
        Some((ns, _)) => {
            let ns = ns.trim().to_lowercase();
            DROPPED_LINK_NAMESPACES.contains(&ns.as_str())
        }
        None => false,
    }
}

fn render_link(content: &str) -> String {
    let (target, label) = split_link(content);
    if is_dropped_link(target) {
        return String::new();
    }
    match label {
        Some(label) if !label.trim().is_empty() => reduce_wiki_links(label),
        _ => target.trim().trim_start_matches(':').to_string(),
    }
}

fn reduce_wiki_links(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'[' && bytes[i + 1] == b'[' {
            out.push_str(&text[rest..i]);
            match match_link(bytes, i) {
                Some((end, inner_end)) => {
                    out.push_str(&render_link(&text[i + 2..inner_end]));
                    rest = end;
                    i = end;
                }
                None => {
                    rest = paragraph_end(text, i);
                    i = rest;
                }
            }
        } else {
            i += 1;
        }
    }
    out.push_str(&text[rest..]);
    out
}

fn starts_with_scheme(s: &str) -> bool {
    let lower: String = s.chars().take(8).collect::<String>().to_ascii_lowercase();
    ["http://", "https://", "ftp://", "//", "mailto:"]
        .iter()
        .any(|scheme| lower.starts_with(scheme))
}

fn reduce_external_links(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' && starts_with_scheme(&text[i + 1..]) {
            out.push_str(&text[rest..i]);
            let limit = paragraph_end(text, i);
            match text[i + 1..limit].find(']') {
                Some(rel) => {
                    let inner = &text[i + 1..i + 1 + rel];
                    if let Some((_, anchor)) = inner.split_once(char::is_whitespace) {
                        out.push_str(anchor.trim());
                    }
                    rest = i + 1 + rel + 1;
                }
                None => rest = limit,
            }
            i = rest;
        } else {
            i += 1;
        }
    }
    out.push_str(&text[rest..]);
    out
}

fn open_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([A-Za-z][A-Za-z0-9]*)(\s[^<>]*)?/?>").expect("valid regex"))
}

fn strip_tags(text: &str) -> String {
    // Closing tags first: every `</` either closes a tag or starts an
    // unbalanced construct.
    let mut without_closers = String::with_capacity(text.len());
    let mut rest = 0;
    while let Some(pos) = text[rest..].find("</") {
        let start = rest + pos;
        without_closers.push_str(&text[rest..start]);
        let limit = paragraph_end(text, start);
        rest = match text[start..limit].find('>') {
            Some(rel) => start + rel + 1,
            None => limit,
        };
    }
    without_closers.push_str(&text[rest..]);

    open_tag_regex()
        .replace_all(&without_closers, |caps: &regex::Captures| {
            if caps[1].eq_ignore_ascii_case("br") {
                " ".to_string()
            } else {
                String::new()
            }
        })
        .into_owned()
}

fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_string();
    }
    text.replace("&nbsp;", " ")
        .replace("&thinsp;", " ")
        .replace("&ndash;", "\u{2013}")
        .replace("&mdash;", "\u{2014}")
}

fn inline_marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"''+|==+|__[A-Z]+__").expect("valid regex"))
}

fn strip_inline_markers(text: &str) -> String {
    inline_marker_regex().replace_all(text, "").into_owned()
}

fn normalize_line(line: &str) -> String {
    let mut line = line;
    loop {
        let trimmed = line.trim_start();
        match trimmed.chars().next() {
            Some(c @ ('*' | '#' | ':' | ';')) => line = &trimmed[c.len_utf8()..],
            _ => {
                line = trimmed;
                break;
            }
        }
    }
    let collapsed = line.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.len() >= 4 && collapsed.chars().all(|c| c == '-') {
        return String::new();
    }
    collapsed
}

fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_blank = false;
    for line in text.split('\n') {
        let line = normalize_line(line);
        if line.is_empty() {
            pending_blank = !out.is_empty();
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
            if pending_blank {
                out.push('\n');
            }
        }
        pending_blank = false;
        out.push_str(&line);
    }
    out
}

/// True when `body` contains one of the markup fragments that cleaning must
/// never leave behind.
pub fn has_residual_markup(body: &str) -> bool {
    body.contains("[[")
        || body.contains("{{")
        || body.contains("</")
        || body.lines().any(|l| l.trim_start().starts_with("=="))
}
