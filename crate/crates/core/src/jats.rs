//! JATS article XML to plain text.
//!
//! Output is a sequence of blocks (paragraphs, table linearizations, figure
//! captions, and optionally section headers and front/back matter) joined by
//! a blank line. Whitespace inside a block collapses to single spaces, except
//! that a table block keeps one line per row:
//!
//! ```text
//! Table 1 Strains used in this study
//! Strain Source Year
//! COL Hospital 1961
//! Footnote text
//! ```
//!
//! The first line is the label and caption, each following line is one `<tr>`
//! with its non-empty cells joined by a single space, and `<table-wrap-foot>`
//! paragraphs close the block one per line. Figures become one block made of
//! label, caption and attribution; graphics and alt-text are ignored.
//!
//! When front and back matter are kept, the front contributes the article
//! title and abstracts, and the whole `<back>` element is walked like the body.
//! `<floats-group>` content always counts as body content.

use roxmltree::{Document, Node, ParsingOptions};
use serde::{Deserialize, Serialize};

pub const BLOCK_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JatsVersion {
    #[serde(rename = "1.2")]
    V1_2,
    #[serde(rename = "1.3")]
    V1_3,
}

impl JatsVersion {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1.2" => Some(JatsVersion::V1_2),
            "1.3" => Some(JatsVersion::V1_3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JatsVersion::V1_2 => "1.2",
            JatsVersion::V1_3 => "1.3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionParams {
    pub include_tables: bool,
    pub include_figure_text: bool,
    pub drop_front_back_matter: bool,
    pub drop_section_headers: bool,
    pub jats_version_hint: Option<JatsVersion>,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            include_tables: true,
            include_figure_text: true,
            drop_front_back_matter: true,
            drop_section_headers: true,
            jats_version_hint: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("malformed XML at {row}:{col}: {message}")]
    Parse { row: u32, col: u32, message: String },
    #[error("document has no <body> element")]
    NoBody,
    #[error("document declares JATS {found} but {expected} was requested")]
    VersionMismatch { expected: &'static str, found: String },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("chunk size must be positive")]
    ZeroMax,
    #[error("block {index} is {len} characters, larger than the {max}-character chunk limit")]
    OversizeBlock { index: usize, len: usize, max: usize },
}

/// Extracted text plus the character offsets at which each block starts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlainText {
    pub text: String,
    pub block_boundaries: Vec<usize>,
}

impl PlainText {
    /// Joins blocks with [`BLOCK_SEPARATOR`]. Empty blocks are dropped.
    pub fn from_blocks<I, S>(blocks: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut text = String::new();
        let mut boundaries = Vec::new();
        let mut chars = 0usize;
        for block in blocks {
            let block = block.as_ref();
            if block.is_empty() {
                continue;
            }
            if !text.is_empty() {
                text.push_str(BLOCK_SEPARATOR);
                chars += BLOCK_SEPARATOR.len();
            }
            boundaries.push(chars);
            text.push_str(block);
            chars += block.chars().count();
        }
        PlainText {
            text,
            block_boundaries: boundaries,
        }
    }

    /// Rebuilds block structure from previously extracted text. Extraction
    /// never emits a blank line inside a block, so this is exact for its output.
    pub fn from_text(text: &str) -> Self {
        PlainText::from_blocks(text.split(BLOCK_SEPARATOR))
    }

    pub fn blocks(&self) -> Vec<&str> {
        let mut byte_starts = Vec::with_capacity(self.block_boundaries.len());
        let mut want = self.block_boundaries.iter().peekable();
        for (ci, (bi, _)) in self.text.char_indices().enumerate() {
            while want.peek() == Some(&&ci) {
                byte_starts.push(bi);
                want.next();
            }
        }
        let mut out = Vec::with_capacity(byte_starts.len());
        for (i, &start) in byte_starts.iter().enumerate() {
            let end = match byte_starts.get(i + 1) {
                Some(&next) => next - BLOCK_SEPARATOR.len(),
                None => self.text.len(),
            };
            out.push(&self.text[start..end]);
        }
        out
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    /// Inclusive range of block indices covered by this chunk.
    pub source_block_range: (usize, usize),
}

pub fn detect_version(xml: &str) -> Result<Option<String>, ExtractError> {
    let doc = parse(xml)?;
    Ok(doc
        .root_element()
        .attribute("dtd-version")
        .map(str::to_string))
}

fn parse(xml: &str) -> Result<Document<'_>, ExtractError> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    Document::parse_with_options(xml, opts).map_err(|e| {
        let pos = e.pos();
        ExtractError::Parse {
            row: pos.row,
            col: pos.col,
            message: e.to_string(),
        }
    })
}

pub fn extract_text(xml: &str, params: &ExtractionParams) -> Result<PlainText, ExtractError> {
    let doc = parse(xml)?;
    let root = doc.root_element();

    if let (Some(expected), Some(found)) = (params.jats_version_hint, root.attribute("dtd-version"))
    {
        if JatsVersion::parse(found) != Some(expected) {
            return Err(ExtractError::VersionMismatch {
                expected: expected.as_str(),
                found: found.to_string(),
            });
        }
    }

    let body = child(root, "body")
        .or_else(|| {
            root.descendants()
                .find(|n| is(*n, "body") && !n.ancestors().any(|a| is(a, "sub-article")))
        })
        .ok_or(ExtractError::NoBody)?;

    let mut w = Walker {
        params,
        blocks: Vec::new(),
    };

    if !params.drop_front_back_matter {
        if let Some(front) = child(root, "front") {
            w.front(front);
        }
    }
    w.container(body);
    if let Some(floats) = child(root, "floats-group") {
        w.container(floats);
    }
    if !params.drop_front_back_matter {
        if let Some(back) = child(root, "back") {
            w.container(back);
        }
    }

    Ok(PlainText::from_blocks(w.blocks))
}

/// Greedily packs whole blocks into chunks of at most `max_chars` characters
/// (separators included). Joining the chunk texts with [`BLOCK_SEPARATOR`]
/// gives back `pt.text`.
pub fn chunk_text(pt: &PlainText, max_chars: usize) -> Result<Vec<Chunk>, ChunkError> {
    if max_chars == 0 {
        return Err(ChunkError::ZeroMax);
    }
    let blocks = pt.blocks();
    let lens: Vec<usize> = blocks.iter().map(|b| b.chars().count()).collect();
    if let Some((index, &len)) = lens.iter().enumerate().find(|(_, &l)| l > max_chars) {
        return Err(ChunkError::OversizeBlock {
            index,
            len,
            max: max_chars,
        });
    }

    let sep = BLOCK_SEPARATOR.len();
    let mut chunks = Vec::new();
    let mut start = 0usize;
    let mut used = 0usize;
    for (i, &len) in lens.iter().enumerate() {
        if i > start && used + sep + len > max_chars {
            chunks.push(make_chunk(chunks.len(), &blocks, start, i - 1));
            start = i;
            used = len;
        } else if i == start {
            used = len;
        } else {
            used += sep + len;
        }
    }
    if !blocks.is_empty() {
        chunks.push(make_chunk(chunks.len(), &blocks, start, blocks.len() - 1));
    }
    Ok(chunks)
}

fn make_chunk(index: usize, blocks: &[&str], first: usize, last: usize) -> Chunk {
    Chunk {
        index,
        text: blocks[first..=last].join(BLOCK_SEPARATOR),
        source_block_range: (first, last),
    }
}

/// Character offsets `(start, end)` of every occurrence of `accession` in
/// `text`. An accession with a version suffix (`CP000046.1`) also matches its
/// unversioned form when that form is not followed by another version digit.
pub fn find_mentions(text: &str, accession: &str) -> Vec<(usize, usize)> {
    if accession.is_empty() {
        return Vec::new();
    }
    let base = accession.split_once('.').map(|(b, _)| b).unwrap_or(accession);
    let mut out = Vec::new();
    let mut pos = 0usize;
    while let Some(found) = text[pos..].find(base) {
        let start = pos + found;
        let rest = &text[start + base.len()..];
        let len = if rest.starts_with(&accession[base.len()..]) && accession.len() > base.len() {
            accession.len()
        } else {
            base.len()
        };
        let before_ok = text[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric() && c != '_');
        let after_ok = text[start + len..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric() && c != '_');
        if before_ok && after_ok {
            let cs = text[..start].chars().count();
            out.push((cs, cs + text[start..start + len].chars().count()));
        }
        pos = start + base.len();
    }
    out
}

fn is(node: Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| is(*c, name))
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const CONTAINERS: &[&str] = &[
    "sec",
    "body",
    "back",
    "abstract",
    "trans-abstract",
    "ack",
    "app-group",
    "app",
    "boxed-text",
    "list",
    "list-item",
    "fig-group",
    "table-wrap-group",
    "ref-list",
    "fn-group",
    "glossary",
    "def-list",
    "notes",
    "bio",
    "statement",
    "disp-quote",
    "floats-group",
    "verse-group",
];

/// Elements that interrupt paragraph text and are emitted as their own blocks.
const NESTED_BLOCKS: &[&str] = &[
    "fig",
    "fig-group",
    "table-wrap",
    "table-wrap-group",
    "list",
    "disp-quote",
    "boxed-text",
    "supplementary-material",
    "def-list",
    "p",
    "sec",
    "statement",
];

const IGNORED: &[&str] = &[
    "graphic",
    "inline-graphic",
    "media",
    "alt-text",
    "long-desc",
    "object-id",
    "sec-meta",
    "processing-meta",
];

const HEADERS: &[&str] = &["label", "title", "subtitle"];

struct Walker<'p> {
    params: &'p ExtractionParams,
    blocks: Vec<String>,
}

impl Walker<'_> {
    fn push(&mut self, s: String) {
        if !s.is_empty() {
            self.blocks.push(s);
        }
    }

    fn front(&mut self, front: Node) {
        let Some(meta) = child(front, "article-meta") else {
            return;
        };
        for n in meta.descendants() {
            if is(n, "article-title") || is(n, "trans-title") {
                let t = self.inline_only(n);
                self.push(t);
            }
        }
        for n in meta.children() {
            if is(n, "abstract") || is(n, "trans-abstract") {
                self.container(n);
            }
        }
    }

    fn container(&mut self, el: Node) {
        let header: Vec<String> = el
            .children()
            .filter(|c| HEADERS.iter().any(|h| is(*c, h)))
            .map(|c| self.inline_only(c))
            .filter(|s| !s.is_empty())
            .collect();
        if !self.params.drop_section_headers && !header.is_empty() {
            self.push(header.join(" "));
        }
        for c in el.children() {
            if c.is_text() {
                let t = normalize(c.text().unwrap_or(""));
                self.push(t);
            } else if c.is_element() && !HEADERS.iter().any(|h| is(c, h)) {
                self.block(c);
            }
        }
    }

    fn block(&mut self, el: Node) {
        let name = el.tag_name().name();
        if IGNORED.contains(&name) {
            return;
        }
        match name {
            "fig" => {
                if self.params.include_figure_text {
                    self.figure(el);
                }
            }
            "table-wrap" => {
                if self.params.include_tables {
                    self.table_wrap(el);
                }
            }
            "table-wrap-group" => {
                if self.params.include_tables {
                    self.container(el);
                }
            }
            "supplementary-material" => {
                if !self.params.drop_front_back_matter {
                    self.paragraph(el);
                }
            }
            n if CONTAINERS.contains(&n) => self.container(el),
            _ => {
                let has_block_children = el
                    .children()
                    .any(|c| c.is_element() && (is(c, "p") || CONTAINERS.contains(&c.tag_name().name())));
                if has_block_children && name != "p" {
                    self.container(el);
                } else {
                    self.paragraph(el);
                }
            }
        }
    }

    fn paragraph(&mut self, el: Node) {
        let mut text = String::new();
        let mut deferred = Vec::new();
        inline(el, &mut text, &mut deferred);
        self.push(normalize(&text));
        for d in deferred {
            self.block(d);
        }
    }

    /// All text under `el` on one line; nested blocks are space separated.
    fn inline_only(&self, el: Node) -> String {
        let mut text = String::new();
        flat(el, &mut text);
        normalize(&text)
    }

    fn figure(&mut self, fig: Node) {
        let mut parts = Vec::new();
        for c in fig.children().filter(|c| c.is_element()) {
            match c.tag_name().name() {
                "label" | "attrib" | "p" => parts.push(self.inline_only(c)),
                "caption" => {
                    for cc in c.children().filter(|n| n.is_element()) {
                        parts.push(self.inline_only(cc));
                    }
                }
                _ => {}
            }
        }
        parts.retain(|p| !p.is_empty());
        self.push(parts.join(" "));
    }

    fn table_wrap(&mut self, wrap: Node) {
        let mut lines = Vec::new();

        let mut head = Vec::new();
        for c in wrap.children().filter(|c| c.is_element()) {
            match c.tag_name().name() {
                "label" => head.push(self.inline_only(c)),
                "caption" => {
                    for cc in c.children().filter(|n| n.is_element()) {
                        head.push(self.inline_only(cc));
                    }
                }
                _ => {}
            }
        }
        head.retain(|p| !p.is_empty());
        if !head.is_empty() {
            lines.push(head.join(" "));
        }

        for table in tables_of(wrap) {
            for tr in table.descendants().filter(|n| is(*n, "tr")) {
                let cells: Vec<String> = tr
                    .children()
                    .filter(|c| is(*c, "td") || is(*c, "th"))
                    .map(|c| self.inline_only(c))
                    .filter(|s| !s.is_empty())
                    .collect();
                if !cells.is_empty() {
                    lines.push(cells.join(" "));
                }
            }
        }

        if let Some(foot) = child(wrap, "table-wrap-foot") {
            let paras: Vec<Node> = foot.descendants().filter(|n| is(*n, "p")).collect();
            if paras.is_empty() {
                lines.push(self.inline_only(foot));
            } else {
                for p in paras {
                    lines.push(self.inline_only(p));
                }
            }
        }

        lines.retain(|l| !l.is_empty());
        self.push(lines.join("\n"));
    }
}

/// Tables in a wrap; within an `<alternatives>` only the first table counts.
fn tables_of<'a, 'i>(wrap: Node<'a, 'i>) -> Vec<Node<'a, 'i>> {
    wrap.descendants()
        .filter(|n| is(*n, "table"))
        .filter(|t| match t.parent() {
            Some(p) if is(p, "alternatives") => p.children().find(|c| is(*c, "table")) == Some(*t),
            _ => true,
        })
        .collect()
}

fn flat(el: Node, out: &mut String) {
    for c in el.children() {
        if c.is_text() {
            out.push_str(c.text().unwrap_or(""));
        } else if c.is_element() {
            let name = c.tag_name().name();
            if IGNORED.contains(&name) {
                continue;
            }
            let spaced = name == "break" || NESTED_BLOCKS.contains(&name);
            if spaced {
                out.push(' ');
            }
            if name == "alternatives" {
                if let Some(first) = c.children().find(|n| n.is_element()) {
                    flat(first, out);
                }
            } else {
                flat(c, out);
            }
            if spaced {
                out.push(' ');
            }
        }
    }
}

fn inline<'a, 'i>(el: Node<'a, 'i>, out: &mut String, deferred: &mut Vec<Node<'a, 'i>>) {
    for c in el.children() {
        if c.is_text() {
            out.push_str(c.text().unwrap_or(""));
            continue;
        }
        if !c.is_element() {
            continue;
        }
        let name = c.tag_name().name();
        if IGNORED.contains(&name) {
            continue;
        }
        if NESTED_BLOCKS.contains(&name) {
            deferred.push(c);
            continue;
        }
        match name {
            "break" => out.push(' '),
            "alternatives" => {
                if let Some(first) = c.children().find(|n| n.is_element()) {
                    inline(first, out, deferred);
                }
            }
            _ => inline(c, out, deferred),
        }
    }
}
