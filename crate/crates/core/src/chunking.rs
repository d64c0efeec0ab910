//! Tokenization and fixed-size overlapping token-window chunking.
//!
//! A document of `n` tokens chunked with window size `S` and overlap `O`
//! yields `floor((n - O) / (S - O))` full windows, window `i` (1-based)
//! starting at token `(i - 1) * (S - O) + 1`. Tokens left uncovered by the
//! last full window go into a single tail chunk when the tail policy is on.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered tokens of a piece of text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_text: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Joins tokens with single spaces.
    pub fn joined(&self) -> String {
        join_tokens(&self.tokens)
    }
}

/// Splits on Unicode whitespace; every character that is neither
/// alphanumeric nor whitespace becomes its own token.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence {
        tokens: split_tokens(text).map(str::to_owned).collect(),
        source_text: text.to_owned(),
    }
}

/// Token count under [`tokenize`] without allocating the tokens.
pub fn count_tokens(text: &str) -> usize {
    split_tokens(text).count()
}

/// Borrowing token iterator shared by the tokenizer and the indexes.
pub fn split_tokens(text: &str) -> impl Iterator<Item = &str> {
    TokenIter { text, pos: 0 }
}

pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

/// First `n` tokens of `text`, re-joined.
pub fn truncate_tokens(text: &str, n: usize) -> String {
    let head: Vec<&str> = split_tokens(text).take(n).collect();
    join_tokens(&head)
}

struct TokenIter<'a> {
    text: &'a str,
    pos: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl<'a> Iterator for TokenIter<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.pos..];
        let skip = rest.find(|c: char| !c.is_whitespace())?;
        let start = self.pos + skip;
        let mut chars = self.text[start..].char_indices();
        let (_, first) = chars.next()?;
        let end = if is_word_char(first) {
            chars
                .find(|&(_, c)| !is_word_char(c))
                .map(|(i, _)| start + i)
                .unwrap_or(self.text.len())
        } else {
            start + first.len_utf8()
        };
        self.pos = end;
        Some(&self.text[start..end])
    }
}

/// Window size and overlap, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    #[serde(default = "default_tail")]
    pub tail: bool,
}

fn default_tail() -> bool {
    true
}

impl ChunkingConfig {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self> {
        let cfg = ChunkingConfig {
            chunk_size,
            overlap,
            tail: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn without_tail(mut self) -> Self {
        self.tail = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.violations("chunking");
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub(crate) fn violations(&self, name: &str) -> Vec<String> {
        let mut errors = Vec::new();
        if self.chunk_size == 0 {
            errors.push(format!("{name}: chunk_size must be positive"));
        }
        if self.overlap >= self.chunk_size {
            errors.push(format!(
                "{name}: overlap ({}) must be smaller than chunk_size ({})",
                self.overlap, self.chunk_size
            ));
        }
        errors
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }

    /// Number of full windows for a document of `n_tokens`, clamped at zero.
    pub fn full_chunk_count(&self, n_tokens: usize) -> usize {
        if n_tokens < self.overlap {
            return 0;
        }
        (n_tokens - self.overlap) / self.stride()
    }
}

/// Identifies a chunk; orders by `(doc_id, index)`, which is also the
/// retrieval tie-break.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkId {
    pub doc_id: String,
    pub index: u32,
}

impl ChunkId {
    pub fn new(doc_id: impl Into<String>, index: u32) -> Self {
        ChunkId {
            doc_id: doc_id.into(),
            index,
        }
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// 1-based position of the chunk within its document.
    pub index: u32,
    /// 1-based inclusive token range.
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Chunk {
    pub fn id(&self) -> ChunkId {
        ChunkId::new(self.doc_id.clone(), self.index)
    }

    pub fn token_len(&self) -> usize {
        self.end + 1 - self.start
    }
}

pub fn chunk_document(doc_id: &str, tokens: &TokenSequence, cfg: &ChunkingConfig) -> Vec<Chunk> {
    let n = tokens.len();
    let stride = cfg.stride();
    let full = cfg.full_chunk_count(n);
    let mut chunks = Vec::with_capacity(full + 1);
    let mut push = |start: usize, end: usize| {
        let index = chunks.len() as u32 + 1;
        chunks.push(Chunk {
            doc_id: doc_id.to_owned(),
            index,
            start,
            end,
            text: join_tokens(&tokens.tokens[start - 1..end]),
        });
    };
    for i in 0..full {
        let start = i * stride + 1;
        push(start, start + cfg.chunk_size - 1);
    }
    let covered = if full == 0 {
        0
    } else {
        (full - 1) * stride + cfg.chunk_size
    };
    if cfg.tail && n > covered {
        push(full * stride + 1, n);
    }
    chunks
}

/// Ordered chunks of a corpus with lookup by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkSet {
    chunks: Vec<Chunk>,
    by_id: HashMap<ChunkId, usize>,
}

impl ChunkSet {
    pub fn new(chunks: Vec<Chunk>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(chunks.len());
        for (pos, c) in chunks.iter().enumerate() {
            if by_id.insert(c.id(), pos).is_some() {
                return Err(Error::InvalidInput(format!("duplicate chunk {}", c.id())));
            }
        }
        Ok(ChunkSet { chunks, by_id })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn get(&self, id: &ChunkId) -> Option<&Chunk> {
        self.by_id.get(id).map(|&i| &self.chunks[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Chunk> {
        self.chunks.iter()
    }

    /// Writes one json object per line: doc_id, index, start, end, text.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        for c in &self.chunks {
            serde_json::to_writer(&mut out, c)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Load {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let mut chunks = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk = serde_json::from_str(&line).map_err(|e| Error::Load {
                path: path.to_owned(),
                message: format!("line {}: {e}", i + 1),
            })?;
            chunks.push(chunk);
        }
        ChunkSet::new(chunks)
    }
}

impl<'a> IntoIterator for &'a ChunkSet {
    type Item = &'a Chunk;
    type IntoIter = std::slice::Iter<'a, Chunk>;

    fn into_iter(self) -> Self::IntoIter {
        self.chunks.iter()
    }
}

/// Chunks every `(doc_id, text)` pair in order and concatenates the results.
pub fn chunk_corpus<I, S, T>(texts: I, cfg: &ChunkingConfig) -> Result<ChunkSet>
where
    I: IntoIterator<Item = (S, T)>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    cfg.validate()?;
    let mut seen = HashSet::new();
    let mut chunks = Vec::new();
    for (doc_id, text) in texts {
        let doc_id = doc_id.as_ref();
        if !seen.insert(doc_id.to_owned()) {
            return Err(Error::InvalidInput(format!("duplicate doc_id {doc_id:?}")));
        }
        chunks.extend(chunk_document(doc_id, &tokenize(text.as_ref()), cfg));
    }
    ChunkSet::new(chunks)
}
