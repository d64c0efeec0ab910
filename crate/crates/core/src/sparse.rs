//! Okapi BM25 keyword index over chunks.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::{split_tokens, ChunkId, ChunkSet};
use crate::error::Result;
use crate::persist;
use crate::ranking::{self, ScoreMap, Scored};

const FORMAT: &str = "k2rag-sparse-index";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

/// Index terms of a text: lowercased tokens that contain at least one
/// alphanumeric character. Used identically at build and query time.
pub fn analyze(text: &str) -> impl Iterator<Item = String> + '_ {
    split_tokens(text)
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_lowercase)
}

/// BM25 inverse document frequency, `ln((N - df + 0.5) / (df + 0.5) + 1)`.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    params: Bm25Params,
    chunk_ids: Vec<ChunkId>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// term -> (position in `chunk_ids`, term frequency), positions ascending
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl SparseIndex {
    pub fn build(chunks: &ChunkSet) -> Self {
        Self::build_with(chunks, Bm25Params::default())
    }

    pub fn build_with(chunks: &ChunkSet, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut chunk_ids = Vec::with_capacity(chunks.len());
        let mut doc_lengths = Vec::with_capacity(chunks.len());
        for (pos, chunk) in chunks.iter().enumerate() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0u32;
            for term in analyze(&chunk.text) {
                *tf.entry(term).or_default() += 1;
                len += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos as u32, count));
            }
            chunk_ids.push(chunk.id());
            doc_lengths.push(len);
        }
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64
        };
        SparseIndex {
            params,
            chunk_ids,
            doc_lengths,
            avg_doc_length,
            postings,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.chunk_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    /// `(chunk, term frequency)` for every chunk containing `term`.
    pub fn postings(&self, term: &str) -> Vec<(&ChunkId, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|&(pos, tf)| (&self.chunk_ids[pos as usize], tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn doc_length(&self, id: &ChunkId) -> Option<u32> {
        self.chunk_ids.iter().position(|c| c == id).map(|p| self.doc_lengths[p])
    }

    /// Raw BM25 score of every chunk sharing at least one term with the
    /// query. Each query token contributes, so repeated query terms count
    /// repeatedly.
    pub fn scores(&self, query: &str) -> ScoreMap {
        let n = self.doc_count();
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        let Bm25Params { k1, b } = self.params;
        for term in analyze(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = idf(n, list.len());
            for &(pos, tf) in list {
                let tf = f64::from(tf);
                let len = f64::from(self.doc_lengths[pos as usize]);
                let norm = 1.0 - b + b * len / self.avg_doc_length;
                *acc.entry(pos).or_default() += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        acc.into_iter()
            .map(|(pos, s)| (self.chunk_ids[pos as usize].clone(), s))
            .collect()
    }

    pub fn top_k(&self, query: &str, k: usize) -> Vec<Scored> {
        ranking::rank(self.scores(query), Some(k))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, FORMAT, VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load(path, FORMAT, VERSION)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::chunking::Chunk;

    fn chunk_set(texts: &[&str]) -> ChunkSet {
        ChunkSet::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Chunk {
                    doc_id: format!("d{i:03}"),
                    index: 1,
                    start: 1,
                    end: 1,
                    text: (*t).to_owned(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn postings_hand_count() {
        let idx = SparseIndex::build(&chunk_set(&["cat sat", "Dog sat"]));
        let c1 = ChunkId::new("d000", 1);
        let c2 = ChunkId::new("d001", 1);
        assert_eq!(idx.postings("cat"), vec![(&c1, 1)]);
        assert_eq!(idx.postings("dog"), vec![(&c2, 1)]);
        assert_eq!(idx.postings("sat"), vec![(&c1, 1), (&c2, 1)]);
        assert_eq!(idx.term_count(), 3);
        assert_eq!(idx.avg_doc_length(), 2.0);
    }

    #[test]
    fn empty_index() {
        let idx = SparseIndex::build(&ChunkSet::default());
        assert_eq!(idx.doc_count(), 0);
        assert!(idx.scores("anything").is_empty());
        assert!(idx.top_k("anything", 5).is_empty());
    }

    #[test]
    fn single_chunk_closed_form() {
        let idx = SparseIndex::build(&chunk_set(&["apple"]));
        // N=1, df=1: idf = ln(0.5/1.5 + 1) = ln(4/3); tf=1, len=avg: 2.5/2.5 = 1
        let expected = (4.0f64 / 3.0).ln();
        let s = idx.scores("apple");
        assert!((s[&ChunkId::new("d000", 1)] - expected).abs() < 1e-12);
        assert!(idx.scores("pear").is_empty());
    }

    #[test]
    fn equal_length_docs_score_equally() {
        let idx = SparseIndex::build(&chunk_set(&["red fox", "red hen"]));
        let s = idx.scores("red");
        assert_eq!(s.len(), 2);
        assert_eq!(s[&ChunkId::new("d000", 1)], s[&ChunkId::new("d001", 1)]);
        let top = idx.top_k("red", 5);
        assert_eq!(top[0].id, ChunkId::new("d000", 1));
    }

    #[test]
    fn duplicate_texts_get_separate_postings() {
        let idx = SparseIndex::build(&chunk_set(&["same text", "same text"]));
        assert_eq!(idx.postings("same").len(), 2);
    }

    #[test]
    fn punctuation_and_case_ignored() {
        let idx = SparseIndex::build(&chunk_set(&["Hello, World!", "other"]));
        assert_eq!(idx.postings(","), vec![]);
        assert_eq!(idx.scores("HELLO?").len(), 1);
        assert!(idx.scores("?!").is_empty());
    }

    #[test]
    fn persist_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let idx = SparseIndex::build(&chunk_set(&["alpha beta", "beta gamma", "gamma delta alpha"]));
        let p = dir.path().join("sparse.json");
        idx.save(&p).unwrap();
        assert_eq!(SparseIndex::load(&p).unwrap(), idx);

        let empty = SparseIndex::build(&ChunkSet::default());
        empty.save(&p).unwrap();
        assert_eq!(SparseIndex::load(&p).unwrap(), empty);

        idx.save(&p).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, &raw[..raw.len() / 2]).unwrap();
        assert!(SparseIndex::load(&p).is_err());

        std::fs::write(&p, raw.replace("\"version\":1", "\"version\":9")).unwrap();
        let err = SparseIndex::load(&p).unwrap_err().to_string();
        assert!(err.contains("version 9"), "{err}");
    }

    proptest! {
        #[test]
        fn adding_query_term_never_lowers_score(
            docs in prop::collection::vec(prop::collection::vec(0usize..6, 1..12), 1..8),
            target in 0usize..8,
            term in 0usize..6,
        ) {
            let vocab = ["ant", "bee", "cow", "dog", "eel", "fox"];
            let texts: Vec<String> = docs
                .iter()
                .map(|d| d.iter().map(|&w| vocab[w]).collect::<Vec<_>>().join(" "))
                .collect();
            let target = target % texts.len();
            let before = {
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                SparseIndex::build(&chunk_set(&refs)).scores(vocab[term])
            };
            let mut grown = texts.clone();
            grown[target].push(' ');
            grown[target].push_str(vocab[term]);
            let after = {
                let refs: Vec<&str> = grown.iter().map(String::as_str).collect();
                SparseIndex::build(&chunk_set(&refs)).scores(vocab[term])
            };
            let id = ChunkId::new(format!("d{target:03}"), 1);
            let b = before.get(&id).copied().unwrap_or(0.0);
            let a = after[&id];
            prop_assert!(a >= b - 1e-12, "before {} after {}", b, a);
        }

        #[test]
        fn top_k_is_prefix_of_full_sort(
            docs in prop::collection::vec(prop::collection::vec(0usize..8, 1..10), 1..30),
            query in prop::collection::vec(0usize..8, 1..4),
            k in 1usize..10,
        ) {
            let vocab = ["a1", "b2", "c3", "d4", "e5", "f6", "g7", "h8"];
            let texts: Vec<String> = docs
                .iter()
                .map(|d| d.iter().map(|&w| vocab[w]).collect::<Vec<_>>().join(" "))
                .collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let idx = SparseIndex::build(&chunk_set(&refs));
            let q = query.iter().map(|&w| vocab[w]).collect::<Vec<_>>().join(" ");
            let full = ranking::rank(idx.scores(&q), None);
            let top = idx.top_k(&q, k);
            prop_assert_eq!(&full[..k.min(full.len())], &top[..]);
        }
    }
}
