//! Corpus ingestion, summarization and the summarized-corpus CSV file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chunking::count_tokens;
use crate::error::{Error, Result};
use crate::provider::Summarizer;
use crate::stats::{self, Quartiles};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_meta: BTreeMap<String, String>,
}

impl Document {
    /// Text that gets summarized and indexed: title and body.
    pub fn full_text(&self) -> String {
        if self.title.trim().is_empty() {
            self.body.clone()
        } else {
            format!("{}\n\n{}", self.title.trim(), self.body)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (index, d) in documents.iter().enumerate() {
            if d.id.is_empty() {
                return Err(Error::Record {
                    index,
                    message: "empty document id".into(),
                });
            }
            if !seen.insert(d.id.as_str()) {
                return Err(Error::Record {
                    index,
                    message: format!("duplicate document id {:?}", d.id),
                });
            }
        }
        Ok(Corpus { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    JsonArray,
    JsonLines,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(CorpusFormat::JsonArray),
            "jsonl" | "ndjson" => Some(CorpusFormat::JsonLines),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json-array" | "json" => Ok(CorpusFormat::JsonArray),
            "json-lines" | "jsonl" => Ok(CorpusFormat::JsonLines),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::InvalidInput(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Which record fields hold the document id, title and body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldMapping {
    pub id: String,
    pub title: String,
    pub body: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            id: "id".into(),
            title: "title".into(),
            body: "body".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: CorpusFormat,
    pub fields: FieldMapping,
    pub skip_malformed: bool,
}

impl LoadOptions {
    pub fn new(format: CorpusFormat) -> Self {
        LoadOptions {
            format,
            fields: FieldMapping::default(),
            skip_malformed: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<LoadedCorpus> {
    let ingest = |message: String| Error::Ingest {
        path: path.to_owned(),
        message,
    };
    let raw = fs::read_to_string(path).map_err(|e| ingest(e.to_string()))?;
    let mut warnings = Vec::new();
    if raw.trim().is_empty() {
        warnings.push(format!("{}: empty corpus file", path.display()));
        tracing::warn!(path = %path.display(), "empty corpus file");
        return Ok(LoadedCorpus {
            corpus: Corpus::default(),
            warnings,
        });
    }

    let records: Vec<std::result::Result<BTreeMap<String, String>, String>> = match opts.format {
        CorpusFormat::JsonArray => {
            let value: Value = serde_json::from_str(&raw).map_err(|e| ingest(e.to_string()))?;
            let Value::Array(items) = value else {
                return Err(ingest("expected a top-level json array".into()));
            };
            items.into_iter().map(flatten_object).collect()
        }
        CorpusFormat::JsonLines => raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str::<Value>(l)
                    .map_err(|e| e.to_string())
                    .and_then(flatten_object)
            })
            .collect(),
        CorpusFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().from_reader(raw.as_bytes());
            let headers = reader.headers().map_err(|e| ingest(e.to_string()))?.clone();
            reader
                .records()
                .map(|row| {
                    let row = row.map_err(|e| e.to_string())?;
                    Ok(headers
                        .iter()
                        .zip(row.iter())
                        .map(|(h, v)| (h.to_owned(), v.to_owned()))
                        .collect())
                })
                .collect()
        }
    };

    let mut documents = Vec::with_capacity(records.len());
    let mut seen = HashSet::new();
    for (index, record) in records.into_iter().enumerate() {
        let doc = record.and_then(|fields| to_document(index, fields, &opts.fields));
        let doc = doc.and_then(|d| {
            if seen.contains(&d.id) {
                Err(format!("duplicate document id {:?}", d.id))
            } else {
                Ok(d)
            }
        });
        match doc {
            Ok(d) => {
                seen.insert(d.id.clone());
                documents.push(d);
            }
            Err(message) if opts.skip_malformed => {
                tracing::warn!(index, %message, "skipping malformed record");
                warnings.push(format!("record {index}: {message}"));
            }
            Err(message) => return Err(Error::Record { index, message }),
        }
    }
    Ok(LoadedCorpus {
        corpus: Corpus::new(documents)?,
        warnings,
    })
}

fn flatten_object(value: Value) -> std::result::Result<BTreeMap<String, String>, String> {
    let Value::Object(map) = value else {
        return Err("record is not a json object".into());
    };
    Ok(map
        .into_iter()
        .filter_map(|(k, v)| {
            let s = match v {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                Value::Null => return None,
                other => other.to_string(),
            };
            Some((k, s))
        })
        .collect())
}

fn to_document(
    index: usize,
    mut fields: BTreeMap<String, String>,
    mapping: &FieldMapping,
) -> std::result::Result<Document, String> {
    let body = fields
        .remove(&mapping.body)
        .ok_or_else(|| format!("missing body field {:?}", mapping.body))?;
    if body.split_whitespace().next().is_none() {
        return Err("empty body".into());
    }
    let id = match fields.remove(&mapping.id) {
        Some(id) if !id.trim().is_empty() => id.trim().to_owned(),
        Some(_) => return Err("empty id".into()),
        None => format!("doc-{index}"),
    };
    let title = fields.remove(&mapping.title).unwrap_or_default();
    Ok(Document {
        id,
        title,
        body,
        source_meta: fields,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizedDocument {
    pub source_id: String,
    pub summary: String,
    pub original_token_count: usize,
    pub summary_token_count: usize,
}

impl SummarizedDocument {
    pub fn reduction_ratio(&self) -> f64 {
        reduction_ratio(self.original_token_count, self.summary_token_count)
    }
}

fn reduction_ratio(original: usize, summary: usize) -> f64 {
    if original == 0 {
        0.0
    } else {
        1.0 - summary as f64 / original as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryFailure {
    pub index: usize,
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SummarizeOutcome {
    pub summaries: Vec<SummarizedDocument>,
    pub failures: Vec<SummaryFailure>,
}

/// Summarizes every document in corpus order. `parallel > 1` fans the
/// provider calls out over a thread pool; output order is unchanged.
/// Failed documents are listed in `failures` and absent from `summaries`.
pub fn summarize_corpus(corpus: &Corpus, summarizer: &dyn Summarizer, parallel: usize) -> Result<SummarizeOutcome> {
    let run_one = |(index, doc): (usize, &Document)| {
        let text = doc.full_text();
        match summarizer.summarize(&text) {
            Ok(summary) => Ok(SummarizedDocument {
                source_id: doc.id.clone(),
                summary_token_count: count_tokens(&summary),
                original_token_count: count_tokens(&text),
                summary,
            }),
            Err(e) => {
                tracing::warn!(doc_id = %doc.id, error = %e, "summarization failed");
                Err(SummaryFailure {
                    index,
                    doc_id: doc.id.clone(),
                    error: e.to_string(),
                })
            }
        }
    };
    let results: Vec<_> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| corpus.documents.par_iter().enumerate().map(run_one).collect())
    } else {
        corpus.documents.iter().enumerate().map(run_one).collect()
    };
    let mut out = SummarizeOutcome::default();
    for r in results {
        match r {
            Ok(s) => out.summaries.push(s),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}

const CSV_HEADER: [&str; 4] = ["source_id", "summary", "original_token_count", "summary_token_count"];

pub fn save_summarized(docs: &[SummarizedDocument], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for d in docs {
        w.write_record([
            d.source_id.as_str(),
            d.summary.as_str(),
            &d.original_token_count.to_string(),
            &d.summary_token_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_summarized(path: &Path) -> Result<Vec<SummarizedDocument>> {
    let load_err = |message: String| Error::Load {
        path: path.to_owned(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| load_err(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(file);
    let headers = reader.headers().map_err(|e| load_err(e.to_string()))?;
    if headers.iter().ne(CSV_HEADER) {
        return Err(load_err(format!("expected header {}", CSV_HEADER.join(","))));
    }
    let mut docs = Vec::new();
    for (i, row) in reader.deserialize::<SummarizedDocument>().enumerate() {
        // row 1 is the header
        let row = row.map_err(|e| load_err(format!("row {}: {e}", i + 2)))?;
        docs.push(row);
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionStats {
    pub per_document_ratio: Vec<f64>,
    pub mean_ratio: f64,
    pub quartiles: Quartiles,
}

/// Size reduction `1 - summary_tokens / original_tokens` for each document,
/// in corpus order.
pub fn reduction_stats(corpus: &Corpus, summarized: &[SummarizedDocument]) -> Result<ReductionStats> {
    if corpus.len() != summarized.len() {
        return Err(Error::Alignment(format!(
            "{} documents but {} summaries",
            corpus.len(),
            summarized.len()
        )));
    }
    let by_id: HashMap<&str, &SummarizedDocument> = summarized.iter().map(|s| (s.source_id.as_str(), s)).collect();
    if by_id.len() != summarized.len() {
        return Err(Error::Alignment("duplicate source_id among summaries".into()));
    }
    let mut ratios = Vec::with_capacity(corpus.len());
    for doc in corpus.iter() {
        let s = by_id
            .get(doc.id.as_str())
            .ok_or_else(|| Error::Alignment(format!("no summary for document {:?}", doc.id)))?;
        ratios.push(s.reduction_ratio());
    }
    if ratios.is_empty() {
        return Err(Error::Alignment("empty corpus".into()));
    }
    Ok(ReductionStats {
        mean_ratio: stats::mean(&ratios).unwrap_or(0.0),
        quartiles: stats::quartiles(&ratios).expect("non-empty"),
        per_document_ratio: ratios,
    })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::provider::{MockProvider, ProviderError, RetryPolicy, Retrying};

    fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(content.as_bytes()).unwrap();
        p
    }

    fn doc(id: &str, body: &str) -> Document {
        Document {
            id: id.into(),
            title: String::new(),
            body: body.into(),
            source_meta: BTreeMap::new(),
        }
    }

    #[test]
    fn json_lines_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"b\",\"title\":\"B\",\"body\":\"two\",\"url\":\"u\"}\n{\"id\":\"a\",\"body\":\"one\"}\n\n{\"id\":3,\"body\":\"three\"}\n",
        );
        let loaded = load_corpus(&p, &LoadOptions::new(CorpusFormat::JsonLines)).unwrap();
        let ids: Vec<_> = loaded.corpus.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "3"]);
        assert_eq!(loaded.corpus.documents[0].source_meta["url"], "u");
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn empty_file_warns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", "  \n");
        let loaded = load_corpus(&p, &LoadOptions::new(CorpusFormat::JsonArray)).unwrap();
        assert!(loaded.corpus.is_empty());
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn malformed_record_skip_or_fail() {
        let dir = tempfile::tempdir().unwrap();
        let content = "{\"id\":\"1\",\"body\":\"a\"}\n{\"id\":\"2\",\"body\":\"b\"}\n{\"id\":\"3\",\"title\":\"no body\"}\n{\"id\":\"4\",\"body\":\"d\"}\n{\"id\":\"5\",\"body\":\"e\"}\n";
        let p = write(dir.path(), "c.jsonl", content);
        let mut opts = LoadOptions::new(CorpusFormat::JsonLines);
        match load_corpus(&p, &opts).unwrap_err() {
            Error::Record { index, message } => {
                assert_eq!(index, 2);
                assert!(message.contains("body"));
            }
            e => panic!("unexpected {e}"),
        }
        opts.skip_malformed = true;
        let loaded = load_corpus(&p, &opts).unwrap();
        assert_eq!(loaded.corpus.len(), 4);
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn json_array_and_csv_with_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.json",
            r#"[{"title":"T1","text":"first body"},{"title":"T2","text":"second body"}]"#,
        );
        let mut opts = LoadOptions::new(CorpusFormat::JsonArray);
        opts.fields.body = "text".into();
        let loaded = load_corpus(&p, &opts).unwrap();
        assert_eq!(loaded.corpus.documents[1].id, "doc-1");
        assert_eq!(loaded.corpus.documents[1].full_text(), "T2\n\nsecond body");

        let p = write(
            dir.path(),
            "c.csv",
            "id,body,category\nx,\"hello, world\",news\ny,\"multi\nline\",sport\n",
        );
        let loaded = load_corpus(&p, &LoadOptions::new(CorpusFormat::Csv)).unwrap();
        assert_eq!(loaded.corpus.documents[0].body, "hello, world");
        assert_eq!(loaded.corpus.documents[1].body, "multi\nline");
        assert_eq!(loaded.corpus.documents[1].source_meta["category"], "sport");
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_corpus(
            Path::new("/nonexistent/c.jsonl"),
            &LoadOptions::new(CorpusFormat::JsonLines),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/c.jsonl"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"id\":\"a\",\"body\":\"x\"}\n{\"id\":\"a\",\"body\":\"y\"}\n",
        );
        assert!(load_corpus(&p, &LoadOptions::new(CorpusFormat::JsonLines)).is_err());
    }

    #[test]
    fn summarize_counts_are_consistent() {
        let words: Vec<String> = (0..23).map(|i| format!("w{i}")).collect();
        let corpus = Corpus::new(vec![doc("a", &words.join(" ")), doc("b", "short text here")]).unwrap();
        let out = summarize_corpus(&corpus, &MockProvider::new(0), 1).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.summaries.len(), 2);
        for (d, s) in corpus.iter().zip(&out.summaries) {
            assert_eq!(s.source_id, d.id);
            assert_eq!(s.original_token_count, d.body.split_whitespace().count());
            assert_eq!(s.summary_token_count, s.summary.split_whitespace().count());
        }
        // ceil(23 / 5) and ceil(3 / 5)
        assert_eq!(out.summaries[0].summary_token_count, 5);
        assert_eq!(out.summaries[1].summary, "short");
        assert!(summarize_corpus(&Corpus::default(), &MockProvider::new(0), 1)
            .unwrap()
            .summaries
            .is_empty());
    }

    struct FailOn(&'static str);

    impl Summarizer for FailOn {
        fn summarize(&self, text: &str) -> std::result::Result<String, ProviderError> {
            if text.contains(self.0) {
                Err(ProviderError::Unavailable("timeout".into()))
            } else {
                Ok(text.to_owned())
            }
        }
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let docs: Vec<_> = (0..20)
            .map(|i| doc(&format!("d{i}"), if i % 7 == 3 { "bad doc" } else { "good doc" }))
            .collect();
        let corpus = Corpus::new(docs).unwrap();
        let provider = Retrying::new(FailOn("bad"), RetryPolicy::no_delay(2));
        for parallel in [1, 4] {
            let out = summarize_corpus(&corpus, &provider, parallel).unwrap();
            assert_eq!(out.summaries.len() + out.failures.len(), corpus.len());
            let failed: Vec<_> = out.failures.iter().map(|f| f.doc_id.as_str()).collect();
            assert_eq!(failed, ["d3", "d10", "d17"]);
            assert!(out.failures[0].error.contains("3 attempts"));
            let ok: Vec<_> = out.summaries.iter().map(|s| s.source_id.clone()).collect();
            let expected: Vec<_> = corpus
                .iter()
                .filter(|d| d.body == "good doc")
                .map(|d| d.id.clone())
                .collect();
            assert_eq!(ok, expected);
        }
    }

    #[test]
    fn identity_summary_has_zero_reduction() {
        struct Identity;
        impl Summarizer for Identity {
            fn summarize(&self, text: &str) -> std::result::Result<String, ProviderError> {
                Ok(text.to_owned())
            }
        }
        let corpus = Corpus::new(vec![doc("a", "one two three"), doc("b", "four")]).unwrap();
        let out = summarize_corpus(&corpus, &Identity, 1).unwrap();
        let stats = reduction_stats(&corpus, &out.summaries).unwrap();
        assert_eq!(stats.per_document_ratio, vec![0.0, 0.0]);
        assert_eq!(stats.mean_ratio, 0.0);
    }

    fn summarized(id: &str, original: usize, summary: usize) -> SummarizedDocument {
        SummarizedDocument {
            source_id: id.into(),
            summary: "s".into(),
            original_token_count: original,
            summary_token_count: summary,
        }
    }

    #[test]
    fn reduction_arithmetic() {
        let corpus = Corpus::new(vec![doc("a", "x")]).unwrap();
        let stats = reduction_stats(&corpus, &[summarized("a", 100, 11)]).unwrap();
        assert!((stats.mean_ratio - 0.89).abs() < 1e-12);

        let corpus = Corpus::new((0..4).map(|i| doc(&format!("d{i}"), "x")).collect()).unwrap();
        let sums: Vec<_> = [50, 40, 30, 20]
            .iter()
            .enumerate()
            .rev()
            .map(|(i, &s)| summarized(&format!("d{i}"), 100, s))
            .collect();
        let stats = reduction_stats(&corpus, &sums).unwrap();
        assert!((stats.mean_ratio - 0.65).abs() < 1e-12);
        assert_eq!(stats.per_document_ratio.len(), 4);
        assert!((stats.per_document_ratio[0] - 0.5).abs() < 1e-12);
        assert!((stats.quartiles.median - 0.65).abs() < 1e-12);
    }

    #[test]
    fn reduction_alignment_errors() {
        let corpus = Corpus::new(vec![doc("a", "x"), doc("b", "y")]).unwrap();
        assert!(matches!(
            reduction_stats(&corpus, &[summarized("a", 1, 1)]),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            reduction_stats(&corpus, &[summarized("a", 1, 1), summarized("c", 1, 1)]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn csv_round_trip_adversarial_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let docs = vec![
            summarized("a", 10, 2),
            SummarizedDocument {
                source_id: "b,\"quoted\"".into(),
                summary: "commas, \"quotes\"\nnew lines\r\n and trailing space ".into(),
                original_token_count: 40,
                summary_token_count: 12,
            },
            summarized("c", 0, 0),
        ];
        save_summarized(&docs, &p).unwrap();
        assert!(fs::read_to_string(&p)
            .unwrap()
            .starts_with("source_id,summary,original_token_count,summary_token_count\n"));
        assert_eq!(load_summarized(&p).unwrap(), docs);
    }

    #[test]
    fn csv_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_summarized(&dir.path().join("missing.csv")).is_err());
        let p = write(
            dir.path(),
            "bad.csv",
            "source_id,summary,original_token_count,summary_token_count\na,x,1,1\nb,y,notanumber,2\n",
        );
        let err = load_summarized(&p).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        let p = write(dir.path(), "nohdr.csv", "a,x,1,1\n");
        assert!(load_summarized(&p).is_err());
    }
}
