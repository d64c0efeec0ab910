//! K-fold evaluation: seeded fold assignment, timed answer generation,
//! cosine scoring against ground truth, checkpointing and reports.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::cosine;
use crate::error::{Error, Result};
use crate::pipeline::{AnswerPipeline, PipelineKind};
use crate::provider::Embedder;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    #[serde(rename = "answer")]
    pub ground_truth: String,
}

/// Reads `{id, question, answer}` json lines.
pub fn load_qa(path: &Path) -> Result<Vec<QaPair>> {
    let file = fs::File::open(path).map_err(|e| Error::Ingest {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = |message: String| Error::Record { index: i, message };
        let pair: QaPair = serde_json::from_str(&line).map_err(|e| record(e.to_string()))?;
        if pair.question.trim().is_empty() || pair.ground_truth.trim().is_empty() {
            return Err(record("empty question or answer".into()));
        }
        if !seen.insert(pair.id.clone()) {
            return Err(record(format!("duplicate id {:?}", pair.id)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldedPair {
    /// 1-based fold number.
    pub fold: usize,
    pub pair: QaPair,
}

/// Shuffles with a seeded ChaCha8 generator and cuts the result into `k`
/// contiguous folds whose sizes differ by at most one; the first
/// `n mod k` folds hold the extra pairs. Output is ordered by fold.
pub fn assign_folds(pairs: &[QaPair], k: usize, seed: u64) -> Result<Vec<FoldedPair>> {
    if k == 0 {
        return Err(Error::InvalidInput("number of folds must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no question-answer pairs".into()));
    }
    if k > pairs.len() {
        return Err(Error::InvalidInput(format!(
            "{k} folds requested for {} question-answer pairs",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = pairs.len() / k;
    let extra = pairs.len() % k;
    let mut out = Vec::with_capacity(pairs.len());
    let mut it = order.into_iter();
    for fold in 1..=k {
        let size = base + usize::from(fold <= extra);
        out.extend(it.by_ref().take(size).map(|i| FoldedPair {
            fold,
            pair: pairs[i].clone(),
        }));
    }
    Ok(out)
}

/// Cosine similarity of the embedded answer and ground truth.
pub fn score_answer(output: &str, truth: &str, embedder: &dyn Embedder) -> Result<f64> {
    if output.trim().is_empty() || truth.trim().is_empty() {
        return Err(Error::InvalidInput(
            "cannot score an empty answer or ground truth".into(),
        ));
    }
    let o = embedder.embed(output)?;
    let t = embedder.embed(truth)?;
    if o.len() != t.len() {
        return Err(Error::Eval("embedder returned vectors of different dimensions".into()));
    }
    Ok(cosine(&o, &t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub fold: usize,
    pub qa_id: String,
    pub similarity: f64,
    /// Wall-clock seconds spent generating the answer, scoring excluded.
    pub execution_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub fold: usize,
    pub qa_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<EvalFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CheckpointEntry {
    Record(EvalRecord),
    Failure(EvalFailure),
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Json-lines file of finished questions; existing entries are reused.
    pub checkpoint: Option<PathBuf>,
    /// Flush the checkpoint after this many newly finished questions.
    pub checkpoint_every: usize,
    /// Stop after this many newly processed questions.
    pub limit: Option<usize>,
}

fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointEntry>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read_to_string(path)?;
    let lines: Vec<&str> = raw.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut entries = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(e) => entries.push(e),
            // a crash mid-write can leave a torn final line; cut it off so
            // later appends start on a fresh line
            Err(e) if i + 1 == lines.len() && !raw.ends_with('\n') => {
                tracing::warn!(error = %e, "ignoring torn checkpoint line");
                let keep = raw.rfind('\n').map_or(0, |p| p + 1);
                OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
                return Ok(entries);
            }
            Err(e) => {
                return Err(Error::Load {
                    path: path.to_owned(),
                    message: format!("line {}: {e}", i + 1),
                })
            }
        }
    }
    if !raw.is_empty() && !raw.ends_with('\n') {
        OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
    }
    Ok(entries)
}

fn append_checkpoint(path: &Path, entries: &mut Vec<CheckpointEntry>) -> Result<()> {
    if entries.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for e in entries.drain(..) {
        buf.push_str(&serde_json::to_string(&e)?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Answers and scores every pair in order. Only the pipeline call is timed.
/// A question that fails is recorded as a failure and the run continues.
pub fn run_evaluation(
    pipeline: &dyn AnswerPipeline,
    folds: &[FoldedPair],
    embedder: &dyn Embedder,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    let mut run = EvalRun::default();
    let mut done: HashSet<(usize, String)> = HashSet::new();
    if let Some(path) = &opts.checkpoint {
        let expected: HashSet<(usize, &str)> = folds.iter().map(|f| (f.fold, f.pair.id.as_str())).collect();
        let mut stale = 0usize;
        for entry in read_checkpoint(path)? {
            let key = match &entry {
                CheckpointEntry::Record(r) => (r.fold, r.qa_id.as_str()),
                CheckpointEntry::Failure(f) => (f.fold, f.qa_id.as_str()),
            };
            // entries from another fold assignment, or repeated ones, do not count
            if !expected.contains(&key) || done.contains(&(key.0, key.1.to_owned())) {
                stale += 1;
                continue;
            }
            match entry {
                CheckpointEntry::Record(r) => {
                    done.insert((r.fold, r.qa_id.clone()));
                    run.records.push(r);
                }
                CheckpointEntry::Failure(f) => {
                    done.insert((f.fold, f.qa_id.clone()));
                    run.failures.push(f);
                }
            }
        }
        if stale > 0 {
            tracing::warn!(stale, "ignoring checkpoint entries outside this fold assignment");
        }
        if !done.is_empty() {
            tracing::info!(resumed = done.len(), "resuming from checkpoint");
        }
    }

    let mut pending = Vec::new();
    let mut processed = 0usize;
    for fp in folds {
        if done.contains(&(fp.fold, fp.pair.id.clone())) {
            continue;
        }
        if opts.limit.is_some_and(|l| processed >= l) {
            break;
        }
        processed += 1;
        let fail = |stage: &str, e: Error| EvalFailure {
            fold: fp.fold,
            qa_id: fp.pair.id.clone(),
            stage: stage.to_owned(),
            error: e.to_string(),
        };
        let start = Instant::now();
        let answer = pipeline.answer(&fp.pair.question);
        let execution_time = start.elapsed().as_secs_f64();
        let entry = match answer {
            Err(e) => CheckpointEntry::Failure(fail("answer", e)),
            Ok(ans) => match score_answer(&ans.answer, &fp.pair.ground_truth, embedder) {
                Ok(similarity) => CheckpointEntry::Record(EvalRecord {
                    fold: fp.fold,
                    qa_id: fp.pair.id.clone(),
                    similarity,
                    execution_time,
                }),
                Err(e) => CheckpointEntry::Failure(fail("score", e)),
            },
        };
        match &entry {
            CheckpointEntry::Record(r) => run.records.push(r.clone()),
            CheckpointEntry::Failure(f) => {
                tracing::warn!(qa_id = %f.qa_id, error = %f.error, "question failed");
                run.failures.push(f.clone());
            }
        }
        if let Some(path) = &opts.checkpoint {
            pending.push(entry);
            if pending.len() >= opts.checkpoint_every.max(1) {
                append_checkpoint(path, &mut pending)?;
            }
        }
    }
    if let Some(path) = &opts.checkpoint {
        append_checkpoint(path, &mut pending)?;
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub pipeline: PipelineKind,
    pub successes: usize,
    pub failures: usize,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub mean_execution_time: f64,
}

pub fn summarize_results(pipeline: PipelineKind, run: &EvalRun) -> Result<ResultSummary> {
    let sims: Vec<f64> = run.records.iter().map(|r| r.similarity).collect();
    let times: Vec<f64> = run.records.iter().map(|r| r.execution_time).collect();
    let q = stats::quartiles(&sims).ok_or_else(|| Error::Eval("no successful records to summarize".into()))?;
    Ok(ResultSummary {
        pipeline,
        successes: sims.len(),
        failures: run.failures.len(),
        q1: q.q1,
        median: q.median,
        mean: stats::mean(&sims).expect("non-empty"),
        q3: q.q3,
        mean_execution_time: stats::mean(&times).expect("non-empty"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldBox {
    pub fold: usize,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn fold_boxplots(records: &[EvalRecord]) -> Vec<FoldBox> {
    let mut by_fold: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_fold.entry(r.fold).or_default().push(r.similarity);
    }
    by_fold
        .into_iter()
        .map(|(fold, mut sims)| {
            sims.sort_by(f64::total_cmp);
            let q = stats::quartiles(&sims).expect("non-empty fold");
            FoldBox {
                fold,
                count: sims.len(),
                min: sims[0],
                q1: q.q1,
                median: q.median,
                q3: q.q3,
                max: sims[sims.len() - 1],
                mean: stats::mean(&sims).expect("non-empty fold"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summary: ResultSummary,
    pub folds: usize,
    pub seed: u64,
    pub failed_records: Vec<EvalFailure>,
    /// Effective configuration of the run.
    pub config: serde_json::Value,
}

/// Writes `report.json`, `records.csv` and `boxplot.csv` into `dir`.
pub fn emit_report(dir: &Path, report: &Report, records: &[EvalRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;

    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["fold", "qa_id", "similarity", "execution_time"])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("boxplot.csv"))?;
    for b in fold_boxplots(records) {
        w.serialize(b)?;
    }
    if records.is_empty() {
        w.write_record(["fold", "count", "min", "q1", "median", "q3", "max", "mean"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<Report> {
    let raw = fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&raw).map_err(|e| Error::Load {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Side-by-side tables: similarity quartiles and mean execution time.
pub fn render_comparison(reports: &[Report]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "pipeline", "Q1", "mean", "median", "Q3", "n"
    ));
    for r in reports {
        let s = &r.summary;
        out.push_str(&format!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8}\n",
            s.pipeline.as_str(),
            s.q1,
            s.mean,
            s.median,
            s.q3,
            s.successes
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<10} {:>22} {:>8}\n",
        "pipeline", "mean execution time (s)", "failed"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>22.4} {:>8}\n",
            r.summary.pipeline.as_str(),
            r.summary.mean_execution_time,
            r.summary.failures
        ));
    }
    out
}
