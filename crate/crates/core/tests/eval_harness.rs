use std::thread;
use std::time::Duration;

use k2rag::eval::{
    assign_folds, emit_report, load_report, render_comparison, run_evaluation, summarize_results, EvalOptions, QaPair,
    Report,
};
use k2rag::provider::{MockProvider, ProviderError};
use k2rag::{AnswerPipeline, Embedder, PipelineAnswer, PipelineKind};

struct SlowPipeline(Duration);

impl AnswerPipeline for SlowPipeline {
    fn kind(&self) -> PipelineKind {
        PipelineKind::Semantic
    }

    fn answer(&self, question: &str) -> k2rag::Result<PipelineAnswer> {
        thread::sleep(self.0);
        Ok(PipelineAnswer {
            pipeline: PipelineKind::Semantic,
            question: question.into(),
            answer: format!("about {question}"),
            step_trace: Vec::new(),
            warnings: Vec::new(),
            total_duration_secs: self.0.as_secs_f64(),
        })
    }
}

/// Scoring embedder that is much slower than the pipeline.
struct SlowEmbedder(MockProvider, Duration);

impl Embedder for SlowEmbedder {
    fn embedder_id(&self) -> String {
        self.0.embedder_id()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        thread::sleep(self.1);
        self.0.embed(text)
    }
}

fn pairs(n: usize) -> Vec<QaPair> {
    (0..n)
        .map(|i| QaPair {
            id: format!("q{i}"),
            question: format!("topic {i}"),
            ground_truth: format!("about topic {i}"),
        })
        .collect()
}

#[test]
fn execution_time_covers_only_the_pipeline() {
    let folded = assign_folds(&pairs(4), 2, 7).unwrap();
    let pipeline = SlowPipeline(Duration::from_millis(20));
    let scorer = SlowEmbedder(MockProvider::new(0), Duration::from_millis(60));
    let run = run_evaluation(&pipeline, &folded, &scorer, &EvalOptions::default()).unwrap();
    assert_eq!(run.records.len(), 4);
    for r in &run.records {
        // scoring embeds twice (120ms) and must not leak into the timing
        assert!(r.execution_time >= 0.02, "{}", r.execution_time);
        assert!(r.execution_time < 0.1, "{}", r.execution_time);
    }
}

#[test]
fn report_files_round_trip() {
    let folded = assign_folds(&pairs(12), 3, 1).unwrap();
    let pipeline = SlowPipeline(Duration::ZERO);
    let mock = MockProvider::new(0);
    let run = run_evaluation(&pipeline, &folded, &mock, &EvalOptions::default()).unwrap();
    let report = Report {
        summary: summarize_results(PipelineKind::Semantic, &run).unwrap(),
        folds: 3,
        seed: 1,
        failed_records: run.failures.clone(),
        config: serde_json::json!({"hybrid": {"lambda": 0.8}}),
    };
    let dir = tempfile::tempdir().unwrap();
    emit_report(dir.path(), &report, &run.records).unwrap();
    assert_eq!(load_report(&dir.path().join("report.json")).unwrap(), report);

    let records = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().next(), Some("fold,qa_id,similarity,execution_time"));
    assert_eq!(records.lines().count(), 13);
    let boxplot = std::fs::read_to_string(dir.path().join("boxplot.csv")).unwrap();
    assert_eq!(boxplot.lines().next(), Some("fold,count,min,q1,median,q3,max,mean"));
    assert_eq!(boxplot.lines().count(), 4);

    let table = render_comparison(&[report]);
    assert!(table.contains("semantic"));
    assert!(table.contains("mean execution time"));
}

#[test]
fn empty_run_still_writes_headers() {
    let dir = tempfile::tempdir().unwrap();
    let report = Report {
        summary: k2rag::eval::ResultSummary {
            pipeline: PipelineKind::Kg,
            successes: 0,
            failures: 0,
            q1: 0.0,
            median: 0.0,
            mean: 0.0,
            q3: 0.0,
            mean_execution_time: 0.0,
        },
        folds: 1,
        seed: 0,
        failed_records: Vec::new(),
        config: serde_json::Value::Null,
    };
    emit_report(dir.path(), &report, &[]).unwrap();
    for f in ["records.csv", "boxplot.csv"] {
        assert_eq!(
            std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count(),
            1,
            "{f}"
        );
    }
}
