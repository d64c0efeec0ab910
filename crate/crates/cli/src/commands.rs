use std::fs;
use std::path::{Path, PathBuf};

use k2rag::corpus::{
    load_corpus, load_summarized, reduction_stats, save_summarized, summarize_corpus, CorpusFormat, LoadOptions,
};
use k2rag::eval::{
    assign_folds, emit_report, load_qa, load_report, render_comparison, run_evaluation, summarize_results, EvalOptions,
    Report,
};
use k2rag::{
    chunk_corpus, AnswerPipeline, ChunkSet, DenseIndex, EngineConfig, Error, KnowledgeGraph, Pipeline, PipelineKind,
    Result, SparseIndex, VectorStores,
};
use serde_json::json;

use crate::{EvalArgs, IndexArgs, Mode, QueryArgs, ReportArgs, RetrievalOverrides, Store, SummarizeArgs};

const CHUNKS_VECTOR: &str = "chunks-vector.jsonl";
const CHUNKS_KG: &str = "chunks-kg.jsonl";
const SPARSE: &str = "sparse.json";
const DENSE: &str = "dense.json";
const KG: &str = "kg.json";

pub fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    let cfg = match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::from_toml("")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidInput(format!("no {what} given (flag or [paths] in config)")))
}

fn load_raw(cfg: &EngineConfig, path: &Path, format: Option<String>, skip_malformed: bool) -> Result<k2rag::Corpus> {
    let format = match format {
        Some(f) => f.parse()?,
        None => cfg
            .corpus
            .format
            .or_else(|| CorpusFormat::from_path(path))
            .ok_or_else(|| Error::InvalidInput(format!("cannot guess corpus format of {}", path.display())))?,
    };
    let opts = LoadOptions {
        format,
        fields: cfg.corpus.fields.clone(),
        skip_malformed: skip_malformed || cfg.corpus.skip_malformed,
    };
    let loaded = load_corpus(path, &opts)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.corpus)
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

pub fn summarize(cfg: &EngineConfig, args: SummarizeArgs) -> Result<()> {
    let corpus_path = required(args.corpus, &cfg.paths.corpus, "corpus")?;
    let out = required(args.out, &cfg.paths.summarized, "summarized output path")?;
    let corpus = load_raw(cfg, &corpus_path, args.format, args.skip_malformed)?;
    let providers = cfg.providers()?;
    let parallel = args.parallel.unwrap_or(cfg.corpus.parallel);
    let outcome = summarize_corpus(&corpus, providers.summarizer.as_ref(), parallel)?;
    for f in &outcome.failures {
        eprintln!(
            "warning: document {} ({}) not summarized: {}",
            f.index, f.doc_id, f.error
        );
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_summarized(&outcome.summaries, &out)?;
    let stats = reduction_stats(&corpus, &outcome.summaries)?;
    print_json(&json!({
        "documents": corpus.len(),
        "summarized": outcome.summaries.len(),
        "failed": outcome.failures.len(),
        "mean_reduction_ratio": stats.mean_ratio,
        "reduction_quartiles": stats.quartiles,
        "output": out,
    }));
    Ok(())
}

pub fn index(cfg: &EngineConfig, args: IndexArgs) -> Result<()> {
    let stores = if args.store.is_empty() {
        vec![Store::Sparse, Store::Dense, Store::Kg]
    } else {
        args.store
    };
    let texts: Vec<(String, String)> = match args.mode {
        Mode::Summarized => {
            let path = required(args.summarized, &cfg.paths.summarized, "summarized corpus")?;
            load_summarized(&path)?
                .into_iter()
                .map(|d| (d.source_id, d.summary))
                .collect()
        }
        Mode::Raw => {
            let path = required(args.corpus, &cfg.paths.corpus, "corpus")?;
            load_raw(cfg, &path, args.format, args.skip_malformed)?
                .iter()
                .map(|d| (d.id.clone(), d.full_text()))
                .collect()
        }
    };
    let dir = args
        .index_dir
        .unwrap_or_else(|| cfg.paths.index_dir.clone())
        .join(args.mode.dir_name());
    fs::create_dir_all(&dir)?;
    let providers = cfg.providers()?;
    let mut report = serde_json::Map::new();
    report.insert("documents".into(), json!(texts.len()));
    report.insert("dir".into(), json!(dir));

    if stores.contains(&Store::Sparse) || stores.contains(&Store::Dense) {
        let chunks = chunk_corpus(texts.iter().map(|(i, t)| (i, t)), &cfg.chunking.vector)?;
        chunks.write_jsonl(&dir.join(CHUNKS_VECTOR))?;
        report.insert("vector_chunks".into(), json!(chunks.len()));
        if stores.contains(&Store::Sparse) {
            let sparse = SparseIndex::build(&chunks);
            sparse.save(&dir.join(SPARSE))?;
            report.insert("sparse_terms".into(), json!(sparse.term_count()));
        }
        if stores.contains(&Store::Dense) {
            let dense = DenseIndex::build(&chunks, providers.embedder.as_ref())?;
            dense.save(&dir.join(DENSE))?;
            report.insert("dense_vectors".into(), json!(dense.len()));
            report.insert("embedder_id".into(), json!(dense.embedder_id()));
        }
    }
    if stores.contains(&Store::Kg) {
        let chunks = chunk_corpus(texts.iter().map(|(i, t)| (i, t)), &cfg.chunking.kg)?;
        chunks.write_jsonl(&dir.join(CHUNKS_KG))?;
        let (graph, build) = KnowledgeGraph::build(&chunks, providers.generator.as_ref(), providers.embedder.as_ref())?;
        for (id, e) in &build.failed_chunks {
            eprintln!("warning: extraction failed for chunk {id}: {e}");
        }
        graph.save(&dir.join(KG))?;
        report.insert("kg".into(), serde_json::to_value(&build)?);
    }
    print_json(&serde_json::Value::Object(report));
    Ok(())
}

fn apply_overrides(cfg: &mut EngineConfig, o: &RetrievalOverrides) -> Result<()> {
    if let Some(l) = o.lambda {
        cfg.hybrid.lambda = l;
    }
    if let Some(k) = o.k {
        cfg.hybrid.k = k;
    }
    if let Some(p) = o.pool {
        cfg.hybrid.candidate_pool_size = p;
    }
    cfg.hybrid.validate()
}

fn open_pipeline(cfg: &EngineConfig, kind: PipelineKind, index_dir: Option<&Path>) -> Result<Pipeline> {
    let dir = index_dir
        .unwrap_or(&cfg.paths.index_dir)
        .join(Mode::for_pipeline(kind).dir_name());
    let kg = match kind {
        PipelineKind::Kg | PipelineKind::K2rag => Some(KnowledgeGraph::load(&dir.join(KG))?),
        _ => None,
    };
    let vectors = match kind {
        PipelineKind::Kg => None,
        _ => Some(VectorStores {
            chunks: ChunkSet::read_jsonl(&dir.join(CHUNKS_VECTOR))?,
            sparse: SparseIndex::load(&dir.join(SPARSE))?,
            dense: DenseIndex::load(&dir.join(DENSE))?,
        }),
    };
    Pipeline::new(kind, cfg.providers()?, cfg.pipeline(), kg, vectors)
}

pub fn query(mut cfg: EngineConfig, args: QueryArgs) -> Result<()> {
    apply_overrides(&mut cfg, &args.overrides)?;
    let pipeline = open_pipeline(&cfg, args.pipeline, args.overrides.index_dir.as_deref())?;
    let answer = pipeline.answer(&args.question)?;
    for w in &answer.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.trace {
        answer.write_trace(path)?;
    }
    println!("{}", answer.answer);
    Ok(())
}

pub fn eval(mut cfg: EngineConfig, args: EvalArgs) -> Result<()> {
    apply_overrides(&mut cfg, &args.overrides)?;
    if let Some(f) = args.folds {
        cfg.eval.folds = f;
    }
    if let Some(s) = args.seed {
        cfg.eval.seed = s;
    }
    cfg.validate()?;
    let out = args
        .out
        .unwrap_or_else(|| cfg.paths.output_dir.join(args.pipeline.as_str()));
    fs::create_dir_all(&out)?;

    let pairs = load_qa(&args.qa)?;
    let folded = assign_folds(&pairs, cfg.eval.folds, cfg.eval.seed)?;
    let pipeline = open_pipeline(&cfg, args.pipeline, args.overrides.index_dir.as_deref())?;
    let scorer = cfg.scoring_embedder()?;
    let opts = EvalOptions {
        checkpoint: Some(out.join("checkpoint.jsonl")),
        checkpoint_every: cfg.eval.checkpoint_every,
        limit: args.limit,
    };
    let run = run_evaluation(&pipeline, &folded, scorer.as_ref(), &opts)?;
    let finished = run.records.len() + run.failures.len();
    if finished < folded.len() {
        eprintln!(
            "note: {finished} of {} questions done; rerun to resume from the checkpoint",
            folded.len()
        );
    }
    let report = Report {
        summary: summarize_results(args.pipeline, &run)?,
        folds: cfg.eval.folds,
        seed: cfg.eval.seed,
        failed_records: run.failures.clone(),
        config: cfg.echo(),
    };
    emit_report(&out, &report, &run.records)?;
    print!("{}", render_comparison(std::slice::from_ref(&report)));
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let reports = args
        .reports
        .iter()
        .map(|p| {
            if p.is_dir() {
                load_report(&p.join("report.json"))
            } else {
                load_report(p)
            }
        })
        .collect::<Result<Vec<Report>>>()?;
    print!("{}", render_comparison(&reports));
    Ok(())
}
