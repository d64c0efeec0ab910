//! Entity-relation graph built from LLM-extracted triples.
//!
//! Construction: each chunk goes through the extraction prompt; every
//! `subject | predicate | object | description` line becomes a relation and
//! entities merge by canonical (trimmed, lowercased) name. Querying embeds
//! the question, seeds the top-E entities by cosine, expands H hops, and
//! asks the generator to answer from the collected descriptions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::{count_tokens, truncate_tokens, Chunk, ChunkId, ChunkSet};
use crate::dense::cosine;
use crate::error::{Error, Result};
use crate::persist;
use crate::prompts;
use crate::provider::{Embedder, GenerationRequest, Generator};

const FORMAT: &str = "k2rag-knowledge-graph";
const VERSION: u32 = 1;

/// Merged entity descriptions are cut to this many tokens.
pub const MAX_DESCRIPTION_TOKENS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub description: String,
    pub embedding: Vec<f64>,
    pub source_chunks: BTreeSet<ChunkId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub description: String,
    pub source_chunk: ChunkId,
}

impl Relation {
    /// Identity of the fact, ignoring which chunk it came from.
    fn fact_key(&self) -> (String, String, String, String) {
        (
            self.subject.clone(),
            self.predicate.clone(),
            self.object.clone(),
            self.description.clone(),
        )
    }
}

pub fn canonical_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub relations: Vec<Relation>,
    pub dropped_lines: usize,
}

/// Parses `subject | predicate | object | description` lines. Blank lines
/// are ignored; any other line without exactly four non-empty fields is
/// dropped and counted.
pub fn parse_triples(response: &str, source: &ChunkId) -> Extraction {
    let mut out = Extraction::default();
    for line in response.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let line = line
            .trim_start_matches(['-', '*', '•'])
            .trim_start();
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            out.dropped_lines += 1;
            continue;
        }
        let subject = canonical_name(fields[0]);
        let object = canonical_name(fields[2]);
        out.relations.push(Relation {
            subject,
            predicate: fields[1].to_owned(),
            object,
            description: fields[3].to_owned(),
            source_chunk: source.clone(),
        });
    }
    out
}

pub fn extract_triples(chunk: &Chunk, llm: &dyn Generator) -> Result<Extraction> {
    let response = llm.generate(&GenerationRequest::new(prompts::extraction_prompt(&chunk.text)))?;
    Ok(parse_triples(&response, &chunk.id()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildReport {
    pub chunks: usize,
    pub failed_chunks: Vec<(ChunkId, String)>,
    pub dropped_lines: usize,
    pub entities: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphQueryConfig {
    /// Seed entities taken by cosine similarity to the question.
    pub seed_entities: usize,
    pub hops: usize,
    pub token_budget: usize,
}

impl Default for GraphQueryConfig {
    fn default() -> Self {
        GraphQueryConfig {
            seed_entities: 5,
            hops: 1,
            token_budget: 2000,
        }
    }
}

impl GraphQueryConfig {
    pub(crate) fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.seed_entities == 0 {
            errors.push("kg_query: seed_entities must be positive".into());
        }
        if self.token_budget == 0 {
            errors.push("kg_query: token_budget must be positive".into());
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    embedder_id: String,
    entities: BTreeMap<String, Entity>,
    relations: Vec<Relation>,
    /// entity name -> indices into `relations` touching it
    adjacency: BTreeMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn empty(embedder_id: impl Into<String>) -> Self {
        KnowledgeGraph {
            embedder_id: embedder_id.into(),
            entities: BTreeMap::new(),
            relations: Vec::new(),
            adjacency: BTreeMap::new(),
        }
    }

    /// Extracts and merges triples from every chunk. Chunks whose
    /// extraction call fails are listed in the report and skipped.
    pub fn build(chunks: &ChunkSet, llm: &dyn Generator, embedder: &dyn Embedder) -> Result<(Self, BuildReport)> {
        let mut report = BuildReport {
            chunks: chunks.len(),
            ..Default::default()
        };
        let mut relations = Vec::new();
        for chunk in chunks {
            match extract_triples(chunk, llm) {
                Ok(ex) => {
                    report.dropped_lines += ex.dropped_lines;
                    relations.extend(ex.relations);
                }
                Err(e) => {
                    tracing::warn!(chunk = %chunk.id(), error = %e, "triple extraction failed");
                    report.failed_chunks.push((chunk.id(), e.to_string()));
                }
            }
        }
        let graph = Self::from_relations(relations, embedder)?;
        report.entities = graph.entities.len();
        report.relations = graph.relations.len();
        Ok((graph, report))
    }

    /// Merges relations into a graph and embeds each entity from its name
    /// and merged description. Identical facts are kept once.
    pub fn from_relations(candidates: Vec<Relation>, embedder: &dyn Embedder) -> Result<Self> {
        let mut graph = KnowledgeGraph::empty(embedder.embedder_id());
        let mut descriptions: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut sources: BTreeMap<String, BTreeSet<ChunkId>> = BTreeMap::new();
        let mut facts: HashSet<(String, String, String, String)> = HashSet::new();
        for rel in candidates {
            for name in [&rel.subject, &rel.object] {
                let descs = descriptions.entry(name.clone()).or_default();
                if !descs.contains(&rel.description) {
                    descs.push(rel.description.clone());
                }
                sources
                    .entry(name.clone())
                    .or_default()
                    .insert(rel.source_chunk.clone());
            }
            if facts.insert(rel.fact_key()) {
                graph.relations.push(rel);
            }
        }
        for (name, descs) in descriptions {
            let description = truncate_tokens(&descs.join(" "), MAX_DESCRIPTION_TOKENS);
            let embedding = embedder
                .embed(&format!("{name}: {description}"))
                .map_err(|e| Error::Index(format!("embedding entity {name:?}: {e}")))?;
            if let Some(first) = graph.entities.values().next() {
                if first.embedding.len() != embedding.len() {
                    return Err(Error::Index(format!(
                        "entity {name:?}: inconsistent embedding dimension"
                    )));
                }
            }
            let source_chunks = sources.remove(&name).unwrap_or_default();
            graph.entities.insert(
                name.clone(),
                Entity {
                    name,
                    description,
                    embedding,
                    source_chunks,
                },
            );
        }
        graph.rebuild_adjacency();
        Ok(graph)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adjacency: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rel) in self.relations.iter().enumerate() {
            adjacency.entry(rel.subject.clone()).or_default().push(i);
            if rel.object != rel.subject {
                adjacency.entry(rel.object.clone()).or_default().push(i);
            }
        }
        self.adjacency = adjacency;
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn entities(&self) -> &BTreeMap<String, Entity> {
        &self.entities
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.get(&canonical_name(name))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn neighbors<'a>(&'a self, name: &'a str) -> impl Iterator<Item = (&'a Relation, &'a str)> + 'a {
        self.adjacency.get(name).into_iter().flatten().map(move |&i| {
            let rel = &self.relations[i];
            let other = if rel.subject == name { &rel.object } else { &rel.subject };
            (rel, other.as_str())
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Every relation endpoint resolves and adjacency is the exact inverse
    /// of the relation list.
    pub fn check_well_formed(&self) -> Result<()> {
        for (i, rel) in self.relations.iter().enumerate() {
            for end in [&rel.subject, &rel.object] {
                if !self.entities.contains_key(end) {
                    return Err(Error::Index(format!("relation {i} has dangling endpoint {end:?}")));
                }
                if !self.adjacency.get(end).is_some_and(|a| a.contains(&i)) {
                    return Err(Error::Index(format!("adjacency of {end:?} misses relation {i}")));
                }
            }
        }
        for (name, list) in &self.adjacency {
            for &i in list {
                let rel = self
                    .relations
                    .get(i)
                    .ok_or_else(|| Error::Index(format!("adjacency of {name:?} points past relations")))?;
                if &rel.subject != name && &rel.object != name {
                    return Err(Error::Index(format!(
                        "adjacency of {name:?} lists unrelated relation {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Entity names within `hops` undirected steps of any seed, with their
    /// distance.
    pub fn neighborhood(&self, seeds: &[&str], hops: usize) -> HashMap<String, usize> {
        let mut dist: HashMap<String, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        for &s in seeds {
            if self.entities.contains_key(s) && !dist.contains_key(s) {
                dist.insert(s.to_owned(), 0);
                queue.push_back(s.to_owned());
            }
        }
        while let Some(name) = queue.pop_front() {
            let d = dist[&name];
            if d == hops {
                continue;
            }
            for (_, other) in self.neighbors(&name) {
                if !dist.contains_key(other) {
                    dist.insert(other.to_owned(), d + 1);
                    queue.push_back(other.to_owned());
                }
            }
        }
        dist
    }

    /// Context lines for a question, most relevant first, within the token
    /// budget. Entities are ordered by hop distance then similarity; each
    /// entity line is followed by relations linking it to entities already
    /// listed.
    pub fn retrieve_context(&self, question_vec: &[f64], cfg: &GraphQueryConfig) -> Result<Vec<String>> {
        if self.entities.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.entities.values().next().map(|e| e.embedding.len());
        if dim != Some(question_vec.len()) {
            return Err(Error::Query(format!(
                "question vector has dimension {}, graph has {:?}",
                question_vec.len(),
                dim
            )));
        }
        let sims: HashMap<&str, f64> = self
            .entities
            .values()
            .map(|e| (e.name.as_str(), cosine(question_vec, &e.embedding)))
            .collect();
        let by_relevance = |a: &(&str, f64), b: &(&str, f64)| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0));

        let mut ranked: Vec<(&str, f64)> = sims.iter().map(|(n, s)| (*n, *s)).collect();
        ranked.sort_by(by_relevance);
        let seeds: Vec<&str> = ranked.iter().take(cfg.seed_entities).map(|(n, _)| *n).collect();
        let dist = self.neighborhood(&seeds, cfg.hops);

        let mut order: Vec<(&str, usize, f64)> = dist
            .iter()
            .map(|(n, &d)| {
                let name = self
                    .entities
                    .get_key_value(n)
                    .expect("neighborhood names exist")
                    .0
                    .as_str();
                (name, d, sims[name])
            })
            .collect();
        order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| by_relevance(&(a.0, a.2), &(b.0, b.2))));

        let mut lines = Vec::new();
        let mut seen_lines = HashSet::new();
        let mut emitted: HashSet<&str> = HashSet::new();
        let mut used_relations = HashSet::new();
        let mut budget = cfg.token_budget;
        let mut push = |line: String, lines: &mut Vec<String>| -> bool {
            if !seen_lines.insert(line.clone()) {
                return true;
            }
            let cost = count_tokens(&line);
            if cost > budget {
                return false;
            }
            budget -= cost;
            lines.push(line);
            true
        };
        'outer: for (name, _, _) in order {
            let entity = &self.entities[name];
            if !push(format!("{}: {}", entity.name, entity.description), &mut lines) {
                break;
            }
            emitted.insert(name);
            for &i in self.adjacency.get(name).into_iter().flatten() {
                let rel = &self.relations[i];
                let other = if rel.subject == name { &rel.object } else { &rel.subject };
                if !emitted.contains(other.as_str()) || !used_relations.insert(i) {
                    continue;
                }
                let line = format!("{} {} {}: {}", rel.subject, rel.predicate, rel.object, rel.description);
                if !push(line, &mut lines) {
                    break 'outer;
                }
            }
        }
        Ok(lines)
    }

    /// Answers `question` from the graph neighborhood of its closest
    /// entities. An empty graph answers from an empty context.
    pub fn query(
        &self,
        question: &str,
        embedder: &dyn Embedder,
        llm: &dyn Generator,
        cfg: &GraphQueryConfig,
    ) -> Result<String> {
        let context = if self.entities.is_empty() {
            String::new()
        } else {
            let id = embedder.embedder_id();
            if id != self.embedder_id {
                return Err(Error::Query(format!(
                    "graph was built with embedder {:?}, query uses {id:?}",
                    self.embedder_id
                )));
            }
            let qv = embedder.embed(question)?;
            self.retrieve_context(&qv, cfg)?.join("\n")
        };
        Ok(llm.generate(&GenerationRequest::new(prompts::generation_prompt(&context, question)))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(path, FORMAT, VERSION, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let graph: KnowledgeGraph = persist::load(path, FORMAT, VERSION)?;
        graph.check_well_formed().map_err(|e| Error::Load {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Ok(graph)
    }
}
