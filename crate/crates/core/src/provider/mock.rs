use crate::chunking::{join_tokens, split_tokens, truncate_tokens};
use crate::prompts;

use super::{reject_empty, Embedder, GenerationRequest, Generator, ProviderError, Summarizer};

pub const MOCK_EMBED_DIM: usize = 64;

/// Deterministic offline provider.
///
/// * embed: each lowercased token hashes (with the seed) to a ±1 vector of
///   dimension 64; a text embeds to the normalized sum over its token
///   multiset.
/// * summarize: the first `ceil(n / 5)` tokens.
/// * generate: recognizes the engine's prompt templates. Answer prompts
///   echo the head of the context (or "unknown"), question prompts turn the
///   head of the information into a question, extraction prompts emit
///   co-occurrence triples. Any other prompt echoes its last non-empty line.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    answer_tokens: usize,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider {
            seed,
            answer_tokens: 160,
        }
    }

    pub fn with_answer_tokens(mut self, n: usize) -> Self {
        self.answer_tokens = n.max(1);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let h = fnv1a(self.seed, token.as_bytes());
        let mut state = h;
        let mut bits = 0u64;
        for (j, slot) in acc.iter_mut().enumerate() {
            if j % 64 == 0 {
                bits = splitmix64(&mut state);
            }
            *slot += if bits >> (j % 64) & 1 == 1 { 1.0 } else { -1.0 };
        }
    }

    fn answer(&self, context: &str) -> String {
        let head = truncate_tokens(context, self.answer_tokens);
        if head.is_empty() {
            "unknown".to_owned()
        } else {
            head
        }
    }

    fn sub_question(&self, info: &str) -> String {
        let head = truncate_tokens(info, 8);
        if head.is_empty() {
            "what is known?".to_owned()
        } else {
            format!("what about {head}?")
        }
    }

    fn triples(&self, text: &str) -> String {
        let tokens: Vec<&str> = split_tokens(text).collect();
        let mut names: Vec<(String, usize)> = Vec::new();
        for (pos, t) in tokens.iter().enumerate() {
            if t.chars().count() >= 4 && t.chars().all(char::is_alphabetic) {
                let name = t.to_lowercase();
                if !names.iter().any(|(n, _)| *n == name) {
                    names.push((name, pos));
                }
            }
            if names.len() == 4 {
                break;
            }
        }
        let mut lines = Vec::new();
        for pair in names.windows(2) {
            let (a, pos) = &pair[0];
            let (b, _) = &pair[1];
            let lo = pos.saturating_sub(3);
            let hi = (pos + 6).min(tokens.len());
            let description = join_tokens(&tokens[lo..hi]);
            lines.push(format!("{a} | appears with | {b} | {description}"));
        }
        if lines.is_empty() {
            "no facts found".to_owned()
        } else {
            lines.join("\n")
        }
    }
}

impl Generator for MockProvider {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let prompt = req.prompt.as_str();
        let out = if let Some((context, _)) = prompts::parse_generation_prompt(prompt) {
            self.answer(context)
        } else if let Some(info) = prompts::parse_question_prompt(prompt) {
            self.sub_question(info)
        } else if let Some(text) = prompts::parse_extraction_prompt(prompt) {
            self.triples(text)
        } else {
            prompt
                .lines()
                .rev()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or_default()
                .to_owned()
        };
        Ok(out)
    }
}

impl Embedder for MockProvider {
    fn embedder_id(&self) -> String {
        format!("mock-hash-{MOCK_EMBED_DIM}-seed{}", self.seed)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        reject_empty(text, "embedding")?;
        let mut v = vec![0.0; MOCK_EMBED_DIM];
        for token in split_tokens(text) {
            self.token_vector(&token.to_lowercase(), &mut v);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

impl Summarizer for MockProvider {
    fn summarize(&self, text: &str) -> Result<String, ProviderError> {
        reject_empty(text, "summarization")?;
        let n = split_tokens(text).count();
        Ok(truncate_tokens(text, n.div_ceil(5)))
    }
}

/// Generator backed by a closure; for scripted tests and fault injection.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&GenerationRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn generate(&self, req: &GenerationRequest) -> Result<String, ProviderError> {
        req.validate()?;
        (self.0)(req)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::count_tokens;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn embed_is_deterministic_unit_length() {
        let m = MockProvider::new(7);
        let a = m.embed("abc").unwrap();
        assert_eq!(a, m.embed("abc").unwrap());
        assert_eq!(a.len(), MOCK_EMBED_DIM);
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
        // token multiset, case-insensitive
        assert_eq!(m.embed("b a A").unwrap(), m.embed("a b a").unwrap());
        assert_ne!(a, MockProvider::new(8).embed("abc").unwrap());
    }

    #[test]
    fn disjoint_vocabularies_are_near_orthogonal() {
        let m = MockProvider::new(0);
        let a = m.embed("river boat harbor sailor").unwrap();
        let b = m.embed("violin concert melody choir").unwrap();
        let cos = dot(&a, &b);
        // Each cross term is a ±1 sum over 64 random signs: sd 1/8 per pair.
        assert!(cos.abs() < 0.4, "cos = {cos}");

        let mut total = 0.0;
        let n = 200;
        for i in 0..n {
            let a = m.embed(&format!("alpha{i} beta{i}")).unwrap();
            let b = m.embed(&format!("gamma{i} delta{i}")).unwrap();
            total += dot(&a, &b);
        }
        assert!((total / n as f64).abs() < 0.05);
    }

    #[test]
    fn summarize_keeps_first_fifth() {
        let m = MockProvider::new(0);
        let text: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let s = m.summarize(&text.join(" ")).unwrap();
        assert_eq!(count_tokens(&s), 20);
        assert!(s.starts_with("w0 w1 "));
        assert_eq!(m.summarize("one").unwrap(), "one");
        assert!(m.summarize("  ").is_err());
    }

    #[test]
    fn generate_echoes_last_line_for_unknown_prompts() {
        let m = MockProvider::new(0);
        let req = GenerationRequest::new("first\nsecond line\n\n");
        assert_eq!(m.generate(&req).unwrap(), "second line");
        assert!(m.generate(&GenerationRequest::new("")).is_err());
    }

    #[test]
    fn generate_recognizes_templates() {
        let m = MockProvider::new(0).with_answer_tokens(3);
        let answer = m
            .generate(&GenerationRequest::new(prompts::generation_prompt("a b c d e", "q?")))
            .unwrap();
        assert_eq!(answer, "a b c");
        let empty = m
            .generate(&GenerationRequest::new(prompts::generation_prompt("", "q?")))
            .unwrap();
        assert_eq!(empty, "unknown");
        let q = m
            .generate(&GenerationRequest::new(prompts::question_prompt("Acme was founded")))
            .unwrap();
        assert_eq!(q, "what about Acme was founded?");
        let facts = m
            .generate(&GenerationRequest::new(prompts::extraction_prompt(
                "Alice founded Acme in Berlin",
            )))
            .unwrap();
        assert_eq!(
            facts,
            "alice | appears with | founded | Alice founded Acme in Berlin\n\
             founded | appears with | acme | Alice founded Acme in Berlin\n\
             acme | appears with | berlin | Alice founded Acme in Berlin"
        );
    }
}
