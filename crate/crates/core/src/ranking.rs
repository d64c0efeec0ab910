use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chunking::ChunkId;

/// Raw per-chunk scores for one query.
pub type ScoreMap = HashMap<ChunkId, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: ChunkId,
    pub score: f64,
}

/// Descending score, ties broken by `(doc_id, chunk_index)` ascending.
pub fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Sorts scores under [`rank_order`] and keeps the first `k` (all when `None`).
pub fn rank(scores: impl IntoIterator<Item = (ChunkId, f64)>, k: Option<usize>) -> Vec<Scored> {
    let mut ranked: Vec<Scored> = scores.into_iter().map(|(id, score)| Scored { id, score }).collect();
    match k {
        Some(k) if k < ranked.len() => {
            ranked.select_nth_unstable_by(k, rank_order);
            ranked.truncate(k);
            ranked.sort_unstable_by(rank_order);
        }
        _ => ranked.sort_unstable_by(rank_order),
    }
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_chunk_id() {
        let scores = vec![
            (ChunkId::new("b", 1), 1.0),
            (ChunkId::new("a", 2), 1.0),
            (ChunkId::new("a", 1), 1.0),
            (ChunkId::new("c", 1), 2.0),
        ];
        let ids: Vec<String> = rank(scores.clone(), None).iter().map(|s| s.id.to_string()).collect();
        assert_eq!(ids, ["c#1", "a#1", "a#2", "b#1"]);
        let top2: Vec<String> = rank(scores, Some(2)).iter().map(|s| s.id.to_string()).collect();
        assert_eq!(top2, ["c#1", "a#1"]);
    }
}
