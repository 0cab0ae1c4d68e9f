//! Planted-topic corpora for checking that the sampler recovers known
//! structure.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::{Corpus, UniformSource};

pub const PLANTED_TOPICS: usize = 3;
pub const PLANTED_DOCS: usize = 60;
pub const PLANTED_VOCAB: usize = 30;
pub const PLANTED_DOC_LEN: usize = 40;
pub const SIGNATURE_WORDS: usize = 3;
const SIGNATURE_WEIGHT: f64 = 0.2;

/// Three topics over disjoint ten-word blocks. In each block the first three
/// words are the topic's signature and carry 0.2 probability each; the other
/// seven share the remaining 0.4. Document `d` is drawn entirely from topic
/// `d % 3`.
///
/// Returns the corpus and, per planted topic, its signature word ids.
pub fn planted_corpus(seed: u64) -> (Corpus, Vec<Vec<u32>>) {
    let block = PLANTED_VOCAB / PLANTED_TOPICS;
    let filler = (1.0 - SIGNATURE_WEIGHT * SIGNATURE_WORDS as f64) / (block - SIGNATURE_WORDS) as f64;
    let weights: Vec<f64> = (0..block)
        .map(|j| if j < SIGNATURE_WORDS { SIGNATURE_WEIGHT } else { filler })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let documents: Vec<Vec<u32>> = (0..PLANTED_DOCS)
        .map(|d| {
            let topic = d % PLANTED_TOPICS;
            (0..PLANTED_DOC_LEN)
                .map(|_| {
                    let u = rng.next_unit();
                    let mut acc = 0.0;
                    let j = weights
                        .iter()
                        .position(|w| {
                            acc += w;
                            u < acc
                        })
                        .unwrap_or(block - 1);
                    (topic * block + j) as u32
                })
                .collect()
        })
        .collect();
    let vocabulary = (0..PLANTED_VOCAB)
        .map(|w| format!("topic{}word{}", w / block, w % block))
        .collect();
    let signatures = (0..PLANTED_TOPICS)
        .map(|t| (0..SIGNATURE_WORDS).map(|j| (t * block + j) as u32).collect())
        .collect();
    let corpus = Corpus {
        documents,
        vocabulary,
        doc_ids: (0..PLANTED_DOCS).map(|d| format!("doc{d}")).collect(),
        doc_dates: vec![None; PLANTED_DOCS],
    };
    (corpus, signatures)
}

/// Assignment of rows to distinct columns maximizing the total score, by
/// exhaustive search. `result[row] = column`. Meant for a handful of topics.
pub fn best_match(score: &[Vec<f64>]) -> Vec<usize> {
    let rows = score.len();
    let cols = score.first().map_or(0, Vec::len);
    assert!(rows <= cols, "need at least as many columns as rows");
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut current = Vec::with_capacity(rows);
    let mut used = vec![false; cols];
    fn search(
        score: &[Vec<f64>],
        current: &mut Vec<usize>,
        used: &mut [bool],
        total: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let row = current.len();
        if row == score.len() {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        for col in 0..used.len() {
            if used[col] {
                continue;
            }
            used[col] = true;
            current.push(col);
            search(score, current, used, total + score[row][col], best);
            current.pop();
            used[col] = false;
        }
    }
    search(score, &mut current, &mut used, 0.0, &mut best);
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_corpus_shape() {
        let (c, sigs) = planted_corpus(42);
        c.validate().unwrap();
        assert_eq!(c.len(), 60);
        assert_eq!(c.vocab_size(), 30);
        assert_eq!(sigs, vec![vec![0, 1, 2], vec![10, 11, 12], vec![20, 21, 22]]);
        for (d, doc) in c.documents.iter().enumerate() {
            assert!(doc.iter().all(|&w| w as usize / 10 == d % 3));
        }
        assert_eq!(planted_corpus(42), planted_corpus(42));
    }

    #[test]
    fn best_match_finds_the_optimal_permutation() {
        let score = vec![vec![1.0, 5.0, 0.0], vec![4.0, 4.5, 0.0], vec![0.0, 0.0, 2.0]];
        // greedy would give row 0 column 1 and row 1 column 0: 5 + 4 + 2 = 11
        assert_eq!(best_match(&score), vec![1, 0, 2]);
        let tricky = vec![vec![3.0, 2.0], vec![3.0, 0.0]];
        assert_eq!(best_match(&tricky), vec![1, 0]);
    }
}
