use serde::{Deserialize, Serialize};

use crate::llm::{estimate_tokens, DEFAULT_BYTES_PER_TOKEN};

/// Byte spans of `text` that each fit the token budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub spans: Vec<(usize, usize)>,
    pub budget: usize,
    pub overlap: usize,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn texts<'t>(&self, text: &'t str) -> Vec<&'t str> {
        self.spans.iter().map(|&(s, e)| &text[s..e]).collect()
    }

    /// The text with overlapping regions counted once.
    pub fn unique_concat(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut covered = 0;
        for &(s, e) in &self.spans {
            let from = s.max(covered);
            if from < e {
                out.push_str(&text[from..e]);
            }
            covered = covered.max(e);
        }
        out
    }
}

/// Sentence units tiling `text`: each ends after a `.`, `!` or `?` and the
/// whitespace run that follows it. Units longer than `max_bytes` are cut at
/// the last char boundary that fits.
fn units(text: &str, max_bytes: usize) -> Vec<(usize, usize)> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        if !chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, n)) = chars.peek() {
            if !n.is_whitespace() {
                break;
            }
            end = j + n.len_utf8();
            chars.next();
        }
        sentences.push((start, end));
        start = end;
    }
    if start < text.len() {
        sentences.push((start, text.len()));
    }

    let mut out = Vec::with_capacity(sentences.len());
    for (mut s, e) in sentences {
        while e - s > max_bytes {
            let mut cut = s + max_bytes;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            if cut == s {
                // a single char wider than the limit still has to go somewhere
                cut = s + text[s..].chars().next().map_or(1, char::len_utf8);
            }
            out.push((s, cut));
            s = cut;
        }
        out.push((s, e));
    }
    out
}

/// Greedy sentence packing. Each chunk takes as many whole units as fit the
/// budget; the next chunk restarts at the earliest unit whose tail of the
/// previous chunk is at most `overlap` tokens and leaves room to advance.
pub fn chunk_text(text: &str, budget: usize, overlap: usize) -> ChunkPlan {
    assert!(budget > overlap, "chunk budget {budget} must exceed overlap {overlap}");
    let mut plan = ChunkPlan {
        spans: Vec::new(),
        budget,
        overlap,
    };
    if text.is_empty() {
        return plan;
    }
    let units = units(text, budget * DEFAULT_BYTES_PER_TOKEN);
    let span_tokens = |a: usize, b: usize| estimate_tokens(&text[units[a].0..units[b - 1].1]);

    let mut i = 0;
    loop {
        let mut j = i + 1;
        while j < units.len() && span_tokens(i, j + 1) <= budget {
            j += 1;
        }
        plan.spans.push((units[i].0, units[j - 1].1));
        if j == units.len() {
            return plan;
        }
        // rewinding only helps if the rewound chunk still reaches a new unit
        i = (i + 1..j)
            .find(|&m| span_tokens(m, j) <= overlap && span_tokens(m, j + 1) <= budget)
            .unwrap_or(j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// A sentence of exactly `bytes` bytes including its trailing space.
    fn sentence(bytes: usize, tag: char) -> String {
        let mut s: String = std::iter::repeat_n(tag, bytes - 2).collect();
        s.push_str(". ");
        s
    }

    #[test]
    fn empty_text_has_no_chunks() {
        assert!(chunk_text("", 10, 2).is_empty());
    }

    #[test]
    fn short_text_is_one_chunk() {
        let text = "One sentence. Two sentences! Three?";
        let plan = chunk_text(text, 3000, 100);
        assert_eq!(plan.spans, vec![(0, text.len())]);
    }

    #[test]
    fn ten_hundred_token_sentences_make_four_chunks() {
        // each sentence is 300 bytes = 100 tokens; 3 fit in 350, and no
        // single-sentence tail fits in an overlap of 50
        let text: String = (0..10).map(|i| sentence(300, (b'a' + i) as char)).collect();
        let plan = chunk_text(&text, 350, 50);
        assert_eq!(plan.spans, vec![(0, 900), (900, 1800), (1800, 2700), (2700, 3000)]);
        assert_eq!(plan.unique_concat(&text), text);
    }

    #[test]
    fn overlap_repeats_trailing_sentences() {
        // 30-byte sentences = 10 tokens; budget 35 fits 3, overlap 12 repeats 1
        let text: String = (0..6).map(|i| sentence(30, (b'a' + i) as char)).collect();
        let plan = chunk_text(&text, 35, 12);
        assert_eq!(plan.spans, vec![(0, 90), (60, 150), (120, 180)]);
        assert_eq!(plan.unique_concat(&text), text);
    }

    #[test]
    fn oversized_sentence_is_hard_split() {
        let text = "x".repeat(100);
        let plan = chunk_text(&text, 10, 0);
        assert_eq!(plan.spans, vec![(0, 30), (30, 60), (60, 90), (90, 100)]);
    }

    #[test]
    fn hard_split_respects_char_boundaries() {
        let text = "é".repeat(40); // 80 bytes
        let plan = chunk_text(&text, 5, 0);
        for piece in plan.texts(&text) {
            assert!(piece.len() <= 15);
        }
        assert_eq!(plan.unique_concat(&text), text);
    }

    #[test]
    fn abbreviations_without_whitespace_do_not_split() {
        let u = units("e.g.x version 2.0 is out. Next", 1000);
        assert_eq!(u, vec![(0, 26), (26, 30)]);
    }

    fn prose() -> impl Strategy<Value = String> {
        proptest::collection::vec(("[a-zA-Zé ]{0,60}", prop_oneof![Just(". "), Just("! "), Just("?\n"), Just(" ")]), 0..40)
            .prop_map(|parts| parts.into_iter().map(|(a, b)| a + b).collect())
    }

    proptest! {
        #[test]
        fn plan_invariants(text in prose(), budget in 2usize..80, overlap_frac in 0.0f64..1.0) {
            let overlap = ((budget as f64 - 1.0) * overlap_frac) as usize;
            let plan = chunk_text(&text, budget, overlap);
            if text.is_empty() {
                prop_assert!(plan.is_empty());
                return Ok(());
            }
            prop_assert_eq!(plan.spans[0].0, 0);
            prop_assert_eq!(plan.spans.last().unwrap().1, text.len());
            for w in plan.spans.windows(2) {
                prop_assert!(w[1].0 > w[0].0 && w[1].0 <= w[0].1 && w[1].1 > w[0].1);
                prop_assert!(estimate_tokens(&text[w[1].0..w[0].1]) <= overlap);
            }
            for piece in plan.texts(&text) {
                prop_assert!(estimate_tokens(piece) <= budget);
            }
            prop_assert_eq!(plan.unique_concat(&text), text);
        }
    }
}
