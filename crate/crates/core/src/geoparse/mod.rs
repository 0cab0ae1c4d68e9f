//! The "extract spatial data" stage: gazetteer-driven toponym recognition
//! and population-based resolution.

mod gazetteer;

pub use gazetteer::{parse_stoplist, Gazetteer, GazetteerEntry, BUNDLED_GAZETTEER, BUNDLED_STOPLIST};

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Article;

/// Longest candidate sequence, counted in tokens.
pub const MAX_SEQUENCE_TOKENS: usize = 4;
const CONNECTORS: [&str; 2] = ["of", "the"];

#[derive(Debug, Error)]
pub enum GeoparseError {
    #[error("gazetteer line {line}: {reason}")]
    MalformedGazetteer { line: usize, reason: String },
    #[error("no gazetteer entry named `{0}`")]
    Unresolvable(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing mentions: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToponymCandidate {
    pub surface: String,
    pub byte_start: usize,
    pub byte_end: usize,
    pub char_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextField {
    Text,
    Title,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceMention {
    pub article_url: String,
    pub surface: String,
    pub resolved_name: String,
    pub country_code: String,
    pub latitude: f64,
    pub longitude: f64,
    pub char_offset: usize,
    pub field: TextField,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    start: usize,
    end: usize,
    char_start: usize,
}

fn joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Letter runs, allowing `-` and apostrophes between letters.
fn tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().enumerate().peekable();
    while let Some((ci, (bi, c))) = chars.next() {
        if !c.is_alphabetic() {
            continue;
        }
        let mut end = bi + c.len_utf8();
        loop {
            match chars.peek() {
                Some(&(_, (j, n))) if n.is_alphabetic() => {
                    end = j + n.len_utf8();
                    chars.next();
                }
                Some(&(_, (_, n))) if joiner(n) && text[end + n.len_utf8()..].starts_with(char::is_alphabetic) => {
                    chars.next();
                }
                _ => break,
            }
        }
        out.push(Token {
            start: bi,
            end,
            char_start: ci,
        });
    }
    out
}

fn capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Only spaces or tabs may separate the tokens of one name.
fn same_line_gap(gap: &str) -> bool {
    !gap.is_empty() && gap.chars().all(|c| c == ' ' || c == '\t' || c == '\u{a0}')
}

fn sentence_initial(text: &str, start: usize) -> bool {
    for c in text[..start].chars().rev() {
        match c {
            '.' | '!' | '?' | '\n' => return true,
            c if c.is_whitespace() => continue,
            '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' => continue,
            _ => return false,
        }
    }
    true
}

/// Capitalized sequences of up to four tokens that name a gazetteer entry,
/// longest match first, in text order.
pub fn recognize_toponyms(text: &str, gazetteer: &Gazetteer) -> Vec<ToponymCandidate> {
    let toks = tokens(text);
    let longest = gazetteer.max_tokens().min(MAX_SEQUENCE_TOKENS);
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let word = |k: usize| &text[toks[k].start..toks[k].end];
        if !capitalized(word(i)) {
            i += 1;
            continue;
        }
        let mut matched = None;
        let mut len = 1;
        while len <= longest && i + len <= toks.len() {
            let last = i + len - 1;
            if len > 1 && !same_line_gap(&text[toks[last - 1].end..toks[last].start]) {
                break;
            }
            let ok_word = capitalized(word(last)) || (len > 1 && CONNECTORS.contains(&word(last)));
            if !ok_word {
                break;
            }
            if capitalized(word(last)) {
                let key: Vec<&str> = (i..=last).map(word).collect();
                if !gazetteer.lookup(&key.join(" ")).is_empty() {
                    matched = Some(len);
                }
            }
            len += 1;
        }
        match matched {
            Some(1) if gazetteer.is_stopword(word(i)) && sentence_initial(text, toks[i].start) => i += 1,
            Some(len) => {
                let (start, end) = (toks[i].start, toks[i + len - 1].end);
                out.push(ToponymCandidate {
                    surface: text[start..end].to_string(),
                    byte_start: start,
                    byte_end: end,
                    char_offset: toks[i].char_start,
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Highest population wins; ties go to the smallest (country code, name).
pub fn resolve_toponym<'g>(surface: &str, gazetteer: &'g Gazetteer) -> Result<&'g GazetteerEntry, GeoparseError> {
    let key = surface.split_whitespace().collect::<Vec<_>>().join(" ");
    gazetteer
        .lookup(&key)
        .iter()
        .map(|&i| gazetteer.entry(i))
        .min_by(|a, b| {
            b.population
                .cmp(&a.population)
                .then_with(|| a.country_code.cmp(&b.country_code))
                .then_with(|| a.name.cmp(&b.name))
        })
        .ok_or_else(|| GeoparseError::Unresolvable(surface.to_string()))
}

/// Mentions in one article, one per resolved place. The body is scanned
/// before the title, so offsets refer to the body whenever the place
/// appears there.
pub fn geoparse_article(url: &str, title: &str, text: &str, gazetteer: &Gazetteer) -> Vec<PlaceMention> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (field, content) in [(TextField::Text, text), (TextField::Title, title)] {
        for candidate in recognize_toponyms(content, gazetteer) {
            let Ok(entry) = resolve_toponym(&candidate.surface, gazetteer) else {
                continue;
            };
            let place = (entry.name.clone(), entry.country_code.clone(), entry.latitude.to_bits(), entry.longitude.to_bits());
            if !seen.insert(place) {
                continue;
            }
            out.push(PlaceMention {
                article_url: url.to_string(),
                surface: candidate.surface,
                resolved_name: entry.name.clone(),
                country_code: entry.country_code.clone(),
                latitude: entry.latitude,
                longitude: entry.longitude,
                char_offset: candidate.char_offset,
                field,
            });
        }
    }
    out
}

pub fn geoparse_corpus(articles: &[Article], gazetteer: &Gazetteer) -> Vec<PlaceMention> {
    articles
        .iter()
        .flat_map(|a| geoparse_article(a.url.as_str(), &a.title, &a.text, gazetteer))
        .collect()
}

pub fn write_mentions_csv(path: &Path, mentions: &[PlaceMention]) -> Result<(), GeoparseError> {
    let mut w = csv::Writer::from_path(path)?;
    for m in mentions {
        w.serialize(m)?;
    }
    w.flush().map_err(|e| GeoparseError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_mentions_csv(path: &Path) -> Result<Vec<PlaceMention>, GeoparseError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<_, _>>().map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(name: &str, alts: &[&str], lat: f64, lon: f64, pop: u64, cc: &str) -> GazetteerEntry {
        GazetteerEntry {
            name: name.into(),
            alternate_names: alts.iter().map(|s| s.to_string()).collect(),
            latitude: lat,
            longitude: lon,
            population: pop,
            country_code: cc.into(),
        }
    }

    fn gaz() -> Gazetteer {
        Gazetteer::from_entries(vec![
            entry("New York City", &["New York"], 40.7128, -74.006, 8_336_817, "US"),
            entry("York", &[], 53.96, -1.08, 153_717, "GB"),
            entry("London", &[], 51.5074, -0.1278, 8_961_989, "GB"),
            entry("London", &[], 42.9834, -81.233, 422_324, "CA"),
            entry("Paris", &[], 48.8566, 2.3522, 2_138_551, "FR"),
            entry("Paris", &[], 33.6609, -95.5555, 24_782, "US"),
            entry("Isle of Man", &[], 54.23, -4.55, 84_069, "IM"),
            entry("Springfield", &[], 1.0, 1.0, 100, "US"),
            entry("Springfield", &[], 2.0, 2.0, 100, "GB"),
            entry("Reading", &[], 51.45, -0.97, 174_224, "GB"),
            entry("Port-au-Prince", &[], 18.54, -72.34, 1_234_742, "HT"),
        ])
        .with_stoplist(["Reading".to_string(), "May".to_string()])
    }

    fn surfaces(text: &str) -> Vec<String> {
        recognize_toponyms(text, &gaz()).into_iter().map(|c| c.surface).collect()
    }

    #[test]
    fn longest_match_wins() {
        let found = recognize_toponyms("The trial ran in New York last fall.", &gaz());
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].surface, "New York");
        assert_eq!(found[0].char_offset, 17);
    }

    #[test]
    fn multiple_places_in_text_order() {
        assert_eq!(surfaces("London and Paris announced joint funding."), ["London", "Paris"]);
        assert!(surfaces("No places here.").is_empty());
    }

    #[test]
    fn internal_connectors_and_hyphens() {
        assert_eq!(surfaces("Flights from the Isle of Man to Port-au-Prince."), ["Isle of Man", "Port-au-Prince"]);
        assert!(surfaces("the isle of man").is_empty());
    }

    #[test]
    fn names_do_not_span_lines_or_punctuation() {
        assert_eq!(surfaces("Visit New\nYork."), ["York"]);
        assert_eq!(surfaces("in New, York"), ["York"]);
    }

    #[test]
    fn sentence_initial_stopwords_are_skipped() {
        assert!(surfaces("Reading is good for memory.").is_empty());
        assert!(surfaces("He said. \"Reading helps.\"").is_empty());
        assert_eq!(surfaces("Researchers in Reading agreed."), ["Reading"]);
    }

    #[test]
    fn case_folded_lookup_is_a_fallback() {
        assert_eq!(surfaces("Rallies in PARIS and LONDON."), ["PARIS", "LONDON"]);
    }

    #[test]
    fn resolution_prefers_population_then_country_code() {
        let g = gaz();
        assert_eq!(resolve_toponym("Paris", &g).unwrap().country_code, "FR");
        assert_eq!(resolve_toponym("London", &g).unwrap().country_code, "GB");
        assert_eq!(resolve_toponym("Springfield", &g).unwrap().country_code, "GB");
        assert_eq!(resolve_toponym("York", &g).unwrap().name, "York");
        assert!(matches!(resolve_toponym("Atlantis", &g), Err(GeoparseError::Unresolvable(_))));
    }

    #[test]
    fn one_mention_per_place_per_article() {
        let text = "London trials. More London results. London again, then Paris.";
        let m = geoparse_article("u", "London memory study", text, &gaz());
        let names: Vec<(&str, TextField)> = m.iter().map(|m| (m.resolved_name.as_str(), m.field)).collect();
        assert_eq!(names, [("London", TextField::Text), ("Paris", TextField::Text)]);

        let title_only = geoparse_article("u", "Paris clinic opens", "A clinic opened this week to patients.", &gaz());
        assert_eq!(title_only.len(), 1);
        assert_eq!(title_only[0].field, TextField::Title);
        assert!(geoparse_corpus(&[], &gaz()).is_empty());
    }

    #[test]
    fn mentions_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = geoparse_article("https://x.org/a", "", "Studies in London and Paris.", &gaz());
        write_mentions_csv(&path, &m).unwrap();
        assert_eq!(read_mentions_csv(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn offsets_are_sound_and_coordinates_verbatim(
            words in proptest::collection::vec(
                prop_oneof![
                    Just("London"), Just("New York"), Just("Paris"), Just("the"), Just("Isle of Man"), Just("é"),
                    Just("Reading"), Just("."), Just("\n"), Just("May"), Just("York"), Just("Zürich"), Just(","),
                ],
                0..30,
            )
        ) {
            let text = words.join(" ");
            let g = gaz();
            let coords: Vec<(f64, f64)> = g.entries().iter().map(|e| (e.latitude, e.longitude)).collect();
            for c in recognize_toponyms(&text, &g) {
                let by_chars: String = text.chars().skip(c.char_offset).take(c.surface.chars().count()).collect();
                prop_assert_eq!(&by_chars, &c.surface);
                prop_assert_eq!(&text[c.byte_start..c.byte_end], c.surface.as_str());
                let a = resolve_toponym(&c.surface, &g).unwrap();
                let b = resolve_toponym(&c.surface, &g).unwrap();
                prop_assert_eq!(a, b);
            }
            for m in geoparse_article("u", "", &text, &g) {
                prop_assert!(coords.contains(&(m.latitude, m.longitude)));
            }
        }
    }
}
