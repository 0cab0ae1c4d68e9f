use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GeoparseError;

pub const BUNDLED_GAZETTEER: &str = include_str!("../../data/gazetteer.tsv");
pub const BUNDLED_STOPLIST: &str = include_str!("../../data/place_stoplist.txt");
const HEADER: [&str; 6] = ["name", "alternates", "lat", "lon", "population", "country"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub alternate_names: Vec<String>,
    pub latitude: f64,
    pub longitude: f64,
    pub population: u64,
    pub country_code: String,
}

/// Place-name table indexed by every name and alternate, both as written
/// and case-folded.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    exact: HashMap<String, Vec<usize>>,
    folded: HashMap<String, Vec<usize>>,
    stoplist: HashSet<String>,
    max_tokens: usize,
}

fn parse_row(cols: &[&str]) -> Result<GazetteerEntry, String> {
    if cols.len() != HEADER.len() {
        return Err(format!("expected {} tab-separated columns, found {}", HEADER.len(), cols.len()));
    }
    let name = cols[0].trim();
    if name.is_empty() {
        return Err("empty name".into());
    }
    let number = |i: usize| cols[i].trim().parse::<f64>().map_err(|_| format!("{} `{}` is not a number", HEADER[i], cols[i]));
    let latitude = number(2)?;
    let longitude = number(3)?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude {latitude} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude {longitude} outside [-180, 180]"));
    }
    let population = cols[4]
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("population `{}` is not a non-negative integer", cols[4]))?;
    let country_code = cols[5].trim().to_string();
    if country_code.len() != 2 || !country_code.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(format!("country `{country_code}` is not a two-letter code"));
    }
    let alternate_names = cols[1]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    Ok(GazetteerEntry {
        name: name.to_string(),
        alternate_names,
        latitude,
        longitude,
        population,
        country_code,
    })
}

pub(crate) fn fold(s: &str) -> String {
    s.to_lowercase()
}

impl Gazetteer {
    pub fn parse(tsv: &str) -> Result<Self, GeoparseError> {
        let mut lines = tsv.lines().enumerate();
        let header_ok = lines
            .next()
            .is_some_and(|(_, h)| h.trim_end_matches('\r').split('\t').map(str::trim).eq(HEADER.iter().copied()));
        if !header_ok {
            return Err(GeoparseError::MalformedGazetteer {
                line: 1,
                reason: format!("header must be `{}`", HEADER.join("\\t")),
            });
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let entry = parse_row(&cols).map_err(|reason| GeoparseError::MalformedGazetteer { line: i + 1, reason })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: &Path) -> Result<Self, GeoparseError> {
        let text = std::fs::read_to_string(path).map_err(|e| GeoparseError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// The shipped world extract with the shipped stoplist.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_GAZETTEER)
            .expect("bundled gazetteer parses")
            .with_stoplist(parse_stoplist(BUNDLED_STOPLIST))
    }

    pub fn from_entries(entries: Vec<GazetteerEntry>) -> Self {
        let mut g = Self {
            entries,
            ..Self::default()
        };
        for (i, e) in g.entries.iter().enumerate() {
            for name in std::iter::once(&e.name).chain(&e.alternate_names) {
                let key = name.split_whitespace().collect::<Vec<_>>().join(" ");
                g.max_tokens = g.max_tokens.max(key.split(' ').count());
                for (index, k) in [(&mut g.exact, key.clone()), (&mut g.folded, fold(&key))] {
                    let ids = index.entry(k).or_default();
                    if !ids.contains(&i) {
                        ids.push(i);
                    }
                }
            }
        }
        g
    }

    pub fn with_stoplist(mut self, words: impl IntoIterator<Item = String>) -> Self {
        self.stoplist = words.into_iter().collect();
        self
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn is_stopword(&self, token: &str) -> bool {
        self.stoplist.contains(token)
    }

    /// Longest name in tokens, so scans never look further than needed.
    pub(crate) fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    /// Indices of entries named `key`: exact spelling first, then case-folded.
    pub fn lookup(&self, key: &str) -> &[usize] {
        if let Some(ids) = self.exact.get(key) {
            return ids;
        }
        self.folded.get(&fold(key)).map_or(&[], Vec::as_slice)
    }

    pub fn entry(&self, index: usize) -> &GazetteerEntry {
        &self.entries[index]
    }
}

pub fn parse_stoplist(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}
