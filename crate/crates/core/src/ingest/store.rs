use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{Article, IngestError};

const RECORDS: &str = "articles.jsonl";
const INDEX: &str = "articles.idx";

/// Append-only article store: one JSON record per line plus a
/// `byte offset<TAB>url` index for lookups.
///
/// Each record is written with a single `write_all` followed by a flush, so
/// a crash leaves at most one partial trailing line. Readers ignore it and
/// the next writer truncates it away.
#[derive(Debug)]
pub struct ArticleStore {
    dir: PathBuf,
    offsets: HashMap<String, u64>,
    order: Vec<String>,
    end: u64,
}

fn complete_lines(path: &Path) -> Result<(Vec<(u64, String)>, u64), IngestError> {
    let mut lines = Vec::new();
    let Ok(file) = File::open(path) else {
        return Ok((lines, 0));
    };
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            break;
        }
        lines.push((offset, String::from_utf8_lossy(&buf[..n - 1]).into_owned()));
        offset += n as u64;
    }
    Ok((lines, offset))
}

fn parse_record(line: &str, number: usize) -> Result<Article, IngestError> {
    serde_json::from_str(line).map_err(|e| IngestError::Corrupt {
        line: number,
        reason: e.to_string(),
    })
}

impl ArticleStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let records = dir.join(RECORDS);
        let (lines, end) = complete_lines(&records)?;
        if fs::metadata(&records).map(|m| m.len()).unwrap_or(0) > end {
            tracing::warn!(path = %records.display(), "dropping partial trailing record");
            OpenOptions::new().write(true).open(&records)?.set_len(end)?;
        }

        let mut offsets = HashMap::new();
        let mut order = Vec::new();
        for (i, (offset, line)) in lines.iter().enumerate() {
            let article = parse_record(line, i + 1)?;
            let url = article.url.to_string();
            if offsets.insert(url.clone(), *offset).is_none() {
                order.push(url);
            }
        }
        let store = Self {
            dir,
            offsets,
            order,
            end,
        };
        store.rewrite_index_if_stale()?;
        Ok(store)
    }

    fn index_text(&self) -> String {
        self.order
            .iter()
            .map(|url| format!("{}\t{url}\n", self.offsets[url]))
            .collect()
    }

    fn rewrite_index_if_stale(&self) -> Result<(), IngestError> {
        let path = self.dir.join(INDEX);
        let wanted = self.index_text();
        if fs::read_to_string(&path).ok().as_deref() != Some(wanted.as_str()) {
            let tmp = self.dir.join(format!("{INDEX}.tmp"));
            fs::write(&tmp, wanted)?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records_path(&self) -> PathBuf {
        self.dir.join(RECORDS)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, url: &str) -> bool {
        self.offsets.contains_key(url)
    }

    pub fn urls(&self) -> &[String] {
        &self.order
    }

    pub fn insert(&mut self, article: &Article) -> Result<(), IngestError> {
        let url = article.url.to_string();
        if self.contains(&url) {
            return Err(IngestError::Duplicate(url));
        }
        let mut line = serde_json::to_string(article).map_err(|e| IngestError::Corrupt {
            line: self.order.len() + 1,
            reason: e.to_string(),
        })?;
        line.push('\n');
        let mut records = OpenOptions::new().create(true).append(true).open(self.records_path())?;
        records.write_all(line.as_bytes())?;
        records.flush()?;

        let offset = self.end;
        self.end += line.len() as u64;
        let mut index = OpenOptions::new().create(true).append(true).open(self.dir.join(INDEX))?;
        index.write_all(format!("{offset}\t{url}\n").as_bytes())?;
        self.offsets.insert(url.clone(), offset);
        self.order.push(url);
        Ok(())
    }

    pub fn get(&self, url: &str) -> Result<Option<Article>, IngestError> {
        let Some(&offset) = self.offsets.get(url) else {
            return Ok(None);
        };
        let mut file = File::open(self.records_path())?;
        file.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        BufReader::new(&mut file).read_line(&mut line)?;
        let number = self.order.iter().position(|u| u == url).map_or(0, |i| i + 1);
        parse_record(line.trim_end_matches('\n'), number).map(Some)
    }

    /// Every article in insertion order.
    pub fn load_all(&self) -> Result<Vec<Article>, IngestError> {
        Self::read_all(&self.dir)
    }

    /// Read a store directory without opening it for writing.
    pub fn read_all(dir: &Path) -> Result<Vec<Article>, IngestError> {
        let (lines, _) = complete_lines(&dir.join(RECORDS))?;
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(lines.len());
        for (i, (_, line)) in lines.iter().enumerate() {
            let article = parse_record(line, i + 1)?;
            if seen.insert(article.url.to_string()) {
                out.push(article);
            }
        }
        Ok(out)
    }
}
