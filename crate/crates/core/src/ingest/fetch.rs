use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use super::{canonicalize_url, discover_urls, extract_pub_date, extract_text, Article, ArticleStore, IngestError, NewsSource};
use crate::clock::Clock;
use crate::net::{HttpResponse, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    HttpError,
    ParseError,
    Duplicate,
    OffHost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub url: String,
    pub source_id: String,
    pub status: FetchStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// GETs with a per-host minimum interval, measured on an injected clock.
pub struct Fetcher<'a> {
    transport: &'a dyn Transport,
    clock: &'a dyn Clock,
    last_request: HashMap<String, Duration>,
}

impl<'a> Fetcher<'a> {
    pub fn new(transport: &'a dyn Transport, clock: &'a dyn Clock) -> Self {
        Self {
            transport,
            clock,
            last_request: HashMap::new(),
        }
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock
    }

    pub fn get(&mut self, url: &Url, min_interval_secs: f64) -> Result<HttpResponse, TransportError> {
        let host = url.host_str().unwrap_or_default().to_ascii_lowercase();
        if let Some(&last) = self.last_request.get(&host) {
            let gap = Duration::from_secs_f64(min_interval_secs);
            let since = self.clock.elapsed().saturating_sub(last);
            if since < gap {
                self.clock.sleep(gap - since);
            }
        }
        self.last_request.insert(host, self.clock.elapsed());
        self.transport.get(url)
    }
}

fn record(url: &Url, source: &NewsSource, status: FetchStatus, detail: impl Into<String>) -> FetchRecord {
    FetchRecord {
        url: url.to_string(),
        source_id: source.id.clone(),
        status,
        detail: detail.into(),
    }
}

/// Crawl every index page of a source. Returns discovered article URLs in
/// first-seen order plus a record for each index page that failed.
pub fn discover_source(source: &NewsSource, fetcher: &mut Fetcher<'_>) -> (Vec<Url>, Vec<FetchRecord>) {
    let mut urls = Vec::new();
    let mut seen = HashSet::new();
    let mut failures = Vec::new();
    for index in &source.index_urls {
        let response = match fetcher.get(index, source.rate_limit) {
            Ok(r) if r.is_success() => r,
            Ok(r) => {
                failures.push(record(index, source, FetchStatus::HttpError, r.status.to_string()));
                continue;
            }
            Err(e) => {
                failures.push(record(index, source, FetchStatus::HttpError, e.to_string()));
                continue;
            }
        };
        match discover_urls(source, index, &response.body) {
            Ok(found) => urls.extend(found.into_iter().filter(|u| seen.insert(u.clone()))),
            Err(e) => failures.push(record(index, source, FetchStatus::ParseError, e.to_string())),
        }
    }
    tracing::info!(source = %source.id, found = urls.len(), "discovered article links");
    (urls, failures)
}

/// Fetch, extract and store each URL. Every URL gets exactly one record;
/// per-URL failures never stop the batch. Only a store write failure is
/// returned as an error.
pub fn fetch_and_store(
    source: &NewsSource,
    urls: &[Url],
    store: &mut ArticleStore,
    fetcher: &mut Fetcher<'_>,
) -> Result<Vec<FetchRecord>, IngestError> {
    let mut records = Vec::with_capacity(urls.len());
    for raw in urls {
        let url = canonicalize_url(raw);
        if store.contains(url.as_str()) {
            records.push(record(&url, source, FetchStatus::Duplicate, ""));
            continue;
        }
        if !source.host_allowed(&url) {
            records.push(record(&url, source, FetchStatus::OffHost, ""));
            continue;
        }
        let response = match fetcher.get(&url, source.rate_limit) {
            Ok(r) if r.is_success() => r,
            Ok(r) => {
                records.push(record(&url, source, FetchStatus::HttpError, r.status.to_string()));
                continue;
            }
            Err(e) => {
                records.push(record(&url, source, FetchStatus::HttpError, e.to_string()));
                continue;
            }
        };
        let extracted = match extract_text(&response.body) {
            Ok(x) => x,
            Err(e) => {
                records.push(record(&url, source, FetchStatus::ParseError, e.to_string()));
                continue;
            }
        };
        let fetched_at = fetcher.clock().now_utc();
        let published_at = extract_pub_date(&response.body, &url, fetched_at.date_naive());
        let article = Article {
            url: url.clone(),
            source_id: source.id.clone(),
            title: extracted.title,
            raw_html: response.body,
            text: extracted.text,
            published_at,
            fetched_at,
        };
        store.insert(&article)?;
        records.push(record(&url, source, FetchStatus::Ok, ""));
    }
    Ok(records)
}
