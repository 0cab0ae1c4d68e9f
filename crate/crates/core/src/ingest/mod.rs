//! The "search and save news" stage.
//!
//! Index pages of configured sources are crawled for article links (an
//! operator can also inject URL lists directly), articles are fetched
//! politely, boilerplate is stripped, and each article is persisted together
//! with its raw HTML so extraction can be re-run without refetching.

mod date;
mod fetch;
mod html;
mod store;

pub use date::extract_pub_date;
pub use fetch::{discover_source, fetch_and_store, FetchRecord, FetchStatus, Fetcher};
pub use html::{discover_urls, extract_text, Extracted};
pub use store::ArticleStore;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no anchor on the page has a usable href")]
    MalformedHtml,
    #[error("document has only {chars} characters of text")]
    EmptyDocument { chars: usize },
    #[error("invalid news source `{id}`: {reason}")]
    InvalidSource { id: String, reason: String },
    #[error("{0} is already in the store")]
    Duplicate(String),
    #[error("article store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("article store record {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// A news website: where to look for links and how hard to hit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsSource {
    pub id: String,
    #[serde(default)]
    pub display_name: String,
    pub index_urls: Vec<Url>,
    pub host_allowlist: Vec<String>,
    /// Minimum seconds between two requests to the same host.
    #[serde(default)]
    pub rate_limit: f64,
    /// Optional regex an article URL path must match to be kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_pattern: Option<String>,
}

impl NewsSource {
    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |reason: String| IngestError::InvalidSource {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id is empty".into()));
        }
        if !(self.rate_limit.is_finite() && self.rate_limit >= 0.0) {
            return Err(invalid(format!("rate_limit {} must be a non-negative number", self.rate_limit)));
        }
        for url in &self.index_urls {
            if !self.host_allowed(url) {
                return Err(invalid(format!("index url {url} is not on an allowlisted host")));
            }
        }
        if let Some(pattern) = &self.link_pattern {
            Regex::new(pattern).map_err(|e| invalid(format!("link_pattern: {e}")))?;
        }
        Ok(())
    }

    pub fn host_allowed(&self, url: &Url) -> bool {
        matches!(url.scheme(), "http" | "https")
            && url
                .host_str()
                .is_some_and(|host| self.host_allowlist.iter().any(|h| h.eq_ignore_ascii_case(host)))
    }

    pub fn name(&self) -> &str {
        if self.display_name.is_empty() {
            &self.id
        } else {
            &self.display_name
        }
    }
}

/// Lowercase scheme and host, drop the fragment and any `utm_*` tracking
/// parameters. Other query parameters are kept verbatim and in order.
pub fn canonicalize_url(url: &Url) -> Url {
    let mut out = url.clone();
    out.set_fragment(None);
    if let Some(query) = url.query() {
        let kept: Vec<&str> = query
            .split('&')
            .filter(|pair| !pair.is_empty())
            .filter(|pair| {
                let key = pair.split('=').next().unwrap_or("");
                !key.to_ascii_lowercase().starts_with("utm_")
            })
            .collect();
        if kept.is_empty() {
            out.set_query(None);
        } else {
            out.set_query(Some(&kept.join("&")));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub url: Url,
    pub source_id: String,
    pub title: String,
    #[serde(with = "base64_bytes")]
    pub raw_html: Vec<u8>,
    pub text: String,
    pub published_at: Option<NaiveDate>,
    pub fetched_at: DateTime<Utc>,
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let encoded = String::deserialize(d)?;
        STANDARD.decode(encoded).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization_rules() {
        let u = Url::parse("HTTPS://News.Example.ORG/a/b?id=7&utm_source=x&page=2&UTM_medium=y#section").unwrap();
        assert_eq!(canonicalize_url(&u).as_str(), "https://news.example.org/a/b?id=7&page=2");
        let only_tracking = Url::parse("https://example.org/x?utm_campaign=c").unwrap();
        assert_eq!(canonicalize_url(&only_tracking).as_str(), "https://example.org/x");
    }

    #[test]
    fn source_validation() {
        let mut s = NewsSource {
            id: "bbc".into(),
            display_name: "BBC".into(),
            index_urls: vec![Url::parse("https://www.bbc.co.uk/news/health").unwrap()],
            host_allowlist: vec!["www.bbc.co.uk".into()],
            rate_limit: 1.0,
            link_pattern: None,
        };
        assert!(s.validate().is_ok());
        s.host_allowlist = vec!["bbc.com".into()];
        assert!(matches!(s.validate(), Err(IngestError::InvalidSource { .. })));
        s.host_allowlist = vec!["WWW.BBC.CO.UK".into()];
        s.rate_limit = -1.0;
        assert!(s.validate().is_err());
        s.rate_limit = 0.0;
        s.link_pattern = Some("(".into());
        assert!(s.validate().is_err());
    }
}
