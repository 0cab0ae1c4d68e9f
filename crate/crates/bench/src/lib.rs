//! Inputs shared by the benches, read from the fixture site.

use std::path::PathBuf;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Raw bytes of a fixture page, e.g. `page("mayo", "mayo4")`.
pub fn page(source: &str, name: &str) -> Vec<u8> {
    std::fs::read(fixtures().join("site/pages").join(source).join(format!("{name}.html"))).expect("fixture page")
}

/// A completion in the agent grammar with a multi-line thought.
pub const COMPLETION: &str = "Thought: The articles are saved.\nI still need short summaries before looking for places and topics.\nAction: summarize_news\nAction Input: all saved articles";
