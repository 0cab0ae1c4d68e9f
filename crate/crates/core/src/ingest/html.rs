use std::collections::HashSet;

use ego_tree::NodeRef;
use regex::Regex;
use scraper::{Html, Node, Selector};
use url::Url;

use super::{canonicalize_url, IngestError, NewsSource};

const MIN_TEXT_CHARS: usize = 20;

const SKIPPED: &[&str] = &[
    "head", "script", "style", "noscript", "template", "nav", "footer", "iframe", "svg", "object", "form",
];

const BLOCKS: &[&str] = &[
    "address", "article", "aside", "blockquote", "dd", "div", "dl", "dt", "figcaption", "figure", "h1", "h2", "h3",
    "h4", "h5", "h6", "header", "hr", "li", "main", "ol", "p", "pre", "section", "table", "td", "th", "tr", "ul",
];

/// Article links on an index page, resolved against `base`, canonicalized,
/// restricted to the source's hosts and deduplicated in document order.
pub fn discover_urls(source: &NewsSource, base: &Url, index_html: &[u8]) -> Result<Vec<Url>, IngestError> {
    let doc = Html::parse_document(&String::from_utf8_lossy(index_html));
    let anchors = Selector::parse("a[href]").expect("static selector");
    let pattern = source
        .link_pattern
        .as_deref()
        .map(Regex::new)
        .transpose()
        .map_err(|e| IngestError::InvalidSource {
            id: source.id.clone(),
            reason: e.to_string(),
        })?;
    let index_pages: HashSet<Url> = source.index_urls.iter().map(canonicalize_url).collect();

    let mut seen = HashSet::new();
    let mut urls = Vec::new();
    let (mut any_anchor, mut any_resolved) = (false, false);
    for anchor in doc.select(&anchors) {
        any_anchor = true;
        let href = anchor.value().attr("href").unwrap_or("").trim();
        let Ok(url) = base.join(href) else { continue };
        any_resolved = true;
        let url = canonicalize_url(&url);
        if !source.host_allowed(&url) || index_pages.contains(&url) {
            continue;
        }
        if pattern.as_ref().is_some_and(|re| !re.is_match(url.path())) {
            continue;
        }
        if seen.insert(url.clone()) {
            urls.push(url);
        }
    }
    if any_anchor && !any_resolved {
        return Err(IngestError::MalformedHtml);
    }
    Ok(urls)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub title: String,
    pub text: String,
}

#[derive(Default)]
struct Paragraphs {
    done: Vec<String>,
    current: String,
    pending_space: bool,
}

impl Paragraphs {
    fn push_text(&mut self, text: &str) {
        for c in text.chars() {
            if c.is_whitespace() {
                self.pending_space = true;
                continue;
            }
            if self.pending_space && !self.current.is_empty() {
                self.current.push(' ');
            }
            self.pending_space = false;
            self.current.push(c);
        }
    }

    fn paragraph_break(&mut self) {
        if !self.current.is_empty() {
            self.done.push(std::mem::take(&mut self.current));
        }
        self.pending_space = false;
    }

    fn finish(mut self) -> String {
        self.paragraph_break();
        self.done.join("\n\n")
    }
}

fn walk(node: NodeRef<'_, Node>, out: &mut Paragraphs) {
    match node.value() {
        Node::Text(t) => out.push_text(t),
        Node::Element(el) => {
            let name = el.name();
            if SKIPPED.contains(&name) {
                return;
            }
            if name == "br" {
                out.paragraph_break();
                return;
            }
            let block = BLOCKS.contains(&name);
            if block {
                out.paragraph_break();
            }
            for child in node.children() {
                walk(child, out);
            }
            if block {
                out.paragraph_break();
            }
        }
        Node::Document | Node::Fragment => {
            for child in node.children() {
                walk(child, out);
            }
        }
        _ => {}
    }
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A `<` directly followed by a letter is spaced apart so the output never
/// contains anything that looks like a tag.
fn defang(text: String) -> String {
    if !text.contains('<') {
        return text;
    }
    let mut out = String::with_capacity(text.len() + 8);
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        out.push(c);
        if c == '<' && chars.peek().is_some_and(|n| n.is_alphabetic() || *n == '/' || *n == '!') {
            out.push(' ');
        }
    }
    out
}

/// Main text with navigation, scripts and footers removed. Paragraphs are
/// separated by a blank line and runs of whitespace collapse to one space.
pub fn extract_text(raw_html: &[u8]) -> Result<Extracted, IngestError> {
    let doc = Html::parse_document(&String::from_utf8_lossy(raw_html));
    let mut paragraphs = Paragraphs::default();
    walk(doc.tree.root(), &mut paragraphs);
    let text = defang(paragraphs.finish());
    let chars = text.chars().count();
    if chars < MIN_TEXT_CHARS {
        return Err(IngestError::EmptyDocument { chars });
    }

    let first_text = |css: &str| {
        let selector = Selector::parse(css).expect("static selector");
        doc.select(&selector)
            .map(|el| collapse(&el.text().collect::<String>()))
            .find(|t| !t.is_empty())
    };
    let title = first_text("title").or_else(|| first_text("h1")).unwrap_or_default();
    Ok(Extracted {
        title: defang(title),
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> NewsSource {
        NewsSource {
            id: "s".into(),
            display_name: String::new(),
            index_urls: vec![Url::parse("https://news.example.org/health/").unwrap()],
            host_allowlist: vec!["news.example.org".into()],
            rate_limit: 0.0,
            link_pattern: None,
        }
    }

    #[test]
    fn discovers_on_host_links_in_order_without_duplicates() {
        let html = br##"<html><body>
            <a href="/health/">Health</a>
            <a href="2023/01/05/memory-study?utm_source=rss">A</a>
            <a href="https://elsewhere.com/x">off</a>
            <a href="/health/2023/01/05/memory-study#comments">A again</a>
            <a href="https://NEWS.example.org/health/b">B</a>
            <a href="mailto:desk@news.example.org">mail</a>
        </body></html>"##;
        let base = Url::parse("https://news.example.org/health/").unwrap();
        let urls = discover_urls(&source(), &base, html).unwrap();
        let got: Vec<&str> = urls.iter().map(Url::as_str).collect();
        assert_eq!(
            got,
            [
                "https://news.example.org/health/2023/01/05/memory-study",
                "https://news.example.org/health/b",
            ]
        );
    }

    #[test]
    fn link_pattern_filters_paths() {
        let mut s = source();
        s.link_pattern = Some(r"^/health/\d{4}/".into());
        let base = Url::parse("https://news.example.org/health/").unwrap();
        let html = br#"<a href="/health/2022/x">x</a><a href="/about">about</a>"#;
        let urls = discover_urls(&s, &base, html).unwrap();
        assert_eq!(urls.len(), 1);
    }

    #[test]
    fn unresolvable_hrefs_everywhere_is_malformed() {
        let base = Url::parse("https://news.example.org/").unwrap();
        let html = br#"<a href="http://[::1">x</a><a href="https://exa mple.org:99999/">y</a>"#;
        assert!(matches!(discover_urls(&source(), &base, html), Err(IngestError::MalformedHtml)));
        assert!(discover_urls(&source(), &base, b"<p>no links</p>").unwrap().is_empty());
    }

    #[test]
    fn strips_boilerplate_and_keeps_paragraphs() {
        let html = br#"<html><head><title> Memory  study </title><style>p{}</style></head>
            <body><nav><a href="/">Home</a></nav>
            <h1>Memory study</h1>
            <p>Researchers in   London found<br>new markers.</p>
            <script>var x = "<p>nope</p>";</script>
            <div>Second <b>paragraph</b> here.</div>
            <footer>Copyright</footer></body></html>"#;
        let ex = extract_text(html).unwrap();
        assert_eq!(ex.title, "Memory study");
        assert_eq!(
            ex.text,
            "Memory study\n\nResearchers in London found\n\nnew markers.\n\nSecond paragraph here."
        );
    }

    #[test]
    fn title_falls_back_to_first_heading() {
        let ex = extract_text(b"<body><h1>Heading</h1><p>Enough body text to pass the threshold.</p></body>").unwrap();
        assert_eq!(ex.title, "Heading");
    }

    #[test]
    fn short_documents_are_empty() {
        assert!(matches!(
            extract_text(b"<html><body><nav>menu menu menu menu menu</nav><p>hi</p></body></html>"),
            Err(IngestError::EmptyDocument { chars: 2 })
        ));
    }

    #[test]
    fn escaped_markup_never_looks_like_a_tag() {
        let ex = extract_text(b"<p>Use &lt;b&gt; for bold, and 3 &lt; 4 is true in any case.</p>").unwrap();
        assert!(!Regex::new(r"<[A-Za-z/!]").unwrap().is_match(&ex.text), "{}", ex.text);
        assert!(ex.text.contains("3 < 4"));
    }
}
