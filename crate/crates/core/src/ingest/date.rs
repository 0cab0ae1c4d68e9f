use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use scraper::{Html, Selector};
use url::Url;

const TEXT_SCAN_CHARS: usize = 2000;

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn iso_prefix(value: &str) -> Option<NaiveDate> {
    let value = value.trim();
    NaiveDate::parse_from_str(value.get(..10)?, "%Y-%m-%d").ok()
}

fn month_number(name: &str) -> Option<u32> {
    const MONTHS: [&str; 12] = [
        "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
        "december",
    ];
    let lower = name.to_ascii_lowercase();
    MONTHS
        .iter()
        .position(|m| *m == lower || (lower.len() >= 3 && m.starts_with(&lower) && lower.len() <= 4))
        .map(|i| i as u32 + 1)
}

fn from_meta(doc: &Html) -> impl Iterator<Item = NaiveDate> + '_ {
    let sel = Selector::parse(
        r#"meta[property="article:published_time"], meta[name="article:published_time"], meta[itemprop="datePublished"]"#,
    )
    .expect("static selector");
    doc.select(&sel)
        .filter_map(|m| m.value().attr("content").and_then(iso_prefix))
        .collect::<Vec<_>>()
        .into_iter()
}

fn from_time_elements(doc: &Html) -> impl Iterator<Item = NaiveDate> + '_ {
    let sel = Selector::parse("time[datetime]").expect("static selector");
    doc.select(&sel)
        .filter_map(|t| t.value().attr("datetime").and_then(iso_prefix))
        .collect::<Vec<_>>()
        .into_iter()
}

fn from_url_path(url: &Url) -> impl Iterator<Item = NaiveDate> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(&RE, r"(?:^|[^0-9])((?:19|20)\d{2})([/-])(\d{2})([/-])(\d{2})(?:[^0-9]|$)");
    re.captures_iter(url.path())
        .filter_map(|c| {
            if c[2] != c[4] {
                return None;
            }
            NaiveDate::from_ymd_opt(c[1].parse().ok()?, c[3].parse().ok()?, c[5].parse().ok()?)
        })
        .collect::<Vec<_>>()
        .into_iter()
}

fn from_text(text: &str) -> Vec<NaiveDate> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = regex(
        &RE,
        r"\b(?:((?:19|20)\d{2})-(\d{2})-(\d{2})|(Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|June?|July?|Aug(?:ust)?|Sep(?:t|tember)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)\.? (\d{1,2}),? ((?:19|20)\d{2}))\b",
    );
    let head: String = text.chars().take(TEXT_SCAN_CHARS).collect();
    re.captures_iter(&head)
        .filter_map(|c| {
            if let Some(y) = c.get(1) {
                NaiveDate::from_ymd_opt(y.as_str().parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)
            } else {
                NaiveDate::from_ymd_opt(c[6].parse().ok()?, month_number(&c[4])?, c[5].parse().ok()?)
            }
        })
        .collect()
}

/// Publication date from, in order of preference: article metadata, a
/// `<time datetime>` element, a date in the URL path, then the first date
/// written in the opening text. Candidates after `not_after` (normally the
/// fetch date) are ignored.
pub fn extract_pub_date(raw_html: &[u8], url: &Url, not_after: NaiveDate) -> Option<NaiveDate> {
    let doc = Html::parse_document(&String::from_utf8_lossy(raw_html));
    let plausible = |d: &NaiveDate| *d <= not_after;
    if let Some(d) = from_meta(&doc).find(plausible) {
        return Some(d);
    }
    if let Some(d) = from_time_elements(&doc).find(plausible) {
        return Some(d);
    }
    if let Some(d) = from_url_path(url).find(plausible) {
        return Some(d);
    }
    let text = super::extract_text(raw_html).map(|e| e.text).unwrap_or_default();
    from_text(&text).into_iter().find(plausible)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn url(s: &str) -> Url {
        Url::parse(s).unwrap()
    }

    const TODAY: (i32, u32, u32) = (2023, 6, 30);

    fn today() -> NaiveDate {
        d(TODAY.0, TODAY.1, TODAY.2)
    }

    #[test]
    fn meta_beats_everything() {
        let html = br#"<html><head><meta property="article:published_time" content="2022-09-14T23:30:00-05:00"></head>
            <body><time datetime="2022-10-01">Oct 1</time><p>Posted January 3, 2021 by staff writers.</p></body></html>"#;
        let got = extract_pub_date(html, &url("https://x.org/2020/01/01/a"), today());
        assert_eq!(got, Some(d(2022, 9, 14)));
    }

    #[test]
    fn time_element_then_url_then_text() {
        let time = br#"<body><time datetime="2022-10-01T08:00">x</time><p>Some text that is long enough.</p></body>"#;
        assert_eq!(extract_pub_date(time, &url("https://x.org/a"), today()), Some(d(2022, 10, 1)));

        let plain = b"<body><p>Posted on March 5, 2023 by the news desk.</p></body>";
        assert_eq!(
            extract_pub_date(plain, &url("https://x.org/news/2022/11/20/story"), today()),
            Some(d(2022, 11, 20))
        );
        assert_eq!(
            extract_pub_date(plain, &url("https://x.org/news/2022-11-20-story"), today()),
            Some(d(2022, 11, 20))
        );
        assert_eq!(extract_pub_date(plain, &url("https://x.org/news/story"), today()), Some(d(2023, 3, 5)));
    }

    #[test]
    fn text_dates_take_the_earliest_occurrence() {
        let html = b"<p>Updated 2023-02-01. Originally published Sept. 9, 2022 in print.</p>";
        assert_eq!(extract_pub_date(html, &url("https://x.org/a"), today()), Some(d(2023, 2, 1)));
        let abbreviated = b"<p>By staff | Dec 12 2022 | Research roundup for the week.</p>";
        assert_eq!(extract_pub_date(abbreviated, &url("https://x.org/a"), today()), Some(d(2022, 12, 12)));
    }

    #[test]
    fn future_dates_and_garbage_are_skipped() {
        let html = br#"<head><meta property="article:published_time" content="2031-01-01"></head>
            <body><time datetime="not a date">x</time><p>Conference scheduled for 2030-05-05, registration open since 2023-04-02.</p></body>"#;
        assert_eq!(extract_pub_date(html, &url("https://x.org/2022/13/40/x"), today()), Some(d(2023, 4, 2)));
    }

    #[test]
    fn undated_articles_have_no_date() {
        let html = b"<p>An evergreen explainer about memory loss and its many causes.</p>";
        assert_eq!(extract_pub_date(html, &url("https://x.org/explainer"), today()), None);
    }

    #[test]
    fn mixed_url_separators_are_not_a_date() {
        assert_eq!(from_url_path(&url("https://x.org/2022/11-20/x")).count(), 0);
    }
}
