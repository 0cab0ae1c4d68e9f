//! Monthly aggregation, keyword trends and the SVG/CSV emitters.

mod render;

pub use render::{
    emit_map_scatter, emit_monthly_bar, emit_streamgraph, marker_radius, monotone_tangents, place_counts, project, render_map_svg, render_monthly_svg,
    render_streamgraph_svg, stream_layout, PlaceCount, VizConfig,
};

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::topic_model::{Corpus, LdaModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrendError {
    #[error("`{0}` is not a YYYY-MM month")]
    BadMonth(String),
    #[error("window start {start} is after end {end}")]
    BadWindow { start: YearMonth, end: YearMonth },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, TrendError> {
        if !(1..=12).contains(&month) {
            return Err(TrendError::BadMonth(format!("{year}-{month}")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Every month from `start` to `end` inclusive.
    pub fn range(start: Self, end: Self) -> Vec<Self> {
        let mut out = Vec::new();
        let mut m = start;
        while m <= end {
            out.push(m);
            m = m.succ();
        }
        out
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = TrendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TrendError::BadMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        Self::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive month range for temporal plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl Window {
    pub fn new(start: YearMonth, end: YearMonth) -> Result<Self, TrendError> {
        if start > end {
            return Err(TrendError::BadWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn months(&self) -> Vec<YearMonth> {
        YearMonth::range(self.start, self.end)
    }

    pub fn contains(&self, m: YearMonth) -> bool {
        self.start <= m && m <= self.end
    }

    fn slot(&self, date: NaiveDate) -> Option<usize> {
        let m = YearMonth::of(date);
        self.contains(m)
            .then(|| ((m.year - self.start.year) * 12 + m.month as i32 - self.start.month as i32) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyCount {
    pub month: YearMonth,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyReport {
    pub counts: Vec<MonthlyCount>,
    pub undated: usize,
    pub outside_window: usize,
}

/// Articles per publication month over the whole window, zero-filled.
pub fn monthly_counts(dates: impl IntoIterator<Item = Option<NaiveDate>>, window: Window) -> MonthlyReport {
    let mut counts: Vec<MonthlyCount> = window.months().into_iter().map(|month| MonthlyCount { month, count: 0 }).collect();
    let (mut undated, mut outside_window) = (0, 0);
    for date in dates {
        match date {
            None => undated += 1,
            Some(d) => match window.slot(d) {
                Some(i) => counts[i].count += 1,
                None => outside_window += 1,
            },
        }
    }
    MonthlyReport {
        counts,
        undated,
        outside_window,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    Count,
    Weight,
}

impl TrendKind {
    pub fn label(self) -> &'static str {
        match self {
            TrendKind::Count => "occurrences",
            TrendKind::Weight => "word weight",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub topic: usize,
    pub keyword: String,
    pub kind: TrendKind,
    pub points: Vec<(YearMonth, f64)>,
}

impl TrendSeries {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

/// One series per (topic, top keyword), topics in ranked order.
///
/// `Count` tallies occurrences of the keyword in documents whose dominant
/// topic is the series topic. `Weight` is the keyword's topic probability
/// times the mean topic proportion of that month's documents. Documents
/// without a date or outside the window do not contribute.
pub fn keyword_trends(model: &LdaModel, corpus: &Corpus, top_n: usize, kind: TrendKind, window: Window) -> Vec<TrendSeries> {
    let months = window.months();
    let slots: Vec<Option<usize>> = corpus.doc_dates.iter().map(|d| d.and_then(|d| window.slot(d))).collect();
    let mut docs_per_month = vec![0usize; months.len()];
    for s in slots.iter().flatten() {
        docs_per_month[*s] += 1;
    }

    let mut out = Vec::new();
    for k in model.ranked_topics() {
        let mean_theta: Vec<f64> = {
            let mut sum = vec![0.0; months.len()];
            for (d, slot) in slots.iter().enumerate() {
                if let Some(s) = *slot {
                    sum[s] += model.doc_topics(d)[k];
                }
            }
            sum.iter()
                .zip(&docs_per_month)
                .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
                .collect()
        };
        for (term, phi) in model.top_words(k, top_n) {
            let values: Vec<f64> = match kind {
                TrendKind::Weight => mean_theta.iter().map(|t| phi * t).collect(),
                TrendKind::Count => {
                    let w = corpus.term_id(&term).expect("top word is in the vocabulary");
                    let mut tally = vec![0.0; months.len()];
                    for (d, slot) in slots.iter().enumerate() {
                        if let Some(s) = *slot {
                            if model.dominant_topic(d) == k {
                                tally[s] += corpus.documents[d].iter().filter(|&&x| x == w).count() as f64;
                            }
                        }
                    }
                    tally
                }
            };
            out.push(TrendSeries {
                topic: k,
                keyword: term,
                kind,
                points: months.iter().copied().zip(values).collect(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topic_model::synthetic::planted_corpus;
    use crate::topic_model::LdaConfig;

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn d(s: &str) -> Option<NaiveDate> {
        Some(NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap())
    }

    #[test]
    fn months_parse_print_and_step() {
        assert_eq!(ym("2022-12").succ(), ym("2023-01"));
        assert_eq!(ym("2022-06").to_string(), "2022-06");
        assert!("2022-13".parse::<YearMonth>().is_err());
        assert!("22-01".parse::<YearMonth>().is_err());
        assert_eq!(YearMonth::range(ym("2022-06"), ym("2023-05")).len(), 12);
        assert!(Window::new(ym("2023-01"), ym("2022-01")).is_err());
    }

    #[test]
    fn monthly_counts_zero_fill_and_report_exclusions() {
        let window = Window::new(ym("2022-06"), ym("2022-08")).unwrap();
        let dates = vec![
            d("2022-06-01"),
            d("2022-06-30"),
            d("2022-06-15"),
            d("2022-06-02"),
            d("2022-08-31"),
            d("2022-08-01"),
            None,
            d("2023-01-01"),
        ];
        let r = monthly_counts(dates, window);
        let counts: Vec<u64> = r.counts.iter().map(|c| c.count).collect();
        assert_eq!(counts, [4, 0, 2]);
        assert_eq!((r.undated, r.outside_window), (1, 1));
        assert!(monthly_counts(Vec::new(), window).counts.iter().all(|c| c.count == 0));
    }

    fn dated_planted() -> (Corpus, LdaModel, Window) {
        let (mut corpus, _) = planted_corpus(42);
        let months = ["2022-06-10", "2022-07-10", "2022-08-10", "2022-09-10"];
        corpus.doc_dates = (0..corpus.len()).map(|i| if i % 7 == 6 { None } else { d(months[i % 4]) }).collect();
        let model = LdaModel::fit(
            &corpus,
            &LdaConfig {
                topics: 3,
                sweeps: 100,
                ..LdaConfig::default()
            },
        )
        .unwrap();
        (corpus, model, Window::new(ym("2022-05"), ym("2022-09")).unwrap())
    }

    #[test]
    fn count_series_match_a_brute_force_tally() {
        let (corpus, model, window) = dated_planted();
        let series = keyword_trends(&model, &corpus, 5, TrendKind::Count, window);
        assert_eq!(series.len(), 15);
        for s in &series {
            let w = corpus.term_id(&s.keyword).unwrap();
            for (month, value) in &s.points {
                let mut expected = 0usize;
                for (doc, date) in corpus.documents.iter().zip(&corpus.doc_dates).enumerate().map(|(i, (doc, date))| ((i, doc), date)) {
                    let (i, doc) = doc;
                    let Some(date) = date else { continue };
                    let row = &model.n_dk[i];
                    let best = row.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).unwrap().0;
                    if YearMonth::of(*date) == *month && best == s.topic {
                        expected += doc.iter().filter(|&&x| x == w).count();
                    }
                }
                assert_eq!(*value, expected as f64, "{} {}", s.keyword, month);
            }
            // no documents dated in May
            assert_eq!(s.points[0].1, 0.0);
        }
    }

    #[test]
    fn weight_series_scale_phi_by_mean_theta() {
        let (corpus, model, window) = dated_planted();
        let series = keyword_trends(&model, &corpus, 2, TrendKind::Weight, window);
        let s = &series[0];
        let w = corpus.term_id(&s.keyword).unwrap() as usize;
        let june: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.doc_dates[i] == d("2022-06-10")).collect();
        let mean: f64 = june.iter().map(|&i| model.doc_topics(i)[s.topic]).sum::<f64>() / june.len() as f64;
        assert!((s.points[1].1 - model.phi(s.topic, w) * mean).abs() < 1e-12);
        assert!(series.iter().all(|s| s.points.iter().all(|p| p.1 >= 0.0)));
    }

    #[test]
    fn a_term_in_one_month_is_zero_elsewhere() {
        let (mut corpus, _, window) = dated_planted();
        corpus.doc_dates = vec![d("2022-07-04"); corpus.len()];
        let model = LdaModel::fit(&corpus, &LdaConfig { topics: 3, sweeps: 20, ..LdaConfig::default() }).unwrap();
        for s in keyword_trends(&model, &corpus, 5, TrendKind::Count, window) {
            for (m, v) in &s.points {
                if *m != ym("2022-07") {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }
}
