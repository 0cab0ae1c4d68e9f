use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MonthlyCount, TrendKind, TrendSeries, YearMonth};
use crate::geoparse::PlaceMention;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizConfig {
    pub map_width: f64,
    pub map_height: f64,
    pub chart_width: f64,
    pub chart_height: f64,
}

impl Default for VizConfig {
    fn default() -> Self {
        Self {
            map_width: 1000.0,
            map_height: 500.0,
            chart_width: 900.0,
            chart_height: 400.0,
        }
    }
}

/// Equirectangular projection onto a `width` x `height` canvas.
pub fn project(lat: f64, lon: f64, width: f64, height: f64) -> (f64, f64) {
    ((lon + 180.0) / 360.0 * width, (90.0 - lat) / 180.0 * height)
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="Helvetica, Arial, sans-serif">"#,
        w = num(width),
        h = num(height)
    );
}

fn io_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_svg_and_csv(svg_path: &Path, svg: &str, rows: Vec<Vec<String>>) -> io::Result<()> {
    std::fs::write(svg_path, svg)?;
    let mut w = csv::Writer::from_path(svg_path.with_extension("csv")).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceCount {
    pub name: String,
    pub country_code: String,
    pub lat: f64,
    pub lon: f64,
    pub count: usize,
}

/// Mentions grouped by resolved place, most mentioned first.
pub fn place_counts(mentions: &[PlaceMention]) -> Vec<PlaceCount> {
    let mut groups: BTreeMap<(String, String, u64, u64), PlaceCount> = BTreeMap::new();
    for m in mentions {
        let key = (m.resolved_name.clone(), m.country_code.clone(), m.latitude.to_bits(), m.longitude.to_bits());
        groups
            .entry(key)
            .or_insert_with(|| PlaceCount {
                name: m.resolved_name.clone(),
                country_code: m.country_code.clone(),
                lat: m.latitude,
                lon: m.longitude,
                count: 0,
            })
            .count += 1;
    }
    let mut out: Vec<PlaceCount> = groups.into_values().collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)).then_with(|| a.country_code.cmp(&b.country_code)));
    out
}

/// Circle radius for a place mentioned `count` times.
pub fn marker_radius(count: usize) -> f64 {
    3.0 * (count as f64).sqrt()
}

pub fn render_map_svg(places: &[PlaceCount], config: &VizConfig) -> String {
    let (w, h) = (config.map_width, config.map_height);
    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(out, r##"<rect width="{}" height="{}" fill="#eef3f7"/>"##, num(w), num(h));
    out.push_str("<g class=\"graticule\" stroke=\"#c5d0da\" stroke-width=\"0.5\">\n");
    for lon in (-180..=180).step_by(30) {
        let (x, _) = project(0.0, lon as f64, w, h);
        let _ = writeln!(out, r#"<line x1="{x}" y1="0.00" x2="{x}" y2="{}"/>"#, num(h), x = num(x));
    }
    for lat in (-90..=90).step_by(30) {
        let (_, y) = project(lat as f64, 0.0, w, h);
        let _ = writeln!(out, r#"<line x1="0.00" y1="{y}" x2="{}" y2="{y}"/>"#, num(w), y = num(y));
    }
    out.push_str("</g>\n");
    out.push_str("<g class=\"places\" fill=\"#c0392b\" fill-opacity=\"0.6\" stroke=\"#7b241c\" stroke-width=\"0.5\">\n");
    for p in places {
        let (x, y) = project(p.lat, p.lon, w, h);
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{}" r="{}"><title>{} ({}): {}</title></circle>"#,
            num(x),
            num(y),
            num(marker_radius(p.count)),
            esc(&p.name),
            esc(&p.country_code),
            p.count
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// `map.svg` plus a `map.csv` sidecar of `name,country_code,lat,lon,count`.
pub fn emit_map_scatter(mentions: &[PlaceMention], out_path: &Path, config: &VizConfig) -> io::Result<()> {
    let places = place_counts(mentions);
    let mut rows = vec![["name", "country_code", "lat", "lon", "count"].map(String::from).to_vec()];
    rows.extend(
        places
            .iter()
            .map(|p| vec![p.name.clone(), p.country_code.clone(), p.lat.to_string(), p.lon.to_string(), p.count.to_string()]),
    );
    write_svg_and_csv(out_path, &render_map_svg(&places, config), rows)
}

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const LEGEND_WIDTH: f64 = 200.0;

fn axis_step(max: f64) -> f64 {
    if max <= 0.0 {
        return 1.0;
    }
    let raw = max / 5.0;
    let magnitude = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * magnitude)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * magnitude)
}

pub fn render_monthly_svg(counts: &[MonthlyCount], config: &VizConfig) -> String {
    let (w, h) = (config.chart_width, config.chart_height);
    let (pw, ph) = (w - MARGIN_LEFT - MARGIN_RIGHT, h - MARGIN_TOP - MARGIN_BOTTOM);
    let base = MARGIN_TOP + ph;
    let max = counts.iter().map(|c| c.count).max().unwrap_or(0) as f64;
    let step = axis_step(max).max(1.0);
    let top_value = if max > 0.0 { (max / step).ceil() * step } else { 0.0 };

    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(out, r##"<rect width="{}" height="{}" fill="#ffffff"/>"##, num(w), num(h));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-size="14" text-anchor="middle">Articles per month</text>"#,
        num(w / 2.0)
    );
    out.push_str("<g class=\"y-axis\" font-size=\"10\" text-anchor=\"end\" stroke-width=\"0.5\">\n");
    let mut v = 0.0;
    while v <= top_value + 1e-9 {
        let y = if top_value > 0.0 { base - v / top_value * ph } else { base };
        let _ = writeln!(
            out,
            r##"<line x1="{l}" y1="{y}" x2="{r}" y2="{y}" stroke="#dddddd"/><text x="{tx}" y="{ty}">{v}</text>"##,
            l = num(MARGIN_LEFT),
            r = num(MARGIN_LEFT + pw),
            y = num(y),
            tx = num(MARGIN_LEFT - 6.0),
            ty = num(y + 3.0),
            v = v
        );
        v += step;
    }
    out.push_str("</g>\n");

    let n = counts.len().max(1) as f64;
    let slot = pw / n;
    out.push_str("<g class=\"bars\" fill=\"#2e86c1\">\n");
    for (i, c) in counts.iter().enumerate() {
        let bh = if top_value > 0.0 { c.count as f64 / top_value * ph } else { 0.0 };
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}"><title>{}: {}</title></rect>"#,
            num(MARGIN_LEFT + i as f64 * slot + slot * 0.1),
            num(base - bh),
            num(slot * 0.8),
            num(bh),
            c.month,
            c.count
        );
    }
    out.push_str("</g>\n");
    out.push_str("<g class=\"x-axis\" font-size=\"10\" text-anchor=\"middle\">\n");
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{b}" x2="{}" y2="{b}" stroke="#333333"/>"##,
        num(MARGIN_LEFT),
        num(MARGIN_LEFT + pw),
        b = num(base)
    );
    for (i, c) in counts.iter().enumerate() {
        let x = MARGIN_LEFT + (i as f64 + 0.5) * slot;
        let _ = writeln!(
            out,
            r##"<line class="tick" x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="#333333"/><text x="{x}" y="{ty}">{m}</text>"##,
            x = num(x),
            b = num(base),
            b2 = num(base + 4.0),
            ty = num(base + 16.0),
            m = c.month
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// `monthly.svg` plus a `monthly.csv` sidecar of `month,count`.
pub fn emit_monthly_bar(counts: &[MonthlyCount], out_path: &Path, config: &VizConfig) -> io::Result<()> {
    let mut rows = vec![vec!["month".to_string(), "count".to_string()]];
    rows.extend(counts.iter().map(|c| vec![c.month.to_string(), c.count.to_string()]));
    write_svg_and_csv(out_path, &render_monthly_svg(counts, config), rows)
}

/// Stacked layers around a centered baseline of minus half the total.
/// Returns, per series and month, the (lower, upper) edge in data units.
pub fn stream_layout(values: &[Vec<f64>]) -> Vec<Vec<(f64, f64)>> {
    let months = values.first().map_or(0, Vec::len);
    let mut lower: Vec<f64> = (0..months).map(|m| -0.5 * values.iter().map(|s| s[m]).sum::<f64>()).collect();
    values
        .iter()
        .map(|series| {
            series
                .iter()
                .zip(lower.iter_mut())
                .map(|(&v, lo)| {
                    let edge = (*lo, *lo + v);
                    *lo += v;
                    edge
                })
                .collect()
        })
        .collect()
}

/// Fritsch-Carlson tangents: a cubic Hermite curve through the points with
/// these slopes never overshoots between them.
pub fn monotone_tangents(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        m[i] = if delta[i - 1] * delta[i] <= 0.0 {
            0.0
        } else {
            (delta[i - 1] + delta[i]) / 2.0
        };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta[i];
        let b = m[i + 1] / delta[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let t = 3.0 / s.sqrt();
            m[i] = t * a * delta[i];
            m[i + 1] = t * b * delta[i];
        }
    }
    m
}

/// Bezier segments from point `i` to `j` of a monotone curve.
fn hermite_segment(out: &mut String, xs: &[f64], ys: &[f64], m: &[f64], i: usize, j: usize) {
    let h = (xs[j] - xs[i]) / 3.0;
    let _ = write!(
        out,
        " C{},{} {},{} {},{}",
        num(xs[i] + h),
        num(ys[i] + m[i] * h),
        num(xs[j] - h),
        num(ys[j] - m[j] * h),
        num(xs[j]),
        num(ys[j])
    );
}

fn layer_path(xs: &[f64], upper: &[f64], lower: &[f64]) -> String {
    let n = xs.len();
    let mut d = format!("M{},{}", num(xs[0]), num(upper[0]));
    let mu = monotone_tangents(xs, upper);
    for i in 0..n - 1 {
        hermite_segment(&mut d, xs, upper, &mu, i, i + 1);
    }
    let _ = write!(d, " L{},{}", num(xs[n - 1]), num(lower[n - 1]));
    let ml = monotone_tangents(xs, lower);
    for i in (0..n - 1).rev() {
        hermite_segment(&mut d, xs, lower, &ml, i + 1, i);
    }
    d.push_str(" Z");
    d
}

fn layer_color(topic_rank: usize, word_rank: usize) -> String {
    const HUES: [u32; 8] = [210, 28, 130, 355, 275, 50, 180, 320];
    let hue = HUES[topic_rank % HUES.len()];
    let light = 32 + (word_rank as u32 % 5) * 11;
    format!("hsl({hue},60%,{light}%)")
}

pub fn render_streamgraph_svg(series: &[TrendSeries], title: &str, config: &VizConfig) -> String {
    let (w, h) = (config.chart_width, config.chart_height);
    let pw = w - MARGIN_LEFT - MARGIN_RIGHT - LEGEND_WIDTH;
    let ph = h - MARGIN_TOP - MARGIN_BOTTOM;
    let mid = MARGIN_TOP + ph / 2.0;
    let months: Vec<YearMonth> = series.first().map(|s| s.points.iter().map(|p| p.0).collect()).unwrap_or_default();
    let n = months.len();
    let xs: Vec<f64> = (0..n)
        .map(|i| MARGIN_LEFT + if n > 1 { i as f64 * pw / (n - 1) as f64 } else { pw / 2.0 })
        .collect();
    let values: Vec<Vec<f64>> = series.iter().map(TrendSeries::values).collect();
    let layout = stream_layout(&values);
    let max_total = (0..n).map(|m| values.iter().map(|s| s[m]).sum::<f64>()).fold(0.0, f64::max);
    let scale = if max_total > 0.0 { ph / max_total } else { 0.0 };

    let mut topic_rank: Vec<usize> = Vec::new();
    for s in series {
        if !topic_rank.contains(&s.topic) {
            topic_rank.push(s.topic);
        }
    }
    let rank_of = |topic: usize| topic_rank.iter().position(|&t| t == topic).unwrap_or(0);

    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(out, r##"<rect width="{}" height="{}" fill="#ffffff"/>"##, num(w), num(h));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#,
        num(MARGIN_LEFT + pw / 2.0),
        esc(title)
    );
    out.push_str("<g class=\"layers\" stroke=\"#ffffff\" stroke-width=\"0.3\">\n");
    let mut word_rank = 0;
    let mut last_topic = None;
    for (s, edges) in series.iter().zip(&layout) {
        if last_topic != Some(s.topic) {
            word_rank = 0;
            last_topic = Some(s.topic);
        }
        let color = layer_color(rank_of(s.topic), word_rank);
        word_rank += 1;
        if n == 0 {
            continue;
        }
        let upper: Vec<f64> = edges.iter().map(|e| mid - e.1 * scale).collect();
        let lower: Vec<f64> = edges.iter().map(|e| mid - e.0 * scale).collect();
        let d = if n == 1 {
            let (x0, x1) = (xs[0] - 10.0, xs[0] + 10.0);
            format!("M{},{} L{},{} L{},{} L{},{} Z", num(x0), num(upper[0]), num(x1), num(upper[0]), num(x1), num(lower[0]), num(x0), num(lower[0]))
        } else {
            layer_path(&xs, &upper, &lower)
        };
        let _ = writeln!(
            out,
            r#"<path class="layer" d="{d}" fill="{color}"><title>topic {} {}</title></path>"#,
            s.topic,
            esc(&s.keyword)
        );
    }
    out.push_str("</g>\n");

    out.push_str("<g class=\"x-axis\" font-size=\"10\" text-anchor=\"middle\">\n");
    let base = MARGIN_TOP + ph;
    for (x, m) in xs.iter().zip(&months) {
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="#333333"/><text x="{x}" y="{ty}">{m}</text>"##,
            x = num(*x),
            b = num(base),
            b2 = num(base + 4.0),
            ty = num(base + 16.0)
        );
    }
    out.push_str("</g>\n");

    let lx = MARGIN_LEFT + pw + 20.0;
    let mut ly = MARGIN_TOP;
    out.push_str("<g class=\"legend\" font-size=\"10\">\n");
    let mut last_topic = None;
    let mut word_rank = 0;
    for s in series {
        if last_topic != Some(s.topic) {
            let _ = writeln!(out, r#"<text x="{}" y="{}" font-weight="bold">Topic {}</text>"#, num(lx), num(ly), s.topic + 1);
            ly += 11.0;
            last_topic = Some(s.topic);
            word_rank = 0;
        }
        let _ = writeln!(
            out,
            r#"<rect class="swatch" x="{}" y="{}" width="9" height="9" fill="{}"/><text class="entry" x="{}" y="{}">{}</text>"#,
            num(lx),
            num(ly - 8.0),
            layer_color(rank_of(s.topic), word_rank),
            num(lx + 13.0),
            num(ly),
            esc(&s.keyword)
        );
        word_rank += 1;
        ly += 11.0;
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Streamgraph SVG plus a CSV sidecar of `topic,keyword,month,value`.
pub fn emit_streamgraph(series: &[TrendSeries], out_path: &Path, config: &VizConfig) -> io::Result<()> {
    let months: Option<Vec<YearMonth>> = series.first().map(|s| s.points.iter().map(|p| p.0).collect());
    if series.iter().any(|s| Some(s.points.iter().map(|p| p.0).collect::<Vec<_>>()) != months) {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "series do not share one month axis"));
    }
    let kind = series.first().map_or(TrendKind::Count, |s| s.kind);
    let title = format!("Topic keywords by month ({})", kind.label());
    let mut rows = vec![["topic", "keyword", "month", "value"].map(String::from).to_vec()];
    for s in series {
        for (m, v) in &s.points {
            rows.push(vec![s.topic.to_string(), s.keyword.clone(), m.to_string(), v.to_string()]);
        }
    }
    write_svg_and_csv(out_path, &render_streamgraph_svg(series, &title, config), rows)
}
