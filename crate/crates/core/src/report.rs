//! Histograms, summary tables and static SVG figures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::classify::LoocvReport;
use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::labeling::Label;
use crate::metrics::{Measure, PairPartition};

/// Equal-width histogram over `[edges[0], edges[bins]]`; the last bin is
/// closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count-weighted mean of bin midpoints; `None` for an empty histogram.
    pub fn mass_center(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let sum: f64 =
            self.counts.iter().enumerate().map(|(i, &c)| c as f64 * 0.5 * (self.edges[i] + self.edges[i + 1])).sum();
        Some(sum / total as f64)
    }
}

fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    // A degenerate range gets a unit-wide window so edges stay increasing.
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    edges
}

fn count_into(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &v in values {
        let mut i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        // guard against rounding at interior edges
        while i > 0 && v < edges[i] {
            i -= 1;
        }
        while i + 1 < bins && v >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    counts
}

pub fn build_histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::InvalidInput("histogram of no values".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite histogram value".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = equal_width_edges(lo, hi, bins);
    let counts = count_into(values, &edges);
    Ok(Histogram { edges, counts })
}

/// ww / ll / wl histograms over one shared set of edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistogram {
    pub ww: Histogram,
    pub ll: Histogram,
    pub wl: Histogram,
}

pub fn build_pair_histogram(p: &PairPartition, bins: usize) -> Result<PairHistogram> {
    let all: Vec<f64> = p.ww.iter().chain(&p.ll).chain(&p.wl).copied().collect();
    let shared = build_histogram(&all, bins)?;
    let make = |v: &[f64]| Histogram { edges: shared.edges.clone(), counts: count_into(v, &shared.edges) };
    Ok(PairHistogram { ww: make(&p.ww), ll: make(&p.ll), wl: make(&p.wl) })
}

/// `bin_start,bin_end,ww,ll,wl`.
pub fn write_pair_histogram_csv<W: Write>(out: W, h: &PairHistogram) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "bin_end", "ww", "ll", "wl"])?;
    for i in 0..h.ww.counts.len() {
        w.write_record([
            h.ww.edges[i].to_string(),
            h.ww.edges[i + 1].to_string(),
            h.ww.counts[i].to_string(),
            h.ll.counts[i].to_string(),
            h.wl.counts[i].to_string(),
        ])?;
    }
    w.flush()
}

/// Fixed-width text table of the sweep, rates at 4 decimals.
pub fn summary_table(reports: &[LoocvReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6}  {:<9}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}",
        "months", "measure", "total", "winner", "loser", "w_sigma", "l_sigma"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:>6}  {:<9}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
            r.window_months,
            r.measure.as_str(),
            r.total_rate,
            r.winner_rate,
            r.loser_rate,
            r.winner_estimate.sigma,
            r.loser_estimate.sigma
        );
    }
    s
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn svg_open(s: &mut String, title: &str) {
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, b, t) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(s, "<path d=\"M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let yv = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xv:.2}</text>", f.px(xv), b + 16.0);
        let _ =
            writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{yv:.2}</text>", l - 6.0, f.py(yv) + 4.0);
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let x = W - MARGIN - 130.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            y - 9.0,
            x + 14.0,
            y,
            escape(name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

type Series = (&'static str, fn(&LoocvReport) -> f64);

/// Error rate against window length: total / winner / loser per measure.
pub fn error_curves_svg(reports: &[LoocvReport], title: &str) -> String {
    let mut measures: Vec<Measure> = reports.iter().map(|r| r.measure).collect();
    measures.sort();
    measures.dedup();
    let xs: Vec<f64> = reports.iter().map(|r| r.window_months as f64).collect();
    let xmin = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f = Frame::new(xmin, xmax, 0.0, 1.0);
    let mut s = String::new();
    svg_open(&mut s, title);
    axes(&mut s, &f, "initial window (months)", "error rate");
    let _ = writeln!(
        s,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        f.px(f.x0),
        f.py(0.5),
        f.px(f.x1),
        f.py(0.5)
    );
    let mut entries = Vec::new();
    let mut color = 0;
    for m in &measures {
        let mut rows: Vec<&LoocvReport> = reports.iter().filter(|r| r.measure == *m).collect();
        rows.sort_by_key(|r| r.window_months);
        let series: [Series; 3] =
            [("total", |r| r.total_rate), ("winner", |r| r.winner_rate), ("loser", |r| r.loser_rate)];
        let dash = if *m == Measure::Distance { "" } else { " stroke-dasharray=\"6 3\"" };
        for (name, get) in series {
            let c = PALETTE[color % PALETTE.len()];
            color += 1;
            let pts: Vec<String> =
                rows.iter().map(|r| format!("{:.1},{:.1}", f.px(r.window_months as f64), f.py(get(r)))).collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"{dash}/>",
                pts.join(" ")
            );
            for p in &pts {
                let (x, y) = p.split_once(',').unwrap();
                let _ = writeln!(s, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{c}\"/>");
            }
            entries.push((format!("{m} {name}"), c));
        }
    }
    let refs: Vec<(&str, &str)> = entries.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    legend(&mut s, &refs);
    s.push_str("</svg>\n");
    s
}

/// Overlaid step outlines of the three pair distributions.
pub fn histogram_svg(h: &PairHistogram, title: &str) -> String {
    let edges = &h.ww.edges;
    let ymax = [&h.ww, &h.ll, &h.wl].iter().flat_map(|x| x.counts.iter()).copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame::new(edges[0], *edges.last().unwrap(), 0.0, ymax);
    let mut s = String::new();
    svg_open(&mut s, title);
    axes(&mut s, &f, "correlation distance", "pair count");
    let series =
        [("winner/winner", &h.ww, PALETTE[0]), ("loser/loser", &h.ll, PALETTE[1]), ("winner/loser", &h.wl, PALETTE[2])];
    for (_, hist, c) in &series {
        let mut d = format!("M{:.1},{:.1}", f.px(edges[0]), f.py(0.0));
        for (i, &n) in hist.counts.iter().enumerate() {
            let _ = write!(
                d,
                " L{:.1},{:.1} L{:.1},{:.1}",
                f.px(edges[i]),
                f.py(n as f64),
                f.px(edges[i + 1]),
                f.py(n as f64)
            );
        }
        let _ = write!(d, " L{:.1},{:.1}", f.px(*edges.last().unwrap()), f.py(0.0));
        let _ = writeln!(s, "<path d=\"{d}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>");
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|(n, _, c)| (*n, *c)).collect();
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Scatter of the first two coordinates, coloured by label.
pub fn scatter_svg(e: &Embedding, title: &str, xlabel: &str, ylabel: &str) -> String {
    let get = |i: usize| e.points.iter().map(move |p| p.coords.get(i).copied().unwrap_or(0.0));
    let (x0, x1) = get(0).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = get(1).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let f = if e.points.is_empty() { Frame::new(0.0, 1.0, 0.0, 1.0) } else { Frame::new(x0, x1, y0, y1) };
    let color = |l: Label| match l {
        Label::Winner => PALETTE[0],
        Label::Loser => PALETTE[1],
        Label::Middle => "#7f7f7f",
    };
    let mut s = String::new();
    svg_open(&mut s, title);
    axes(&mut s, &f, xlabel, ylabel);
    for p in &e.points {
        let x = p.coords.first().copied().unwrap_or(0.0);
        let y = p.coords.get(1).copied().unwrap_or(0.0);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.8\"><title>{}</title></circle>",
            f.px(x),
            f.py(y),
            color(p.label),
            escape(&p.ticker)
        );
    }
    legend(&mut s, &[("winner", PALETTE[0]), ("loser", PALETTE[1]), ("middle", "#7f7f7f")]);
    s.push_str("</svg>\n");
    s
}

/// Render every figure for the given inputs as `(file name, svg)` pairs.
pub fn render_plots(
    reports: &[LoocvReport],
    histograms: &[(Measure, PairHistogram)],
    embeddings: &[(&str, &Embedding)],
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if !reports.is_empty() {
        out.push(("error_curves.svg".to_string(), error_curves_svg(reports, "LOOCV 1-NN error")));
    }
    for (m, h) in histograms {
        out.push((format!("hist_{m}.svg"), histogram_svg(h, &format!("pair distances ({m})"))));
    }
    for (name, e) in embeddings {
        let (xl, yl) = if e.dims() >= 3 { ("PC1", "PC2") } else { ("internal coordinate 1", "internal coordinate 2") };
        out.push((format!("embed_{name}.svg"), scatter_svg(e, &format!("embedding: {name}"), xl, yl)));
    }
    out
}

pub fn emit_plots(
    reports: &[LoocvReport],
    histograms: &[(Measure, PairHistogram)],
    embeddings: &[(&str, &Embedding)],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let plots = render_plots(reports, histograms, embeddings);
    if plots.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    plots
        .into_iter()
        .map(|(name, body)| {
            let path = out_dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
