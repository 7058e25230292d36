//! Hand-written SVG charts for a summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::experiment::SummaryRow;
use crate::metrics::amdahl_bound;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A plot area with linear axes.
struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    legend: usize,
}

impl Canvas {
    fn new(title: &str, x: (f64, f64), y: (f64, f64), x_label: &str, y_label: &str) -> Self {
        let y = if (y.1 - y.0).abs() < 1e-12 { (y.0 - 1.0, y.1 + 1.0) } else { y };
        let mut c = Canvas { body: String::new(), x, y, legend: 0 };
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            c.body,
            r##"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>
<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="#333"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#333"/>
<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>
<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>
"##,
            W / 2.0,
            escape(title),
            (x0 + x1) / 2.0,
            H - 16.0,
            escape(x_label),
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label),
        );
        for i in 0..=5 {
            let v = c.y.0 + (c.y.1 - c.y.0) * i as f64 / 5.0;
            let py = c.py(v);
            let _ = writeln!(
                c.body,
                r##"<line x1="{x0}" y1="{py:.1}" x2="{x1}" y2="{py:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{v:.2}</text>"##,
                x0 - 6.0,
                py + 3.0
            );
        }
        c
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0).max(1e-12) * (W - RIGHT - LEFT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - BOTTOM - TOP)
    }

    fn x_tick(&mut self, v: f64, label: &str) {
        let px = self.px(v);
        let _ = writeln!(
            self.body,
            r##"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"##,
            H - BOTTOM + 16.0,
            escape(label)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool, markers: bool) {
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2"{dash}/>"#,
            coords.join(" ")
        );
        if markers {
            for &(x, y) in pts {
                let _ = writeln!(
                    self.body,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{stroke}"/>"#,
                    self.px(x),
                    self.py(y)
                );
            }
        }
    }

    fn bar(&mut self, x_center: f64, width_px: f64, value: f64, fill: &str) {
        let (top, base) = (self.py(value.max(self.y.0)), self.py(self.y.0.max(0.0).min(self.y.1)));
        let (y, h) = if top < base { (top, base - top) } else { (base, top - base) };
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.1}" y="{y:.1}" width="{width_px:.1}" height="{h:.1}" fill="{fill}"/>"#,
            self.px(x_center) - width_px / 2.0
        );
    }

    fn legend(&mut self, label: &str, stroke: &str, dashed: bool) {
        let y = TOP + 8.0 + 16.0 * self.legend as f64;
        let x = W - RIGHT + 12.0;
        let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<line x1="{x}" y1="{y}" x2="{:.1}" y2="{y}" stroke="{stroke}" stroke-width="3"{dash}/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            x + 18.0,
            x + 24.0,
            y + 3.0,
            escape(label)
        );
        self.legend += 1;
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn extent(values: impl IntoIterator<Item = f64>, floor_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if floor_zero {
        lo = lo.min(0.0);
    }
    let pad = (hi - lo).abs() * 0.08;
    (lo, hi + pad.max(0.05))
}

fn speedup_plot(rows: &[SummaryRow], warnings: &mut Vec<String>) -> String {
    let max_n = rows.iter().map(|r| r.n_agents).max().unwrap_or(1).max(2) as f64;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let label = format!("{} {} {}", r.scheme, r.condition, r.persona);
        let pts = series.entry(label).or_default();
        if let Some(s) = r.speedup {
            pts.push((r.n_agents as f64, s));
        }
    }
    series.retain(|label, pts| {
        if pts.is_empty() {
            warnings.push(format!("speedup: series '{label}' has no successful baseline; omitted"));
        }
        !pts.is_empty()
    });
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let curves: Vec<(f64, Vec<(f64, f64)>)> = ps
        .iter()
        .map(|&p| {
            let steps = ((max_n - 1.0) * 10.0) as usize;
            let pts = (0..=steps)
                .map(|i| {
                    let s = 1.0 + i as f64 / 10.0;
                    (s, amdahl_bound(p.clamp(0.0, 1.0), s).unwrap_or(1.0))
                })
                .collect();
            (p, pts)
        })
        .collect();

    let y = extent(
        series.values().flatten().map(|p| p.1).chain(curves.iter().flat_map(|c| c.1.iter().map(|p| p.1))),
        true,
    );
    let mut c = Canvas::new("Speedup vs team size", (1.0, max_n), y, "agents (N)", "speedup T(1)/T(N)");
    for n in 1..=max_n as usize {
        c.x_tick(n as f64, &n.to_string());
    }
    for (i, (p, pts)) in curves.iter().enumerate() {
        let stroke = color(i);
        c.polyline(pts, stroke, true, false);
        c.legend(&format!("Amdahl p={p}"), stroke, true);
    }
    for (i, (label, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let stroke = color(i + curves.len());
        c.polyline(pts, stroke, false, true);
        c.legend(label, stroke, false);
    }
    c.finish()
}

fn grouped_bars(
    title: &str,
    y_label: &str,
    groups: &[(String, Vec<(String, f64)>)],
) -> String {
    let y = extent(groups.iter().flat_map(|g| g.1.iter().map(|b| b.1)), true);
    let mut c = Canvas::new(title, (0.0, groups.len() as f64), y, "", y_label);
    let mut legend: Vec<String> = Vec::new();
    for (gi, (name, bars)) in groups.iter().enumerate() {
        c.x_tick(gi as f64 + 0.5, name);
        let width = 0.8 / bars.len().max(1) as f64;
        for (bi, (label, v)) in bars.iter().enumerate() {
            let slot = match legend.iter().position(|l| l == label) {
                Some(k) => k,
                None => {
                    legend.push(label.clone());
                    legend.len() - 1
                }
            };
            let x = gi as f64 + 0.1 + width * (bi as f64 + 0.5);
            let px_width = c.px(width) - c.px(0.0) - 2.0;
            c.bar(x, px_width, *v, color(slot));
        }
    }
    for (i, l) in legend.iter().enumerate() {
        c.legend(l, color(i), false);
    }
    c.finish()
}

fn avg(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().collect();
    crate::metrics::mean(&v)
}

fn schemes(rows: &[SummaryRow]) -> Vec<String> {
    let mut s: Vec<String> = rows.iter().map(|r| r.scheme.clone()).collect();
    s.sort();
    s.dedup();
    s
}

fn conflict_plot(rows: &[SummaryRow]) -> String {
    let groups: Vec<(String, Vec<(String, f64)>)> = schemes(rows)
        .into_iter()
        .map(|scheme| {
            let mine: Vec<&SummaryRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
            let bars = vec![
                ("concurrent write".to_string(), avg(mine.iter().map(|r| r.concurrent_writes_mean)).unwrap_or(0.0)),
                ("rewrite".to_string(), avg(mine.iter().map(|r| r.rewrites_mean)).unwrap_or(0.0)),
                ("temporal violation".to_string(), avg(mine.iter().map(|r| r.temporal_violations_mean)).unwrap_or(0.0)),
            ];
            (scheme, bars)
        })
        .collect();
    grouped_bars("Consistency conflicts per run", "mean events per run", &groups)
}

fn overhead_plot(rows: &[SummaryRow], warnings: &mut Vec<String>) -> Option<String> {
    // Decentralized minus preassigned, matched on everything but the scheme.
    let key = |r: &SummaryRow| (r.benchmark.clone(), r.condition.clone(), r.persona.clone(), r.n_agents);
    let pre: BTreeMap<_, &SummaryRow> = rows.iter().filter(|r| r.scheme == "preassign").map(|r| (key(r), r)).collect();
    let mut by_n: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for d in rows.iter().filter(|r| r.scheme == "decentralized") {
        if let Some(p) = pre.get(&key(d)) {
            let e = by_n.entry(d.n_agents).or_default();
            e.0.push(d.messages_mean - p.messages_mean);
            e.1.push(d.idle_rounds_mean - p.idle_rounds_mean);
        }
    }
    if by_n.is_empty() {
        warnings.push("overhead: needs matched preassign and decentralized cells; omitted".into());
        return None;
    }
    let msgs: Vec<(f64, f64)> = by_n.iter().map(|(n, v)| (*n as f64, avg(v.0.iter().copied()).unwrap_or(0.0))).collect();
    let idle: Vec<(f64, f64)> = by_n.iter().map(|(n, v)| (*n as f64, avg(v.1.iter().copied()).unwrap_or(0.0))).collect();
    let (lo, hi) = (by_n.keys().min().copied().unwrap_or(1), by_n.keys().max().copied().unwrap_or(1));
    let x = if lo == hi { (lo as f64 - 1.0, hi as f64 + 1.0) } else { (lo as f64, hi as f64) };
    let y = extent(msgs.iter().chain(&idle).map(|p| p.1), true);
    let mut c = Canvas::new("Overhead: decentralized minus preassigned", x, y, "agents (N)", "delta per run");
    for n in by_n.keys() {
        c.x_tick(*n as f64, &n.to_string());
    }
    c.polyline(&msgs, color(0), false, true);
    c.legend("messages", color(0), false);
    c.polyline(&idle, color(1), false, true);
    c.legend("idle rounds", color(1), false);
    Some(c.finish())
}

fn straggler_plot(rows: &[SummaryRow], warnings: &mut Vec<String>) -> Option<String> {
    let mut conditions: Vec<(f64, String)> = rows.iter().map(|r| (-r.p, r.condition.clone())).collect();
    conditions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    conditions.dedup();
    let groups: Vec<(String, Vec<(String, f64)>)> = conditions
        .into_iter()
        .map(|(_, cond)| {
            let bars = schemes(rows)
                .into_iter()
                .filter_map(|s| {
                    avg(rows
                        .iter()
                        .filter(|r| r.condition == cond && r.scheme == s && r.n_agents > 1)
                        .filter_map(|r| r.straggler_mean))
                    .map(|v| (s, v))
                })
                .collect();
            (cond, bars)
        })
        .filter(|g: &(String, Vec<(String, f64)>)| !g.1.is_empty())
        .collect();
    if groups.is_empty() {
        warnings.push("straggler: no multi-agent cells with latency data; omitted".into());
        return None;
    }
    Some(grouped_bars("Straggler gap (N > 1)", "mean gap per round (s)", &groups))
}

/// Renders every plot the summary supports as `(file name, svg)` pairs.
pub fn render_plots(rows: &[SummaryRow]) -> (Vec<(String, String)>, Vec<String>) {
    let mut warnings = Vec::new();
    if rows.is_empty() {
        for name in ["speedup", "conflicts", "overhead", "straggler"] {
            warnings.push(format!("{name}: summary is empty; omitted"));
        }
        return (Vec::new(), warnings);
    }
    let mut plots = vec![
        ("speedup.svg".to_string(), speedup_plot(rows, &mut warnings)),
        ("conflicts.svg".to_string(), conflict_plot(rows)),
    ];
    if let Some(svg) = overhead_plot(rows, &mut warnings) {
        plots.push(("overhead.svg".into(), svg));
    }
    if let Some(svg) = straggler_plot(rows, &mut warnings) {
        plots.push(("straggler.svg".into(), svg));
    }
    (plots, warnings)
}

#[derive(Debug, Clone, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn emit_plots(rows: &[SummaryRow], out_dir: &Path) -> io::Result<PlotOutput> {
    let (plots, warnings) = render_plots(rows);
    if !plots.is_empty() {
        fs::create_dir_all(out_dir)?;
    }
    let mut files = Vec::new();
    for (name, svg) in plots {
        let path = out_dir.join(name);
        fs::write(&path, svg)?;
        files.push(path);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PlotOutput { files, warnings })
}
