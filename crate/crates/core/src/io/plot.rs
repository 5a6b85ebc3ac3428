//! Plain SVG plots of a run: angle variance with sensing decisions, and
//! downlink rates.

use std::fmt::Write as _;
use std::path::Path;

use crate::comms::MethodTag;
use crate::error::{Error, Result};
use crate::sensing::SensingAction;
use crate::sim::EpochRecord;

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0).max(f64::MIN_POSITIVE) * (W - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y0) / (self.y1 - self.y0).max(f64::MIN_POSITIVE) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{ylabel}</text>"#,
        H / 2.0
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
}

fn x_ticks(out: &mut String, f: &Frame) {
    let span = f.x1 - f.x0;
    let step = [1.0, 2.0, 5.0, 10.0, 20.0, 25.0, 50.0, 100.0, 200.0, 500.0, 1000.0]
        .into_iter()
        .find(|s| span / s <= 10.0)
        .unwrap_or((span / 10.0).ceil());
    let mut t = (f.x0 / step).ceil() * step;
    while t <= f.x1 {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#, f.x(t), H - BOTTOM + 16.0);
        t += step;
    }
}

fn polyline(out: &mut String, points: &[(f64, f64)], color: &str, class: &str, dash: bool) {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
        pts.join(" ")
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = W - RIGHT - 190.0;
        let _ =
            writeln!(out, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, x + 26.0, y + 4.0);
    }
}

/// Predicted angle variance on a log axis, sensing epochs as markers and the
/// threshold as a horizontal line.
pub fn variance_svg(records: &[EpochRecord], threshold: f64) -> String {
    let mut values: Vec<f64> = records.iter().map(|r| r.predicted_angle_variance()).collect();
    values.extend(records.iter().filter_map(|r| r.random.as_ref().map(|a| a.predicted_angle_variance)));
    values.push(threshold);
    let positive = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite());
    let lo = positive.clone().fold(f64::INFINITY, f64::min).log10().floor();
    let hi = positive.fold(f64::NEG_INFINITY, f64::max).log10().ceil().max(lo + 1.0);
    let last = records.last().map_or(1, |r| r.epoch.max(1)) as f64;
    let f = Frame { x0: 0.0, x1: last, y0: lo, y1: hi };
    let ly = |v: f64| f.y(v.max(10f64.powf(lo)).log10());

    let mut out = String::new();
    open(&mut out, "Predicted angle error variance", "variance (rad², log scale)");
    x_ticks(&mut out, &f);
    for e in lo as i32..=hi as i32 {
        let y = f.y(e as f64);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<line class="threshold" x1="{LEFT}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="3 3"/>"#,
        ly(threshold),
        W - RIGHT
    );
    let mut legend_entries = vec![("optimal selection", "steelblue")];
    if records.iter().any(|r| r.random.is_some()) {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| r.random.as_ref().map(|a| (f.x(r.epoch as f64), ly(a.predicted_angle_variance))))
            .collect();
        polyline(&mut out, &pts, "darkorange", "variance-random", true);
        legend_entries.push(("random selection", "darkorange"));
    }
    let pts: Vec<(f64, f64)> =
        records.iter().map(|r| (f.x(r.epoch as f64), ly(r.predicted_angle_variance()))).collect();
    polyline(&mut out, &pts, "steelblue", "variance", false);
    for r in records.iter().filter(|r| r.action() == SensingAction::Sensing) {
        let _ = writeln!(
            out,
            r#"<circle class="sensing-marker" cx="{:.2}" cy="{:.2}" r="3.5" fill="crimson"/>"#,
            f.x(r.epoch as f64),
            ly(r.predicted_angle_variance())
        );
    }
    legend_entries.push(("threshold", "gray"));
    legend(&mut out, &legend_entries);
    out.push_str("</svg>\n");
    out
}

/// Rate of each method over ON epochs; OFF epochs leave gaps.
pub fn rate_svg(records: &[EpochRecord]) -> String {
    let max_rate = records.iter().flat_map(|r| r.rates.values().map(|l| l.rate)).fold(0.0, f64::max);
    let last = records.last().map_or(1, |r| r.epoch.max(1)) as f64;
    let f = Frame { x0: 0.0, x1: last, y0: 0.0, y1: (max_rate * 1.1).max(1.0).ceil() };

    let mut out = String::new();
    open(&mut out, "Downlink rate", "rate (bit/s/Hz)");
    x_ticks(&mut out, &f);
    let ystep = (f.y1 / 5.0).ceil().max(1.0);
    let mut t = 0.0;
    while t <= f.y1 {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{t}</text>"#, LEFT - 6.0, f.y(t) + 4.0);
        t += ystep;
    }
    let styles = [
        (MethodTag::Proposed, "proposed", "steelblue"),
        (MethodTag::Conventional, "conventional", "darkorange"),
        (MethodTag::Perfect, "perfect angle", "seagreen"),
    ];
    for (tag, name, color) in styles {
        let class = format!("rate-{}", name.split(' ').next().unwrap_or(name));
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let mut prev: Option<usize> = None;
        for r in records {
            let Some(link) = r.rates.get(&tag) else { continue };
            if prev.is_some_and(|p| p + 1 != r.epoch) && !segment.is_empty() {
                polyline(&mut out, &segment, color, &class, false);
                segment.clear();
            }
            let p = (f.x(r.epoch as f64), f.y(link.rate));
            let _ =
                writeln!(out, r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}"/>"#, p.0, p.1);
            segment.push(p);
            prev = Some(r.epoch);
        }
        if !segment.is_empty() {
            polyline(&mut out, &segment, color, &class, false);
        }
    }
    legend(&mut out, &styles.map(|(_, n, c)| (n, c)));
    out.push_str("</svg>\n");
    out
}

/// Writes `variance.svg` and `rate.svg` into `dir`.
pub fn emit_plots(records: &[EpochRecord], threshold: f64, dir: &Path) -> Result<Vec<String>> {
    if records.is_empty() {
        return Err(Error::Precondition("no records to plot".into()));
    }
    let mut written = Vec::new();
    for (name, body) in [("variance.svg", variance_svg(records, threshold)), ("rate.svg", rate_svg(records))] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_scenario, Scenario, TrafficModel};

    #[test]
    fn variance_plot_contents() {
        let mut s = Scenario::reference(4);
        s.num_epochs = 60;
        let records = run_scenario(&s).unwrap();
        let svg = variance_svg(&records, s.policy.variance_threshold);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(r#"class="threshold""#).count(), 1);
        let sensing = records.iter().filter(|r| r.action() == SensingAction::Sensing).count();
        assert!(sensing > 0);
        assert_eq!(svg.matches("sensing-marker").count(), sensing);
    }

    #[test]
    fn rate_plot_with_no_traffic() {
        let mut s = Scenario::reference(4);
        s.num_epochs = 20;
        s.traffic = TrafficModel::Intervals { on: vec![] };
        let records = run_scenario(&s).unwrap();
        let svg = rate_svg(&records);
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("<polyline"));
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_plots(&records, 1e-3, dir.path()).unwrap(), ["variance.svg", "rate.svg"]);
        assert!(emit_plots(&[], 1e-3, dir.path()).is_err());
    }

    #[test]
    fn rate_plot_gaps() {
        let mut s = Scenario::reference(4);
        s.num_epochs = 30;
        s.traffic = TrafficModel::Intervals { on: vec![(2, 8), (15, 20)] };
        let svg = rate_svg(&run_scenario(&s).unwrap());
        assert_eq!(svg.matches(r#"<polyline class="rate-proposed""#).count(), 2);
        assert_eq!(svg.matches(r#"<circle class="rate-perfect""#).count(), 11);
    }
}
