//! Deterministic SVG line plots of run snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::output::CsvData;
use super::runs::{snapshot_path, SNAPSHOT_INDEX};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Renders the selected snapshot steps (all when `steps` is `None`) into
/// `plots/` inside the run directory. A run without snapshots renders
/// nothing.
pub fn render_snapshots(run_dir: &Path, steps: Option<&[usize]>) -> Result<Vec<PathBuf>> {
    let index_path = run_dir.join(SNAPSHOT_INDEX);
    if !index_path.exists() {
        return Ok(Vec::new());
    }
    let index = CsvData::read(&index_path)?;
    let all_steps = index.column("step")?;
    let times = index.column("t")?;
    let mut written = Vec::new();
    for (step, t) in all_steps.iter().zip(times) {
        let step = *step as usize;
        if steps.is_some_and(|s| !s.contains(&step)) {
            continue;
        }
        let data = CsvData::read(&run_dir.join(snapshot_path(step)))?;
        let names: [&str; 3] = if data.has("re") {
            ["re", "im", "P"]
        } else {
            ["phi", "p", "E"]
        };
        let x = data.column("x")?;
        let series = names
            .iter()
            .map(|n| Ok((*n, data.column(n)?)))
            .collect::<Result<Vec<_>>>()?;
        let svg = plot(&x, &series, &format!("t = {t:.6}"));
        let dir = run_dir.join("plots");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("snapshot_{step:06}.svg"));
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    (lo, hi)
}

fn plot(x: &[f64], series: &[(&str, Vec<f64>)], title: &str) -> String {
    let (x0, x1) = range(x.iter().copied());
    let (y0, y1) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0, MARGIN - 16.0);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-size="11">{y1:.4e}</text>"#, MARGIN - 4.0);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-size="11">{y0:.4e}</text>"#, HEIGHT - MARGIN + 14.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">x ∈ [{x0:.3}, {x1:.3}]</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 14.0);
    for (i, (name, v)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = x
            .iter()
            .zip(v)
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 60.0,
            MARGIN + 16.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_series_do_not_divide_by_zero() {
        let svg = plot(&[0.0, 1.0], &[("P", vec![2.0, 2.0])], "t");
        assert!(!svg.contains("NaN"));
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn missing_index_renders_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render_snapshots(dir.path(), None).unwrap().is_empty());
    }
}
