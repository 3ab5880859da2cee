//! Atomic file output and the SVG residual plot.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use ralmkit::bench::{write_csv, write_log};
use ralmkit::ralm::IterateRecord;
use ralmkit::Mat;

/// Writes through a temp file in the target directory, then renames.
fn atomic<F>(path: &Path, fill: F) -> Result<(), String>
where
    F: FnOnce(&mut NamedTempFile) -> Result<(), String>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| format!("{}: {e}", path.display()))?;
    fill(&mut tmp)?;
    tmp.as_file_mut().flush().map_err(|e| e.to_string())?;
    tmp.persist(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

pub fn write_log_atomic(path: &Path, records: &[IterateRecord]) -> Result<(), String> {
    atomic(path, |f| write_log(f, records).map_err(|e| e.to_string()))
}

pub fn write_csv_atomic(path: &Path, m: &Mat) -> Result<(), String> {
    atomic(path, |f| write_csv(f, m).map_err(|e| e.to_string()))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// `log10(kkt_residual)` against the outer iteration as one polyline.
pub fn render_plot(records: &[IterateRecord]) -> String {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.kkt_residual > 0.0 && r.kkt_residual.is_finite())
        .map(|r| (r.k as f64, r.kkt_residual.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    if !pts.is_empty() {
        let kmax = pts.iter().map(|p| p.0).fold(1.0, f64::max);
        let lo = pts
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min)
            .floor();
        let hi = pts
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .max(lo + 1.0);
        let sx = |k: f64| x0 + (x1 - x0) * k / kmax;
        let sy = |v: f64| y0 + (y1 - y0) * (v - lo) / (hi - lo);
        let coords: Vec<String> = pts
            .iter()
            .map(|&(k, v)| format!("{:.2},{:.2}", sx(k), sy(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for (v, label) in [(lo, lo), (hi, hi)] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end">1e{label}</text>"#,
                x0 - 6.0,
                sy(v) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{x1}" y="{}" font-size="12" text-anchor="end">k = {kmax}</text>"#,
            y0 + 20.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">KKT residual</text>"#,
        WIDTH / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_plot(path: &Path, records: &[IterateRecord]) -> Result<(), String> {
    let svg = render_plot(records);
    atomic(path, |f| {
        f.write_all(svg.as_bytes()).map_err(|e| e.to_string())
    })
}
