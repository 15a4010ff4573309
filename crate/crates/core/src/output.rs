//! CSV and SVG writers shared by the library and the CLI.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Round-trippable decimal form with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes a header row and numeric rows.
pub fn write_csv<W: Write>(mut out: W, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Heat map of a 2D grid field, one rectangle per value. `values` is
/// row-major with `ny` columns; NaN cells are drawn grey.
pub fn write_heatmap_svg<W: Write>(mut out: W, nx: usize, ny: usize, values: &[f64], title: &str) -> std::io::Result<()> {
    let cell = 8usize;
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (width, height) = (ny * cell, nx * cell + 20);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(out, r#"<text x="2" y="14" font-size="12">{}</text>"#, escape(title))?;
    for i in 0..nx {
        for j in 0..ny {
            let v = values[i * ny + j];
            let fill = if v.is_finite() {
                let t = (v - lo) / span;
                let r = (255.0 * t).round() as u8;
                let b = (255.0 * (1.0 - t)).round() as u8;
                format!("rgb({r},64,{b})")
            } else {
                "rgb(160,160,160)".to_string()
            };
            writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{fill}"/>"#,
                j * cell,
                20 + (nx - 1 - i) * cell
            )?;
        }
    }
    writeln!(out, "</svg>")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
