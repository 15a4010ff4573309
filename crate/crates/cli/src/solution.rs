//! Solution CSV files: written by `solve`, read back by `probe` and `ot`.

use std::io::Write;
use std::path::Path;

use slc_core::output::fmt17;
use slc_core::{Error, GraphPatch, Result};

/// Optional per-point columns written next to `x1..xn,u`.
pub struct ExtraColumn<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub fn write_solution<W: Write>(patch: &GraphPatch, extra: &[ExtraColumn<'_>], mut out: W) -> std::io::Result<()> {
    let mut header: Vec<String> = (1..=patch.n()).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.extend(extra.iter().map(|c| c.name.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for f in 0..patch.len() {
        let mut cells: Vec<String> = patch.coords(f).into_iter().map(fmt17).collect();
        cells.push(fmt17(patch.u()[f]));
        cells.extend(extra.iter().map(|c| fmt17(c.values[f])));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Rebuilds the grid from the `x1..xn` and `u` columns.
pub fn read_solution(path: &Path) -> Result<GraphPatch> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    let n = header.iter().take_while(|h| h.starts_with('x')).count();
    let u_col = header
        .iter()
        .position(|&h| h == "u")
        .filter(|&c| c == n && n > 0)
        .ok_or_else(|| bad("expected columns x1..xn,u".into()))?;
    let mut points = Vec::new();
    for (k, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", k + 2)))?;
        if cells.len() != header.len() {
            return Err(bad(format!("row {} has {} cells", k + 2, cells.len())));
        }
        points.push((cells[..n].to_vec(), cells[u_col]));
    }
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let mut v: Vec<f64> = points.iter().map(|p| p.0[a]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    if axes.iter().any(|v| v.len() < 2) {
        return Err(bad("need at least two grid points per axis".into()));
    }
    let spacing = axes[0][1] - axes[0][0];
    let origin: Vec<f64> = axes.iter().map(|v| v[0]).collect();
    let extents: Vec<usize> = axes.iter().map(Vec::len).collect();
    if extents.iter().product::<usize>() != points.len() {
        return Err(bad("points do not form a full grid".into()));
    }
    let mut patch = GraphPatch::new(origin.clone(), spacing, extents.clone(), vec![0.0; points.len()])?;
    for (x, u) in points {
        let multi: Vec<usize> = x
            .iter()
            .zip(&origin)
            .map(|(xi, o)| ((xi - o) / spacing).round() as usize)
            .collect();
        if multi.iter().zip(&extents).any(|(i, e)| i >= e) {
            return Err(bad("point off the uniform grid".into()));
        }
        let f = patch.flat_index(&multi);
        patch.u_mut()[f] = u;
    }
    Ok(patch)
}
