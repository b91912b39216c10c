//! Image files: 8-bit binary PGM and a lossless plain-text matrix format.
//!
//! PGM output maps `[min, max]` affinely onto `0..=255` and records the range
//! in a `# min=<v> max=<v>` comment, which the reader uses to undo the map.
//! The text format holds one grid row per line, space separated, with every
//! value in shortest round-trip form. A single line is read as a 1-D field.
//! An optional `# spacing=<h>` comment carries the grid spacing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{Field, GridShape, ScalarField, VectorField};

pub fn write_pgm<W: Write>(mut out: W, f: &ScalarField) -> Result<()> {
    let shape = f.shape();
    let (lo, hi) = f
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    write!(out, "P5\n# min={lo:?} max={hi:?}\n{} {}\n255\n", shape.n2(), shape.n1())?;
    let span = hi - lo;
    let bytes: Vec<u8> = f
        .values()
        .iter()
        .map(|v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_pgm(bytes: &[u8]) -> Result<ScalarField> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    let mut range: Option<(f64, f64)> = None;
    while tokens.len() < 4 {
        // skip whitespace
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..].iter().position(|b| *b == b'\n').map_or(bytes.len(), |e| pos + e);
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]).into_owned();
            if let Some(r) = parse_range(&comment) {
                range = Some(r);
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(Error::Parse(format!("expected P5 magic, found {:?}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM header value {s:?}")));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let data = bytes.get(pos..pos + width * height).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
    let (lo, hi) = range.unwrap_or((0.0, 1.0));
    let values = data.iter().map(|b| lo + (hi - lo) * (*b as f64) / maxval as f64).collect();
    ScalarField::new(GridShape::plane(height, width)?, values)
}

fn parse_range(comment: &str) -> Option<(f64, f64)> {
    let mut lo = None;
    let mut hi = None;
    for part in comment.split_whitespace() {
        if let Some(v) = part.strip_prefix("min=") {
            lo = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("max=") {
            hi = v.parse().ok();
        }
    }
    Some((lo?, hi?))
}

pub fn write_text<W: Write>(mut out: W, f: &ScalarField) -> Result<()> {
    let shape = f.shape();
    writeln!(out, "# spacing={:?}", shape.spacing())?;
    let (rows, cols) = if shape.dims() == 1 { (1, shape.n1()) } else { (shape.n1(), shape.n2()) };
    let v = f.values();
    for i in 0..rows {
        let line: Vec<String> = v[i * cols..(i + 1) * cols].iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_text(text: &str) -> Result<ScalarField> {
    let mut spacing = 1.0;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(h) = comment.trim().strip_prefix("spacing=") {
                spacing = h.trim().parse().map_err(|_| Error::Parse(format!("bad spacing {h:?}")))?;
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number {t:?}", lineno + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let first = rows.first().ok_or_else(|| Error::Parse("empty matrix".into()))?;
    let cols = first.len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let shape = if rows.len() == 1 { GridShape::line(cols)? } else { GridShape::plane(rows.len(), cols)? };
    ScalarField::new(shape.with_spacing(spacing)?, rows.concat())
}

/// Vector field as text: one matrix block per channel, blocks separated by a
/// `# channel <k>` line.
pub fn write_vector_text<W: Write>(mut out: W, w: &VectorField) -> Result<()> {
    let shape = w.shape();
    writeln!(out, "# spacing={:?}", shape.spacing())?;
    let (rows, cols) = if shape.dims() == 1 { (1, shape.n1()) } else { (shape.n1(), shape.n2()) };
    for k in 0..shape.dims() {
        writeln!(out, "# channel {k}")?;
        let c = w.channel(k);
        for i in 0..rows {
            let line: Vec<String> = c[i * cols..(i + 1) * cols].iter().map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

fn is_pgm(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Read a `.pgm` file or a text matrix (any other extension).
pub fn load_scalar(path: &Path) -> Result<ScalarField> {
    if is_pgm(path) {
        read_pgm(&fs::read(path)?)
    } else {
        read_text(&fs::read_to_string(path)?)
    }
}

/// Write a `.pgm` file or a text matrix (any other extension).
pub fn save_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let mut buf = Vec::new();
    if is_pgm(path) {
        if f.shape().dims() != 2 {
            return Err(Error::param("PGM output needs a 2-D field"));
        }
        write_pgm(&mut buf, f)?;
    } else {
        write_text(&mut buf, f)?;
    }
    fs::write(path, buf)?;
    Ok(())
}
