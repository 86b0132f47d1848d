//! Pore annotation text format: one pore per line as `<x> <y>` (0-based
//! pixel centers, column first), `#` comment lines and blank lines ignored,
//! LF output, points written in row-major order.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::image::{Point, PoreSet, PoreSource};

#[derive(Debug, Error, PartialEq)]
pub enum AnnotError {
    #[error("line {line}: expected `<x> <y>`, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("line {line}: duplicate point ({x}, {y})")]
    Duplicate { line: usize, x: u32, y: u32 },
}

/// Parses annotation text. Tolerates CRLF, blank lines and `#` comments;
/// rejects malformed lines and duplicate coordinates.
pub fn parse_annotations(text: &str, source: PoreSource) -> Result<PoreSet, AnnotError> {
    let mut points: Vec<Point> = Vec::new();
    let mut seen = alloc::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(xs), Some(ys), None) = (it.next(), it.next(), it.next()) else {
            return Err(AnnotError::Malformed { line: i + 1, content: String::from(line) });
        };
        let (Ok(x), Ok(y)) = (xs.parse::<u32>(), ys.parse::<u32>()) else {
            return Err(AnnotError::Malformed { line: i + 1, content: String::from(line) });
        };
        let p = Point::new(x, y);
        if !seen.insert(p) {
            return Err(AnnotError::Duplicate { line: i + 1, x, y });
        }
        points.push(p);
    }
    Ok(PoreSet::new(points, source).expect("duplicates rejected above"))
}

/// Serializes a pore set in row-major order with LF endings;
/// `parse_annotations` of the output reproduces the set exactly.
pub fn write_annotations(pores: &PoreSet) -> String {
    let sorted = pores.sorted_row_major();
    let mut out = String::new();
    for p in sorted.iter() {
        out.push_str(&alloc::format!("{} {}\n", p.x, p.y));
    }
    out
}
