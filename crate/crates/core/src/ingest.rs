//! DOTA v1.0 annotation text files.
//!
//! One object per line: `x1 y1 x2 y2 x3 y3 x4 y4 category difficult`.
//! Header lines starting with `imagesource:` or `gsd:` and blank lines are
//! skipped. Other annotation formats (HRSC2016 XML, ICDAR2015) are not read.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{fit_gaussian_mle, gaussian_to_obb, Obb, Qbb};
use crate::linalg::Vec2;
use crate::simulator::aspect_ratio_stats;

const HEADER_PREFIXES: [&str; 2] = ["imagesource:", "gsd:"];

/// Where a record or error came from. Line numbers start at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Origin {
    pub file: Option<PathBuf>,
    pub line: usize,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(p) => write!(f, "{}:{}", p.display(), self.line),
            None => write!(f, "line {}", self.line),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationRecord {
    pub qbb: Qbb,
    pub category: String,
    pub difficult: bool,
    pub origin: Origin,
}

impl AnnotationRecord {
    /// Equality of content, ignoring origin, with coordinates compared at
    /// relative tolerance `rel`.
    pub fn same_annotation(&self, other: &Self, rel: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0);
        self.category == other.category
            && self.difficult == other.difficult
            && self
                .qbb
                .corners
                .iter()
                .zip(&other.qbb.corners)
                .all(|(p, q)| close(p.x, q.x) && close(p.y, q.y))
    }

    /// Box decoded from the maximum-likelihood Gaussian of the four corners.
    pub fn decoded_obb(&self) -> Result<Obb> {
        Ok(gaussian_to_obb(&fit_gaussian_mle(&self.qbb.corners)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseErrorKind {
    TokenCount { found: usize },
    BadNumber { index: usize, token: String },
    NonFinite { index: usize, token: String },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::TokenCount { found } => {
                write!(f, "expected 9 or 10 tokens, found {found}")
            }
            ParseErrorKind::BadNumber { index, token } => {
                write!(f, "coordinate {} is not a number: {token:?}", index + 1)
            }
            ParseErrorKind::NonFinite { index, token } => {
                write!(f, "coordinate {} is not finite: {token:?}", index + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{origin}: {kind}")]
pub struct ParseError {
    pub origin: Origin,
    pub kind: ParseErrorKind,
}

/// A line that parsed but needed a guess.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub origin: Origin,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Line {
    Record {
        record: AnnotationRecord,
        warning: Option<ParseWarning>,
    },
    Skip,
}

/// Parses one line. `line_no` is 1-based and only used for diagnostics.
pub fn parse_dota_line(
    line: &str,
    line_no: usize,
) -> std::result::Result<Line, ParseError> {
    parse_line_at(line, Origin { file: None, line: line_no })
}

fn parse_line_at(line: &str, origin: Origin) -> std::result::Result<Line, ParseError> {
    let trimmed = line.trim();
    if trimmed.is_empty() || HEADER_PREFIXES.iter().any(|h| trimmed.starts_with(h)) {
        return Ok(Line::Skip);
    }
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    if !(9..=10).contains(&tokens.len()) {
        return Err(ParseError {
            origin,
            kind: ParseErrorKind::TokenCount { found: tokens.len() },
        });
    }
    let mut coords = [0.0; 8];
    for (index, (slot, token)) in coords.iter_mut().zip(&tokens).enumerate() {
        let v: f64 = token.parse().map_err(|_| ParseError {
            origin: origin.clone(),
            kind: ParseErrorKind::BadNumber { index, token: token.to_string() },
        })?;
        if !v.is_finite() {
            return Err(ParseError {
                origin,
                kind: ParseErrorKind::NonFinite { index, token: token.to_string() },
            });
        }
        *slot = v;
    }
    let (difficult, warning) = match tokens.get(9) {
        Some(t) => (*t != "0", None),
        None => (
            false,
            Some(ParseWarning {
                origin: origin.clone(),
                message: "missing difficult flag, assuming 0".into(),
            }),
        ),
    };
    let corners = [0, 1, 2, 3].map(|i| Vec2::new(coords[2 * i], coords[2 * i + 1]));
    Ok(Line::Record {
        record: AnnotationRecord {
            qbb: Qbb::new(corners),
            category: tokens[8].to_string(),
            difficult,
            origin,
        },
        warning,
    })
}

/// Everything recovered from one source, in line order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FileParse {
    pub path: Option<PathBuf>,
    pub records: Vec<AnnotationRecord>,
    pub errors: Vec<ParseError>,
    pub warnings: Vec<ParseWarning>,
}

pub fn parse_dota_str(text: &str, path: Option<&Path>) -> FileParse {
    let mut out = FileParse {
        path: path.map(Path::to_path_buf),
        ..FileParse::default()
    };
    for (i, line) in text.lines().enumerate() {
        let origin = Origin {
            file: out.path.clone(),
            line: i + 1,
        };
        match parse_line_at(line, origin) {
            Ok(Line::Record { record, warning }) => {
                out.records.push(record);
                out.warnings.extend(warning);
            }
            Ok(Line::Skip) => {}
            Err(e) => out.errors.push(e),
        }
    }
    out
}

/// Reads a file and parses every line. Invalid UTF-8 is replaced rather than
/// rejected, so bad bytes surface as line-level errors.
pub fn parse_dota_file(path: impl AsRef<Path>) -> Result<FileParse> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_dota_str(&String::from_utf8_lossy(&bytes), Some(path)))
}

/// Formats with at most six significant digits and no trailing zeros.
pub fn format_coordinate(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    format!("{rounded}")
}

pub fn format_dota_line(r: &AnnotationRecord) -> String {
    let mut parts: Vec<String> = r
        .qbb
        .corners
        .iter()
        .flat_map(|p| [format_coordinate(p.x), format_coordinate(p.y)])
        .collect();
    parts.push(r.category.clone());
    parts.push(if r.difficult { "1" } else { "0" }.into());
    parts.join(" ")
}

pub fn write_dota_to(records: &[AnnotationRecord], mut sink: impl Write) -> Result<()> {
    for r in records {
        if r.category.is_empty() || r.category.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "category {:?} cannot be written as a single token",
                r.category
            )));
        }
        if r.qbb.corners.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("record from {} has non-finite corners", r.origin)));
        }
    }
    let text: String = records
        .iter()
        .map(|r| format_dota_line(r) + "\n")
        .collect();
    sink.write_all(text.as_bytes())
        .map_err(|e| Error::io("<sink>", e))
}

pub fn write_dota(records: &[AnnotationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dota_to(records, file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses every `*.txt` file directly inside `dir`, in file-name order.
/// Unreadable files are reported in the second list.
pub fn parse_dota_dir(dir: impl AsRef<Path>) -> Result<(Vec<FileParse>, Vec<Error>)> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    let mut parsed = Vec::new();
    let mut failures = Vec::new();
    for p in paths {
        match parse_dota_file(&p) {
            Ok(f) => parsed.push(f),
            Err(e) => failures.push(e),
        }
    }
    Ok((parsed, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySummary {
    pub category: String,
    pub count: usize,
    /// Mean aspect ratio of the decoded boxes; `None` if none decoded.
    pub mar: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub files: usize,
    pub records: usize,
    pub difficult: usize,
    /// Sorted by category name.
    pub categories: Vec<CategorySummary>,
    pub parse_errors: usize,
    pub warnings: usize,
    /// Records whose corners have no spread in some direction.
    pub degenerate: usize,
}

impl DatasetSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,count,mar\n");
        for c in &self.categories {
            let mar = c.mar.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", c.category, c.count, mar));
        }
        out
    }
}

/// Independent of file order: ratios are summed in sorted order.
pub fn summarize_dataset(files: &[FileParse]) -> DatasetSummary {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut decoded: Vec<(Obb, &str)> = Vec::new();
    let mut summary = DatasetSummary {
        files: files.len(),
        ..DatasetSummary::default()
    };
    for f in files {
        summary.parse_errors += f.errors.len();
        summary.warnings += f.warnings.len();
        for r in &f.records {
            summary.records += 1;
            summary.difficult += usize::from(r.difficult);
            *counts.entry(&r.category).or_default() += 1;
            match r.decoded_obb() {
                Ok(b) => decoded.push((b, &r.category)),
                Err(_) => summary.degenerate += 1,
            }
        }
    }
    decoded.sort_by(|a, b| {
        a.1.cmp(b.1)
            .then(a.0.aspect_ratio().total_cmp(&b.0.aspect_ratio()))
    });
    let mar = aspect_ratio_stats(decoded.iter().map(|(b, c)| (b, *c)));
    summary.categories = counts
        .into_iter()
        .map(|(category, count)| CategorySummary {
            category: category.to_string(),
            count,
            mar: mar.get(category).copied(),
        })
        .collect();
    summary
}
