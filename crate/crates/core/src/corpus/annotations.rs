//! JSON-lines annotations, one sample per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundingSample, Interval};
use crate::error::{Error, Result};
use crate::simplify::SimplifiedQuery;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub duration: f64,
    pub start: f64,
    pub end: f64,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplified: Option<Vec<String>>,
}

impl AnnotationRecord {
    pub fn from_sample(sample: &GroundingSample) -> Self {
        Self {
            video_id: sample.video_id.clone(),
            duration: sample.duration,
            start: sample.gold.start,
            end: sample.gold.end,
            query: sample.query.clone(),
            simplified: sample.simplified_gold.as_ref().map(|s| s.tokens.clone()),
        }
    }

    pub fn into_sample(self) -> Result<GroundingSample> {
        let mut sample = GroundingSample::new(
            self.video_id,
            self.query,
            Interval::new(self.start, self.end),
            self.duration,
        )?;
        sample.simplified_gold = self.simplified.map(SimplifiedQuery::new);
        Ok(sample)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    /// One-based line number.
    pub line: usize,
    pub message: String,
    pub malformed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedAnnotations {
    pub samples: Vec<GroundingSample>,
    pub rejected: Vec<LineError>,
}

/// Parses every line, keeping valid samples and a report of rejected lines.
/// Blank lines are skipped.
pub fn parse_annotations(text: &str) -> ParsedAnnotations {
    let mut out = ParsedAnnotations::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(LineError {
                    line: i + 1,
                    message: e.to_string(),
                    malformed: true,
                });
                continue;
            }
        };
        match record.into_sample() {
            Ok(s) => out.samples.push(s),
            Err(e) => out.rejected.push(LineError {
                line: i + 1,
                message: e.to_string(),
                malformed: false,
            }),
        }
    }
    out
}

/// Loads an annotation file. Fails on the first malformed line with a parse
/// error, otherwise lists every line that violates the interval invariants.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<GroundingSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_annotations(&text);
    if let Some(bad) = parsed.rejected.iter().find(|r| r.malformed) {
        return Err(Error::Parse {
            path: PathBuf::from(path),
            line: bad.line,
            message: bad.message.clone(),
        });
    }
    if !parsed.rejected.is_empty() {
        let report = parsed
            .rejected
            .iter()
            .map(|r| format!("line {}: {}", r.line, r.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Validation(format!("{}: {report}", path.display())));
    }
    Ok(parsed.samples)
}

pub fn write_annotations(path: impl AsRef<Path>, samples: &[GroundingSample]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut buf, &AnnotationRecord::from_sample(s))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
