//! Domain records shared by every stage of the pipeline, plus their JSONL
//! readers and writers.
//!
//! Each file holds one JSON object per line. Blank lines are skipped; line
//! numbers in errors are 1-based and count blank lines.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: field `{field}` is empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("line {line}: `{field}` = {value} is outside the Likert range 1..=5")]
    LikertRange {
        line: usize,
        field: &'static str,
        value: i64,
    },
    #[error("line {line}: influence for {id:?} is not finite")]
    NonFinite { line: usize, id: String },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than file content.
    pub fn is_io(&self) -> bool {
        matches!(self, DataError::Io { .. })
    }
}

/// One instruction-following instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub query: String,
    pub answer: String,
    /// Fields this crate does not interpret. Kept so that rewriting a file
    /// does not drop them.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Sample {
    pub fn new(id: impl Into<String>, query: impl Into<String>, answer: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            query: query.into(),
            answer: answer.into(),
            extra: Map::new(),
        }
    }

    fn check_fields(&self, line: usize) -> Result<(), DataError> {
        for (field, value) in [("id", &self.id), ("query", &self.query), ("answer", &self.answer)] {
            if value.is_empty() {
                return Err(DataError::EmptyField { line, field });
            }
        }
        Ok(())
    }
}

/// Ordered collection of samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            s.check_fields(i + 1)?;
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId {
                    line: i + 1,
                    id: s.id.clone(),
                });
            }
        }
        Ok(Dataset { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Which difficulty score drives the quadrant split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Knowledge,
    Reasoning,
    #[default]
    Overall,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Knowledge => "knowledge",
            Dimension::Reasoning => "reasoning",
            Dimension::Overall => "overall",
        })
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knowledge" => Ok(Dimension::Knowledge),
            "reasoning" => Ok(Dimension::Reasoning),
            "overall" => Ok(Dimension::Overall),
            other => Err(format!("unknown difficulty dimension {other:?}")),
        }
    }
}

/// Likert ratings (1..=5) along the three difficulty dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DifficultyScores {
    knowledge: u8,
    reasoning: u8,
    overall: u8,
}

impl DifficultyScores {
    pub fn new(knowledge: u8, reasoning: u8, overall: u8) -> Result<Self, DataError> {
        for (field, v) in [
            ("knowledge", knowledge),
            ("reasoning", reasoning),
            ("overall", overall),
        ] {
            check_likert(0, field, v as i64)?;
        }
        Ok(DifficultyScores {
            knowledge,
            reasoning,
            overall,
        })
    }

    /// Same score on every dimension.
    pub fn uniform(score: u8) -> Result<Self, DataError> {
        Self::new(score, score, score)
    }

    pub fn knowledge(&self) -> u8 {
        self.knowledge
    }

    pub fn reasoning(&self) -> u8 {
        self.reasoning
    }

    pub fn overall(&self) -> u8 {
        self.overall
    }

    pub fn get(&self, dim: Dimension) -> u8 {
        match dim {
            Dimension::Knowledge => self.knowledge,
            Dimension::Reasoning => self.reasoning,
            Dimension::Overall => self.overall,
        }
    }
}

fn check_likert(line: usize, field: &'static str, value: i64) -> Result<(), DataError> {
    if (1..=5).contains(&value) {
        Ok(())
    } else {
        Err(DataError::LikertRange { line, field, value })
    }
}

/// Cumulative first-order influence of one training sample. Larger values
/// predict a larger reduction in validation loss.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct InfluenceScore(f64);

impl InfluenceScore {
    pub fn new(value: f64) -> Result<Self, DataError> {
        if value.is_finite() {
            Ok(InfluenceScore(value))
        } else {
            Err(DataError::Invalid(format!("influence {value} is not finite")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample_id: String,
    pub difficulty: DifficultyScores,
    pub influence: InfluenceScore,
}

/// Scores keyed by sample id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: BTreeMap<String, ScoredSample>,
    pub provenance: String,
}

impl ScoreTable {
    pub fn new(provenance: impl Into<String>) -> Self {
        ScoreTable {
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    /// Inserts an entry; fails if the id is already present.
    pub fn insert(&mut self, entry: ScoredSample) -> Result<(), DataError> {
        if self.entries.contains_key(&entry.sample_id) {
            return Err(DataError::DuplicateId {
                line: self.entries.len() + 1,
                id: entry.sample_id,
            });
        }
        self.entries.insert(entry.sample_id.clone(), entry);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ScoredSample> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &ScoredSample> {
        self.entries.values()
    }
}

impl FromIterator<ScoredSample> for ScoreTable {
    /// Later duplicates overwrite earlier ones; use [`ScoreTable::insert`]
    /// when duplicates must be rejected.
    fn from_iter<I: IntoIterator<Item = ScoredSample>>(iter: I) -> Self {
        let mut table = ScoreTable::default();
        for e in iter {
            table.entries.insert(e.sample_id.clone(), e);
        }
        table
    }
}

/// Raw score-file row. Difficulty fields are deserialized as integers so
/// that `4.0` is rejected instead of silently truncated.
#[derive(Debug, Deserialize)]
struct ScoreRow {
    id: String,
    knowledge: Option<i64>,
    reasoning: Option<i64>,
    overall: Option<i64>,
    influence: Option<RawInfluence>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawInfluence {
    Number(f64),
    Text(String),
}

impl RawInfluence {
    fn value(&self) -> Option<f64> {
        match self {
            RawInfluence::Number(v) => Some(*v),
            RawInfluence::Text(s) => match s.as_str() {
                "NaN" | "nan" => Some(f64::NAN),
                "Infinity" | "inf" => Some(f64::INFINITY),
                "-Infinity" | "-inf" => Some(f64::NEG_INFINITY),
                _ => None,
            },
        }
    }
}

/// Quotes bare `NaN` / `Infinity` tokens (as emitted by Python's `json`
/// module) so that the row parses and fails the finiteness check with a
/// useful message instead of a syntax error.
fn quote_non_finite(line: &str) -> Cow<'_, str> {
    if !line.contains("NaN") && !line.contains("Infinity") {
        return Cow::Borrowed(line);
    }
    let mut out = String::with_capacity(line.len() + 8);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            rest = &rest[c.len_utf8()..];
            continue;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        if let Some(t) = token {
            out.push('"');
            out.push_str(t);
            out.push('"');
            rest = &rest[t.len()..];
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    Cow::Owned(out)
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| DataError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, DataError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DataError::io(path, e))
}

/// Iterates `(line_number, line)` over non-blank lines.
fn jsonl_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String), DataError>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(DataError::io(path, e))),
        })
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset, DataError> {
    read_dataset_from(reader, Path::new("<reader>"))
}

fn read_dataset_from<R: BufRead>(reader: R, path: &Path) -> Result<Dataset, DataError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for item in jsonl_lines(reader, path) {
        let (line, text) = item?;
        let sample: Sample = serde_json::from_str(&text).map_err(|e| DataError::Malformed {
            line,
            message: e.to_string(),
        })?;
        sample.check_fields(line)?;
        if !seen.insert(sample.id.clone()) {
            return Err(DataError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    Ok(Dataset { samples })
}

/// Loads a JSONL dataset, preserving file order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    read_dataset_from(open(path)?, path)
}

pub fn write_dataset_to<W: Write>(mut w: W, samples: &[Sample]) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), DataError> {
    let path = path.as_ref();
    write_dataset_to(create(path)?, samples).map_err(|e| DataError::io(path, e))
}

fn parse_score_row(line: usize, text: &str) -> Result<ScoreRow, DataError> {
    let text = quote_non_finite(text);
    serde_json::from_str(&text).map_err(|e| DataError::Malformed {
        line,
        message: e.to_string(),
    })
}

fn row_difficulty(line: usize, row: &ScoreRow) -> Result<DifficultyScores, DataError> {
    let field = |name: &'static str, v: Option<i64>| -> Result<u8, DataError> {
        let v = v.ok_or_else(|| DataError::Malformed {
            line,
            message: format!("missing field `{name}`"),
        })?;
        check_likert(line, name, v)?;
        Ok(v as u8)
    };
    Ok(DifficultyScores {
        knowledge: field("knowledge", row.knowledge)?,
        reasoning: field("reasoning", row.reasoning)?,
        overall: field("overall", row.overall)?,
    })
}

fn row_influence(line: usize, row: &ScoreRow) -> Result<InfluenceScore, DataError> {
    let raw = row.influence.as_ref().ok_or_else(|| DataError::Malformed {
        line,
        message: "missing field `influence`".into(),
    })?;
    let v = raw.value().ok_or_else(|| DataError::Malformed {
        line,
        message: "`influence` must be a number".into(),
    })?;
    InfluenceScore::new(v).map_err(|_| DataError::NonFinite {
        line,
        id: row.id.clone(),
    })
}

fn read_scores_from<R: BufRead>(reader: R, path: &Path) -> Result<ScoreTable, DataError> {
    let mut table = ScoreTable::new(format!("file:{}", path.display()));
    for item in jsonl_lines(reader, path) {
        let (line, text) = item?;
        let row = parse_score_row(line, &text)?;
        if row.id.is_empty() {
            return Err(DataError::EmptyField { line, field: "id" });
        }
        let difficulty = row_difficulty(line, &row)?;
        let influence = row_influence(line, &row)?;
        if table.contains(&row.id) {
            return Err(DataError::DuplicateId { line, id: row.id });
        }
        table.entries.insert(
            row.id.clone(),
            ScoredSample {
                sample_id: row.id,
                difficulty,
                influence,
            },
        );
    }
    Ok(table)
}

pub fn read_scores<R: BufRead>(reader: R) -> Result<ScoreTable, DataError> {
    read_scores_from(reader, Path::new("<reader>"))
}

/// Loads a score file; every row needs all three Likert fields and a finite
/// influence.
pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable, DataError> {
    let path = path.as_ref();
    read_scores_from(open(path)?, path)
}

/// Loads only the difficulty columns of a score-schema file. `influence`
/// may be absent; if present it is ignored.
pub fn load_difficulty(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, DifficultyScores>, DataError> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for item in jsonl_lines(open(path)?, path) {
        let (line, text) = item?;
        let row = parse_score_row(line, &text)?;
        let d = row_difficulty(line, &row)?;
        if out.insert(row.id.clone(), d).is_some() {
            return Err(DataError::DuplicateId { line, id: row.id });
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScoreRowOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    knowledge: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reasoning: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overall: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    influence: Option<f64>,
}

fn write_row<W: Write>(
    w: &mut W,
    id: &str,
    d: Option<DifficultyScores>,
    influence: Option<f64>,
) -> io::Result<()> {
    let row = ScoreRowOut {
        id,
        knowledge: d.map(|d| d.knowledge),
        reasoning: d.map(|d| d.reasoning),
        overall: d.map(|d| d.overall),
        influence,
    };
    serde_json::to_writer(&mut *w, &row)?;
    w.write_all(b"\n")
}

/// Writes score rows in the given order. Difficulty columns are omitted for
/// rows that have none.
pub fn write_score_rows<'a, W, I>(mut w: W, rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, Option<DifficultyScores>, InfluenceScore)>,
{
    for (id, d, inf) in rows {
        write_row(&mut w, id, d, Some(inf.value()))?;
    }
    w.flush()
}

/// Difficulty-only rows (no `influence` column), readable by
/// [`load_difficulty`].
pub fn write_difficulty_to<'a, W, I>(mut w: W, rows: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, DifficultyScores)>,
{
    for (id, d) in rows {
        write_row(&mut w, id, Some(d), None)?;
    }
    w.flush()
}

pub fn write_difficulty(
    path: impl AsRef<Path>,
    difficulty: &BTreeMap<String, DifficultyScores>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let rows = difficulty.iter().map(|(id, d)| (id.as_str(), *d));
    write_difficulty_to(create(path)?, rows).map_err(|e| DataError::io(path, e))
}

/// Writes a full table in ascending id order.
pub fn write_scores(path: impl AsRef<Path>, table: &ScoreTable) -> Result<(), DataError> {
    let path = path.as_ref();
    let rows = table
        .iter()
        .map(|e| (e.sample_id.as_str(), Some(e.difficulty), e.influence));
    write_score_rows(create(path)?, rows).map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldViolation {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

/// Coverage findings for a score table against a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    /// Dataset ids with no score, in dataset order.
    pub missing: Vec<String>,
    /// Scored ids that are not in the dataset, ascending.
    pub orphan: Vec<String>,
    pub violations: Vec<FieldViolation>,
}

impl ValidationReport {
    fn finish(mut self) -> Self {
        self.ok = self.missing.is_empty() && self.orphan.is_empty() && self.violations.is_empty();
        self
    }
}

fn coverage<'a>(
    scored: &BTreeSet<&'a str>,
    dataset: &'a Dataset,
) -> (Vec<String>, Vec<String>) {
    let ids: HashSet<&str> = dataset.ids().collect();
    let missing = dataset
        .ids()
        .filter(|id| !scored.contains(id))
        .map(str::to_owned)
        .collect();
    let orphan = scored
        .iter()
        .filter(|id| !ids.contains(*id))
        .map(|s| s.to_string())
        .collect();
    (missing, orphan)
}

pub fn validate_scores(table: &ScoreTable, dataset: &Dataset) -> ValidationReport {
    let scored: BTreeSet<&str> = table.entries.keys().map(String::as_str).collect();
    let (missing, orphan) = coverage(&scored, dataset);
    ValidationReport {
        ok: false,
        missing,
        orphan,
        violations: Vec::new(),
    }
    .finish()
}

/// Lenient variant of [`load_scores`] + [`validate_scores`]: every bad row
/// is reported instead of stopping at the first one.
pub fn validate_score_file(
    path: impl AsRef<Path>,
    dataset: &Dataset,
) -> Result<ValidationReport, DataError> {
    let path = path.as_ref();
    let mut violations = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for item in jsonl_lines(open(path)?, path) {
        let (line, text) = item?;
        let row = match parse_score_row(line, &text) {
            Ok(r) => r,
            Err(e) => {
                violations.push(FieldViolation {
                    line,
                    id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut bad = |e: DataError| {
            violations.push(FieldViolation {
                line,
                id: Some(row.id.clone()),
                message: e.to_string(),
            })
        };
        if let Err(e) = row_difficulty(line, &row) {
            bad(e);
        }
        if let Err(e) = row_influence(line, &row) {
            bad(e);
        }
        if !seen.insert(row.id.clone()) {
            bad(DataError::DuplicateId {
                line,
                id: row.id.clone(),
            });
        }
        ids.push(row.id);
    }
    let scored: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let (missing, orphan) = coverage(&scored, dataset);
    Ok(ValidationReport {
        ok: false,
        missing,
        orphan,
        violations,
    }
    .finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ds(text: &str) -> Result<Dataset, DataError> {
        read_dataset(Cursor::new(text))
    }

    fn scores(text: &str) -> Result<ScoreTable, DataError> {
        read_scores(Cursor::new(text))
    }

    #[test]
    fn loads_in_file_order() {
        let d = ds(concat!(
            r#"{"id":"b","query":"q1","answer":"a1"}"#,
            "\n",
            r#"{"id":"a","query":"q2","answer":"a2"}"#,
            "\n\n",
            r#"{"id":"c","query":"q3","answer":"a3"}"#,
        ))
        .unwrap();
        assert_eq!(d.ids().collect::<Vec<_>>(), ["b", "a", "c"]);
    }

    #[test]
    fn missing_answer_names_line() {
        let err = ds(concat!(
            r#"{"id":"a","query":"q","answer":"x"}"#,
            "\n",
            r#"{"id":"b","query":"q"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("answer"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = ds(concat!(
            r#"{"id":"a","query":"q","answer":"x"}"#,
            "\n",
            r#"{"id":"a","query":"r","answer":"y"}"#,
        ))
        .unwrap_err();
        assert!(matches!(err, DataError::DuplicateId { line: 2, ref id } if id == "a"));
    }

    #[test]
    fn empty_field_rejected() {
        let err = ds(r#"{"id":"a","query":"","answer":"x"}"#).unwrap_err();
        assert!(matches!(err, DataError::EmptyField { line: 1, field: "query" }));
    }

    #[test]
    fn extra_fields_survive_rewrite() {
        let d = ds(r#"{"id":"a","query":"q","answer":"x","source":"medqa","n":3}"#).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, d.samples()).unwrap();
        let again = ds(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(again, d);
        assert_eq!(again.samples()[0].extra["source"], "medqa");
    }

    #[test]
    fn valid_score_row() {
        let t = scores(r#"{"id":"a","knowledge":4,"reasoning":3,"overall":4,"influence":0.9}"#)
            .unwrap();
        let e = t.get("a").unwrap();
        assert_eq!(e.difficulty, DifficultyScores::new(4, 3, 4).unwrap());
        assert_eq!(e.influence.value(), 0.9);
    }

    #[test]
    fn likert_out_of_range() {
        let err = scores(r#"{"id":"a","knowledge":4,"reasoning":3,"overall":6,"influence":0.9}"#)
            .unwrap_err();
        assert!(matches!(
            err,
            DataError::LikertRange {
                field: "overall",
                value: 6,
                ..
            }
        ));
        let err = scores(r#"{"id":"a","knowledge":0,"reasoning":3,"overall":3,"influence":0.9}"#)
            .unwrap_err();
        assert!(matches!(err, DataError::LikertRange { field: "knowledge", .. }));
    }

    #[test]
    fn float_likert_rejected_not_rounded() {
        let err = scores(r#"{"id":"a","knowledge":4.0,"reasoning":3,"overall":3,"influence":0.9}"#)
            .unwrap_err();
        assert!(matches!(err, DataError::Malformed { .. }));
    }

    #[test]
    fn non_finite_influence() {
        for v in ["NaN", "Infinity", "-Infinity", "\"NaN\""] {
            let line =
                format!(r#"{{"id":"a","knowledge":4,"reasoning":3,"overall":4,"influence":{v}}}"#);
            let err = scores(&line).unwrap_err();
            assert!(matches!(err, DataError::NonFinite { line: 1, .. }), "{v}: {err}");
        }
    }

    #[test]
    fn nan_inside_strings_is_left_alone() {
        assert_eq!(
            quote_non_finite(r#"{"id":"NaN","influence":NaN}"#),
            r#"{"id":"NaN","influence":"NaN"}"#
        );
        assert_eq!(
            quote_non_finite(r#"{"id":"a\"NaN","x":1}"#),
            r#"{"id":"a\"NaN","x":1}"#
        );
    }

    #[test]
    fn duplicate_score_id() {
        let row = r#"{"id":"a","knowledge":4,"reasoning":3,"overall":4,"influence":0.9}"#;
        let err = scores(&format!("{row}\n{row}")).unwrap_err();
        assert!(matches!(err, DataError::DuplicateId { line: 2, .. }));
    }

    fn abc() -> Dataset {
        Dataset::new(vec![
            Sample::new("a", "q", "x"),
            Sample::new("b", "q", "x"),
            Sample::new("c", "q", "x"),
        ])
        .unwrap()
    }

    fn entry(id: &str) -> ScoredSample {
        ScoredSample {
            sample_id: id.into(),
            difficulty: DifficultyScores::uniform(3).unwrap(),
            influence: InfluenceScore::new(0.0).unwrap(),
        }
    }

    #[test]
    fn coverage_report() {
        let d = abc();
        let exact: ScoreTable = ["a", "b", "c"].into_iter().map(entry).collect();
        assert!(validate_scores(&exact, &d).ok);

        let missing: ScoreTable = ["a", "b"].into_iter().map(entry).collect();
        let r = validate_scores(&missing, &d);
        assert!(!r.ok);
        assert_eq!(r.missing, ["c"]);

        let orphan: ScoreTable = ["a", "b", "c", "z"].into_iter().map(entry).collect();
        let r = validate_scores(&orphan, &d);
        assert!(!r.ok);
        assert_eq!(r.orphan, ["z"]);
        assert!(r.missing.is_empty());
    }

    #[test]
    fn lenient_file_validation_collects_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":"a","knowledge":4,"reasoning":3,"overall":9,"influence":0.1}"#,
                "\n",
                r#"{"id":"b","knowledge":4,"reasoning":3,"overall":3,"influence":NaN}"#,
                "\n",
                "not json\n",
                r#"{"id":"z","knowledge":1,"reasoning":1,"overall":1,"influence":0}"#,
                "\n",
            ),
        )
        .unwrap();
        let r = validate_score_file(&path, &abc()).unwrap();
        assert!(!r.ok);
        assert_eq!(r.missing, ["c"]);
        assert_eq!(r.orphan, ["z"]);
        let lines: Vec<usize> = r.violations.iter().map(|v| v.line).collect();
        assert_eq!(lines, [1, 2, 3]);
    }

    #[test]
    fn difficulty_file_without_influence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, r#"{"id":"a","knowledge":2,"reasoning":5,"overall":3}"#).unwrap();
        let d = load_difficulty(&path).unwrap();
        assert_eq!(d["a"].reasoning(), 5);
        assert!(load_scores(&path).is_err());
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_dataset("/nonexistent/definitely/not/here.jsonl").unwrap_err();
        assert!(err.is_io());
    }
}
