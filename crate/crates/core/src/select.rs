//! Difficulty-influence quadrant selection.
//!
//! Samples are split by the influence median `m` and a difficulty threshold
//! `tau` into
//!
//! | quadrant | difficulty | influence |
//! |----------|------------|-----------|
//! | Q1       | `q >= tau` | `i >= m`  |
//! | Q2       | `q <  tau` | `i >= m`  |
//! | Q3       | `q >= tau` | `i <  m`  |
//! | Q4       | `q <  tau` | `i <  m`  |
//!
//! and the subset is filled Q1, Q2, Q3, Q4 in that order, each quadrant by
//! descending influence (ties by ascending id), until `floor(|D| * r)`
//! samples are taken.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Dimension, Sample, ScoreTable, ScoredSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("median of an empty list")]
    EmptyMedian,
    #[error("keeping ratio must lie in (0, 1], got {0}")]
    Ratio(f64),
    #[error("difficulty threshold must lie in [1, 5], got {0}")]
    Threshold(f64),
    #[error("score table does not match dataset (missing: {missing:?}, orphan: {orphan:?})")]
    Incomplete {
        missing: Vec<String>,
        orphan: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionConfig {
    tau: f64,
    ratio: f64,
    dimension: Dimension,
}

impl SelectionConfig {
    pub fn new(tau: f64, ratio: f64, dimension: Dimension) -> Result<Self, SelectError> {
        if !(1.0..=5.0).contains(&tau) {
            return Err(SelectError::Threshold(tau));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(SelectError::Ratio(ratio));
        }
        Ok(SelectionConfig {
            tau,
            ratio,
            dimension,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// `floor(n * r)`.
    pub fn target_count(&self, n: usize) -> usize {
        ((n as f64) * self.ratio).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    /// Fill order.
    pub const ALL: [Quadrant; 4] = [Quadrant::Q1, Quadrant::Q2, Quadrant::Q3, Quadrant::Q4];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.index() + 1)
    }
}

/// Middle element for odd lengths, mean of the two middle elements for even
/// lengths.
pub fn influence_median(values: &[f64]) -> Result<f64, SelectError> {
    if values.is_empty() {
        return Err(SelectError::EmptyMedian);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn assign_quadrant(scored: &ScoredSample, config: &SelectionConfig, median: f64) -> Quadrant {
    let hard = f64::from(scored.difficulty.get(config.dimension)) >= config.tau;
    let high = scored.influence.value() >= median;
    match (hard, high) {
        (true, true) => Quadrant::Q1,
        (false, true) => Quadrant::Q2,
        (true, false) => Quadrant::Q3,
        (false, false) => Quadrant::Q4,
    }
}

/// Descending influence, then ascending id.
fn priority(a: &ScoredSample, b: &ScoredSample) -> Ordering {
    b.influence
        .value()
        .partial_cmp(&a.influence.value())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub id: String,
    pub quadrant: Quadrant,
    /// 1-based position inside the quadrant.
    pub rank: usize,
    pub selected: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QuadrantCounts {
    #[serde(rename = "Q1")]
    pub q1: usize,
    #[serde(rename = "Q2")]
    pub q2: usize,
    #[serde(rename = "Q3")]
    pub q3: usize,
    #[serde(rename = "Q4")]
    pub q4: usize,
}

impl QuadrantCounts {
    pub fn get(&self, q: Quadrant) -> usize {
        [self.q1, self.q2, self.q3, self.q4][q.index()]
    }

    fn bump(&mut self, q: Quadrant) {
        match q {
            Quadrant::Q1 => self.q1 += 1,
            Quadrant::Q2 => self.q2 += 1,
            Quadrant::Q3 => self.q3 += 1,
            Quadrant::Q4 => self.q4 += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestMetadata {
    pub tau: f64,
    pub ratio: f64,
    pub dimension: Dimension,
    pub median: f64,
    pub median_rule: &'static str,
    pub n_target: usize,
    pub n_selected: usize,
    pub counts: QuadrantCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Per-sample assignment plus run metadata. Entries are stored in priority
/// order (Q1 by rank, then Q2, ...), so the selected entries form a prefix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionManifest {
    pub metadata: ManifestMetadata,
    pub entries: Vec<ManifestEntry>,
}

impl SelectionManifest {
    /// Selected ids in selection order.
    pub fn selected_ids(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .take_while(|e| e.selected)
            .map(|e| e.id.as_str())
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.metadata)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Selected samples of `dataset` in selection order.
    pub fn subset<'d>(&self, dataset: &'d Dataset) -> Vec<&'d Sample> {
        let by_id: std::collections::HashMap<&str, &Sample> =
            dataset.iter().map(|s| (s.id.as_str(), s)).collect();
        self.selected_ids().filter_map(|id| by_id.get(id).copied()).collect()
    }

    pub fn write_subset<W: Write>(&self, dataset: &Dataset, mut w: W) -> io::Result<()> {
        for s in self.subset(dataset) {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

pub fn select(
    dataset: &Dataset,
    table: &ScoreTable,
    config: &SelectionConfig,
) -> Result<SelectionManifest, SelectError> {
    let report = crate::data::validate_scores(table, dataset);
    if !report.missing.is_empty() || !report.orphan.is_empty() {
        return Err(SelectError::Incomplete {
            missing: report.missing,
            orphan: report.orphan,
        });
    }
    let scored: Vec<&ScoredSample> = dataset
        .ids()
        .map(|id| table.get(id).expect("coverage checked"))
        .collect();
    let n_target = config.target_count(scored.len()).min(scored.len());

    let (median, entries, counts) = if scored.is_empty() {
        (f64::NAN, Vec::new(), QuadrantCounts::default())
    } else {
        let values: Vec<f64> = scored.iter().map(|s| s.influence.value()).collect();
        let median = influence_median(&values)?;
        let mut buckets: [Vec<&ScoredSample>; 4] = Default::default();
        let mut counts = QuadrantCounts::default();
        for s in &scored {
            let q = assign_quadrant(s, config, median);
            counts.bump(q);
            buckets[q.index()].push(s);
        }
        let mut entries = Vec::with_capacity(scored.len());
        for q in Quadrant::ALL {
            let bucket = &mut buckets[q.index()];
            bucket.sort_by(|a, b| priority(a, b));
            for (i, s) in bucket.iter().enumerate() {
                let selected = entries.len() < n_target;
                entries.push(ManifestEntry {
                    id: s.sample_id.clone(),
                    quadrant: q,
                    rank: i + 1,
                    selected,
                });
            }
        }
        (median, entries, counts)
    };

    let warning = (n_target == 0).then(|| {
        format!(
            "keeping ratio {} selects no samples out of {}",
            config.ratio,
            scored.len()
        )
    });
    Ok(SelectionManifest {
        metadata: ManifestMetadata {
            tau: config.tau,
            ratio: config.ratio,
            dimension: config.dimension,
            median,
            median_rule: "mean of middle pair for even counts",
            n_target,
            n_selected: n_target,
            counts,
            warning,
        },
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DifficultyScores, InfluenceScore};

    fn scored(id: &str, overall: u8, influence: f64) -> ScoredSample {
        ScoredSample {
            sample_id: id.into(),
            difficulty: DifficultyScores::new(1, 5, overall).unwrap(),
            influence: InfluenceScore::new(influence).unwrap(),
        }
    }

    fn fixture() -> (Dataset, ScoreTable) {
        let rows = [
            ("a", 4, 0.9),
            ("b", 2, 0.8),
            ("c", 5, 0.1),
            ("d", 1, -0.2),
            ("e", 3, 0.5),
            ("f", 2, -0.5),
        ];
        let ds = Dataset::new(rows.iter().map(|r| Sample::new(r.0, "q", "a")).collect()).unwrap();
        let table = rows.iter().map(|r| scored(r.0, r.1, r.2)).collect();
        (ds, table)
    }

    fn cfg(tau: f64, ratio: f64) -> SelectionConfig {
        SelectionConfig::new(tau, ratio, Dimension::Overall).unwrap()
    }

    #[test]
    fn median_examples() {
        assert_eq!(influence_median(&[1.0, 2.0, 3.0]), Ok(2.0));
        assert_eq!(influence_median(&[4.0, 1.0, 3.0, 2.0]), Ok(2.5));
        assert_eq!(influence_median(&[5.0]), Ok(5.0));
        assert_eq!(influence_median(&[]), Err(SelectError::EmptyMedian));
    }

    #[test]
    fn quadrant_boundaries() {
        let c = cfg(3.0, 0.5);
        assert_eq!(assign_quadrant(&scored("x", 3, 0.0), &c, 0.0), Quadrant::Q1);
        assert_eq!(assign_quadrant(&scored("x", 2, 0.5), &c, 0.0), Quadrant::Q2);
        assert_eq!(assign_quadrant(&scored("x", 4, -0.1), &c, 0.0), Quadrant::Q3);
        assert_eq!(assign_quadrant(&scored("x", 2, -0.1), &c, 0.0), Quadrant::Q4);
    }

    #[test]
    fn dimension_switch() {
        let s = scored("x", 1, 1.0);
        let c = SelectionConfig::new(3.0, 1.0, Dimension::Reasoning).unwrap();
        assert_eq!(assign_quadrant(&s, &c, 0.0), Quadrant::Q1);
        let c = SelectionConfig::new(3.0, 1.0, Dimension::Knowledge).unwrap();
        assert_eq!(assign_quadrant(&s, &c, 0.0), Quadrant::Q2);
    }

    #[test]
    fn worked_trace() {
        let (ds, t) = fixture();
        let m = select(&ds, &t, &cfg(3.0, 0.5)).unwrap();
        assert!((m.metadata.median - 0.3).abs() < 1e-15);
        assert_eq!(m.metadata.n_target, 3);
        assert_eq!(m.selected_ids().collect::<Vec<_>>(), ["a", "e", "b"]);
        let q = |id| m.entry(id).unwrap().quadrant;
        assert_eq!(
            ["a", "e", "b", "c", "d", "f"].map(q),
            [
                Quadrant::Q1,
                Quadrant::Q1,
                Quadrant::Q2,
                Quadrant::Q3,
                Quadrant::Q4,
                Quadrant::Q4
            ]
        );
        assert_eq!(m.entry("f").unwrap().rank, 2);
    }

    #[test]
    fn full_and_partial_fill() {
        let (ds, t) = fixture();
        let all = select(&ds, &t, &cfg(3.0, 1.0)).unwrap();
        assert_eq!(
            all.selected_ids().collect::<Vec<_>>(),
            ["a", "e", "b", "c", "d", "f"]
        );
        // floor(6 * 0.7) = 4
        let four = select(&ds, &t, &cfg(3.0, 0.7)).unwrap();
        assert_eq!(four.selected_ids().collect::<Vec<_>>(), ["a", "e", "b", "c"]);
    }

    #[test]
    fn tiny_ratio_warns_instead_of_failing() {
        let (ds, t) = fixture();
        let m = select(&ds, &t, &cfg(3.0, 0.1)).unwrap();
        assert_eq!(m.selected_ids().count(), 0);
        assert!(m.metadata.warning.is_some());
        assert_eq!(m.entries.len(), 6);
    }

    #[test]
    fn ties_break_by_id() {
        let ds = Dataset::new(["z", "y", "x"].map(|i| Sample::new(i, "q", "a")).to_vec()).unwrap();
        let t: ScoreTable = ["z", "y", "x"].map(|i| scored(i, 5, 1.0)).into_iter().collect();
        let m = select(&ds, &t, &cfg(3.0, 1.0)).unwrap();
        assert_eq!(m.selected_ids().collect::<Vec<_>>(), ["x", "y", "z"]);
    }

    #[test]
    fn incomplete_table_lists_ids() {
        let (ds, t) = fixture();
        let partial: ScoreTable = t.iter().filter(|e| e.sample_id != "c").cloned().collect();
        match select(&ds, &partial, &cfg(3.0, 0.5)) {
            Err(SelectError::Incomplete { missing, .. }) => assert_eq!(missing, ["c"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_bounds() {
        assert!(SelectionConfig::new(0.5, 0.5, Dimension::Overall).is_err());
        assert!(SelectionConfig::new(5.5, 0.5, Dimension::Overall).is_err());
        assert!(SelectionConfig::new(3.0, 0.0, Dimension::Overall).is_err());
        assert!(SelectionConfig::new(3.0, 1.01, Dimension::Overall).is_err());
        assert!(SelectionConfig::new(3.0, f64::NAN, Dimension::Overall).is_err());
    }

    #[test]
    fn manifest_file_layout() {
        let (ds, t) = fixture();
        let m = select(&ds, &t, &cfg(3.0, 0.5)).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        let meta: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(meta["n_target"], 3);
        assert_eq!(meta["counts"]["Q4"], 2);
        assert_eq!(
            lines[1],
            r#"{"id":"a","quadrant":"Q1","rank":1,"selected":true}"#
        );

        let mut sub = Vec::new();
        m.write_subset(&ds, &mut sub).unwrap();
        let ids: Vec<String> = String::from_utf8(sub)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Sample>(l).unwrap().id)
            .collect();
        assert_eq!(ids, ["a", "e", "b"]);
    }
}
