//! Experiment persistence: CSV/JSON record emission and plot-ready
//! accuracy-vs-fraction / params-vs-fraction series.
//!
//! CSV header (fixed):
//! `stage,strategy,fraction,repeat,seed,accuracy,effective_params,cascaded_extra,total_compression,wall_ms`.
//! Floats are written with 17 significant digits so parsing them back is
//! lossless; emit -> parse -> emit is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pruning::PruneStrategy;

pub const CSV_HEADER: &str =
    "stage,strategy,fraction,repeat,seed,accuracy,effective_params,cascaded_extra,total_compression,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// A pruning sweep over an already-trained network.
    Pruned,
    TeacherBaseline,
    StudentKd,
    StudentPruned,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Pruned => "pruned",
            Stage::TeacherBaseline => "teacher_baseline",
            Stage::StudentKd => "student_kd",
            Stage::StudentPruned => "student_pruned",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pruned" => Ok(Stage::Pruned),
            "teacher_baseline" => Ok(Stage::TeacherBaseline),
            "student_kd" => Ok(Stage::StudentKd),
            "student_pruned" => Ok(Stage::StudentPruned),
            other => Err(Error::BadRecord {
                line: 0,
                detail: format!("unknown stage {other:?}"),
            }),
        }
    }
}

/// One row of a sweep report. `strategy` is `None` for baseline/KD rows and
/// serializes as `"none"`. `total_compression` is measured against the run's
/// reference network (the teacher in KD pipelines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub stage: Stage,
    pub strategy: Option<PruneStrategy>,
    pub fraction: f64,
    pub repeat: u32,
    pub seed: u64,
    pub accuracy: f64,
    pub effective_params: u64,
    pub cascaded_extra: u64,
    pub total_compression: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub artifact_version: String,
    /// SHA-256 of the echoed configuration; a pure function of the config.
    pub config_hash: String,
    /// Unix seconds; 0 in canonical (regression-golden) outputs.
    pub timestamp: u64,
    /// The run's full configuration, echoed as `key = value` lines.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: ReportMetadata,
    pub records: Vec<ExperimentRecord>,
}

impl ReportBundle {
    pub fn new(config: String, records: Vec<ExperimentRecord>) -> ReportBundle {
        ReportBundle {
            metadata: ReportMetadata {
                artifact_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config_hash(&config),
                timestamp: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                config,
            },
            records,
        }
    }

    /// Strips wall-clock measurements (timestamp and per-record `wall_ms`)
    /// so repeated fixed-seed runs emit byte-identical files. Used for
    /// regression goldens.
    pub fn canonicalized(mut self) -> ReportBundle {
        self.metadata.timestamp = 0;
        for r in &mut self.records {
            r.wall_ms = 0;
        }
        self
    }
}

pub fn config_hash(config: &str) -> String {
    let digest = Sha256::digest(config.as_bytes());
    let mut out = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// 17 significant digits: enough to reconstruct any f64 exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_csv(bundle: &ReportBundle, path: &Path) -> Result<()> {
    fs::write(path, csv_string(bundle)?)?;
    Ok(())
}

pub fn csv_string(bundle: &ReportBundle) -> Result<String> {
    if bundle.records.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &bundle.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.stage.name(),
            r.strategy.map_or("none", |s| s.name()),
            fmt_f64(r.fraction),
            r.repeat,
            r.seed,
            fmt_f64(r.accuracy),
            r.effective_params,
            r.cascaded_extra,
            fmt_f64(r.total_compression),
            r.wall_ms,
        );
    }
    Ok(out)
}

pub fn emit_json(bundle: &ReportBundle, path: &Path) -> Result<()> {
    fs::write(path, json_string(bundle)?)?;
    Ok(())
}

pub fn json_string(bundle: &ReportBundle) -> Result<String> {
    if bundle.records.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let mut s = serde_json::to_string_pretty(bundle)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(path: &Path) -> Result<ReportBundle> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Parses a CSV produced by [`emit_csv`] back into records.
pub fn parse_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    parse_csv_str(&fs::read_to_string(path)?)
}

pub fn parse_csv_str(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::BadRecord {
                line: 1,
                detail: format!("unexpected header {header:?}"),
            })
        }
        None => {
            return Err(Error::BadRecord {
                line: 1,
                detail: "empty file".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let bad = |detail: String| Error::BadRecord {
            line: lineno,
            detail,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad(format!("expected 10 fields, got {}", fields.len())));
        }
        let strategy = match fields[1] {
            "none" => None,
            s => Some(s.parse::<PruneStrategy>().map_err(|e| bad(e.to_string()))?),
        };
        records.push(ExperimentRecord {
            stage: fields[0].parse().map_err(|e: Error| bad(e.to_string()))?,
            strategy,
            fraction: parse_num(fields[2], "fraction", lineno)?,
            repeat: parse_int(fields[3], "repeat", lineno)?,
            seed: parse_int(fields[4], "seed", lineno)?,
            accuracy: parse_num(fields[5], "accuracy", lineno)?,
            effective_params: parse_int(fields[6], "effective_params", lineno)?,
            cascaded_extra: parse_int(fields[7], "cascaded_extra", lineno)?,
            total_compression: parse_num(fields[8], "total_compression", lineno)?,
            wall_ms: parse_int(fields[9], "wall_ms", lineno)?,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyBundle);
    }
    Ok(records)
}

fn parse_num(s: &str, what: &str, line: usize) -> Result<f64> {
    // non-finite values would poison downstream medians and comparisons
    s.parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| Error::BadRecord {
            line,
            detail: format!("bad {what} {s:?}"),
        })
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::BadRecord {
        line,
        detail: format!("bad {what} {s:?}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveField {
    Accuracy,
    EffectiveParams,
    CascadedExtra,
    TotalCompression,
    WallMs,
}

impl std::str::FromStr for CurveField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(CurveField::Accuracy),
            "effective_params" => Ok(CurveField::EffectiveParams),
            "cascaded_extra" => Ok(CurveField::CascadedExtra),
            "total_compression" => Ok(CurveField::TotalCompression),
            "wall_ms" => Ok(CurveField::WallMs),
            other => Err(Error::UnknownField(other.to_string())),
        }
    }
}

impl CurveField {
    fn get(&self, r: &ExperimentRecord) -> f64 {
        match self {
            CurveField::Accuracy => r.accuracy,
            CurveField::EffectiveParams => r.effective_params as f64,
            CurveField::CascadedExtra => r.cascaded_extra as f64,
            CurveField::TotalCompression => r.total_compression,
            CurveField::WallMs => r.wall_ms as f64,
        }
    }
}

/// Plot-ready series for one strategy: `(fraction, median over repeats)`,
/// fractions ascending.
pub fn curve(
    bundle: &ReportBundle,
    strategy: PruneStrategy,
    y_field: CurveField,
) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<&ExperimentRecord> = bundle
        .records
        .iter()
        .filter(|r| r.strategy == Some(strategy))
        .collect();
    if rows.is_empty() {
        return Err(Error::StrategyAbsent(strategy.name().to_string()));
    }
    let mut fractions: Vec<f64> = rows.iter().map(|r| r.fraction).collect();
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fractions.dedup();
    let mut out = Vec::with_capacity(fractions.len());
    for f in fractions {
        let values: Vec<f64> = rows
            .iter()
            .filter(|r| r.fraction == f)
            .map(|r| y_field.get(r))
            .collect();
        out.push((f, median(values)));
    }
    Ok(out)
}

/// Median of a non-empty list; even counts average the two middle values.
pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        strategy: Option<PruneStrategy>,
        fraction: f64,
        repeat: u32,
        acc: f64,
    ) -> ExperimentRecord {
        ExperimentRecord {
            stage: Stage::Pruned,
            strategy,
            fraction,
            repeat,
            seed: 7,
            accuracy: acc,
            effective_params: 100,
            cascaded_extra: 0,
            total_compression: 0.5,
            wall_ms: 3,
        }
    }

    fn bundle(records: Vec<ExperimentRecord>) -> ReportBundle {
        ReportBundle::new("k = v".into(), records)
    }

    #[test]
    fn one_record_is_two_csv_lines() {
        let b = bundle(vec![record(Some(PruneStrategy::Random), 0.2, 0, 0.9)]);
        let csv = csv_string(&b).unwrap();
        assert_eq!(csv.trim_end().lines().count(), 2);
        assert!(csv.starts_with(CSV_HEADER));
    }

    #[test]
    fn empty_bundle_rejected() {
        let b = bundle(vec![]);
        assert!(matches!(csv_string(&b), Err(Error::EmptyBundle)));
        assert!(matches!(json_string(&b), Err(Error::EmptyBundle)));
    }

    #[test]
    fn csv_round_trip_is_field_exact_and_byte_identical() {
        let b = bundle(vec![
            record(
                Some(PruneStrategy::ClassBlind),
                0.30000000000000004,
                1,
                0.987654321,
            ),
            record(None, 0.0, 0, 1.0 / 3.0),
        ]);
        let csv = csv_string(&b).unwrap();
        let parsed = parse_csv_str(&csv).unwrap();
        assert_eq!(parsed, b.records);
        let again = csv_string(&ReportBundle {
            records: parsed,
            ..b.clone()
        })
        .unwrap();
        assert_eq!(csv, again);
    }

    #[test]
    fn json_round_trip() {
        let b = bundle(vec![record(Some(PruneStrategy::Random), 0.4, 2, 0.75)]);
        let json = json_string(&b).unwrap();
        let back: ReportBundle = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        assert_eq!(json_string(&back).unwrap(), json);
    }

    #[test]
    fn curve_medians() {
        let rows = vec![
            record(Some(PruneStrategy::Random), 0.2, 0, 0.2),
            record(Some(PruneStrategy::Random), 0.2, 1, 0.9),
            record(Some(PruneStrategy::Random), 0.2, 2, 0.4),
            record(Some(PruneStrategy::Random), 0.1, 0, 0.5),
        ];
        let b = bundle(rows);
        let c = curve(&b, PruneStrategy::Random, CurveField::Accuracy).unwrap();
        assert_eq!(c, vec![(0.1, 0.5), (0.2, 0.4)]);
    }

    #[test]
    fn curve_unknown_strategy_errors() {
        let b = bundle(vec![record(Some(PruneStrategy::Random), 0.2, 0, 0.2)]);
        assert!(matches!(
            curve(&b, PruneStrategy::ClassBlind, CurveField::Accuracy),
            Err(Error::StrategyAbsent(_))
        ));
    }

    #[test]
    fn single_repeat_median_is_raw_value() {
        let b = bundle(vec![record(Some(PruneStrategy::ClassBlind), 0.6, 0, 0.91)]);
        let c = curve(&b, PruneStrategy::ClassBlind, CurveField::Accuracy).unwrap();
        assert_eq!(c, vec![(0.6, 0.91)]);
    }

    #[test]
    fn parse_csv_rejects_non_finite_floats() {
        let b = bundle(vec![record(Some(PruneStrategy::Random), 0.2, 0, 0.9)]);
        let csv = csv_string(&b).unwrap();
        let poisoned = csv.replace("2.0000000000000001e-1", "NaN");
        match parse_csv_str(&poisoned) {
            Err(Error::BadRecord { detail, .. }) => assert!(detail.contains("fraction")),
            other => panic!("expected BadRecord, got {other:?}"),
        }
        let poisoned = csv.replace("9.0000000000000002e-1", "inf");
        assert!(parse_csv_str(&poisoned).is_err());
    }

    #[test]
    fn config_hash_is_stable() {
        assert_eq!(config_hash("a"), config_hash("a"));
        assert_ne!(config_hash("a"), config_hash("b"));
        assert_eq!(config_hash("x").len(), 16);
    }

    #[test]
    fn canonicalized_zeroes_clock_fields() {
        let b = bundle(vec![record(Some(PruneStrategy::Random), 0.2, 0, 0.9)]).canonicalized();
        assert_eq!(b.metadata.timestamp, 0);
        assert!(b.records.iter().all(|r| r.wall_ms == 0));
    }
}
