//! Wearable sample ingestion and aggregation.

mod dates;
mod query;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dates::parse_reference_date;
pub use query::{
    AggregateResult, AggregationLevel, AggregationQuery, Bucket, GuidelineReport, GUIDELINE_MINUTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SampleKind {
    StepCount,
    ActiveEnergyBurned,
    ExerciseTime,
    DistanceWalkingRunning,
    HeartRate,
    Workout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Unit {
    Steps,
    Kcal,
    Min,
    Km,
    Bpm,
}

impl SampleKind {
    pub const ALL: [SampleKind; 6] = [
        Self::StepCount,
        Self::ActiveEnergyBurned,
        Self::ExerciseTime,
        Self::DistanceWalkingRunning,
        Self::HeartRate,
        Self::Workout,
    ];

    pub fn unit(self) -> Unit {
        match self {
            SampleKind::StepCount => Unit::Steps,
            SampleKind::ActiveEnergyBurned => Unit::Kcal,
            SampleKind::ExerciseTime | SampleKind::Workout => Unit::Min,
            SampleKind::DistanceWalkingRunning => Unit::Km,
            SampleKind::HeartRate => Unit::Bpm,
        }
    }

    /// Heart rate is averaged; every other kind is summed.
    pub fn is_cumulative(self) -> bool {
        self != SampleKind::HeartRate
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::StepCount => "stepCount",
            SampleKind::ActiveEnergyBurned => "activeEnergyBurned",
            SampleKind::ExerciseTime => "exerciseTime",
            SampleKind::DistanceWalkingRunning => "distanceWalkingRunning",
            SampleKind::HeartRate => "heartRate",
            SampleKind::Workout => "workout",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SampleKind::StepCount => "step count",
            SampleKind::ActiveEnergyBurned => "active energy burned",
            SampleKind::ExerciseTime => "exercise time",
            SampleKind::DistanceWalkingRunning => "walking + running distance",
            SampleKind::HeartRate => "heart rate",
            SampleKind::Workout => "workout minutes",
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleKind {
    type Err = HealthError;

    /// Accepts the camelCase wire name or its snake_case spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_')
            .collect::<String>()
            .to_lowercase();
        SampleKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_lowercase() == norm)
            .ok_or_else(|| HealthError::UnknownSampleType(s.to_string()))
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Steps => "steps",
            Unit::Kcal => "kcal",
            Unit::Min => "min",
            Unit::Km => "km",
            Unit::Bpm => "bpm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HealthSample {
    pub kind: SampleKind,
    pub value: f64,
    /// Optional on input; must match the kind's unit when present.
    #[serde(default)]
    pub unit: Option<Unit>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub source_id: String,
}

impl HealthSample {
    pub fn new(
        kind: SampleKind,
        value: f64,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        source_id: impl Into<String>,
    ) -> Self {
        Self {
            kind,
            value,
            unit: Some(kind.unit()),
            start,
            end,
            source_id: source_id.into(),
        }
    }

    pub fn key(&self) -> SampleKey {
        SampleKey {
            source_id: self.source_id.clone(),
            kind: self.kind,
            start: self.start,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.end < self.start {
            return Err("end is before start".into());
        }
        if !self.value.is_finite() {
            return Err("value is not finite".into());
        }
        if self.kind == SampleKind::HeartRate {
            if self.value <= 0.0 {
                return Err("heartRate must be > 0".into());
            }
        } else if self.value < 0.0 {
            return Err(format!("{} must be >= 0", self.kind));
        }
        if let Some(unit) = self.unit {
            if unit != self.kind.unit() {
                return Err(format!(
                    "unit {unit} does not match {} ({})",
                    self.kind,
                    self.kind.unit()
                ));
            }
        }
        if self.source_id.trim().is_empty() {
            return Err("sourceId is empty".into());
        }
        Ok(())
    }
}

/// Identity used for idempotent ingestion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleKey {
    pub source_id: String,
    pub kind: SampleKind,
    pub start: DateTime<Utc>,
}

impl SampleKey {
    /// Stable document id for persistence.
    pub fn document_id(&self) -> String {
        format!(
            "{}|{}|{}",
            self.source_id,
            self.kind,
            self.start.timestamp_millis()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejection>,
    /// Samples that were new to the store, in batch order.
    #[serde(skip)]
    pub stored: Vec<HealthSample>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HealthError {
    #[error("unknown sample type `{0}`")]
    UnknownSampleType(String),
    #[error("unknown aggregation level `{0}`")]
    UnknownAggregationLevel(String),
    #[error("unrecognized reference date `{0}`")]
    UnrecognizedDate(String),
}

/// One user's samples. Batches are applied under a write lock so readers never
/// observe a partially ingested batch.
#[derive(Debug, Default)]
pub struct HealthStore {
    samples: RwLock<BTreeMap<SampleKey, HealthSample>>,
}

impl HealthStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&self, batch: Vec<HealthSample>) -> IngestReport {
        let items = batch.into_iter().map(Ok).collect();
        self.ingest_items(items)
    }

    /// Ingests a raw JSON batch; items that fail to parse are rejected individually.
    pub fn ingest_json(&self, batch: &[serde_json::Value]) -> IngestReport {
        let items = batch
            .iter()
            .map(|v| serde_json::from_value::<HealthSample>(v.clone()).map_err(|e| e.to_string()))
            .collect();
        self.ingest_items(items)
    }

    fn ingest_items(&self, items: Vec<Result<HealthSample, String>>) -> IngestReport {
        let mut report = IngestReport::default();
        let mut map = self.samples.write().expect("health store lock poisoned");
        for (index, item) in items.into_iter().enumerate() {
            let mut sample = match item.and_then(|s| s.check().map(|_| s)) {
                Ok(s) => s,
                Err(reason) => {
                    report.rejected.push(Rejection { index, reason });
                    continue;
                }
            };
            sample.unit = Some(sample.kind.unit());
            let key = sample.key();
            if map.contains_key(&key) {
                report.duplicates += 1;
                continue;
            }
            map.insert(key, sample.clone());
            report.stored.push(sample);
            report.accepted += 1;
        }
        report
    }

    pub fn len(&self) -> usize {
        self.samples
            .read()
            .expect("health store lock poisoned")
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of every stored sample in key order.
    pub fn snapshot(&self) -> Vec<HealthSample> {
        self.samples
            .read()
            .expect("health store lock poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub(crate) fn with_samples<R>(
        &self,
        f: impl FnOnce(&BTreeMap<SampleKey, HealthSample>) -> R,
    ) -> R {
        f(&self.samples.read().expect("health store lock poisoned"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    fn steps(v: f64, at: &str) -> HealthSample {
        HealthSample::new(SampleKind::StepCount, v, t(at), t(at), "watch")
    }

    #[test]
    fn two_distinct_samples_accepted() {
        let store = HealthStore::new();
        let r = store.ingest(vec![
            steps(10.0, "2025-05-10T09:00:00Z"),
            steps(20.0, "2025-05-10T10:00:00Z"),
        ]);
        assert_eq!((r.accepted, r.duplicates), (2, 0));
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn duplicate_in_batch_dropped() {
        let store = HealthStore::new();
        let s = steps(10.0, "2025-05-10T09:00:00Z");
        let r = store.ingest(vec![s.clone(), s]);
        assert_eq!((r.accepted, r.duplicates), (1, 1));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn end_before_start_rejected_and_batch_continues() {
        let store = HealthStore::new();
        let bad = HealthSample::new(
            SampleKind::StepCount,
            5.0,
            t("2025-05-10T09:00:00Z"),
            t("2025-05-10T08:00:00Z"),
            "w",
        );
        let r = store.ingest(vec![bad, steps(1.0, "2025-05-10T11:00:00Z")]);
        assert_eq!(r.accepted, 1);
        assert_eq!(
            r.rejected,
            vec![Rejection {
                index: 0,
                reason: "end is before start".into()
            }]
        );
    }

    #[test]
    fn value_rules_per_kind() {
        let at = t("2025-05-10T09:00:00Z");
        assert!(HealthSample::new(SampleKind::HeartRate, 0.0, at, at, "w")
            .check()
            .is_err());
        assert!(HealthSample::new(SampleKind::StepCount, 0.0, at, at, "w")
            .check()
            .is_ok());
        assert!(HealthSample::new(SampleKind::StepCount, -1.0, at, at, "w")
            .check()
            .is_err());
        let mut wrong_unit = HealthSample::new(SampleKind::StepCount, 1.0, at, at, "w");
        wrong_unit.unit = Some(Unit::Bpm);
        assert!(wrong_unit.check().is_err());
    }

    #[test]
    fn malformed_json_items_are_rejected_individually() {
        let store = HealthStore::new();
        let batch: Vec<serde_json::Value> = serde_json::from_str(
            r#"[
              {"kind":"stepCount","value":3000,"start":"2025-05-10T09:00:00-07:00","end":"2025-05-10T09:30:00-07:00","sourceId":"watch"},
              {"kind":"flights","value":3,"start":"2025-05-10T09:00:00Z","end":"2025-05-10T09:00:00Z","sourceId":"watch"},
              {"kind":"stepCount","value":"many"}
            ]"#,
        )
        .unwrap();
        let r = store.ingest_json(&batch);
        assert_eq!(r.accepted, 1);
        assert_eq!(
            r.rejected.iter().map(|x| x.index).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(store.snapshot()[0].start, t("2025-05-10T16:00:00Z"));
    }

    #[test]
    fn double_ingest_is_idempotent() {
        let store = HealthStore::new();
        let batch = vec![
            steps(10.0, "2025-05-10T09:00:00Z"),
            steps(20.0, "2025-05-11T09:00:00Z"),
        ];
        store.ingest(batch.clone());
        let before = store.snapshot();
        let second = store.ingest(batch);
        assert_eq!(second.accepted, 0);
        assert_eq!(second.duplicates, 2);
        assert_eq!(store.snapshot(), before);
    }

    #[test]
    fn sample_kind_parsing() {
        assert_eq!(
            "stepCount".parse::<SampleKind>().unwrap(),
            SampleKind::StepCount
        );
        assert_eq!(
            "step_count".parse::<SampleKind>().unwrap(),
            SampleKind::StepCount
        );
        assert_eq!(
            "heart_rate".parse::<SampleKind>().unwrap(),
            SampleKind::HeartRate
        );
        assert!(matches!(
            "vo2".parse::<SampleKind>(),
            Err(HealthError::UnknownSampleType(_))
        ));
    }
}
