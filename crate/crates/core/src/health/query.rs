use std::collections::BTreeSet;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{HealthError, HealthStore, SampleKind, Unit};
use crate::time::{month_start_of, next_month_start, start_of_local_day, week_start_of};

/// Weekly exercise minutes recommended by public-health guidelines.
pub const GUIDELINE_MINUTES: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AggregationLevel {
    Day,
    Week,
    Month,
}

impl FromStr for AggregationLevel {
    type Err = HealthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "day" => Ok(AggregationLevel::Day),
            "week" => Ok(AggregationLevel::Week),
            "month" => Ok(AggregationLevel::Month),
            _ => Err(HealthError::UnknownAggregationLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregationQuery {
    pub sample_type: SampleKind,
    pub reference_date: NaiveDate,
    pub aggregation_level: AggregationLevel,
    #[serde(default)]
    pub show_user: bool,
}

/// One local calendar day (or the single day of a day-level query).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Bucket {
    pub period_start: NaiveDate,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Sum for cumulative kinds (0 when empty); mean for heart rate (`None` when empty).
    pub value: Option<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateResult {
    pub sample_type: SampleKind,
    pub unit: Unit,
    pub aggregation_level: AggregationLevel,
    pub reference_date: NaiveDate,
    pub timezone: String,
    pub buckets: Vec<Bucket>,
    /// Range total (cumulative kinds) or range mean (heart rate).
    pub total: Option<f64>,
    pub description: String,
    pub show_user: bool,
}

impl AggregateResult {
    /// Compact text form handed back to the model.
    pub fn summary_text(&self) -> String {
        let per_bucket: Vec<String> = self
            .buckets
            .iter()
            .map(|b| match b.value {
                Some(v) => format!("{}: {}", b.period_start, round2(v)),
                None => format!("{}: no data", b.period_start),
            })
            .collect();
        format!("{}\n{}", self.description, per_bucket.join("\n"))
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GuidelineReport {
    pub week_start: NaiveDate,
    pub minutes: f64,
    pub meets_guideline: bool,
}

fn query_days(q: &AggregationQuery) -> Vec<NaiveDate> {
    let (first, end) = match q.aggregation_level {
        AggregationLevel::Day => (q.reference_date, q.reference_date + Duration::days(1)),
        AggregationLevel::Week => {
            let s = week_start_of(q.reference_date);
            (s, s + Duration::days(7))
        }
        AggregationLevel::Month => (
            month_start_of(q.reference_date),
            next_month_start(q.reference_date),
        ),
    };
    first.iter_days().take_while(|d| *d < end).collect()
}

impl HealthStore {
    /// Aggregates one sample kind over the day, Monday-start week or calendar month
    /// containing the reference date, bucketed by local calendar day in `tz`.
    /// A sample belongs to the bucket its start falls in.
    pub fn query(&self, q: &AggregationQuery, tz: Tz) -> AggregateResult {
        let days = query_days(q);
        let edges: Vec<DateTime<Utc>> = days
            .iter()
            .copied()
            .chain(std::iter::once(
                *days.last().expect("non-empty range") + Duration::days(1),
            ))
            .map(|d| start_of_local_day(d, tz))
            .collect();

        let mut sums = vec![0.0f64; days.len()];
        let mut counts = vec![0usize; days.len()];
        let mut sources = BTreeSet::new();
        self.with_samples(|samples| {
            for s in samples.values().filter(|s| s.kind == q.sample_type) {
                if s.start < edges[0] || s.start >= edges[days.len()] {
                    continue;
                }
                // edges are sorted; find the last edge <= start
                let idx = edges.partition_point(|e| *e <= s.start) - 1;
                sums[idx] += s.value;
                counts[idx] += 1;
                sources.insert(s.source_id.clone());
            }
        });

        let cumulative = q.sample_type.is_cumulative();
        let buckets: Vec<Bucket> = days
            .iter()
            .enumerate()
            .map(|(i, d)| Bucket {
                period_start: *d,
                start: edges[i],
                end: edges[i + 1],
                value: if cumulative {
                    Some(sums[i])
                } else if counts[i] > 0 {
                    Some(sums[i] / counts[i] as f64)
                } else {
                    None
                },
                sample_count: counts[i],
            })
            .collect();

        let n: usize = counts.iter().sum();
        let sum: f64 = sums.iter().sum();
        let total = if cumulative {
            Some(sum)
        } else if n > 0 {
            Some(sum / n as f64)
        } else {
            None
        };

        let description = describe(q, &days, tz, &sources, total, n);
        AggregateResult {
            sample_type: q.sample_type,
            unit: q.sample_type.unit(),
            aggregation_level: q.aggregation_level,
            reference_date: q.reference_date,
            timezone: tz.name().to_string(),
            buckets,
            total,
            description,
            show_user: q.show_user,
        }
    }

    /// Exercise minutes in the local week starting at `week_start`; the guideline is
    /// met at 150 minutes or more.
    pub fn weekly_guideline_minutes(&self, week_start: NaiveDate, tz: Tz) -> GuidelineReport {
        let from = start_of_local_day(week_start, tz);
        let to = start_of_local_day(week_start + Duration::days(7), tz);
        let minutes = self.with_samples(|samples| {
            samples
                .values()
                .filter(|s| s.kind == SampleKind::ExerciseTime && s.start >= from && s.start < to)
                .map(|s| s.value)
                .sum::<f64>()
        });
        GuidelineReport {
            week_start,
            minutes,
            meets_guideline: minutes >= GUIDELINE_MINUTES,
        }
    }
}

fn describe(
    q: &AggregationQuery,
    days: &[NaiveDate],
    tz: Tz,
    sources: &BTreeSet<String>,
    total: Option<f64>,
    n: usize,
) -> String {
    let kind = q.sample_type;
    let how = if kind.is_cumulative() {
        "summed"
    } else {
        "averaged"
    };
    let span = match q.aggregation_level {
        AggregationLevel::Day => format!("on {}", days[0]),
        AggregationLevel::Week => format!(
            "per day for the week {} to {}",
            days[0],
            days[days.len() - 1]
        ),
        AggregationLevel::Month => format!("per day for {}", days[0].format("%B %Y")),
    };
    let source_text = if sources.is_empty() {
        "no wearable samples were recorded".to_string()
    } else {
        let ids: Vec<&str> = sources.iter().map(String::as_str).collect();
        format!("{n} wearable sample(s) from source(s) {}", ids.join(", "))
    };
    let total_text = match total {
        Some(t) if kind.is_cumulative() => format!(" Total: {} {}.", round2(t), kind.unit()),
        Some(t) => format!(" Mean: {} {}.", round2(t), kind.unit()),
        None => String::new(),
    };
    format!(
        "{} ({}) {how} {span}, {tz} local time; {source_text}.{total_text}",
        capitalize(kind.label()),
        kind.unit(),
        tz = tz.name(),
    )
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}
