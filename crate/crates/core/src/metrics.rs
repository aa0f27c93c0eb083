//! The four engagement metrics and corpus-level descriptive statistics.
//!
//! * activity ratio `a = |A| / span(A)`
//! * daily devoted time `d = mean(D)` in hours
//! * relative activity duration `r = span(A) / w`
//! * variation in periodicity `v = sd(B)` in days
//!
//! where `span(A)` counts the days from first to last active day inclusive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sessions::VolunteerTimeline;
use crate::stats::{self, KsResult, KS_MIN_N};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("volunteer {0}: fewer than two active days")]
    TooFewActiveDays(String),
    #[error("volunteer {0}: no daily devoted times")]
    NoDevotedTime(String),
    #[error("volunteer {volunteer_id}: window of {window_days} days is shorter than the active span of {span_days}")]
    WindowTooShort {
        volunteer_id: String,
        window_days: i64,
        span_days: i64,
    },
    #[error("volunteer {0}: no gaps between active days")]
    NoGaps(String),
    #[error("descriptive statistics need at least 2 volunteers, got {0}")]
    TooFewRows(usize),
}

/// Standard-deviation convention for `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdConvention {
    #[default]
    Population,
    /// Divides by `|B| - 1`; a single gap yields 0.
    Sample,
}

pub const METRIC_NAMES: [&str; 4] = ["a", "d", "r", "v"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementVector {
    pub volunteer_id: String,
    pub a: f64,
    pub d: f64,
    pub r: f64,
    pub v: f64,
}

impl EngagementVector {
    pub fn values(&self) -> [f64; 4] {
        [self.a, self.d, self.r, self.v]
    }
}

pub fn activity_ratio(tl: &VolunteerTimeline) -> Result<f64, MetricError> {
    if tl.active_days.len() < 2 {
        return Err(MetricError::TooFewActiveDays(tl.volunteer_id.clone()));
    }
    Ok(tl.active_days.len() as f64 / tl.span_days() as f64)
}

pub fn daily_devoted_time(tl: &VolunteerTimeline) -> Result<f64, MetricError> {
    if tl.daily_hours.is_empty() {
        return Err(MetricError::NoDevotedTime(tl.volunteer_id.clone()));
    }
    Ok(stats::mean(&tl.daily_hours))
}

pub fn relative_activity_duration(tl: &VolunteerTimeline) -> Result<f64, MetricError> {
    let span_days = tl.span_days();
    if tl.window_days < span_days || span_days == 0 {
        return Err(MetricError::WindowTooShort {
            volunteer_id: tl.volunteer_id.clone(),
            window_days: tl.window_days,
            span_days,
        });
    }
    Ok(span_days as f64 / tl.window_days as f64)
}

pub fn variation_in_periodicity(tl: &VolunteerTimeline, sd: SdConvention) -> Result<f64, MetricError> {
    if tl.day_gaps.is_empty() {
        return Err(MetricError::NoGaps(tl.volunteer_id.clone()));
    }
    let gaps: Vec<f64> = tl.day_gaps.iter().map(|&g| g as f64).collect();
    Ok(match sd {
        SdConvention::Population => stats::population_sd(&gaps),
        SdConvention::Sample if gaps.len() < 2 => 0.0,
        SdConvention::Sample => stats::sample_sd(&gaps),
    })
}

pub fn engagement_vector(tl: &VolunteerTimeline, sd: SdConvention) -> Result<EngagementVector, MetricError> {
    Ok(EngagementVector {
        volunteer_id: tl.volunteer_id.clone(),
        a: activity_ratio(tl)?,
        d: daily_devoted_time(tl)?,
        r: relative_activity_duration(tl)?,
        v: variation_in_periodicity(tl, sd)?,
    })
}

/// Engagement rows sorted by volunteer id, columns `(a, d, r, v)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementMatrix {
    pub rows: Vec<EngagementVector>,
}

impl EngagementMatrix {
    pub fn from_rows(mut rows: Vec<EngagementVector>) -> Self {
        rows.sort_by(|x, y| x.volunteer_id.cmp(&y.volunteer_id));
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.volunteer_id.as_str()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values()[j]).collect()
    }

    pub fn values(&self) -> Vec<[f64; 4]> {
        self.rows.iter().map(EngagementVector::values).collect()
    }
}

pub fn engagement_matrix(
    timelines: &[VolunteerTimeline],
    sd: SdConvention,
) -> Result<EngagementMatrix, MetricError> {
    let rows = timelines
        .par_iter()
        .map(|tl| engagement_vector(tl, sd))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EngagementMatrix::from_rows(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    /// Normality check; absent below eight volunteers.
    pub ks: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub volunteers: usize,
    pub activity_ratio: MetricSummary,
    pub daily_devoted_time: MetricSummary,
    pub relative_activity_duration: MetricSummary,
    pub variation_in_periodicity: MetricSummary,
}

impl DescriptiveStats {
    pub fn by_index(&self, j: usize) -> &MetricSummary {
        match j {
            0 => &self.activity_ratio,
            1 => &self.daily_devoted_time,
            2 => &self.relative_activity_duration,
            _ => &self.variation_in_periodicity,
        }
    }
}

pub fn summarize(column: &[f64]) -> MetricSummary {
    MetricSummary {
        mean: stats::mean(column),
        sd: stats::sample_sd(column),
        min: column.iter().copied().fold(f64::INFINITY, f64::min),
        max: column.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median: crate::sessions::median(column).unwrap_or(f64::NAN),
        ks: (column.len() >= KS_MIN_N)
            .then(|| stats::ks_normality(column).ok())
            .flatten(),
    }
}

pub fn descriptive_stats(matrix: &EngagementMatrix) -> Result<DescriptiveStats, MetricError> {
    if matrix.len() < 2 {
        return Err(MetricError::TooFewRows(matrix.len()));
    }
    Ok(DescriptiveStats {
        volunteers: matrix.len(),
        activity_ratio: summarize(&matrix.column(0)),
        daily_devoted_time: summarize(&matrix.column(1)),
        relative_activity_duration: summarize(&matrix.column(2)),
        variation_in_periodicity: summarize(&matrix.column(3)),
    })
}
