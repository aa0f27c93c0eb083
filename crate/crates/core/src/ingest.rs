//! Task-execution log ingestion: parsing, project windows and eligibility.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;

use chrono::{DateTime, Days, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column names every log must carry, in any order.
pub const REQUIRED_COLUMNS: [&str; 4] = ["project_id", "task_id", "user_id", "datetime"];

/// Fraction of rejected rows above which a log is considered unusable.
const MAX_REJECTED_FRACTION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("log has no header line")]
    MissingHeader,
    #[error("log header is missing required column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("{rejected} of {total} rows rejected (more than half); refusing to continue")]
    TooManyRejected { rejected: usize, total: usize },
    #[error("no events to derive a project window from")]
    NoEvents,
    #[error("invalid project window: start {start} is after end {end}")]
    InvertedWindow { start: NaiveDate, end: NaiveDate },
    #[error("join quantile must lie in (0, 1], got {0}")]
    BadJoinQuantile(f64),
    #[error("minimum active days must be at least 2, got {0}")]
    BadMinActiveDays(usize),
    #[error("failed to read log: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to read log: {0}")]
    Csv(#[from] csv::Error),
}

/// One task execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskEvent {
    pub project_id: String,
    pub task_id: String,
    pub volunteer_id: String,
    pub timestamp: DateTime<Utc>,
}

impl TaskEvent {
    /// UTC calendar date of the execution.
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// Events of a single volunteer, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct VolunteerEvents {
    pub volunteer_id: String,
    pub events: Vec<TaskEvent>,
}

impl VolunteerEvents {
    pub fn first_date(&self) -> Option<NaiveDate> {
        self.events.first().map(TaskEvent::date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.events.last().map(TaskEvent::date)
    }

    /// Number of distinct UTC dates with at least one event.
    pub fn active_day_count(&self) -> usize {
        let mut count = 0;
        let mut prev = None;
        for date in self.events.iter().map(TaskEvent::date) {
            if prev != Some(date) {
                count += 1;
                prev = Some(date);
            }
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadTimestamp,
    EmptyField,
    MalformedRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: RejectReason,
}

/// Row accounting for one parsed log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub delimiter: String,
    pub rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub duplicates_dropped: usize,
    pub reasons: BTreeMap<RejectReason, usize>,
    pub rejected_rows: Vec<RejectedRow>,
    pub volunteers: usize,
}

impl ParseReport {
    fn reject(&mut self, line: u64, reason: RejectReason) {
        log::warn!("line {line}: row rejected ({reason:?})");
        self.rejected += 1;
        *self.reasons.entry(reason).or_default() += 1;
        self.rejected_rows.push(RejectedRow { line, reason });
    }
}

/// Parsed log, grouped by volunteer (ascending id) with events sorted by time.
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub volunteers: Vec<VolunteerEvents>,
    pub report: ParseReport,
}

impl ParsedLog {
    pub fn events(&self) -> impl Iterator<Item = &TaskEvent> {
        self.volunteers.iter().flat_map(|v| v.events.iter())
    }

    pub fn event_count(&self) -> usize {
        self.volunteers.iter().map(|v| v.events.len()).sum()
    }
}

/// Parses an ISO-8601 / RFC 3339 instant or a `YYYY-MM-DD HH:MM:SS` string
/// (taken as UTC). Sub-second precision is truncated.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    let parsed = DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
                .map(|naive| naive.and_utc())
        })?;
    parsed.with_nanosecond(0)
}

/// Canonical timestamp rendering used for every log this crate writes.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn detect_delimiter(text: &str) -> Option<u8> {
    let header = text
        .lines()
        .map(str::trim)
        .find(|line| !line.is_empty() && !line.starts_with('#'))?;
    Some(if header.contains('\t') { b'\t' } else { b',' })
}

/// Parses a delimited task-execution log.
///
/// The delimiter (comma or tab) is detected from the header line; lines
/// starting with `#` are metadata and ignored. Rows with an empty field, an
/// unparseable datetime or the wrong number of columns are rejected and
/// counted; exact duplicate rows are dropped and counted separately.
pub fn parse_log<R: Read>(mut reader: R) -> Result<ParsedLog, IngestError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let delimiter = detect_delimiter(&text).ok_or(IngestError::MissingHeader)?;

    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = csv.headers()?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| position(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::MissingColumns(missing));
    }
    let cols: Vec<usize> = REQUIRED_COLUMNS
        .iter()
        .map(|c| position(c).expect("checked above"))
        .collect();

    let mut report = ParseReport {
        delimiter: if delimiter == b'\t' { "tab" } else { "comma" }.to_string(),
        ..ParseReport::default()
    };
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut groups: BTreeMap<String, Vec<TaskEvent>> = BTreeMap::new();

    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        report.rows += 1;
        if record.len() != headers.len() {
            report.reject(line, RejectReason::MalformedRow);
            continue;
        }
        let fields: Vec<&str> = cols.iter().map(|&i| &record[i]).collect();
        if fields.iter().any(|f| f.is_empty()) {
            report.reject(line, RejectReason::EmptyField);
            continue;
        }
        let Some(timestamp) = parse_timestamp(fields[3]) else {
            report.reject(line, RejectReason::BadTimestamp);
            continue;
        };
        if !seen.insert(record.iter().map(str::to_string).collect()) {
            report.rows -= 1;
            report.duplicates_dropped += 1;
            continue;
        }
        report.accepted += 1;
        groups
            .entry(fields[2].to_string())
            .or_default()
            .push(TaskEvent {
                project_id: fields[0].to_string(),
                task_id: fields[1].to_string(),
                volunteer_id: fields[2].to_string(),
                timestamp,
            });
    }

    if report.rows > 0 && report.rejected as f64 > MAX_REJECTED_FRACTION * report.rows as f64 {
        return Err(IngestError::TooManyRejected {
            rejected: report.rejected,
            total: report.rows,
        });
    }

    let volunteers: Vec<VolunteerEvents> = groups
        .into_iter()
        .map(|(volunteer_id, mut events)| {
            events.sort_by_key(|e| e.timestamp);
            VolunteerEvents {
                volunteer_id,
                events,
            }
        })
        .collect();
    report.volunteers = volunteers.len();
    Ok(ParsedLog { volunteers, report })
}

/// The project lifetime, and the last join date admitted for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub eligibility_cutoff: NaiveDate,
}

impl ProjectWindow {
    /// Window with `eligibility_cutoff = start + floor(q * (end - start))` days.
    pub fn new(start: NaiveDate, end: NaiveDate, join_quantile: f64) -> Result<Self, IngestError> {
        if start > end {
            return Err(IngestError::InvertedWindow { start, end });
        }
        if !(join_quantile > 0.0 && join_quantile <= 1.0) {
            return Err(IngestError::BadJoinQuantile(join_quantile));
        }
        let length = (end - start).num_days() as u64;
        let offset = (join_quantile * length as f64).floor() as u64;
        Ok(Self {
            start,
            end,
            eligibility_cutoff: start + Days::new(offset.min(length)),
        })
    }

    /// Number of calendar days covered, both endpoints included.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }
}

/// Explicit project window bounds that replace the observed event span.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOverride {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

/// Window spanning the observed events, unless overridden.
pub fn derive_project_window(
    volunteers: &[VolunteerEvents],
    join_quantile: f64,
    overrides: WindowOverride,
) -> Result<ProjectWindow, IngestError> {
    let first = volunteers.iter().filter_map(VolunteerEvents::first_date).min();
    let last = volunteers.iter().filter_map(VolunteerEvents::last_date).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(IngestError::NoEvents);
    };
    ProjectWindow::new(
        overrides.start.unwrap_or(first),
        overrides.end.unwrap_or(last),
        join_quantile,
    )
}

/// Drops events dated outside the window; returns the number removed.
///
/// Only matters when the window was overridden to a narrower span than the
/// log covers. Volunteers left without events disappear.
pub fn clip_to_window(volunteers: &mut Vec<VolunteerEvents>, window: &ProjectWindow) -> usize {
    let mut removed = 0;
    for v in volunteers.iter_mut() {
        let before = v.events.len();
        v.events.retain(|e| window.contains(e.date()));
        removed += before - v.events.len();
    }
    volunteers.retain(|v| !v.events.is_empty());
    removed
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EligibilityPolicy {
    pub min_active_days: usize,
    pub join_quantile: f64,
}

impl Default for EligibilityPolicy {
    fn default() -> Self {
        Self {
            min_active_days: 2,
            join_quantile: 0.75,
        }
    }
}

impl EligibilityPolicy {
    pub fn new(min_active_days: usize, join_quantile: f64) -> Result<Self, IngestError> {
        if min_active_days < 2 {
            return Err(IngestError::BadMinActiveDays(min_active_days));
        }
        if !(join_quantile > 0.0 && join_quantile <= 1.0) {
            return Err(IngestError::BadJoinQuantile(join_quantile));
        }
        Ok(Self {
            min_active_days,
            join_quantile,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MinActiveDays,
    LateJoin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub volunteer_id: String,
    pub active_days: usize,
    pub first_date: NaiveDate,
    pub reasons: Vec<ExclusionReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub considered: usize,
    pub retained: usize,
    pub excluded: usize,
    pub by_reason: BTreeMap<ExclusionReason, usize>,
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone)]
pub struct Eligibility {
    pub eligible: Vec<VolunteerEvents>,
    pub report: ExclusionReport,
}

/// Keeps volunteers active on at least `min_active_days` distinct dates whose
/// first event falls on or before the window's eligibility cutoff.
pub fn filter_participants(
    volunteers: Vec<VolunteerEvents>,
    window: &ProjectWindow,
    policy: &EligibilityPolicy,
) -> Eligibility {
    let mut report = ExclusionReport {
        considered: volunteers.len(),
        ..ExclusionReport::default()
    };
    let mut eligible = Vec::with_capacity(volunteers.len());
    for v in volunteers {
        let Some(first_date) = v.first_date() else {
            continue;
        };
        let active_days = v.active_day_count();
        let mut reasons = Vec::new();
        if active_days < policy.min_active_days {
            reasons.push(ExclusionReason::MinActiveDays);
        }
        if first_date > window.eligibility_cutoff {
            reasons.push(ExclusionReason::LateJoin);
        }
        if reasons.is_empty() {
            eligible.push(v);
        } else {
            for r in &reasons {
                *report.by_reason.entry(*r).or_default() += 1;
            }
            report.exclusions.push(Exclusion {
                volunteer_id: v.volunteer_id,
                active_days,
                first_date,
                reasons,
            });
        }
    }
    report.retained = eligible.len();
    report.excluded = report.exclusions.len();
    Eligibility { eligible, report }
}

/// Distinct UTC dates of a sorted event sequence.
pub fn active_dates(events: &[TaskEvent]) -> Vec<NaiveDate> {
    events
        .iter()
        .map(TaskEvent::date)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
