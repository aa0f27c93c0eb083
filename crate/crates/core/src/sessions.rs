//! Working-session reconstruction and volunteer timelines.
//!
//! Sessions come from inter-event gaps: a per-volunteer threshold splits the
//! short (same-session) gaps from the long ones. The threshold sits in the
//! valley of the smoothed log10-gap histogram when one exists; sparse or
//! unimodal gap sets get a fixed fallback.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{active_dates, ProjectWindow, TaskEvent};

/// Fewer positive gaps than this always yields the fallback threshold.
pub const MIN_GAPS_FOR_DETECTION: usize = 30;
pub const FALLBACK_THRESHOLD_SECS: f64 = 30.0 * 60.0;
pub const MIN_THRESHOLD_SECS: f64 = 5.0 * 60.0;
pub const MAX_THRESHOLD_SECS: f64 = 12.0 * 3600.0;
/// Session padding used when no intra-session gap exists anywhere.
pub const FALLBACK_PAD_SECS: f64 = 30.0;

/// Histogram bin width in log10(seconds).
const BIN_WIDTH: f64 = 0.1;
/// A later peak must reach this fraction of the global maximum to bound a valley.
const SECONDARY_PEAK_RATIO: f64 = 0.25;
const FLAT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("volunteer {0} has no sessions")]
    NoSessions(String),
    #[error("volunteer {volunteer_id}: session starting {session_date} lies after project end {window_end}")]
    AfterWindowEnd {
        volunteer_id: String,
        session_date: NaiveDate,
        window_end: NaiveDate,
    },
    #[error("fixed session threshold must be positive and finite, got {0}")]
    BadFixedThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Detected,
    Fallback,
    Fixed,
}

/// Per-volunteer gap threshold separating intra- from inter-session gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapThreshold {
    pub threshold_secs: f64,
    pub source: ThresholdSource,
}

impl GapThreshold {
    pub fn fixed(secs: f64) -> Result<Self, SessionError> {
        if !(secs.is_finite() && secs > 0.0) {
            return Err(SessionError::BadFixedThreshold(secs));
        }
        Ok(Self {
            threshold_secs: secs,
            source: ThresholdSource::Fixed,
        })
    }

    fn fallback() -> Self {
        Self {
            threshold_secs: FALLBACK_THRESHOLD_SECS,
            source: ThresholdSource::Fallback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Auto,
    Fixed(f64),
}

/// Positive gaps, in seconds, between consecutive events.
///
/// Same-second events produce zero gaps, which are left out here; they still
/// end up in the same session when sessions are built.
pub fn compute_gaps(events: &[TaskEvent]) -> Vec<i64> {
    events
        .windows(2)
        .map(|w| (w[1].timestamp - w[0].timestamp).num_seconds())
        .filter(|&g| g > 0)
        .collect()
}

/// Histogram-valley threshold detection on log10 gap lengths.
pub fn detect_session_threshold(gaps: &[i64]) -> GapThreshold {
    let positive: Vec<f64> = gaps.iter().filter(|&&g| g > 0).map(|&g| g as f64).collect();
    if positive.len() < MIN_GAPS_FOR_DETECTION {
        return GapThreshold::fallback();
    }

    let bin_of = |g: f64| (g.log10() / BIN_WIDTH).floor() as i64;
    let lo = positive.iter().map(|&g| bin_of(g)).min().unwrap_or(0);
    let hi = positive.iter().map(|&g| bin_of(g)).max().unwrap_or(0);
    let mut counts = vec![0.0f64; (hi - lo + 1) as usize];
    for &g in &positive {
        counts[(bin_of(g) - lo) as usize] += 1.0;
    }
    let smoothed = moving_average3(&counts);

    let Some(valley) = find_valley(&smoothed) else {
        return GapThreshold::fallback();
    };
    let log_secs = (lo as f64 + valley + 0.5) * BIN_WIDTH;
    GapThreshold {
        threshold_secs: 10f64
            .powf(log_secs)
            .clamp(MIN_THRESHOLD_SECS, MAX_THRESHOLD_SECS),
        source: ThresholdSource::Detected,
    }
}

fn moving_average3(counts: &[f64]) -> Vec<f64> {
    (0..counts.len())
        .map(|i| {
            let from = i.saturating_sub(1);
            let to = (i + 1).min(counts.len() - 1);
            counts[from..=to].iter().sum::<f64>() / (to - from + 1) as f64
        })
        .collect()
}

fn is_local_max(s: &[f64], i: usize) -> bool {
    let left = i == 0 || s[i] >= s[i - 1];
    let right = i + 1 == s.len() || s[i] >= s[i + 1];
    left && right
}

/// Fractional bin position of the valley floor, or `None` for unimodal data.
///
/// Scans right of the (leftmost) global maximum first and, failing that, to
/// its left. The valley is the minimum between the global maximum and the
/// farthest qualifying secondary peak; on a flat floor the midpoint of the
/// minimal run nearest the global maximum is used.
fn find_valley(s: &[f64]) -> Option<f64> {
    let peak = s
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > s[best] { i } else { best });
    let floor = SECONDARY_PEAK_RATIO * s[peak];

    let right = (peak + 1..s.len())
        .rev()
        .find(|&p| s[p] >= floor && is_local_max(s, p) && valley_min(s, peak + 1, p) < s[p]);
    if let Some(p) = right {
        return Some(flat_run_mid(s, peak + 1, p, true));
    }
    let left = (0..peak)
        .find(|&p| s[p] >= floor && is_local_max(s, p) && valley_min(s, p + 1, peak) < s[p]);
    left.map(|p| flat_run_mid(s, p + 1, peak, false))
}

fn valley_min(s: &[f64], from: usize, to: usize) -> f64 {
    s[from..to].iter().copied().fold(f64::INFINITY, f64::min)
}

fn flat_run_mid(s: &[f64], from: usize, to: usize, nearest_first: bool) -> f64 {
    let min = valley_min(s, from, to);
    let at_min = |i: usize| (s[i] - min).abs() <= FLAT_EPS;
    let mut idx: Box<dyn Iterator<Item = usize>> = if nearest_first {
        Box::new(from..to)
    } else {
        Box::new((from..to).rev())
    };
    let first = idx.find(|&i| at_min(i)).expect("range is non-empty");
    let mut last = first;
    if nearest_first {
        while last + 1 < to && at_min(last + 1) {
            last += 1;
        }
    } else {
        while last > from && at_min(last - 1) {
            last -= 1;
        }
    }
    (first + last) as f64 / 2.0
}

/// A maximal run of task executions with consecutive gaps within the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub volunteer_id: String,
    pub index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub event_count: usize,
    /// Raw span plus the volunteer's padding, in hours.
    pub duration_hours: f64,
}

impl Session {
    pub fn span_secs(&self) -> i64 {
        (self.end - self.start).num_seconds()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start.date_naive()
    }
}

/// Splits sorted events into sessions: a gap above `threshold_secs` starts a
/// new session. Each session lasts its raw span plus `pad_secs`.
pub fn build_sessions(
    volunteer_id: &str,
    events: &[TaskEvent],
    threshold_secs: f64,
    pad_secs: f64,
) -> Vec<Session> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut prev: Option<DateTime<Utc>> = None;
    for e in events {
        let joins = prev.is_some_and(|p| (e.timestamp - p).num_seconds() as f64 <= threshold_secs);
        match sessions.last_mut() {
            Some(s) if joins => {
                s.end = e.timestamp;
                s.event_count += 1;
            }
            _ => sessions.push(Session {
                volunteer_id: volunteer_id.to_string(),
                index: sessions.len(),
                start: e.timestamp,
                end: e.timestamp,
                event_count: 1,
                duration_hours: 0.0,
            }),
        }
        prev = Some(e.timestamp);
    }
    for s in &mut sessions {
        s.duration_hours = (s.span_secs() as f64 + pad_secs) / 3600.0;
    }
    sessions
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Median of the positive gaps that fall within the threshold.
pub fn median_intra_gap(gaps: &[i64], threshold_secs: f64) -> Option<f64> {
    let intra: Vec<f64> = gaps
        .iter()
        .filter(|&&g| g > 0 && g as f64 <= threshold_secs)
        .map(|&g| g as f64)
        .collect();
    median(&intra)
}

/// Padding chain: own median intra gap, else the global value, else 30 s.
pub fn resolve_pad(own: Option<f64>, global: Option<f64>) -> f64 {
    own.or(global).unwrap_or(FALLBACK_PAD_SECS)
}

/// Per-volunteer quantities the engagement metrics are computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerTimeline {
    pub volunteer_id: String,
    pub join_date: NaiveDate,
    /// Days from join date to project end, both included.
    pub window_days: i64,
    /// Distinct active dates, strictly increasing.
    pub active_days: Vec<NaiveDate>,
    /// Hours devoted on each active day, aligned with `active_days`.
    pub daily_hours: Vec<f64>,
    /// Days between consecutive active dates.
    pub day_gaps: Vec<i64>,
    /// Sessions whose events run past UTC midnight (credited to the start date).
    pub midnight_crossings: usize,
    /// Active days with no session starting on them (credited one pad).
    pub padded_days: usize,
}

impl VolunteerTimeline {
    /// First to last active day, inclusive.
    pub fn span_days(&self) -> i64 {
        match (self.active_days.first(), self.active_days.last()) {
            (Some(f), Some(l)) => (*l - *f).num_days() + 1,
            _ => 0,
        }
    }

    pub fn total_hours(&self) -> f64 {
        self.daily_hours.iter().sum()
    }
}

/// Assembles the timeline from a volunteer's events and sessions.
///
/// Active days come from raw event dates. Session hours are credited to the
/// session's start date and capped at 24 per day; an active day reached only
/// by a session that began the previous day is credited `pad_secs`.
pub fn build_timeline(
    volunteer_id: &str,
    events: &[TaskEvent],
    sessions: &[Session],
    window: &ProjectWindow,
    pad_secs: f64,
) -> Result<VolunteerTimeline, SessionError> {
    if sessions.is_empty() || events.is_empty() {
        return Err(SessionError::NoSessions(volunteer_id.to_string()));
    }
    if let Some(late) = sessions.iter().find(|s| s.start_date() > window.end) {
        return Err(SessionError::AfterWindowEnd {
            volunteer_id: volunteer_id.to_string(),
            session_date: late.start_date(),
            window_end: window.end,
        });
    }

    let active_days = active_dates(events);
    let mut per_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for s in sessions {
        *per_day.entry(s.start_date()).or_default() += s.duration_hours;
    }
    let mut padded_days = 0;
    let daily_hours = active_days
        .iter()
        .map(|day| match per_day.get(day) {
            Some(h) => h.min(24.0),
            None => {
                padded_days += 1;
                (pad_secs / 3600.0).min(24.0)
            }
        })
        .collect();
    let day_gaps = active_days
        .windows(2)
        .map(|w| (w[1] - w[0]).num_days())
        .collect();
    let join_date = active_days[0];
    Ok(VolunteerTimeline {
        volunteer_id: volunteer_id.to_string(),
        join_date,
        window_days: (window.end - join_date).num_days() + 1,
        active_days,
        daily_hours,
        day_gaps,
        midnight_crossings: sessions
            .iter()
            .filter(|s| s.end.date_naive() != s.start_date())
            .count(),
        padded_days,
    })
}
