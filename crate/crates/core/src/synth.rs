//! Seeded synthetic task logs with planted engagement archetypes.
//!
//! Each archetype is described in metric space (targets for `a` and `r`, an
//! irregularity knob for `v`) plus session shape. Volunteers are built
//! constructively, so the planned active days, day gaps and sessions are
//! known exactly and can be compared against what the pipeline recovers.

use chrono::{DateTime, Days, NaiveDate, NaiveTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ingest::{format_timestamp, TaskEvent, REQUIRED_COLUMNS};

pub const MAX_ATTEMPTS: usize = 100;
/// Upper bound for any generated intra-session gap, below the smallest
/// threshold the detector can return.
pub const MAX_INTRA_GAP_SECS: f64 = 200.0;
/// Minimum pause between two sessions on the same day.
pub const MIN_SESSION_SEPARATION_SECS: i64 = 2 * 3600;
const DAY_OPEN_SECS: i64 = 6 * 3600;
const DAY_CLOSE_SECS: i64 = 22 * 3600 + 30 * 60;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec at {path}: {message}")]
    Json { path: String, message: String },
    #[error("invalid corpus spec: {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("no seed given: set `seed` in the spec or pass --seed")]
    MissingSeed,
    #[error("archetype {archetype}: volunteer {index} infeasible after {attempts} draws")]
    Infeasible {
        archetype: String,
        index: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    Uniform { low: f64, high: f64 },
    TruncNormal { mean: f64, sd: f64, low: f64, high: f64 },
}

impl Dist {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Dist::Uniform { low, high } | Dist::TruncNormal { low, high, .. } => (low, high),
        }
    }

    fn validate(&self, field: &str) -> Result<(), SynthError> {
        let (low, high) = self.bounds();
        if !(low.is_finite() && high.is_finite() && low <= high) {
            return Err(invalid(field, format!("need finite low <= high, got [{low}, {high}]")));
        }
        if let Dist::TruncNormal { mean, sd, .. } = *self {
            if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                return Err(invalid(field, "truncated normal needs finite mean and sd > 0"));
            }
        }
        Ok(())
    }

    /// Truncated normals use inverse-CDF sampling: one uniform draw per value.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            Dist::TruncNormal { mean, sd, low, high } => {
                let n = Normal::new(mean, sd).expect("validated");
                let (pl, ph) = (n.cdf(low), n.cdf(high));
                let u: f64 = rng.random();
                let x = if ph - pl > 1e-12 {
                    n.inverse_cdf(pl + u * (ph - pl))
                } else {
                    mean
                };
                x.clamp(low, high)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub name: String,
    pub count: usize,
    /// Join day as offsets from the window start, inclusive.
    pub join_day_range: [i64; 2],
    pub target_a: Dist,
    pub target_r: Dist,
    pub sessions_per_active_day: Dist,
    pub session_length_minutes: Dist,
    pub intra_gap_seconds: Dist,
    /// Spread of the day-gap weights; 0 spaces active days as evenly as possible.
    #[serde(default)]
    pub gap_irregularity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WindowSpec {
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

fn default_project() -> String {
    "synthetic".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    #[serde(default = "default_project")]
    pub project_id: String,
    pub window: WindowSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    pub archetypes: Vec<ArchetypeSpec>,
}

impl CorpusSpec {
    /// Parses and validates a JSON spec; errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| SynthError::Json {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.window.start > self.window.end {
            return Err(invalid("window", "start is after end"));
        }
        if self.archetypes.is_empty() {
            return Err(invalid("archetypes", "at least one archetype is required"));
        }
        let days = self.window.days();
        for (i, a) in self.archetypes.iter().enumerate() {
            let f = |name: &str| format!("archetypes[{i}].{name}");
            if a.name.trim().is_empty() {
                return Err(invalid(f("name"), "must not be empty"));
            }
            if a.count == 0 {
                return Err(invalid(f("count"), "must be at least 1"));
            }
            let [lo, hi] = a.join_day_range;
            if lo < 0 || lo > hi || hi >= days {
                return Err(invalid(
                    f("join_day_range"),
                    format!("need 0 <= low <= high < {days}, got [{lo}, {hi}]"),
                ));
            }
            for (name, d) in [("target_a", &a.target_a), ("target_r", &a.target_r)] {
                d.validate(&f(name))?;
                let (l, h) = d.bounds();
                if l <= 0.0 || h > 1.0 {
                    return Err(invalid(f(name), "bounds must lie in (0, 1]"));
                }
            }
            a.sessions_per_active_day.validate(&f("sessions_per_active_day"))?;
            if a.sessions_per_active_day.bounds().0 < 0.5 {
                return Err(invalid(f("sessions_per_active_day"), "low must be at least 0.5"));
            }
            a.session_length_minutes.validate(&f("session_length_minutes"))?;
            if a.session_length_minutes.bounds().0 < 0.0 {
                return Err(invalid(f("session_length_minutes"), "must be non-negative"));
            }
            a.intra_gap_seconds.validate(&f("intra_gap_seconds"))?;
            let (l, h) = a.intra_gap_seconds.bounds();
            if l < 1.0 || h > MAX_INTRA_GAP_SECS {
                return Err(invalid(
                    f("intra_gap_seconds"),
                    format!("bounds must lie in [1, {MAX_INTRA_GAP_SECS}]"),
                ));
            }
            if !(a.gap_irregularity.is_finite() && a.gap_irregularity >= 0.0) {
                return Err(invalid(f("gap_irregularity"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn volunteer_count(&self) -> usize {
        self.archetypes.iter().map(|a| a.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedSession {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub event_count: usize,
}

/// What the generator intended for one volunteer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolunteerPlan {
    pub join_date: NaiveDate,
    /// Days from join date to window end, inclusive.
    pub window_days: i64,
    pub active_days: Vec<NaiveDate>,
    pub day_gaps: Vec<i64>,
    pub sessions: Vec<PlannedSession>,
    /// Raw session span seconds summed per active day.
    pub daily_span_secs: Vec<i64>,
    pub sessions_per_day: Vec<usize>,
    pub intra_gaps: Vec<i64>,
    pub inter_gaps: Vec<i64>,
    pub draws: usize,
}

impl VolunteerPlan {
    pub fn span_days(&self) -> i64 {
        self.day_gaps.iter().sum::<i64>() + 1
    }

    pub fn activity_ratio(&self) -> f64 {
        self.active_days.len() as f64 / self.span_days() as f64
    }

    pub fn relative_activity_duration(&self) -> f64 {
        self.span_days() as f64 / self.window_days as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedVolunteer {
    pub volunteer_id: String,
    pub archetype: String,
    pub events: Vec<TaskEvent>,
    pub plan: VolunteerPlan,
}

/// Splits `extra` units over `weights` by largest remainder; ties go to the
/// lower index.
fn apportion(extra: i64, weights: &[f64]) -> Vec<i64> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| extra as f64 * w / total).collect();
    let mut out: Vec<i64> = exact.iter().map(|x| x.floor() as i64).collect();
    let left = extra - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (ri, rj) = (exact[i] - exact[i].floor(), exact[j] - exact[j].floor());
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(left.max(0) as usize) {
        out[i] += 1;
    }
    out
}

struct Draft {
    join: NaiveDate,
    window_days: i64,
    day_gaps: Vec<i64>,
}

fn draft_days<R: Rng>(spec: &ArchetypeSpec, window: &WindowSpec, rng: &mut R) -> Option<Draft> {
    let [lo, hi] = spec.join_day_range;
    let offset = rng.random_range(lo..=hi);
    let join = window.start + Days::new(offset as u64);
    let window_days = (window.end - join).num_days() + 1;
    let span = (spec.target_r.sample(rng) * window_days as f64).round() as i64;
    if span < 2 || span > window_days {
        return None;
    }
    let active = (spec.target_a.sample(rng) * span as f64).round() as i64;
    if active < 2 || active > span {
        return None;
    }
    let weights: Vec<f64> = (0..active - 1)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (spec.gap_irregularity * z).exp()
        })
        .collect();
    let day_gaps = apportion(span - active, &weights).into_iter().map(|g| g + 1).collect();
    Some(Draft {
        join,
        window_days,
        day_gaps,
    })
}

/// One day's sessions as (start offset from midnight, intra gaps).
fn draft_day<R: Rng>(spec: &ArchetypeSpec, rng: &mut R) -> Option<Vec<(i64, Vec<i64>)>> {
    let count = spec.sessions_per_active_day.sample(rng).round().max(1.0) as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let length = spec.session_length_minutes.sample(rng) * 60.0;
        let mut gaps = Vec::new();
        let mut t = 0i64;
        loop {
            let g = spec.intra_gap_seconds.sample(rng).round().clamp(1.0, MAX_INTRA_GAP_SECS) as i64;
            if (t + g) as f64 > length {
                break;
            }
            t += g;
            gaps.push(g);
        }
        shapes.push((t, gaps));
    }
    let busy: i64 = shapes.iter().map(|(span, _)| span).sum::<i64>()
        + MIN_SESSION_SEPARATION_SECS * (count as i64 - 1);
    let slack = DAY_CLOSE_SECS - DAY_OPEN_SECS - busy;
    if slack < 0 {
        return None;
    }
    let mut offsets: Vec<i64> = (0..count).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    let mut before = 0;
    Some(
        shapes
            .into_iter()
            .zip(offsets)
            .enumerate()
            .map(|(i, ((span, gaps), u))| {
                let start = DAY_OPEN_SECS + u + before + MIN_SESSION_SEPARATION_SECS * i as i64;
                before += span;
                (start, gaps)
            })
            .collect(),
    )
}

fn try_generate<R: Rng>(
    spec: &ArchetypeSpec,
    window: &WindowSpec,
    project_id: &str,
    volunteer_id: &str,
    rng: &mut R,
) -> Option<(Vec<TaskEvent>, VolunteerPlan)> {
    let draft = draft_days(spec, window, rng)?;
    let mut active_days = vec![draft.join];
    for g in &draft.day_gaps {
        active_days.push(*active_days.last().unwrap() + Days::new(*g as u64));
    }

    let mut events = Vec::new();
    let mut sessions = Vec::new();
    let mut daily_span_secs = Vec::with_capacity(active_days.len());
    let mut sessions_per_day = Vec::with_capacity(active_days.len());
    let mut intra_gaps = Vec::new();
    for day in &active_days {
        let midnight = day.and_time(NaiveTime::MIN).and_utc();
        let plan = draft_day(spec, rng)?;
        sessions_per_day.push(plan.len());
        let mut day_span = 0;
        for (start, gaps) in plan {
            let mut t = midnight + chrono::Duration::seconds(start);
            let first = t;
            let push = |ts: DateTime<Utc>, events: &mut Vec<TaskEvent>| {
                events.push(TaskEvent {
                    project_id: project_id.to_string(),
                    task_id: format!("{volunteer_id}-t{}", events.len()),
                    volunteer_id: volunteer_id.to_string(),
                    timestamp: ts,
                })
            };
            push(t, &mut events);
            for g in &gaps {
                t += chrono::Duration::seconds(*g);
                push(t, &mut events);
            }
            day_span += (t - first).num_seconds();
            intra_gaps.extend_from_slice(&gaps);
            sessions.push(PlannedSession {
                start: first,
                end: t,
                event_count: gaps.len() + 1,
            });
        }
        daily_span_secs.push(day_span);
    }
    let inter_gaps = sessions
        .windows(2)
        .map(|w: &[PlannedSession]| (w[1].start - w[0].end).num_seconds())
        .collect();
    Some((
        events,
        VolunteerPlan {
            join_date: draft.join,
            window_days: draft.window_days,
            active_days,
            day_gaps: draft.day_gaps,
            sessions,
            daily_span_secs,
            sessions_per_day,
            intra_gaps,
            inter_gaps,
            draws: 0,
        },
    ))
}

/// Builds one volunteer, redrawing infeasible parameter combinations.
pub fn generate_volunteer<R: Rng>(
    spec: &ArchetypeSpec,
    window: &WindowSpec,
    project_id: &str,
    volunteer_id: &str,
    index: usize,
    rng: &mut R,
) -> Result<GeneratedVolunteer, SynthError> {
    for attempt in 1..=MAX_ATTEMPTS {
        if let Some((events, mut plan)) = try_generate(spec, window, project_id, volunteer_id, rng) {
            plan.draws = attempt;
            return Ok(GeneratedVolunteer {
                volunteer_id: volunteer_id.to_string(),
                archetype: spec.name.clone(),
                events,
                plan,
            });
        }
    }
    Err(SynthError::Infeasible {
        archetype: spec.name.clone(),
        index,
        attempts: MAX_ATTEMPTS,
    })
}

/// Random stream for volunteer `index`; independent of generation order.
pub fn volunteer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub seed: u64,
    pub project_id: String,
    pub window: WindowSpec,
    pub volunteers: Vec<GeneratedVolunteer>,
    /// All events, shuffled by the seed.
    pub events: Vec<TaskEvent>,
}

impl Corpus {
    /// `(volunteer_id, archetype)` in volunteer order.
    pub fn truth(&self) -> Vec<(String, String)> {
        self.volunteers
            .iter()
            .map(|v| (v.volunteer_id.clone(), v.archetype.clone()))
            .collect()
    }

    pub fn write_log<W: std::io::Write>(&self, out: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REQUIRED_COLUMNS)?;
        for e in &self.events {
            w.write_record([
                e.project_id.as_str(),
                e.task_id.as_str(),
                e.volunteer_id.as_str(),
                &format_timestamp(&e.timestamp),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_truth<W: std::io::Write>(&self, out: W) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["volunteer_id", "archetype"])?;
        for (id, name) in self.truth() {
            w.write_record([id, name])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Generates every archetype's volunteers. `seed` overrides the spec's seed;
/// one of the two is required.
pub fn generate_corpus(spec: &CorpusSpec, seed: Option<u64>) -> Result<Corpus, SynthError> {
    spec.validate()?;
    let seed = seed.or(spec.seed).ok_or(SynthError::MissingSeed)?;
    let jobs: Vec<(usize, &ArchetypeSpec)> = spec
        .archetypes
        .iter()
        .flat_map(|a| std::iter::repeat_n(a, a.count))
        .enumerate()
        .collect();
    let width = jobs.len().to_string().len().max(4);
    let volunteers = jobs
        .par_iter()
        .map(|&(i, a)| {
            let id = format!("v{i:0width$}");
            generate_volunteer(a, &spec.window, &spec.project_id, &id, i, &mut volunteer_rng(seed, i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut events: Vec<TaskEvent> = volunteers.iter().flat_map(|v| v.events.iter().cloned()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed);
    shuffle.set_stream(u64::MAX);
    events.shuffle(&mut shuffle);
    Ok(Corpus {
        seed,
        project_id: spec.project_id.clone(),
        window: spec.window,
        volunteers,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_log, ProjectWindow};
    use crate::metrics::{engagement_vector, SdConvention};
    use crate::sessions::{build_sessions, build_timeline, compute_gaps};
    use crate::stats::population_sd;
    use proptest::prelude::*;

    fn uniform(low: f64, high: f64) -> Dist {
        Dist::Uniform { low, high }
    }

    fn archetype(name: &str, count: usize, a: (f64, f64), r: (f64, f64), irregularity: f64) -> ArchetypeSpec {
        ArchetypeSpec {
            name: name.into(),
            count,
            join_day_range: [0, 30],
            target_a: uniform(a.0, a.1),
            target_r: uniform(r.0, r.1),
            sessions_per_active_day: uniform(1.0, 2.4),
            session_length_minutes: uniform(5.0, 15.0),
            intra_gap_seconds: uniform(40.0, 150.0),
            gap_irregularity: irregularity,
        }
    }

    fn window() -> WindowSpec {
        WindowSpec {
            start: "2011-01-01".parse().unwrap(),
            end: "2011-06-30".parse().unwrap(),
        }
    }

    fn spec(archetypes: Vec<ArchetypeSpec>) -> CorpusSpec {
        CorpusSpec {
            project_id: "p".into(),
            window: window(),
            seed: Some(11),
            archetypes,
        }
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(5, &[1.0, 1.0, 1.0]), vec![2, 2, 1]);
        assert_eq!(apportion(0, &[3.0, 1.0]), vec![0, 0]);
        assert_eq!(apportion(7, &[1.0, 6.0]), vec![1, 6]);
    }

    #[test]
    fn full_activity_has_no_gap_variation() {
        let mut a = archetype("full", 1, (1.0, 1.0), (1.0, 1.0), 0.0);
        a.join_day_range = [0, 0];
        let v = generate_volunteer(&a, &window(), "p", "x", 0, &mut volunteer_rng(1, 0)).unwrap();
        assert_eq!(v.plan.active_days.len() as i64, window().days());
        assert!(v.plan.day_gaps.iter().all(|&g| g == 1));
        let gaps: Vec<f64> = v.plan.day_gaps.iter().map(|&g| g as f64).collect();
        assert_eq!(population_sd(&gaps), 0.0);
    }

    #[test]
    fn intra_gaps_stay_below_inter_gaps() {
        let a = archetype("x", 1, (0.3, 0.9), (0.2, 0.9), 0.7);
        for i in 0..40 {
            let v = generate_volunteer(&a, &window(), "p", "x", i, &mut volunteer_rng(3, i)).unwrap();
            let max_intra = v.plan.intra_gaps.iter().max().copied().unwrap_or(0);
            let min_inter = v.plan.inter_gaps.iter().min().copied().unwrap();
            assert!(max_intra as f64 <= MAX_INTRA_GAP_SECS);
            assert!(min_inter >= MIN_SESSION_SEPARATION_SECS);
            // Event gaps are exactly the planned intra and inter gaps.
            let mut got = compute_gaps(&v.events);
            let mut want: Vec<i64> = v.plan.intra_gaps.iter().chain(&v.plan.inter_gaps).copied().collect();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn planned_metrics_are_recovered() {
        let a = archetype("x", 1, (0.2, 0.9), (0.1, 0.9), 1.0);
        let w = ProjectWindow::new(window().start, window().end, 0.75).unwrap();
        for i in 0..30 {
            let v = generate_volunteer(&a, &window(), "p", "x", i, &mut volunteer_rng(5, i)).unwrap();
            let sessions = build_sessions("x", &v.events, 1800.0, 30.0);
            assert_eq!(sessions.len(), v.plan.sessions.len());
            let tl = build_timeline("x", &v.events, &sessions, &w, 30.0).unwrap();
            let m = engagement_vector(&tl, SdConvention::Population).unwrap();
            assert_eq!(tl.active_days, v.plan.active_days);
            assert_eq!(tl.day_gaps, v.plan.day_gaps);
            assert_eq!(m.a, v.plan.activity_ratio());
            assert_eq!(m.r, v.plan.relative_activity_duration());
            for (k, hours) in tl.daily_hours.iter().enumerate() {
                let raw = v.plan.daily_span_secs[k] as f64 / 3600.0;
                let pad = v.plan.sessions_per_day[k] as f64 * 30.0 / 3600.0;
                assert!((hours - raw - pad).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn infeasible_archetype_errors() {
        // A 2-day window cannot realize r = 0.1.
        let mut a = archetype("tiny", 1, (0.5, 1.0), (0.1, 0.1), 0.0);
        a.join_day_range = [0, 0];
        let w = WindowSpec {
            start: "2011-01-01".parse().unwrap(),
            end: "2011-01-02".parse().unwrap(),
        };
        let err = generate_volunteer(&a, &w, "p", "x", 0, &mut volunteer_rng(0, 0)).unwrap_err();
        assert!(matches!(err, SynthError::Infeasible { attempts: MAX_ATTEMPTS, .. }));
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(vec![]);
        assert!(matches!(s.validate(), Err(SynthError::Invalid { ref field, .. }) if field == "archetypes"));
        s.archetypes.push(archetype("x", 0, (0.5, 1.0), (0.5, 1.0), 0.0));
        assert!(
            matches!(s.validate(), Err(SynthError::Invalid { ref field, .. }) if field == "archetypes[0].count")
        );
        s.archetypes[0].count = 1;
        s.archetypes[0].target_a = uniform(0.0, 0.5);
        assert!(s.validate().is_err());
        s.archetypes[0].target_a = uniform(0.1, 0.5);
        s.archetypes[0].intra_gap_seconds = uniform(10.0, 600.0);
        assert!(s.validate().is_err());
        s.archetypes[0].intra_gap_seconds = uniform(10.0, 60.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn json_errors_name_the_path() {
        let text = r#"{"window": {"start": "2011-01-01", "end": "2011-02-01"}, "seed": 1,
            "archetypes": [{"name": "x", "count": -3}]}"#;
        match CorpusSpec::from_json(text) {
            Err(SynthError::Json { path, .. }) => assert_eq!(path, "archetypes[0].count"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_seed_is_an_error() {
        let mut s = spec(vec![archetype("x", 2, (0.5, 1.0), (0.3, 0.6), 0.0)]);
        s.seed = None;
        assert!(matches!(generate_corpus(&s, None), Err(SynthError::MissingSeed)));
        assert_eq!(generate_corpus(&s, Some(4)).unwrap().seed, 4);
    }

    #[test]
    fn corpus_is_deterministic_and_parses_back() {
        let s = spec(vec![
            archetype("a", 15, (0.6, 0.9), (0.1, 0.3), 0.2),
            archetype("b", 10, (0.1, 0.3), (0.6, 0.9), 1.0),
        ]);
        let bytes = |c: &Corpus| {
            let mut out = Vec::new();
            c.write_log(&mut out).unwrap();
            out
        };
        let c1 = generate_corpus(&s, None).unwrap();
        let c2 = generate_corpus(&s, None).unwrap();
        assert_eq!(bytes(&c1), bytes(&c2));
        assert_ne!(bytes(&c1), bytes(&generate_corpus(&s, Some(12)).unwrap()));

        let parsed = parse_log(bytes(&c1).as_slice()).unwrap();
        assert_eq!(parsed.report.rejected, 0);
        assert_eq!(parsed.event_count(), c1.events.len());
        let mut want: Vec<(String, i64)> =
            c1.events.iter().map(|e| (e.volunteer_id.clone(), e.timestamp.timestamp())).collect();
        let mut got: Vec<(String, i64)> =
            parsed.events().map(|e| (e.volunteer_id.clone(), e.timestamp.timestamp())).collect();
        want.sort();
        got.sort();
        assert_eq!(got, want);
        assert_eq!(c1.truth().len(), 25);
        assert_eq!(c1.truth()[20].1, "b");
    }

    #[test]
    fn parallel_generation_matches_serial() {
        let s = spec(vec![archetype("a", 12, (0.3, 0.9), (0.2, 0.6), 0.5)]);
        let par = generate_corpus(&s, None).unwrap();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_corpus(&s, None).unwrap());
        assert_eq!(par.events, serial.events);
    }

    proptest! {
        #[test]
        fn truncated_normal_stays_in_bounds(mean in -5.0f64..5.0, sd in 0.01f64..3.0, seed in 0u64..1000) {
            let d = Dist::TruncNormal { mean, sd, low: 0.2, high: 0.7 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let x = d.sample(&mut rng);
                prop_assert!((0.2..=0.7).contains(&x));
            }
        }

        #[test]
        fn plan_hits_the_targets(a in 0.05f64..1.0, r in 0.05f64..1.0, g in 0.0f64..2.0, seed in 0u64..500) {
            let spec = archetype("x", 1, (a, a), (r, r), g);
            if let Ok(v) = generate_volunteer(&spec, &window(), "p", "x", 0, &mut volunteer_rng(seed, 0)) {
                let p = &v.plan;
                let span = (r * p.window_days as f64).round() as i64;
                prop_assert_eq!(p.span_days(), span);
                prop_assert_eq!(p.active_days.len() as i64, (a * span as f64).round() as i64);
                prop_assert!(p.day_gaps.iter().all(|&d| d >= 1));
                prop_assert!(*p.active_days.last().unwrap() <= window().end);
            }
        }
    }
}
