//! End-to-end compositions: log to metrics, and metrics to profiles.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    avg_silhouette, fit_k, hierarchical_cluster, range_normalize, scan_k, ClusterError, ClusteringResult,
    KMeansConfig, KScanReport, Linkage, Matrix, ScanConfig, DEFAULT_HIER_CAP,
};
use crate::ingest::{
    clip_to_window, derive_project_window, filter_participants, EligibilityPolicy, ExclusionReport, IngestError,
    ParsedLog, ProjectWindow, WindowOverride,
};
use crate::metrics::{descriptive_stats, engagement_matrix, DescriptiveStats, EngagementMatrix, MetricError, SdConvention};
use crate::profiles::{build_report, ProfileLabel, ProfileReport};
use crate::sessions::{
    build_sessions, build_timeline, compute_gaps, detect_session_threshold, median, median_intra_gap, resolve_pad,
    GapThreshold, Session, SessionError, ThresholdMode, ThresholdSource, VolunteerTimeline,
};
use crate::stats::PValueMethod;
use crate::table::MetricsTable;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("no eligible volunteers ({} considered, {} excluded: {})", .0.considered, .0.excluded, exclusion_summary(.0))]
    NoEligible(ExclusionReport),
}

fn exclusion_summary(report: &ExclusionReport) -> String {
    if report.by_reason.is_empty() {
        return "none".to_string();
    }
    report
        .by_reason
        .iter()
        .map(|(reason, n)| format!("{reason:?}={n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub window: WindowOverride,
    pub policy: EligibilityPolicy,
    pub threshold: ThresholdMode,
    pub sd: SdConvention,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: WindowOverride::default(),
            policy: EligibilityPolicy::default(),
            threshold: ThresholdMode::Auto,
            sd: SdConvention::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerThreshold {
    pub volunteer_id: String,
    pub threshold_secs: f64,
    pub source: ThresholdSource,
    pub positive_gaps: usize,
    pub pad_secs: f64,
}

#[derive(Debug, Clone)]
pub struct MetricsRun {
    pub window: ProjectWindow,
    /// Events dropped because they fell outside an overridden window.
    pub clipped_events: usize,
    pub exclusions: ExclusionReport,
    pub thresholds: Vec<VolunteerThreshold>,
    /// Median of the per-volunteer median intra gaps.
    pub global_pad_secs: Option<f64>,
    pub sessions: Vec<Session>,
    pub timelines: Vec<VolunteerTimeline>,
    pub table: MetricsTable,
    /// Absent with fewer than two eligible volunteers.
    pub stats: Option<DescriptiveStats>,
    pub midnight_crossings: usize,
    pub padded_days: usize,
}

/// Window, eligibility, thresholds, sessions, timelines and metrics.
///
/// Padding needs a corpus-wide fallback, so per-volunteer gap statistics are
/// computed first and sessions second.
pub fn compute_metrics(log: ParsedLog, config: &MetricsConfig) -> Result<MetricsRun, PipelineError> {
    let mut volunteers = log.volunteers;
    let window = derive_project_window(&volunteers, config.policy.join_quantile, config.window)?;
    let clipped_events = clip_to_window(&mut volunteers, &window);
    let eligibility = filter_participants(volunteers, &window, &config.policy);
    if eligibility.eligible.is_empty() {
        return Err(PipelineError::NoEligible(eligibility.report));
    }
    let eligible = eligibility.eligible;
    let fixed = match config.threshold {
        ThresholdMode::Auto => None,
        ThresholdMode::Fixed(secs) => Some(GapThreshold::fixed(secs)?),
    };

    let first_pass: Vec<(GapThreshold, Option<f64>, usize)> = eligible
        .par_iter()
        .map(|v| {
            let gaps = compute_gaps(&v.events);
            let threshold = fixed.unwrap_or_else(|| detect_session_threshold(&gaps));
            let own = median_intra_gap(&gaps, threshold.threshold_secs);
            (threshold, own, gaps.len())
        })
        .collect();
    let own_pads: Vec<f64> = first_pass.iter().filter_map(|p| p.1).collect();
    let global_pad_secs = median(&own_pads);

    let second_pass = eligible
        .par_iter()
        .zip(&first_pass)
        .map(|(v, (threshold, own, _))| {
            let pad = resolve_pad(*own, global_pad_secs);
            let sessions = build_sessions(&v.volunteer_id, &v.events, threshold.threshold_secs, pad);
            let timeline = build_timeline(&v.volunteer_id, &v.events, &sessions, &window, pad)?;
            Ok((sessions, timeline, pad))
        })
        .collect::<Result<Vec<_>, SessionError>>()?;

    let thresholds = eligible
        .iter()
        .zip(&first_pass)
        .zip(&second_pass)
        .map(|((v, (t, _, n)), (_, _, pad))| VolunteerThreshold {
            volunteer_id: v.volunteer_id.clone(),
            threshold_secs: t.threshold_secs,
            source: t.source,
            positive_gaps: *n,
            pad_secs: *pad,
        })
        .collect();
    let mut sessions = Vec::new();
    let mut timelines = Vec::with_capacity(second_pass.len());
    for (s, t, _) in second_pass {
        sessions.extend(s);
        timelines.push(t);
    }

    let matrix = engagement_matrix(&timelines, config.sd)?;
    let hours: HashMap<&str, f64> = timelines
        .iter()
        .map(|t| (t.volunteer_id.as_str(), t.total_hours()))
        .collect();
    let devoted_hours = matrix.rows.iter().map(|r| hours[r.volunteer_id.as_str()]).collect();
    let stats = (matrix.len() >= 2).then(|| descriptive_stats(&matrix)).transpose()?;

    Ok(MetricsRun {
        window,
        clipped_events,
        exclusions: eligibility.report,
        thresholds,
        global_pad_secs,
        midnight_crossings: timelines.iter().map(|t| t.midnight_crossings).sum(),
        padded_days: timelines.iter().map(|t| t.padded_days).sum(),
        sessions,
        timelines,
        table: MetricsTable { matrix, devoted_hours },
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub linkage: Linkage,
    pub hier_cap: usize,
    pub seed: u64,
    pub kmeans: KMeansConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            linkage: Linkage::Ward,
            hier_cap: DEFAULT_HIER_CAP,
            seed: 0,
            kmeans: KMeansConfig::default(),
        }
    }
}

impl ClusterConfig {
    pub fn scan(&self, k_min: usize, k_max: usize) -> ScanConfig {
        ScanConfig {
            k_min,
            k_max,
            linkage: self.linkage,
            hier_cap: self.hier_cap,
            seed: self.seed,
            kmeans: self.kmeans,
        }
    }
}

fn normalized(matrix: &EngagementMatrix) -> Result<(Matrix, crate::cluster::NormalizationParams), ClusterError> {
    let raw = Matrix::from_rows(&matrix.values())?;
    raw.check_finite()?;
    range_normalize(&raw)
}

/// k scan on the range-normalized metrics.
pub fn scan_engagement(
    matrix: &EngagementMatrix,
    k_min: usize,
    k_max: usize,
    config: &ClusterConfig,
) -> Result<KScanReport, ClusterError> {
    let (norm, _) = normalized(matrix)?;
    scan_k(&norm, &config.scan(k_min, k_max))
}

/// Normalize, seed k-means from the dendrogram cut and score the fit.
pub fn cluster_engagement(
    matrix: &EngagementMatrix,
    k: usize,
    config: &ClusterConfig,
) -> Result<ClusteringResult, ClusterError> {
    let (norm, params) = normalized(matrix)?;
    if k < 2 || k > norm.rows() {
        return Err(ClusterError::KOutOfRange { k, max: norm.rows() });
    }
    let dendrogram = hierarchical_cluster(&norm, config.linkage, config.hier_cap, config.seed)?;
    let fit = fit_k(&norm, &dendrogram, k, &config.kmeans)?;
    let silhouette = avg_silhouette(&norm, &fit.assignments, k)?;
    Ok(ClusteringResult {
        k,
        centroids_raw: params.denormalize(&fit.centroids),
        centroids_normalized: fit.centroids,
        assignments: fit.assignments,
        wss: fit.wss,
        avg_silhouette: silhouette.average,
        interpretation: silhouette.interpretation,
        iterations: fit.iterations,
        converged: fit.converged,
        seed: config.seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Assignment {
    pub volunteer_id: String,
    pub cluster: usize,
    pub label: ProfileLabel,
}

#[derive(Debug, Clone)]
pub struct AnalyzeRun {
    pub clustering: ClusteringResult,
    pub report: ProfileReport,
    pub assignments: Vec<Assignment>,
}

/// Clustering, profile labels, correlations and importance for fixed `k`.
pub fn analyze(
    table: &MetricsTable,
    k: usize,
    config: &ClusterConfig,
    p_value: PValueMethod,
) -> Result<AnalyzeRun, ClusterError> {
    let clustering = cluster_engagement(&table.matrix, k, config)?;
    let report = build_report(&table.matrix, &clustering, &table.devoted_hours, p_value);
    let label_of: HashMap<usize, ProfileLabel> = report.profiles.iter().map(|p| (p.cluster, p.label)).collect();
    let assignments = table
        .matrix
        .rows
        .iter()
        .zip(&clustering.assignments)
        .map(|(row, &c)| Assignment {
            volunteer_id: row.volunteer_id.clone(),
            cluster: c,
            label: label_of[&c],
        })
        .collect();
    Ok(AnalyzeRun {
        clustering,
        report,
        assignments,
    })
}
