//! Volunteer engagement profiling for human-computation projects.
//!
//! The crate turns raw task-execution logs (`project_id, task_id, user_id,
//! datetime`) into per-volunteer engagement metrics, clusters volunteers with
//! hierarchical-seeded k-means and reports labeled engagement profiles.
//!
//! Stages, in pipeline order:
//!
//! * [`ingest`]: parse and validate logs, derive the project window, apply the
//!   eligibility filters.
//! * [`sessions`]: per-volunteer gap threshold detection, working sessions and
//!   the volunteer timeline (join date, window, active days, daily devoted
//!   time, day gaps).
//! * [`metrics`]: activity ratio, daily devoted time, relative activity
//!   duration and variation in periodicity, plus corpus statistics.
//! * [`cluster`]: range normalization, Ward dendrogram, k-means, WSS,
//!   silhouette, k scans and partition agreement.
//! * [`profiles`]: profile labels, per-profile Spearman correlations and the
//!   importance table.
//! * [`synth`]: seeded synthetic logs with planted archetypes.
//! * [`pipeline`]: the end-to-end compositions used by the `engage` binary.

pub mod cli;
pub mod cluster;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod profiles;
pub mod sessions;
pub mod stats;
pub mod synth;
pub mod table;

pub use cluster::{ClusteringResult, KScanReport, Matrix};
pub use ingest::{ParseReport, ProjectWindow, TaskEvent};
pub use metrics::{EngagementMatrix, EngagementVector};
pub use profiles::{ProfileLabel, ProfileReport};
pub use sessions::{GapThreshold, Session, VolunteerTimeline};
