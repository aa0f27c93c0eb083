//! The `engage` command-line frontend.
//!
//! Every command writes plain files into `--out-dir`. Each file carries the
//! full run configuration and seed, so reruns can be diffed byte for byte.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::cluster::{ClusterError, KMeansConfig, KScanReport, Linkage, DEFAULT_HIER_CAP};
use crate::ingest::{format_timestamp, parse_log, EligibilityPolicy, IngestError, ParsedLog, WindowOverride};
use crate::metrics::{MetricError, SdConvention};
use crate::pipeline::{analyze, compute_metrics, scan_engagement, ClusterConfig, MetricsConfig, PipelineError};
use crate::sessions::{SessionError, ThresholdMode};
use crate::stats::PValueMethod;
use crate::synth::{generate_corpus, CorpusSpec, SynthError};
use crate::table::{read_metrics_table, write_table, MetricsTable, TableError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvertedWindow { .. } | IngestError::BadJoinQuantile(_) | IngestError::BadMinActiveDays(_) => {
                Self::Usage(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::BadFixedThreshold(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Invariant(_) => Self::Invariant(e.to_string()),
            ClusterError::KOutOfRange { .. } | ClusterError::InvalidRange { .. } => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Session(e) => e.into(),
            PipelineError::Metric(e) => e.into(),
            PipelineError::Cluster(e) => e.into(),
            PipelineError::NoEligible(_) => Self::Data(e.to_string()),
        }
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Json { .. } | SynthError::Invalid { .. } | SynthError::MissingSeed => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "engage", version, about = "Volunteer engagement metrics and profiles from task logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a task log and report accepted and rejected rows.
    Validate {
        log: PathBuf,
    },
    /// Sessions, timelines and the four engagement metrics per volunteer.
    Metrics(MetricsArgs),
    /// WSS and average silhouette over a range of k.
    ScanK(ScanArgs),
    /// Cluster with one k and report labeled profiles.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic log and its ground truth from a corpus spec.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub log: PathBuf,
    /// Project start date (YYYY-MM-DD); defaults to the first event date.
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Project end date (YYYY-MM-DD); defaults to the last event date.
    #[arg(long)]
    pub end: Option<NaiveDate>,
    #[arg(long, default_value_t = 0.75)]
    pub join_quantile: f64,
    #[arg(long, default_value_t = 2)]
    pub min_active_days: usize,
    /// `auto`, or `fixed:<secs>` / `fixed:<N>m` / `fixed:<N>h`.
    #[arg(long, default_value = "auto", value_parser = parse_threshold)]
    pub threshold: ThresholdMode,
    /// Standard deviation convention for v: population or sample.
    #[arg(long, default_value = "population", value_parser = parse_snake::<SdConvention>)]
    pub sd: SdConvention,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, default_value_t = DEFAULT_HIER_CAP)]
    pub hier_cap: usize,
    /// ward, average, complete or single.
    #[arg(long, default_value = "ward", value_parser = parse_snake::<Linkage>)]
    pub linkage: Linkage,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub metrics: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Recorded in outputs and used for dendrogram subsampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub cluster: ClusterArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub metrics: PathBuf,
    #[arg(long, conflicts_with_all = ["k_min", "k_max"])]
    pub k: Option<usize>,
    /// With --k-max: scan the range and analyze the suggested k.
    #[arg(long, requires = "k_max")]
    pub k_min: Option<usize>,
    #[arg(long, requires = "k_min")]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Exact permutation p-values for profiles with at most 11 members.
    #[arg(long)]
    pub exact_p: bool,
    #[command(flatten)]
    pub cluster: ClusterArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub spec: PathBuf,
    /// Overrides the spec's seed; one of the two is required.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Parses `auto`, `fixed:90`, `fixed:90s`, `fixed:30m` or `fixed:2h`.
pub fn parse_threshold(raw: &str) -> Result<ThresholdMode, String> {
    if raw == "auto" {
        return Ok(ThresholdMode::Auto);
    }
    let body = raw
        .strip_prefix("fixed:")
        .ok_or_else(|| format!("expected `auto` or `fixed:<duration>`, got `{raw}`"))?;
    let (number, scale) = match body.char_indices().last() {
        Some((i, 's')) => (&body[..i], 1.0),
        Some((i, 'm')) => (&body[..i], 60.0),
        Some((i, 'h')) => (&body[..i], 3600.0),
        _ => (body, 1.0),
    };
    let value: f64 = number.parse().map_err(|_| format!("bad duration `{body}`"))?;
    let secs = value * scale;
    if !(secs.is_finite() && secs > 0.0) {
        return Err(format!("duration must be positive, got `{body}`"));
    }
    Ok(ThresholdMode::Fixed(secs))
}

fn parse_snake<T: DeserializeOwned>(raw: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(raw.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct RunMeta<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Vec<String>,
    seed: Option<u64>,
    config: &'a C,
}

fn meta<'a, C: Serialize>(command: &'static str, inputs: &[&Path], seed: Option<u64>, config: &'a C) -> RunMeta<'a, C> {
    RunMeta {
        tool: "engage",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        config,
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| io_error(&path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_error(&dir.join(name), e))
}

fn write_csv<M: Serialize>(
    dir: &Path,
    name: &str,
    meta: &M,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let out = create(dir, name)?;
    write_table(out, meta, header, rows).map_err(CliError::from)
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

fn read_log(path: &Path) -> Result<ParsedLog, CliError> {
    Ok(parse_log(open(path)?)?)
}

fn read_table(path: &Path) -> Result<MetricsTable, CliError> {
    Ok(read_metrics_table(open(path)?)?)
}

fn cmd_validate(log: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let parsed = read_log(log)?;
    let text = serde_json::to_string_pretty(&parsed.report).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Serialize)]
struct StatsReport<'a, M: Serialize> {
    meta: M,
    parse: &'a crate::ingest::ParseReport,
    window: crate::ingest::ProjectWindow,
    clipped_events: usize,
    eligible: usize,
    global_pad_secs: Option<f64>,
    midnight_crossings: usize,
    padded_days: usize,
    stats: &'a Option<crate::metrics::DescriptiveStats>,
    exclusions: &'a crate::ingest::ExclusionReport,
}

fn cmd_metrics(args: &MetricsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = MetricsConfig {
        window: WindowOverride {
            start: args.start,
            end: args.end,
        },
        policy: EligibilityPolicy::new(args.min_active_days, args.join_quantile)?,
        threshold: args.threshold,
        sd: args.sd,
    };
    let parsed = read_log(&args.log)?;
    let parse = parsed.report.clone();
    log::info!("parsed {} events for {} volunteers", parse.accepted, parse.volunteers);
    let run = compute_metrics(parsed, &config)?;
    let m = meta("metrics", &[&args.log], None, &config);
    let dir = &args.out_dir;

    write_csv(dir, "metrics.csv", &m, &MetricsTable::header(), run.table.rows())?;
    write_csv(
        dir,
        "thresholds.csv",
        &m,
        &strings(&["volunteer_id", "threshold_seconds", "source", "positive_gaps", "pad_seconds"]),
        run.thresholds.iter().map(|t| {
            vec![
                t.volunteer_id.clone(),
                t.threshold_secs.to_string(),
                parse_source(t.source),
                t.positive_gaps.to_string(),
                t.pad_secs.to_string(),
            ]
        }),
    )?;
    write_csv(
        dir,
        "sessions.csv",
        &m,
        &strings(&["volunteer_id", "session_index", "start", "end", "event_count", "duration_hours"]),
        run.sessions.iter().map(|s| {
            vec![
                s.volunteer_id.clone(),
                s.index.to_string(),
                format_timestamp(&s.start),
                format_timestamp(&s.end),
                s.event_count.to_string(),
                s.duration_hours.to_string(),
            ]
        }),
    )?;
    write_json(
        dir,
        "stats.json",
        &StatsReport {
            meta: &m,
            parse: &parse,
            window: run.window,
            clipped_events: run.clipped_events,
            eligible: run.table.matrix.len(),
            global_pad_secs: run.global_pad_secs,
            midnight_crossings: run.midnight_crossings,
            padded_days: run.padded_days,
            stats: &run.stats,
            exclusions: &run.exclusions,
        },
    )?;
    writeln!(
        out,
        "{} eligible volunteers ({} excluded), window {} to {}",
        run.table.matrix.len(),
        run.exclusions.excluded,
        run.window.start,
        run.window.end
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

fn parse_source(s: crate::sessions::ThresholdSource) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn cluster_config(args: &ClusterArgs, seed: u64) -> ClusterConfig {
    ClusterConfig {
        linkage: args.linkage,
        hier_cap: args.hier_cap,
        seed,
        kmeans: KMeansConfig {
            max_iter: args.max_iter,
            ..KMeansConfig::default()
        },
    }
}

fn write_scan<M: Serialize>(dir: &Path, m: &M, scan: &KScanReport) -> Result<(), CliError> {
    write_csv(
        dir,
        "kscan.csv",
        m,
        &strings(&["k", "wss", "avg_silhouette", "iterations"]),
        scan.rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.wss.to_string(),
                r.avg_silhouette.to_string(),
                r.iterations.to_string(),
            ]
        }),
    )?;
    #[derive(Serialize)]
    struct ScanOut<'a, M: Serialize> {
        meta: &'a M,
        scan: &'a KScanReport,
    }
    write_json(dir, "kscan.json", &ScanOut { meta: m, scan })
}

fn cmd_scan_k(args: &ScanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cluster_config(&args.cluster, args.seed);
    let table = read_table(&args.metrics)?;
    let scan = scan_engagement(&table.matrix, args.k_min, args.k_max, &config)?;
    #[derive(Serialize)]
    struct Config<'a> {
        k_min: usize,
        k_max: usize,
        cluster: &'a ClusterConfig,
    }
    let cfg = Config {
        k_min: args.k_min,
        k_max: args.k_max,
        cluster: &config,
    };
    let m = meta("scan-k", &[&args.metrics], Some(args.seed), &cfg);
    write_scan(&args.cluster.out_dir, &m, &scan)?;
    writeln!(
        out,
        "suggested k = {} (average silhouette {:.3}, {:?}); elbow at k = {}",
        scan.suggested_k,
        scan.rows.iter().find(|r| r.k == scan.suggested_k).map_or(f64::NAN, |r| r.avg_silhouette),
        scan.interpretation,
        scan.elbow_k
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cluster_config(&args.cluster, args.seed);
    let p_value = if args.exact_p {
        PValueMethod::ExactPermutation
    } else {
        PValueMethod::TApprox
    };
    #[derive(Serialize)]
    struct Config<'a> {
        k: Option<usize>,
        k_min: Option<usize>,
        k_max: Option<usize>,
        p_value: PValueMethod,
        cluster: &'a ClusterConfig,
    }
    let cfg = Config {
        k: args.k,
        k_min: args.k_min,
        k_max: args.k_max,
        p_value,
        cluster: &config,
    };
    let m = meta("analyze", &[&args.metrics], Some(args.seed), &cfg);
    let dir = &args.cluster.out_dir;
    let table = read_table(&args.metrics)?;

    let k = match (args.k, args.k_min, args.k_max) {
        (Some(k), None, None) => k,
        (None, Some(lo), Some(hi)) => {
            let scan = scan_engagement(&table.matrix, lo, hi, &config)?;
            write_scan(dir, &m, &scan)?;
            scan.suggested_k
        }
        _ => return Err(CliError::Usage("analyze needs either --k or both --k-min and --k-max".into())),
    };
    let run = analyze(&table, k, &config, p_value)?;

    #[derive(Serialize)]
    struct ProfilesOut<'a, M: Serialize> {
        meta: &'a M,
        iterations: usize,
        converged: bool,
        report: &'a crate::profiles::ProfileReport,
    }
    write_json(
        dir,
        "profiles.json",
        &ProfilesOut {
            meta: &m,
            iterations: run.clustering.iterations,
            converged: run.clustering.converged,
            report: &run.report,
        },
    )?;
    let (header, rows) = run.report.flat_table();
    write_csv(dir, "profiles.csv", &m, &header, rows)?;
    write_csv(
        dir,
        "assignments.csv",
        &m,
        &strings(&["volunteer_id", "cluster", "label"]),
        run.assignments
            .iter()
            .map(|a| vec![a.volunteer_id.clone(), a.cluster.to_string(), a.label.to_string()]),
    )?;
    writeln!(
        out,
        "k = {}: average silhouette {:.3} ({:?}), WSS {:.4}",
        k, run.report.avg_silhouette, run.report.interpretation, run.report.wss
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    for p in &run.report.profiles {
        writeln!(
            out,
            "  {:<12} {:>6} volunteers ({:5.1}%)  {:5.1}% of devoted time",
            p.label.to_string(),
            p.volunteers,
            p.volunteer_share,
            p.devoted_share
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec).map_err(|e| io_error(&args.spec, e))?;
    let spec = CorpusSpec::from_json(&text)?;
    let corpus = generate_corpus(&spec, args.seed)?;
    let m = meta("synth", &[&args.spec], Some(corpus.seed), &spec);
    let dir = &args.out_dir;

    let mut log = create(dir, "log.csv")?;
    writeln!(log, "# {}", serde_json::to_string(&m).map_err(|e| CliError::Data(e.to_string()))?)
        .map_err(|e| io_error(&dir.join("log.csv"), e))?;
    corpus.write_log(&mut log)?;
    let mut truth = create(dir, "truth.csv")?;
    writeln!(truth, "# {}", serde_json::to_string(&m).map_err(|e| CliError::Data(e.to_string()))?)
        .map_err(|e| io_error(&dir.join("truth.csv"), e))?;
    corpus.write_truth(&mut truth)?;
    writeln!(
        out,
        "{} volunteers, {} events (seed {})",
        corpus.volunteers.len(),
        corpus.events.len(),
        corpus.seed
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { log } => cmd_validate(log, out),
        Command::Metrics(a) => cmd_metrics(a, out),
        Command::ScanK(a) => cmd_scan_k(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_syntax() {
        assert_eq!(parse_threshold("auto"), Ok(ThresholdMode::Auto));
        assert_eq!(parse_threshold("fixed:90"), Ok(ThresholdMode::Fixed(90.0)));
        assert_eq!(parse_threshold("fixed:90s"), Ok(ThresholdMode::Fixed(90.0)));
        assert_eq!(parse_threshold("fixed:30m"), Ok(ThresholdMode::Fixed(1800.0)));
        assert_eq!(parse_threshold("fixed:1.5h"), Ok(ThresholdMode::Fixed(5400.0)));
        assert!(parse_threshold("fixed:0").is_err());
        assert!(parse_threshold("fixed:m").is_err());
        assert!(parse_threshold("30m").is_err());
    }

    #[test]
    fn enum_flags() {
        assert_eq!(parse_snake::<Linkage>("complete"), Ok(Linkage::Complete));
        assert_eq!(parse_snake::<SdConvention>("sample"), Ok(SdConvention::Sample));
        assert!(parse_snake::<Linkage>("centroid").is_err());
    }

    fn code(args: &[&str]) -> (i32, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let c = run(std::iter::once("engage").chain(args.iter().copied()), &mut out, &mut err);
        (c, String::from_utf8_lossy(&err).into_owned())
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(code(&["nope"]).0, EXIT_USAGE);
        assert_eq!(code(&["analyze", "m.csv", "--k", "5"]).0, EXIT_USAGE); // no seed
        assert_eq!(code(&["analyze", "m.csv", "--seed", "1", "--k", "5", "--k-min", "2", "--k-max", "3"]).0, EXIT_USAGE);
        assert_eq!(code(&["metrics", "x.csv", "--threshold", "sometimes"]).0, EXIT_USAGE);
        assert_eq!(code(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let (c, err) = code(&["validate", "/nonexistent/log.csv"]);
        assert_eq!(c, EXIT_DATA);
        assert!(err.contains("/nonexistent/log.csv"));
    }
}
