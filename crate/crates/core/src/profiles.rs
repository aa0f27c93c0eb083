//! Engagement profiles: labels for clusters, per-profile correlation
//! structure and each profile's share of volunteers and devoted time.

use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::cluster::{sq_dist, ClusteringResult, Matrix, Structure};
use crate::metrics::{EngagementMatrix, METRIC_NAMES};
use crate::stats::{spearman, PValueMethod};

const A: usize = 0;
const R: usize = 2;

/// Named profiles are assigned only when there are exactly five clusters.
pub const NAMED_PROFILE_COUNT: usize = 5;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfileLabel {
    Hardworking,
    Spasmodic,
    Persistent,
    Lasting,
    Moderate,
    Generic(usize),
}

impl fmt::Display for ProfileLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hardworking => f.write_str("hardworking"),
            Self::Spasmodic => f.write_str("spasmodic"),
            Self::Persistent => f.write_str("persistent"),
            Self::Lasting => f.write_str("lasting"),
            Self::Moderate => f.write_str("moderate"),
            Self::Generic(i) => write!(f, "cluster-{i}"),
        }
    }
}

impl Serialize for ProfileLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Label of one cluster plus the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelAssignment {
    pub cluster: usize,
    pub label: ProfileLabel,
    pub rule: String,
    /// The deciding comparison was an exact tie, resolved toward the lower index.
    pub tie_broken: bool,
}

fn argmax_by(candidates: &[usize], score: impl Fn(usize) -> f64) -> (usize, bool) {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if score(c) > score(best) {
            best = c;
        }
    }
    let tie = candidates.iter().any(|&c| c != best && score(c) == score(best));
    (best, tie)
}

/// Labels clusters from their normalized centroids `(a, d, r, v)`.
///
/// With five clusters, in order: persistent takes the largest `r`;
/// hardworking the largest `a` of the rest; moderate the remaining centroid
/// nearest the mean of the remaining centroids; of the last two, spasmodic
/// has the higher `a` and lasting is the other. Any other `k` gets generic
/// labels carrying the centroid's values.
pub fn label_profiles(centroids: &Matrix) -> Vec<LabelAssignment> {
    let k = centroids.rows();
    if k != NAMED_PROFILE_COUNT {
        return (0..k)
            .map(|c| {
                let summary: Vec<String> = METRIC_NAMES
                    .iter()
                    .zip(centroids.row(c))
                    .map(|(name, x)| format!("{name}={x:.3}"))
                    .collect();
                LabelAssignment {
                    cluster: c,
                    label: ProfileLabel::Generic(c),
                    rule: format!("generic: {}", summary.join(" ")),
                    tie_broken: false,
                }
            })
            .collect();
    }

    let mut out = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut take = |remaining: &mut Vec<usize>, c: usize, label, rule: &str, tie| {
        remaining.retain(|&x| x != c);
        out.push(LabelAssignment {
            cluster: c,
            label,
            rule: rule.to_string(),
            tie_broken: tie,
        });
    };

    let (persistent, tie) = argmax_by(&remaining, |c| centroids.row(c)[R]);
    take(&mut remaining, persistent, ProfileLabel::Persistent, "largest r", tie);

    let (hardworking, tie) = argmax_by(&remaining, |c| centroids.row(c)[A]);
    take(&mut remaining, hardworking, ProfileLabel::Hardworking, "largest a among the rest", tie);

    let mean: Vec<f64> = (0..centroids.cols())
        .map(|j| remaining.iter().map(|&c| centroids.row(c)[j]).sum::<f64>() / remaining.len() as f64)
        .collect();
    let (moderate, tie) = argmax_by(&remaining, |c| -sq_dist(centroids.row(c), &mean));
    take(
        &mut remaining,
        moderate,
        ProfileLabel::Moderate,
        "nearest the mean of the remaining centroids",
        tie,
    );

    let (spasmodic, tie) = argmax_by(&remaining, |c| centroids.row(c)[A]);
    take(&mut remaining, spasmodic, ProfileLabel::Spasmodic, "higher a of the last two", tie);
    let lasting = remaining[0];
    take(&mut remaining, lasting, ProfileLabel::Lasting, "remaining cluster", false);

    out.sort_by_key(|l| l.cluster);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    VeryWeak,
    Weak,
    Moderate,
    Strong,
    VeryStrong,
}

impl Strength {
    pub fn of(rho: f64) -> Self {
        match rho.abs() {
            x if x < 0.2 => Self::VeryWeak,
            x if x < 0.4 => Self::Weak,
            x if x < 0.6 => Self::Moderate,
            x if x < 0.8 => Self::Strong,
            _ => Self::VeryStrong,
        }
    }
}

/// Metric pairs in reporting order, as column indices into `(a, d, r, v)`.
pub const METRIC_PAIRS: [(usize, usize); 6] = [(0, 2), (0, 3), (0, 1), (2, 3), (2, 1), (3, 1)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub pair: String,
    pub n: usize,
    /// `None` when either metric is constant within the profile.
    pub rho: Option<f64>,
    /// `None` when `rho` is undefined or the profile has fewer than 5 members.
    pub p_value: Option<f64>,
    pub significant: bool,
    pub strength: Option<Strength>,
    /// Moderate or stronger.
    pub highlighted: bool,
}

pub fn correlation_entry(pair: (usize, usize), x: &[f64], y: &[f64], method: PValueMethod) -> CorrelationEntry {
    let result = spearman(x, y, method).expect("columns have equal length and finite values");
    let strength = result.rho.map(Strength::of);
    CorrelationEntry {
        pair: format!("{},{}", METRIC_NAMES[pair.0], METRIC_NAMES[pair.1]),
        n: result.n,
        rho: result.rho,
        p_value: result.p_value,
        significant: result.p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
        strength,
        highlighted: matches!(
            strength,
            Some(Strength::Moderate | Strength::Strong | Strength::VeryStrong)
        ),
    }
}

/// Six Spearman entries per cluster, computed on the given metric values.
pub fn profile_correlations(
    values: &[[f64; 4]],
    assignments: &[usize],
    k: usize,
    method: PValueMethod,
) -> Vec<Vec<CorrelationEntry>> {
    (0..k)
        .into_par_iter()
        .map(|c| {
            let members: Vec<[f64; 4]> = assignments
                .iter()
                .zip(values)
                .filter(|(&a, _)| a == c)
                .map(|(_, v)| *v)
                .collect();
            METRIC_PAIRS
                .iter()
                .map(|&(i, j)| {
                    let x: Vec<f64> = members.iter().map(|v| v[i]).collect();
                    let y: Vec<f64> = members.iter().map(|v| v[j]).collect();
                    correlation_entry((i, j), &x, &y, method)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub label: ProfileLabel,
    pub cluster: usize,
    pub volunteers: usize,
    /// Percent of all volunteers.
    pub volunteer_share: f64,
    pub devoted_hours: f64,
    /// Percent of all devoted hours.
    pub devoted_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceTable {
    pub rows: Vec<ImportanceRow>,
    pub total_volunteers: usize,
    pub total_hours: f64,
}

/// Volunteer counts and total devoted hours per profile, with percent shares.
/// Rows follow label order.
pub fn importance_table(
    assignments: &[usize],
    labels: &[LabelAssignment],
    devoted_hours: &[f64],
) -> ImportanceTable {
    let k = labels.len();
    let mut counts = vec![0usize; k];
    let mut hours = vec![0.0f64; k];
    for (&c, &h) in assignments.iter().zip(devoted_hours) {
        counts[c] += 1;
        hours[c] += h;
    }
    let total_volunteers = assignments.len();
    let total_hours: f64 = hours.iter().sum();
    let pct = |part: f64, whole: f64| if whole > 0.0 { 100.0 * part / whole } else { 0.0 };
    let mut rows: Vec<ImportanceRow> = labels
        .iter()
        .map(|l| ImportanceRow {
            label: l.label,
            cluster: l.cluster,
            volunteers: counts[l.cluster],
            volunteer_share: pct(counts[l.cluster] as f64, total_volunteers as f64),
            devoted_hours: hours[l.cluster],
            devoted_share: pct(hours[l.cluster], total_hours),
        })
        .collect();
    rows.sort_by_key(|r| r.label);
    ImportanceTable {
        rows,
        total_volunteers,
        total_hours,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub label: ProfileLabel,
    pub cluster: usize,
    pub rule: String,
    pub tie_broken: bool,
    pub centroid_raw: Vec<f64>,
    pub centroid_normalized: Vec<f64>,
    pub volunteers: usize,
    pub volunteer_share: f64,
    pub devoted_hours: f64,
    pub devoted_share: f64,
    pub correlations: Vec<CorrelationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub k: usize,
    pub seed: u64,
    pub wss: f64,
    pub avg_silhouette: f64,
    pub interpretation: Structure,
    pub total_volunteers: usize,
    pub total_hours: f64,
    pub profiles: Vec<Profile>,
}

/// Labels, correlations and importance for a fitted clustering of `matrix`.
pub fn build_report(
    matrix: &EngagementMatrix,
    clustering: &ClusteringResult,
    devoted_hours: &[f64],
    method: PValueMethod,
) -> ProfileReport {
    let labels = label_profiles(&clustering.centroids_normalized);
    let correlations = profile_correlations(&matrix.values(), &clustering.assignments, clustering.k, method);
    let importance = importance_table(&clustering.assignments, &labels, devoted_hours);
    let profiles = importance
        .rows
        .iter()
        .map(|row| {
            let l = labels.iter().find(|l| l.cluster == row.cluster).expect("one label per cluster");
            Profile {
                label: row.label,
                cluster: row.cluster,
                rule: l.rule.clone(),
                tie_broken: l.tie_broken,
                centroid_raw: clustering.centroids_raw.row(row.cluster).to_vec(),
                centroid_normalized: clustering.centroids_normalized.row(row.cluster).to_vec(),
                volunteers: row.volunteers,
                volunteer_share: row.volunteer_share,
                devoted_hours: row.devoted_hours,
                devoted_share: row.devoted_share,
                correlations: correlations[row.cluster].clone(),
            }
        })
        .collect();
    ProfileReport {
        k: clustering.k,
        seed: clustering.seed,
        wss: clustering.wss,
        avg_silhouette: clustering.avg_silhouette,
        interpretation: clustering.interpretation,
        total_volunteers: importance.total_volunteers,
        total_hours: importance.total_hours,
        profiles,
    }
}

impl ProfileReport {
    /// One row per profile for spreadsheet use.
    pub fn flat_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header: Vec<String> = [
            "label",
            "cluster",
            "volunteers",
            "volunteer_share",
            "devoted_hours",
            "devoted_share",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for m in METRIC_NAMES {
            header.push(format!("{m}_raw"));
        }
        for m in METRIC_NAMES {
            header.push(format!("{m}_normalized"));
        }
        for (i, j) in METRIC_PAIRS {
            let tag = format!("{}_{}", METRIC_NAMES[i], METRIC_NAMES[j]);
            header.push(format!("rho_{tag}"));
            header.push(format!("p_{tag}"));
        }
        header.push("rule".to_string());

        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        let rows = self
            .profiles
            .iter()
            .map(|p| {
                let mut row = vec![
                    p.label.to_string(),
                    p.cluster.to_string(),
                    p.volunteers.to_string(),
                    p.volunteer_share.to_string(),
                    p.devoted_hours.to_string(),
                    p.devoted_share.to_string(),
                ];
                row.extend(p.centroid_raw.iter().map(f64::to_string));
                row.extend(p.centroid_normalized.iter().map(f64::to_string));
                for c in &p.correlations {
                    row.push(opt(c.rho));
                    row.push(opt(c.p_value));
                }
                row.push(p.rule.clone());
                row
            })
            .collect();
        (header, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Centroids shaped like the five profile descriptions (a, d, r, v).
    fn five() -> Matrix {
        Matrix::from_rows(&[
            [0.30, 0.30, 0.35, 0.30], // moderate
            [0.90, 0.40, 0.05, 0.02], // hardworking
            [0.10, 0.50, 0.95, 0.70], // persistent
            [0.65, 0.30, 0.10, 0.15], // spasmodic
            [0.15, 0.35, 0.60, 0.55], // lasting
        ])
        .unwrap()
    }

    fn label_of(labels: &[LabelAssignment], c: usize) -> ProfileLabel {
        labels.iter().find(|l| l.cluster == c).unwrap().label
    }

    #[test]
    fn five_centroids_get_the_five_names() {
        let labels = label_profiles(&five());
        assert_eq!(
            (0..5).map(|c| label_of(&labels, c)).collect::<Vec<_>>(),
            vec![
                ProfileLabel::Moderate,
                ProfileLabel::Hardworking,
                ProfileLabel::Persistent,
                ProfileLabel::Spasmodic,
                ProfileLabel::Lasting,
            ]
        );
        assert!(labels.iter().all(|l| !l.tie_broken));
    }

    #[test]
    fn other_k_is_generic() {
        let m = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4], [0.5, 0.5, 0.5, 0.5], [0.9, 0.0, 0.1, 0.2]]).unwrap();
        let labels = label_profiles(&m);
        assert_eq!(labels.iter().map(|l| l.label.to_string()).collect::<Vec<_>>(), ["cluster-0", "cluster-1", "cluster-2"]);
        assert!(labels[0].rule.contains("a=0.100"));
    }

    #[test]
    fn tie_on_r_goes_to_lower_index() {
        let mut rows = five().to_rows();
        rows[4][2] = 0.95;
        let labels = label_profiles(&Matrix::from_rows(&rows).unwrap());
        assert_eq!(label_of(&labels, 2), ProfileLabel::Persistent);
        assert!(labels.iter().find(|l| l.cluster == 2).unwrap().tie_broken);
    }

    #[test]
    fn strength_bands() {
        assert_eq!(Strength::of(0.19), Strength::VeryWeak);
        assert_eq!(Strength::of(-0.2), Strength::Weak);
        assert_eq!(Strength::of(0.59), Strength::Moderate);
        assert_eq!(Strength::of(-0.74), Strength::Strong);
        assert_eq!(Strength::of(-0.99), Strength::VeryStrong);
    }

    #[test]
    fn identical_vectors_have_undefined_rho() {
        let values = vec![[0.5, 1.0, 0.2, 3.0]; 8];
        let cors = profile_correlations(&values, &[0; 8], 1, PValueMethod::TApprox);
        assert_eq!(cors[0].len(), 6);
        assert!(cors[0].iter().all(|c| c.rho.is_none() && !c.significant));
        assert_eq!(cors[0][0].pair, "a,r");
        assert_eq!(cors[0][5].pair, "v,d");
    }

    #[test]
    fn importance_shares() {
        let labels = label_profiles(&Matrix::from_rows(&[[0.0; 4], [1.0; 4]]).unwrap());
        let t = importance_table(&[0, 1, 1], &labels, &[30.0, 50.0, 20.0]);
        assert_eq!(t.rows[0].devoted_share, 30.0);
        assert_eq!(t.rows[1].devoted_share, 70.0);
        assert_eq!(t.rows[1].volunteers, 2);

        let single = label_profiles(&Matrix::from_rows(&[[0.0; 4]]).unwrap());
        let t = importance_table(&[0, 0], &single, &[1.0, 2.0]);
        assert_eq!((t.rows[0].volunteer_share, t.rows[0].devoted_share), (100.0, 100.0));
    }

    proptest! {
        #[test]
        fn labels_form_a_bijection(rows in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 5)) {
            let labels = label_profiles(&Matrix::from_rows(&rows).unwrap());
            let mut names: Vec<ProfileLabel> = labels.iter().map(|l| l.label).collect();
            names.sort();
            prop_assert_eq!(names, vec![
                ProfileLabel::Hardworking,
                ProfileLabel::Spasmodic,
                ProfileLabel::Persistent,
                ProfileLabel::Lasting,
                ProfileLabel::Moderate,
            ]);
        }

        #[test]
        fn shares_sum_to_100(assign in prop::collection::vec(0usize..4, 1..60), seed in 0u64..100) {
            let k = 4;
            let labels = label_profiles(&Matrix::from_rows(&vec![[0.0; 4]; k]).unwrap());
            let hours: Vec<f64> = (0..assign.len()).map(|i| 0.1 + ((i as u64 * 31 + seed) % 17) as f64).collect();
            let t = importance_table(&assign, &labels, &hours);
            let v: f64 = t.rows.iter().map(|r| r.volunteer_share).sum();
            let h: f64 = t.rows.iter().map(|r| r.devoted_share).sum();
            prop_assert!((v - 100.0).abs() < 0.01);
            prop_assert!((h - 100.0).abs() < 0.01);
        }

        #[test]
        fn spearman_is_rank_invariant(xs in prop::collection::vec(0.01f64..10.0, 6..40), ys in prop::collection::vec(0.01f64..10.0, 40)) {
            let ys = &ys[..xs.len()];
            let a = correlation_entry((0, 3), &xs, ys, PValueMethod::TApprox);
            let tx: Vec<f64> = xs.iter().map(|x| (x - 0.01) / 9.99).collect();
            let ty: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
            let b = correlation_entry((0, 3), &tx, &ty, PValueMethod::TApprox);
            prop_assert_eq!(a.rho.is_some(), b.rho.is_some());
            if let (Some(p), Some(q)) = (a.rho, b.rho) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            let s = correlation_entry((3, 0), ys, &xs, PValueMethod::TApprox);
            prop_assert_eq!(s.rho, a.rho);
            if let Some(r) = correlation_entry((0, 0), &xs, &xs, PValueMethod::TApprox).rho {
                prop_assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }
}
