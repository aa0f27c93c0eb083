use serde::{Deserialize, Serialize};

use super::{
    avg_silhouette, cut_to_centroids, hierarchical_cluster, kmeans, ClusterError, Dendrogram, KMeansConfig,
    KMeansFit, Linkage, Matrix, Structure, DEFAULT_HIER_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub linkage: Linkage,
    pub hier_cap: usize,
    pub seed: u64,
    pub kmeans: KMeansConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 10,
            linkage: Linkage::Ward,
            hier_cap: DEFAULT_HIER_CAP,
            seed: 0,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScanRow {
    pub k: usize,
    pub wss: f64,
    pub avg_silhouette: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScanReport {
    pub rows: Vec<KScanRow>,
    /// Highest average silhouette; ties go to the smaller k.
    pub suggested_k: usize,
    /// WSS elbow, reported for review only.
    pub elbow_k: usize,
    pub interpretation: Structure,
    pub seed: u64,
}

/// k-means on `m`, seeded by the dendrogram cut into `k` groups.
pub fn fit_k(m: &Matrix, dendrogram: &Dendrogram, k: usize, config: &KMeansConfig) -> Result<KMeansFit, ClusterError> {
    let init = cut_to_centroids(dendrogram, k, m)?;
    kmeans(m, &init, config)
}

/// k whose (k, wss) point lies farthest from the chord joining the curve's
/// endpoints.
pub fn elbow_k(rows: &[KScanRow]) -> Option<usize> {
    let (first, last) = (rows.first()?, rows.last()?);
    let (dx, dy) = ((last.k - first.k) as f64, last.wss - first.wss);
    rows.iter()
        .map(|r| (r.k, ((r.k - first.k) as f64 * dy - (r.wss - first.wss) * dx).abs()))
        .fold(None, |best: Option<(usize, f64)>, (k, d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((k, d)),
        })
        .map(|(k, _)| k)
}

/// Fits every k in `k_min..=k_max` from one shared dendrogram and scores it.
pub fn scan_k(m: &Matrix, config: &ScanConfig) -> Result<KScanReport, ClusterError> {
    let n = m.rows();
    if config.k_min < 2 || config.k_min > config.k_max || config.k_max + 1 > n {
        return Err(ClusterError::InvalidRange {
            k_min: config.k_min,
            k_max: config.k_max,
            n,
        });
    }
    let dendrogram = hierarchical_cluster(m, config.linkage, config.hier_cap, config.seed)?;
    if config.k_max > dendrogram.leaves {
        return Err(ClusterError::KOutOfRange {
            k: config.k_max,
            max: dendrogram.leaves,
        });
    }
    let rows = (config.k_min..=config.k_max)
        .map(|k| {
            let fit = fit_k(m, &dendrogram, k, &config.kmeans)?;
            let sil = avg_silhouette(m, &fit.assignments, k)?;
            Ok(KScanRow {
                k,
                wss: fit.wss,
                avg_silhouette: sil.average,
                iterations: fit.iterations,
            })
        })
        .collect::<Result<Vec<_>, ClusterError>>()?;
    let best = rows
        .iter()
        .fold(&rows[0], |best, r| if r.avg_silhouette > best.avg_silhouette { r } else { best });
    Ok(KScanReport {
        suggested_k: best.k,
        elbow_k: elbow_k(&rows).expect("range is non-empty"),
        interpretation: super::interpret_silhouette(best.avg_silhouette),
        seed: config.seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(centres: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for c in centres {
            for _ in 0..per {
                rows.push([
                    c[0] + rng.random_range(-spread..spread),
                    c[1] + rng.random_range(-spread..spread),
                ]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn two_blobs_suggest_two() {
        let m = blobs(&[[0.1, 0.1], [0.9, 0.9]], 30, 0.05, 1);
        let report = scan_k(&m, &ScanConfig { k_max: 6, ..ScanConfig::default() }).unwrap();
        assert_eq!(report.suggested_k, 2);
        assert_eq!(report.interpretation, Structure::Strong);
        assert_eq!(report.rows.len(), 5);
    }

    #[test]
    fn five_blobs_suggest_five() {
        let m = blobs(&[[0.1, 0.1], [0.9, 0.1], [0.5, 0.5], [0.1, 0.9], [0.9, 0.9]], 25, 0.06, 2);
        let report = scan_k(&m, &ScanConfig::default()).unwrap();
        assert_eq!(report.suggested_k, 5);
        assert!(report.rows.windows(2).all(|w| w[1].wss <= w[0].wss + 1e-9));
    }

    #[test]
    fn featureless_cloud_does_not_crash() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 2]> = (0..80).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let report = scan_k(&m, &ScanConfig::default()).unwrap();
        assert!(matches!(report.interpretation, Structure::Weak | Structure::None));
    }

    #[test]
    fn single_k_range() {
        let m = blobs(&[[0.0, 0.0], [1.0, 1.0]], 5, 0.1, 4);
        let report = scan_k(&m, &ScanConfig { k_min: 2, k_max: 2, ..ScanConfig::default() }).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!((report.suggested_k, report.elbow_k), (2, 2));
    }

    #[test]
    fn invalid_ranges() {
        let m = blobs(&[[0.0, 0.0]], 5, 0.1, 4);
        for (k_min, k_max) in [(1, 3), (4, 3), (2, 5)] {
            let cfg = ScanConfig { k_min, k_max, ..ScanConfig::default() };
            assert!(matches!(scan_k(&m, &cfg), Err(ClusterError::InvalidRange { .. })));
        }
    }

    #[test]
    fn elbow_on_synthetic_curve() {
        let rows: Vec<KScanRow> = [(2, 100.0), (3, 40.0), (4, 20.0), (5, 8.0), (6, 7.0), (7, 6.0)]
            .iter()
            .map(|&(k, wss)| KScanRow { k, wss, avg_silhouette: 0.0, iterations: 1 })
            .collect();
        assert_eq!(elbow_k(&rows), Some(4));
    }
}
