use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterError, Matrix};

/// Sum of squared Euclidean distances from each row to its centroid.
pub fn wss(m: &Matrix, assignments: &[usize], centroids: &Matrix) -> Result<f64, ClusterError> {
    check_assignments(m, assignments, centroids.rows())?;
    Ok(assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(m.row(i), centroids.row(c)))
        .sum())
}

fn check_assignments(m: &Matrix, assignments: &[usize], k: usize) -> Result<(), ClusterError> {
    if assignments.len() != m.rows() || assignments.iter().any(|&c| c >= k) {
        return Err(ClusterError::BadAssignments { k });
    }
    Ok(())
}

/// Interpretation bands for the average silhouette width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Strong,
    Reasonable,
    Weak,
    None,
}

/// 0.71 and above strong, 0.51 reasonable, 0.26 weak, anything lower none.
pub fn interpret_silhouette(value: f64) -> Structure {
    if value >= 0.71 {
        Structure::Strong
    } else if value >= 0.51 {
        Structure::Reasonable
    } else if value >= 0.26 {
        Structure::Weak
    } else {
        Structure::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub average: f64,
    pub interpretation: Structure,
}

/// Per-row silhouette `s(i) = (b - a) / max(a, b)`; rows in singleton
/// clusters get 0.
pub fn silhouette_values(m: &Matrix, assignments: &[usize], k: usize) -> Result<Vec<f64>, ClusterError> {
    if k < 2 {
        return Err(ClusterError::KOutOfRange { k, max: m.rows() });
    }
    check_assignments(m, assignments, k)?;
    let mut sizes = vec![0usize; k];
    assignments.iter().for_each(|&c| sizes[c] += 1);
    if sizes.contains(&0) {
        return Err(ClusterError::BadAssignments { k });
    }

    Ok((0..m.rows())
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let xi = m.row(i);
            for (j, &c) in assignments.iter().enumerate() {
                if j != i {
                    sums[c] += sq_dist(xi, m.row(j)).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

pub fn avg_silhouette(m: &Matrix, assignments: &[usize], k: usize) -> Result<Silhouette, ClusterError> {
    let values = silhouette_values(m, assignments, k)?;
    let average = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Silhouette {
        average,
        interpretation: interpret_silhouette(average),
    })
}

fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// True when both labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && relabel(a) == relabel(b)
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let (ra, rb) = (relabel(a), relabel(b));
    let ka = ra.iter().max().map_or(0, |m| m + 1);
    let kb = rb.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in ra.iter().zip(&rb) {
        table[x * kb + y] += 1;
    }
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let row_sum: f64 = (0..ka).map(|x| pairs(table[x * kb..(x + 1) * kb].iter().sum())).sum();
    let col_sum: f64 = (0..kb).map(|y| pairs((0..ka).map(|x| table[x * kb + y]).sum())).sum();
    let expected = row_sum * col_sum / pairs(a.len() as u64).max(1.0);
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn wss_cases() {
        let data = m(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(wss(&data, &[0, 0], &m(&[[0.5, 0.0]])).unwrap(), 0.5);
        assert_eq!(wss(&data, &[0, 1], &data).unwrap(), 0.0);
        assert!(wss(&data, &[0, 2], &data).is_err());
        assert!(wss(&data, &[0], &data).is_err());
    }

    #[test]
    fn struyf_bands() {
        assert_eq!(interpret_silhouette(0.25), Structure::None);
        assert_eq!(interpret_silhouette(0.26), Structure::Weak);
        assert_eq!(interpret_silhouette(0.50), Structure::Weak);
        assert_eq!(interpret_silhouette(0.51), Structure::Reasonable);
        assert_eq!(interpret_silhouette(0.53), Structure::Reasonable);
        assert_eq!(interpret_silhouette(0.70), Structure::Reasonable);
        assert_eq!(interpret_silhouette(0.71), Structure::Strong);
        assert_eq!(interpret_silhouette(-0.4), Structure::None);
    }

    #[test]
    fn separated_blobs_are_strong() {
        let data = m(&[[0.0, 0.0], [0.0, 0.1], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]]);
        let s = avg_silhouette(&data, &[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert!(s.average > 0.9);
        assert_eq!(s.interpretation, Structure::Strong);
    }

    #[test]
    fn equal_a_and_b_gives_zero() {
        // Point 1 sits at distance 1 from its clustermate and from the other cluster.
        let data = m(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 0.0]]);
        let s = silhouette_values(&data, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn singleton_scores_zero_and_k1_rejected() {
        let data = m(&[[0.0, 0.0], [0.0, 1.0], [9.0, 9.0]]);
        let s = silhouette_values(&data, &[0, 0, 1], 2).unwrap();
        assert_eq!(s[2], 0.0);
        assert!(silhouette_values(&data, &[0, 0, 0], 1).is_err());
        assert!(silhouette_values(&data, &[0, 0, 0], 2).is_err());
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 3, 3]), 1.0);
        // Every contingency cell holds one item: index 0, expected 2/3, max 2.
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) - (-0.5)).abs() < 1e-12);
        // scikit-learn reference: adjusted_rand_score([0,0,1,2],[0,0,1,1]) = 0.5714285714
        assert!((adjusted_rand_index(&[0, 0, 1, 2], &[0, 0, 1, 1]) - 0.5714285714285714).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]), 1.0);
    }

    proptest! {
        #[test]
        fn silhouette_bounded(rows in prop::collection::vec(prop::array::uniform2(0.0f64..1.0), 4..30), seed in 0usize..1000) {
            let labels: Vec<usize> = (0..rows.len()).map(|i| (i * 7 + seed) % 3).collect();
            let data = m(&rows);
            if let Ok(s) = silhouette_values(&data, &labels, 3) {
                prop_assert!(s.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn ari_symmetric_and_bounded(a in prop::collection::vec(0usize..4, 2..40), shift in 0usize..10) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, x)| (x + i * shift) % 3).collect();
            let ab = adjusted_rand_index(&a, &b);
            prop_assert!((ab - adjusted_rand_index(&b, &a)).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
            let perm: Vec<usize> = a.iter().map(|x| 10 - x).collect();
            prop_assert_eq!(adjusted_rand_index(&a, &perm), 1.0);
        }
    }
}
