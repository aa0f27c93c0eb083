use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sq_dist, wss, ClusterError, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    /// Stop once the summed squared centroid movement drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// After Lloyd converges, move single points between clusters while a
    /// move lowers the WSS.
    #[serde(default = "yes")]
    pub refine: bool,
}

fn yes() -> bool {
    true
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub wss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// WSS after every assignment step, starting with the initial centroids.
    pub wss_history: Vec<f64>,
}

/// Nearest centroid per row; ties go to the lowest cluster index.
fn assign(m: &Matrix, centroids: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .into_par_iter()
        .map(|i| {
            let x = m.row(i);
            let mut best = 0;
            let mut best_d = sq_dist(x, centroids.row(0));
            for c in 1..centroids.rows() {
                let d = sq_dist(x, centroids.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

fn means(m: &Matrix, assignments: &[usize], previous: &Matrix) -> Matrix {
    let k = previous.rows();
    let cols = m.cols();
    let mut sums = vec![0.0; k * cols];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        for (s, x) in sums[c * cols..(c + 1) * cols].iter_mut().zip(m.row(i)) {
            *s += x;
        }
        counts[c] += 1;
    }
    for c in 0..k {
        let dst = &mut sums[c * cols..(c + 1) * cols];
        if counts[c] == 0 {
            dst.copy_from_slice(previous.row(c));
        } else {
            dst.iter_mut().for_each(|s| *s /= counts[c] as f64);
        }
    }
    Matrix::new(k, cols, sums).expect("shape is k x cols")
}

/// Reseeds each empty cluster with the row farthest from its own centroid,
/// taken from a cluster that keeps at least one other member.
fn repair_empty(m: &Matrix, assignments: &mut [usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    loop {
        let mut counts = vec![0usize; k];
        assignments.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..m.rows())
            .filter(|&i| counts[assignments[i]] > 1)
            .map(|i| (i, sq_dist(m.row(i), centroids.row(assignments[i]))))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else {
            return;
        };
        assignments[i] = empty;
        centroids.row_mut(empty).copy_from_slice(m.row(i));
    }
}

/// Lloyd's algorithm from the given initial centroids.
///
/// Stops when assignments are stable, when the summed squared centroid
/// movement falls below `tol`, or after `max_iter` iterations. The WSS is
/// checked to be non-increasing after every step.
pub fn kmeans(m: &Matrix, initial: &Matrix, config: &KMeansConfig) -> Result<KMeansFit, ClusterError> {
    let k = initial.rows();
    if k == 0 || k > m.rows() {
        return Err(ClusterError::KOutOfRange { k, max: m.rows() });
    }
    if initial.cols() != m.cols() {
        return Err(ClusterError::DimensionMismatch {
            expected: m.cols(),
            got: initial.cols(),
        });
    }
    m.check_finite()?;
    initial.check_finite()?;

    let mut centroids = initial.clone();
    let mut assignments = assign(m, &centroids);
    let mut history = vec![wss(m, &assignments, &centroids)?];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iter {
        iterations += 1;
        repair_empty(m, &mut assignments, &mut centroids);
        let next = means(m, &assignments, &centroids);
        let movement: f64 = (0..k).map(|c| sq_dist(next.row(c), centroids.row(c))).sum();
        centroids = next;
        let next_assignments = assign(m, &centroids);
        let w = wss(m, &next_assignments, &centroids)?;
        let prev = *history.last().expect("history is non-empty");
        if w > prev + 1e-9 * prev.max(1.0) {
            return Err(ClusterError::Invariant(format!(
                "k-means WSS increased from {prev} to {w} at iteration {iterations}"
            )));
        }
        history.push(w);
        let stable = next_assignments == assignments;
        assignments = next_assignments;
        if stable || movement < config.tol {
            converged = true;
            break;
        }
    }

    repair_empty(m, &mut assignments, &mut centroids);
    let mut centroids = means(m, &assignments, &centroids);
    if config.refine {
        transfer(m, &mut assignments, &mut centroids, &mut history)?;
    }
    let final_wss = wss(m, &assignments, &centroids)?;
    Ok(KMeansFit {
        assignments,
        centroids,
        wss: final_wss,
        iterations,
        converged,
        wss_history: history,
    })
}

/// Single-point transfers in row order, repeated until a full pass moves
/// nothing. Moving row `x` from `a` to `b` changes the WSS by
/// `n_b/(n_b+1)|x-c_b|^2 - n_a/(n_a-1)|x-c_a|^2`, so only strictly
/// negative moves are taken. The result is also a Lloyd fixed point.
fn transfer(
    m: &Matrix,
    assignments: &mut [usize],
    centroids: &mut Matrix,
    history: &mut Vec<f64>,
) -> Result<(), ClusterError> {
    let k = centroids.rows();
    let cols = m.cols();
    let mut counts = vec![0usize; k];
    assignments.iter().for_each(|&c| counts[c] += 1);
    // Bounded: every move strictly lowers the WSS over finitely many partitions.
    for _ in 0..(100 * m.rows().max(1)) {
        let mut moved = false;
        for i in 0..m.rows() {
            let x = m.row(i);
            let a = assignments[i];
            let na = counts[a] as f64;
            if counts[a] < 2 {
                continue;
            }
            let remove = na / (na - 1.0) * sq_dist(x, centroids.row(a));
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let add = nb / (nb + 1.0) * sq_dist(x, centroids.row(b));
                if best.is_none_or(|(_, d)| add < d) {
                    best = Some((b, add));
                }
            }
            let Some((b, add)) = best else { continue };
            if add >= remove - 1e-12 * remove.max(1.0) {
                continue;
            }
            let nb = counts[b] as f64;
            for j in 0..cols {
                let ca = centroids.row(a)[j];
                centroids.row_mut(a)[j] = (ca * na - x[j]) / (na - 1.0);
                let cb = centroids.row(b)[j];
                centroids.row_mut(b)[j] = (cb * nb + x[j]) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            assignments[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
        // Recompute exactly to shed drift from the incremental updates.
        *centroids = means(m, assignments, centroids);
        let w = wss(m, assignments, centroids)?;
        let prev = *history.last().expect("history is non-empty");
        if w > prev + 1e-9 * prev.max(1.0) {
            return Err(ClusterError::Invariant(format!(
                "k-means WSS increased from {prev} to {w} during transfers"
            )));
        }
        history.push(w);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let data = m(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let init = m(&[[0.0, 0.5], [10.0, 10.5]]);
        let fit = kmeans(&data, &init, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.iterations, 1);
        assert!(fit.converged);
        assert_eq!(fit.assignments, vec![0, 0, 1, 1]);
        assert_eq!(fit.centroids, init);
        assert!((fit.wss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_wss() {
        let data = m(&[[0.0, 0.0], [1.0, 0.3], [2.0, 5.0]]);
        let fit = kmeans(&data, &data, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.wss, 0.0);
        assert_eq!(fit.assignments, vec![0, 1, 2]);
    }

    #[test]
    fn equidistant_point_goes_to_lower_index() {
        let data = m(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]]);
        let fit = kmeans(&data, &m(&[[0.0, 0.0], [2.0, 0.0]]), &KMeansConfig { tol: 1e-9, max_iter: 0, refine: false }).unwrap();
        assert_eq!(fit.assignments, vec![0, 1, 0]);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        let data = m(&[[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.2, 0.0]]);
        // The third centroid attracts nobody initially.
        let init = m(&[[0.0, 0.0], [5.0, 0.0], [100.0, 100.0]]);
        let fit = kmeans(&data, &init, &KMeansConfig::default()).unwrap();
        let mut counts = [0; 3];
        fit.assignments.iter().for_each(|&c| counts[c] += 1);
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        assert!(fit.wss_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let data = m(&[[0.0, 0.0], [f64::INFINITY, 0.0]]);
        assert!(matches!(
            kmeans(&data, &m(&[[0.0, 0.0]]), &KMeansConfig::default()),
            Err(ClusterError::NonFinite { .. })
        ));
        let data = m(&[[0.0, 0.0]]);
        assert!(kmeans(&data, &m(&[[0.0, 0.0], [1.0, 1.0]]), &KMeansConfig::default()).is_err());
    }

    #[test]
    fn transfer_escapes_lloyd_fixed_point() {
        // Lloyd is stuck here: every row is already nearest its own centroid,
        // but moving the row at 2 into the right-hand group lowers the WSS.
        let data = m(&[[0.0, 0.0], [2.0, 0.0], [3.1, 0.0], [4.0, 0.0]]);
        let init = m(&[[1.0, 0.0], [3.55, 0.0]]);
        let plain = KMeansConfig { refine: false, ..KMeansConfig::default() };
        let stuck = kmeans(&data, &init, &plain).unwrap();
        assert_eq!(stuck.assignments, vec![0, 0, 1, 1]);
        let fit = kmeans(&data, &init, &KMeansConfig::default()).unwrap();
        assert_eq!(fit.assignments, vec![0, 1, 1, 1]);
        assert!(fit.wss < stuck.wss);
        assert!(fit.wss_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(*fit.wss_history.last().unwrap(), fit.wss);
    }

    proptest::proptest! {
        #[test]
        fn refined_fit_is_lloyd_stable(rows in proptest::collection::vec(proptest::array::uniform2(0.0f64..10.0), 3..25), k in 1usize..4) {
            let data = Matrix::from_rows(&rows).unwrap();
            let k = k.min(rows.len());
            let init = Matrix::from_rows(&rows[..k]).unwrap();
            let fit = kmeans(&data, &init, &KMeansConfig::default()).unwrap();
            proptest::prop_assert!(fit.wss_history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0)));
            let again = kmeans(&data, &fit.centroids, &KMeansConfig { refine: false, ..KMeansConfig::default() }).unwrap();
            proptest::prop_assert!((again.wss - fit.wss).abs() <= 1e-9 * fit.wss.max(1.0));
        }
    }
}
