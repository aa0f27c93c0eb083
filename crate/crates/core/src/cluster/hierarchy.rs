//! Agglomerative clustering via the nearest-neighbour chain algorithm with
//! Lance-Williams distance updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterError, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
    Single,
}

/// One agglomeration step. Leaves are `0..n`; merge `i` creates cluster `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
    /// Matrix rows behind each leaf when the input was subsampled.
    pub sample: Option<Vec<usize>>,
}

impl Dendrogram {
    /// Matrix row index of a leaf.
    pub fn leaf_row(&self, leaf: usize) -> usize {
        self.sample.as_ref().map_or(leaf, |s| s[leaf])
    }
}

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Lance-Williams update of d(k, i ∪ j). Ward works on squared distances.
fn lance_williams(linkage: Linkage, dki: f64, dkj: f64, dij: f64, ni: f64, nj: f64, nk: f64) -> f64 {
    match linkage {
        Linkage::Ward => ((ni + nk) * dki + (nj + nk) * dkj - nk * dij) / (ni + nj + nk),
        Linkage::Average => (ni * dki + nj * dkj) / (ni + nj),
        Linkage::Complete => dki.max(dkj),
        Linkage::Single => dki.min(dkj),
    }
}

/// Builds the dendrogram of `m` (Euclidean distance).
///
/// When `m` has more than `cap` rows a uniform subsample of `cap` rows, drawn
/// with `seed`, is clustered instead and recorded in [`Dendrogram::sample`].
/// Merge heights follow the scipy convention: for Ward, the height of merging
/// clusters A and B is `sqrt(2 |A||B| / (|A|+|B|)) * ||c_A - c_B||`.
pub fn hierarchical_cluster(
    m: &Matrix,
    linkage: Linkage,
    cap: usize,
    seed: u64,
) -> Result<Dendrogram, ClusterError> {
    if m.rows() < 2 {
        return Err(ClusterError::TooFewRows {
            needed: 2,
            got: m.rows(),
        });
    }
    m.check_finite()?;
    let cap = cap.max(2);
    let (points, sample) = if m.rows() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, m.rows(), cap).into_vec();
        idx.sort_unstable();
        (m.select(&idx), Some(idx))
    } else {
        (m.clone(), None)
    };

    let n = points.rows();
    let squared = linkage == Linkage::Ward;
    let mut dist = Condensed {
        n,
        d: Vec::with_capacity(n * (n - 1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_dist(points.row(i), points.row(j));
            dist.d.push(if squared { d2 } else { d2.sqrt() });
        }
    }

    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    for _ in 0..n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (x, y, dxy) = loop {
            let x = *chain.last().expect("chain is non-empty");
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, dist.get(x, p)),
                None => (usize::MAX, f64::INFINITY),
            };
            for i in (0..n).filter(|&i| active[i] && i != x) {
                let d = dist.get(x, i);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            if Some(best) == prev {
                chain.truncate(chain.len() - 2);
                break (x, best, best_d);
            }
            chain.push(best);
        };

        // The merged cluster lives on in slot `y`.
        let (nx, ny) = (size[x] as f64, size[y] as f64);
        for k in (0..n).filter(|&k| active[k] && k != x && k != y) {
            let updated = lance_williams(linkage, dist.get(k, x), dist.get(k, y), dxy, nx, ny, size[k] as f64);
            dist.set(k, y, updated);
        }
        active[x] = false;
        size[y] += size[x];
        raw.push((x.min(y), x.max(y), if squared { dxy.max(0.0).sqrt() } else { dxy }));
    }

    // Reducible linkages allow replaying merges in height order.
    raw.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut cluster_size = vec![1usize; 2 * n - 1];
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let merges = raw
        .iter()
        .enumerate()
        .map(|(step, &(a, b, height))| {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            let id = n + step;
            parent[ra] = id;
            parent[rb] = id;
            cluster_size[id] = cluster_size[ra] + cluster_size[rb];
            Merge {
                left: ra.min(rb),
                right: ra.max(rb),
                height,
                size: cluster_size[id],
            }
        })
        .collect();

    Ok(Dendrogram {
        leaves: n,
        linkage,
        merges,
        sample,
    })
}

/// Group label of every leaf after undoing the last `k - 1` merges. Labels
/// are numbered by each group's smallest leaf.
pub fn cut_labels(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>, ClusterError> {
    let n = dendrogram.leaves;
    if k < 2 || k > n {
        return Err(ClusterError::KOutOfRange { k, max: n });
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        parent[m.left] = n + step;
        parent[m.right] = n + step;
    }
    let mut label_of_root = std::collections::HashMap::new();
    Ok((0..n)
        .map(|leaf| {
            let root = find(&mut parent, leaf);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect())
}

/// Mean of each group's member rows after cutting the dendrogram into `k`.
pub fn cut_to_centroids(dendrogram: &Dendrogram, k: usize, m: &Matrix) -> Result<Matrix, ClusterError> {
    let labels = cut_labels(dendrogram, k)?;
    let mut sums = vec![0.0; k * m.cols()];
    let mut counts = vec![0usize; k];
    for (leaf, &g) in labels.iter().enumerate() {
        let row = m.row(dendrogram.leaf_row(leaf));
        for (s, x) in sums[g * m.cols()..(g + 1) * m.cols()].iter_mut().zip(row) {
            *s += x;
        }
        counts[g] += 1;
    }
    for (g, &c) in counts.iter().enumerate() {
        for s in &mut sums[g * m.cols()..(g + 1) * m.cols()] {
            *s /= c as f64;
        }
    }
    Matrix::new(k, m.cols(), sums)
}
