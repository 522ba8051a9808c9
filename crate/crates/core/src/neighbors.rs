//! k-nearest-neighbor and mutual k-nearest-neighbor machinery.
//!
//! Distances are Euclidean and ties are broken by ascending data index. When
//! a query competes with training points for a place in a training point's
//! neighbor list, it ranks after every training point at the same distance,
//! as if it were appended to the end of the dataset.

use std::cmp::Ordering;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{check_dim, sq_dist};

/// Neighbor indices into a dataset, ordered by nondecreasing distance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    /// Mean target over the set; 0 for an empty set.
    pub fn mean_target(&self, data: &Dataset) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.indices.iter().map(|&i| data.target(i)).sum::<f64>() / self.len() as f64
    }
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` training points nearest to `x`, optionally skipping index
/// `exclude`.
pub fn knn_indices(
    x: &[f64],
    data: &Dataset,
    k: usize,
    exclude: Option<usize>,
) -> Result<NeighborSet> {
    check_dim(data, x)?;
    let available = data.len() - usize::from(exclude.is_some_and(|e| e < data.len()));
    if k == 0 || k > available {
        return Err(Error::KOutOfRange { k, max: available });
    }
    let mut cand: Vec<(f64, usize)> = data
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, xi)| (sq_dist(x, xi), i))
        .collect();
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, by_distance_then_index);
        cand.truncate(k);
    }
    cand.sort_unstable_by(by_distance_then_index);
    Ok(NeighborSet {
        indices: cand.iter().map(|c| c.1).collect(),
        distances: cand.iter().map(|c| c.0.sqrt()).collect(),
    })
}

/// Unweighted mean of the `k` nearest targets.
pub fn knn_regress(x: &[f64], data: &Dataset, k: usize) -> Result<f64> {
    Ok(knn_indices(x, data, k, None)?.mean_target(data))
}

/// Whether the query at squared distance `r2` from training point `i` is
/// among the `k` nearest neighbors of `x_i` in `(D \ {x_i}) ∪ {x}`.
fn query_in_reverse_neighbors(data: &Dataset, i: usize, r2: f64, k: usize) -> bool {
    let xi = data.row(i);
    let mut ahead = 0;
    for (j, xj) in data.rows().enumerate() {
        if j != i && sq_dist(xi, xj) <= r2 {
            ahead += 1;
            if ahead >= k {
                return false;
            }
        }
    }
    true
}

/// Mutual k-nearest neighbors of a query: members of the query's k-NN set
/// that also have the query among their own k nearest neighbors.
pub fn mutual_neighbors(x: &[f64], data: &Dataset, k: usize) -> Result<NeighborSet> {
    let nk = knn_indices(x, data, k, None)?;
    let mut out = NeighborSet::default();
    for (&i, &dist) in nk.indices.iter().zip(&nk.distances) {
        if query_in_reverse_neighbors(data, i, sq_dist(x, data.row(i)), k) {
            out.indices.push(i);
            out.distances.push(dist);
        }
    }
    Ok(out)
}

/// Mean target over the mutual neighbors; 0 when there are none.
pub fn mknn_regress(x: &[f64], data: &Dataset, k: usize) -> Result<f64> {
    Ok(mutual_neighbors(x, data, k)?.mean_target(data))
}

/// Pairwise squared distances with each point's neighbors pre-sorted.
///
/// Supports leave-one-out neighbor queries in `O(k log n)` instead of a full
/// scan per query.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    n: usize,
    dist2: Vec<f64>,
    /// `order[i]` lists every `j != i` by ascending `(dist2[i][j], j)`.
    order: Vec<Vec<usize>>,
    /// `sorted[i]` holds the distances matching `order[i]`.
    sorted: Vec<Vec<f64>>,
}

impl NeighborTable {
    pub fn new(data: &Dataset) -> Self {
        let n = data.len();
        let mut dist2 = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = sq_dist(data.row(i), data.row(j));
                dist2[i * n + j] = v;
                dist2[j * n + i] = v;
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut sorted = Vec::with_capacity(n);
        for i in 0..n {
            let mut row: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist2[i * n + j], j))
                .collect();
            row.sort_unstable_by(by_distance_then_index);
            order.push(row.iter().map(|p| p.1).collect());
            sorted.push(row.iter().map(|p| p.0).collect());
        }
        Self {
            n,
            dist2,
            order,
            sorted,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        self.dist2[i * self.n + j]
    }

    /// The `k` nearest other points of training point `i` (self excluded),
    /// optionally also skipping `exclude`.
    pub fn knn_of(&self, i: usize, k: usize, exclude: Option<usize>) -> Vec<usize> {
        self.order[i]
            .iter()
            .copied()
            .filter(|&j| Some(j) != exclude)
            .take(k)
            .collect()
    }

    /// Mutual k-NN set of training point `q` treated as a query against the
    /// dataset with `q` removed.
    pub fn loo_mutual(&self, q: usize, k: usize) -> Vec<usize> {
        self.order[q][..k.min(self.n - 1)]
            .iter()
            .copied()
            .filter(|&i| {
                // Points other than i and q within distance d(i, q) of i;
                // the query loses ties, and q itself sits inside the count.
                let r2 = self.dist2(i, q);
                let within = self.sorted[i].partition_point(|&v| v <= r2);
                within - 1 < k
            })
            .collect()
    }

    /// Symmetric mutual k-NN adjacency of the training graph, self excluded.
    /// `k` beyond `n - 1` saturates to the complete graph.
    pub fn mutual_adjacency(&self, k: usize) -> Vec<bool> {
        let n = self.n;
        let mut directed = vec![false; n * n];
        for i in 0..n {
            for &j in self.order[i].iter().take(k) {
                directed[i * n + j] = true;
            }
        }
        let mut mutual = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mutual[i * n + j] = directed[i * n + j] && directed[j * n + i];
            }
        }
        mutual
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::from_1d(xs.to_vec(), ys.to_vec()).unwrap()
    }

    #[test]
    fn knn_order_and_ties() {
        let d = line(&[0.0, 1.0, 3.0], &[0.0, 1.0, 9.0]);
        let s = knn_indices(&[0.9], &d, 2, None).unwrap();
        assert_eq!(s.indices, vec![1, 0]);
        assert!((s.distances[0] - 0.1).abs() < 1e-12);
        assert!((s.distances[1] - 0.9).abs() < 1e-12);

        assert_eq!(knn_indices(&[3.0], &d, 1, None).unwrap().indices, vec![2]);

        let eq = line(&[2.0, 0.0, 1.0], &[0.0; 3]);
        assert_eq!(knn_indices(&[1.0], &eq, 3, None).unwrap().indices, vec![2, 0, 1]);
        assert_eq!(knn_indices(&[1.0], &eq, 2, Some(2)).unwrap().indices, vec![0, 1]);
    }

    #[test]
    fn knn_errors() {
        let d = line(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(knn_regress(&[0.0], &d, 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(knn_regress(&[0.0], &d, 3), Err(Error::KOutOfRange { .. })));
        assert!(knn_indices(&[0.0], &d, 2, Some(0)).is_err());
        assert!(mknn_regress(&[0.0], &d, 3).is_err());
    }

    #[test]
    fn knn_regress_examples() {
        let d = line(&[0.0, 1.0, 3.0], &[0.0, 1.0, 9.0]);
        assert_eq!(knn_regress(&[0.9], &d, 2).unwrap(), 0.5);
        assert!((knn_regress(&[100.0], &d, 3).unwrap() - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mutual_examples() {
        let d = line(&[0.0, 1.0], &[2.0, 4.0]);
        assert_eq!(mutual_neighbors(&[0.4], &d, 1).unwrap().indices, vec![0]);
        assert_eq!(mknn_regress(&[0.4], &d, 1).unwrap(), 2.0);

        let e = line(&[0.0, 0.1], &[1.0, 1.0]);
        assert!(mutual_neighbors(&[10.0], &e, 1).unwrap().is_empty());
        assert_eq!(mknn_regress(&[10.0], &e, 1).unwrap(), 0.0);

        let f = line(&[0.0, 0.1, 5.0, -3.0], &[1.0, 2.0, 3.0, 4.0]);
        let all = mutual_neighbors(&[1.0], &f, 4).unwrap();
        let mut idx = all.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn query_loses_distance_ties() {
        // Point 1's nearest other point (0) and the query (2) are both at 1.
        let d = line(&[0.0, 1.0], &[0.0, 0.0]);
        assert!(mutual_neighbors(&[2.0], &d, 1).unwrap().is_empty());
    }

    #[test]
    fn table_matches_direct_leave_one_out() {
        let xs = [0.0, 0.2, 0.4, 0.7, 1.5, 1.6, 3.0, 3.0];
        let d = line(&xs, &[0.0; 8]);
        let t = NeighborTable::new(&d);
        for q in 0..d.len() {
            let loo = d.without(q).unwrap();
            for k in 1..d.len() {
                let direct: Vec<usize> = mutual_neighbors(d.row(q), &loo, k)
                    .unwrap()
                    .indices
                    .into_iter()
                    .map(|i| if i >= q { i + 1 } else { i })
                    .collect();
                assert_eq!(t.loo_mutual(q, k), direct, "q = {q}, k = {k}");
                let knn: Vec<usize> = knn_indices(d.row(q), &d, k, Some(q)).unwrap().indices;
                assert_eq!(t.knn_of(q, k, None), knn);
            }
        }
    }

    #[test]
    fn mutual_adjacency_is_symmetric_without_self_loops() {
        let d = line(&[0.0, 0.5, 1.0, 4.0, 4.2], &[0.0; 5]);
        let t = NeighborTable::new(&d);
        for k in 1..6 {
            let a = t.mutual_adjacency(k);
            for i in 0..5 {
                assert!(!a[i * 5 + i]);
                for j in 0..5 {
                    assert_eq!(a[i * 5 + j], a[j * 5 + i]);
                }
            }
        }
        // k = 1: 0-1 mutual (1's tie between 0 and 2 goes to 0), 3-4 mutual.
        let a = t.mutual_adjacency(1);
        let edges: Vec<(usize, usize)> = (0..5)
            .flat_map(|i| (i + 1..5).map(move |j| (i, j)))
            .filter(|&(i, j)| a[i * 5 + j])
            .collect();
        assert_eq!(edges, vec![(0, 1), (3, 4)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset() -> impl Strategy<Value = (Dataset, Vec<f64>)> {
            (1usize..3).prop_flat_map(|d| {
                (
                    prop::collection::vec(
                        (prop::collection::vec(-5.0f64..5.0, d), -10.0f64..10.0),
                        1..25,
                    ),
                    prop::collection::vec(-6.0f64..6.0, d),
                )
                    .prop_map(|(pts, q)| {
                        let (rows, ys): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
                        (Dataset::from_rows(&rows, ys).unwrap(), q)
                    })
            })
        }

        proptest! {
            #[test]
            fn mutual_subset_of_knn((data, q) in dataset(), kf in 0.0f64..1.0) {
                let k = 1 + (kf * (data.len() - 1) as f64) as usize;
                let nk = knn_indices(&q, &data, k, None).unwrap();
                let mk = mutual_neighbors(&q, &data, k).unwrap();
                prop_assert!(mk.len() <= k);
                prop_assert!(mk.indices.iter().all(|i| nk.contains(*i)));
                prop_assert!(nk.distances.windows(2).all(|w| w[0] <= w[1]));
            }

            #[test]
            fn knn_sets_grow_monotonically((data, q) in dataset()) {
                for k in 1..data.len() {
                    let a = knn_indices(&q, &data, k, None).unwrap();
                    let b = knn_indices(&q, &data, k + 1, None).unwrap();
                    prop_assert_eq!(&a.indices[..], &b.indices[..k]);
                }
            }

            #[test]
            fn estimates_stay_in_target_range((data, q) in dataset(), kf in 0.0f64..1.0) {
                let k = 1 + (kf * (data.len() - 1) as f64) as usize;
                let lo = data.targets().iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = data.targets().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let m = knn_regress(&q, &data, k).unwrap();
                prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
                if !mutual_neighbors(&q, &data, k).unwrap().is_empty() {
                    let m = mknn_regress(&q, &data, k).unwrap();
                    prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
                }
            }

            #[test]
            fn relabeling_preserves_estimates((data, q) in dataset(), kf in 0.0f64..1.0, seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let n = data.len();
                let k = 1 + (kf * (n - 1) as f64) as usize;
                let mut dists: Vec<f64> = data.rows().map(|r| sq_dist(r, &q)).collect();
                for i in 0..n {
                    for j in (i + 1)..n {
                        dists.push(sq_dist(data.row(i), data.row(j)));
                    }
                }
                dists.sort_by(f64::total_cmp);
                prop_assume!(dists.windows(2).all(|w| w[1] - w[0] > 1e-9));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let shuffled = data.subset(&perm).unwrap();
                let a = knn_regress(&q, &data, k).unwrap();
                let b = knn_regress(&q, &shuffled, k).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                let a = mknn_regress(&q, &data, k).unwrap();
                let b = mknn_regress(&q, &shuffled, k).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
