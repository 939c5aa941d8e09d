//! k-means partitioning of the embedding space and target-cluster selection.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, euclidean, squared_euclidean, Matrix};
use crate::pool::LabeledPool;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// A partition of the samples into `N` non-empty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    assignment: Vec<usize>,
    centers: Matrix,
    sizes: Vec<usize>,
    objective_history: Vec<f64>,
    converged: bool,
}

impl Clustering {
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Sum of squared distances to assigned centers, one entry per Lloyd update.
    pub fn objective_history(&self) -> &[f64] {
        &self.objective_history
    }

    /// False when `max_iters` ran out before the partition became a fixed point.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Members of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == c).then_some(i))
            .collect()
    }

    /// Build a clustering directly from an assignment; centers are member means.
    pub fn from_assignment(data: &EmbeddingSet, assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if assignment.len() != data.len() {
            return Err(Error::Argument("assignment length differs from sample count".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= n_clusters) {
            return Err(Error::Argument(format!("cluster id {bad} >= {n_clusters}")));
        }
        let sizes = cluster_sizes(&assignment, n_clusters);
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Argument(format!("cluster {empty} has no members")));
        }
        let centers = member_means(data, &assignment, &sizes);
        let objective = objective(data, &assignment, &centers);
        Ok(Self {
            assignment,
            centers,
            sizes,
            objective_history: vec![objective],
            converged: true,
        })
    }
}

fn cluster_sizes(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes
}

fn member_means(data: &EmbeddingSet, assignment: &[usize], sizes: &[usize]) -> Matrix {
    let mut centers = Matrix::zeros(sizes.len(), data.dim());
    for (i, &a) in assignment.iter().enumerate() {
        for (c, x) in centers.row_mut(a).iter_mut().zip(data.point(i)) {
            *c += x;
        }
    }
    for (c, &size) in sizes.iter().enumerate() {
        let inv = 1.0 / size as f64;
        centers.row_mut(c).iter_mut().for_each(|v| *v *= inv);
    }
    centers
}

fn objective(data: &EmbeddingSet, assignment: &[usize], centers: &Matrix) -> f64 {
    compensated_sum(
        assignment
            .iter()
            .enumerate()
            .map(|(i, &a)| squared_euclidean(data.point(i), centers.row(a))),
    )
}

/// Index of the nearest center, lowest id on ties.
pub fn nearest_center(x: &[f64], centers: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter_rows().enumerate() {
        let d = squared_euclidean(x, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means++ seeding: the first center uniformly, then proportional to squared
/// distance from the nearest chosen center.
fn init_plus_plus(data: &EmbeddingSet, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.len();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(data.point(i), data.point(first)))
        .collect();
    while chosen.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            WeightedIndex::new(&min_d2)
                .expect("weights are non-negative with positive sum")
                .sample(rng)
        } else {
            // Every remaining point duplicates a chosen center.
            (0..n).find(|&i| !is_chosen[i]).expect("k <= n")
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = squared_euclidean(data.point(i), data.point(next));
            if nd < *d {
                *d = nd;
            }
        }
    }
    data.embeddings().select_rows(&chosen)
}

/// Assign every point to its nearest center, then give each empty cluster the
/// member of the currently largest cluster that lies farthest from that
/// cluster's center. The moved point also becomes the empty cluster's center.
fn assign(data: &EmbeddingSet, centers: &mut Matrix) -> Vec<usize> {
    let k = centers.rows();
    let mut assignment: Vec<usize> = (0..data.len())
        .map(|i| nearest_center(data.point(i), centers))
        .collect();
    let mut sizes = cluster_sizes(&assignment, k);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let largest = (0..k)
            .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
            .expect("k >= 1");
        debug_assert!(sizes[largest] > 1);
        let mut far = usize::MAX;
        let mut far_d = -1.0;
        for (i, &a) in assignment.iter().enumerate() {
            if a == largest {
                let d = squared_euclidean(data.point(i), centers.row(largest));
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
        }
        assignment[far] = empty;
        sizes[largest] -= 1;
        sizes[empty] = 1;
        centers.row_mut(empty).copy_from_slice(data.point(far));
    }
    assignment
}

/// Lloyd's k-means with k-means++ initialization.
///
/// Stops once the largest center shift falls below `tol` and reassignment
/// leaves the partition unchanged, so a converged result is a fixed point with
/// every center equal to its members' mean.
pub fn kmeans(data: &EmbeddingSet, n_clusters: usize, params: &KMeansParams) -> Result<Clustering> {
    let n = data.len();
    if n_clusters == 0 {
        return Err(Error::Argument("number of clusters must be positive".into()));
    }
    if n_clusters > n {
        return Err(Error::Argument(format!(
            "cannot form {n_clusters} clusters from {n} samples"
        )));
    }
    if params.max_iters == 0 {
        return Err(Error::Argument("max_iters must be positive".into()));
    }
    if !(params.tol > 0.0) {
        return Err(Error::Argument("tol must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centers = init_plus_plus(data, n_clusters, &mut rng);
    let mut assignment = assign(data, &mut centers);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_iters {
        let sizes = cluster_sizes(&assignment, n_clusters);
        let updated = member_means(data, &assignment, &sizes);
        let shift = centers
            .iter_rows()
            .zip(updated.iter_rows())
            .map(|(a, b)| euclidean(a, b))
            .fold(0.0, f64::max);
        centers = updated;
        history.push(objective(data, &assignment, &centers));
        let mut probe = centers.clone();
        let next = assign(data, &mut probe);
        if next == assignment && shift < params.tol {
            converged = true;
            break;
        }
        if next == assignment {
            // Means are already exact; the following update has zero shift.
            continue;
        }
        assignment = next;
        centers = probe;
    }
    let sizes = cluster_sizes(&assignment, n_clusters);
    if !converged {
        centers = member_means(data, &assignment, &sizes);
    }
    Ok(Clustering {
        assignment,
        centers,
        sizes,
        objective_history: history,
        converged,
    })
}

/// All cluster ids in query priority order: clusters without labeled members
/// first, then the rest; each group by descending size, ties by ascending id.
pub fn ranked_clusters(clustering: &Clustering, pool: &LabeledPool) -> Vec<usize> {
    let k = clustering.num_clusters();
    let mut covered = vec![false; k];
    for i in pool.iter() {
        if let Some(&c) = clustering.assignment.get(i) {
            covered[c] = true;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        covered[a]
            .cmp(&covered[b])
            .then(clustering.sizes[b].cmp(&clustering.sizes[a]))
            .then(a.cmp(&b))
    });
    order
}

/// The `b` clusters to query from: the biggest clusters containing no labeled
/// sample, topped up with the biggest covered clusters when too few are clean.
pub fn select_target_clusters(
    clustering: &Clustering,
    pool: &LabeledPool,
    b: usize,
) -> Result<Vec<usize>> {
    if b == 0 {
        return Err(Error::Argument("query budget must be positive".into()));
    }
    if b > clustering.num_clusters() {
        return Err(Error::Argument(format!(
            "budget {b} exceeds cluster count {}",
            clustering.num_clusters()
        )));
    }
    if let Some(max) = pool.max_index() {
        if max >= clustering.assignment.len() {
            return Err(Error::Argument(format!("labeled index {max} out of range")));
        }
    }
    let mut order = ranked_clusters(clustering, pool);
    order.truncate(b);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[[f64; 2]]) -> EmbeddingSet {
        EmbeddingSet::unlabeled(Matrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn two_separated_pairs() {
        let data = set(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]);
        let c = kmeans(&data, 2, &KMeansParams::default()).unwrap();
        let a = c.assignment();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
        assert_eq!(c.centers().row(a[0]), &[0.0, 0.5]);
        assert_eq!(c.centers().row(a[2]), &[10.0, 0.5]);
        assert!(c.converged());
    }

    #[test]
    fn n_clusters_equals_n() {
        let data = set(&[[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [5.0, 5.0], [2.0, 2.0]]);
        let c = kmeans(&data, 5, &KMeansParams { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(c.sizes(), &[1; 5]);
        for i in 0..5 {
            assert_eq!(c.centers().row(c.assignment()[i]), data.point(i));
        }
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let data = set(&[[1.0, 1.0]; 6]);
        let c = kmeans(&data, 4, &KMeansParams::default()).unwrap();
        assert!(c.sizes().iter().all(|&s| s >= 1));
        assert_eq!(c.sizes().iter().sum::<usize>(), 6);
    }

    #[test]
    fn argument_errors() {
        let data = set(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(kmeans(&data, 0, &KMeansParams::default()), Err(Error::Argument(_))));
        assert!(matches!(kmeans(&data, 3, &KMeansParams::default()), Err(Error::Argument(_))));
    }

    fn sized(sizes: &[usize]) -> (EmbeddingSet, Clustering) {
        let mut rows = Vec::new();
        let mut assignment = Vec::new();
        for (c, &s) in sizes.iter().enumerate() {
            for k in 0..s {
                rows.push([c as f64 * 100.0, k as f64]);
                assignment.push(c);
            }
        }
        let data = set(&rows);
        let cl = Clustering::from_assignment(&data, assignment, sizes.len()).unwrap();
        (data, cl)
    }

    #[test]
    fn excludes_covered_cluster() {
        let (_, cl) = sized(&[5, 9, 3]);
        // index 5 is the first member of cluster 1
        let pool = LabeledPool::new([5], 17).unwrap();
        assert_eq!(select_target_clusters(&cl, &pool, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn empty_pool_orders_by_size() {
        let (_, cl) = sized(&[5, 9, 3, 9]);
        let order = select_target_clusters(&cl, &LabeledPool::empty(), 4).unwrap();
        assert_eq!(order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn all_covered_falls_back_to_biggest() {
        let (_, cl) = sized(&[5, 9, 3]);
        let pool = LabeledPool::new([0, 5, 14], 17).unwrap();
        assert_eq!(select_target_clusters(&cl, &pool, 1).unwrap(), vec![1]);
    }

    #[test]
    fn budget_above_cluster_count() {
        let (_, cl) = sized(&[2, 2]);
        assert!(matches!(
            select_target_clusters(&cl, &LabeledPool::empty(), 3),
            Err(Error::Argument(_))
        ));
    }
}
