//! Sample-level acquisition signals: typicality and the boundary-proximity
//! (SUP) score.
//!
//! Typicality is the inverse mean distance to a sample's K nearest neighbours.
//! SUP is the inverse of a softmax-weighted mean distance from a sample to all
//! other cluster centers, with weights shared by every sample of the source
//! cluster and set by center-to-center distances at temperature `T`.

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, euclidean, Matrix};

/// Distances (or weighted distance sums) below this are clamped.
pub const MIN_DISTANCE: f64 = 1e-12;
/// Score assigned to a clamped distance.
pub const MAX_SCORE: f64 = 1e12;

#[inline]
fn inverse_clamped(distance: f64) -> f64 {
    if distance < MIN_DISTANCE {
        MAX_SCORE
    } else {
        1.0 / distance
    }
}

/// One score per subject, aligned with `subject_indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub subject_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.subject_indices.iter().copied().zip(self.values.iter().copied())
    }
}

fn check_indices(data: &EmbeddingSet, indices: &[usize], what: &str) -> Result<()> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Argument(format!(
            "{what} index {bad} out of range for {} samples",
            data.len()
        )));
    }
    Ok(())
}

fn check_distinct(indices: &[usize]) -> Result<()> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("subject indices must be distinct".into()));
    }
    Ok(())
}

/// Inverse mean Euclidean distance from each subject to its `k` nearest
/// neighbours in `neighbor_pool`, never counting the subject itself.
/// Ties at the k-th distance go to the lower index.
pub fn typicality(
    data: &EmbeddingSet,
    subject_indices: &[usize],
    neighbor_pool: &[usize],
    k: usize,
) -> Result<ScoreVector> {
    if k == 0 {
        return Err(Error::Argument("typicality K must be positive".into()));
    }
    check_indices(data, subject_indices, "subject")?;
    check_indices(data, neighbor_pool, "neighbor")?;
    check_distinct(subject_indices)?;

    let mut values = Vec::with_capacity(subject_indices.len());
    let mut row: Vec<(f64, usize)> = Vec::with_capacity(neighbor_pool.len());
    for &x in subject_indices {
        row.clear();
        let xp = data.point(x);
        row.extend(
            neighbor_pool
                .iter()
                .filter(|&&j| j != x)
                .map(|&j| (euclidean(xp, data.point(j)), j)),
        );
        if k > row.len() {
            return Err(Error::Argument(format!(
                "K={k} exceeds the {} neighbours available to sample {x}",
                row.len()
            )));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < row.len() {
            row.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &mut row[..k];
        nearest.sort_unstable_by(cmp);
        let mean = compensated_sum(nearest.iter().map(|p| p.0)) / k as f64;
        values.push(inverse_clamped(mean));
    }
    Ok(ScoreVector {
        subject_indices: subject_indices.to_vec(),
        values,
    })
}

/// Softmax weights from a source cluster to every other cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWeights {
    pub source_cluster: usize,
    pub temperature: f64,
    /// `(cluster id, weight)` for every cluster except the source, ascending id.
    pub weights: Vec<(usize, f64)>,
}

impl ClusterWeights {
    pub fn get(&self, cluster: usize) -> Option<f64> {
        self.weights
            .binary_search_by_key(&cluster, |&(c, _)| c)
            .ok()
            .map(|i| self.weights[i].1)
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().map(|&(_, w)| w))
    }
}

/// `w_j = exp(-|c_i - c_j| / T) / sum_k exp(-|c_i - c_k| / T)` over all `j != i`.
pub fn cluster_weights(centers: &Matrix, source: usize, temperature: f64) -> Result<ClusterWeights> {
    let n = centers.rows();
    if n < 2 {
        return Err(Error::Argument(
            "cluster weights need at least two clusters".into(),
        ));
    }
    if source >= n {
        return Err(Error::Argument(format!("source cluster {source} >= {n}")));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Argument(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let src = centers.row(source);
    let logits: Vec<(usize, f64)> = (0..n)
        .filter(|&j| j != source)
        .map(|j| (j, -euclidean(src, centers.row(j)) / temperature))
        .collect();
    let max = logits.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<(usize, f64)> = logits.iter().map(|&(j, l)| (j, (l - max).exp())).collect();
    let norm = compensated_sum(exps.iter().map(|e| e.1));
    Ok(ClusterWeights {
        source_cluster: source,
        temperature,
        weights: exps.into_iter().map(|(j, e)| (j, e / norm)).collect(),
    })
}

/// `SUP(x) = 1 / sum_j w_j |x - c_j|` for each subject, using the weights of
/// the subjects' own cluster `source`.
pub fn sup_score(
    data: &EmbeddingSet,
    subject_indices: &[usize],
    centers: &Matrix,
    source: usize,
    weights: &ClusterWeights,
) -> Result<ScoreVector> {
    if weights.source_cluster != source {
        return Err(Error::Argument(format!(
            "weights belong to cluster {}, not {source}",
            weights.source_cluster
        )));
    }
    if centers.cols() != data.dim() {
        return Err(Error::Argument("center dimensionality differs from data".into()));
    }
    if let Some(&(j, _)) = weights.weights.iter().find(|&&(j, _)| j >= centers.rows()) {
        return Err(Error::Argument(format!("weight refers to missing cluster {j}")));
    }
    check_indices(data, subject_indices, "subject")?;
    check_distinct(subject_indices)?;
    let values = subject_indices
        .iter()
        .map(|&x| {
            let xp = data.point(x);
            let weighted = compensated_sum(
                weights
                    .weights
                    .iter()
                    .map(|&(j, w)| w * euclidean(xp, centers.row(j))),
            );
            inverse_clamped(weighted)
        })
        .collect();
    Ok(ScoreVector {
        subject_indices: subject_indices.to_vec(),
        values,
    })
}
