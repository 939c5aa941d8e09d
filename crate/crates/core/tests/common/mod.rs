//! Brute-force reference computations shared by the integration tests. These
//! deliberately avoid the library's kernels.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supclust::{EmbeddingSet, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> EmbeddingSet {
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-scale..scale)).collect();
    EmbeddingSet::unlabeled(Matrix::from_vec(n, d, data)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Typicality by sorting the full distance row of each subject.
pub fn typicality_oracle(data: &EmbeddingSet, subjects: &[usize], pool: &[usize], k: usize) -> Vec<f64> {
    subjects
        .iter()
        .map(|&x| {
            let mut row: Vec<f64> = pool
                .iter()
                .filter(|&&j| j != x)
                .map(|&j| dist(data.point(x), data.point(j)))
                .collect();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean = row[..k].iter().sum::<f64>() / k as f64;
            1.0 / mean
        })
        .collect()
}

/// Softmax weights evaluated term by term, without max subtraction.
pub fn weights_oracle(centers: &Matrix, source: usize, t: f64) -> Vec<(usize, f64)> {
    let others: Vec<usize> = (0..centers.rows()).filter(|&j| j != source).collect();
    let denom: f64 = others
        .iter()
        .map(|&k| (-dist(centers.row(source), centers.row(k)) / t).exp())
        .sum();
    others
        .iter()
        .map(|&j| (j, (-dist(centers.row(source), centers.row(j)) / t).exp() / denom))
        .collect()
}

pub fn sup_oracle(x: &[f64], centers: &Matrix, weights: &[(usize, f64)]) -> f64 {
    let mut s = 0.0;
    for &(j, w) in weights {
        s += w * dist(x, centers.row(j));
    }
    1.0 / s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Reference target-cluster rule: biggest clean clusters, then biggest covered.
pub fn target_clusters_oracle(sizes: &[usize], covered: &[bool], b: usize) -> Vec<usize> {
    let mut clean: Vec<usize> = (0..sizes.len()).filter(|&c| !covered[c]).collect();
    let mut dirty: Vec<usize> = (0..sizes.len()).filter(|&c| covered[c]).collect();
    // stable sort keeps ascending id among equal sizes
    clean.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    dirty.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    clean.into_iter().chain(dirty).take(b).collect()
}

/// Well-separated 2-D Gaussian blobs; returns data and the true blob centers.
pub fn blobs_2d(rng: &mut ChaCha8Rng, centers: &[[f64; 2]], per_blob: usize, std: f64) -> EmbeddingSet {
    use rand_distr::{Distribution, Normal};
    let noise = Normal::new(0.0, std).unwrap();
    let mut rows = Vec::new();
    for c in centers {
        for _ in 0..per_blob {
            rows.push([c[0] + noise.sample(rng), c[1] + noise.sample(rng)]);
        }
    }
    EmbeddingSet::unlabeled(Matrix::from_rows(&rows)).unwrap()
}
