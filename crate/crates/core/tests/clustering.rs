mod common;

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use supclust::clustering::{nearest_center, ranked_clusters};
use supclust::{kmeans, select_target_clusters, Clustering, EmbeddingSet, KMeansParams, LabeledPool, Matrix};

fn check_fixed_point(data: &EmbeddingSet, c: &Clustering) {
    let centers = c.centers();
    for i in 0..data.len() {
        let assigned = c.assignment()[i];
        let best = (0..centers.rows())
            .map(|k| dist(data.point(i), centers.row(k)))
            .fold(f64::INFINITY, f64::min);
        assert!(dist(data.point(i), centers.row(assigned)) <= best + 1e-12);
    }
    for k in 0..centers.rows() {
        let members = c.members(k);
        assert_eq!(members.len(), c.sizes()[k]);
        assert!(!members.is_empty());
        for j in 0..data.dim() {
            let mean = members.iter().map(|&i| data.point(i)[j]).sum::<f64>() / members.len() as f64;
            assert!((mean - centers.row(k)[j]).abs() <= 1e-9);
        }
    }
    for w in c.objective_history().windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "objective rose: {w:?}");
    }
}

#[test]
fn assigned_center_is_nearest_center() {
    let mut r = rng(21);
    let data = random_points(&mut r, 200, 8, 1.0);
    let c = kmeans(&data, 10, &KMeansParams::default()).unwrap();
    assert!(c.converged());
    assert_eq!(c.sizes().iter().sum::<usize>(), 200);
    check_fixed_point(&data, &c);
    // reassignment is a no-op
    for i in 0..data.len() {
        assert_eq!(nearest_center(data.point(i), c.centers()), c.assignment()[i]);
    }
}

#[test]
fn same_seed_same_clustering() {
    let mut r = rng(22);
    let data = random_points(&mut r, 120, 3, 1.0);
    let p = KMeansParams { seed: 5, ..Default::default() };
    assert_eq!(kmeans(&data, 7, &p).unwrap(), kmeans(&data, 7, &p).unwrap());
}

#[test]
fn separated_groups_survive_row_permutation() {
    let rows = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0], [20.0, 5.0], [20.0, 6.0]];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng(3));
    let permuted: Vec<[f64; 2]> = order.iter().map(|&i| rows[i]).collect();
    let groups = |data: &[[f64; 2]]| {
        let set = EmbeddingSet::unlabeled(Matrix::from_rows(data)).unwrap();
        let c = kmeans(&set, 3, &KMeansParams::default()).unwrap();
        let mut gs: Vec<Vec<[u64; 2]>> = (0..3)
            .map(|k| {
                let mut m: Vec<[u64; 2]> = c
                    .members(k)
                    .iter()
                    .map(|&i| [data[i][0].to_bits(), data[i][1].to_bits()])
                    .collect();
                m.sort();
                m
            })
            .collect();
        gs.sort();
        gs
    };
    assert_eq!(groups(&rows), groups(&permuted));
}

#[test]
fn exhaustive_target_cluster_rule() {
    // Every size profile drawn at random, every incidence pattern enumerated.
    let mut r = rng(23);
    for n_clusters in 1..=6usize {
        for _ in 0..4 {
            let sizes: Vec<usize> = (0..n_clusters).map(|_| r.gen_range(1..=4)).collect();
            let mut rows = Vec::new();
            let mut assignment = Vec::new();
            let mut first_member = Vec::new();
            for (c, &s) in sizes.iter().enumerate() {
                first_member.push(rows.len());
                for k in 0..s {
                    rows.push([c as f64 * 50.0, k as f64]);
                    assignment.push(c);
                }
            }
            let data = EmbeddingSet::unlabeled(Matrix::from_rows(&rows)).unwrap();
            let cl = Clustering::from_assignment(&data, assignment, n_clusters).unwrap();
            for mask in 0u32..(1 << n_clusters) {
                let covered: Vec<bool> = (0..n_clusters).map(|c| mask >> c & 1 == 1).collect();
                let pool = LabeledPool::new(
                    (0..n_clusters).filter(|&c| covered[c]).map(|c| first_member[c]),
                    data.len(),
                )
                .unwrap();
                assert_eq!(ranked_clusters(&cl, &pool), target_clusters_oracle(&sizes, &covered, n_clusters));
                for b in 1..=n_clusters {
                    let got = select_target_clusters(&cl, &pool, b).unwrap();
                    assert_eq!(got, target_clusters_oracle(&sizes, &covered, b));
                }
            }
        }
    }
}
