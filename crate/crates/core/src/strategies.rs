//! Query strategies behind one entry point, [`query`].
//!
//! Cluster-based strategies (SUPClust, its ablations and TypiClust-rp) share
//! steps 1-2: k-means into `|pool| + b` clusters, then the biggest clusters
//! without labeled members. They differ in how one sample is drawn from each
//! target cluster.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, ranked_clusters, KMeansParams};
use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::{euclidean, Matrix};
use crate::pool::LabeledPool;
use crate::scoring::{cluster_weights, sup_score, typicality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Supclust,
    SupclustNoSup,
    SupclustNoTypicality,
    TypiclustRp,
    Random,
    Coreset,
    Probcover,
    Margin,
    Entropy,
    LeastConfidence,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::Supclust,
        StrategyKind::SupclustNoSup,
        StrategyKind::SupclustNoTypicality,
        StrategyKind::TypiclustRp,
        StrategyKind::Random,
        StrategyKind::Coreset,
        StrategyKind::Probcover,
        StrategyKind::Margin,
        StrategyKind::Entropy,
        StrategyKind::LeastConfidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Supclust => "supclust",
            StrategyKind::SupclustNoSup => "supclust-no-sup",
            StrategyKind::SupclustNoTypicality => "supclust-no-typicality",
            StrategyKind::TypiclustRp => "typiclust-rp",
            StrategyKind::Random => "random",
            StrategyKind::Coreset => "coreset",
            StrategyKind::Probcover => "probcover",
            StrategyKind::Margin => "margin",
            StrategyKind::Entropy => "entropy",
            StrategyKind::LeastConfidence => "least-confidence",
        }
    }

    /// Strategies that rank samples by classifier output.
    pub fn needs_model(self) -> bool {
        matches!(
            self,
            StrategyKind::Margin | StrategyKind::Entropy | StrategyKind::LeastConfidence
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
                Error::Argument(format!("unknown strategy '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Which samples serve as neighbours when computing typicality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborScope {
    /// Members of the sample's own cluster.
    #[default]
    Cluster,
    /// Every sample in the data set.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub temperature: f64,
    /// Upper bound on K; the effective K is `min(typicality_k, neighbours - 1)`.
    pub typicality_k: usize,
    pub filter_fraction: f64,
    /// Ball radius for ProbCover; `None` uses the median nearest-neighbour distance.
    pub probcover_radius: Option<f64>,
    pub neighbor_scope: NeighborScope,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            temperature: 1.0,
            typicality_k: 20,
            filter_fraction: 0.1,
            probcover_radius: None,
            neighbor_scope: NeighborScope::Cluster,
            kmeans_max_iters: 300,
            kmeans_tol: 1e-6,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.filter_fraction > 0.0 && self.filter_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "filter fraction must lie in (0, 1], got {}",
                self.filter_fraction
            )));
        }
        if self.typicality_k == 0 {
            return Err(Error::Config("typicality K must be positive".into()));
        }
        if let Some(r) = self.probcover_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("probcover radius must be positive, got {r}")));
            }
        }
        if self.kmeans_max_iters == 0 || !(self.kmeans_tol > 0.0) {
            return Err(Error::Config("k-means needs max_iters >= 1 and tol > 0".into()));
        }
        Ok(())
    }

    fn kmeans_params(&self) -> KMeansParams {
        KMeansParams {
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed: self.seed,
        }
    }
}

/// Diagnostics for one selected sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sample: usize,
    pub cluster: usize,
    pub typicality: Option<f64>,
    pub sup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub selected: Vec<usize>,
    /// Present for cluster-based strategies.
    pub per_sample_trace: Option<Vec<TraceEntry>>,
}

impl QueryResult {
    fn plain(selected: Vec<usize>) -> Self {
        Self {
            selected,
            per_sample_trace: None,
        }
    }
}

/// Select `budget` unlabeled samples.
///
/// `probabilities` is an `n x num_classes` matrix of class probabilities from
/// a classifier trained on the labeled pool; only uncertainty strategies read it.
pub fn query(
    data: &EmbeddingSet,
    pool: &LabeledPool,
    budget: usize,
    config: &StrategyConfig,
    probabilities: Option<&Matrix>,
) -> Result<QueryResult> {
    config.validate()?;
    let n = data.len();
    if budget == 0 {
        return Err(Error::Argument("query budget must be positive".into()));
    }
    if let Some(max) = pool.max_index() {
        if max >= n {
            return Err(Error::Argument(format!("labeled index {max} out of range for {n} samples")));
        }
    }
    if pool.len() + budget > n {
        return Err(Error::BudgetExhausted(format!(
            "{} labeled + {budget} requested exceeds {n} samples",
            pool.len()
        )));
    }
    match config.kind {
        StrategyKind::Supclust => cluster_query(data, pool, budget, config, Pick::MaxSup, config.filter_fraction),
        StrategyKind::SupclustNoTypicality => cluster_query(data, pool, budget, config, Pick::MaxSup, 1.0),
        StrategyKind::SupclustNoSup => {
            cluster_query(data, pool, budget, config, Pick::RandomShortlisted, config.filter_fraction)
        }
        StrategyKind::TypiclustRp => cluster_query(data, pool, budget, config, Pick::MostTypical, config.filter_fraction),
        StrategyKind::Random => Ok(QueryResult::plain(random_query(n, pool, budget, config.seed))),
        StrategyKind::Coreset => Ok(QueryResult::plain(coreset_query(data, pool, budget))),
        StrategyKind::Probcover => {
            let radius = match config.probcover_radius {
                Some(r) => r,
                None => median_nearest_neighbor_distance(data)?,
            };
            Ok(QueryResult::plain(probcover_query(data, pool, budget, radius)?))
        }
        kind @ (StrategyKind::Margin | StrategyKind::Entropy | StrategyKind::LeastConfidence) => {
            let probs = probabilities.ok_or_else(|| {
                Error::MissingModel(format!("strategy '{kind}' needs class probabilities from a trained model"))
            })?;
            Ok(QueryResult::plain(uncertainty_query(kind, probs, pool, budget)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pick {
    MaxSup,
    RandomShortlisted,
    MostTypical,
}

/// Seed offset so the ablation's per-cluster draws do not reuse the k-means stream.
const SHORTLIST_DRAW_SALT: u64 = 0x5eed_0f5u64;

/// Number of samples kept by the typicality filter.
fn shortlist_len(fraction: f64, cluster_size: usize) -> usize {
    // The epsilon absorbs representation error, e.g. 0.1 * 30 = 3.0000000000000004.
    ((fraction * cluster_size as f64 - 1e-9).ceil() as usize).max(1)
}

fn cluster_query(
    data: &EmbeddingSet,
    pool: &LabeledPool,
    budget: usize,
    config: &StrategyConfig,
    pick: Pick,
    filter_fraction: f64,
) -> Result<QueryResult> {
    let n_clusters = pool.len() + budget;
    let clustering = kmeans(data, n_clusters, &config.kmeans_params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHORTLIST_DRAW_SALT);
    let all: Vec<usize> = match config.neighbor_scope {
        NeighborScope::Global => (0..data.len()).collect(),
        NeighborScope::Cluster => Vec::new(),
    };

    let mut selected = Vec::with_capacity(budget);
    let mut trace = Vec::with_capacity(budget);
    for cluster in ranked_clusters(&clustering, pool) {
        if selected.len() == budget {
            break;
        }
        let members = clustering.members(cluster);
        let candidates: Vec<usize> = members.iter().copied().filter(|&i| !pool.contains(i)).collect();
        if candidates.is_empty() {
            continue;
        }
        let neighbors = match config.neighbor_scope {
            NeighborScope::Cluster => &members,
            NeighborScope::Global => &all,
        };
        let k = config.typicality_k.min(neighbors.len().saturating_sub(1));

        // (index, typicality) sorted by descending typicality, ascending index.
        let mut ranked: Vec<(usize, Option<f64>)> = if k == 0 {
            candidates.iter().map(|&i| (i, None)).collect()
        } else {
            typicality(data, &candidates, neighbors, k)?
                .iter()
                .map(|(i, t)| (i, Some(t)))
                .collect()
        };
        ranked.sort_by(|a, b| {
            b.1.unwrap_or(0.0)
                .total_cmp(&a.1.unwrap_or(0.0))
                .then(a.0.cmp(&b.0))
        });
        let keep = shortlist_len(filter_fraction, members.len()).min(ranked.len());
        let shortlist = &ranked[..keep];

        let (sample, typ, sup) = match pick {
            Pick::MostTypical => (shortlist[0].0, shortlist[0].1, None),
            Pick::RandomShortlisted => {
                let (i, t) = shortlist[rng.gen_range(0..shortlist.len())];
                (i, t, None)
            }
            Pick::MaxSup if clustering.num_clusters() < 2 => (shortlist[0].0, shortlist[0].1, None),
            Pick::MaxSup => {
                let weights = cluster_weights(clustering.centers(), cluster, config.temperature)?;
                let ids: Vec<usize> = shortlist.iter().map(|s| s.0).collect();
                let sups = sup_score(data, &ids, clustering.centers(), cluster, &weights)?;
                // Shortlist is already ordered by (typicality desc, index asc), so the
                // first strict maximum wins SUP ties the right way.
                let mut best = 0;
                for j in 1..ids.len() {
                    if sups.values[j] > sups.values[best] {
                        best = j;
                    }
                }
                (ids[best], shortlist[best].1, Some(sups.values[best]))
            }
        };
        selected.push(sample);
        trace.push(TraceEntry {
            sample,
            cluster,
            typicality: typ,
            sup,
        });
    }
    debug_assert_eq!(selected.len(), budget);
    Ok(QueryResult {
        selected,
        per_sample_trace: Some(trace),
    })
}

fn random_query(n: usize, pool: &LabeledPool, budget: usize, seed: u64) -> Vec<usize> {
    let unlabeled = pool.unlabeled(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, unlabeled.len(), budget)
        .into_iter()
        .map(|i| unlabeled[i])
        .collect()
}

/// Greedy k-center: repeatedly take the unlabeled point farthest from the
/// labeled and already-selected points. With nothing labeled the first pick
/// is the lowest index.
fn coreset_query(data: &EmbeddingSet, pool: &LabeledPool, budget: usize) -> Vec<usize> {
    let n = data.len();
    let mut available: Vec<bool> = (0..n).map(|i| !pool.contains(i)).collect();
    let mut min_dist = vec![f64::INFINITY; n];
    let relax = |center: usize, min_dist: &mut [f64]| {
        let c = data.point(center);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = euclidean(data.point(i), c);
            if nd < *d {
                *d = nd;
            }
        }
    };
    for l in pool.iter() {
        relax(l, &mut min_dist);
    }
    let mut selected = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best = usize::MAX;
        for i in 0..n {
            if available[i] && (best == usize::MAX || min_dist[i] > min_dist[best]) {
                best = i;
            }
        }
        available[best] = false;
        selected.push(best);
        relax(best, &mut min_dist);
    }
    selected
}

/// Median over samples of the distance to the nearest other sample.
pub fn median_nearest_neighbor_distance(data: &EmbeddingSet) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Argument("nearest-neighbour distance needs at least two samples".into()));
    }
    let mut nn: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(data.point(i), data.point(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let mid = n / 2;
    let median = if n % 2 == 1 { nn[mid] } else { 0.5 * (nn[mid - 1] + nn[mid]) };
    if median > 0.0 {
        Ok(median)
    } else {
        // Heavily duplicated data; fall back to the smallest positive distance.
        nn.into_iter()
            .find(|&d| d > 0.0)
            .ok_or_else(|| Error::Argument("all samples coincide; no usable radius".into()))
    }
}

/// Greedy maximum coverage with balls of `radius`: each pick covers the most
/// points not yet covered by the labeled or already-selected samples.
fn probcover_query(data: &EmbeddingSet, pool: &LabeledPool, budget: usize, radius: f64) -> Result<Vec<usize>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("probcover radius must be positive, got {radius}")));
    }
    let n = data.len();
    let neighbors: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(data.point(i), data.point(j)) <= radius)
                .map(|j| j as u32)
                .collect()
        })
        .collect();
    let mut covered = vec![false; n];
    let mut gain: Vec<usize> = neighbors.iter().map(Vec::len).collect();
    let cover = |center: usize, covered: &mut [bool], gain: &mut [usize]| {
        for &j in &neighbors[center] {
            let j = j as usize;
            if !covered[j] {
                covered[j] = true;
                // The ball relation is symmetric, so j's neighbours are exactly the
                // balls that contained j.
                for &i in &neighbors[j] {
                    gain[i as usize] -= 1;
                }
            }
        }
    };
    for l in pool.iter() {
        cover(l, &mut covered, &mut gain);
    }
    let mut available: Vec<bool> = (0..n).map(|i| !pool.contains(i)).collect();
    let mut selected = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best = usize::MAX;
        for i in 0..n {
            if available[i] && (best == usize::MAX || gain[i] > gain[best]) {
                best = i;
            }
        }
        available[best] = false;
        selected.push(best);
        cover(best, &mut covered, &mut gain);
    }
    Ok(selected)
}

/// Informativeness of one probability row; larger is queried first.
fn uncertainty_score(kind: StrategyKind, row: &[f64]) -> f64 {
    match kind {
        StrategyKind::Entropy => row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum(),
        StrategyKind::LeastConfidence => -row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        StrategyKind::Margin => {
            let (mut first, mut second) = (f64::NEG_INFINITY, 0.0_f64);
            for &p in row {
                if p > first {
                    second = first.max(0.0);
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            -(first - second)
        }
        other => unreachable!("{other} is not an uncertainty strategy"),
    }
}

fn uncertainty_query(
    kind: StrategyKind,
    probabilities: &Matrix,
    pool: &LabeledPool,
    budget: usize,
) -> Result<Vec<usize>> {
    let n = probabilities.rows();
    if pool.max_index().is_some_and(|m| m >= n) || pool.len() + budget > n {
        return Err(Error::Argument(format!(
            "probability matrix has {n} rows, too few for this pool and budget"
        )));
    }
    for (i, row) in probabilities.iter_rows().enumerate() {
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation {
                row: i,
                message: "probabilities must be finite and non-negative".into(),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation {
                row: i,
                message: format!("probability row sums to {sum}, not 1"),
            });
        }
    }
    let mut scored: Vec<(usize, f64)> = (0..n)
        .filter(|&i| !pool.contains(i))
        .map(|i| (i, uncertainty_score(kind, probabilities.row(i))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(budget).map(|(i, _)| i).collect())
}
