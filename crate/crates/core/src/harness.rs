//! Simulated active-learning runs: query, reveal ground-truth labels, retrain a
//! linear probe on the labeled embeddings, evaluate on a held-out split.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::pool::LabeledPool;
use crate::strategies::{query, StrategyConfig, StrategyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Tiny,
    Small,
    Custom,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Regime::Tiny),
            "small" => Ok(Regime::Small),
            "custom" => Ok(Regime::Custom),
            other => Err(Error::Argument(format!("unknown regime '{other}' (tiny|small|custom)"))),
        }
    }
}

/// Per-step query size and number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    pub regime: Regime,
    pub step_size: usize,
    pub num_steps: usize,
}

impl BudgetSchedule {
    /// One sample per class per step.
    pub fn tiny(num_classes: usize, num_steps: usize) -> Self {
        Self {
            regime: Regime::Tiny,
            step_size: num_classes,
            num_steps,
        }
    }

    /// Five samples per class per step.
    pub fn small(num_classes: usize, num_steps: usize) -> Self {
        Self {
            regime: Regime::Small,
            step_size: 5 * num_classes,
            num_steps,
        }
    }

    pub fn custom(step_size: usize, num_steps: usize) -> Self {
        Self {
            regime: Regime::Custom,
            step_size,
            num_steps,
        }
    }

    pub fn for_regime(regime: Regime, num_classes: usize, num_steps: usize, custom_step: Option<usize>) -> Result<Self> {
        match regime {
            Regime::Tiny => Ok(Self::tiny(num_classes, num_steps)),
            Regime::Small => Ok(Self::small(num_classes, num_steps)),
            Regime::Custom => custom_step
                .map(|s| Self::custom(s, num_steps))
                .ok_or_else(|| Error::Config("custom regime needs an explicit step size".into())),
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.step_size == 0 || self.num_steps == 0 {
            return Err(Error::Config("step size and step count must be positive".into()));
        }
        let expected = match self.regime {
            Regime::Tiny => Some(num_classes),
            Regime::Small => Some(5 * num_classes),
            Regime::Custom => None,
        };
        if let Some(e) = expected {
            if e != self.step_size {
                return Err(Error::Config(format!(
                    "{:?} regime with {num_classes} classes requires step size {e}, got {}",
                    self.regime, self.step_size
                )));
            }
        }
        Ok(())
    }

    pub fn labeled_counts(&self) -> Vec<usize> {
        (1..=self.num_steps).map(|s| s * self.step_size).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression over frozen embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub trained_on: Vec<usize>,
    /// Training objective before each epoch's update, plus the final value.
    pub loss_history: Vec<f64>,
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}

fn class_probabilities(weights: &Matrix, bias: &[f64], x: &[f64]) -> Vec<f64> {
    let mut logits: Vec<f64> = weights
        .iter_rows()
        .zip(bias)
        .map(|(w, b)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
        .collect();
    softmax_in_place(&mut logits);
    logits
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` (bias unpenalized), and its
/// gradient with respect to the weights and the bias.
pub fn probe_objective(
    weights: &Matrix,
    bias: &[f64],
    features: &Matrix,
    labels: &[usize],
    l2: f64,
) -> (f64, Matrix, Vec<f64>) {
    let m = features.rows() as f64;
    let (classes, dim) = (weights.rows(), weights.cols());
    let mut grad_w = Matrix::zeros(classes, dim);
    let mut grad_b = vec![0.0; classes];
    let mut loss = 0.0;
    for (x, &y) in features.iter_rows().zip(labels) {
        let p = class_probabilities(weights, bias, x);
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for c in 0..classes {
            let residual = p[c] - f64::from(u8::from(c == y));
            grad_b[c] += residual;
            for (g, xi) in grad_w.row_mut(c).iter_mut().zip(x) {
                *g += residual * xi;
            }
        }
    }
    loss /= m;
    grad_b.iter_mut().for_each(|g| *g /= m);
    let penalty: f64 = weights.as_slice().iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * penalty;
    for c in 0..classes {
        let w = weights.row(c).to_vec();
        for (g, wi) in grad_w.row_mut(c).iter_mut().zip(w) {
            *g = *g / m + l2 * wi;
        }
    }
    (loss, grad_w, grad_b)
}

impl LinearProbe {
    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        class_probabilities(&self.weights, &self.bias, x)
    }

    /// `n x num_classes` probability matrix.
    pub fn predict_proba(&self, data: &EmbeddingSet) -> Matrix {
        let k = self.num_classes();
        let mut out = Vec::with_capacity(data.len() * k);
        for i in 0..data.len() {
            out.extend(self.predict_proba_row(data.point(i)));
        }
        Matrix::from_vec(data.len(), k, out)
    }

    /// Argmax class, lowest id on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba_row(x);
        let mut best = 0;
        for c in 1..p.len() {
            if p[c] > p[best] {
                best = c;
            }
        }
        best
    }
}

/// Full-batch gradient descent from zero initialization.
///
/// Rows of classes absent from the pool are frozen at zero. With a single
/// class in the pool only the bias is fit, so that class wins everywhere.
pub fn train_linear_probe(data: &EmbeddingSet, pool: &LabeledPool, hyper: &ProbeHyper) -> Result<LinearProbe> {
    if pool.is_empty() {
        return Err(Error::Argument("cannot train a probe on an empty pool".into()));
    }
    let labels = data
        .labels()
        .ok_or_else(|| Error::MissingLabels("probe training needs labeled data".into()))?;
    let classes = data.num_classes().expect("labeled sets carry a class count");
    if let Some(bad) = pool.iter().find(|&i| i >= data.len()) {
        return Err(Error::Argument(format!("pool index {bad} out of range")));
    }
    if !(hyper.learning_rate > 0.0) || hyper.epochs == 0 || hyper.l2 < 0.0 {
        return Err(Error::Config("probe needs learning_rate > 0, epochs >= 1, l2 >= 0".into()));
    }
    let idx: Vec<usize> = pool.iter().collect();
    let features = data.embeddings().select_rows(&idx);
    let targets: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let mut present = vec![false; classes];
    targets.iter().for_each(|&y| present[y] = true);
    let train_weights = present.iter().filter(|&&p| p).count() > 1;

    let mut weights = Matrix::zeros(classes, data.dim());
    let mut bias = vec![0.0; classes];
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    for _ in 0..hyper.epochs {
        let (loss, gw, gb) = probe_objective(&weights, &bias, &features, &targets, hyper.l2);
        history.push(loss);
        for c in (0..classes).filter(|&c| present[c]) {
            bias[c] -= hyper.learning_rate * gb[c];
            if train_weights {
                for (w, g) in weights.row_mut(c).iter_mut().zip(gw.row(c)) {
                    *w -= hyper.learning_rate * g;
                }
            }
        }
    }
    history.push(probe_objective(&weights, &bias, &features, &targets, hyper.l2).0);
    Ok(LinearProbe {
        weights,
        bias,
        trained_on: idx,
        loss_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub labeled_count: usize,
    pub test_accuracy: f64,
    /// One entry per class present in the test split.
    pub per_class_accuracy: Vec<ClassAccuracy>,
    pub mean_per_class_accuracy: f64,
    /// Dataset indices queried at this step.
    pub queried: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALRunRecord {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub schedule: BudgetSchedule,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub test_fraction: f64,
    pub probe: ProbeHyper,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            test_fraction: 0.2,
            probe: ProbeHyper::default(),
        }
    }
}

/// SplitMix64 finalizer; derives independent stream seeds from one run seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SPLIT_STREAM: u64 = 0;
const STEP_STREAM_BASE: u64 = 1_000;

/// Seeded stratified split into (train, test), both ascending. Each class
/// contributes `round(fraction * count)` samples to the test side.
pub fn stratified_split(data: &EmbeddingSet, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::MissingLabels("stratified split needs labels".into()))?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {fraction}")));
    }
    let classes = data.num_classes().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let take = (fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..take.min(members.len())]);
    }
    if test.is_empty() {
        return Err(Error::Config("test split is empty; raise the test fraction".into()));
    }
    test.sort_unstable();
    let mut is_test = vec![false; data.len()];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..data.len()).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

fn evaluate(probe: &LinearProbe, test: &EmbeddingSet, num_classes: usize) -> (f64, Vec<ClassAccuracy>, f64) {
    let labels = test.labels().expect("test split is labeled");
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for (i, &y) in labels.iter().enumerate() {
        totals[y] += 1;
        if probe.predict(test.point(i)) == y {
            hits[y] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    let accuracy = correct as f64 / labels.len() as f64;
    let per_class: Vec<ClassAccuracy> = (0..num_classes)
        .filter(|&c| totals[c] > 0)
        .map(|c| ClassAccuracy {
            class: c,
            accuracy: hits[c] as f64 / totals[c] as f64,
        })
        .collect();
    let mean = per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
    (accuracy, per_class, mean)
}

/// One simulated run from an empty pool.
///
/// Strategies see only the training split, without labels. Each step's query
/// seed is derived from `options.seed` and the step number; uncertainty
/// strategies fall back to random selection at the first step.
pub fn run_al_loop(
    data: &EmbeddingSet,
    strategy: &StrategyConfig,
    schedule: &BudgetSchedule,
    options: &RunOptions,
) -> Result<ALRunRecord> {
    let num_classes = data
        .num_classes()
        .ok_or_else(|| Error::MissingLabels("simulation needs a labeled data set".into()))?;
    schedule.validate(num_classes)?;
    strategy.validate()?;
    let (train_idx, test_idx) = stratified_split(data, options.test_fraction, derive_seed(options.seed, SPLIT_STREAM))?;
    let total = schedule.step_size * schedule.num_steps;
    if total > train_idx.len() {
        return Err(Error::BudgetExhausted(format!(
            "schedule needs {total} labels but only {} training samples exist",
            train_idx.len()
        )));
    }
    let train = data.subset(&train_idx);
    let visible = train.without_labels();
    let test = data.subset(&test_idx);

    let mut pool = LabeledPool::empty();
    let mut probe: Option<LinearProbe> = None;
    let mut steps = Vec::with_capacity(schedule.num_steps);
    for step in 1..=schedule.num_steps {
        let mut cfg = strategy.clone();
        cfg.seed = derive_seed(options.seed, STEP_STREAM_BASE + step as u64);
        let probabilities = match (&probe, strategy.kind.needs_model()) {
            (Some(p), true) => Some(p.predict_proba(&visible)),
            _ => None,
        };
        if strategy.kind.needs_model() && probabilities.is_none() {
            cfg.kind = StrategyKind::Random;
        }
        let result = query(&visible, &pool, schedule.step_size, &cfg, probabilities.as_ref())?;
        pool.extend(result.selected.iter().copied());
        let trained = train_linear_probe(&train, &pool, &options.probe)?;
        let (test_accuracy, per_class_accuracy, mean_per_class_accuracy) = evaluate(&trained, &test, num_classes);
        steps.push(StepRecord {
            step,
            labeled_count: pool.len(),
            test_accuracy,
            per_class_accuracy,
            mean_per_class_accuracy,
            queried: result.selected.iter().map(|&i| train_idx[i]).collect(),
        });
        probe = Some(trained);
    }
    Ok(ALRunRecord {
        strategy: strategy.kind,
        seed: options.seed,
        schedule: *schedule,
        steps,
    })
}

/// Mean and standard error of one strategy at one step across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: StrategyKind,
    pub step: usize,
    pub labeled_count: usize,
    pub runs: usize,
    pub mean_acc: f64,
    pub stderr_acc: f64,
    pub mean_per_class_acc: f64,
    pub stderr_per_class_acc: f64,
}

/// `(mean, sample std / sqrt(m))`; the standard error of a single value is 0.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Per strategy (in order of first appearance) and step: mean and standard
/// error of test accuracy across records.
pub fn summarize_runs(records: &[ALRunRecord]) -> Result<Vec<SummaryRow>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Argument("no records to summarize".into()))?;
    for r in records {
        if r.steps.len() != r.schedule.num_steps {
            return Err(Error::Config(format!(
                "record for {} seed {} has {} steps but its schedule declares {}",
                r.strategy,
                r.seed,
                r.steps.len(),
                r.schedule.num_steps
            )));
        }
        if r.schedule != first.schedule || r.steps.len() != first.steps.len() {
            return Err(Error::Config(format!(
                "mixed schedules: {:?} with {} steps vs {:?} with {} steps",
                first.schedule,
                first.steps.len(),
                r.schedule,
                r.steps.len()
            )));
        }
    }
    let mut strategies: Vec<StrategyKind> = Vec::new();
    for r in records {
        if !strategies.contains(&r.strategy) {
            strategies.push(r.strategy);
        }
    }
    let mut rows = Vec::new();
    for s in strategies {
        let runs: Vec<&ALRunRecord> = records.iter().filter(|r| r.strategy == s).collect();
        for (k, step) in first.steps.iter().enumerate() {
            let acc: Vec<f64> = runs.iter().map(|r| r.steps[k].test_accuracy).collect();
            let pc: Vec<f64> = runs.iter().map(|r| r.steps[k].mean_per_class_accuracy).collect();
            let (mean_acc, stderr_acc) = mean_and_stderr(&acc);
            let (mean_per_class_acc, stderr_per_class_acc) = mean_and_stderr(&pc);
            rows.push(SummaryRow {
                strategy: s,
                step: step.step,
                labeled_count: step.labeled_count,
                runs: runs.len(),
                mean_acc,
                stderr_acc,
                mean_per_class_acc,
                stderr_per_class_acc,
            });
        }
    }
    Ok(rows)
}
