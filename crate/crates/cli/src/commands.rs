use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use supclust::dataset::{CsvLabels, Normalization};
use supclust::harness::Regime;
use supclust::strategies::NeighborScope;
use supclust::{
    load_embeddings, make_blobs, query as run_query, run_al_loop, summarize_runs, ALRunRecord, BlobParams,
    BudgetSchedule, EmbeddingSet, Format, ImbalanceProfile, LabeledPool, ProbeHyper, RunOptions, StrategyConfig,
    StrategyKind, SummaryRow,
};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::output::{sha256_file, sha256_hex, write_atomic};
use crate::{FileFormat, GenDataArgs, QueryArgs, ReportArgs, SimulateArgs, StrategyArgs};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.csv";
const RECORD_PREFIX: &str = "run_";

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn load_dataset(path: &Path, normalize: &str) -> CliResult<EmbeddingSet> {
    let data = load_embeddings(path, Format::from_path(path))?;
    Ok(data.normalized(normalize.parse::<Normalization>()?))
}

fn strategy_config(kind: StrategyKind, args: &StrategyArgs, seed: u64) -> CliResult<StrategyConfig> {
    let mut cfg = StrategyConfig::new(kind).with_seed(seed);
    cfg.temperature = args.temperature;
    cfg.typicality_k = args.typicality_k;
    cfg.filter_fraction = args.filter_fraction;
    cfg.probcover_radius = args.probcover_radius;
    cfg.neighbor_scope = match args.neighbor_scope.as_str() {
        "global" => NeighborScope::Global,
        _ => NeighborScope::Cluster,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    if args.classes < 2 {
        return Err(config_err("--classes must be at least 2"));
    }
    if args.max_per_class == 0 || args.dim == 0 {
        return Err(config_err("--max-per-class and --dim must be at least 1"));
    }
    let profile = ImbalanceProfile::new(args.classes, args.max_per_class, args.imbalance);
    let params = BlobParams {
        dim: args.dim,
        center_spread: args.center_spread,
        cluster_std: args.cluster_std,
        seed: args.seed,
    };
    let data = make_blobs(&profile, &params)?;
    let format = match args.format {
        Some(FileFormat::Csv) => Format::Csv,
        Some(FileFormat::Raw) => Format::RawF32,
        None => Format::from_path(&args.output),
    };
    let bytes = match format {
        Format::Csv => data.to_csv_string().into_bytes(),
        Format::RawF32 => data.to_raw_bytes(),
    };
    write_atomic(&args.output, &bytes)?;
    let manifest = RunManifest::new(
        "gen-data",
        json!({
            "profile": profile,
            "blobs": params,
            "format": format,
            "class_counts": data.class_counts(),
        }),
        sha256_hex(&bytes),
        vec![args.seed],
    );
    let mut manifest_path = args.output.clone().into_os_string();
    manifest_path.push(".manifest.json");
    write_atomic(Path::new(&manifest_path), manifest.to_json().as_bytes())
}

fn read_labeled(path: &Path, n: usize) -> CliResult<LabeledPool> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut indices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let i: usize = line.parse().map_err(|_| {
            CliError::Input(format!("{}:{}: '{line}' is not a sample index", path.display(), lineno + 1))
        })?;
        indices.push(i);
    }
    Ok(LabeledPool::new(indices, n)?)
}

fn read_probabilities(path: &Path, n: usize) -> CliResult<supclust::Matrix> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let probs = EmbeddingSet::from_csv_str(&text, CsvLabels::Absent)?;
    if probs.len() != n {
        return Err(config_err(format!(
            "probability file has {} rows but the dataset has {n} samples",
            probs.len()
        )));
    }
    Ok(probs.embeddings().clone())
}

pub fn query(args: &QueryArgs) -> CliResult<()> {
    let data = load_dataset(&args.dataset, &args.strategy_args.normalize)?.without_labels();
    let kind: StrategyKind = args.strategy.parse()?;
    let cfg = strategy_config(kind, &args.strategy_args, args.seed)?;
    let pool = match &args.labeled {
        Some(p) => read_labeled(p, data.len())?,
        None => LabeledPool::empty(),
    };
    let probs = match &args.proba_file {
        Some(p) => Some(read_probabilities(p, data.len())?),
        None => None,
    };
    let result = run_query(&data, &pool, args.budget, &cfg, probs.as_ref())?;
    let mut out = String::new();
    for i in &result.selected {
        out.push_str(&format!("{i}\n"));
    }
    match &args.output {
        Some(path) => write_atomic(path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn worker_pool() -> CliResult<rayon::ThreadPool> {
    let threads = match std::env::var("SUPCLUST_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| config_err(format!("SUPCLUST_THREADS must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| config_err(format!("cannot start worker pool: {e}")))
}

fn record_file_name(kind: StrategyKind, seed: u64) -> String {
    format!("{RECORD_PREFIX}{}_seed{seed}.json", kind.name())
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    strategy: &'a str,
    step: usize,
    labeled_count: usize,
    mean_acc: f64,
    stderr_acc: f64,
}

fn summary_csv(rows: &[SummaryRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(SummaryCsvRow {
            strategy: r.strategy.name(),
            step: r.step,
            labeled_count: r.labeled_count,
            mean_acc: r.mean_acc,
            stderr_acc: r.stderr_acc,
        })
        .map_err(|e| CliError::io("summary.csv", e))?;
    }
    w.into_inner().map_err(|e| CliError::io("summary.csv", e))
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let data = load_dataset(&args.dataset, &args.strategy_args.normalize)?;
    let num_classes = data
        .num_classes()
        .ok_or_else(|| config_err("simulation needs a dataset with labels"))?;
    let kinds: Vec<StrategyKind> = args
        .strategies
        .iter()
        .map(|s| s.parse::<StrategyKind>())
        .collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(config_err("no strategies given"));
    }
    if args.seeds == 0 {
        return Err(config_err("--seeds must be at least 1"));
    }
    let regime: Regime = args.regime.parse()?;
    let schedule = BudgetSchedule::for_regime(regime, num_classes, args.steps, args.step_size)?;
    let probe = ProbeHyper {
        learning_rate: args.lr,
        epochs: args.epochs,
        l2: args.l2,
    };
    let seeds: Vec<u64> = (args.seed_base..args.seed_base + args.seeds).collect();
    let mut jobs = Vec::new();
    for &kind in &kinds {
        let cfg = strategy_config(kind, &args.strategy_args, 0)?;
        for &seed in &seeds {
            jobs.push((cfg.clone(), seed));
        }
    }
    let options = |seed| RunOptions {
        seed,
        test_fraction: args.test_fraction,
        probe,
    };
    let records: Vec<ALRunRecord> = worker_pool()?
        .install(|| {
            jobs.par_iter()
                .map(|(cfg, seed)| run_al_loop(&data, cfg, &schedule, &options(*seed)))
                .collect::<Result<Vec<_>, _>>()
        })?;
    let summary = summarize_runs(&records)?;

    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(args.out_dir.display(), e))?;
    for r in &records {
        let mut json = serde_json::to_string_pretty(r).expect("records serialize");
        json.push('\n');
        write_atomic(&args.out_dir.join(record_file_name(r.strategy, r.seed)), json.as_bytes())?;
    }
    write_atomic(&args.out_dir.join(SUMMARY_FILE), &summary_csv(&summary)?)?;
    let manifest = RunManifest::new(
        "simulate",
        json!({
            "dataset": args.dataset,
            "strategies": kinds,
            "schedule": schedule,
            "test_fraction": args.test_fraction,
            "probe": probe,
            "strategy": strategy_config(kinds[0], &args.strategy_args, 0)?,
            "normalize": args.strategy_args.normalize,
        }),
        sha256_file(&args.dataset)?,
        seeds,
    );
    write_atomic(&args.out_dir.join(MANIFEST_FILE), manifest.to_json().as_bytes())
}

fn record_paths(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir.display(), e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with(RECORD_PREFIX) && name.ends_with(".json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

#[derive(Serialize)]
struct LongRow<'a> {
    strategy: &'a str,
    step: usize,
    labeled_count: usize,
    metric: &'a str,
    value: f64,
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    if let Some(dataset) = &args.verify_dataset {
        let path = args.run_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let actual = sha256_file(dataset)?;
        if manifest.dataset_sha256 != actual {
            return Err(config_err(format!(
                "dataset checksum mismatch: runs used {}, {} is {actual}",
                manifest.dataset_sha256,
                dataset.display()
            )));
        }
    }
    let paths = record_paths(&args.run_dir)?;
    if paths.is_empty() {
        return Err(config_err(format!("no records found in {}", args.run_dir.display())));
    }
    let mut records = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
        let r: ALRunRecord =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        records.push(r);
    }
    // Strategy order follows the manifest when present, so the report lines up with summary.csv.
    let order: Vec<StrategyKind> = fs::read_to_string(args.run_dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
        .and_then(|m| serde_json::from_value(m.config["strategies"].clone()).ok())
        .unwrap_or_default();
    let rank = |k: StrategyKind| order.iter().position(|&o| o == k).unwrap_or(order.len());
    records.sort_by(|a, b| {
        rank(a.strategy)
            .cmp(&rank(b.strategy))
            .then(a.strategy.cmp(&b.strategy))
            .then(a.seed.cmp(&b.seed))
    });
    let rows = summarize_runs(&records)?;

    println!(
        "{:<24} {:>4} {:>8} {:>9} {:>9} {:>9} {:>5}",
        "strategy", "step", "labeled", "mean_acc", "stderr", "class_acc", "runs"
    );
    for r in &rows {
        println!(
            "{:<24} {:>4} {:>8} {:>9.4} {:>9.4} {:>9.4} {:>5}",
            r.strategy.name(),
            r.step,
            r.labeled_count,
            r.mean_acc,
            r.stderr_acc,
            r.mean_per_class_acc,
            r.runs
        );
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        let metrics = [
            ("mean_acc", r.mean_acc),
            ("stderr_acc", r.stderr_acc),
            ("mean_per_class_acc", r.mean_per_class_acc),
            ("stderr_per_class_acc", r.stderr_per_class_acc),
            ("runs", r.runs as f64),
        ];
        for (metric, value) in metrics {
            w.serialize(LongRow {
                strategy: r.strategy.name(),
                step: r.step,
                labeled_count: r.labeled_count,
                metric,
                value,
            })
            .map_err(|e| CliError::io(REPORT_FILE, e))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(REPORT_FILE, e))?;
    let out = args.output.clone().unwrap_or_else(|| args.run_dir.join(REPORT_FILE));
    write_atomic(&out, &bytes)
}
