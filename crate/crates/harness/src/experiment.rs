//! Experiment execution: deterministic seed derivation, per-repetition
//! dataset construction, the strategy x delta x repetition sweep, and
//! aggregation into a serializable report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqcopy::datagen::{
    make_moons, make_spirals, make_yinyang, standardize, LabeledDataset, Sampler,
};
use seqcopy::engine::{
    run_online, run_pure_sequential, run_sequential, run_single_pass, RunRecord, Strategy,
};
use seqcopy::metrics::{
    expected_sample_fraction, select_operational_points, MetricSummary, results_csv_header,
};
use seqcopy::oracle::{make_nn_oracle, Oracle, ToyRule};

use crate::config::{DatasetSpec, ExperimentConfig, OracleSpec, ToyName};
use crate::error::{Error, Result};

/// Deterministic seed for one labeled stream: a hash of the master seed, a
/// purpose tag, the delta bits, and the repetition index. Distinct inputs
/// give distinct seeds for all practical purposes.
pub fn derive_seed(master: u64, tag: &str, delta: f64, rep: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(delta.to_bits().to_le_bytes());
    hasher.update(rep.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Everything a single run needs, rebuilt identically for every cell of the
/// same repetition so strategies compare on the same data.
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub oracle: Oracle,
    pub sampler: Sampler,
}

fn generate_toy(name: ToyName, n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    let ds = match name {
        ToyName::Spirals => make_spirals(n, noise, seed)?,
        ToyName::Moons => make_moons(n, noise, seed)?,
        ToyName::Yinyang => make_yinyang(n, noise, seed)?,
    };
    Ok(ds)
}

/// Builds the dataset, splits, standardization, and oracle for one
/// repetition. Toy data is regenerated per repetition; CSV data is fixed and
/// only the split varies.
pub fn prepare_dataset(cfg: &ExperimentConfig, rep: u32) -> Result<PreparedData> {
    let data_seed = derive_seed(cfg.seed, "dataset", 0.0, rep);
    let split_seed = derive_seed(cfg.seed, "split", 0.0, rep);

    let (full, rule) = match &cfg.dataset {
        DatasetSpec::Toy { name, n, noise, .. } => {
            let rule = match name {
                ToyName::Spirals => ToyRule::Spirals,
                ToyName::Moons => ToyRule::Moons,
                ToyName::Yinyang => ToyRule::YinYang,
            };
            (generate_toy(*name, *n, *noise, data_seed)?, Some(rule))
        }
        DatasetSpec::Csv { path, .. } => (LabeledDataset::from_csv(path)?, None),
    };

    let (full, params) = if cfg.dataset.standardize() {
        let (ds, params) = standardize(&full)?;
        (ds, Some(params))
    } else {
        (full, None)
    };
    let (train, test) = full.split_stratified(cfg.dataset.test_fraction(), split_seed)?;

    let oracle = match cfg.oracle {
        OracleSpec::NearestNeighbor => make_nn_oracle(&train)?,
        OracleSpec::Analytic => {
            let rule = rule.ok_or_else(|| {
                Error::Config("oracle \"analytic\" only exists for toy datasets".into())
            })?;
            Oracle::analytic(rule, params)?
        }
    };

    let sampler = match &cfg.sampler {
        Some(s) => s.clone(),
        None => Sampler::standard_normal(train.dim())?,
    };
    if sampler.dim() != train.dim() {
        return Err(Error::Config(format!(
            "sampler dimension {} does not match the dataset dimension {}",
            sampler.dim(),
            train.dim()
        )));
    }

    Ok(PreparedData {
        train,
        test,
        oracle,
        sampler,
    })
}

/// Mean and sample standard deviation per curve position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CurveStats {
    /// Pointwise statistics over equally long curves.
    fn over(curves: &[Vec<f64>]) -> CurveStats {
        let len = curves.first().map_or(0, |c| c.len());
        let n = curves.len() as f64;
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for t in 0..len {
            let m = curves.iter().map(|c| c[t]).sum::<f64>() / n;
            mean[t] = m;
            if curves.len() > 1 {
                let var = curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>()
                    / (n - 1.0);
                std[t] = var.sqrt();
            }
        }
        CurveStats { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatPair {
    pub mean: f64,
    pub std: f64,
}

impl StatPair {
    fn over(values: &[f64]) -> StatPair {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        StatPair { mean, std }
    }
}

/// Aggregated statistics for one (strategy, delta) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: Strategy,
    pub delta: f64,
    pub successes: usize,
    pub failures: usize,
    pub accuracy: CurveStats,
    pub mean_rho: CurveStats,
    pub set_size: CurveStats,
    pub final_accuracy: StatPair,
    /// Absent for the single-pass baseline (no curve to integrate).
    pub conv: Option<StatPair>,
    pub eff: Option<StatPair>,
    pub expected_sample_fraction: Option<StatPair>,
}

/// One winner of the operational-point selection, described by its cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalWinner {
    pub delta: f64,
    pub accuracy: f64,
    pub conv: f64,
    pub eff: f64,
    pub expected_sample_fraction: f64,
}

/// Sequential cells within 5% of the single-pass accuracy, and the best of
/// them per criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalBlock {
    pub single_pass_accuracy: f64,
    pub qualifying_deltas: Vec<f64>,
    pub best_accuracy: OperationalWinner,
    pub best_efficiency: OperationalWinner,
    pub best_convergence: OperationalWinner,
}

/// Everything `report.json` holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub dataset: String,
    pub master_seed: u64,
    pub repetitions: usize,
    pub reproducible: bool,
    pub cells: Vec<CellReport>,
    pub operational: Option<OperationalBlock>,
    pub warnings: Vec<String>,
    /// Zero in reproducible mode.
    pub total_wall_secs: f64,
}

/// Stable file stem for one cell, e.g. `sequential_delta1e-6`.
pub fn cell_stem(strategy: Strategy, delta: f64) -> String {
    format!("{strategy}_delta{delta:e}")
}

/// Stable file stem for one run, e.g. `sequential_delta1e-6_rep003`.
pub fn run_stem(strategy: Strategy, delta: f64, rep: u32) -> String {
    format!("{}_rep{rep:03}", cell_stem(strategy, delta))
}

/// Writes via a temporary sibling plus rename, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct RunOutcome {
    strategy: Strategy,
    delta: f64,
    rep: u32,
    result: std::result::Result<Box<RunRecord>, String>,
}

fn dispatch(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    delta: f64,
    rep: u32,
) -> std::result::Result<Box<RunRecord>, String> {
    let fail = |e: Error| {
        format!("run {strategy} delta={delta:e} rep={rep} failed: {e}")
    };
    let data = prepare_dataset(cfg, rep).map_err(fail)?;
    let seed = derive_seed(cfg.seed, &strategy.to_string(), delta, rep);
    let run_cfg = cfg.run_config(strategy, delta, seed, data.sampler.clone());
    let record = match strategy {
        Strategy::Sequential => run_sequential(&run_cfg, &data.oracle, &data.test),
        Strategy::PureSequential => run_pure_sequential(&run_cfg, &data.oracle, &data.test),
        Strategy::SinglePass => run_single_pass(&run_cfg, &data.oracle, &data.test),
        Strategy::Online => run_online(&run_cfg, &data.oracle, &data.test),
    };
    record.map(Box::new).map_err(|e| fail(Error::Core(e)))
}

/// Executes the full sweep, writes per-run CSVs and summaries plus
/// `results.csv`, `report.json`, and (when selection succeeds)
/// `operational.json` under `out_dir`, and returns the aggregate report.
///
/// One failed run never aborts the sweep: it becomes a warning and the cell
/// aggregates over the remaining repetitions.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<AggregateReport> {
    let started = Instant::now();
    cfg.validate()?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut jobs: Vec<(Strategy, f64, u32)> = Vec::new();
    for &strategy in &cfg.run.strategies {
        for &delta in &cfg.run.deltas {
            for rep in 0..cfg.repetitions as u32 {
                jobs.push((strategy, delta, rep));
            }
        }
    }

    let execute = || -> Vec<RunOutcome> {
        jobs.par_iter()
            .map(|&(strategy, delta, rep)| RunOutcome {
                strategy,
                delta,
                rep,
                result: dispatch(cfg, strategy, delta, rep),
            })
            .collect()
    };
    let mut outcomes = match workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(format!("could not build worker pool: {e}")))?;
            pool.install(execute)
        }
        None => execute(),
    };
    // par_iter preserves order, but sort anyway so emission order never
    // depends on the execution backend.
    outcomes.sort_by(|a, b| {
        (a.strategy.to_string(), a.delta.to_bits(), a.rep).cmp(&(
            b.strategy.to_string(),
            b.delta.to_bits(),
            b.rep,
        ))
    });

    let dataset = cfg.dataset.label();
    let mut warnings: Vec<String> = Vec::new();
    let mut results_rows: Vec<String> = Vec::new();

    // Per-run files and summary rows.
    for outcome in &mut outcomes {
        match &mut outcome.result {
            Ok(record) => {
                if cfg.reproducible {
                    record.wall_time_secs = 0.0;
                }
                let stem = run_stem(outcome.strategy, outcome.delta, outcome.rep);
                let csv_path = runs_dir.join(format!("{stem}.csv"));
                record.write_csv(&csv_path)?;
                let json = serde_json::to_string_pretty(&record.summary())?;
                write_atomic(&runs_dir.join(format!("{stem}.json")), json.as_bytes())?;
                if let Ok(summary) = MetricSummary::from_record(dataset.clone(), record) {
                    results_rows.push(summary.csv_row());
                }
            }
            Err(message) => warnings.push(message.clone()),
        }
    }

    let mut results_csv = String::from(results_csv_header());
    results_csv.push('\n');
    for row in &results_rows {
        results_csv.push_str(row);
        results_csv.push('\n');
    }
    write_atomic(&out_dir.join("results.csv"), results_csv.as_bytes())?;

    // Cell aggregation in configuration order.
    let mut cells = Vec::new();
    for &strategy in &cfg.run.strategies {
        for &delta in &cfg.run.deltas {
            let records: Vec<&RunRecord> = outcomes
                .iter()
                .filter(|o| o.strategy == strategy && o.delta == delta)
                .filter_map(|o| o.result.as_ref().ok())
                .map(|b| b.as_ref())
                .collect();
            let failures = cfg.repetitions - records.len();
            if records.is_empty() {
                warnings.push(format!(
                    "cell {strategy} delta={delta:e}: every repetition failed"
                ));
            }
            cells.push(aggregate_cell(strategy, delta, &records, failures));
        }
    }

    let operational = operational_block(cfg, &dataset, &cells, &mut warnings)?;
    if let Some(block) = &operational {
        let json = serde_json::to_string_pretty(block)?;
        write_atomic(&out_dir.join("operational.json"), json.as_bytes())?;
    }

    let report = AggregateReport {
        dataset,
        master_seed: cfg.seed,
        repetitions: cfg.repetitions,
        reproducible: cfg.reproducible,
        cells,
        operational,
        warnings,
        total_wall_secs: if cfg.reproducible {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        },
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_atomic(&out_dir.join("report.json"), json.as_bytes())?;
    Ok(report)
}

fn aggregate_cell(
    strategy: Strategy,
    delta: f64,
    records: &[&RunRecord],
    failures: usize,
) -> CellReport {
    let accuracy_curves: Vec<Vec<f64>> = records.iter().map(|r| r.accuracy.clone()).collect();
    let rho_curves: Vec<Vec<f64>> = records.iter().map(|r| r.mean_rho.clone()).collect();
    let size_curves: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.set_size.iter().map(|&s| s as f64).collect())
        .collect();
    let finals: Vec<f64> = records
        .iter()
        .map(|r| *r.accuracy.last().expect("records are never empty"))
        .collect();

    // conv/eff per run; present only when every success yields them (i.e.
    // not the single-pass baseline).
    let summaries: Vec<Option<(f64, f64)>> = records
        .iter()
        .map(|r| {
            let s = r.summary();
            s.conv.zip(s.eff)
        })
        .collect();
    let (conv, eff, esf) = if !summaries.is_empty() && summaries.iter().all(Option::is_some) {
        let convs: Vec<f64> = summaries.iter().map(|s| s.expect("checked").0).collect();
        let effs: Vec<f64> = summaries.iter().map(|s| s.expect("checked").1).collect();
        let fractions: Vec<f64> = effs.iter().map(|&e| expected_sample_fraction(e)).collect();
        (
            Some(StatPair::over(&convs)),
            Some(StatPair::over(&effs)),
            Some(StatPair::over(&fractions)),
        )
    } else {
        (None, None, None)
    };

    CellReport {
        strategy,
        delta,
        successes: records.len(),
        failures,
        accuracy: CurveStats::over(&accuracy_curves),
        mean_rho: CurveStats::over(&rho_curves),
        set_size: CurveStats::over(&size_curves),
        final_accuracy: if finals.is_empty() {
            StatPair { mean: f64::NAN, std: 0.0 }
        } else {
            StatPair::over(&finals)
        },
        conv,
        eff,
        expected_sample_fraction: esf,
    }
}

/// Operational points over per-delta sequential cell means, qualified
/// against the mean single-pass accuracy.
fn operational_block(
    cfg: &ExperimentConfig,
    dataset: &str,
    cells: &[CellReport],
    warnings: &mut Vec<String>,
) -> Result<Option<OperationalBlock>> {
    let sequential: Vec<&CellReport> = cells
        .iter()
        .filter(|c| c.strategy == Strategy::Sequential && c.successes > 0)
        .filter(|c| c.conv.is_some() && c.eff.is_some())
        .collect();
    let single_pass: Vec<&CellReport> = cells
        .iter()
        .filter(|c| c.strategy == Strategy::SinglePass && c.successes > 0)
        .collect();
    if sequential.is_empty() || single_pass.is_empty() {
        warnings.push(
            "operational points need successful sequential and single-pass runs; skipped".into(),
        );
        return Ok(None);
    }
    let single_mean = single_pass
        .iter()
        .map(|c| c.final_accuracy.mean)
        .sum::<f64>()
        / single_pass.len() as f64;

    let summaries: Vec<MetricSummary> = sequential
        .iter()
        .map(|c| MetricSummary {
            dataset: dataset.to_string(),
            strategy: Strategy::Sequential,
            delta: c.delta,
            lambda0: cfg.run.lambda0,
            seed: cfg.seed,
            accuracy: c.final_accuracy.mean,
            conv: c.conv.expect("filtered above").mean,
            eff: c.eff.expect("filtered above").mean,
            mean_rho: Vec::new(),
            final_size: c.set_size.mean.last().map_or(0, |&s| s.round() as usize),
        })
        .collect();

    let Some(points) = select_operational_points(&summaries, single_mean)? else {
        warnings.push(format!(
            "no sequential delta stays within 5% of the single-pass accuracy {single_mean:.4}"
        ));
        return Ok(None);
    };
    let winner = |idx: usize| {
        let s = &summaries[idx];
        OperationalWinner {
            delta: s.delta,
            accuracy: s.accuracy,
            conv: s.conv,
            eff: s.eff,
            expected_sample_fraction: expected_sample_fraction(s.eff),
        }
    };
    Ok(Some(OperationalBlock {
        single_pass_accuracy: single_mean,
        qualifying_deltas: points.qualifying.iter().map(|&i| summaries[i].delta).collect(),
        best_accuracy: winner(points.best_accuracy),
        best_efficiency: winner(points.best_efficiency),
        best_convergence: winner(points.best_convergence),
    }))
}
