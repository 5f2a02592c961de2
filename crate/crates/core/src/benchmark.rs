//! The experiment grid: model kind × missing fraction × parent limit ×
//! split. Each cell masks the training half, learns structure and
//! parameters, and scores both halves by average log-probability per
//! instance.

use crate::cbn::fit_missing;
use crate::data::{
    apply_missing_mask, load_csv, make_split, ExperimentProtocol, MaskScope, MaskedDataset,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::gaussian_bn::{
    em_fit_lg, expected_stats_unrestricted, DEFAULT_EM_MAX_ITERS, DEFAULT_EM_TOL,
};
use crate::model_file::Model;
use crate::structure::{greedy_search_with, CbnScorer, LgScorer, SearchConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cbn,
    Lgbn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cbn => "cbn",
            ModelKind::Lgbn => "lgbn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbn" => Ok(ModelKind::Cbn),
            "lgbn" => Ok(ModelKind::Lgbn),
            other => Err(Error::InvalidInput(format!(
                "unknown model kind '{other}' (expected cbn or lgbn)"
            ))),
        }
    }
}

/// Everything that shapes learning apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub max_parents: usize,
    pub tree: bool,
    pub quad_nodes: usize,
    pub em_tol: f64,
    pub em_max_iters: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            max_parents: 1,
            tree: true,
            quad_nodes: crate::cbn::DEFAULT_QUAD_NODES,
            em_tol: DEFAULT_EM_TOL,
            em_max_iters: DEFAULT_EM_MAX_ITERS,
        }
    }
}

impl LearnConfig {
    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            max_parents: if self.tree { 1 } else { self.max_parents },
            tree_constraint: self.tree,
            quad_nodes: self.quad_nodes,
            ..SearchConfig::default()
        }
    }
}

/// Structure search followed by parameter fitting. Linear-Gaussian search
/// on incomplete data scores families from expected statistics of an
/// unrestricted Gaussian, then EM refits the chosen structure.
pub fn learn(train: &MaskedDataset, kind: ModelKind, config: &LearnConfig) -> Result<Model> {
    let search = config.search();
    match kind {
        ModelKind::Cbn => {
            let scorer = CbnScorer::new(train, config.quad_nodes)?;
            let found = greedy_search_with(&scorer, &search)?;
            Ok(Model::Cbn(fit_missing(
                train,
                &found.dag,
                config.quad_nodes,
            )?))
        }
        ModelKind::Lgbn => {
            let stats = expected_stats_unrestricted(train, config.em_tol, config.em_max_iters)?;
            let found = greedy_search_with(&LgScorer::new(stats), &search)?;
            Ok(Model::Lgbn(
                em_fit_lg(train, &found.dag, config.em_tol, config.em_max_iters)?.model,
            ))
        }
    }
}

/// Average log-probability per instance: the CBN uses its exact density on
/// complete rows and the lower bound elsewhere; the linear-Gaussian model
/// integrates hidden cells out exactly.
pub fn average_log_probability(
    model: &Model,
    data: &MaskedDataset,
    quad_nodes: usize,
) -> Result<f64> {
    if data.num_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    match model {
        Model::Cbn(m) => m.average_log_probability(data, quad_nodes),
        Model::Lgbn(m) => Ok(m.log_marginal_sum(data)? / data.num_rows() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub protocol: ExperimentProtocol,
    pub model_kinds: Vec<ModelKind>,
    pub max_parents: Vec<usize>,
    /// Parent limit 1 searches trees.
    pub tree: bool,
    pub missing_fractions: Vec<f64>,
    pub quad_nodes: usize,
    pub em_tol: f64,
    pub em_max_iters: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            protocol: ExperimentProtocol::default(),
            model_kinds: vec![ModelKind::Cbn, ModelKind::Lgbn],
            max_parents: vec![1],
            tree: true,
            missing_fractions: vec![0.0],
            quad_nodes: crate::cbn::DEFAULT_QUAD_NODES,
            em_tol: DEFAULT_EM_TOL,
            em_max_iters: DEFAULT_EM_MAX_ITERS,
        }
    }
}

impl BenchmarkConfig {
    fn learn_config(&self, max_parents: usize) -> LearnConfig {
        LearnConfig {
            max_parents,
            tree: self.tree,
            quad_nodes: self.quad_nodes,
            em_tol: self.em_tol,
            em_max_iters: self.em_max_iters,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.model_kinds.is_empty()
            || self.max_parents.is_empty()
            || self.missing_fractions.is_empty()
        {
            return Err(Error::InvalidInput(
                "benchmark grids must be nonempty".into(),
            ));
        }
        if self.protocol.num_splits == 0 {
            return Err(Error::InvalidInput("need at least one split".into()));
        }
        if self.tree && self.max_parents.iter().any(|&k| k != 1) {
            return Err(Error::InvalidInput(
                "tree mode allows only max_parents = 1".into(),
            ));
        }
        if let Some(p) = self
            .missing_fractions
            .iter()
            .find(|p| !(0.0..1.0).contains(*p))
        {
            return Err(Error::InvalidInput(format!(
                "missing fraction {p} outside [0, 1)"
            )));
        }
        Ok(())
    }
}

/// One grid cell on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub model_kind: ModelKind,
    pub missing_fraction: f64,
    pub max_parents: usize,
    pub split_index: usize,
    pub split_seed: u64,
    pub mask_seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub hidden_train_cells: usize,
    pub num_edges: usize,
    pub train_score: f64,
    pub test_score: f64,
    /// Wall-clock seconds; kept out of the main CSV so it stays reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

/// Summary of one configuration over its splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model_kind: ModelKind,
    pub missing_fraction: f64,
    pub max_parents: usize,
    pub splits: usize,
    pub train_mean: f64,
    pub train_p10: f64,
    pub train_p90: f64,
    pub test_mean: f64,
    pub test_p10: f64,
    pub test_p90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchmarkResult {
    pub fn aggregate(
        &self,
        kind: ModelKind,
        missing_fraction: f64,
        max_parents: usize,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.model_kind == kind
                && a.missing_fraction == missing_fraction
                && a.max_parents == max_parents
        })
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (
        mean,
        quantile_sorted(&sorted, 0.1),
        quantile_sorted(&sorted, 0.9),
    )
}

/// Aggregates per configuration, in the rows' canonical order.
pub fn aggregate_rows(rows: &[RunRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (
            rows[start].model_kind,
            rows[start].missing_fraction,
            rows[start].max_parents,
        );
        let end = start
            + rows[start..]
                .iter()
                .take_while(|r| (r.model_kind, r.missing_fraction, r.max_parents) == key)
                .count();
        let group = &rows[start..end];
        let train: Vec<f64> = group.iter().map(|r| r.train_score).collect();
        let test: Vec<f64> = group.iter().map(|r| r.test_score).collect();
        let (train_mean, train_p10, train_p90) = summarize(&train);
        let (test_mean, test_p10, test_p90) = summarize(&test);
        out.push(Aggregate {
            model_kind: key.0,
            missing_fraction: key.1,
            max_parents: key.2,
            splits: group.len(),
            train_mean,
            train_p10,
            train_p90,
            test_mean,
            test_p10,
            test_p90,
        });
        start = end;
    }
    out
}

type Cell = (ModelKind, f64, usize, usize);

fn run_cell(
    data: &MaskedDataset,
    config: &BenchmarkConfig,
    (kind, p, k, split): Cell,
) -> Result<RunRow> {
    let started = Instant::now();
    let protocol = &config.protocol;
    let (train, test) = make_split(data, protocol, split)?;
    let mask_seed = protocol.mask_seed(split, p);
    let train = apply_missing_mask(&train, p, mask_seed)?;
    let test = match protocol.mask_scope {
        MaskScope::TrainOnly => test,
        MaskScope::TrainAndTest => apply_missing_mask(&test, p, protocol.test_mask_seed(split, p))?,
    };
    let model = learn(&train, kind, &config.learn_config(k))?;
    Ok(RunRow {
        model_kind: kind,
        missing_fraction: p,
        max_parents: k,
        split_index: split,
        split_seed: protocol.split_seed(split),
        mask_seed,
        train_rows: train.num_rows(),
        test_rows: test.num_rows(),
        hidden_train_cells: train.missing_count(),
        num_edges: model.dag().num_edges(),
        train_score: average_log_probability(&model, &train, config.quad_nodes)?,
        test_score: average_log_probability(&model, &test, config.quad_nodes)?,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs the grid in memory. Rows come back sorted by (model kind, missing
/// fraction, parent limit, split) whatever order they finished in. On
/// failure, the rows that did succeed are returned alongside the error.
pub fn run_grid(
    data: &MaskedDataset,
    config: &BenchmarkConfig,
) -> std::result::Result<BenchmarkResult, (BenchmarkResult, Error)> {
    if let Err(e) = config.validate() {
        return Err((
            BenchmarkResult {
                rows: Vec::new(),
                aggregates: Vec::new(),
            },
            e,
        ));
    }
    let mut fractions = config.missing_fractions.clone();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let mut kinds = config.model_kinds.clone();
    kinds.sort();
    kinds.dedup();
    let mut limits = config.max_parents.clone();
    limits.sort_unstable();
    limits.dedup();
    let mut cells: Vec<Cell> = Vec::new();
    for &kind in &kinds {
        for &p in &fractions {
            for &k in &limits {
                for split in 0..config.protocol.num_splits {
                    cells.push((kind, p, k, split));
                }
            }
        }
    }
    let outcomes = exec::map_slice(&cells, |&cell| run_cell(data, config, cell));
    let mut rows = Vec::with_capacity(cells.len());
    let mut first_error = None;
    for (cell, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) if first_error.is_none() => {
                let (kind, p, k, split) = cell;
                first_error = Some(Error::Numerical(format!(
                    "grid cell model={kind} missing_fraction={p} max_parents={k} split={split}: {e}"
                )));
            }
            Err(_) => {}
        }
    }
    let aggregates = aggregate_rows(&rows);
    let result = BenchmarkResult { rows, aggregates };
    match first_error {
        None => Ok(result),
        Some(e) => Err((result, e)),
    }
}

/// Run manifest written next to the results.
#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    dataset: String,
    rows: usize,
    columns: &'a [String],
    config: &'a BenchmarkConfig,
    parallel: bool,
    split_seeds: Vec<u64>,
    outputs: Vec<String>,
}

/// Sidecar paths derived from the main CSV path.
pub fn sidecar_paths(output: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    let with = |suffix: &str| output.with_file_name(format!("{stem}.{suffix}"));
    (
        with("summary.csv"),
        with("timing.csv"),
        with("manifest.json"),
    )
}

pub fn write_rows<W: std::io::Write>(rows: &[RunRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregates<W: std::io::Write>(aggregates: &[Aggregate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for a in aggregates {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

fn write_timings<W: std::io::Write>(rows: &[RunRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model_kind",
        "missing_fraction",
        "max_parents",
        "split_index",
        "seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.model_kind.to_string(),
            r.missing_fraction.to_string(),
            r.max_parents.to_string(),
            r.split_index.to_string(),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Loads `dataset_path`, runs the grid and writes the per-split CSV to
/// `output_path` plus summary, timing and manifest files beside it. Rows
/// that finished are written even when some cell fails.
pub fn run_benchmark(
    dataset_path: &Path,
    config: &BenchmarkConfig,
    output_path: &Path,
) -> Result<BenchmarkResult> {
    let data = load_csv(dataset_path)?;
    let (result, error) = match run_grid(&data, config) {
        Ok(r) => (r, None),
        Err((r, e)) => (r, Some(e)),
    };
    let (summary, timing, manifest_path) = sidecar_paths(output_path);
    write_rows(&result.rows, std::fs::File::create(output_path)?)?;
    write_aggregates(&result.aggregates, std::fs::File::create(&summary)?)?;
    write_timings(&result.rows, std::fs::File::create(&timing)?)?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        dataset: dataset_path.display().to_string(),
        rows: data.num_rows(),
        columns: data.column_names(),
        config,
        parallel: exec::is_parallel(),
        split_seeds: (0..config.protocol.num_splits)
            .map(|s| config.protocol.split_seed(s))
            .collect(),
        outputs: [output_path, &summary, &timing]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
    };
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    match error {
        None => Ok(result),
        Some(e) => Err(e),
    }
}
