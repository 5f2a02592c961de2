//! `cbn`: fit, score, sample and benchmark copula Bayesian networks and the
//! linear-Gaussian baseline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use cbn::benchmark::{
    average_log_probability, learn, run_benchmark, BenchmarkConfig, LearnConfig, ModelKind,
};
use cbn::data::{
    apply_missing_mask, load_csv, make_split, preprocess_crime, write_csv, ExperimentProtocol,
    MaskScope, MaskedDataset,
};
use cbn::marginals::fit_kde;
use cbn::model_file::{self, Model};
use cbn::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cbn",
    version,
    about = "Copula Bayesian networks with missing data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn structure and parameters and write a model file.
    Fit(FitArgs),
    /// Average log-probability per instance of a dataset under a model file.
    Eval(EvalArgs),
    /// Draw samples from a model file.
    Sample(SampleArgs),
    /// Run the split × missing-fraction × model grid.
    Benchmark(BenchArgs),
    /// Tabulate KDE pdf and cdf curves from all, 25% and 5% of each column.
    Marginals(MarginalArgs),
    /// Convert the raw Communities and Crime file into a numeric CSV.
    PrepareCrime(CrimeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cbn,
    Lgbn,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Cbn => ModelKind::Cbn,
            KindArg::Lgbn => ModelKind::Lgbn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Train,
    Test,
    All,
}

/// Which rows to use and which cells to hide.
#[derive(Args, Clone)]
struct SplitArgs {
    /// Number of random train/test splits in the protocol.
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Use this split's halves; without it the whole file is used.
    #[arg(long)]
    split: Option<usize>,
    /// Fraction of training cells hidden at random.
    #[arg(long, default_value_t = 0.0)]
    missing_fraction: f64,
    /// Also hide cells of the test half.
    #[arg(long)]
    mask_test: bool,
    /// Base seed for splits and masks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitArgs {
    fn protocol(&self) -> ExperimentProtocol {
        ExperimentProtocol {
            num_splits: self.splits,
            missing_fraction: self.missing_fraction,
            base_seed: self.seed,
            mask_scope: if self.mask_test {
                MaskScope::TrainAndTest
            } else {
                MaskScope::TrainOnly
            },
            ..ExperimentProtocol::default()
        }
    }

    /// Training data exactly as the benchmark sees it for the same split.
    fn select(&self, data: &MaskedDataset, part: Part) -> Result<MaskedDataset, CliError> {
        let protocol = self.protocol();
        let p = self.missing_fraction;
        let Some(split) = self.split else {
            return Ok(apply_missing_mask(data, p, protocol.mask_seed(0, p))?);
        };
        let (train, test) = make_split(data, &protocol, split)?;
        let train = apply_missing_mask(&train, p, protocol.mask_seed(split, p))?;
        let test = match protocol.mask_scope {
            MaskScope::TrainOnly => test,
            MaskScope::TrainAndTest => {
                apply_missing_mask(&test, p, protocol.test_mask_seed(split, p))?
            }
        };
        Ok(match part {
            Part::Train => train,
            Part::Test => test,
            Part::All => {
                let mut values = Vec::new();
                let mut mask = Vec::new();
                for d in [&train, &test] {
                    for r in 0..d.num_rows() {
                        values.extend_from_slice(d.raw_row(r));
                        mask.extend_from_slice(d.row_mask(r));
                    }
                }
                MaskedDataset::new(values, mask, data.column_names().to_vec())?
            }
        })
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "cbn")]
    model: KindArg,
    #[arg(long, default_value_t = 1)]
    max_parents: usize,
    /// Restrict the search to trees (at most one parent per node).
    #[arg(long)]
    tree: bool,
    #[command(flatten)]
    split: SplitArgs,
    /// Gauss–Hermite nodes per hidden dimension.
    #[arg(long, default_value_t = 8)]
    quad_nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    /// Which half of the split to score.
    #[arg(long, value_enum, default_value = "test")]
    part: Part,
    #[arg(long, default_value_t = 8)]
    quad_nodes: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated model kinds.
    #[arg(
        long = "model",
        value_enum,
        value_delimiter = ',',
        default_value = "cbn,lgbn"
    )]
    models: Vec<KindArg>,
    /// Comma-separated parent limits.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    max_parents: Vec<usize>,
    #[arg(long)]
    tree: bool,
    /// Comma-separated missing fractions.
    #[arg(long = "missing-fraction", value_delimiter = ',', default_value = "0")]
    missing_fractions: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mask_test: bool,
    #[arg(long, default_value_t = 8)]
    quad_nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MarginalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Grid points per curve.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Seed for the subsample draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrimeArgs {
    /// Raw `communities.data` file.
    #[arg(long)]
    input: PathBuf,
    /// Keep only the first K retained columns.
    #[arg(long)]
    columns: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(Error::Csv(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::InvalidInput(_)) => 1,
            CliError::Core(
                Error::Numerical(_)
                | Error::SingularDesign(_)
                | Error::InvalidRho { .. }
                | Error::OutOfRange(_),
            ) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn learn_config(
    max_parents: usize,
    tree: bool,
    quad_nodes: usize,
) -> Result<LearnConfig, CliError> {
    if tree && max_parents != 1 {
        return Err(CliError::Usage("--tree requires --max-parents 1".into()));
    }
    if quad_nodes < 2 {
        return Err(CliError::Usage("--quad-nodes must be at least 2".into()));
    }
    Ok(LearnConfig {
        max_parents,
        tree,
        quad_nodes,
        ..LearnConfig::default()
    })
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let config = learn_config(args.max_parents, args.tree, args.quad_nodes)?;
    let data = load_csv(&args.data)?;
    let train = args.split.select(&data, Part::Train)?;
    let model = learn(&train, args.model.into(), &config)?;
    model_file::save(&model, &args.out)?;
    let score = average_log_probability(&model, &train, args.quad_nodes)?;
    let mut out = io::stdout().lock();
    writeln!(out, "model_kind,rows,hidden_cells,edges,train_score")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        model.kind(),
        train.num_rows(),
        train.missing_count(),
        model.dag().num_edges(),
        score
    )?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let model = model_file::load(&args.model_file)?;
    let data = load_csv(&args.data)?;
    if data.column_names() != model.column_names() {
        return Err(CliError::Core(Error::InvalidInput(
            "dataset columns differ from the model's".into(),
        )));
    }
    let part = if args.split.split.is_none() {
        Part::Train
    } else {
        args.part
    };
    let rows = args.split.select(&data, part)?;
    let score = average_log_probability(&model, &rows, args.quad_nodes)?;
    let mut out = io::stdout().lock();
    writeln!(out, "model_kind,rows,hidden_cells,average_log_probability")?;
    writeln!(
        out,
        "{},{},{},{}",
        model.kind(),
        rows.num_rows(),
        rows.missing_count(),
        score
    )?;
    Ok(())
}

fn sample_cmd(args: SampleArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let model = model_file::load(&args.model_file)?;
    let rows = match &model {
        Model::Cbn(m) => m.forward_sample(args.count, args.seed)?,
        Model::Lgbn(m) => m.forward_sample(args.count, args.seed),
    };
    let data = MaskedDataset::complete(&rows, model.column_names().to_vec())?;
    write_csv(&data, File::create(&args.out)?)?;
    Ok(())
}

fn benchmark(args: BenchArgs) -> Result<(), CliError> {
    if args.tree && args.max_parents.iter().any(|&k| k != 1) {
        return Err(CliError::Usage("--tree requires --max-parents 1".into()));
    }
    let config = BenchmarkConfig {
        protocol: ExperimentProtocol {
            num_splits: args.splits,
            base_seed: args.seed,
            mask_scope: if args.mask_test {
                MaskScope::TrainAndTest
            } else {
                MaskScope::TrainOnly
            },
            ..ExperimentProtocol::default()
        },
        model_kinds: args.models.into_iter().map(ModelKind::from).collect(),
        max_parents: args.max_parents,
        tree: args.tree,
        missing_fractions: args.missing_fractions,
        quad_nodes: args.quad_nodes,
        ..BenchmarkConfig::default()
    };
    let result = run_benchmark(&args.data, &config, &args.out)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "model_kind,missing_fraction,max_parents,splits,test_mean,test_p10,test_p90"
    )?;
    for a in &result.aggregates {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.model_kind,
            a.missing_fraction,
            a.max_parents,
            a.splits,
            a.test_mean,
            a.test_p10,
            a.test_p90
        )?;
    }
    Ok(())
}

/// Fractions of each column used for the comparison curves.
const MARGINAL_FRACTIONS: [f64; 3] = [1.0, 0.25, 0.05];

fn marginals(args: MarginalArgs) -> Result<(), CliError> {
    if args.points < 2 {
        return Err(CliError::Usage("--points must be at least 2".into()));
    }
    let data = load_csv(&args.data)?;
    let mut w = csv::Writer::from_writer(File::create(&args.out)?);
    w.write_record(["column", "fraction", "x", "pdf", "cdf"])?;
    for c in 0..data.num_cols() {
        let values = data.observed_column(c);
        let full = fit_kde(&values, None)?;
        let lo = full.support_lo();
        let hi = full.support_hi();
        for (f_index, &fraction) in MARGINAL_FRACTIONS.iter().enumerate() {
            let kde = if fraction == 1.0 {
                full.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cbn::data::derive_seed(
                    args.seed,
                    &[c as u64, f_index as u64],
                ));
                let keep = ((values.len() as f64 * fraction).round() as usize).max(2);
                let subset: Vec<f64> = sample(&mut rng, values.len(), keep)
                    .into_iter()
                    .map(|i| values[i])
                    .collect();
                fit_kde(&subset, None)?
            };
            for k in 0..args.points {
                let x = lo + (hi - lo) * k as f64 / (args.points - 1) as f64;
                w.write_record([
                    data.column_names()[c].clone(),
                    fraction.to_string(),
                    x.to_string(),
                    kde.pdf(x).to_string(),
                    kde.cdf(x).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn prepare_crime(args: CrimeArgs) -> Result<(), CliError> {
    let data = preprocess_crime(File::open(&args.input)?)?;
    let data = match args.columns {
        None => data,
        Some(k) if k >= 1 && k <= data.num_cols() => {
            data.select_columns(&(0..k).collect::<Vec<_>>())
        }
        Some(k) => {
            return Err(CliError::Usage(format!(
                "--columns {k} is not between 1 and {}",
                data.num_cols()
            )))
        }
    };
    write_csv(&data, File::create(&args.out)?)?;
    eprintln!(
        "wrote {} rows x {} columns to {}",
        data.num_rows(),
        data.num_cols(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Marginals(a) => marginals(a),
        Command::PrepareCrime(a) => prepare_crime(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
