//! Command-line front end: `train`, `evaluate`, `cart` and `nash-solve`,
//! plus the versioned run report they write.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! fault. Messages go to standard error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{build_cart, CartOracle, CartParams};
use crate::dataset::{load_csv, normalize, CsvSchema, Dataset, FeatureScaling, RawTable};
use crate::engine::{evolve_with, CoevolutionConfig, Diagnostics, EngineError, GenerationEvent, ProgressSink, StopReason};
use crate::metrics::{estimate_final_metrics_many, FinalMetrics, MetricsError, ObjectiveMode};
use crate::nash::{lemke_howson, solve, support_enumeration, Equilibrium, PayoffMatrix, SolveMethod};
use crate::tree::TreeGenotype;

/// Version of the run and evaluation report documents. Readers reject
/// any other value.
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => CliError::Config(e.to_string()),
            EngineError::WarmStart { .. } => CliError::Data(e.to_string()),
            EngineError::Metrics(MetricsError::NoSamples) => CliError::Config(e.to_string()),
            EngineError::Metrics(_) => CliError::Internal(e.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is not valid JSON: {0}")]
    Syntax(String),
    #[error("report has no format_version")]
    MissingVersion,
    #[error("unsupported report format version {found} (expected {REPORT_FORMAT_VERSION})")]
    UnknownVersion { found: u64 },
    #[error("malformed report: {0}")]
    Schema(String),
}

#[derive(Debug, Parser)]
#[command(name = "coevo-trees", version, about = "Coevolved decision trees robust to bounded input perturbations")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a robust tree and write it with a run report.
    Train(TrainArgs),
    /// Score tree files on a seeded perturbation sample.
    Evaluate(EvaluateArgs),
    /// Fit a CART baseline tree.
    Cart(CartArgs),
    /// Solve a zero-sum matrix game read from a text file.
    NashSolve(NashArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with one instance per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Perturbation radius in normalized units.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Zero-based label column (default: last).
    #[arg(long)]
    pub label_column: Option<usize>,
    /// The first line is data, not a header.
    #[arg(long)]
    pub no_header: bool,
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            label_column: self.label_column,
            header: !self.no_header,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CartFlags {
    #[arg(long)]
    pub cart_max_depth: Option<usize>,
    #[arg(long)]
    pub cart_min_samples_split: Option<usize>,
    #[arg(long)]
    pub cart_min_impurity_decrease: Option<f64>,
}

impl CartFlags {
    fn params(&self) -> Result<CartParams, CliError> {
        let d = CartParams::default();
        let p = CartParams {
            max_depth: self.cart_max_depth.unwrap_or(d.max_depth),
            min_samples_split: self.cart_min_samples_split.unwrap_or(d.min_samples_split),
            min_impurity_decrease: self.cart_min_impurity_decrease.unwrap_or(d.min_impurity_decrease),
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Flat `key = value` file with configuration field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration field, e.g. `--set hof_max_size=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Re-run the configuration recorded in an earlier report.
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<ObjectiveMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Perturbations sampled to score the result (0 skips scoring).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub estimator_seed: Option<u64>,
    /// Tree files placed in the initial population.
    #[arg(long = "init-trees", num_args = 1..)]
    pub init_trees: Vec<PathBuf>,
    #[arg(long, default_value = "best-tree.json")]
    pub tree_out: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
    /// Print a progress line every N generations (0 silences it).
    #[arg(long, default_value_t = 10)]
    pub progress: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Tree files to score on the same sample.
    #[arg(long = "tree", required = true, num_args = 1..)]
    pub trees: Vec<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub cart: CartFlags,
}

#[derive(Debug, Clone, Args)]
pub struct CartArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cart: CartFlags,
    #[arg(long, default_value = "cart-tree.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NashMethod {
    /// Lemke–Howson with the solver's fallbacks.
    Auto,
    LemkeHowson,
    SupportEnumeration,
}

#[derive(Debug, Clone, Args)]
pub struct NashArgs {
    /// Matrix file (`-` reads standard input). Rows are lines, entries are
    /// separated by spaces or commas; the row player maximizes.
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = NashMethod::Auto)]
    pub method: NashMethod,
    /// Initial label for `lemke-howson`.
    #[arg(long, default_value_t = 0)]
    pub label: usize,
}

/// Loaded and normalized input data.
pub struct LoadedData {
    pub raw: RawTable,
    pub dataset: Dataset,
    pub scaling: FeatureScaling,
}

pub fn load_data(args: &DataArgs) -> Result<LoadedData, CliError> {
    if !(args.epsilon >= 0.0 && args.epsilon.is_finite()) {
        return Err(CliError::Config(format!("epsilon must be a finite non-negative number, got {}", args.epsilon)));
    }
    let raw = load_csv(&args.data, &args.schema()).map_err(|e| CliError::Data(e.to_string()))?;
    let (dataset, scaling) = normalize(&raw, args.epsilon).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(LoadedData { raw, dataset, scaling })
}

pub fn read_tree(path: &Path) -> Result<TreeGenotype, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    TreeGenotype::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

/// Builds a configuration from defaults, an optional flat file and
/// `key=value` overrides, in that order.
pub fn build_config(file: Option<&str>, overrides: &[String]) -> Result<CoevolutionConfig, CliError> {
    let mut table: toml::Table = match file {
        Some(text) => toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`{item}` is not KEY=VALUE")))?;
        let (key, value) = (key.trim(), value.trim());
        // bare words such as `max-regret` are taken as strings
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
    }
    let config: CoevolutionConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub path: String,
    pub name: String,
    pub instances: usize,
    pub features: usize,
    pub classes: usize,
    pub epsilon: f64,
    pub label_column: Option<usize>,
    pub header: bool,
    pub feature_names: Vec<String>,
    /// Original label text, indexed by class.
    pub class_names: Vec<String>,
    pub class_histogram: Vec<usize>,
    pub scaling: FeatureScaling,
}

impl DatasetSummary {
    fn new(args: &DataArgs, data: &LoadedData) -> Self {
        DatasetSummary {
            path: args.data.display().to_string(),
            name: data.dataset.name().to_string(),
            instances: data.dataset.len(),
            features: data.dataset.feature_count(),
            classes: data.dataset.class_count(),
            epsilon: data.dataset.epsilon(),
            label_column: args.label_column,
            header: !args.no_header,
            feature_names: data.raw.feature_names.clone(),
            class_names: data.raw.class_names.clone(),
            class_histogram: data.dataset.class_histogram(),
            scaling: data.scaling.clone(),
        }
    }

    fn data_args(&self) -> DataArgs {
        DataArgs {
            data: PathBuf::from(&self.path),
            epsilon: self.epsilon,
            label_column: self.label_column,
            no_header: !self.header,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    /// The best tree as a tree document.
    pub best_tree: serde_json::Value,
    pub best_fitness: f64,
    pub generations_run: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: CoevolutionConfig,
    pub dataset: DatasetSummary,
    /// Warm-start trees as tree documents, in population order.
    pub init_trees: Vec<serde_json::Value>,
    pub result: ResultSummary,
    pub metrics: Option<FinalMetrics>,
    pub diagnostics: Diagnostics,
    pub wall_clock_seconds: f64,
}

fn tree_value(tree: &TreeGenotype) -> serde_json::Value {
    serde_json::from_str(&tree.to_json()).expect("tree documents are JSON")
}

fn tree_from_value(value: &serde_json::Value) -> Result<TreeGenotype, ReportError> {
    TreeGenotype::from_json(&value.to_string()).map_err(|e| ReportError::Schema(e.to_string()))
}

fn check_version(value: &serde_json::Value) -> Result<(), ReportError> {
    match value.get("format_version").and_then(|v| v.as_u64()) {
        None => Err(ReportError::MissingVersion),
        Some(v) if v == REPORT_FORMAT_VERSION as u64 => Ok(()),
        Some(found) => Err(ReportError::UnknownVersion { found }),
    }
}

fn to_document<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

impl RunReport {
    pub fn to_json(&self) -> String {
        to_document(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ReportError::Syntax(e.to_string()))?;
        check_version(&value)?;
        serde_json::from_value(value).map_err(|e| ReportError::Schema(e.to_string()))
    }

    pub fn best_tree(&self) -> Result<TreeGenotype, ReportError> {
        tree_from_value(&self.result.best_tree)
    }

    pub fn warm_start(&self) -> Result<Vec<TreeGenotype>, ReportError> {
        self.init_trees.iter().map(tree_from_value).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeScore {
    pub tree: String,
    pub metrics: FinalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub dataset: DatasetSummary,
    pub cart: CartParams,
    pub scores: Vec<TreeScore>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        to_document(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ReportError::Syntax(e.to_string()))?;
        check_version(&value)?;
        serde_json::from_value(value).map_err(|e| ReportError::Schema(e.to_string()))
    }
}

struct StderrProgress {
    every: usize,
}

impl ProgressSink for StderrProgress {
    fn generation(&mut self, e: &GenerationEvent) {
        if self.every > 0 && e.total_generation % self.every == 0 {
            eprintln!(
                "generation {} ({:?}): best {:.4} mean {:.4} adversary {:.4} archive {}/{}",
                e.tree_generation, e.phase, e.tree_best, e.tree_mean, e.perturbation_best, e.hof_trees, e.hof_perturbations
            );
        }
    }
}

/// Runs a training job and returns its report. Files are written only by
/// [`run`].
pub fn cmd_train(args: &TrainArgs) -> Result<(RunReport, TreeGenotype), CliError> {
    let (mut config, data_args, mut warm) = match &args.replay {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let report = RunReport::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let warm = report.warm_start().map_err(|e| CliError::Config(e.to_string()))?;
            (report.config, report.dataset.data_args(), warm)
        }
        None => {
            let file = match &args.config {
                Some(path) => Some(fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?),
                None => None,
            };
            (build_config(file.as_deref(), &args.overrides)?, args.data.clone(), Vec::new())
        }
    };
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(g) = args.generations {
        config.max_generations = g;
    }
    if let Some(n) = args.samples {
        config.estimator_samples = n;
    }
    if let Some(s) = args.estimator_seed {
        config.estimator_seed = s;
    }
    config.validate()?;
    let data = load_data(&data_args)?;
    for path in &args.init_trees {
        warm.push(read_tree(path)?);
    }

    let start = Instant::now();
    let result = evolve_with(&data.dataset, &config, &warm, &mut StderrProgress { every: args.progress })?;
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: DatasetSummary::new(&data_args, &data),
        init_trees: warm.iter().map(tree_value).collect(),
        result: ResultSummary {
            best_tree: tree_value(&result.best_tree),
            best_fitness: result.best_fitness.value(),
            generations_run: result.generations_run,
            stop_reason: result.stop_reason,
        },
        metrics: result.final_metrics.clone(),
        diagnostics: result.diagnostics.clone(),
        config,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, result.best_tree))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport, CliError> {
    if args.samples == 0 {
        return Err(CliError::Config("--samples must be positive".into()));
    }
    let params = args.cart.params()?;
    let data = load_data(&args.data)?;
    let trees = args.trees.iter().map(|p| read_tree(p)).collect::<Result<Vec<_>, _>>()?;
    for (tree, path) in trees.iter().zip(&args.trees) {
        tree.check_compatible(&data.dataset)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    let oracle = CartOracle {
        params,
        class_count: data.dataset.class_count(),
    };
    let refs: Vec<&TreeGenotype> = trees.iter().collect();
    let metrics = estimate_final_metrics_many(&refs, &data.dataset, args.samples, args.seed, &oracle)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(EvaluationReport {
        format_version: REPORT_FORMAT_VERSION,
        dataset: DatasetSummary::new(&args.data, &data),
        cart: params,
        scores: args
            .trees
            .iter()
            .zip(metrics)
            .map(|(p, metrics)| TreeScore {
                tree: p.display().to_string(),
                metrics,
            })
            .collect(),
    })
}

/// Fits CART on the normalized data; returns the tree and its training
/// accuracy.
pub fn cmd_cart(args: &CartArgs) -> Result<(TreeGenotype, f64), CliError> {
    let params = args.cart.params()?;
    let data = load_data(&args.data)?;
    let d = &data.dataset;
    let tree = build_cart(d.instances(), d.labels(), d.class_count(), &params);
    let acc = tree.count_correct(d.instances(), d.labels()) as f64 / d.len() as f64;
    Ok((tree, acc))
}

pub fn cmd_nash_solve(args: &NashArgs) -> Result<(Equilibrium, String), CliError> {
    let text = if args.matrix.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Data(format!("cannot read standard input: {e}")))?;
        s
    } else {
        fs::read_to_string(&args.matrix).map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.matrix.display())))?
    };
    let matrix = PayoffMatrix::parse(&text).map_err(|e| CliError::Data(e.to_string()))?;
    let fail = |e: crate::nash::NashError| CliError::Internal(e.to_string());
    Ok(match args.method {
        NashMethod::Auto => {
            let s = solve(&matrix).map_err(fail)?;
            let how = match s.method {
                SolveMethod::LemkeHowson { label } => format!("lemke-howson (label {label})"),
                SolveMethod::SupportEnumeration => "support-enumeration".to_string(),
            };
            (s.equilibrium, how)
        }
        NashMethod::LemkeHowson => {
            if args.label >= matrix.rows() + matrix.cols() {
                return Err(CliError::Config(format!("--label must be below {}", matrix.rows() + matrix.cols())));
            }
            (lemke_howson(&matrix, args.label).map_err(fail)?, format!("lemke-howson (label {})", args.label))
        }
        NashMethod::SupportEnumeration => {
            let all = support_enumeration(&matrix).map_err(|e| match e {
                crate::nash::NashError::TooLarge { .. } => CliError::Config(e.to_string()),
                e => fail(e),
            })?;
            let first = all.into_iter().next().ok_or_else(|| fail(crate::nash::NashError::NotFound))?;
            (first, "support-enumeration".to_string())
        }
    })
}

fn format_strategy(p: &[f64]) -> String {
    p.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(" ")
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(args) => {
            let (report, tree) = cmd_train(args)?;
            write_file(&args.tree_out, &tree.to_json())?;
            write_file(&args.report, &report.to_json())?;
            eprintln!(
                "{:?} after {} generations, fitness {:.6}; wrote {} and {}",
                report.result.stop_reason,
                report.result.generations_run,
                report.result.best_fitness,
                args.tree_out.display(),
                args.report.display()
            );
            if let Some(m) = &report.metrics {
                println!("adversarial_accuracy {:.6}", m.adversarial_accuracy);
                println!("max_regret {:.6}", m.max_regret);
                println!("clean_accuracy {:.6}", m.clean_accuracy);
            }
        }
        Command::Evaluate(args) => print!("{}", cmd_evaluate(args)?.to_json()),
        Command::Cart(args) => {
            let (tree, acc) = cmd_cart(args)?;
            write_file(&args.out, &tree.to_json())?;
            println!("training_accuracy {acc:.6}");
            println!("depth {}", tree.depth());
            println!("nodes {}", tree.len());
        }
        Command::NashSolve(args) => {
            let (eq, how) = cmd_nash_solve(args)?;
            println!("method {how}");
            println!("row {}", format_strategy(&eq.row));
            println!("col {}", format_strategy(&eq.col));
            println!("value {:.12}", eq.value);
        }
    }
    Ok(())
}

/// Runs a parsed command line inside a pool of the requested size.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.to_string()))?;
    pool.install(|| dispatch(&cli.command))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
