//! Command-line front end for training, evaluating, and comparing
//! multi-class boosted tree models.
//!
//! Four subcommands cover the workflow:
//!
//! * `train` fits one model and writes `model.json` plus a per-round
//!   `history.csv` into the output directory.
//! * `evaluate` replays a saved model over a data file and prints the error
//!   count, error rate, and loss; `--baseline` adds the relative improvement
//!   and a two-sided binomial p-value against a second model.
//! * `experiment` trains every (variant, leaves, shrinkage) grid cell and
//!   writes one history file per cell plus a `summary.csv` of best test
//!   errors.
//! * `ablation` trains mart, abc, mb, and a set of fixed-base variants under
//!   one setting and writes a single combined history CSV.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags or invalid
//! training parameters), 2 for runtime failures (unreadable files,
//! incompatible data, failed grid cells). All commands are deterministic
//! given the same inputs and `--seed`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcboost::{
    evaluate_model, load_dataset, load_dataset_with_mapping, load_model, save_model, train,
    Dataset, EvalError, EvalReport, Format, LoadOptions, RoundRecord, TrainConfig, TrainError,
    Variant,
};

#[derive(Parser)]
#[command(
    name = "mcboost",
    version,
    about = "Multi-class gradient boosting with adaptive base classes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write it with its per-round history
    Train(TrainArgs),
    /// Replay a saved model over a data file and report its errors
    Evaluate(EvaluateArgs),
    /// Train a (variant, leaves, shrinkage) grid and summarize best errors
    Experiment(ExperimentArgs),
    /// Compare abc against mart, mb, and fixed-base variants in one run
    Ablation(AblationArgs),
}

/// Flags shared by every command that reads a training data file.
#[derive(Args)]
struct DataArgs {
    /// Training data file
    #[arg(long)]
    data: PathBuf,
    /// Data file format (csv or libsvm)
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Zero-based column holding the class label (csv only)
    #[arg(long, default_value_t = 0)]
    label_col: usize,
}

impl DataArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            label_column: self.label_col,
        }
    }
}

/// Training hyperparameters shared by train and ablation.
#[derive(Args)]
struct FitArgs {
    /// Terminal nodes per tree (J)
    #[arg(long, default_value_t = 10)]
    leaves: usize,
    /// Shrinkage in (0, 1]
    #[arg(long, default_value_t = 0.1)]
    shrinkage: f64,
    /// Boosting rounds (M)
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    /// Minimum samples in a terminal node
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Subtract each sample's mean score after every round
    #[arg(long)]
    recenter: bool,
    /// Seed for any randomized choices
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FitArgs {
    fn config(&self, variant: Variant) -> TrainConfig {
        let mut config = TrainConfig::new(variant, self.leaves, self.shrinkage, self.rounds);
        config.min_samples_leaf = self.min_leaf;
        config.recenter = self.recenter;
        config.seed = self.seed;
        config
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Held-out data whose error count is tracked every round
    #[arg(long)]
    test: Option<PathBuf>,
    /// Boosting variant
    #[arg(long, value_enum, default_value_t = VariantArg::Mart)]
    variant: VariantArg,
    /// Base class index (required by --variant fixed_base)
    #[arg(long)]
    base: Option<usize>,
    #[command(flatten)]
    fit: FitArgs,
    /// Directory receiving model.json and history.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Saved model file
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Second model to compare against on the same data
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Held-out data scored every round (required: the summary ranks cells
    /// by their best test errors)
    #[arg(long)]
    test: PathBuf,
    /// Variants to cross with the grid
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mart,abc")]
    variant: Vec<VariantArg>,
    /// Terminal-node counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10,12,14,16")]
    leaves: Vec<usize>,
    /// Shrinkage values to sweep
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.06,0.08,0.1")]
    shrinkage: Vec<f64>,
    /// Boosting rounds per cell
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    /// Minimum samples in a terminal node
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Subtract each sample's mean score after every round
    #[arg(long)]
    recenter: bool,
    /// Seed for any randomized choices
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving per-cell histories and summary.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Held-out data whose error count is tracked every round
    #[arg(long)]
    test: PathBuf,
    /// Fixed base class indices to include (e.g. --bases 1,7)
    #[arg(long, value_delimiter = ',', required = true)]
    bases: Vec<usize>,
    #[command(flatten)]
    fit: FitArgs,
    /// Directory receiving ablation.csv
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Mart,
    Abc,
    Mb,
    #[value(name = "fixed_base")]
    FixedBase,
}

/// Command failure carrying the exit code contract: usage errors exit 1,
/// runtime failures exit 2.
enum AppError {
    Usage(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Runtime(m) => m,
        }
    }
}

impl From<mcboost::DatasetError> for AppError {
    fn from(e: mcboost::DatasetError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<mcboost::ModelError> for AppError {
    fn from(e: mcboost::ModelError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<mcboost::MetricsError> for AppError {
    fn from(e: mcboost::MetricsError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => AppError::Usage(c.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

fn write_failed(path: &Path, e: std::io::Error) -> AppError {
    AppError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            e.print().expect("clap message");
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Ablation(args) => cmd_ablation(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Maps the --variant/--base flag pair onto a training variant. --base is
/// accepted only with fixed_base, where it is required.
fn resolve_variant(arg: VariantArg, base: Option<usize>) -> Result<Variant, AppError> {
    match (arg, base) {
        (VariantArg::Mart, None) => Ok(Variant::Mart),
        (VariantArg::Abc, None) => Ok(Variant::Abc),
        (VariantArg::Mb, None) => Ok(Variant::Mb),
        (VariantArg::FixedBase, Some(b)) => Ok(Variant::FixedBase(b)),
        (VariantArg::FixedBase, None) => Err(AppError::Usage(
            "--variant fixed_base requires --base <INDEX>".into(),
        )),
        (_, Some(_)) => Err(AppError::Usage(
            "--base applies only to --variant fixed_base".into(),
        )),
    }
}

/// Writes a per-round history CSV. Row 0 describes the untrained model
/// (uniform probabilities), so a completed run has rounds + 1 rows. The
/// base_class field is empty for mart rows and for row 0; test_errors is
/// empty when no test set was tracked.
fn write_history(path: &Path, history: &[RoundRecord]) -> Result<(), AppError> {
    let file = fs::File::create(path).map_err(|e| write_failed(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| write_failed(path, e);
    writeln!(w, "iter,train_loss,base_class,test_errors").map_err(io)?;
    for rec in history {
        writeln!(
            w,
            "{},{},{},{}",
            rec.round,
            rec.train_loss,
            rec.base.map(|b| b.to_string()).unwrap_or_default(),
            rec.test_errors.map(|e| e.to_string()).unwrap_or_default(),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

fn load_test_for(
    train_data: &Dataset,
    path: &Path,
    opts: &LoadOptions,
) -> Result<Dataset, AppError> {
    // the test file must agree with the training data's label encoding and
    // feature count, so load it under the training mapping
    Ok(load_dataset_with_mapping(
        path,
        opts,
        train_data.class_names(),
        Some(train_data.d()),
    )?)
}

fn print_report(prefix: &str, report: &EvalReport, n: usize) {
    println!(
        "{prefix}: errors {}/{} (rate {:.6}), loss {}",
        report.error_count, n, report.error_rate, report.train_loss
    );
}

fn cmd_train(args: TrainArgs) -> Result<(), AppError> {
    let variant = resolve_variant(args.variant, args.base)?;
    let opts = args.data.options();
    let train_data = load_dataset(&args.data.data, &opts)?;
    let test_data = match &args.test {
        Some(path) => Some(load_test_for(&train_data, path, &opts)?),
        None => None,
    };
    let config = args.fit.config(variant);
    let (model, history) = train(&train_data, &config, test_data.as_ref())?;

    fs::create_dir_all(&args.out).map_err(|e| write_failed(&args.out, e))?;
    let model_path = args.out.join("model.json");
    let history_path = args.out.join("history.csv");
    save_model(&model, &model_path)?;
    write_history(&history_path, &history)?;

    println!(
        "trained {variant}: {} classes, {} features, {} samples, {} rounds",
        model.k,
        model.d,
        train_data.n(),
        model.num_rounds()
    );
    let report = evaluate_model(&model, &train_data, None)?;
    print_report("train", &report, train_data.n());
    if let Some(test) = &test_data {
        let report = evaluate_model(&model, test, None)?;
        print_report("test", &report, test.n());
    }
    println!(
        "wrote {} and {}",
        model_path.display(),
        history_path.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), AppError> {
    let model = load_model(&args.model)?;
    let opts = args.data.options();
    let data =
        load_dataset_with_mapping(&args.data.data, &opts, &model.class_names, Some(model.d))?;
    let baseline = match &args.baseline {
        Some(path) => Some(load_model(path)?),
        None => None,
    };
    let report = evaluate_model(&model, &data, baseline.as_ref())?;
    print_report("evaluate", &report, data.n());
    if let Some(cmp) = &report.comparison {
        println!(
            "vs baseline: relative improvement {}%, p-value {}{}",
            cmp.r_err,
            cmp.p_value,
            if cmp.degenerate { " (degenerate)" } else { "" }
        );
    }
    Ok(())
}

/// Best (lowest) test-error count over trained rounds, earliest round first
/// on ties. Returns None when the history carries no test errors.
fn best_test_errors(history: &[RoundRecord]) -> Option<(usize, usize)> {
    history
        .iter()
        .filter(|r| r.round >= 1)
        .filter_map(|r| r.test_errors.map(|e| (e, r.round)))
        .min_by_key(|&(e, _)| e)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), AppError> {
    if args.variant.contains(&VariantArg::FixedBase) {
        return Err(AppError::Usage(
            "fixed_base is not part of experiment grids; use the ablation command".into(),
        ));
    }
    let opts = args.data.options();
    let train_data = load_dataset(&args.data.data, &opts)?;
    let test_data = load_test_for(&train_data, &args.test, &opts)?;

    let variants: Vec<Variant> = args
        .variant
        .iter()
        .map(|&v| resolve_variant(v, None))
        .collect::<Result<_, _>>()?;

    // reject invalid grid values before any training starts
    let mut cells = Vec::new();
    for &variant in &variants {
        for &leaves in &args.leaves {
            for &shrinkage in &args.shrinkage {
                let mut config = TrainConfig::new(variant, leaves, shrinkage, args.rounds);
                config.min_samples_leaf = args.min_leaf;
                config.recenter = args.recenter;
                config.seed = args.seed;
                config
                    .validate(train_data.n(), train_data.k())
                    .map_err(|e| AppError::Usage(e.to_string()))?;
                cells.push(config);
            }
        }
    }

    fs::create_dir_all(&args.out).map_err(|e| write_failed(&args.out, e))?;
    let summary_path = args.out.join("summary.csv");
    let file = fs::File::create(&summary_path).map_err(|e| write_failed(&summary_path, e))?;
    let mut summary = BufWriter::new(file);
    writeln!(
        summary,
        "variant,J,nu,best_test_errors,best_iter,final_train_loss"
    )
    .map_err(|e| write_failed(&summary_path, e))?;

    let mut failed = 0usize;
    for config in &cells {
        let cell = format!(
            "{}_J{}_nu{}",
            config.variant, config.leaves, config.shrinkage
        );
        match run_cell(&train_data, &test_data, config, &args.out, &cell) {
            Ok((best, best_iter, final_loss)) => {
                writeln!(
                    summary,
                    "{},{},{},{best},{best_iter},{final_loss}",
                    config.variant, config.leaves, config.shrinkage
                )
                .map_err(|e| write_failed(&summary_path, e))?;
                println!("cell {cell}: best test errors {best} at iter {best_iter}");
            }
            Err(e) => {
                failed += 1;
                eprintln!("cell {cell} failed: {}", e.message());
            }
        }
    }
    summary
        .flush()
        .map_err(|e| write_failed(&summary_path, e))?;
    println!("wrote {}", summary_path.display());
    if failed > 0 {
        return Err(AppError::Runtime(format!("{failed} grid cell(s) failed")));
    }
    Ok(())
}

fn run_cell(
    train_data: &Dataset,
    test_data: &Dataset,
    config: &TrainConfig,
    out: &Path,
    cell: &str,
) -> Result<(usize, usize, f64), AppError> {
    let (_, history) = train(train_data, config, Some(test_data))?;
    let history_path = out.join(format!("history_{cell}.csv"));
    write_history(&history_path, &history)?;
    let (best, best_iter) = best_test_errors(&history).expect("test errors tracked for every cell");
    let final_loss = history.last().expect("nonempty history").train_loss;
    Ok((best, best_iter, final_loss))
}

fn cmd_ablation(args: AblationArgs) -> Result<(), AppError> {
    let opts = args.data.options();
    let train_data = load_dataset(&args.data.data, &opts)?;
    if train_data.k() < 3 {
        return Err(AppError::Runtime(format!(
            "ablation needs at least 3 classes; {} has {}",
            args.data.data.display(),
            train_data.k()
        )));
    }
    let test_data = load_test_for(&train_data, &args.test, &opts)?;

    let mut variants = vec![Variant::Mart, Variant::Abc, Variant::Mb];
    variants.extend(args.bases.iter().map(|&b| Variant::FixedBase(b)));
    for &variant in &variants {
        args.fit
            .config(variant)
            .validate(train_data.n(), train_data.k())
            .map_err(|e| AppError::Usage(e.to_string()))?;
    }

    fs::create_dir_all(&args.out).map_err(|e| write_failed(&args.out, e))?;
    let path = args.out.join("ablation.csv");
    let file = fs::File::create(&path).map_err(|e| write_failed(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| write_failed(&path, e);
    writeln!(w, "variant,iter,train_loss,base_class,test_errors").map_err(io)?;

    for &variant in &variants {
        let config = args.fit.config(variant);
        let (_, history) = train(&train_data, &config, Some(&test_data))?;
        for rec in &history {
            writeln!(
                w,
                "{variant},{},{},{},{}",
                rec.round,
                rec.train_loss,
                rec.base.map(|b| b.to_string()).unwrap_or_default(),
                rec.test_errors.map(|e| e.to_string()).unwrap_or_default(),
            )
            .map_err(io)?;
        }
        let (best, best_iter) = best_test_errors(&history).expect("test errors tracked");
        let last = history.last().expect("nonempty history");
        println!(
            "{variant}: best test errors {best} at iter {best_iter}, final {} at iter {}",
            last.test_errors.expect("test errors tracked"),
            last.round
        );
    }
    w.flush().map_err(io)?;
    println!("wrote {}", path.display());
    Ok(())
}
