//! `sal`: train, sweep and compare selective adaptive learning networks,
//! run the gradient checks, and validate dataset files.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sal_core::experiment::{
    grad_check_suite, run_aggregate, write_aggregates_csv, write_records_csv, AggregateResult,
    MetricsRecord, Splits,
};
use sal_core::{DatasetKind, Method, Preset, SalError, SweepAxis};

use config::{resolve, RunKind, Settings, DATA_ROOT};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sal",
    version,
    about = "Selective adaptive learning experiments"
)]
struct Cli {
    /// TOML file with [data], [network], [training], [experiment] and
    /// [output] sections. Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration (per method) over the given seeds.
    Train(RunArgs),
    /// Run a parameter sweep: a sweeping preset or --sweep with --values.
    Sweep(RunArgs),
    /// SAL against top-1 MoE at matching area counts.
    Compare(RunArgs),
    /// Finite-difference gradient checks; exits 1 if any check fails.
    Gradcheck {
        /// Seeds for the random check instances.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
    },
    /// Load a dataset and report its size, or list where to obtain it.
    ValidateData(DataArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// digits, semeion, usps, mnist or fashion-mnist.
    #[arg(long)]
    dataset: Option<DatasetKind>,
    /// Dataset file or directory [default: data/, or data/<name> for the IDX sets].
    #[arg(long, value_name = "PATH")]
    path: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Experiment preset: basic, depth, width or moe-compare.
    #[arg(long)]
    preset: Option<Preset>,
    /// Comma-separated methods (sal, moe, bp); bp is the baseline.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Also run the BP baseline.
    #[arg(long, overrides_with = "no_baseline")]
    baseline: bool,
    /// Skip the BP baseline.
    #[arg(long)]
    no_baseline: bool,
    /// Areas (SAL) or experts (MoE) per routed layer.
    #[arg(long)]
    n_areas: Option<usize>,
    /// Number of layers.
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    width: Option<usize>,
    /// Weight of the local error term.
    #[arg(long)]
    local_weight: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Network learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Selector learning rate [default: --lr].
    #[arg(long)]
    lr_sel: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Sweep axis: areas, depth or width.
    #[arg(long)]
    sweep: Option<SweepAxis>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<usize>>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for metrics.csv, aggregate.csv and config.toml.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn into_settings(self) -> Settings {
        let mut s = Settings::default();
        s.data.dataset = self.data.dataset;
        s.data.path = self.data.path;
        s.network.method = self.method;
        s.network.n_areas = self.n_areas;
        s.network.depth = self.depth;
        s.network.width = self.width;
        s.network.local_weight = self.local_weight;
        s.training.epochs = self.epochs;
        s.training.batch = self.batch;
        s.training.lr = self.lr;
        s.training.lr_sel = self.lr_sel;
        s.training.seeds = self.seeds;
        s.experiment.preset = self.preset;
        s.experiment.baseline = match (self.baseline, self.no_baseline) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        };
        s.experiment.sweep = self.sweep;
        s.experiment.values = self.values;
        s.experiment.jobs = self.jobs;
        s.output.path = self.output;
        s
    }
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<SalError> for Failure {
    fn from(e: SalError) -> Self {
        let code = match e {
            SalError::InvalidConfig(_)
            | SalError::Io { .. }
            | SalError::Format { .. }
            | SalError::Parse { .. }
            | SalError::Data(_) => EXIT_USAGE,
            _ => EXIT_CHECK_FAILED,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn file_settings(path: Option<&Path>) -> Result<Settings, Failure> {
    path.map_or_else(
        || Ok(Settings::default()),
        |p| Settings::load(p).map_err(Failure::usage),
    )
}

fn print_progress(r: &MetricsRecord) {
    eprintln!(
        "{} seed {} epoch {}: train_loss {:.4} val_loss {:.4} val_accuracy {:.4}",
        r.run_label, r.seed, r.epoch, r.train_loss, r.val_loss, r.val_accuracy
    );
}

fn print_summary(results: &[AggregateResult]) {
    let width = results
        .iter()
        .map(|r| r.run_label.len())
        .max()
        .unwrap_or(0)
        .max(5);
    println!(
        "{:<width$}  seeds  accuracy (%)     train_loss  val_loss",
        "run"
    );
    for r in results {
        println!(
            "{:<width$}  {:>5}  {:>6.2} ± {:<6.2}  {:>10.4}  {:>8.4}",
            r.run_label,
            r.n_seeds,
            100.0 * r.val_accuracy.mean,
            100.0 * r.val_accuracy.std,
            r.train_loss.mean,
            r.val_loss.mean
        );
    }
}

fn run_experiment(config: Option<&Path>, args: RunArgs, kind: RunKind) -> Result<(), Failure> {
    let settings = file_settings(config)?.merge(args.into_settings());
    let resolved = resolve(settings, kind).map_err(Failure::usage)?;
    let description = resolved.describe();
    print!("{description}");
    println!();

    if let Some(dir) = &resolved.output {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    let spec = &resolved.spec;
    let (train, test) = spec.dataset.load_splits(&spec.data_path)?;
    let splits = Splits { train, test };
    let out = run_aggregate(spec, &splits, resolved.jobs, Some(&print_progress))?;
    print_summary(&out.aggregates);

    if let Some(dir) = &resolved.output {
        write_records_csv(&out.records, &dir.join("metrics.csv"))?;
        write_aggregates_csv(&out.aggregates, &dir.join("aggregate.csv"))?;
        std::fs::write(dir.join("config.toml"), &description)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", dir.display())))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn gradcheck(seeds: &[u64]) -> Result<(), Failure> {
    let mut all_passed = true;
    for &seed in seeds {
        let report = grad_check_suite(seed)?;
        println!("seed {seed}");
        print!("{report}");
        all_passed &= report.all_passed();
    }
    if all_passed {
        println!("all gradient checks passed");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_CHECK_FAILED,
            message: "gradient check failed".into(),
        })
    }
}

fn validate_data(config: Option<&Path>, args: DataArgs) -> Result<(), Failure> {
    let file = file_settings(config)?;
    let kind = args
        .dataset
        .or(file.data.dataset)
        .ok_or_else(|| Failure::usage("no dataset given (use --dataset or [data] dataset)"))?;
    let path = args
        .path
        .or(file.data.path)
        .unwrap_or_else(|| kind.default_location(Path::new(DATA_ROOT)));
    if let Err(e) = kind.resolve(&path) {
        let mut message = format!("{e}\nobtain {kind} from:");
        for s in kind.sources() {
            message.push_str(&format!("\n  {}  {}", s.name, s.url));
            if !s.md5.is_empty() {
                message.push_str(&format!("  md5 {}", s.md5));
            }
        }
        message.push_str("\nchecksums refer to the published archives, before decompression");
        return Err(Failure::usage(message));
    }
    let all = kind.load_raw(&path)?;
    println!(
        "{} samples, {} features, {} classes",
        all.len(),
        all.feature_count(),
        all.class_count()
    );
    let (train, test) = kind.load_splits(&path)?;
    println!("train {}, test {}", train.len(), test.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Train(args) => run_experiment(config, args, RunKind::Train),
        Command::Sweep(args) => run_experiment(config, args, RunKind::Sweep),
        Command::Compare(args) => run_experiment(config, args, RunKind::Compare),
        Command::Gradcheck { seeds } => gradcheck(&seeds),
        Command::ValidateData(args) => validate_data(config, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sal: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
