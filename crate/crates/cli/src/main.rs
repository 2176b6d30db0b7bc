//! `shadowbayes`: generate datasets, train, evaluate, reproduce figure data
//! and run the self-check suite.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use shadowbayes::encoding::{dataset_read, dataset_write, DatasetHeader, ExperimentInstance};
use shadowbayes::neural::{train, HeadMode, Model};
use shadowbayes::pipeline::{
    evaluate, generate_split, reproduce_figure_with, FigureId, Profile, Scale, Split, TaskSpec,
};

/// Process exit codes by failure class.
mod exit {
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const VALIDATION: u8 = 4;
    pub const CHECK: u8 = 5;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: exit::CONFIG,
            message: message.into(),
        }
    }

    fn context(self, what: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl From<shadowbayes::Error> for Failure {
    fn from(e: shadowbayes::Error) -> Self {
        use shadowbayes::Error as E;
        let code = match &e {
            E::Io(_) => exit::IO,
            E::Format(_) => exit::VALIDATION,
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::SingularNoise(_) => exit::CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: exit::IO,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self {
            code: exit::IO,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser, Debug)]
#[command(name = "shadowbayes", version, about = "Classical-shadow experiments with a learned Bayesian correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory.
    #[arg(long, env = "SHADOWBAYES_DATA_DIR", default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for instance generation and batch gradients.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Residual,
    Direct,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train and test datasets from a JSON task spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a dataset; writes a checkpoint and a loss log.
    Train {
        /// Training dataset.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path. Defaults to `<out>/model.shbc`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        /// Overrides the profile's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum, default_value = "residual")]
        mode: ModeArg,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on a test set; writes `<out>/report.csv`.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task spec. Defaults to the one recorded in the dataset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run generate, train and evaluate for one figure panel.
    Reproduce {
        /// Panel id, e.g. fig2a or fig6a.
        #[arg(long)]
        figure: String,
        #[arg(long, value_enum, default_value = "desk")]
        scale: ScaleArg,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the self-check suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate { spec, common } => with_threads(&common, || cmd_generate(&spec, &common)),
        Command::Train {
            data,
            checkpoint,
            scale,
            epochs,
            mode,
            common,
        } => with_threads(&common, || {
            let mode = match mode {
                ModeArg::Residual => HeadMode::Residual,
                ModeArg::Direct => HeadMode::Direct,
            };
            cmd_train(&data, checkpoint.as_deref(), scale.into(), epochs, mode, &common)
        }),
        Command::Eval {
            data,
            checkpoint,
            spec,
            common,
        } => with_threads(&common, || cmd_eval(&data, &checkpoint, spec.as_deref(), &common)),
        Command::Reproduce {
            figure,
            scale,
            epochs,
            common,
        } => with_threads(&common, || cmd_reproduce(&figure, scale.into(), epochs, &common)),
        Command::Verify { seed } => cmd_verify(seed),
    }
}

fn with_threads(common: &Common, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    if common.threads == 0 {
        return Err(Failure::config("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Failure::config(e.to_string()))?;
    pool.install(f)
}

fn read_spec(path: &Path) -> CliResult<TaskSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).context(path.display()))?;
    TaskSpec::from_json(&text).map_err(|e| Failure::from(e).context(path.display()))
}

fn read_dataset(path: &Path) -> CliResult<(DatasetHeader, Vec<ExperimentInstance>)> {
    dataset_read(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn summarize(name: &str, data: &[ExperimentInstance]) {
    let labels: Vec<f64> = data.iter().map(|i| i.label).collect();
    if labels.is_empty() {
        println!("{name}: 0 instances");
        return;
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{name}: count {} label mean {mean:.6} min {min:.6} max {max:.6}",
        labels.len()
    );
}

fn cmd_generate(spec_path: &Path, common: &Common) -> CliResult {
    let spec = read_spec(spec_path)?;
    std::fs::create_dir_all(&common.out)?;
    let stem = spec_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    for split in [Split::Train, Split::Test] {
        let data = generate_split(&spec, split, common.seed)?;
        let tag = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let path = common.out.join(format!("{stem}.{tag}.shbd"));
        summarize(&path.display().to_string(), &data);
        if data.is_empty() {
            continue;
        }
        let provenance = json!({ "spec": spec, "seed": common.seed, "split": split });
        dataset_write(&data, &path, provenance)?;
    }
    Ok(())
}

fn cmd_train(
    data_path: &Path,
    checkpoint: Option<&Path>,
    scale: Scale,
    epochs: Option<usize>,
    mode: HeadMode,
    common: &Common,
) -> CliResult {
    let (header, data) = read_dataset(data_path)?;
    let mut profile = Profile::for_scale(scale);
    if let Some(e) = epochs {
        profile.epochs = e;
    }
    let net = profile.net_config(header.ensemble, header.n)?;
    let mut config = profile.train_config(common.seed, mode);
    config.f_lower = header.f_lower;
    config.f_upper = header.f_upper;
    let outcome = train::<f64>(&config, &net, &data)?;

    std::fs::create_dir_all(&common.out)?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| common.out.join("model.shbc"));
    let provenance = json!({ "train": config, "dataset": data_path.display().to_string() });
    outcome.model.save(&ckpt, provenance)?;

    let loss_path = common.out.join("loss.csv");
    let mut w = csv::Writer::from_path(&loss_path)?;
    w.write_record(["epoch", "loss"])?;
    for (i, l) in outcome.loss_history.iter().enumerate() {
        w.write_record([(i + 1).to_string(), format!("{l:e}")])?;
    }
    w.flush()?;
    println!("checkpoint {}", ckpt.display());
    println!("loss log {}", loss_path.display());
    if let (Some(first), Some(last)) = (outcome.loss_history.first(), outcome.loss_history.last()) {
        println!("epoch loss {first:.6e} -> {last:.6e}");
    }
    Ok(())
}

fn spec_from_header(header: &DatasetHeader) -> CliResult<TaskSpec> {
    let raw = header
        .provenance
        .get("spec")
        .cloned()
        .ok_or_else(|| Failure::config("dataset records no spec; pass --spec"))?;
    let spec: TaskSpec = serde_json::from_value(raw).map_err(|e| Failure::config(format!("recorded spec: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn cmd_eval(data_path: &Path, checkpoint: &Path, spec: Option<&Path>, common: &Common) -> CliResult {
    let (header, data) = read_dataset(data_path)?;
    let spec = match spec {
        Some(p) => read_spec(p)?,
        None => spec_from_header(&header)?,
    };
    let model = Model::<f64>::load(checkpoint).map_err(|e| Failure::from(e).context(checkpoint.display()))?;
    let report = evaluate(&spec, &model, &data)?;
    std::fs::create_dir_all(&common.out)?;
    let path = common.out.join("report.csv");
    report.save_csv(&path)?;
    for r in &report.rows {
        println!(
            "N {:>4}  mse_shadow {:.4e}  mse_bayes {:.4e}  reduction {:6.2}%",
            r.measurements,
            r.mse_shadow,
            r.mse_bayes,
            100.0 * r.reduction
        );
    }
    println!("report {}", path.display());
    Ok(())
}

fn cmd_reproduce(figure: &str, scale: Scale, epochs: Option<usize>, common: &Common) -> CliResult {
    let id: FigureId = figure.parse()?;
    let mut profile = Profile::for_scale(scale);
    if let Some(e) = epochs {
        profile.epochs = e;
    }
    let report = reproduce_figure_with(id, &profile, &common.out, common.seed)?;
    for r in &report.rows {
        println!(
            "n {} N {:>4}  mse_shadow {:.4e}  mse_bayes {:.4e}  reduction {:6.2}%",
            r.n,
            r.measurements,
            r.mse_shadow,
            r.mse_bayes,
            100.0 * r.reduction
        );
    }
    println!("plot data {}", common.out.join(format!("{id}.csv")).display());
    Ok(())
}

fn cmd_verify(seed: u64) -> CliResult {
    let results = shadowbayes::verify::run_all(seed)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: exit::CHECK,
            message: format!("{failed} of {} checks failed", results.len()),
        });
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
