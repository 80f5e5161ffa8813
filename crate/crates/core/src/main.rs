//! `terelu`: train deep fully-connected networks with the TERELU activation
//! (or any of the comparison activations), verify every gradient against a
//! finite-difference oracle, and reshape run metrics for plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use terelu::cli::{
    self, Architecture, ExperimentConfig, PartialConfig, RunMetrics, DATA_DIR_ENV,
};
use terelu::data::{self, MNIST_FILES};
use terelu::error::Error;
use terelu::gradcheck::suite::{self, NamedCheck};
use terelu::network::{self, TrainConfig};

#[derive(Parser)]
#[command(name = "terelu", version, about = "Deep-FCNN activation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and append one metrics row per epoch to a CSV.
    Train(TrainArgs),
    /// Run the gradient-check suite against the finite-difference oracle.
    Gradcheck(GradcheckArgs),
    /// Merge run CSVs into long format (run,epoch,metric,value).
    PlotData(PlotDataArgs),
    /// Show where data is loaded from and whether the files are present.
    DataInfo(DataInfoArgs),
}

/// Every flag mirrors a `key = value` entry in the config file; flags win
/// over file values.
#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// relu | lrelu | elu | srelu | apl | softplus | tanh | terelu | maxout
    #[arg(long)]
    activation: Option<String>,
    /// Negative-branch scale for terelu and elu.
    #[arg(long)]
    alpha: Option<f64>,
    /// Initial trainable terelu beta.
    #[arg(long)]
    beta_init: Option<f64>,
    /// terelu saturation threshold.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lrelu_alpha: Option<f64>,
    /// Four comma-separated values: t_r,a_r,t_l,a_l.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    srelu: Option<Vec<f64>>,
    /// Comma-separated hinge slopes.
    #[arg(long, value_delimiter = ',')]
    apl_a: Option<Vec<f64>>,
    /// Comma-separated hinge locations.
    #[arg(long, value_delimiter = ',')]
    apl_b: Option<Vec<f64>>,
    #[arg(long)]
    softplus_alpha: Option<f64>,
    #[arg(long)]
    softplus_beta: Option<f64>,
    /// Pieces per maxout unit.
    #[arg(long)]
    maxout_k: Option<usize>,
    /// Hidden layer count.
    #[arg(long)]
    depth: Option<usize>,
    /// Hidden layer width.
    #[arg(long)]
    width: Option<usize>,
    /// Batch normalization before each activation (default on).
    #[arg(long, overrides_with = "no_bn")]
    bn: bool,
    #[arg(long)]
    no_bn: bool,
    /// mnist | blobs
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    blob_per_class: Option<usize>,
    #[arg(long)]
    blob_classes: Option<usize>,
    #[arg(long)]
    blob_dim: Option<usize>,
    #[arg(long)]
    blob_separation: Option<f64>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding the IDX files (falls back to $TERELU_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

impl TrainArgs {
    fn to_partial(&self) -> PartialConfig {
        PartialConfig {
            activation: self.activation.clone(),
            alpha: self.alpha,
            beta_init: self.beta_init,
            mu: self.mu,
            lrelu_alpha: self.lrelu_alpha,
            srelu: self.srelu.as_ref().map(|v| [v[0], v[1], v[2], v[3]]),
            apl_a: self.apl_a.clone(),
            apl_b: self.apl_b.clone(),
            softplus_alpha: self.softplus_alpha,
            softplus_beta: self.softplus_beta,
            maxout_k: self.maxout_k,
            depth: self.depth,
            width: self.width,
            bn: if self.no_bn {
                Some(false)
            } else if self.bn {
                Some(true)
            } else {
                None
            },
            dataset: self.dataset.clone(),
            blob_per_class: self.blob_per_class,
            blob_classes: self.blob_classes,
            blob_dim: self.blob_dim,
            blob_separation: self.blob_separation,
            train_size: self.train_size,
            val_size: self.val_size,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            seed: self.seed,
            data_dir: self.data_dir.clone(),
            out_csv: self.out_csv.clone(),
        }
    }
}

#[derive(Args)]
struct GradcheckArgs {
    /// Restrict to one activation kind (terelu adds a per-branch breakdown).
    #[arg(long)]
    kind: Option<String>,
    /// Sample count per activation check.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Per-run metrics CSVs produced by `train`.
    #[arg(required = true)]
    csvs: Vec<PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataInfoArgs {
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::PlotData(args) => cmd_plot_data(&args),
        Command::DataInfo(args) => cmd_data_info(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode, Error> {
    let file_cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cli::parse_config_file(&text)?
        }
        None => PartialConfig::default(),
    };
    let cfg = ExperimentConfig::resolve(file_cfg.merged_under(args.to_partial()))?;

    let (train_ds, val_ds) = cfg.load_data()?;
    let input_dim = train_ds.features.cols();
    let classes = train_ds.class_count;
    let mut model = match cfg.architecture() {
        Architecture::Activation(spec) => network::build_fcnn(
            cfg.depth, cfg.width, input_dim, classes, spec, cfg.bn, cfg.seed,
        ),
        Architecture::Maxout { pieces } => network::build_maxout_fcnn(
            cfg.depth, cfg.width, input_dim, classes, pieces, cfg.bn, cfg.seed,
        ),
    };

    let out = File::create(&cfg.out_csv).map_err(|e| Error::io(&cfg.out_csv, e))?;
    let mut out = BufWriter::new(out);
    for line in cfg.echo_lines() {
        writeln!(out, "{line}").map_err(|e| Error::io(&cfg.out_csv, e))?;
    }
    writeln!(out, "{}", cli::metrics_header(model.terelu_betas().len()))
        .map_err(|e| Error::io(&cfg.out_csv, e))?;
    out.flush().map_err(|e| Error::io(&cfg.out_csv, e))?;

    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    let mut write_err: Option<std::io::Error> = None;
    let result = network::train(&mut model, &train_ds, &val_ds, &train_cfg, |row| {
        if write_err.is_none() {
            write_err = writeln!(out, "{}", cli::format_metrics_row(row))
                .and_then(|_| out.flush())
                .err();
        }
    });
    if let Some(e) = write_err {
        return Err(Error::io(&cfg.out_csv, e));
    }
    let rows = result?;
    let last = rows.last().expect("at least one epoch");
    println!(
        "run {} depth={} seed={}: {} epochs, train acc {:.4}, val acc {:.4} -> {}",
        cfg.activation,
        cfg.depth,
        cfg.seed,
        rows.len(),
        last.train_acc,
        last.val_acc,
        cfg.out_csv.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_checks(checks: &[NamedCheck]) -> bool {
    println!("{:<34} {:>12} {:>10} {}", "check", "max rel err", "tolerance", "status");
    let mut all_passed = true;
    for c in checks {
        println!(
            "{:<34} {:>12.3e} {:>10.0e} {}",
            c.name,
            c.report.max_rel_err,
            c.report.tolerance,
            if c.report.passed { "pass" } else { "FAIL" }
        );
        if !c.report.passed {
            eprintln!(
                "  worst {}: analytic {:.9e} vs numeric {:.9e}",
                c.report.worst_index, c.report.analytic, c.report.numeric
            );
            all_passed = false;
        }
    }
    all_passed
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<ExitCode, Error> {
    let checks = match args.kind.as_deref() {
        None => suite::full_suite(args.points, args.seed),
        Some("terelu") => suite::terelu_branch_checks(args.points, args.seed),
        Some(kind) => {
            let spec = terelu::ActivationSpec::default_of(kind)
                .ok_or_else(|| Error::Config(format!("unknown activation kind '{kind}'")))?;
            vec![NamedCheck {
                name: format!("activation {kind} dx"),
                report: suite::activation_dx_check(&spec, args.points, args.seed),
            }]
        }
    };
    let all_passed = print_checks(&checks);
    if all_passed {
        println!("all {} checks passed", checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradient checks failed");
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_plot_data(args: &PlotDataArgs) -> Result<ExitCode, Error> {
    let mut runs: Vec<(String, RunMetrics)> = Vec::new();
    for path in &args.csvs {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let metrics = cli::parse_metrics_csv(&text, &path.display().to_string())?;
        runs.push((cli::run_name(path), metrics));
    }
    let merged = cli::merge_long_format(&runs);
    match &args.out {
        Some(path) => std::fs::write(path, merged).map_err(|e| Error::io(path, e))?,
        None => print!("{merged}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_data_info(args: &DataInfoArgs) -> Result<ExitCode, Error> {
    let (dir, source) = match &args.data_dir {
        Some(d) => (d.clone(), "--data-dir".to_owned()),
        None => match std::env::var_os(DATA_DIR_ENV) {
            Some(d) => (PathBuf::from(d), format!("${DATA_DIR_ENV}")),
            None => (PathBuf::from("data"), "default".to_owned()),
        },
    };
    println!("data directory: {} (from {source})", dir.display());
    println!("set {DATA_DIR_ENV} or pass --data-dir to change it");
    println!("expected IDX files:");
    for name in MNIST_FILES {
        let path = dir.join(name);
        println!("  {name}: {}", if path.is_file() { "present" } else { "missing" });
    }
    for (images, labels, what) in [
        (MNIST_FILES[0], MNIST_FILES[1], "train"),
        (MNIST_FILES[2], MNIST_FILES[3], "test"),
    ] {
        let (ip, lp) = (dir.join(images), dir.join(labels));
        if ip.is_file() && lp.is_file() {
            match data::load_mnist_idx(&ip, &lp) {
                Ok(ds) => println!("{what} set: {} examples, {} features", ds.len(), ds.features.cols()),
                Err(e) => println!("{what} set: unreadable ({e})"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
