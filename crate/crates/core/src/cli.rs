//! Experiment configuration and the file formats behind the command-line
//! tool: flat `key = value` config files and the per-run metrics CSV.
//!
//! Precedence is defaults < config file < explicit flags, and the effective
//! configuration is echoed as `#`-prefixed comment lines at the top of the
//! CSV so a run is reproducible from its own output. Floats in metric rows
//! carry 17 significant digits, enough to round-trip `f64` exactly, which
//! is what makes byte-identical CSVs a usable determinism check.

use std::path::{Path, PathBuf};

use crate::activations::{
    ActivationSpec, AplParams, EluParams, LreluParams, SoftplusParams, SreluParams, TereluParams,
};
use crate::data::{self, Dataset};
use crate::error::Error;
use crate::network::MetricsRow;

/// Environment variable holding the default data directory.
pub const DATA_DIR_ENV: &str = "TERELU_DATA_DIR";

pub const ACTIVATION_NAMES: [&str; 9] =
    ["relu", "lrelu", "elu", "srelu", "apl", "softplus", "tanh", "terelu", "maxout"];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetChoice {
    Mnist,
    Blobs,
}

/// Fields as given by one source (config file or command line); `None`
/// means "not specified here".
#[derive(Debug, Clone, Default)]
pub struct PartialConfig {
    pub activation: Option<String>,
    pub alpha: Option<f64>,
    pub beta_init: Option<f64>,
    pub mu: Option<f64>,
    pub lrelu_alpha: Option<f64>,
    pub srelu: Option<[f64; 4]>,
    pub apl_a: Option<Vec<f64>>,
    pub apl_b: Option<Vec<f64>>,
    pub softplus_alpha: Option<f64>,
    pub softplus_beta: Option<f64>,
    pub maxout_k: Option<usize>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub bn: Option<bool>,
    pub dataset: Option<String>,
    pub blob_per_class: Option<usize>,
    pub blob_classes: Option<usize>,
    pub blob_dim: Option<usize>,
    pub blob_separation: Option<f64>,
    pub train_size: Option<usize>,
    pub val_size: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, Error> {
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, Error> {
    match value.trim() {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(Error::Config(format!("key '{key}': cannot parse '{other}' as a flag"))),
    }
}

/// Parse a flat `key = value` config file. Keys are the kebab-case flag
/// names; blank lines and `#` comments are ignored.
pub fn parse_config_file(text: &str) -> Result<PartialConfig, Error> {
    let mut cfg = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected 'key = value'", lineno + 1)));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "activation" => cfg.activation = Some(value.to_owned()),
            "alpha" => cfg.alpha = Some(parse_num(key, value)?),
            "beta-init" => cfg.beta_init = Some(parse_num(key, value)?),
            "mu" => cfg.mu = Some(parse_num(key, value)?),
            "lrelu-alpha" => cfg.lrelu_alpha = Some(parse_num(key, value)?),
            "srelu" => {
                let v = parse_f64_list(key, value)?;
                let four: [f64; 4] = v.try_into().map_err(|v: Vec<f64>| {
                    Error::Config(format!("key 'srelu': expected 4 comma-separated values, got {}", v.len()))
                })?;
                cfg.srelu = Some(four);
            }
            "apl-a" => cfg.apl_a = Some(parse_f64_list(key, value)?),
            "apl-b" => cfg.apl_b = Some(parse_f64_list(key, value)?),
            "softplus-alpha" => cfg.softplus_alpha = Some(parse_num(key, value)?),
            "softplus-beta" => cfg.softplus_beta = Some(parse_num(key, value)?),
            "maxout-k" => cfg.maxout_k = Some(parse_num(key, value)?),
            "depth" => cfg.depth = Some(parse_num(key, value)?),
            "width" => cfg.width = Some(parse_num(key, value)?),
            "bn" => cfg.bn = Some(parse_bool(key, value)?),
            "dataset" => cfg.dataset = Some(value.to_owned()),
            "blob-per-class" => cfg.blob_per_class = Some(parse_num(key, value)?),
            "blob-classes" => cfg.blob_classes = Some(parse_num(key, value)?),
            "blob-dim" => cfg.blob_dim = Some(parse_num(key, value)?),
            "blob-separation" => cfg.blob_separation = Some(parse_num(key, value)?),
            "train-size" => cfg.train_size = Some(parse_num(key, value)?),
            "val-size" => cfg.val_size = Some(parse_num(key, value)?),
            "epochs" => cfg.epochs = Some(parse_num(key, value)?),
            "batch-size" => cfg.batch_size = Some(parse_num(key, value)?),
            "learning-rate" => cfg.learning_rate = Some(parse_num(key, value)?),
            "momentum" => cfg.momentum = Some(parse_num(key, value)?),
            "seed" => cfg.seed = Some(parse_num(key, value)?),
            "data-dir" => cfg.data_dir = Some(PathBuf::from(value)),
            "out-csv" => cfg.out_csv = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
    }
    Ok(cfg)
}

impl PartialConfig {
    /// Overlay: values in `over` win.
    pub fn merged_under(self, over: PartialConfig) -> PartialConfig {
        macro_rules! pick {
            ($field:ident) => {
                over.$field.or(self.$field)
            };
        }
        PartialConfig {
            activation: pick!(activation),
            alpha: pick!(alpha),
            beta_init: pick!(beta_init),
            mu: pick!(mu),
            lrelu_alpha: pick!(lrelu_alpha),
            srelu: pick!(srelu),
            apl_a: pick!(apl_a),
            apl_b: pick!(apl_b),
            softplus_alpha: pick!(softplus_alpha),
            softplus_beta: pick!(softplus_beta),
            maxout_k: pick!(maxout_k),
            depth: pick!(depth),
            width: pick!(width),
            bn: pick!(bn),
            dataset: pick!(dataset),
            blob_per_class: pick!(blob_per_class),
            blob_classes: pick!(blob_classes),
            blob_dim: pick!(blob_dim),
            blob_separation: pick!(blob_separation),
            train_size: pick!(train_size),
            val_size: pick!(val_size),
            epochs: pick!(epochs),
            batch_size: pick!(batch_size),
            learning_rate: pick!(learning_rate),
            momentum: pick!(momentum),
            seed: pick!(seed),
            data_dir: pick!(data_dir),
            out_csv: pick!(out_csv),
        }
    }
}

/// Fully-resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub activation: String,
    pub alpha: f64,
    pub beta_init: f64,
    pub mu: f64,
    pub lrelu_alpha: f64,
    pub srelu: [f64; 4],
    pub apl_a: Vec<f64>,
    pub apl_b: Vec<f64>,
    pub softplus_alpha: f64,
    pub softplus_beta: f64,
    pub maxout_k: usize,
    pub depth: usize,
    pub width: usize,
    pub bn: bool,
    pub dataset: DatasetChoice,
    pub blob_per_class: usize,
    pub blob_classes: usize,
    pub blob_dim: usize,
    pub blob_separation: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_csv: PathBuf,
}

/// Either an elementwise activation or the maxout architecture.
#[derive(Debug, Clone)]
pub enum Architecture {
    Activation(ActivationSpec),
    Maxout { pieces: usize },
}

impl ExperimentConfig {
    /// Fill the gaps with defaults, read the data-dir environment fallback,
    /// and validate everything.
    pub fn resolve(p: PartialConfig) -> Result<ExperimentConfig, Error> {
        let data_dir = p
            .data_dir
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        let cfg = ExperimentConfig {
            activation: p.activation.unwrap_or_else(|| "terelu".to_owned()),
            alpha: p.alpha.unwrap_or(1.0),
            beta_init: p.beta_init.unwrap_or(1.0),
            mu: p.mu.unwrap_or(1.0),
            lrelu_alpha: p.lrelu_alpha.unwrap_or(0.01),
            srelu: p.srelu.unwrap_or([1.0, 0.5, -1.0, 0.1]),
            apl_a: p.apl_a.unwrap_or_else(|| vec![0.5]),
            apl_b: p.apl_b.unwrap_or_else(|| vec![1.0]),
            softplus_alpha: p.softplus_alpha.unwrap_or(1.0),
            softplus_beta: p.softplus_beta.unwrap_or(1.0),
            maxout_k: p.maxout_k.unwrap_or(2),
            depth: p.depth.unwrap_or(54),
            width: p.width.unwrap_or(64),
            bn: p.bn.unwrap_or(true),
            dataset: match p.dataset.as_deref().unwrap_or("mnist") {
                "mnist" => DatasetChoice::Mnist,
                "blobs" => DatasetChoice::Blobs,
                other => {
                    return Err(Error::Config(format!(
                        "unknown dataset '{other}' (expected 'mnist' or 'blobs')"
                    )))
                }
            },
            blob_per_class: p.blob_per_class.unwrap_or(500),
            blob_classes: p.blob_classes.unwrap_or(2),
            blob_dim: p.blob_dim.unwrap_or(16),
            blob_separation: p.blob_separation.unwrap_or(10.0),
            train_size: p.train_size.unwrap_or(10000),
            val_size: p.val_size.unwrap_or(2000),
            epochs: p.epochs.unwrap_or(30),
            batch_size: p.batch_size.unwrap_or(64),
            learning_rate: p.learning_rate.unwrap_or(0.01),
            momentum: p.momentum.unwrap_or(0.9),
            seed: p.seed.unwrap_or(1),
            data_dir,
            out_csv: p.out_csv.unwrap_or_else(|| PathBuf::from("metrics.csv")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !ACTIVATION_NAMES.contains(&self.activation.as_str()) {
            return bad(format!(
                "unknown activation '{}' (expected one of {})",
                self.activation,
                ACTIVATION_NAMES.join(", ")
            ));
        }
        if self.learning_rate <= 0.0 {
            return bad(format!("learning-rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size < 2 {
            return bad(format!("batch-size must be at least 2, got {}", self.batch_size));
        }
        if self.epochs == 0 || self.depth == 0 || self.width == 0 {
            return bad("epochs, depth, and width must be positive".to_owned());
        }
        if self.maxout_k < 2 {
            return bad(format!("maxout-k must be at least 2, got {}", self.maxout_k));
        }
        if self.activation == "terelu" && (self.alpha <= 0.0 || self.mu <= 0.0) {
            return bad(format!("terelu requires alpha > 0 and mu > 0, got {} and {}", self.alpha, self.mu));
        }
        if self.activation == "lrelu" && self.lrelu_alpha < 0.0 {
            return bad(format!("lrelu-alpha must be non-negative, got {}", self.lrelu_alpha));
        }
        if self.activation == "elu" && self.alpha < 0.0 {
            return bad(format!("elu alpha must be non-negative, got {}", self.alpha));
        }
        if self.activation == "srelu" && self.srelu[2] > self.srelu[0] {
            return bad(format!("srelu t_l = {} must not exceed t_r = {}", self.srelu[2], self.srelu[0]));
        }
        if self.activation == "apl"
            && (self.apl_a.is_empty() || self.apl_a.len() != self.apl_b.len())
        {
            return bad("apl-a and apl-b must be non-empty and the same length".to_owned());
        }
        if self.activation == "softplus" && self.softplus_beta == 0.0 {
            return bad("softplus-beta must be nonzero".to_owned());
        }
        if self.train_size == 0 || self.val_size == 0 {
            return bad("train-size and val-size must be positive".to_owned());
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        match self.activation.as_str() {
            "relu" => Architecture::Activation(ActivationSpec::Relu),
            "lrelu" => Architecture::Activation(ActivationSpec::Lrelu(LreluParams::new(self.lrelu_alpha))),
            "elu" => Architecture::Activation(ActivationSpec::Elu(EluParams::new(self.alpha))),
            "srelu" => Architecture::Activation(ActivationSpec::Srelu(SreluParams::new(
                self.srelu[0],
                self.srelu[1],
                self.srelu[2],
                self.srelu[3],
            ))),
            "apl" => Architecture::Activation(ActivationSpec::Apl(AplParams::new(
                self.apl_a.clone(),
                self.apl_b.clone(),
            ))),
            "softplus" => Architecture::Activation(ActivationSpec::ParametricSoftplus(
                SoftplusParams::new(self.softplus_alpha, self.softplus_beta),
            )),
            "tanh" => Architecture::Activation(ActivationSpec::Tanh),
            "terelu" => Architecture::Activation(ActivationSpec::Terelu(TereluParams::new(
                self.alpha,
                self.mu,
                self.beta_init,
            ))),
            "maxout" => Architecture::Maxout { pieces: self.maxout_k },
            other => unreachable!("validated activation '{other}'"),
        }
    }

    /// The effective configuration as `# key = value` comment lines, in a
    /// fixed key order.
    pub fn echo_lines(&self) -> Vec<String> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            format!("# activation = {}", self.activation),
            format!("# alpha = {}", self.alpha),
            format!("# beta-init = {}", self.beta_init),
            format!("# mu = {}", self.mu),
            format!("# lrelu-alpha = {}", self.lrelu_alpha),
            format!("# srelu = {}", list(&self.srelu)),
            format!("# apl-a = {}", list(&self.apl_a)),
            format!("# apl-b = {}", list(&self.apl_b)),
            format!("# softplus-alpha = {}", self.softplus_alpha),
            format!("# softplus-beta = {}", self.softplus_beta),
            format!("# maxout-k = {}", self.maxout_k),
            format!("# depth = {}", self.depth),
            format!("# width = {}", self.width),
            format!("# bn = {}", self.bn),
            format!(
                "# dataset = {}",
                match self.dataset {
                    DatasetChoice::Mnist => "mnist",
                    DatasetChoice::Blobs => "blobs",
                }
            ),
            format!("# blob-per-class = {}", self.blob_per_class),
            format!("# blob-classes = {}", self.blob_classes),
            format!("# blob-dim = {}", self.blob_dim),
            format!("# blob-separation = {}", self.blob_separation),
            format!("# train-size = {}", self.train_size),
            format!("# val-size = {}", self.val_size),
            format!("# epochs = {}", self.epochs),
            format!("# batch-size = {}", self.batch_size),
            format!("# learning-rate = {}", self.learning_rate),
            format!("# momentum = {}", self.momentum),
            format!("# seed = {}", self.seed),
            format!("# data-dir = {}", self.data_dir.display()),
            format!("# out-csv = {}", self.out_csv.display()),
        ]
    }

    /// Load the train/validation pair this configuration asks for.
    ///
    /// For MNIST, a stratified subset of `train-size + val-size` examples is
    /// drawn from the training files and split; the held-out tail is the
    /// validation set. For blobs, two independent synthetic sets are
    /// generated (validation uses a fifth of the per-class count).
    pub fn load_data(&self) -> Result<(Dataset, Dataset), Error> {
        match self.dataset {
            DatasetChoice::Mnist => {
                let images = self.data_dir.join(data::MNIST_FILES[0]);
                let labels = self.data_dir.join(data::MNIST_FILES[1]);
                if !images.is_file() || !labels.is_file() {
                    return Err(Error::MissingData(format!(
                        "MNIST files not found under '{}'. Expected the canonical names:\n  {}\n\
                         Point --data-dir (or {DATA_DIR_ENV}) at a directory containing them.",
                        self.data_dir.display(),
                        data::MNIST_FILES.join("\n  "),
                    )));
                }
                let full = data::load_mnist_idx(&images, &labels)?;
                let want = self.train_size + self.val_size;
                if want > full.len() {
                    return Err(Error::Config(format!(
                        "train-size + val-size = {want} exceeds the {} available examples",
                        full.len()
                    )));
                }
                let sample = data::subset(&full, want, self.seed);
                Ok(sample.split_at(self.train_size))
            }
            DatasetChoice::Blobs => {
                let train = data::synthetic_blobs(
                    self.blob_per_class,
                    self.blob_classes,
                    self.blob_dim,
                    self.blob_separation,
                    self.seed,
                );
                let val = data::synthetic_blobs(
                    (self.blob_per_class / 5).max(1),
                    self.blob_classes,
                    self.blob_dim,
                    self.blob_separation,
                    self.seed.wrapping_add(1),
                );
                Ok((train, val))
            }
        }
    }
}

pub const CSV_FIXED_COLUMNS: [&str; 5] = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"];

/// Header row: the fixed columns plus one `beta_i` per TERELU layer.
pub fn metrics_header(beta_count: usize) -> String {
    let mut cols: Vec<String> = CSV_FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for i in 0..beta_count {
        cols.push(format!("beta_{i}"));
    }
    cols.join(",")
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_metrics_row(row: &MetricsRow) -> String {
    let mut fields = vec![
        row.epoch.to_string(),
        fmt_float(row.train_loss),
        fmt_float(row.train_acc),
        fmt_float(row.val_loss),
        fmt_float(row.val_acc),
    ];
    fields.extend(row.beta_values.iter().map(|&b| fmt_float(b)));
    fields.join(",")
}

/// One parsed metrics CSV.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Parse and validate a metrics CSV (comment lines skipped). The schema is
/// checked column by column so mismatches name the offending column.
pub fn parse_metrics_csv(text: &str, source: &str) -> Result<RunMetrics, Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvSchema(format!("{source}: empty CSV, no header row")))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_owned()).collect();
    for (i, expected) in CSV_FIXED_COLUMNS.iter().enumerate() {
        match columns.get(i) {
            Some(got) if got == expected => {}
            Some(got) => {
                return Err(Error::CsvSchema(format!(
                    "{source}: column {i} is '{got}', expected '{expected}'"
                )))
            }
            None => {
                return Err(Error::CsvSchema(format!(
                    "{source}: missing column {i} ('{expected}')"
                )))
            }
        }
    }
    for (i, got) in columns.iter().enumerate().skip(CSV_FIXED_COLUMNS.len()) {
        let expected = format!("beta_{}", i - CSV_FIXED_COLUMNS.len());
        if *got != expected {
            return Err(Error::CsvSchema(format!(
                "{source}: column {i} is '{got}', expected '{expected}'"
            )));
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::CsvSchema(format!(
                "{source}: row has {} fields, header has {} columns",
                fields.len(),
                columns.len()
            )));
        }
        let row: Result<Vec<f64>, Error> = fields
            .iter()
            .zip(&columns)
            .map(|(f, c)| {
                f.trim()
                    .parse()
                    .map_err(|_| Error::CsvSchema(format!("{source}: bad value '{f}' in column '{c}'")))
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::CsvSchema(format!("{source}: no data rows")));
    }
    Ok(RunMetrics { columns, rows })
}

/// Reshape one or more runs into long format (`run,epoch,metric,value`),
/// one output row per non-epoch column of each input row.
pub fn merge_long_format(runs: &[(String, RunMetrics)]) -> String {
    let mut out = String::from("run,epoch,metric,value\n");
    for (name, metrics) in runs {
        for row in &metrics.rows {
            let epoch = row[0] as i64;
            for (col, &value) in metrics.columns.iter().zip(row).skip(1) {
                out.push_str(&format!("{name},{epoch},{col},{}\n", fmt_float(value)));
            }
        }
    }
    out
}

/// File stem used as the run identifier in merged output.
pub fn run_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let text = "\n# comment\nactivation = elu\nalpha = 0.7\ndepth = 8\nbn = false\nsrelu = 1,0.5,-1,0.1\n";
        let p = parse_config_file(text).unwrap();
        assert_eq!(p.activation.as_deref(), Some("elu"));
        assert_eq!(p.alpha, Some(0.7));
        assert_eq!(p.depth, Some(8));
        assert_eq!(p.bn, Some(false));
        assert_eq!(p.srelu, Some([1.0, 0.5, -1.0, 0.1]));
    }

    #[test]
    fn config_file_rejects_unknown_key() {
        let err = parse_config_file("learning_rate = 0.1").unwrap_err();
        assert!(err.to_string().contains("unknown config key"), "{err}");
    }

    #[test]
    fn flags_override_file_values() {
        let file = parse_config_file("depth = 8\nwidth = 32").unwrap();
        let flags = PartialConfig { depth: Some(20), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file.merged_under(flags)).unwrap();
        assert_eq!(cfg.depth, 20); // flag wins
        assert_eq!(cfg.width, 32); // file fills the gap
        assert_eq!(cfg.batch_size, 64); // default fills the rest
    }

    #[test]
    fn resolve_rejects_bad_values() {
        let bad = PartialConfig { learning_rate: Some(0.0), ..Default::default() };
        assert!(ExperimentConfig::resolve(bad).is_err());
        let bad = PartialConfig { activation: Some("selu".into()), ..Default::default() };
        assert!(ExperimentConfig::resolve(bad).is_err());
        let bad = PartialConfig { momentum: Some(1.0), ..Default::default() };
        assert!(ExperimentConfig::resolve(bad).is_err());
    }

    #[test]
    fn echo_lines_cover_every_key() {
        let cfg = ExperimentConfig::resolve(PartialConfig::default()).unwrap();
        let echo = cfg.echo_lines();
        assert_eq!(echo.len(), 28);
        for line in &echo {
            assert!(line.starts_with("# "), "{line}");
            assert!(line.contains(" = "), "{line}");
        }
    }

    #[test]
    fn metrics_row_formatting_is_fixed_width() {
        let row = MetricsRow {
            epoch: 3,
            train_loss: 0.5,
            train_acc: 1.0,
            val_loss: 2.302585092994046,
            val_acc: 0.25,
            beta_values: vec![1.0],
        };
        let line = format_metrics_row(&row);
        assert_eq!(
            line,
            "3,5.0000000000000000e-1,1.0000000000000000e0,2.3025850929940459e0,2.5000000000000000e-1,1.0000000000000000e0"
        );
    }

    #[test]
    fn parse_metrics_csv_accepts_own_output() {
        let mut text = String::new();
        text.push_str("# seed = 1\n");
        text.push_str(&metrics_header(1));
        text.push('\n');
        let row = MetricsRow {
            epoch: 0,
            train_loss: 1.0,
            train_acc: 0.5,
            val_loss: 1.5,
            val_acc: 0.25,
            beta_values: vec![1.0],
        };
        text.push_str(&format_metrics_row(&row));
        text.push('\n');
        let parsed = parse_metrics_csv(&text, "test.csv").unwrap();
        assert_eq!(parsed.columns.len(), 6);
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.rows[0][3], 1.5);
    }

    #[test]
    fn parse_metrics_csv_names_bad_column() {
        let err = parse_metrics_csv("epoch,train_loss,train_acc,loss,val_acc\n1,2,3,4,5\n", "x.csv")
            .unwrap_err();
        assert!(err.to_string().contains("column 3"), "{err}");
        assert!(err.to_string().contains("val_loss"), "{err}");
    }

    #[test]
    fn parse_metrics_csv_rejects_empty_input() {
        assert!(parse_metrics_csv("", "x.csv").is_err());
        // header but no rows is also an error
        let err = parse_metrics_csv(&format!("{}\n", metrics_header(0)), "x.csv").unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn merge_long_format_row_arithmetic() {
        let header = metrics_header(1);
        let mk = |epochs: usize| {
            let mut text = format!("{header}\n");
            for e in 0..epochs {
                text.push_str(&format!("{e},1e0,2e0,3e0,4e0,5e0\n"));
            }
            parse_metrics_csv(&text, "r").unwrap()
        };
        let runs = vec![("a".to_owned(), mk(3)), ("b".to_owned(), mk(3))];
        let merged = merge_long_format(&runs);
        // header plus 2 runs x 3 epochs x 5 metrics
        assert_eq!(merged.lines().count(), 1 + 2 * 3 * 5);
        assert!(merged.starts_with("run,epoch,metric,value\n"));
        assert!(merged.contains("a,2,beta_0,"));
    }
}
