//! Command implementations behind the `dstfs` binary.
//!
//! Every command writes its outputs plus a `manifest.json` (command, configuration hash,
//! seed, version) into one output directory. Outputs contain no timestamps, so rerunning
//! a command with the same configuration reproduces its files byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, SyntheticConfig};
use crate::dst::Strategy;
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig};
use crate::flops::{self, FlopsRequest};
use crate::importance::{AccumulationMode, Heatmap, ImportanceExport};
use crate::net::{save_checkpoint, DEFAULT_HIDDEN};
use crate::pipeline::{
    self, Baseline, BenchmarkConfig, ExperimentConfig, K_VALUES, L2_GRID, SPARSITY_GRID,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DSTFS_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "dstfs-out";

/// Experiment configuration file: a flat TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// `synthetic:<n_samples>` or a path to a CSV file (relative to the config file).
    pub dataset: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(rename = "K", alias = "k", default = "default_k")]
    pub k: usize,
    #[serde(default = "default_sparsity_grid")]
    pub sparsity_grid: Vec<f64>,
    #[serde(default = "default_l2_grid")]
    pub l2_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: Option<String>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_eval_repeats")]
    pub eval_repeats: usize,
    #[serde(default = "default_eval_epochs")]
    pub eval_epochs: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default = "default_synthetic_features")]
    pub synthetic_features: usize,
    #[serde(default = "default_synthetic_informative")]
    pub synthetic_informative: usize,
    /// Benchmark only: baselines to compare, e.g. `["SET-Attr", "Dense-QS"]`.
    pub methods: Option<Vec<String>>,
    /// Benchmark only: synthetic sample sizes.
    pub sample_sizes: Option<Vec<usize>>,
    /// Benchmark only: K values for the ranking report.
    pub k_values: Option<Vec<usize>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_label_column() -> String {
    "label".into()
}
fn default_method() -> String {
    "SET".into()
}
fn default_metric() -> String {
    "Attr".into()
}
fn default_mode() -> String {
    AccumulationMode::AllEpochs.name().into()
}
fn default_k() -> usize {
    100
}
fn default_sparsity_grid() -> Vec<f64> {
    SPARSITY_GRID.to_vec()
}
fn default_l2_grid() -> Vec<f64> {
    L2_GRID.to_vec()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_max_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    50
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}
fn default_zeta() -> f64 {
    crate::dst::DEFAULT_ZETA
}
fn default_eval_repeats() -> usize {
    EvalConfig::default().repeats
}
fn default_eval_epochs() -> usize {
    EvalConfig::default().epochs
}
fn default_synthetic_features() -> usize {
    200
}
fn default_synthetic_informative() -> usize {
    100
}

impl ConfigFile {
    /// Parses `text`, applying `key=value` overrides (values in TOML syntax, bare words
    /// taken as strings) before validation.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let value = parse_toml_value(raw.trim());
            table.insert(key.trim().to_string(), value);
        }
        let cfg: ConfigFile = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// SHA-256 over the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        hash_json(&serde_json::to_value(self).unwrap_or_default())
    }

    pub fn baseline(&self) -> Result<Baseline> {
        Ok(Baseline::new(self.method.parse()?, self.metric.parse()?))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut exp = ExperimentConfig::new(self.baseline()?, self.k);
        exp.mode = self.mode.parse()?;
        exp.sparsity_grid = self.sparsity_grid.clone();
        exp.l2_grid = self.l2_grid.clone();
        exp.seeds = self.seeds.clone();
        exp.zeta = self.zeta;
        exp.learning_rate = self.learning_rate;
        exp.max_epochs = self.max_epochs;
        exp.patience = self.patience;
        exp.batch_size = self.batch_size;
        exp.hidden = self.hidden.clone();
        exp.eval = EvalConfig {
            repeats: self.eval_repeats,
            epochs: self.eval_epochs,
            ..EvalConfig::default()
        };
        exp.validate()?;
        Ok(exp)
    }

    /// Loads (or generates), splits and standardizes the configured dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        let raw = if let Some(n) = self.dataset.strip_prefix("synthetic:") {
            let n_samples = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad synthetic size {n:?}")))?;
            data::generate_synthetic(&SyntheticConfig {
                n_samples,
                n_features: self.synthetic_features,
                n_informative: self.synthetic_informative,
                seed: self.data_seed,
            })?
        } else {
            let path = Path::new(&self.dataset);
            let path = if path.is_absolute() {
                path.to_path_buf()
            } else {
                self.base_dir.join(path)
            };
            data::load_csv(&path, &self.label_column)?
        };
        pipeline::prepare_dataset(raw, self.split_seed)
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn hash_json(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Output directory: explicit flag, then config, then environment, then `dstfs-out`.
pub fn resolve_output_dir(flag: Option<&Path>, config: Option<&ConfigFile>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(dir) = config.and_then(|c| c.output_dir.as_ref()) {
        let p = Path::new(dir);
        return match config {
            Some(c) if p.is_relative() => c.base_dir.join(p),
            _ => p.to_path_buf(),
        };
    }
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }

    fn manifest(&self, m: &Manifest) -> Result<PathBuf> {
        self.json("manifest.json", m)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SelectionSummary<'a> {
    baseline: &'a str,
    k: usize,
    chosen_sparsity: f64,
    chosen_l2: f64,
    epochs_run: Vec<usize>,
    accuracy_mean: f64,
    accuracy_std: f64,
    table_cell: String,
}

/// Grid search, top-K selection and downstream evaluation.
///
/// Writes `selected_features.txt` (K ranked indices of the first seed), `importance.csv`,
/// `selection.json`, `result.json` and `manifest.json`.
pub fn cmd_select(cfg: &ConfigFile, out_dir: &Path) -> Result<pipeline::ExperimentResult> {
    let exp = cfg.experiment()?;
    let ds = cfg.dataset()?;
    let result = pipeline::run_grid(&exp, &ds)?;
    let out = Output::create(out_dir)?;
    let first = &result.runs[0];
    data::write_index_file(&out.path("selected_features.txt"), &first.selected)?;
    ImportanceExport {
        metric: cfg.baseline()?.to_string(),
        mode: exp.mode,
        epoch: first.epochs_run,
        seed: first.seed,
        scores: first.scores.clone(),
    }
    .write_csv(&out.path("importance.csv"))?;
    out.json(
        "selection.json",
        &SelectionSummary {
            baseline: &result.baseline,
            k: exp.k,
            chosen_sparsity: result.chosen_sparsity,
            chosen_l2: result.chosen_l2,
            epochs_run: result.runs.iter().map(|r| r.epochs_run).collect(),
            accuracy_mean: result.accuracy.mean,
            accuracy_std: result.accuracy.std,
            table_cell: result.table_cell(),
        },
    )?;
    out.json("result.json", &result)?;
    out.manifest(&Manifest::new("select", cfg.hash(), cfg.first_seed()))?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
struct TrainSummary {
    baseline: String,
    sparsity: f64,
    l2: f64,
    seed: u64,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    train_losses: Vec<f64>,
    val_losses: Vec<f64>,
    flops: flops::FlopsReport,
}

/// One training run at the first grid entries and first seed.
///
/// Writes `checkpoint.json` (best validation network), `topology.jsonl`,
/// `importance.csv`, `train.json` and `manifest.json`.
pub fn cmd_train(cfg: &ConfigFile, out_dir: &Path) -> Result<()> {
    let exp = cfg.experiment()?;
    let ds = cfg.dataset()?;
    let sparsity = exp.effective_sparsity_grid()[0];
    let l2 = exp.l2_grid[0];
    let seed = cfg.first_seed();
    let train = exp.train_config(ds.n_samples(), l2);
    let dst_cfg = exp.dst_config(sparsity);
    let net = pipeline::init_network(&ds, &train, &dst_cfg, seed)?;
    let outcome = pipeline::train_with_importance(
        net,
        &ds,
        &train,
        &dst_cfg,
        exp.baseline.metric,
        exp.mode,
        seed,
    )?;
    let out = Output::create(out_dir)?;
    let snapshot = serde_json::to_value(cfg)?;
    save_checkpoint(&outcome.best, snapshot, &out.path("checkpoint.json"))?;
    outcome.topology.write_jsonl(&out.path("topology.jsonl"))?;
    ImportanceExport {
        metric: exp.baseline.to_string(),
        mode: exp.mode,
        epoch: outcome.epochs_run,
        seed,
        scores: outcome.accumulator.scores(),
    }
    .write_csv(&out.path("importance.csv"))?;
    let split = ds.split()?;
    let flops = flops::estimate_flops(&FlopsRequest {
        shape: outcome.last.shape(),
        sparsity,
        epochs_run: outcome.epochs_run,
        samples_per_epoch: split.train.len(),
        strategy: exp.baseline.method.strategy(),
        grad_batch_size: train.batch_size.min(split.train.len()),
    })?;
    out.json(
        "train.json",
        &TrainSummary {
            baseline: exp.baseline.to_string(),
            sparsity,
            l2,
            seed,
            epochs_run: outcome.epochs_run,
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
            train_losses: outcome.train_losses,
            val_losses: outcome.val_losses,
            flops,
        },
    )?;
    out.manifest(&Manifest::new("train", cfg.hash(), seed))?;
    Ok(())
}

/// Downstream accuracy of a given feature list; writes `evaluation.json`.
pub fn cmd_evaluate(cfg: &ConfigFile, features: &Path, out_dir: &Path) -> Result<eval::Summary> {
    let exp = cfg.experiment()?;
    let ds = cfg.dataset()?;
    let selected = data::read_index_file(features)?;
    let summary = eval::evaluate_subset_repeated(&ds, &selected, &exp.eval, cfg.first_seed())?;
    let out = Output::create(out_dir)?;
    out.json("evaluation.json", &summary)?;
    let mut hash_input = serde_json::to_value(cfg)?;
    hash_input["features"] = serde_json::json!(selected);
    out.manifest(&Manifest::new(
        "evaluate",
        hash_json(&hash_input),
        cfg.first_seed(),
    ))?;
    Ok(summary)
}

/// Synthetic coverage benchmark with ranking report.
///
/// Writes `coverage.csv` (one row per baseline, sample size and seed),
/// `coverage_mean.csv`, `ranking.csv`, `results.json` and `manifest.json`.
pub fn cmd_benchmark(cfg: &ConfigFile, out_dir: &Path) -> Result<pipeline::BenchmarkReport> {
    let experiment = cfg.experiment()?;
    let baselines = match &cfg.methods {
        Some(names) => names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<Vec<Baseline>>>()?,
        None => Baseline::ALL.to_vec(),
    };
    let k_values = cfg.k_values.clone().unwrap_or_else(|| {
        K_VALUES
            .iter()
            .copied()
            .filter(|&k| k <= cfg.synthetic_features)
            .collect()
    });
    let bench = BenchmarkConfig {
        baselines,
        sample_sizes: cfg
            .sample_sizes
            .clone()
            .unwrap_or_else(|| vec![100, 500, 1000, 10000]),
        seeds: cfg.seeds.clone(),
        n_features: cfg.synthetic_features,
        n_informative: cfg.synthetic_informative,
        k_values,
        experiment,
    };
    let report = pipeline::run_benchmark(&bench)?;
    let out = Output::create(out_dir)?;

    let mut rows = String::from("method,n_samples,seed,coverage,epochs_run\n");
    for r in &report.rows {
        let _ = writeln!(
            rows,
            "{},{},{},{:?},{}",
            r.baseline, r.n_samples, r.seed, r.coverage, r.epochs_run
        );
    }
    out.text("coverage.csv", &rows)?;

    let mut means = String::from("method,n_samples,mean_coverage\n");
    for (b, n, m) in report.mean_coverage() {
        let _ = writeln!(means, "{b},{n},{m:?}");
    }
    out.text("coverage_mean.csv", &means)?;

    let mut ranking = String::from("K,method,average_ranking_score\n");
    for (k, scores) in report.ranking()? {
        for (m, s) in scores {
            let _ = writeln!(ranking, "{k},{m},{s:?}");
        }
    }
    out.text("ranking.csv", &ranking)?;
    out.json("results.json", &report)?;
    out.manifest(&Manifest::new("benchmark", cfg.hash(), cfg.first_seed()))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArgs {
    pub samples: usize,
    pub features: usize,
    pub informative: usize,
    pub seed: u64,
}

/// Writes `synthetic.csv` (label column `label`), `informative.txt` and `manifest.json`.
pub fn cmd_synthetic(args: &SyntheticArgs, out_dir: &Path) -> Result<()> {
    let ds = data::generate_synthetic(&SyntheticConfig {
        n_samples: args.samples,
        n_features: args.features,
        n_informative: args.informative,
        seed: args.seed,
    })?;
    let out = Output::create(out_dir)?;
    ds.write_csv(&out.path("synthetic.csv"), "label")?;
    data::write_index_file(
        &out.path("informative.txt"),
        ds.informative.as_deref().unwrap_or_default(),
    )?;
    out.manifest(&Manifest::new(
        "synthetic",
        hash_json(&serde_json::to_value(args)?),
        args.seed,
    ))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsArgs {
    pub shape: Vec<usize>,
    pub sparsity: Vec<f64>,
    pub epochs: usize,
    pub samples: usize,
    pub strategy: Strategy,
    pub batch_size: usize,
}

/// Cost table across sparsity levels; writes `flops.json` and `manifest.json` and returns
/// the human-readable table.
pub fn cmd_flops(args: &FlopsArgs, out_dir: &Path) -> Result<String> {
    let reports = args
        .sparsity
        .iter()
        .map(|&p| {
            let strategy = if p == 0.0 {
                Strategy::None
            } else {
                args.strategy
            };
            let r = flops::estimate_flops(&FlopsRequest {
                shape: args.shape.clone(),
                sparsity: p,
                epochs_run: args.epochs,
                samples_per_epoch: args.samples,
                strategy,
                grad_batch_size: args.batch_size,
            })?;
            Ok((format!("P={p}"), r))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Output::create(out_dir)?;
    out.json("flops.json", &reports)?;
    out.manifest(&Manifest::new(
        "flops",
        hash_json(&serde_json::to_value(args)?),
        0,
    ))?;
    let mut table = flops::format_report_table(&reports);
    table.push_str("convention: ");
    table.push_str(flops::CONVENTION);
    table.push('\n');
    Ok(table)
}

/// Writes `heatmap.pgm`, `heatmap_grid.csv` and `manifest.json`.
pub fn cmd_heatmap(
    scores_path: &Path,
    height: usize,
    width: usize,
    out_dir: &Path,
) -> Result<Heatmap> {
    let scores = ImportanceExport::read_scores(scores_path)?;
    let heatmap = Heatmap::from_scores(&scores, height, width)?;
    let out = Output::create(out_dir)?;
    let pgm = out.path("heatmap.pgm");
    fs::write(&pgm, heatmap.to_pgm()).map_err(|e| Error::io(&pgm, e))?;
    out.text("heatmap_grid.csv", &heatmap.to_grid_csv())?;
    let hash =
        hash_json(&serde_json::json!({ "scores": scores, "height": height, "width": width }));
    out.manifest(&Manifest::new("heatmap", hash, 0))?;
    Ok(heatmap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = ConfigFile::parse(
            "dataset = \"synthetic:200\"\nK = 10\nseeds = [1, 2]\n",
            &[
                "max_epochs=3".into(),
                "method=Dense".into(),
                "l2_grid=[0.001]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.max_epochs, 3);
        assert_eq!(cfg.method, "Dense");
        assert_eq!(cfg.l2_grid, vec![0.001]);
        assert_eq!(cfg.sparsity_grid, SPARSITY_GRID.to_vec());
        assert_eq!(cfg.baseline().unwrap().to_string(), "Dense-Attr");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ConfigFile::parse("dataset = \"synthetic:200\"\nbogus = 1\n", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(ConfigFile::parse("dataset = \"x\"", &["nonsense".into()]).is_err());
    }

    #[test]
    fn hash_tracks_configuration() {
        let a = ConfigFile::parse("dataset = \"synthetic:200\"", &[]).unwrap();
        let b = ConfigFile::parse("dataset = \"synthetic:200\"", &[]).unwrap();
        let c = ConfigFile::parse("dataset = \"synthetic:201\"", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn output_dir_precedence() {
        let cfg = ConfigFile::parse("dataset = \"x\"\noutput_dir = \"/tmp/a\"", &[]).unwrap();
        assert_eq!(
            resolve_output_dir(Some(Path::new("/tmp/b")), Some(&cfg)),
            PathBuf::from("/tmp/b")
        );
        assert_eq!(
            resolve_output_dir(None, Some(&cfg)),
            PathBuf::from("/tmp/a")
        );
    }
}
