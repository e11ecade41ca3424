//! Training with importance accumulation, early stopping, validation-driven grid search
//! over sparsity and L2, sparsity sweeps, and the synthetic coverage benchmark.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, SyntheticConfig};
use crate::dst::{self, DstConfig, Strategy, TopologyLog, DEFAULT_ZETA};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, Summary};
use crate::flops::{self, FlopsReport, FlopsRequest};
use crate::importance::{self, AccumulationMode, ImportanceAccumulator};
use crate::net::{Activation, Adam, Network, DEFAULT_HIDDEN};

pub const SPARSITY_GRID: [f64; 6] = [0.25, 0.5, 0.80, 0.9, 0.95, 0.98];
pub const L2_GRID: [f64; 3] = [5e-5, 1e-4, 1e-3];
pub const K_VALUES: [usize; 5] = [25, 50, 75, 100, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Dense,
    #[serde(rename = "SET")]
    Set,
    RigL,
}

impl Method {
    pub fn strategy(self) -> Strategy {
        match self {
            Method::Dense => Strategy::None,
            Method::Set => Strategy::Set,
            Method::RigL => Strategy::RigL,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::Dense => "Dense",
            Method::Set => "SET",
            Method::RigL => "RigL",
        }
    }
}

/// Importance metric: first-layer neuron strength or output neuron attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "QS")]
    Strength,
    #[serde(rename = "Attr")]
    Attribution,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Strength => "QS",
            Metric::Attribution => "Attr",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Method::Dense),
            "set" => Ok(Method::Set),
            "rigl" => Ok(Method::RigL),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qs" | "strength" => Ok(Metric::Strength),
            "attr" | "attribution" => Ok(Metric::Attribution),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

/// One of the six method/metric combinations, e.g. `SET-Attr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Baseline {
    pub method: Method,
    pub metric: Metric,
}

impl Baseline {
    pub const ALL: [Baseline; 6] = [
        Baseline::new(Method::Dense, Metric::Strength),
        Baseline::new(Method::Dense, Metric::Attribution),
        Baseline::new(Method::Set, Metric::Strength),
        Baseline::new(Method::Set, Metric::Attribution),
        Baseline::new(Method::RigL, Metric::Strength),
        Baseline::new(Method::RigL, Metric::Attribution),
    ];

    pub const fn new(method: Method, metric: Metric) -> Self {
        Baseline { method, metric }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.method.name(), self.metric.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (m, k) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("baseline {s:?} is not METHOD-METRIC")))?;
        Ok(Baseline::new(m.parse()?, k.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            l2: 1e-4,
            batch_size: 100,
            max_epochs: 200,
            patience: 50,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }
}

impl TrainConfig {
    /// Batch size 32 for datasets with fewer than 200 samples, 100 otherwise.
    pub fn default_batch_size(n_samples: usize) -> usize {
        if n_samples < 200 {
            32
        } else {
            100
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.l2 >= 0.0) {
            return Err(Error::Config(
                "learning rate and l2 must be non-negative".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch size, max epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Stops once validation loss has failed to improve for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the loss of 1-based `epoch`; returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network at the epoch with the lowest validation loss.
    pub best: Network,
    /// Network after the last executed epoch.
    pub last: Network,
    pub accumulator: ImportanceAccumulator,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub topology: TopologyLog,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh network for `ds` under `train` and `dst`.
pub fn init_network(
    ds: &Dataset,
    train: &TrainConfig,
    dst: &DstConfig,
    seed: u64,
) -> Result<Network> {
    Network::with_hidden(
        ds.n_features(),
        &train.hidden,
        ds.n_classes,
        dst.sparsity,
        Activation::Relu,
        seed,
    )
}

/// Trains `net` on the train split while accumulating feature importance.
///
/// Per iteration: forward, backward, attribution on the same minibatch when the metric
/// is attribution, then an Adam step. Per epoch: neuron strength of the updated network
/// when the metric is strength, a topology update, then validation loss and early stopping.
pub fn train_with_importance(
    mut net: Network,
    ds: &Dataset,
    train: &TrainConfig,
    dst_cfg: &DstConfig,
    metric: Metric,
    mode: AccumulationMode,
    seed: u64,
) -> Result<TrainOutcome> {
    train.validate()?;
    dst_cfg.validate()?;
    let split = ds.split()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Data(
            "train and validation splits must be non-empty".into(),
        ));
    }
    if net.n_features() != ds.n_features() || net.n_classes() != ds.n_classes {
        return Err(Error::Shape(
            "network does not match dataset dimensions".into(),
        ));
    }
    let (x_val, y_val) = ds.subset(&split.val, None);
    let adam = Adam::with_learning_rate(train.learning_rate);
    let mut shuffle_rng = stream_rng(seed, 1);
    let mut dst_rng = stream_rng(seed, 2);
    let mut acc = ImportanceAccumulator::new(ds.n_features(), mode);
    let mut stopper = EarlyStopping::new(train.patience);
    let mut best = net.clone();
    let mut topology = TopologyLog::default();
    let mut val_losses = Vec::new();
    let mut train_losses = Vec::new();

    for epoch in 0..train.max_epochs {
        let batches = data::epoch_batches(&split.train, train.batch_size, &mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for idx in &batches {
            let xb = ds.x.select(Axis(0), idx);
            let yb: Vec<usize> = idx.iter().map(|&i| ds.y[i]).collect();
            let fp = net.forward(xb.view())?;
            let grads = net.backward(&fp, &yb, train.l2)?;
            if !grads.loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {}",
                    epoch + 1
                )));
            }
            epoch_loss += grads.data_loss * idx.len() as f64;
            if metric == Metric::Attribution {
                let attr = importance::attribution_batch(&net, &fp)?;
                acc.accumulate(&attr, epoch)?;
            }
            adam.step(&mut net, &grads)?;
        }
        train_losses.push(epoch_loss / split.train.len() as f64);
        if metric == Metric::Strength {
            acc.add_contribution(&importance::neuron_strength(&net), epoch)?;
        }
        if dst_cfg.strategy != Strategy::None {
            let last = batches.last().expect("train split is non-empty");
            let xb = ds.x.select(Axis(0), last);
            let yb: Vec<usize> = last.iter().map(|&i| ds.y[i]).collect();
            let records = dst::topology_step(
                &mut net,
                dst_cfg,
                Some((xb.view(), &yb)),
                epoch + 1,
                &mut dst_rng,
            )?;
            for r in records {
                topology.push(r);
            }
        }
        let val_loss = net.loss(x_val.view(), &y_val)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {}",
                epoch + 1
            )));
        }
        val_losses.push(val_loss);
        if stopper.observe(epoch + 1, val_loss) {
            best = net.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        last: net,
        accumulator: acc,
        epochs_run: val_losses.len(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best(),
        val_losses,
        train_losses,
        topology,
    })
}

/// Splits with `split_seed` and standardizes on the train rows.
pub fn prepare_dataset(ds: Dataset, split_seed: u64) -> Result<Dataset> {
    let ds = data::split(ds, split_seed)?;
    Ok(data::standardize(ds)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub baseline: Baseline,
    pub mode: AccumulationMode,
    pub k: usize,
    pub sparsity_grid: Vec<f64>,
    pub l2_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub zeta: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Overrides the size-dependent default when set.
    pub batch_size: Option<usize>,
    pub hidden: Vec<usize>,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn new(baseline: Baseline, k: usize) -> Self {
        ExperimentConfig {
            baseline,
            mode: AccumulationMode::AllEpochs,
            k,
            sparsity_grid: SPARSITY_GRID.to_vec(),
            l2_grid: L2_GRID.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            zeta: DEFAULT_ZETA,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 50,
            batch_size: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            eval: EvalConfig::default(),
        }
    }

    /// Sparsity levels actually searched: dense runs always use `P = 0`.
    pub fn effective_sparsity_grid(&self) -> Vec<f64> {
        if self.baseline.method == Method::Dense {
            vec![0.0]
        } else {
            self.sparsity_grid.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity_grid.is_empty() || self.l2_grid.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        Ok(())
    }

    pub fn train_config(&self, n_samples: usize, l2: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l2,
            batch_size: self
                .batch_size
                .unwrap_or_else(|| TrainConfig::default_batch_size(n_samples)),
            max_epochs: self.max_epochs,
            patience: self.patience,
            hidden: self.hidden.clone(),
        }
    }

    pub fn dst_config(&self, sparsity: f64) -> DstConfig {
        let mut d = DstConfig::new(self.baseline.method.strategy(), sparsity);
        d.zeta = self.zeta;
        d
    }
}

/// Outcome of one seeded run of a chosen configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
    pub accuracy: f64,
    pub coverage: Option<f64>,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub flops: FlopsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub sparsity: f64,
    pub l2: f64,
    /// Best validation loss of the first seed; infinite when training diverged.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub baseline: String,
    pub chosen_sparsity: f64,
    pub chosen_l2: f64,
    pub grid: Vec<GridCell>,
    pub runs: Vec<SeedResult>,
    pub accuracy: Summary,
    pub config: ExperimentConfig,
}

impl ExperimentResult {
    /// Table-style cell such as `96.24 ± 0.13 (0.25)`.
    pub fn table_cell(&self) -> String {
        format!(
            "{:.2} ± {:.2} ({:.2})",
            100.0 * self.accuracy.mean,
            100.0 * self.accuracy.std,
            self.chosen_sparsity
        )
    }
}

/// Winning cell: lowest validation loss, ties by ascending `(sparsity, l2)`.
/// Independent of the order cells were evaluated in.
pub fn choose_cell(cells: &[GridCell]) -> Option<&GridCell> {
    cells.iter().min_by(|a, b| {
        a.val_loss
            .total_cmp(&b.val_loss)
            .then(a.sparsity.total_cmp(&b.sparsity))
            .then(a.l2.total_cmp(&b.l2))
    })
}

/// A training run whose numeric failure is reported as an infinite validation loss.
fn train_cell(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    sparsity: f64,
    l2: f64,
    seed: u64,
) -> Result<Option<TrainOutcome>> {
    let train = cfg.train_config(ds.n_samples(), l2);
    let dst_cfg = cfg.dst_config(sparsity);
    let net = init_network(ds, &train, &dst_cfg, seed)?;
    match train_with_importance(
        net,
        ds,
        &train,
        &dst_cfg,
        cfg.baseline.metric,
        cfg.mode,
        seed,
    ) {
        Ok(out) => Ok(Some(out)),
        Err(Error::Numeric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn flops_for(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    sparsity: f64,
    out: &TrainOutcome,
) -> Result<FlopsReport> {
    let split = ds.split()?;
    let train = cfg.train_config(ds.n_samples(), 0.0);
    flops::estimate_flops(&FlopsRequest {
        shape: out.last.shape(),
        sparsity,
        epochs_run: out.epochs_run,
        samples_per_epoch: split.train.len(),
        strategy: cfg.baseline.method.strategy(),
        grad_batch_size: train.batch_size.min(split.train.len()),
    })
}

fn seed_result(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    sparsity: f64,
    seed: u64,
    out: &TrainOutcome,
) -> Result<SeedResult> {
    let scores = out.accumulator.scores();
    let selected = importance::select_top_k(&scores, cfg.k)?;
    let accuracy = eval::evaluate_subset(ds, &selected, &cfg.eval, seed)?;
    let coverage = match &ds.informative {
        Some(inf) => Some(eval::coverage(&selected, inf)?),
        None => None,
    };
    Ok(SeedResult {
        seed,
        selected,
        scores,
        accuracy,
        coverage,
        epochs_run: out.epochs_run,
        best_val_loss: out.best_val_loss,
        flops: flops_for(cfg, ds, sparsity, out)?,
    })
}

/// Picks `(sparsity, l2)` by first-seed validation loss, then re-runs the winner on every
/// seed, selects the top-K features and evaluates them downstream.
pub fn run_grid(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.k > ds.n_features() {
        return Err(Error::Config(format!(
            "K = {} exceeds the {} available features",
            cfg.k,
            ds.n_features()
        )));
    }
    let first = cfg.seeds[0];
    let mut grid = Vec::new();
    let mut cached = Vec::new();
    for &p in &cfg.effective_sparsity_grid() {
        for &l2 in &cfg.l2_grid {
            let out = train_cell(cfg, ds, p, l2, first)?;
            let val_loss = out.as_ref().map_or(f64::INFINITY, |o| o.best_val_loss);
            grid.push(GridCell {
                sparsity: p,
                l2,
                val_loss,
            });
            cached.push(out);
        }
    }
    let winner = choose_cell(&grid).expect("grid is non-empty").clone();
    if !winner.val_loss.is_finite() {
        return Err(Error::Numeric("every grid cell diverged".into()));
    }
    let idx = grid
        .iter()
        .position(|c| c == &winner)
        .expect("winner is in grid");
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let out = if seed == first {
            cached[idx].take().expect("winner trained")
        } else {
            train_cell(cfg, ds, winner.sparsity, winner.l2, seed)?.ok_or_else(|| {
                Error::Numeric(format!("seed {seed} diverged at the chosen configuration"))
            })?
        };
        runs.push(seed_result(cfg, ds, winner.sparsity, seed, &out)?);
    }
    let accuracy = Summary::of(runs.iter().map(|r| r.accuracy).collect());
    Ok(ExperimentResult {
        baseline: cfg.baseline.to_string(),
        chosen_sparsity: winner.sparsity,
        chosen_l2: winner.l2,
        grid,
        runs,
        accuracy,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub baseline: String,
    pub sparsity: f64,
    pub accuracy: Summary,
    pub epochs_run: Vec<usize>,
    /// Training cost of a single epoch, comparable across sparsity levels.
    pub flops_per_epoch: u64,
    pub flops_mean: f64,
}

/// Evaluates every sparsity level at a fixed `l2` without validation-based selection.
pub fn run_sparsity_sweep(cfg: &ExperimentConfig, ds: &Dataset, l2: f64) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.effective_sparsity_grid() {
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            let out = train_cell(cfg, ds, p, l2, seed)?
                .ok_or_else(|| Error::Numeric(format!("sparsity {p}, seed {seed} diverged")))?;
            runs.push(seed_result(cfg, ds, p, seed, &out)?);
        }
        let split = ds.split()?;
        let per_epoch = flops::estimate_flops(&FlopsRequest {
            shape: std::iter::once(ds.n_features())
                .chain(cfg.hidden.iter().copied())
                .chain(std::iter::once(ds.n_classes))
                .collect(),
            sparsity: p,
            epochs_run: 1,
            samples_per_epoch: split.train.len(),
            strategy: cfg.baseline.method.strategy(),
            grad_batch_size: cfg
                .train_config(ds.n_samples(), l2)
                .batch_size
                .min(split.train.len()),
        })?;
        rows.push(SweepRow {
            baseline: cfg.baseline.to_string(),
            sparsity: p,
            accuracy: Summary::of(runs.iter().map(|r| r.accuracy).collect()),
            epochs_run: runs.iter().map(|r| r.epochs_run).collect(),
            flops_per_epoch: per_epoch.train_total,
            flops_mean: runs.iter().map(|r| r.flops.train_total as f64).sum::<f64>()
                / runs.len() as f64,
        });
    }
    Ok(rows)
}

/// Synthetic coverage benchmark across methods, sample sizes and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub baselines: Vec<Baseline>,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_features: usize,
    pub n_informative: usize,
    /// K values evaluated downstream for the ranking report; may be empty.
    pub k_values: Vec<usize>,
    /// Template for training; its grids' first entries fix sparsity and l2.
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub baseline: String,
    pub n_samples: usize,
    pub seed: u64,
    pub coverage: f64,
    pub epochs_run: usize,
    /// Downstream accuracy per entry of `k_values`.
    pub accuracy_at_k: Vec<f64>,
}

/// `(K, [(method, score)])`.
pub type KRanking = (usize, Vec<(String, f64)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<CoverageRow>,
    pub k_values: Vec<usize>,
}

impl BenchmarkReport {
    /// Mean coverage per `(baseline, n_samples)` in input order.
    pub fn mean_coverage(&self) -> Vec<(String, usize, f64)> {
        let mut keys: Vec<(String, usize)> = Vec::new();
        for r in &self.rows {
            let key = (r.baseline.clone(), r.n_samples);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(b, n)| {
                let vals: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.baseline == b && r.n_samples == n)
                    .map(|r| r.coverage)
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                (b, n, mean)
            })
            .collect()
    }

    /// Average ranking score per K; each experiment is one sample size, methods compared
    /// by seed-mean accuracy.
    pub fn ranking(&self) -> Result<Vec<KRanking>> {
        let mut out = Vec::new();
        for (ki, &k) in self.k_values.iter().enumerate() {
            let mut records = Vec::new();
            for (b, n, _) in self.mean_coverage() {
                let accs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.baseline == b && r.n_samples == n)
                    .map(|r| r.accuracy_at_k[ki])
                    .collect();
                records.push(eval::AccuracyRecord {
                    method: b,
                    experiment: format!("synthetic-{n}"),
                    accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
                });
            }
            out.push((k, eval::average_ranking(&records)?));
        }
        Ok(out)
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.baselines.is_empty() || cfg.sample_sizes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config(
            "benchmark needs baselines, sample sizes and seeds".into(),
        ));
    }
    let template = &cfg.experiment;
    template.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        for &seed in &cfg.seeds {
            let raw = data::generate_synthetic(&SyntheticConfig {
                n_samples: n,
                n_features: cfg.n_features,
                n_informative: cfg.n_informative,
                seed,
            })?;
            let ds = prepare_dataset(raw, seed)?;
            let informative = ds
                .informative
                .clone()
                .expect("synthetic data has ground truth");
            for &baseline in &cfg.baselines {
                let mut exp = template.clone();
                exp.baseline = baseline;
                let sparsity = exp.effective_sparsity_grid()[0];
                let l2 = exp.l2_grid[0];
                let out = train_cell(&exp, &ds, sparsity, l2, seed)?.ok_or_else(|| {
                    Error::Numeric(format!("{baseline} diverged on n={n}, seed {seed}"))
                })?;
                let scores = out.accumulator.scores();
                let top = importance::select_top_k(&scores, informative.len())?;
                let accuracy_at_k = cfg
                    .k_values
                    .iter()
                    .map(|&k| {
                        let sel = importance::select_top_k(&scores, k)?;
                        eval::evaluate_subset(&ds, &sel, &exp.eval, seed)
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.push(CoverageRow {
                    baseline: baseline.to_string(),
                    n_samples: n,
                    seed,
                    coverage: eval::coverage(&top, &informative)?,
                    epochs_run: out.epochs_run,
                    accuracy_at_k,
                });
            }
        }
    }
    Ok(BenchmarkReport {
        rows,
        k_values: cfg.k_values.clone(),
    })
}
