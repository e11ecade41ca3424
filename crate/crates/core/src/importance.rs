//! Input-feature importance: neuron strength of the first layer, gradient-based neuron
//! attribution of the output logits, and the running accumulators used during training.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ForwardPass, Network};

/// Sum of absolute active first-layer weights on each input row.
pub fn neuron_strength(net: &Network) -> Vec<f64> {
    let layer = &net.layers()[0];
    (0..layer.n_in())
        .map(|j| {
            layer.values()[layer.row_range(j)]
                .iter()
                .map(|w| w.abs())
                .sum()
        })
        .collect()
}

/// `values[[i, j]]`: batch mean of `|d logit_i / d x_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub values: Array2<f64>,
    pub batch_size: usize,
}

impl AttributionMatrix {
    pub fn n_outputs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// Per-feature importance of this batch: the sum over output neurons.
    pub fn feature_scores(&self) -> Vec<f64> {
        self.values.sum_axis(Axis(0)).to_vec()
    }
}

/// Signed gradient of logit `output` with respect to every input, one row per sample.
pub fn logit_input_gradient(net: &Network, fp: &ForwardPass, output: usize) -> Result<Array2<f64>> {
    let c = net.n_classes();
    if output >= c {
        return Err(Error::Shape(format!("output {output} outside [0, {c})")));
    }
    let mut seed = Array2::zeros((fp.batch_size(), c));
    seed.column_mut(output).fill(1.0);
    let deltas = net.backprop_deltas(fp, seed);
    Ok(net.layers()[0].backprop_input(deltas[0].view()))
}

/// Full logits-by-inputs Jacobian of a single sample.
pub fn input_jacobian(net: &Network, x: &[f64]) -> Result<Array2<f64>> {
    let row = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
    let fp = net.forward(row)?;
    let mut jac = Array2::zeros((net.n_classes(), net.n_features()));
    for i in 0..net.n_classes() {
        jac.row_mut(i)
            .assign(&logit_input_gradient(net, &fp, i)?.row(0));
    }
    Ok(jac)
}

/// Mean absolute logit-input gradient over the batch held by `fp`, one seeded backward
/// pass per output neuron. Gradients only flow through active coordinates.
pub fn attribution_batch(net: &Network, fp: &ForwardPass) -> Result<AttributionMatrix> {
    let m = fp.batch_size();
    if m == 0 {
        return Err(Error::Data("attribution needs a non-empty batch".into()));
    }
    let mut values = Array2::zeros((net.n_classes(), net.n_features()));
    for i in 0..net.n_classes() {
        let g = logit_input_gradient(net, fp, i)?;
        let mut row = values.row_mut(i);
        for sample in g.rows() {
            for (acc, v) in row.iter_mut().zip(sample) {
                *acc += v.abs();
            }
        }
        row.mapv_inplace(|v| v / m as f64);
    }
    Ok(AttributionMatrix {
        values,
        batch_size: m,
    })
}

/// Convenience wrapper running the forward pass first.
pub fn attribution(net: &Network, x: ArrayView2<'_, f64>) -> Result<AttributionMatrix> {
    if x.nrows() == 0 {
        return Err(Error::Data("attribution needs a non-empty batch".into()));
    }
    let fp = net.forward(x)?;
    attribution_batch(net, &fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationMode {
    /// Sum over every contribution since training started.
    AllEpochs,
    /// Sum over the contributions of the most recent epoch.
    LastEpoch,
    /// Only the most recent contribution.
    LastIteration,
}

impl AccumulationMode {
    pub const ALL: [AccumulationMode; 3] = [
        AccumulationMode::AllEpochs,
        AccumulationMode::LastEpoch,
        AccumulationMode::LastIteration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AccumulationMode::AllEpochs => "all_epochs",
            AccumulationMode::LastEpoch => "last_epoch",
            AccumulationMode::LastIteration => "last_iteration",
        }
    }
}

impl std::str::FromStr for AccumulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AccumulationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown accumulation mode {s:?}")))
    }
}

/// Running per-feature importance.
///
/// All three views are tracked at once; `mode` picks the one `scores` reports. The
/// all-epochs total is kept as closed-epoch subtotals plus the open epoch, which makes it
/// exactly the ordered sum of the per-epoch snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceAccumulator {
    mode: AccumulationMode,
    closed: Vec<f64>,
    epoch_sum: Vec<f64>,
    last: Vec<f64>,
    current_epoch: Option<usize>,
    iterations_seen: usize,
}

impl ImportanceAccumulator {
    pub fn new(n_features: usize, mode: AccumulationMode) -> Self {
        ImportanceAccumulator {
            mode,
            closed: vec![0.0; n_features],
            epoch_sum: vec![0.0; n_features],
            last: vec![0.0; n_features],
            current_epoch: None,
            iterations_seen: 0,
        }
    }

    pub fn mode(&self) -> AccumulationMode {
        self.mode
    }

    pub fn n_features(&self) -> usize {
        self.last.len()
    }

    pub fn iterations_seen(&self) -> usize {
        self.iterations_seen
    }

    pub fn current_epoch(&self) -> Option<usize> {
        self.current_epoch
    }

    /// Adds the per-iteration score `sum_i attr[i][j]` of one training minibatch.
    pub fn accumulate(&mut self, attr: &AttributionMatrix, epoch: usize) -> Result<()> {
        if attr.n_features() != self.n_features() {
            return Err(Error::Shape(format!(
                "attribution has {} features, accumulator {}",
                attr.n_features(),
                self.n_features()
            )));
        }
        self.add_contribution(&attr.feature_scores(), epoch)
    }

    /// Adds one non-negative per-feature contribution observed during `epoch`.
    pub fn add_contribution(&mut self, contribution: &[f64], epoch: usize) -> Result<()> {
        if contribution.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "contribution has {} features, accumulator {}",
                contribution.len(),
                self.n_features()
            )));
        }
        if let Some(v) = contribution.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Numeric(format!(
                "invalid importance contribution {v}"
            )));
        }
        match self.current_epoch {
            Some(e) if e == epoch => {}
            Some(e) if epoch < e => {
                return Err(Error::Config(format!(
                    "epoch went backwards: {epoch} after {e}"
                )));
            }
            Some(_) => {
                for (c, s) in self.closed.iter_mut().zip(&mut self.epoch_sum) {
                    *c += *s;
                    *s = 0.0;
                }
                self.current_epoch = Some(epoch);
            }
            None => self.current_epoch = Some(epoch),
        }
        for (s, v) in self.epoch_sum.iter_mut().zip(contribution) {
            *s += v;
        }
        self.last.copy_from_slice(contribution);
        self.iterations_seen += 1;
        Ok(())
    }

    pub fn scores(&self) -> Vec<f64> {
        self.scores_for(self.mode)
    }

    pub fn scores_for(&self, mode: AccumulationMode) -> Vec<f64> {
        match mode {
            AccumulationMode::AllEpochs => self
                .closed
                .iter()
                .zip(&self.epoch_sum)
                .map(|(c, s)| c + s)
                .collect(),
            AccumulationMode::LastEpoch => self.epoch_sum.clone(),
            AccumulationMode::LastIteration => self.last.clone(),
        }
    }
}

/// Indices of the `k` largest scores, ordered by descending score then ascending index.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Config(format!(
            "K = {k} outside [1, {}]",
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN importance score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Scores of one metric with the context needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceExport {
    pub metric: String,
    pub mode: AccumulationMode,
    pub epoch: usize,
    pub seed: u64,
    pub scores: Vec<f64>,
}

impl ImportanceExport {
    /// CSV with columns `feature,score,rank,metric,mode,epoch,seed`; ranks start at 1.
    pub fn to_csv(&self) -> String {
        let mut rank = vec![0; self.scores.len()];
        if let Ok(order) = select_top_k(&self.scores, self.scores.len()) {
            for (r, j) in order.into_iter().enumerate() {
                rank[j] = r + 1;
            }
        }
        let mut out = String::from("feature,score,rank,metric,mode,epoch,seed\n");
        for (j, s) in self.scores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{j},{s:?},{},{},{},{},{}",
                rank[j],
                self.metric,
                self.mode.name(),
                self.epoch,
                self.seed
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads the `score` column of a file written by [`ImportanceExport::write_csv`]
    /// (or any CSV with a `score` header), in file order.
    pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .clone();
        let col = headers
            .iter()
            .position(|h| h == "score")
            .ok_or_else(|| Error::Data(format!("{} has no score column", path.display())))?;
        reader
            .records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
                rec.get(col)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Data(format!("row {}: bad score", i + 1)))
            })
            .collect()
    }
}

/// Scores reshaped row-major onto a `height x width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: Array2<f64>,
}

impl Heatmap {
    pub fn from_scores(scores: &[f64], height: usize, width: usize) -> Result<Self> {
        if height * width != scores.len() {
            return Err(Error::Shape(format!(
                "{height}x{width} grid cannot hold {} scores",
                scores.len()
            )));
        }
        let grid = Array2::from_shape_vec((height, width), scores.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Heatmap { grid })
    }

    /// Min-max normalization to `0..=255`; a constant grid maps to all zeros.
    pub fn gray_levels(&self) -> Array2<u8> {
        let min = self.grid.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        self.grid.mapv(|v| {
            if span > 0.0 {
                ((v - min) / span * 255.0).round() as u8
            } else {
                0
            }
        })
    }

    /// Binary portable graymap (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let (h, w) = self.grid.dim();
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend(self.gray_levels().iter());
        out
    }

    /// Raw values, one grid row per line, comma separated.
    pub fn to_grid_csv(&self) -> String {
        let mut out = String::new();
        for row in self.grid.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_grid_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Data(e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::Data("ragged grid".into()));
        }
        Self::from_scores(&rows.concat(), h, w)
    }
}
