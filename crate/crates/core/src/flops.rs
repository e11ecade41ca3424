//! Theoretical FLOPs of training and inference for sparse and dense MLPs.
//!
//! Convention: a multiply-add costs 2 FLOPs; a layer's forward pass costs `2 * nnz`
//! for the weights plus `n_out` for the bias; activations and the softmax cost `n_out`
//! per layer; the backward pass costs twice the forward pass. RigL's dense-gradient pass
//! and attribution passes are reported in their own fields.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dst::Strategy;
use crate::error::{Error, Result};
use crate::net::active_count;

pub const CONVENTION: &str = "2 FLOPs per multiply-add; layer forward = 2*nnz + n_out (bias); \
activation/softmax = n_out per layer; backward = 2x forward; train_total = (forward + backward) \
* samples + dst_overhead; RigL overhead = 4*n_in*n_out per layer per sample of the gradient \
batch, once per topology update; attribution = C input-gradient passes per training sample, \
reported separately; validation passes not counted";

/// Forward cost of one layer for one sample, weights plus bias.
pub fn layer_forward_flops(n_out: usize, nnz: usize) -> u64 {
    2 * nnz as u64 + n_out as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsRequest {
    /// Layer widths `[d, h1, ..., C]`.
    pub shape: Vec<usize>,
    pub sparsity: f64,
    pub epochs_run: usize,
    pub samples_per_epoch: usize,
    pub strategy: Strategy,
    /// Samples in the batch RigL differentiates densely at each update.
    pub grad_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub forward_per_sample: u64,
    pub backward_per_sample: u64,
    pub train_total: u64,
    pub dst_overhead: u64,
    /// Cost of the per-batch attribution passes, not part of `train_total`.
    pub attribution_total: u64,
    pub convention: String,
}

impl FlopsReport {
    /// Training cost including the separately reported attribution passes.
    pub fn total_with_attribution(&self) -> u64 {
        self.train_total + self.attribution_total
    }
}

pub fn estimate_flops(req: &FlopsRequest) -> Result<FlopsReport> {
    if req.shape.len() < 2 || req.shape.contains(&0) {
        return Err(Error::Config(format!(
            "invalid network shape {:?}",
            req.shape
        )));
    }
    if !(0.0..1.0).contains(&req.sparsity) {
        return Err(Error::Config(format!(
            "sparsity {} outside [0, 1)",
            req.sparsity
        )));
    }
    let sparsity = req.sparsity;
    let mut linear = 0u64;
    let mut activation = 0u64;
    let mut dense_grad = 0u64;
    for w in req.shape.windows(2) {
        let (n_in, n_out) = (w[0], w[1]);
        linear += layer_forward_flops(n_out, active_count(n_in, n_out, sparsity));
        activation += n_out as u64;
        dense_grad += 4 * (n_in * n_out) as u64;
    }
    let forward = linear + activation;
    let backward = 2 * forward;
    let samples = (req.epochs_run * req.samples_per_epoch) as u64;
    let dst_overhead = if req.strategy == Strategy::RigL && sparsity > 0.0 {
        dense_grad * req.grad_batch_size as u64 * req.epochs_run as u64
    } else {
        0
    };
    let n_classes = *req.shape.last().expect("checked length") as u64;
    Ok(FlopsReport {
        forward_per_sample: forward,
        backward_per_sample: backward,
        train_total: (forward + backward) * samples + dst_overhead,
        dst_overhead,
        attribution_total: n_classes * linear * samples,
        convention: CONVENTION.to_string(),
    })
}

/// A result row carrying accuracy and cost, as produced by experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub method: String,
    pub dataset: String,
    pub accuracy: Option<f64>,
    pub flops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyFlopsRow {
    pub method: String,
    pub dataset: String,
    pub accuracy: f64,
    pub flops: f64,
}

/// Passes accuracy and FLOPs through unchanged, one row per record.
pub fn emit_accuracy_vs_flops(records: &[CostRecord]) -> Result<Vec<AccuracyFlopsRow>> {
    records
        .iter()
        .map(|r| match (r.accuracy, r.flops) {
            (Some(accuracy), Some(flops)) => Ok(AccuracyFlopsRow {
                method: r.method.clone(),
                dataset: r.dataset.clone(),
                accuracy,
                flops,
            }),
            _ => Err(Error::Data(format!(
                "{} on {} lacks accuracy or FLOPs",
                r.method, r.dataset
            ))),
        })
        .collect()
}

/// CSV rows for external plotting, full precision.
pub fn accuracy_flops_csv(rows: &[AccuracyFlopsRow]) -> String {
    let mut out = String::from("method,dataset,accuracy,flops\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?}",
            r.method, r.dataset, r.accuracy, r.flops
        );
    }
    out
}

/// Human table with FLOPs divided by 1e12.
pub fn format_report_table(rows: &[(String, FlopsReport)]) -> String {
    let mut out = format!(
        "{:<12} {:>16} {:>16} {:>16}\n",
        "method", "train (1e12)", "dst (1e12)", "attr (1e12)"
    );
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>16.4} {:>16.4} {:>16.4}",
            name,
            r.train_total as f64 / 1e12,
            r.dst_overhead as f64 / 1e12,
            r.attribution_total as f64 / 1e12
        );
    }
    out
}
