//! Downstream evaluation of a feature subset, ground-truth coverage, and the average
//! ranking score used to summarise many experiments.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            learning_rate: 0.01,
            lambda: 1e-4,
            epochs: 100,
            repeats: 5,
        }
    }
}

/// One-vs-rest linear max-margin classifier fit by stochastic subgradient descent on
/// the L2-regularised hinge loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    /// One weight row per class.
    weights: Array2<f64>,
    bias: Vec<f64>,
}

impl LinearSvm {
    pub fn fit(
        x: ArrayView2<'_, f64>,
        y: &[usize],
        n_classes: usize,
        cfg: &EvalConfig,
        seed: u64,
    ) -> Result<Self> {
        let (m, d) = x.dim();
        if m == 0 || m != y.len() {
            return Err(Error::Shape(format!("{m} rows, {} labels", y.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Array2::zeros((n_classes, d));
        let mut bias = vec![0.0; n_classes];
        let mut order: Vec<usize> = (0..m).collect();
        let shrink = 1.0 - cfg.learning_rate * cfg.lambda;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &s in &order {
                let xs = x.row(s);
                for (c, b) in bias.iter_mut().enumerate() {
                    let target = if y[s] == c { 1.0 } else { -1.0 };
                    let mut w = weights.row_mut(c);
                    let margin = target * (w.dot(&xs) + *b);
                    w.mapv_inplace(|v| v * shrink);
                    if margin < 1.0 {
                        w.scaled_add(cfg.learning_rate * target, &xs);
                        *b += cfg.learning_rate * target;
                    }
                }
            }
        }
        Ok(LinearSvm { weights, bias })
    }

    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut scores = x.dot(&self.weights.t());
        for mut row in scores.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        scores
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.decision(x)
            .rows()
            .into_iter()
            .map(|r| crate::net::network_argmax(r.iter().copied()))
            .collect()
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

fn check_features(features: &[usize], d: usize) -> Result<()> {
    if features.is_empty() {
        return Err(Error::Config("feature set is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for &f in features {
        if f >= d {
            return Err(Error::Config(format!("feature {f} outside [0, {d})")));
        }
        if !seen.insert(f) {
            return Err(Error::Config(format!("feature {f} listed twice")));
        }
    }
    Ok(())
}

/// Test accuracy of the classifier fit on the train split restricted to `features`.
pub fn evaluate_subset(
    ds: &Dataset,
    features: &[usize],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<f64> {
    check_features(features, ds.n_features())?;
    let split = ds.split()?;
    let (xtr, ytr) = ds.subset(&split.train, Some(features));
    let (xte, yte) = ds.subset(&split.test, Some(features));
    let svm = LinearSvm::fit(xtr.view(), &ytr, ds.n_classes, cfg, seed)?;
    Ok(accuracy(&svm.predict(xte.view()), &yte))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, values }
    }
}

/// `evaluate_subset` over `cfg.repeats` classifier seeds derived from `seed`.
pub fn evaluate_subset_repeated(
    ds: &Dataset,
    features: &[usize],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Summary> {
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let values = (0..cfg.repeats as u64)
        .map(|r| evaluate_subset(ds, features, cfg, seed.wrapping_mul(1000).wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary::of(values))
}

/// Fraction of ground-truth features recovered: `|S ∩ I| / min(|S|, |I|)`.
pub fn coverage(selected: &[usize], informative: &[usize]) -> Result<f64> {
    if selected.is_empty() || informative.is_empty() {
        return Err(Error::Config("coverage needs non-empty sets".into()));
    }
    let truth: BTreeSet<usize> = informative.iter().copied().collect();
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let hits = sel.intersection(&truth).count();
    Ok(hits as f64 / sel.len().min(truth.len()) as f64)
}

/// Rank points within one experiment: with `M` methods the best receives `M`, the worst 1,
/// and tied methods share the mean of the points their positions would receive.
pub fn rank_scores(accuracies: &[f64]) -> Vec<f64> {
    let m = accuracies.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]));
    let mut scores = vec![0.0; m];
    let mut pos = 0;
    while pos < m {
        let mut end = pos + 1;
        while end < m && accuracies[order[end]] == accuracies[order[pos]] {
            end += 1;
        }
        // positions pos..end earn M - pos down to M - end + 1
        let points = (pos..end).map(|p| (m - p) as f64).sum::<f64>() / (end - pos) as f64;
        for &i in &order[pos..end] {
            scores[i] = points;
        }
        pos = end;
    }
    scores
}

/// One cell of a methods-by-experiments accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub method: String,
    pub experiment: String,
    pub accuracy: f64,
}

/// Average rank points per method over all experiments, sorted by method name.
pub fn average_ranking(results: &[AccuracyRecord]) -> Result<Vec<(String, f64)>> {
    let methods: BTreeSet<&str> = results.iter().map(|r| r.method.as_str()).collect();
    if methods.len() < 2 {
        return Err(Error::Config("ranking needs at least two methods".into()));
    }
    let mut table: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for r in results {
        if table
            .entry(r.experiment.as_str())
            .or_default()
            .insert(r.method.as_str(), r.accuracy)
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate result for {} in {}",
                r.method, r.experiment
            )));
        }
    }
    let mut totals: BTreeMap<&str, f64> = methods.iter().map(|&m| (m, 0.0)).collect();
    for (exp, row) in &table {
        let accs = methods
            .iter()
            .map(|m| {
                row.get(m).copied().ok_or_else(|| {
                    Error::Data(format!("missing result for {m} in experiment {exp}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (m, s) in methods.iter().zip(rank_scores(&accs)) {
            *totals.get_mut(m).expect("known method") += s;
        }
    }
    let n = table.len() as f64;
    Ok(totals
        .into_iter()
        .map(|(m, t)| (m.to_string(), t / n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use proptest::prelude::*;

    #[test]
    fn coverage_examples() {
        let truth: Vec<usize> = (0..100).collect();
        assert_eq!(coverage(&truth, &truth).unwrap(), 1.0);
        let disjoint: Vec<usize> = (100..200).collect();
        assert_eq!(coverage(&disjoint, &truth).unwrap(), 0.0);
        let partial: Vec<usize> = (40..140).collect();
        assert!((coverage(&partial, &truth).unwrap() - 0.6).abs() < 1e-15);
        assert!(coverage(&[], &truth).is_err());
    }

    #[test]
    fn strict_order_scores() {
        let s = rank_scores(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4]);
        assert_eq!(s, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let s = rank_scores(&[0.2, 0.95, 0.5, 0.94, 0.1, 0.3]);
        assert_eq!(s, vec![2.0, 6.0, 4.0, 5.0, 1.0, 3.0]);
    }

    #[test]
    fn tied_best_share_points() {
        assert_eq!(rank_scores(&[0.9, 0.9, 0.5]), vec![2.5, 2.5, 1.0]);
        assert_eq!(rank_scores(&[0.7; 4]), vec![2.5; 4]);
    }

    #[test]
    fn average_ranking_over_experiments() {
        let rec = |m: &str, e: &str, a: f64| AccuracyRecord {
            method: m.into(),
            experiment: e.into(),
            accuracy: a,
        };
        let r = average_ranking(&[
            rec("a", "x", 0.9),
            rec("b", "x", 0.8),
            rec("a", "y", 0.1),
            rec("b", "y", 0.8),
        ])
        .unwrap();
        assert_eq!(r, vec![("a".to_string(), 1.5), ("b".to_string(), 1.5)]);
        let missing =
            average_ranking(&[rec("a", "x", 0.9), rec("b", "x", 0.8), rec("a", "y", 0.1)]);
        assert!(missing.is_err());
    }

    proptest! {
        #[test]
        fn rank_points_sum_is_fixed(accs in proptest::collection::vec(0u8..5, 2..10)) {
            let accs: Vec<f64> = accs.into_iter().map(f64::from).collect();
            let m = accs.len() as f64;
            let total: f64 = rank_scores(&accs).iter().sum();
            prop_assert!((total - m * (m + 1.0) / 2.0).abs() < 1e-9);
        }
    }

    fn separable() -> Dataset {
        let m = 60;
        let x = Array2::from_shape_fn((m, 3), |(i, j)| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            match j {
                0 => sign * (1.0 + (i % 7) as f64 * 0.1),
                1 => ((i * 13) % 11) as f64 * 0.1 - 0.5,
                _ => sign * 0.5 + ((i * 5) % 3) as f64 * 0.1,
            }
        });
        let y = (0..m).map(|i| usize::from(i % 2 == 1)).collect();
        let mut ds = Dataset::new(x, y).unwrap();
        ds.split = Some(Split {
            train: (0..40).collect(),
            val: vec![],
            test: (40..60).collect(),
        });
        ds
    }

    #[test]
    fn separable_data_is_classified_perfectly() {
        let ds = separable();
        let acc = evaluate_subset(&ds, &[0, 1, 2], &EvalConfig::default(), 0).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn bad_feature_sets_are_rejected() {
        let ds = separable();
        let cfg = EvalConfig::default();
        assert!(evaluate_subset(&ds, &[], &cfg, 0).is_err());
        assert!(evaluate_subset(&ds, &[0, 0], &cfg, 0).is_err());
        assert!(evaluate_subset(&ds, &[3], &cfg, 0).is_err());
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(vec![1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(vec![0.5]).std, 0.0);
    }
}
