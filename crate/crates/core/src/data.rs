//! Datasets: CSV ingestion, train/validation/test splitting, standardization and the
//! synthetic generator with known informative features.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split proportions for validation and test; train receives the remainder.
pub const VAL_FRACTION: f64 = 0.15;
pub const TEST_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub feature_names: Option<Vec<String>>,
    /// Ground-truth informative features, known only for synthetic data.
    pub informative: Option<Vec<usize>>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        let n_classes = y.iter().max().map_or(0, |&m| m + 1);
        let mut seen = vec![false; n_classes];
        for &c in &y {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("labels do not cover [0, C)".into()));
        }
        Ok(Dataset {
            x,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            y,
            n_classes,
            feature_names: None,
            informative: None,
            split: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn split(&self) -> Result<&Split> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::Config("dataset has no train/val/test split".into()))
    }

    /// Rows and labels at `indices`, restricted to `features` when given.
    pub fn subset(
        &self,
        indices: &[usize],
        features: Option<&[usize]>,
    ) -> (Array2<f64>, Vec<usize>) {
        let rows = self.x.select(Axis(0), indices);
        let x = match features {
            Some(f) => rows.select(Axis(1), f),
            None => rows,
        };
        (x, indices.iter().map(|&i| self.y[i]).collect())
    }

    /// Writes the dataset as CSV with a header and the label in the last column.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
        let names: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.n_features()).map(|j| format!("f{j}")).collect(),
        };
        let mut header = names;
        header.push(label_column.to_string());
        w.write_record(&header)
            .map_err(|e| Error::Data(e.to_string()))?;
        for (row, &y) in self.x.rows().into_iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.class_names[y].clone());
            w.write_record(&rec)
                .map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a headed CSV whose numeric columns are features and `label_column` holds the class.
///
/// Labels are re-indexed densely in sorted order: numerically when every label parses
/// as an integer, lexicographically otherwise.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::Data(format!("label column {label_column:?} not found")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let d = feature_names.len();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(cell.trim().to_string());
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Data(format!(
                        "line {line}, column {:?}: non-numeric value {cell:?}",
                        headers.get(c).unwrap_or("?")
                    ))
                })?;
                values.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let class_names = sorted_labels(&raw_labels);
    if class_names.len() < 2 {
        return Err(Error::Data("labels contain a single class".into()));
    }
    let index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let y = raw_labels.iter().map(|l| index[l.as_str()]).collect();
    let x = Array2::from_shape_vec((raw_labels.len(), d), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut ds = Dataset::new(x, y)?;
    ds.class_names = class_names;
    ds.feature_names = Some(feature_names);
    Ok(ds)
}

fn sorted_labels(raw: &[String]) -> Vec<String> {
    let mut unique: Vec<String> = raw.to_vec();
    unique.sort();
    unique.dedup();
    if unique.iter().all(|l| l.parse::<i64>().is_ok()) {
        unique.sort_by_key(|l| l.parse::<i64>().expect("checked"));
    }
    unique
}

/// Sizes `(train, val, test)` for `m` samples: floor for val and test.
pub fn split_sizes(m: usize) -> (usize, usize, usize) {
    let val = (m as f64 * VAL_FRACTION).floor() as usize;
    let test = (m as f64 * TEST_FRACTION).floor() as usize;
    (m - val - test, val, test)
}

/// Assigns a 65/15/20 split, stratified when every class has at least 3 samples.
pub fn split(mut ds: Dataset, seed: u64) -> Result<Dataset> {
    let m = ds.n_samples();
    if m < 10 {
        return Err(Error::Data(format!(
            "need at least 10 samples to split, have {m}"
        )));
    }
    let (_, n_val, n_test) = split_sizes(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &c) in ds.y.iter().enumerate() {
        by_class[c].push(i);
    }
    let stratified = by_class.iter().all(|c| c.len() >= 3);
    let split = if stratified {
        for members in &mut by_class {
            members.shuffle(&mut rng);
        }
        let counts: Vec<usize> = by_class.iter().map(|c| c.len()).collect();
        let test_q = apportion(&counts, n_test);
        let rest: Vec<usize> = counts.iter().zip(&test_q).map(|(c, t)| c - t).collect();
        let val_q = apportion(&rest, n_val);
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (c, members) in by_class.iter().enumerate() {
            test.extend_from_slice(&members[..test_q[c]]);
            val.extend_from_slice(&members[test_q[c]..test_q[c] + val_q[c]]);
            train.extend_from_slice(&members[test_q[c] + val_q[c]..]);
        }
        train.shuffle(&mut rng);
        val.shuffle(&mut rng);
        test.shuffle(&mut rng);
        Split { train, val, test }
    } else {
        let mut all: Vec<usize> = (0..m).collect();
        all.shuffle(&mut rng);
        let test = all[..n_test].to_vec();
        let val = all[n_test..n_test + n_val].to_vec();
        let train = all[n_test + n_val..].to_vec();
        Split { train, val, test }
    };
    ds.split = Some(split);
    Ok(ds)
}

/// Largest-remainder apportionment of `total` across groups proportional to `counts`.
fn apportion(counts: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = counts.iter().sum();
    if sum == 0 {
        return vec![0; counts.len()];
    }
    let ideal: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 * total as f64 / sum as f64)
        .collect();
    let mut quota: Vec<usize> = ideal.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - quota[a] as f64;
        let rb = ideal[b] - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - quota.iter().sum::<usize>();
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if quota[g] < counts[g] {
            quota[g] += 1;
            left -= 1;
        }
    }
    quota
}

/// Per-feature affine map learned on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviations below this are treated as zero.
pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit(x: &Array2<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data(
                "cannot standardize on an empty training split".into(),
            ));
        }
        let n = rows.len() as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if *s < MIN_STD { 0.0 } else { (*v - m) / s };
            }
        }
    }
}

/// Zero mean and unit variance per feature, using statistics of the train split only.
pub fn standardize(mut ds: Dataset) -> Result<(Dataset, Standardizer)> {
    let st = Standardizer::fit(&ds.x, &ds.split()?.train)?;
    st.transform(&mut ds.x);
    Ok((ds, st))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        SyntheticConfig {
            n_samples,
            n_features: 200,
            n_informative: 100,
            seed,
        }
    }
}

/// Balanced binary problem where informative feature `j` is `(2y - 1) * c_j + noise` with
/// `|c_j| ~ U[0.5, 1.5]` and a random sign; all other features are standard normal noise.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n_informative > cfg.n_features {
        return Err(Error::Config(format!(
            "{} informative features exceed {} total",
            cfg.n_informative, cfg.n_features
        )));
    }
    if cfg.n_samples < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positions: Vec<usize> = (0..cfg.n_features).collect();
    positions.shuffle(&mut rng);
    let mut informative = positions[..cfg.n_informative].to_vec();
    informative.sort_unstable();

    let magnitude = Uniform::new_inclusive(0.5, 1.5).map_err(|e| Error::Config(e.to_string()))?;
    let mut shift = vec![0.0; cfg.n_features];
    for &j in &informative {
        let c: f64 = magnitude.sample(&mut rng);
        shift[j] = if rng.random::<bool>() { c } else { -c };
    }

    let mut y: Vec<usize> = (0..cfg.n_samples)
        .map(|i| usize::from(i >= cfg.n_samples / 2))
        .collect();
    y.shuffle(&mut rng);
    let mut x = Array2::zeros((cfg.n_samples, cfg.n_features));
    for (mut row, &label) in x.rows_mut().into_iter().zip(&y) {
        let sign = 2.0 * label as f64 - 1.0;
        for (v, c) in row.iter_mut().zip(&shift) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = sign * c + noise;
        }
    }
    let mut ds = Dataset::new(x, y)?;
    ds.informative = Some(informative);
    ds.feature_names = Some((0..cfg.n_features).map(|j| format!("f{j}")).collect());
    Ok(ds)
}

/// One index per line.
pub fn write_index_file(path: &Path, indices: &[usize]) -> Result<()> {
    let mut text = String::new();
    for i in indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{} line {}: bad index {l:?}",
                    path.display(),
                    n + 1
                ))
            })
        })
        .collect()
}

/// Batches of shuffled training indices for one epoch; the last batch may be short.
pub fn epoch_batches<R: Rng + ?Sized>(
    train: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}
