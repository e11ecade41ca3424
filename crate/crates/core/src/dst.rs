//! Topology evolution for dynamic sparse training.
//!
//! Each update drops the `floor(zeta * nnz)` smallest-magnitude weights of a layer and
//! regrows the same number of inactive positions, either uniformly at random (SET) or
//! by largest dense-gradient magnitude (RigL). Regrown weights start at zero with zeroed
//! optimizer moments. Ties are broken by ascending `(row, col)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Network, SparseLayer};

pub const DEFAULT_ZETA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "set")]
    Set,
    #[serde(rename = "rigl")]
    RigL,
    /// Static topology.
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DstConfig {
    pub zeta: f64,
    pub strategy: Strategy,
    pub sparsity: f64,
}

impl DstConfig {
    pub fn new(strategy: Strategy, sparsity: f64) -> Self {
        DstConfig {
            zeta: DEFAULT_ZETA,
            strategy,
            sparsity,
        }
    }

    /// Dense static training.
    pub fn dense() -> Self {
        Self::new(Strategy::None, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!(
                "sparsity {} outside [0, 1)",
                self.sparsity
            )));
        }
        if self.strategy != Strategy::None {
            check_zeta(self.zeta)?;
        }
        Ok(())
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "zeta must lie in (0, 1), got {zeta}"
        )))
    }
}

/// Removes the `floor(zeta * nnz)` smallest-magnitude weights and returns their coordinates
/// in ascending order. Survivors keep their values and moments.
pub fn prune_magnitude(layer: &mut SparseLayer, zeta: f64) -> Result<Vec<(usize, usize)>> {
    check_zeta(zeta)?;
    if layer.nnz() == 0 {
        return Err(Error::Config(
            "cannot prune a layer with no active weights".into(),
        ));
    }
    let k = (zeta * layer.nnz() as f64).floor() as usize;
    let dropped = smallest_magnitude(layer, k);
    let mut keep = vec![true; layer.nnz()];
    for &i in &dropped {
        keep[i] = false;
    }
    let mut coords: Vec<(usize, usize)> = dropped.iter().map(|&i| layer.coord(i)).collect();
    coords.sort_unstable();
    layer.rewire(&keep, &[])?;
    Ok(coords)
}

/// Entry indices of the `k` smallest `|value|`, ties by entry order (= `(row, col)` order).
fn smallest_magnitude(layer: &SparseLayer, k: usize) -> Vec<usize> {
    let values = layer.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |&i: &usize| (values[i].abs(), i);
    if k < order.len() {
        order.select_nth_unstable_by(k, |a, b| {
            key(a).partial_cmp(&key(b)).expect("finite weights")
        });
    }
    order.truncate(k);
    order
}

fn inactive_positions(layer: &SparseLayer) -> Vec<(usize, usize)> {
    let mask = layer.mask();
    let n_out = layer.n_out();
    mask.iter()
        .enumerate()
        .filter(|(_, &a)| !a)
        .map(|(p, _)| (p / n_out, p % n_out))
        .collect()
}

fn check_capacity(layer: &SparseLayer, k: usize) -> Result<()> {
    let free = layer.size() - layer.nnz();
    if k > free {
        Err(Error::Config(format!(
            "cannot regrow {k} weights: only {free} inactive positions"
        )))
    } else {
        Ok(())
    }
}

/// SET regrowth: activates `k` inactive positions chosen uniformly at random.
pub fn regrow_random<R: Rng + ?Sized>(
    layer: &mut SparseLayer,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    check_capacity(layer, k)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let free = inactive_positions(layer);
    let mut added: Vec<(usize, usize)> = index::sample(rng, free.len(), k)
        .into_iter()
        .map(|i| free[i])
        .collect();
    added.sort_unstable();
    let keep = vec![true; layer.nnz()];
    layer.rewire(&keep, &added)?;
    Ok(added)
}

/// RigL regrowth: activates the `k` inactive positions with largest `|dense_grad|`.
pub fn regrow_gradient(
    layer: &mut SparseLayer,
    k: usize,
    dense_grad: ArrayView2<'_, f64>,
) -> Result<Vec<(usize, usize)>> {
    if dense_grad.dim() != (layer.n_in(), layer.n_out()) {
        return Err(Error::Shape(format!(
            "dense gradient is {:?}, layer is {}x{}",
            dense_grad.dim(),
            layer.n_in(),
            layer.n_out()
        )));
    }
    check_capacity(layer, k)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut free = inactive_positions(layer);
    let key = |p: &(usize, usize)| (-dense_grad[[p.0, p.1]].abs(), *p);
    if k < free.len() {
        free.select_nth_unstable_by(k, |a, b| {
            key(a).partial_cmp(&key(b)).expect("finite gradient")
        });
    }
    free.truncate(k);
    free.sort_unstable();
    let keep = vec![true; layer.nnz()];
    layer.rewire(&keep, &free)?;
    Ok(free)
}

/// Dense gradient of the data loss for every weight position of every layer,
/// computed through the current sparse network on one labelled batch.
pub fn dense_gradients(
    net: &Network,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<Vec<Array2<f64>>> {
    let fp = net.forward(x)?;
    let deltas = net.deltas(&fp, labels)?;
    Ok(net
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| layer.dense_weight_grad(fp.inputs[l].view(), deltas[l].view()))
        .collect())
}

/// Connectivity change of one layer at one topology update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub epoch: usize,
    pub layer: usize,
    pub dropped: Vec<(usize, usize)>,
    pub added: Vec<(usize, usize)>,
}

/// Append-only log of topology updates, stored as JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologyLog {
    pub records: Vec<TopologyRecord>,
}

impl TopologyLog {
    pub fn push(&mut self, record: TopologyRecord) {
        self.records.push(record);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut log = TopologyLog::default();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                log.push(serde_json::from_str(&line)?);
            }
        }
        Ok(log)
    }
}

/// One prune-and-regrow update over every layer that has inactive capacity.
///
/// `grad_batch` supplies the batch RigL uses for its dense gradient; it is ignored by SET.
/// Layers that are fully dense are left untouched.
pub fn topology_step<R: Rng + ?Sized>(
    net: &mut Network,
    config: &DstConfig,
    grad_batch: Option<(ArrayView2<'_, f64>, &[usize])>,
    epoch: usize,
    rng: &mut R,
) -> Result<Vec<TopologyRecord>> {
    if config.strategy == Strategy::None {
        return Ok(Vec::new());
    }
    check_zeta(config.zeta)?;
    let dense_grads = match config.strategy {
        Strategy::RigL => {
            let (x, y) = grad_batch
                .ok_or_else(|| Error::Config("RigL update needs a gradient batch".into()))?;
            Some(dense_gradients(net, x, y)?)
        }
        _ => None,
    };
    let mut records = Vec::new();
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        if layer.is_dense() {
            continue;
        }
        let before = layer.nnz();
        let dropped = prune_magnitude(layer, config.zeta)?;
        let added = match &dense_grads {
            Some(g) => regrow_gradient(layer, dropped.len(), g[l].view())?,
            None => regrow_random(layer, dropped.len(), rng)?,
        };
        debug_assert_eq!(layer.nnz(), before);
        records.push(TopologyRecord {
            epoch,
            layer: l,
            dropped,
            added,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row_layer(values: &[f64]) -> SparseLayer {
        SparseLayer::from_entries(
            1,
            values.len(),
            values.iter().enumerate().map(|(i, &v)| ((0, i), v)),
            vec![0.0; values.len()],
        )
        .unwrap()
    }

    #[test]
    fn prunes_smallest_magnitude() {
        let mut layer = row_layer(&[0.5, -0.05, 0.2, -0.9, 0.1]);
        let dropped = prune_magnitude(&mut layer, 0.3).unwrap();
        assert_eq!(dropped, vec![(0, 1)]);
        assert_eq!(layer.nnz(), 4);
        assert_eq!(layer.values(), &[0.5, 0.2, -0.9, 0.1]);
    }

    #[test]
    fn prune_ties_break_by_coordinate() {
        let mut layer = row_layer(&[0.4, -0.4, 0.4, 0.4, -0.4]);
        let dropped = prune_magnitude(&mut layer, 0.4).unwrap();
        assert_eq!(dropped, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn prune_rejects_bad_zeta() {
        let mut layer = row_layer(&[1.0]);
        assert!(prune_magnitude(&mut layer, 0.0).is_err());
        assert!(prune_magnitude(&mut layer, 1.0).is_err());
    }

    #[test]
    fn prune_keeps_survivor_moments() {
        let mut layer = row_layer(&[0.5, -0.05, 0.2]);
        let mut net =
            Network::from_layers(vec![layer.clone()], crate::net::Activation::Relu).unwrap();
        let grads = crate::net::Gradients {
            weights: vec![vec![0.1, 0.2, 0.3]],
            biases: vec![vec![0.0; 3]],
            loss: 0.0,
            data_loss: 0.0,
        };
        crate::net::Adam::default().step(&mut net, &grads).unwrap();
        layer = net.layers()[0].clone();
        let m_before: Vec<f64> = layer.adam_moments().0.to_vec();
        prune_magnitude(&mut layer, 0.4).unwrap();
        assert_eq!(layer.adam_moments().0, &[m_before[0], m_before[2]]);
    }

    #[test]
    fn random_regrowth_restores_count_outside_survivors() {
        let mut layer = SparseLayer::from_entries(
            2,
            2,
            [((0, 0), 0.9), ((0, 1), 0.1), ((1, 1), 0.5)],
            vec![0.0; 2],
        )
        .unwrap();
        let dropped = prune_magnitude(&mut layer, 0.5).unwrap();
        assert_eq!(dropped, vec![(0, 1)]);
        let survivors: Vec<_> = layer.coords().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let added = regrow_random(&mut layer, 1, &mut rng).unwrap();
        assert_eq!(layer.nnz(), 3);
        assert!(!survivors.contains(&added[0]));
        let k = layer.find(added[0].0, added[0].1).unwrap();
        assert_eq!(layer.values()[k], 0.0);
        assert_eq!(layer.adam_moments().0[k], 0.0);
        assert_eq!(layer.adam_moments().1[k], 0.0);
    }

    #[test]
    fn regrowth_needs_capacity() {
        let mut layer =
            SparseLayer::from_entries(1, 2, [((0, 0), 1.0), ((0, 1), 1.0)], vec![0.0; 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(regrow_random(&mut layer, 1, &mut rng).is_err());
        assert!(regrow_gradient(&mut layer, 1, Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn random_regrowth_replays_with_seed() {
        let base = SparseLayer::random(10, 10, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let run = || {
            let mut l = base.clone();
            regrow_random(&mut l, 7, &mut ChaCha8Rng::seed_from_u64(42)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradient_regrowth_picks_largest() {
        let mut layer =
            SparseLayer::from_entries(2, 2, [((0, 0), 1.0), ((1, 1), 1.0)], vec![0.0; 2]).unwrap();
        let grad = array![[5.0, 0.9], [-0.1, 7.0]];
        let added = regrow_gradient(&mut layer, 1, grad.view()).unwrap();
        assert_eq!(added, vec![(0, 1)]);
    }

    #[test]
    fn gradient_regrowth_ties_by_coordinate() {
        let mut layer = SparseLayer::from_entries(2, 3, [((0, 1), 1.0)], vec![0.0; 3]).unwrap();
        let added = regrow_gradient(&mut layer, 2, Array2::zeros((2, 3)).view()).unwrap();
        assert_eq!(added, vec![(0, 0), (0, 2)]);
    }

    #[test]
    fn dense_network_is_untouched() {
        let mut net =
            Network::with_hidden(4, &[3], 2, 0.0, crate::net::Activation::Relu, 1).unwrap();
        let before = net.clone();
        let cfg = DstConfig::new(Strategy::Set, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recs = topology_step(&mut net, &cfg, None, 0, &mut rng).unwrap();
        assert!(recs.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn log_round_trips_through_jsonl() {
        let mut log = TopologyLog::default();
        log.push(TopologyRecord {
            epoch: 3,
            layer: 1,
            dropped: vec![(0, 1), (2, 2)],
            added: vec![(1, 0), (4, 4)],
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topology.jsonl");
        log.write_jsonl(&path).unwrap();
        assert_eq!(TopologyLog::read_jsonl(&path).unwrap(), log);
    }
}
