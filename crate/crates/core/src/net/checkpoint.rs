//! Versioned JSON checkpoint. Floats are written in shortest round-trip form and parsed
//! back exactly, so save followed by load reproduces the network bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Entry, SparseLayer};
use super::network::{Activation, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "dstfs-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    n_in: usize,
    n_out: usize,
    coords: Vec<(usize, usize)>,
    values: Vec<f64>,
    bias: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    hidden_activation: Activation,
    step_count: u64,
    layers: Vec<LayerRecord>,
    /// Free-form snapshot of the configuration that produced the network.
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn from_network(net: &Network, config: serde_json::Value) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                let (m, v) = l.adam_moments();
                let (bm, bv) = l.bias_moments();
                LayerRecord {
                    n_in: l.n_in(),
                    n_out: l.n_out(),
                    coords: l.coords().collect(),
                    values: l.values().to_vec(),
                    bias: l.bias().to_vec(),
                    adam_m: m.to_vec(),
                    adam_v: v.to_vec(),
                    bias_m: bm.to_vec(),
                    bias_v: bv.to_vec(),
                }
            })
            .collect();
        Checkpoint {
            format: FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            hidden_activation: net.hidden_activation(),
            step_count: net.step_count(),
            layers,
            config,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.format != FORMAT {
            return Err(Error::Data(format!(
                "not a checkpoint: format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|r| {
                let n = r.coords.len();
                if [r.values.len(), r.adam_m.len(), r.adam_v.len()]
                    .iter()
                    .any(|&len| len != n)
                {
                    return Err(Error::Data(
                        "checkpoint layer arrays differ in length".into(),
                    ));
                }
                let entries = (0..n)
                    .map(|k| Entry {
                        row: r.coords[k].0,
                        col: r.coords[k].1,
                        value: r.values[k],
                        m: r.adam_m[k],
                        v: r.adam_v[k],
                    })
                    .collect();
                let mut layer =
                    SparseLayer::from_sorted_entries(r.n_in, r.n_out, entries, r.bias.clone())?;
                layer.restore_bias_moments(r.bias_m.clone(), r.bias_v.clone())?;
                Ok(layer)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = Network::from_layers(layers, self.hidden_activation)?;
        net.set_step_count(self.step_count);
        Ok(net)
    }
}

pub fn save_checkpoint(net: &Network, config: serde_json::Value, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_network(net, config))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, serde_json::Value)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    Ok((ckpt.to_network()?, ckpt.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_bit_exact(seed in 0u64..1000, sparsity in 0.0f64..0.9) {
            let net = Network::with_hidden(7, &[5, 4], 3, sparsity, Activation::Relu, seed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("net.json");
            save_checkpoint(&net, serde_json::json!({"seed": seed}), &path).unwrap();
            let (back, cfg) = load_checkpoint(&path).unwrap();
            prop_assert_eq!(cfg["seed"].as_u64(), Some(seed));
            for (a, b) in net.layers().iter().zip(back.layers()) {
                prop_assert_eq!(a.coords().collect::<Vec<_>>(), b.coords().collect::<Vec<_>>());
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(a.values()), bits(b.values()));
                prop_assert_eq!(bits(a.bias()), bits(b.bias()));
            }
            prop_assert_eq!(back, net);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let net = Network::with_hidden(2, &[], 2, 0.0, Activation::Relu, 0).unwrap();
        let mut ckpt = Checkpoint::from_network(&net, serde_json::Value::Null);
        ckpt.version = 99;
        assert!(ckpt.to_network().is_err());
    }
}
