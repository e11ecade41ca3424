//! Reference implementations written against plain dense arrays, independent of the
//! sparse kernels under test.
#![allow(dead_code)]

use dstfs::net::{Activation, Network};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense weight matrices (input x output) scattered from each layer's coordinate list.
pub fn dense_weights(net: &Network) -> Vec<Array2<f64>> {
    net.layers()
        .iter()
        .map(|l| {
            let mut w = Array2::zeros((l.n_in(), l.n_out()));
            for ((r, c), v) in l.coords().zip(l.values()) {
                w[[r, c]] = *v;
            }
            w
        })
        .collect()
}

fn act(net: &Network, z: f64) -> f64 {
    match net.hidden_activation() {
        Activation::Relu => z.max(0.0),
        Activation::Identity => z,
    }
}

fn act_grad(net: &Network, z: f64) -> f64 {
    match net.hidden_activation() {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Identity => 1.0,
    }
}

/// Pre-activations of every layer for one sample; the last entry holds the logits.
pub fn forward(net: &Network, x: &[f64]) -> Vec<Vec<f64>> {
    let ws = dense_weights(net);
    let mut h = x.to_vec();
    let mut pre = Vec::new();
    for (l, (w, layer)) in ws.iter().zip(net.layers()).enumerate() {
        let z: Vec<f64> = (0..w.ncols())
            .map(|k| (0..w.nrows()).map(|j| h[j] * w[[j, k]]).sum::<f64>() + layer.bias()[k])
            .collect();
        h = if l + 1 < ws.len() {
            z.iter().map(|&v| act(net, v)).collect()
        } else {
            z.clone()
        };
        pre.push(z);
    }
    pre
}

/// `jac[[i, j]] = d logit_i / d x_j` by the chain rule over dense matrices.
pub fn jacobian(net: &Network, x: &[f64]) -> Array2<f64> {
    let ws = dense_weights(net);
    let pre = forward(net, x);
    // running product d h_l / d x, shape (width_l, d)
    let d = x.len();
    let mut m = Array2::<f64>::eye(d);
    for (l, w) in ws.iter().enumerate() {
        let mut next = Array2::<f64>::zeros((w.ncols(), d));
        for k in 0..w.ncols() {
            let g = if l + 1 < ws.len() {
                act_grad(net, pre[l][k])
            } else {
                1.0
            };
            if g == 0.0 {
                continue;
            }
            for j in 0..d {
                let s: f64 = (0..w.nrows()).map(|r| w[[r, k]] * m[[r, j]]).sum();
                next[[k, j]] = g * s;
            }
        }
        m = next;
    }
    m
}

/// Central finite-difference Jacobian of the logits.
pub fn fd_jacobian(net: &Network, x: &[f64], h: f64) -> Array2<f64> {
    let c = net.n_classes();
    let mut jac = Array2::zeros((c, x.len()));
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let lp = net.forward(row(&xp)).unwrap().logits;
        let lm = net.forward(row(&xm)).unwrap().logits;
        for i in 0..c {
            jac[[i, j]] = (lp[[0, i]] - lm[[0, i]]) / (2.0 * h);
        }
    }
    jac
}

pub fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).unwrap()
}

/// Smallest |hidden pre-activation| of one sample.
pub fn min_hidden_margin(net: &Network, x: &[f64]) -> f64 {
    let pre = forward(net, x);
    pre[..pre.len() - 1]
        .iter()
        .flatten()
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Random shape no larger than 20-10-5-3 and a random sparsity in [0, 0.6].
pub fn random_net(seed: u64, activation: Activation) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=20);
    let h1 = rng.random_range(2..=10);
    let h2 = rng.random_range(2..=5);
    let c = rng.random_range(2..=3);
    let p = rng.random_range(0.0..0.6);
    let mut net = Network::with_hidden(d, &[h1, h2], c, p, activation, seed).unwrap();
    for layer in net.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    net
}

pub fn random_inputs(seed: u64, n: usize, d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
