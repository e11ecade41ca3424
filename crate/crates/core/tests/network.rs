mod common;

use dstfs::net::{load_checkpoint, save_checkpoint, Activation, Adam, Network};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sparse_forward_matches_masked_dense_oracle() {
    for seed in 0..10 {
        let net = common::random_net(seed, Activation::Relu);
        let x = common::random_inputs(seed, 7, net.n_features());
        let fp = net.forward(x.view()).unwrap();
        for (s, row) in x.rows().into_iter().enumerate() {
            let pre = common::forward(&net, row.as_slice().unwrap());
            let logits = pre.last().unwrap();
            for (i, v) in logits.iter().enumerate() {
                if net.layers().iter().all(|l| !l.is_dense()) {
                    assert_eq!(fp.logits[[s, i]], *v, "seed {seed}");
                } else {
                    assert!((fp.logits[[s, i]] - v).abs() < 1e-12, "seed {seed}");
                }
            }
        }
    }
}

#[test]
fn forward_oracle_on_hand_network() {
    // 2 -> 2 -> 2, identity hidden activation, two active weights in layer 0
    use dstfs::net::SparseLayer;
    let l0 =
        SparseLayer::from_entries(2, 2, [((0, 0), 2.0), ((1, 1), -1.0)], vec![0.5, 0.0]).unwrap();
    let l1 = SparseLayer::from_entries(
        2,
        2,
        [((0, 0), 1.0), ((0, 1), 1.0), ((1, 1), 3.0)],
        vec![0.0, 1.0],
    )
    .unwrap();
    let net = Network::from_layers(vec![l0, l1], Activation::Identity).unwrap();
    let fp = net.forward(common::row(&[1.0, 2.0])).unwrap();
    // hidden = [2.5, -2]; logits = [2.5, 2.5 - 6 + 1]
    assert_eq!(fp.logits.row(0).to_vec(), vec![2.5, -2.5]);
}

/// Random biases keep hidden units off the ReLU kink; samples that still sit within
/// 1e-3 of a kink are dropped.
fn fd_check(net: &mut Network, x: &Array2<f64>, y: &[usize], l2: f64) {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(x.len() as u64);
    for layer in net.layers_mut() {
        for b in layer.bias_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let keep: Vec<usize> = (0..x.nrows())
        .filter(|&s| common::min_hidden_margin(net, x.row(s).as_slice().unwrap()) > 1e-3)
        .collect();
    assert!(keep.len() >= x.nrows() / 2);
    let x = &x.select(Axis(0), &keep);
    let y: &[usize] = &keep.iter().map(|&s| y[s]).collect::<Vec<_>>();
    let fp = net.forward(x.view()).unwrap();
    let g = net.backward(&fp, y, l2).unwrap();
    let total = |net: &Network| {
        let penalty: f64 = net
            .layers()
            .iter()
            .flat_map(|l| l.values())
            .map(|w| w * w)
            .sum();
        net.loss(x.view(), y).unwrap() + l2 * penalty
    };
    for l in 0..net.layers().len() {
        for k in 0..net.layers()[l].nnz() {
            let w0 = net.layers()[l].values()[k];
            net.layers_mut()[l].values_mut()[k] = w0 + h;
            let lp = total(net);
            net.layers_mut()[l].values_mut()[k] = w0 - h;
            let lm = total(net);
            net.layers_mut()[l].values_mut()[k] = w0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (g.weights[l][k] - fd).abs() / fd.abs().max(g.weights[l][k].abs()).max(1e-6);
            assert!(
                err < 1e-4,
                "layer {l} weight {k}: {} vs {fd}",
                g.weights[l][k]
            );
        }
        for k in 0..net.layers()[l].n_out() {
            let b0 = net.layers()[l].bias()[k];
            net.layers_mut()[l].bias_mut()[k] = b0 + h;
            let lp = total(net);
            net.layers_mut()[l].bias_mut()[k] = b0 - h;
            let lm = total(net);
            net.layers_mut()[l].bias_mut()[k] = b0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (g.biases[l][k] - fd).abs() / fd.abs().max(g.biases[l][k].abs()).max(1e-6);
            assert!(err < 1e-4, "layer {l} bias {k}: {} vs {fd}", g.biases[l][k]);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (seed, l2) in [(1, 0.0), (2, 1e-3), (3, 0.0), (4, 1e-2)] {
        let mut net = Network::with_hidden(6, &[4], 3, 0.3, Activation::Relu, seed).unwrap();
        let x = common::random_inputs(seed, 5, 6);
        let y = vec![0, 1, 2, 1, 0];
        fd_check(&mut net, &x, &y, l2);
    }
    let mut net = Network::with_hidden(20, &[10, 5], 3, 0.5, Activation::Relu, 9).unwrap();
    let x = common::random_inputs(9, 8, 20);
    fd_check(&mut net, &x, &[0, 1, 2, 0, 1, 2, 0, 1], 1e-4);
}

#[test]
fn training_reduces_loss_on_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 50;
    let mut x = Array2::zeros((n, 4));
    let mut y = Vec::new();
    for s in 0..n {
        let c = s % 2;
        for j in 0..4 {
            x[[s, j]] =
                rng.random_range(-0.5..0.5) + if j == 0 { 2.0 * c as f64 - 1.0 } else { 0.0 };
        }
        y.push(c);
    }
    for p in [0.0, 0.5] {
        let mut net = Network::with_hidden(4, &[16, 8], 2, p, Activation::Relu, 5).unwrap();
        let adam = Adam::with_learning_rate(0.01);
        let start = net.loss(x.view(), &y).unwrap();
        for _ in 0..50 {
            let fp = net.forward(x.view()).unwrap();
            let g = net.backward(&fp, &y, 0.0).unwrap();
            adam.step(&mut net, &g).unwrap();
        }
        let end = net.loss(x.view(), &y).unwrap();
        assert!(end < 0.5 * start, "P={p}: {start} -> {end}");
        let pred = net.predict(x.view()).unwrap();
        assert!(pred.iter().zip(&y).filter(|(a, b)| a == b).count() >= 48);
    }
}

#[test]
fn init_respects_sparsity_and_zero_bias() {
    let net = Network::with_hidden(200, &[1000, 100], 2, 0.9, Activation::Relu, 0).unwrap();
    assert_eq!(net.layers()[0].nnz(), 20000);
    assert_eq!(net.layers()[1].nnz(), 10000);
    assert_eq!(net.layers()[2].nnz(), 20);
    assert!(net
        .layers()
        .iter()
        .all(|l| l.bias().iter().all(|&b| b == 0.0)));
    let w = net.layers()[0].values();
    let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    assert!((var / (2.0 / 200.0) - 1.0).abs() < 0.05, "variance {var}");
    assert!(Network::with_hidden(4, &[3], 2, 1.0, Activation::Relu, 0).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_training_state() {
    let mut net = Network::with_hidden(5, &[4], 2, 0.4, Activation::Relu, 3).unwrap();
    let x = common::random_inputs(3, 6, 5);
    let y = vec![0, 1, 0, 1, 0, 1];
    let adam = Adam::default();
    for _ in 0..3 {
        let fp = net.forward(x.view()).unwrap();
        let g = net.backward(&fp, &y, 1e-4).unwrap();
        adam.step(&mut net, &g).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    save_checkpoint(&net, serde_json::json!({"note": 1}), &path).unwrap();
    let (back, cfg) = load_checkpoint(&path).unwrap();
    assert_eq!(cfg["note"], 1);
    let mut a = net.clone();
    let mut b = back;
    for _ in 0..2 {
        for n in [&mut a, &mut b] {
            let fp = n.forward(x.view()).unwrap();
            let g = n.backward(&fp, &y, 1e-4).unwrap();
            adam.step(n, &g).unwrap();
        }
    }
    assert_eq!(a, b);
    let la = a.forward(x.view()).unwrap().logits;
    let lb = b.forward(x.view()).unwrap().logits;
    assert_eq!(la.sum_axis(Axis(0)), lb.sum_axis(Axis(0)));
}
