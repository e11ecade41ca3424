use std::fs;

use dstfs::data::{
    self, generate_synthetic, load_csv, split_sizes, standardize, Dataset, SyntheticConfig,
};
use dstfs::eval::{self, average_ranking, rank_scores, AccuracyRecord, EvalConfig};
use ndarray::Axis;
use proptest::prelude::*;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn csv_loading_examples() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "a,b,label\n1.0,2.0,10\n3.0,4.0,2\n5.0,6.0,10\n").unwrap();
    let ds = load_csv(&good, "label").unwrap();
    assert_eq!(ds.n_samples(), 3);
    assert_eq!(ds.n_features(), 2);
    assert_eq!(ds.class_names, vec!["2", "10"]);
    assert_eq!(ds.y, vec![1, 0, 1]);
    assert_eq!(ds.x[[1, 1]], 4.0);

    let text = dir.path().join("text.csv");
    fs::write(&text, "label,x\ncat,1\ndog,2\nant,3\n").unwrap();
    assert_eq!(load_csv(&text, "label").unwrap().y, vec![1, 2, 0]);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,label\n1.0,0\nfoo,1\n").unwrap();
    let err = load_csv(&bad, "label").unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("\"a\""), "{err}");

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,label\n1.0,0\n2.0\n").unwrap();
    assert!(load_csv(&ragged, "label").is_err());

    let single = dir.path().join("single.csv");
    fs::write(&single, "a,label\n1.0,0\n2.0,0\n").unwrap();
    assert!(load_csv(&single, "label").is_err());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "a,label\n").unwrap();
    assert!(load_csv(&empty, "label")
        .unwrap_err()
        .to_string()
        .contains("no samples"));
    assert!(load_csv(&good, "class").is_err());
    assert!(load_csv(&dir.path().join("missing.csv"), "label").is_err());
}

#[test]
fn csv_round_trip_of_synthetic_data() {
    let ds = generate_synthetic(&SyntheticConfig::new(30, 4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    ds.write_csv(&path, "label").unwrap();
    let back = load_csv(&path, "label").unwrap();
    assert_eq!(back.x, ds.x);
    assert_eq!(back.y, ds.y);
}

#[test]
fn splits_and_standardization_use_train_rows_only() {
    for m in [10, 57, 100, 1000, 1003] {
        let ds = generate_synthetic(&SyntheticConfig {
            n_samples: m,
            n_features: 5,
            n_informative: 2,
            seed: m as u64,
        })
        .unwrap();
        let ds = data::split(ds, 7).unwrap();
        let s = ds.split().unwrap();
        let (tr, va, te) = split_sizes(m);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
        assert_eq!(va, (0.15 * m as f64).floor() as usize);
        assert_eq!(te, (0.20 * m as f64).floor() as usize);
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..m).collect::<Vec<_>>());

        let raw = ds.clone();
        let (std_ds, st) = standardize(ds).unwrap();
        let train = std_ds.x.select(Axis(0), &std_ds.split().unwrap().train);
        for col in train.columns() {
            assert!(col.mean().unwrap().abs() < 1e-10);
        }
        // statistics come from train rows only: poisoning held-out rows changes nothing
        let mut poisoned = raw.clone();
        for &i in &raw.split().unwrap().test {
            poisoned.x.row_mut(i).fill(1e6);
        }
        let (_, st2) = standardize(poisoned).unwrap();
        assert_eq!(st, st2);
    }
    assert!(data::split(generate_synthetic(&SyntheticConfig::new(9, 0)).unwrap(), 0).is_err());
}

#[test]
fn constant_column_standardizes_to_zero() {
    let mut ds = generate_synthetic(&SyntheticConfig::new(40, 1)).unwrap();
    ds.x.column_mut(3).fill(2.5);
    let (ds, _) = standardize(data::split(ds, 0).unwrap()).unwrap();
    assert!(ds.x.column(3).iter().all(|&v| v == 0.0));
}

#[test]
fn synthetic_feature_correlations() {
    let ds = generate_synthetic(&SyntheticConfig::new(10000, 3)).unwrap();
    let inf = ds.informative.clone().unwrap();
    assert_eq!(inf.len(), 100);
    let y: Vec<f64> = ds.y.iter().map(|&c| c as f64).collect();
    assert_eq!(ds.y.iter().filter(|&&c| c == 1).count(), 5000);
    for j in 0..200 {
        let col: Vec<f64> = ds.x.column(j).to_vec();
        let r = pearson(&col, &y).abs();
        if inf.contains(&j) {
            assert!(r > 0.2, "informative {j}: {r}");
        } else {
            assert!(r < 0.05, "noise {j}: {r}");
        }
    }
    let again = generate_synthetic(&SyntheticConfig::new(10000, 3)).unwrap();
    assert_eq!(again.x, ds.x);
}

#[test]
fn downstream_accuracy_separates_signal_from_noise() {
    let ds = generate_synthetic(&SyntheticConfig::new(1000, 5)).unwrap();
    let ds = dstfs::pipeline::prepare_dataset(ds, 5).unwrap();
    let inf = ds.informative.clone().unwrap();
    let noise: Vec<usize> = (0..200).filter(|j| !inf.contains(j)).collect();
    let cfg = EvalConfig::default();
    let good = eval::evaluate_subset(&ds, &inf, &cfg, 0).unwrap();
    assert!(good > 0.9, "{good}");
    let chance = eval::evaluate_subset(&ds, &noise[..1], &cfg, 0).unwrap();
    assert!((chance - 0.5).abs() < 0.1, "{chance}");
    assert!(eval::evaluate_subset(&ds, &[], &cfg, 0).is_err());
    assert!(eval::evaluate_subset(&ds, &[1, 1], &cfg, 0).is_err());
    assert!(eval::evaluate_subset(&ds, &[200], &cfg, 0).is_err());
    let rep =
        eval::evaluate_subset_repeated(&ds, &inf, &EvalConfig { repeats: 3, ..cfg }, 0).unwrap();
    assert_eq!(rep.values.len(), 3);
}

#[test]
fn best_of_six_methods_scores_six() {
    let methods = [
        "Dense-QS",
        "Dense-Attr",
        "SET-QS",
        "SET-Attr",
        "RigL-QS",
        "RigL-Attr",
    ];
    let accs = [0.90, 0.91, 0.92, 0.97, 0.93, 0.94];
    let records: Vec<AccuracyRecord> = methods
        .iter()
        .zip(accs)
        .map(|(m, a)| AccuracyRecord {
            method: m.to_string(),
            experiment: "mnist".into(),
            accuracy: a,
        })
        .collect();
    let ranking = average_ranking(&records).unwrap();
    let set_attr = ranking.iter().find(|(m, _)| m == "SET-Attr").unwrap().1;
    assert_eq!(set_attr, 6.0);
    assert_eq!(rank_scores(&accs), vec![1.0, 2.0, 3.0, 6.0, 4.0, 5.0]);
}

fn small(m: usize, classes: usize, seed: u64) -> Dataset {
    let x = ndarray::Array2::from_shape_fn((m, 2), |(i, j)| (i * 3 + j) as f64 + seed as f64);
    let y = (0..m).map(|i| i % classes).collect();
    Dataset::new(x, y).unwrap()
}

proptest! {
    #[test]
    fn split_partitions_and_stratifies(m in 10usize..300, classes in 2usize..5, seed in 0u64..50) {
        let ds = data::split(small(m, classes, seed), seed).unwrap();
        let s = ds.split().unwrap();
        let (tr, va, te) = split_sizes(m);
        prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (tr, va, te));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        if (0..classes).all(|c| ds.y.iter().filter(|&&y| y == c).count() >= 3) {
            for c in 0..classes {
                let total = ds.y.iter().filter(|&&y| y == c).count() as f64;
                let in_test = s.test.iter().filter(|&&i| ds.y[i] == c).count() as f64;
                prop_assert!((in_test - total * te as f64 / m as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
