use flowguard::data::{
    apply_scaler, clean, fit_scaler, train_test_split, FlowDataset, SplitConfig,
};
use flowguard::metrics::roc_auc;
use flowguard::nn::{ArchConfig, AttentionPlacement, ModelParams};
use flowguard::smote::synthesize;
use flowguard::train::predict_proba;
use flowguard::Matrix;
use proptest::prelude::*;

fn dataset(rows: Vec<(Vec<f64>, u8)>, cols: usize) -> FlowDataset {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * cols);
    let mut labels = Vec::with_capacity(n);
    for (r, y) in rows {
        data.extend(r);
        labels.push(y);
    }
    let names = (0..cols).map(|j| format!("c{j}")).collect();
    FlowDataset::new(names, Matrix::from_vec(n, cols, data).unwrap(), labels).unwrap()
}

fn rows_strategy(cols: usize) -> impl Strategy<Value = Vec<(Vec<f64>, u8)>> {
    prop::collection::vec((prop::collection::vec(-1e3..1e3f64, cols), 0u8..2), 2..60)
}

fn sorted_rows(ds: &FlowDataset) -> Vec<(Vec<u64>, u8)> {
    let mut v: Vec<_> = (0..ds.n_rows())
        .map(|i| {
            (
                ds.features().row(i).iter().map(|x| x.to_bits()).collect(),
                ds.labels()[i],
            )
        })
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_the_rows(rows in rows_strategy(3), frac in 0.05..0.95f64, seed in any::<u64>(), stratify in any::<bool>()) {
        let ds = dataset(rows, 3);
        let cfg = SplitConfig { test_fraction: frac, seed, stratify };
        let (train, test) = train_test_split(&ds, &cfg).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        prop_assert_eq!(train.n_rows() + test.n_rows(), ds.n_rows());
        let mut joined = sorted_rows(&train);
        joined.extend(sorted_rows(&test));
        joined.sort();
        prop_assert_eq!(joined, sorted_rows(&ds));
        let (again_train, _) = train_test_split(&ds, &cfg).unwrap();
        prop_assert_eq!(sorted_rows(&again_train), sorted_rows(&train));
    }

    #[test]
    fn scaled_training_columns_are_standard(rows in rows_strategy(4)) {
        let ds = dataset(rows, 4);
        let s = fit_scaler(&ds).unwrap();
        let z = apply_scaler(&ds, &s).unwrap();
        let n = z.n_rows() as f64;
        for c in 0..4 {
            let col = z.features().column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
            if s.stds[c] > 1e-9 {
                prop_assert!((var - 1.0).abs() < 1e-9, "var {}", var);
            } else {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn cleaning_is_idempotent(rows in rows_strategy(3), holes in prop::collection::vec((0usize..60, 0usize..3, 0u8..3), 0..10)) {
        let mut ds_rows = rows;
        for (r, c, kind) in holes {
            if let Some(row) = ds_rows.get_mut(r) {
                row.0[c] = match kind { 0 => f64::NAN, 1 => f64::INFINITY, _ => f64::NEG_INFINITY };
            }
        }
        let ds = dataset(ds_rows, 3);
        if let Ok(once) = clean(&ds) {
            prop_assert!(once.features().is_finite());
            let twice = clean(&once).unwrap();
            prop_assert_eq!(sorted_rows(&twice), sorted_rows(&once));
        }
    }

    #[test]
    fn synthetic_points_lie_on_the_segment(
        pair in (1usize..8).prop_flat_map(|d| (prop::collection::vec(-1e4..1e4f64, d), prop::collection::vec(-1e4..1e4f64, d))),
        lambda in 0.0..1.0f64,
    ) {
        let (a, b) = pair;
        let s = synthesize(&a, &b, lambda).unwrap();
        for j in 0..a.len() {
            let (lo, hi) = (a[j].min(b[j]), a[j].max(b[j]));
            prop_assert!(s[j] >= lo - 1e-9 && s[j] <= hi + 1e-9);
            prop_assert!((s[j] - (a[j] + lambda * (b[j] - a[j]))).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(scores in prop::collection::vec(-5.0..5.0f64, 4..64), bits in prop::collection::vec(0u8..2, 64)) {
        let n = scores.len();
        let mut truth: Vec<u8> = bits[..n].to_vec();
        truth[0] = 1;
        truth[1] = 0;
        let a = roc_auc(&scores, &truth).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + s.powi(3)).collect();
        prop_assert!((roc_auc(&warped, &truth).unwrap() - a).abs() < 1e-9);
        let flipped: Vec<u8> = truth.iter().map(|t| 1 - t).collect();
        prop_assert!((roc_auc(&scores, &flipped).unwrap() + a - 1.0).abs() < 1e-9);
    }

    #[test]
    fn batch_prediction_matches_single_rows(rows in rows_strategy(3), seed in 0u64..1000) {
        let ds = dataset(rows, 3);
        let arch = ArchConfig {
            input_width: 6,
            block_widths: vec![6, 4],
            attention: AttentionPlacement::EveryBlock,
            init_seed: seed,
            ..Default::default()
        };
        let m = ModelParams::init(3, &arch).unwrap();
        let x = Matrix::from_vec(ds.n_rows(), 3, ds.features().as_slice().iter().map(|v| v / 1e3).collect()).unwrap();
        let all = predict_proba(&m, &x).unwrap();
        prop_assert_eq!(all.len(), x.rows());
        for i in 0..x.rows() {
            let one = predict_proba(&m, &x.select_rows(&[i])).unwrap();
            prop_assert_eq!(one[0].to_bits(), all[i].to_bits());
            prop_assert!(all[i] > 0.0 && all[i] < 1.0);
        }
    }
}
