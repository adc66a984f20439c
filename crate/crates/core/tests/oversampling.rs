use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use rcs::baselines::{random_oversample, smote};
use rcs::dataset::{read_csv, stratified_kfold, LabelColumn};
use rcs::rcs::{rcs_oversample, RcsConfig};
use rcs::{Exec, LabeledDataset, Seed};

fn blobs(counts: &[usize], d: usize, seed: u64) -> LabeledDataset {
    let mut rng = Seed::new(seed).rng();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        let centre: Vec<f64> = (0..d).map(|_| 4.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..n {
            features.push(centre.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect());
            labels.push(c);
        }
    }
    LabeledDataset::from_parts(features, labels, counts.len()).unwrap()
}

#[test]
fn serial_and_parallel_runs_agree() {
    let ds = blobs(&[300, 120, 40, 9, 5], 4, 3);
    let mut cfg = RcsConfig::new(3.0, 3, 17);
    cfg.exec = Exec::Serial;
    let (a, ra) = rcs_oversample(&ds, &cfg).unwrap();
    cfg.exec = Exec::Parallel;
    let (b, rb) = rcs_oversample(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(smote(&ds, 5, 2, Exec::Serial).unwrap(), smote(&ds, 5, 2, Exec::Parallel).unwrap());
    assert_eq!(random_oversample(&ds, 2, Exec::Serial).unwrap(), random_oversample(&ds, 2, Exec::Parallel).unwrap());
}

#[test]
fn originals_are_kept_and_flagged() {
    let ds = blobs(&[50, 20, 6], 3, 8);
    let (out, _) = rcs_oversample(&ds, &RcsConfig::new(2.0, 2, 1)).unwrap();
    assert_eq!(&out.features()[..ds.len()], ds.features());
    assert_eq!(&out.labels()[..ds.len()], ds.labels());
    assert!(out.synthetic()[..ds.len()].iter().all(|s| !s));
    assert!(out.synthetic()[ds.len()..].iter().all(|&s| s));
    assert_eq!(out.n_synthetic(), 150 - ds.len());
}

#[test]
fn different_seeds_give_different_samples() {
    let ds = blobs(&[60, 10], 2, 5);
    let (a, _) = rcs_oversample(&ds, &RcsConfig::new(2.0, 1, 1)).unwrap();
    let (b, _) = rcs_oversample(&ds, &RcsConfig::new(2.0, 1, 2)).unwrap();
    assert_ne!(a.features(), b.features());
}

#[test]
fn csv_round_trip_then_fold_then_balance() {
    let text = "f1,f2,y\n0,0,a\n0.1,0.2,a\n0.3,0.1,a\n0.2,0.2,a\n0.4,0.3,a\n0.1,0.4,a\n5,5,b\n5.2,4.9,b\n4.8,5.1,b\n";
    let ds = read_csv(text.as_bytes(), &LabelColumn::Last, true).unwrap();
    assert_eq!(ds.counts_by_label(), vec![6, 3]);
    let plan = stratified_kfold(&ds, 3, 0).unwrap();
    for f in 0..3 {
        let (train, test) = plan.split(&ds, f);
        assert_eq!(test.counts_by_label(), vec![2, 1]);
        let (out, _) = rcs_oversample(&train, &RcsConfig::new(2.0, 1, f as u64)).unwrap();
        assert_eq!(out.counts_by_label(), vec![4, 4]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_method_balances_to_the_largest_class(
        counts in prop::collection::vec(2usize..60, 2..5),
        eta in 1.0f64..5.0,
        seed in 0u64..1000,
    ) {
        let ds = blobs(&counts, 3, seed);
        let n1 = *counts.iter().max().unwrap();
        let (out, _) = rcs_oversample(&ds, &RcsConfig::new(eta, 3, seed)).unwrap();
        prop_assert!(out.counts_by_label().iter().all(|&c| c == n1));
        let (s, _) = smote(&ds, 5, seed, Exec::Parallel).unwrap();
        prop_assert!(s.counts_by_label().iter().all(|&c| c == n1));
        let r = random_oversample(&ds, seed, Exec::Parallel).unwrap();
        prop_assert!(r.counts_by_label().iter().all(|&c| c == n1));
    }
}
