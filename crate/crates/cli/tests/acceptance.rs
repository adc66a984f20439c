//! Acceptance suite. Every criterion runs to completion and prints one
//! `criterion N: PASS|FAIL` line; the test fails if any criterion fails.
//!
//! Run with `cargo test --release -p rcs-cli --test acceptance -- --nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use rcs::dataset::{load_csv, LabelColumn, LabeledDataset};
use rcs::gmm::{fit_gmm, EmConfig};
use rcs::linalg::{cholesky, sample_gaussian, Matrix, Vector};
use rcs::metrics::{bacc, confusion_matrix, gmean, macro_f1, mcc};
use rcs::rcs::{
    calibrate_point, component_weights, rcs_oversample, sample_calibrated, CalibratedGaussian, ComponentPool, PoolEntry,
    RcsConfig,
};
use rcs::rng::SeededRng;
use rcs::Seed;
use rcs_cli::{commands, pipeline, Method, RunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn load(name: &str) -> LabeledDataset {
    load_csv(data_file(name), &LabelColumn::Name("class".into()), true).unwrap()
}

fn gauss(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_spd(d: usize, rng: &mut SeededRng) -> Matrix {
    let a: Vec<f64> = (0..d * d).map(|_| gauss(rng)).collect();
    let a = Matrix::from_vec(d, d, a).unwrap();
    let mut m = a.matmul(&a.transpose()).unwrap();
    m.add_scaled(0.1, &Matrix::identity(d)).unwrap();
    m
}

fn random_vector(d: usize, scale: f64, rng: &mut SeededRng) -> Vector {
    (0..d).map(|_| scale * gauss(rng)).collect()
}

/// Random pool, class covariance and query row.
fn random_calibration(seed: Seed) -> CalibratedGaussian {
    let mut rng = seed.rng();
    let d = rng.random_range(1..=5);
    let n = rng.random_range(1..=12);
    let entries = (0..n)
        .map(|i| PoolEntry {
            mean: random_vector(d, 3.0, &mut rng),
            cov: random_spd(d, &mut rng),
            size: rng.random_range(1..=100),
            source_class: i % 3,
        })
        .collect();
    let pool = ComponentPool { entries };
    let w = component_weights(&pool).unwrap();
    let sigma_m = random_spd(d, &mut rng);
    let l = random_vector(d, 3.0, &mut rng);
    let k = rng.random_range(1..=pool.len());
    calibrate_point(&l, &pool, &w, k, &sigma_m).unwrap()
}

fn wine_config() -> RunConfig {
    RunConfig { eta: 1.3, k: 3, label_col: "class".into(), ..RunConfig::default() }
}

fn wine_benchmark() -> (pipeline::BenchmarkReport, f64) {
    let ds = load("wine.csv");
    let start = Instant::now();
    let report = pipeline::benchmark(&ds, &[Method::None, Method::Rcs], &wine_config()).unwrap();
    (report, start.elapsed().as_secs_f64())
}

fn criterion_1_2(report: &pipeline::BenchmarkReport, secs: f64) -> (Outcome, Outcome) {
    let none = &report.methods[0].aggregate;
    let rcs = &report.methods[1].aggregate;
    let c1 = outcome(
        rcs.bacc.mean >= 0.85 && rcs.mcc.mean >= 0.80 && secs < 120.0,
        format!("wine rcs BACC {:.4} MCC {:.4} in {secs:.1}s", rcs.bacc.mean, rcs.mcc.mean),
    );
    let gap = rcs.bacc.mean - none.bacc.mean;
    let c2 = outcome(
        gap >= 0.05,
        format!("wine BACC rcs {:.4} - none {:.4} = {gap:+.4} (need >= 0.05)", rcs.bacc.mean, none.bacc.mean),
    );
    (c1, c2)
}

fn criterion_3() -> Outcome {
    let path = data_file("dermatology.csv");
    if !path.exists() {
        return outcome(false, format!("{} not found", path.display()));
    }
    let ds = load("dermatology.csv");
    let cfg = RunConfig { eta: 2.0, k: 3, label_col: "class".into(), ..RunConfig::default() };
    let start = Instant::now();
    let report = pipeline::benchmark(&ds, &[Method::Rcs], &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let b = report.methods[0].aggregate.bacc.mean;
    outcome(b >= 0.90 && secs < 180.0, format!("dermatology rcs BACC {b:.4} in {secs:.1}s"))
}

fn balanced(ds: &LabeledDataset, cfg: &RcsConfig) -> bool {
    let n1 = *ds.counts_by_label().iter().max().unwrap();
    let (out, _) = rcs_oversample(ds, cfg).unwrap();
    out.counts_by_label().iter().all(|&c| c == n1)
}

fn criterion_4() -> Outcome {
    let root = Seed::new(4).child("toys");
    let mut failures = Vec::new();
    let toys = 40;
    for t in 0..toys {
        let mut rng = root.index(t).rng();
        let k = rng.random_range(2..=6);
        let d = rng.random_range(2..=5);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for c in 0..k {
            let n = rng.random_range(2..=120);
            let centre = random_vector(d, 4.0, &mut rng);
            for _ in 0..n {
                features.push(centre.iter().map(|m| m + gauss(&mut rng)).collect());
                labels.push(c);
            }
        }
        let ds = LabeledDataset::from_parts(features, labels, k).unwrap();
        let cfg = RcsConfig::new(rng.random_range(1.0..4.0), rng.random_range(1..=4), t);
        if !balanced(&ds, &cfg) {
            failures.push(format!("toy {t}"));
        }
    }
    let wine = load("wine.csv");
    for seed in 0..5 {
        if !balanced(&wine, &RcsConfig::new(1.3, 3, seed)) {
            failures.push(format!("wine seed {seed}"));
        }
    }
    outcome(failures.is_empty(), format!("{toys} toys + wine x5 seeds, unbalanced: {failures:?}"))
}

fn criterion_5() -> Outcome {
    let root = Seed::new(5).child("calibrate");
    let mut violations = 0;
    for i in 0..1000 {
        let g = random_calibration(root.index(i));
        let c = g.coefficients();
        let neighbor_sum: f64 = g.neighbor_weights.iter().sum();
        let ok = c.iter().all(|&v| v >= 0.0)
            && (c.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            && g.self_weight > neighbor_sum;
        if !ok {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("1000 calibrations, {violations} violations"))
}

fn criterion_6() -> Outcome {
    let root = Seed::new(6).child("unbiased");
    let draws = 100_000;
    let mut failures = 0;
    let mut coords = 0;
    for i in 0..50 {
        let g = random_calibration(root.index(i));
        let xs = sample_calibrated(&g, draws, &mut root.index(i).child("draws").rng()).unwrap();
        let sigma_max = g.cov.diag().iter().fold(0.0f64, |a, &v| a.max(v)).sqrt();
        let bound = 4.0 * sigma_max / (draws as f64).sqrt();
        for j in 0..g.mean.len() {
            let m = xs.iter().map(|x| x[j]).sum::<f64>() / draws as f64;
            coords += 1;
            if (m - g.mean[j]).abs() > bound {
                failures += 1;
            }
        }
    }
    outcome(failures <= 1, format!("50 gaussians x 1e5 draws, {failures} of {coords} coordinates outside 4 sigma"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let summary = commands::gradcheck(&RunConfig::default(), false).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = summary.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    outcome(
        summary.pass && secs < 60.0,
        format!("{} loss configurations, worst rel err {worst:.2e}, {secs:.1}s", summary.entries.len()),
    )
}

fn criterion_8() -> Outcome {
    let root = Seed::new(8).child("em");
    let mut decreases = 0;
    for r in 0..100 {
        let mut rng = root.index(r).rng();
        let d = rng.random_range(1..=4);
        let comps = rng.random_range(1..=4);
        let mut data = Vec::new();
        for _ in 0..comps {
            let mean = random_vector(d, 5.0, &mut rng);
            let chol = cholesky(&random_spd(d, &mut rng)).unwrap();
            let n = rng.random_range(10..=60);
            data.extend(sample_gaussian(&mean, &chol, n, &mut rng).unwrap());
        }
        let xi = rng.random_range(1..=4);
        let m = fit_gmm(&data, xi, &EmConfig::default(), &mut rng).unwrap();
        if m.loglik_trace.windows(2).any(|w| w[1] < w[0] - 1e-9) {
            decreases += 1;
        }
    }
    outcome(decreases == 0, format!("100 EM fits, {decreases} with a decreasing objective"))
}

struct OracleMetrics {
    bacc: f64,
    mcc: f64,
    f1: f64,
    gmean: f64,
}

/// Per-class counting over expanded label lists; MCC as the correlation of
/// one-hot indicator matrices.
fn oracle(t: &[usize], p: &[usize], k: usize) -> OracleMetrics {
    let n = t.len() as f64;
    let mut recalls = Vec::new();
    let mut f1s = Vec::new();
    for c in 0..k {
        let tp = t.iter().zip(p).filter(|(&a, &b)| a == c && b == c).count() as f64;
        let fp = t.iter().zip(p).filter(|(&a, &b)| a != c && b == c).count() as f64;
        let fn_ = t.iter().zip(p).filter(|(&a, &b)| a == c && b != c).count() as f64;
        recalls.push(tp / (tp + fn_));
        f1s.push(if tp + fp + fn_ == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) });
    }
    let onehot = |v: &[usize]| -> Vec<Vec<f64>> {
        v.iter().map(|&l| (0..k).map(|c| f64::from(u8::from(c == l))).collect()).collect()
    };
    let (x, y) = (onehot(t), onehot(p));
    let col_mean = |m: &[Vec<f64>], c: usize| m.iter().map(|r| r[c]).sum::<f64>() / n;
    let cov = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        (0..k)
            .map(|c| {
                let (ma, mb) = (col_mean(a, c), col_mean(b, c));
                a.iter().zip(b).map(|(ra, rb)| (ra[c] - ma) * (rb[c] - mb)).sum::<f64>()
            })
            .sum()
    };
    let denom = (cov(&x, &x) * cov(&y, &y)).sqrt();
    OracleMetrics {
        bacc: recalls.iter().sum::<f64>() / k as f64,
        mcc: if denom == 0.0 { 0.0 } else { cov(&x, &y) / denom },
        f1: f1s.iter().sum::<f64>() / k as f64,
        gmean: recalls.iter().product::<f64>().powf(1.0 / k as f64),
    }
}

fn criterion_9() -> Outcome {
    let root = Seed::new(9).child("metrics");
    let mut mismatches = 0;
    for i in 0..500 {
        let mut rng = root.index(i).rng();
        let k = rng.random_range(2..=6);
        let (mut t, mut p) = (Vec::new(), Vec::new());
        for a in 0..k {
            for b in 0..k {
                let lo = usize::from(a == b);
                for _ in 0..rng.random_range(lo..=15) {
                    t.push(a);
                    p.push(b);
                }
            }
        }
        let cm = confusion_matrix(&t, &p, k).unwrap();
        let o = oracle(&t, &p, k);
        let got = [bacc(&cm).unwrap(), mcc(&cm), macro_f1(&cm), gmean(&cm).unwrap()];
        let want = [o.bacc, o.mcc, o.f1, o.gmean];
        if got.iter().zip(&want).any(|(g, w)| (g - w).abs() > 1e-10) {
            mismatches += 1;
        }
    }
    let spot_bacc = bacc(&confusion_matrix(&[0, 0, 1, 1], &[0, 0, 0, 1], 2).unwrap()).unwrap();
    let spot_gmean = gmean(&confusion_matrix(&[0, 1, 1, 1, 1], &[0, 0, 0, 0, 1], 2).unwrap()).unwrap();
    let spots = spot_bacc == 0.75 && spot_gmean == 0.5;
    outcome(
        mismatches == 0 && spots,
        format!("500 matrices, {mismatches} mismatches; BACC(1, 0.5) = {spot_bacc}, Gmean(1, 0.25) = {spot_gmean}"),
    )
}

fn criterion_10() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { data: Some(data_file("wine.csv")), out_dir: dir.path().to_path_buf(), ..wine_config() };
        commands::benchmark(&cfg).unwrap();
        std::fs::read(dir.path().join("benchmark.json")).unwrap()
    };
    let (a, b) = (run(), run());
    outcome(a == b, format!("benchmark.json {} vs {} bytes, identical: {}", a.len(), b.len(), a == b))
}

/// Ten Gaussian classes in 16 dimensions with training counts of 4000..40
/// divided by ten and 100 test rows per class.
fn toy_split() -> (LabeledDataset, LabeledDataset) {
    let counts = [400, 200, 100, 75, 50, 35, 20, 10, 6, 4];
    let d = 16;
    let root = Seed::new(7);
    let mut rng = root.child("means").rng();
    let means: Vec<Vector> = (0..counts.len()).map(|_| random_vector(d, 1.0, &mut rng)).collect();
    let chol = cholesky(&Matrix::identity(d)).unwrap();
    let draw = |tag: &str, n_of: &dyn Fn(usize) -> usize| {
        let mut rng = root.child(tag).rng();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (c, m) in means.iter().enumerate() {
            xs.extend(sample_gaussian(m, &chol, n_of(c), &mut rng).unwrap());
            ys.extend(std::iter::repeat_n(c, n_of(c)));
        }
        LabeledDataset::from_parts(xs, ys, counts.len()).unwrap()
    };
    (draw("train", &|c| counts[c]), draw("test", &|_| 100))
}

fn criterion_11() -> Outcome {
    let (train, test) = toy_split();
    let cfg = RunConfig { eta: 7.0, k: 5, temperature: 0.07, use_embedder: true, ..RunConfig::default() };
    let res = pipeline::holdout(&train, &test, &[Method::None, Method::Smote, Method::Rcs], &cfg).unwrap();
    let b = |i: usize| res[i].1.metrics.bacc;
    let (none, smote, rcs) = (b(0), b(1), b(2));
    outcome(
        rcs >= none && rcs >= smote - 0.02,
        format!("toy with embedder: BACC none {none:.4}, smote {smote:.4}, rcs {rcs:.4}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

#[test]
fn acceptance() {
    let mut results: Vec<(u32, Outcome)> = Vec::new();
    match catch_unwind(wine_benchmark) {
        Ok((report, secs)) => {
            let (c1, c2) = criterion_1_2(&report, secs);
            results.push((1, c1));
            results.push((2, c2));
        }
        Err(_) => {
            results.push((1, outcome(false, "wine benchmark panicked")));
            results.push((2, outcome(false, "wine benchmark panicked")));
        }
    }
    let rest: [(u32, fn() -> Outcome); 9] = [
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    for (n, f) in rest {
        results.push((n, guarded(f)));
    }
    for (n, o) in &results {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u32> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
