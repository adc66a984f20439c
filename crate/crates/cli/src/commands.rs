//! Command implementations. Each returns its report and writes its output
//! files under `out_dir`.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use rcs::dataset::{save_csv, Standardizer};
use rcs::embedder::{encode, train_autoencoder, AutoencoderBundle, AutoencoderConfig};
use rcs::linalg::{cholesky, sample_gaussian, Matrix, Vector};
use rcs::nn::{
    finite_diff_gradcheck_kinks, softmax_cross_entropy_grad, Activation, GradcheckOptions, LossSpec, Mlp,
};
use rcs::rcs::{plan_oversampling, ClassRole, RunReport};
use rcs::Seed;

use crate::config::{Method, RunConfig};
use crate::pipeline::{self, BenchmarkReport, EvaluationReport};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectClass {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub role: ClassRole,
    pub xi: Option<usize>,
    pub n_generate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub rows: usize,
    pub dim: usize,
    pub eta: f64,
    pub zeta: f64,
    pub n_majority: usize,
    pub n_intermediate: usize,
    pub n_minority: usize,
    pub classes: Vec<InspectClass>,
    pub total_generate: usize,
}

impl InspectReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "rows {}  dim {}  eta {}  zeta {:.2}\npartition: {} majority, {} intermediate, {} minority\n",
            self.rows, self.dim, self.eta, self.zeta, self.n_majority, self.n_intermediate, self.n_minority
        );
        s.push_str(&format!("{:<12} {:>6} {:<13} {:>4} {:>9}\n", "class", "N", "role", "xi", "generate"));
        for c in &self.classes {
            let role = format!("{:?}", c.role).to_lowercase();
            let xi = c.xi.map_or("-".to_string(), |x| x.to_string());
            s.push_str(&format!("{:<12} {:>6} {:<13} {:>4} {:>9}\n", c.label, c.n, role, xi, c.n_generate));
        }
        if self.total_generate == 0 {
            s.push_str("no generation needed\n");
        } else {
            s.push_str(&format!("{} rows to generate\n", self.total_generate));
        }
        s
    }
}

/// Class counts, threshold, partition and planned generation; no sampling.
pub fn inspect(cfg: &RunConfig) -> Result<InspectReport> {
    cfg.validate()?;
    let ds = pipeline::load_dataset(cfg)?;
    let plan = plan_oversampling(&ds, cfg.eta)?;
    let names = ds.label_names();
    let report = InspectReport {
        rows: ds.len(),
        dim: ds.dim(),
        eta: cfg.eta,
        zeta: plan.partition.zeta,
        n_majority: 1,
        n_intermediate: plan.partition.intermediate.len(),
        n_minority: plan.partition.minority.len(),
        classes: plan
            .classes
            .iter()
            .map(|c| InspectClass {
                label: names[c.label].clone(),
                n: c.count,
                role: c.role,
                xi: c.xi,
                n_generate: c.n_generate,
            })
            .collect(),
        total_generate: plan.total_generated(),
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCount {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OversampleReport {
    pub method: Method,
    pub seed: u64,
    pub use_embedder: bool,
    pub rows_in: usize,
    pub rows_out: usize,
    pub counts_out: Vec<ClassCount>,
    pub rcs: Option<RunReport>,
    pub warnings: Vec<String>,
}

/// Balance the dataset and write `oversampled.csv` and `oversample_report.json`.
pub fn oversample(cfg: &RunConfig) -> Result<OversampleReport> {
    cfg.validate()?;
    let ds = pipeline::load_dataset(cfg)?;
    let seed = Seed::new(cfg.seed).child("oversample");
    let res = if cfg.use_embedder {
        // the autoencoder works on z-scores; synthetic rows are mapped back to input units
        let scaler = Standardizer::fit(ds.features())?;
        let z = scaler.apply(&ds)?;
        let bundle = train_autoencoder(&z, &pipeline::autoencoder_config(cfg, ds.dim()), seed.child("embedder").value())?;
        let mut res = pipeline::oversample_through(&z, &bundle, cfg.method, cfg, seed.child("sampler").value())?;
        res.data = scaler.inverse(&res.data)?;
        let mut restored = ds.clone();
        for c in 0..ds.n_classes() {
            let rows: Vec<Vector> = res.data.features()[ds.len()..]
                .iter()
                .zip(&res.data.labels()[ds.len()..])
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| x.clone())
                .collect();
            restored.push_synthetic(c, rows)?;
        }
        res.data = restored;
        res
    } else {
        pipeline::oversample(&ds, cfg.method, cfg, seed.child("sampler").value())?
    };
    fs::create_dir_all(&cfg.out_dir)?;
    save_csv(&res.data, cfg.out_dir.join("oversampled.csv"))?;
    let counts = res.data.counts_by_label();
    let report = OversampleReport {
        method: cfg.method,
        seed: cfg.seed,
        use_embedder: cfg.use_embedder,
        rows_in: ds.len(),
        rows_out: res.data.len(),
        counts_out: ds
            .label_names()
            .iter()
            .zip(counts)
            .map(|(l, n)| ClassCount { label: l.clone(), n })
            .collect(),
        rcs: res.rcs_report,
        warnings: res.warnings,
    };
    write_json(&cfg.out_dir.join("oversample_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedCheckpoint {
    pub seed: u64,
    pub standardizer: Standardizer,
    pub config: AutoencoderConfig,
    pub bundle: AutoencoderBundle,
}

/// Train the autoencoder on the standardized dataset; write `latent.csv` and `autoencoder.json`.
pub fn embed(cfg: &RunConfig) -> Result<EmbedCheckpoint> {
    cfg.validate()?;
    let ds = pipeline::load_dataset(cfg)?;
    let scaler = Standardizer::fit(ds.features())?;
    let z = scaler.apply(&ds)?;
    let ae = pipeline::autoencoder_config(cfg, ds.dim());
    let bundle = train_autoencoder(&z, &ae, Seed::new(cfg.seed).child("embed").value())?;
    let latent = encode(&bundle, &z)?;
    fs::create_dir_all(&cfg.out_dir)?;
    save_csv(&latent, cfg.out_dir.join("latent.csv"))?;
    let ckpt = EmbedCheckpoint { seed: cfg.seed, standardizer: scaler, config: ae, bundle };
    write_json(&cfg.out_dir.join("autoencoder.json"), &ckpt)?;
    Ok(ckpt)
}

/// Cross-validate `cfg.method`; write `metrics.json`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    let ds = pipeline::load_dataset(cfg)?;
    let report = pipeline::evaluate(&ds, cfg)?;
    write_json(&cfg.out_dir.join("metrics.json"), &report)?;
    Ok(report)
}

/// Cross-validate every method in `cfg.methods`; write `benchmark.json` and `benchmark.txt`.
pub fn benchmark(cfg: &RunConfig) -> Result<BenchmarkReport> {
    anyhow::ensure!(cfg.methods.len() >= 2, "benchmark needs at least two methods");
    let ds = pipeline::load_dataset(cfg)?;
    let report = pipeline::benchmark(&ds, &cfg.methods, cfg)?;
    write_json(&cfg.out_dir.join("benchmark.json"), &report)?;
    fs::write(cfg.out_dir.join("benchmark.txt"), pipeline::render_table(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub loss: String,
    pub max_rel_error: f64,
    pub bound: f64,
    pub pass: bool,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub configurations: usize,
    pub entries: Vec<GradcheckEntry>,
    pub pass: bool,
}

impl GradcheckSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!(
                "{:<40} max rel err {:.3e}  (bound {:.0e}, {} checked, {} skipped)  {}\n",
                e.loss,
                e.max_rel_error,
                e.bound,
                e.checked,
                e.skipped,
                if e.pass { "ok" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Seeds of the random small networks checked per loss combination.
const GRADCHECK_CONFIGS: u64 = 20;
const MSE_BOUND: f64 = 1e-6;
const BOUND: f64 = 1e-4;

fn gradcheck_batch(seed: Seed, n: usize, d: usize, k: usize) -> Result<(Vec<Vector>, Vec<usize>)> {
    let chol = cholesky(&Matrix::identity(d))?;
    let xs = sample_gaussian(&vec![0.0; d], &chol, n, &mut seed.rng())?;
    Ok((xs, (0..n).map(|i| i % k).collect()))
}

/// Finite-difference checks of every loss combination on random small
/// networks, plus the downstream classifier. With `corrupt`, one analytic
/// gradient entry is perturbed (negative control).
pub fn gradcheck(cfg: &RunConfig, corrupt: bool) -> Result<GradcheckSummary> {
    let root = Seed::new(cfg.seed).child("gradcheck");
    let (d, latent, k, n) = (5, 3, 3, 9);
    let ae = AutoencoderConfig {
        latent_dim: latent,
        encoder_hidden: vec![6],
        decoder_hidden: vec![6],
        classifier_hidden: vec![5, 4],
        ..AutoencoderConfig::for_input(d, cfg.temperature)
    };
    // eps = 1e-5 leaves roundoff near 1e-6 on small gradients; kink-aware
    // probing makes the larger step safe
    let opts = GradcheckOptions { eps: 1e-4, seed: root.value(), ..GradcheckOptions::default() };
    let mut entries = Vec::new();
    for spec in LossSpec::combinations(cfg.temperature) {
        let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
        for c in 0..GRADCHECK_CONFIGS {
            let s = root.child(&spec.name()).index(c);
            let b = AutoencoderBundle::init(d, k, &ae, s.value())?.with_random_biases(s.child("bias").value(), 0.1);
            let (xs, ys) = gradcheck_batch(s.child("batch"), n, d, k)?;
            let (_, mut analytic) = b.loss_and_grad(&xs, &ys, &spec)?;
            if corrupt {
                analytic[0] += 1e-2 * (1.0 + analytic[0].abs());
            }
            let r = finite_diff_gradcheck_kinks(
                &b.to_flat(),
                &analytic,
                |p| Ok(b.with_flat(p)?.loss(&xs, &ys, &spec)?.total),
                |p| b.with_flat(p)?.relu_pattern(&xs, &spec),
                opts,
            )?;
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
            skipped += r.skipped;
        }
        let bound = if spec.is_mse_only() { MSE_BOUND } else { BOUND };
        entries.push(GradcheckEntry { loss: spec.name(), max_rel_error: worst, bound, pass: worst < bound, checked, skipped });
    }

    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for c in 0..GRADCHECK_CONFIGS {
        let s = root.child("classifier").index(c);
        let net = Mlp::init(&[d, 6, 4, k], Activation::Softmax, s.value())?.with_random_biases(s.child("bias").value(), 0.1);
        let (xs, ys) = gradcheck_batch(s.child("batch"), n, d, k)?;
        let trace = net.forward_batch(&xs)?;
        let (_, g) = softmax_cross_entropy_grad(trace.output(), &ys)?;
        let mut analytic = net.backward_logits(&trace, &g)?.params.to_flat();
        if corrupt {
            analytic[0] += 1e-2 * (1.0 + analytic[0].abs());
        }
        let loss = |p: &[f64]| -> rcs::Result<f64> {
            let out = net.with_flat(p)?.forward_batch(&xs)?;
            rcs::nn::cross_entropy_loss(out.output(), &ys)
        };
        let r = finite_diff_gradcheck_kinks(&net.to_flat(), &analytic, loss, |p| net.with_flat(p)?.relu_pattern(&xs), opts)?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    entries.push(GradcheckEntry {
        loss: "classifier".into(),
        max_rel_error: worst,
        bound: BOUND,
        pass: worst < BOUND,
        checked,
        skipped,
    });

    let pass = entries.iter().all(|e| e.pass);
    Ok(GradcheckSummary { configurations: GRADCHECK_CONFIGS as usize, entries, pass })
}
