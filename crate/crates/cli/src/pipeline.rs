//! Evaluation pipeline: per-fold standardization, optional autoencoder,
//! oversampling of the training split only, classifier training and metrics.

use anyhow::{ensure, Context, Result};
use serde::Serialize;

use rcs::baselines::{random_oversample, smote};
use rcs::dataset::{load_csv, stratified_kfold, FoldPlan, LabelColumn, LabeledDataset, Standardizer};
use rcs::embedder::{decode, encode, train_autoencoder, AutoencoderBundle, AutoencoderConfig};
use rcs::linalg::Vector;
use rcs::metrics::MetricsReport;
use rcs::nn::{predict_all, train_classifier, ClassifierConfig};
use rcs::rcs::{rcs_oversample, RcsConfig, RunReport};
use rcs::{Exec, Seed};

use crate::config::{Method, RunConfig};

pub fn exec_for(cfg: &RunConfig) -> Exec {
    if cfg.workers == 1 {
        Exec::Serial
    } else {
        Exec::Parallel
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    let path = cfg.data_path()?;
    let label: LabelColumn = cfg.label_col.parse().expect("infallible");
    load_csv(path, &label, cfg.header).with_context(|| format!("loading {}", path.display()))
}

pub fn classifier_config(cfg: &RunConfig) -> ClassifierConfig {
    ClassifierConfig {
        hidden: cfg.classifier_hidden.clone(),
        epochs: cfg.classifier_epochs,
        lr: cfg.classifier_lr,
        batch_size: cfg.batch_size,
    }
}

pub fn autoencoder_config(cfg: &RunConfig, input_dim: usize) -> AutoencoderConfig {
    let mut ae = AutoencoderConfig::for_input(input_dim, cfg.temperature);
    if let Some(l) = cfg.latent_dim {
        ae.latent_dim = l;
    }
    ae.epochs = cfg.embed_epochs;
    ae.lr = cfg.embed_lr;
    ae.batch_size = cfg.batch_size;
    ae
}

pub struct Oversampled {
    pub data: LabeledDataset,
    pub rcs_report: Option<RunReport>,
    pub warnings: Vec<String>,
}

/// Balance `ds` with `method`.
pub fn oversample(ds: &LabeledDataset, method: Method, cfg: &RunConfig, seed: u64) -> Result<Oversampled> {
    let exec = exec_for(cfg);
    Ok(match method {
        Method::None => Oversampled { data: ds.clone(), rcs_report: None, warnings: Vec::new() },
        Method::Ros => Oversampled { data: random_oversample(ds, seed, exec)?, rcs_report: None, warnings: Vec::new() },
        Method::Smote => {
            let (data, warnings) = smote(ds, cfg.smote_k, seed, exec)?;
            Oversampled { data, rcs_report: None, warnings }
        }
        Method::Rcs => {
            let mut rc = RcsConfig::new(cfg.eta, cfg.k, seed);
            rc.exec = exec;
            let (data, report) = rcs_oversample(ds, &rc)?;
            let warnings = report.warnings.clone();
            Oversampled { data, rcs_report: Some(report), warnings }
        }
    })
}

/// Oversample in latent space and map the synthetic rows back through the
/// decoder. Original rows stay untouched in input space.
pub fn oversample_through(
    ds: &LabeledDataset,
    bundle: &AutoencoderBundle,
    method: Method,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Oversampled> {
    let latent = encode(bundle, ds)?;
    let mut res = oversample(&latent, method, cfg, seed)?;
    let n = ds.len();
    let synth_latent = &res.data.features()[n..];
    let synth_labels = &res.data.labels()[n..];
    let decoded = decode(bundle, synth_latent)?;
    let mut out = ds.clone();
    for c in 0..ds.n_classes() {
        let rows: Vec<Vector> =
            decoded.iter().zip(synth_labels).filter(|(_, &l)| l == c).map(|(x, _)| x.clone()).collect();
        out.push_synthetic(c, rows)?;
    }
    res.data = out;
    Ok(res)
}

/// A train/test split after standardization and optional embedding. With an
/// embedder, `train` and `test` hold latent features unless synthetic rows are
/// decoded, in which case they stay in input space and `bundle` is kept.
pub struct PreparedSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub bundle: Option<AutoencoderBundle>,
}

pub fn prepare_split(train: &LabeledDataset, test: &LabeledDataset, cfg: &RunConfig, seed: Seed) -> Result<PreparedSplit> {
    let scaler = Standardizer::fit(train.features())?;
    let train = scaler.apply(train)?;
    let test = scaler.apply(test)?;
    if !cfg.use_embedder {
        return Ok(PreparedSplit { train, test, bundle: None });
    }
    let ae = autoencoder_config(cfg, train.dim());
    let bundle = train_autoencoder(&train, &ae, seed.child("embedder").value())?;
    if cfg.decode_synthetic {
        Ok(PreparedSplit { train, test, bundle: Some(bundle) })
    } else {
        Ok(PreparedSplit { train: encode(&bundle, &train)?, test: encode(&bundle, &test)?, bundle: None })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    pub n_train: usize,
    pub n_synthetic: usize,
    pub n_test: usize,
    pub metrics: MetricsReport,
    pub warnings: Vec<String>,
}

pub fn run_method(split: &PreparedSplit, method: Method, cfg: &RunConfig, seed: Seed) -> Result<SplitResult> {
    let over_seed = seed.child("oversample").value();
    let res = match &split.bundle {
        Some(b) => oversample_through(&split.train, b, method, cfg, over_seed)?,
        None => oversample(&split.train, method, cfg, over_seed)?,
    };
    ensure!(split.test.n_synthetic() == 0, "test split contains synthetic rows");
    let clf = train_classifier(&res.data, &classifier_config(cfg), seed.child("classifier").value())?;
    let pred = predict_all(&clf, split.test.features())?;
    let metrics = MetricsReport::evaluate(split.test.labels(), &pred, split.test.n_classes())?;
    Ok(SplitResult {
        n_train: split.train.len(),
        n_synthetic: res.data.n_synthetic(),
        n_test: split.test.len(),
        metrics,
        warnings: res.warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub bacc: MeanStd,
    pub mcc: MeanStd,
    pub f1_macro: MeanStd,
    pub gmean: MeanStd,
}

impl Aggregate {
    pub fn of(results: &[SplitResult]) -> Aggregate {
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&results.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        Aggregate { bacc: col(|m| m.bacc), mcc: col(|m| m.mcc), f1_macro: col(|m| m.f1_macro), gmean: col(|m| m.gmean) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    #[serde(flatten)]
    pub result: SplitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub seed: u64,
    pub folds: usize,
    pub use_embedder: bool,
    pub per_fold: Vec<FoldResult>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub folds: usize,
    pub use_embedder: bool,
    /// Fold index of every input row, shared by all methods.
    pub fold_assignments: Vec<usize>,
    pub methods: Vec<EvaluationReport>,
}

pub fn fold_plan(ds: &LabeledDataset, cfg: &RunConfig) -> Result<FoldPlan> {
    Ok(stratified_kfold(ds, cfg.folds, Seed::new(cfg.seed).child("folds").value())?)
}

/// Cross-validate every method on one shared fold plan. Each fold is
/// standardized (and embedded) once; all methods then see the same splits and seeds.
pub fn benchmark(ds: &LabeledDataset, methods: &[Method], cfg: &RunConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    ensure!(!methods.is_empty(), "no methods to evaluate");
    let plan = fold_plan(ds, cfg)?;
    let root = Seed::new(cfg.seed).child("fold");
    let folds: Vec<usize> = (0..plan.k).collect();
    let exec = exec_for(cfg);
    let per_fold: Vec<Vec<SplitResult>> = rcs::par::with_workers(cfg.workers, || {
        exec.try_map(&folds, |&f| -> Result<Vec<SplitResult>> {
            let seed = root.index(f as u64);
            let (train, test) = plan.split(ds, f);
            let split = prepare_split(&train, &test, cfg, seed)?;
            methods
                .iter()
                .map(|&m| run_method(&split, m, cfg, seed).with_context(|| format!("fold {f}, method {m}")))
                .collect()
        })
    })?;
    let reports = methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let results: Vec<SplitResult> = per_fold.iter().map(|r| r[i].clone()).collect();
            EvaluationReport {
                method: m,
                seed: cfg.seed,
                folds: plan.k,
                use_embedder: cfg.use_embedder,
                aggregate: Aggregate::of(&results),
                per_fold: results.into_iter().enumerate().map(|(fold, result)| FoldResult { fold, result }).collect(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        seed: cfg.seed,
        folds: plan.k,
        use_embedder: cfg.use_embedder,
        fold_assignments: plan.assignments,
        methods: reports,
    })
}

pub fn evaluate(ds: &LabeledDataset, cfg: &RunConfig) -> Result<EvaluationReport> {
    Ok(benchmark(ds, &[cfg.method], cfg)?.methods.remove(0))
}

/// Train on `train`, score on `test`, once per method.
pub fn holdout(
    train: &LabeledDataset,
    test: &LabeledDataset,
    methods: &[Method],
    cfg: &RunConfig,
) -> Result<Vec<(Method, SplitResult)>> {
    cfg.validate()?;
    let seed = Seed::new(cfg.seed).child("holdout");
    let split = prepare_split(train, test, cfg, seed)?;
    methods.iter().map(|&m| Ok((m, run_method(&split, m, cfg, seed)?))).collect()
}

/// Aligned text table of mean ± std per method.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut out = format!(
        "{:<8} {:>17} {:>17} {:>17} {:>17}\n",
        "method", "BACC", "MCC", "F1", "Gmean"
    );
    for r in &report.methods {
        let cell = |m: MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
        out.push_str(&format!(
            "{:<8} {:>17} {:>17} {:>17} {:>17}\n",
            r.method.to_string(),
            cell(r.aggregate.bacc),
            cell(r.aggregate.mcc),
            cell(r.aggregate.f1_macro),
            cell(r.aggregate.gmean)
        ));
    }
    out
}
