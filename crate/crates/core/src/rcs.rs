//! The RCS oversampler.
//!
//! Classes are split by the threshold `ζ = N₁/η` into the majority class,
//! intermediate classes (`ζ ≤ N_c < N₁`) and minority classes (`N_c < ζ`).
//! Intermediate classes are topped up from their own mixture components.
//! Each minority row gets a Gaussian whose mean and covariance blend the row
//! (and its class covariance) with the `k` nearest pooled components of the
//! majority and intermediate classes, weighted by inverse component size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, ClassCounts, LabeledDataset};
use crate::error::{invalid, shape, RcsError, Result};
use crate::gmm::{component_count, fit_gmm, sample_component, EmConfig, GmmModel};
use crate::linalg::{
    cholesky, covariance_matrix, default_ridge, mean_vector, ridge_regularize, sample_gaussian,
    squared_distance, Matrix, Vector,
};
use crate::par::Exec;
use crate::rng::Seed;

/// Largest total neighbor weight; above it the neighbor weights are rescaled
/// so the row itself keeps a strictly dominant coefficient.
pub const MAX_NEIGHBOR_MASS: f64 = 0.5 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassRole {
    Majority,
    Intermediate,
    Minority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub majority: usize,
    /// Descending count order. Includes classes tied with the majority.
    pub intermediate: Vec<usize>,
    /// Descending count order.
    pub minority: Vec<usize>,
    pub zeta: f64,
}

impl ClassPartition {
    pub fn role(&self, label: usize) -> Option<ClassRole> {
        if label == self.majority {
            Some(ClassRole::Majority)
        } else if self.intermediate.contains(&label) {
            Some(ClassRole::Intermediate)
        } else if self.minority.contains(&label) {
            Some(ClassRole::Minority)
        } else {
            None
        }
    }
}

/// `ζ = N₁ / η`
pub fn compute_threshold(n1: usize, eta: f64) -> Result<f64> {
    if !(eta >= 1.0) || !eta.is_finite() {
        return Err(invalid(format!("eta must be a finite value >= 1, got {eta}")));
    }
    if n1 == 0 {
        return Err(invalid("largest class count must be >= 1"));
    }
    Ok(n1 as f64 / eta)
}

pub fn partition_classes(counts: &ClassCounts, zeta: f64) -> ClassPartition {
    let majority = counts.ordered[0].0;
    let mut intermediate = Vec::new();
    let mut minority = Vec::new();
    for &(label, n) in &counts.ordered[1..] {
        if n as f64 >= zeta {
            intermediate.push(label);
        } else {
            minority.push(label);
        }
    }
    ClassPartition { majority, intermediate, minority, zeta }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub mean: Vector,
    pub cov: Matrix,
    pub size: usize,
    pub source_class: usize,
}

/// Component statistics of the majority and intermediate classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPool {
    pub entries: Vec<PoolEntry>,
}

impl ComponentPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.mean.len())
    }
}

/// Majority components first, then each intermediate model in the given order.
pub fn build_component_pool(
    majority: (usize, &GmmModel),
    intermediates: &[(usize, &GmmModel)],
) -> ComponentPool {
    let entries = std::iter::once(majority)
        .chain(intermediates.iter().copied())
        .flat_map(|(label, m)| {
            m.components.iter().map(move |c| PoolEntry {
                mean: c.mean.clone(),
                cov: c.cov.clone(),
                size: c.size(),
                source_class: label,
            })
        })
        .collect();
    ComponentPool { entries }
}

/// `w_i = 1 / S_i`
pub fn component_weights(pool: &ComponentPool) -> Result<Vec<f64>> {
    pool.entries
        .iter()
        .map(|e| {
            if e.size == 0 {
                Err(invalid("pool component with zero samples"))
            } else {
                Ok(1.0 / e.size as f64)
            }
        })
        .collect()
}

/// Calibrated distribution for one minority row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedGaussian {
    pub mean: Vector,
    pub cov: Matrix,
    /// Pool indices of the neighbors, nearest first.
    pub neighbors: Vec<usize>,
    /// Weights applied to the neighbors (after any rescaling).
    pub neighbor_weights: Vec<f64>,
    /// Coefficient of the row itself and of the class covariance.
    pub self_weight: f64,
    /// Whether the neighbor weights had to be rescaled.
    pub capped: bool,
}

impl CalibratedGaussian {
    /// Neighbor weights followed by the self weight.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = self.neighbor_weights.clone();
        c.push(self.self_weight);
        c
    }
}

/// Indices of the `k` pool means nearest to `l` (Euclidean, ties by index).
pub fn nearest_components(l: &[f64], pool: &ComponentPool, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = pool
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (squared_distance(&e.mean, l), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn calibrate_point(
    l: &[f64],
    pool: &ComponentPool,
    weights: &[f64],
    k: usize,
    sigma_m: &Matrix,
) -> Result<CalibratedGaussian> {
    if k == 0 || k > pool.len() {
        return Err(invalid(format!("k = {k} must lie in 1..={}", pool.len())));
    }
    if weights.len() != pool.len() {
        return Err(shape("one weight per pool entry required"));
    }
    let d = l.len();
    if pool.dim() != d || sigma_m.rows() != d || sigma_m.cols() != d {
        return Err(shape("row, pool and class covariance dimensions differ"));
    }
    let neighbors = nearest_components(l, pool, k);
    let mut neighbor_weights: Vec<f64> = neighbors.iter().map(|&i| weights[i]).collect();
    if neighbor_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("component weights must be nonnegative"));
    }
    let mass: f64 = neighbor_weights.iter().sum();
    let capped = mass > MAX_NEIGHBOR_MASS;
    if capped {
        let scale = MAX_NEIGHBOR_MASS / mass;
        neighbor_weights.iter_mut().for_each(|w| *w *= scale);
    }
    let self_weight = 1.0 - neighbor_weights.iter().sum::<f64>();

    let mut mean: Vector = l.iter().map(|v| self_weight * v).collect();
    let mut cov = sigma_m.scale(self_weight);
    for (&i, &w) in neighbors.iter().zip(&neighbor_weights) {
        let e = &pool.entries[i];
        for (m, v) in mean.iter_mut().zip(&e.mean) {
            *m += w * v;
        }
        cov.add_scaled(w, &e.cov)?;
    }
    cov.symmetrize();
    Ok(CalibratedGaussian { mean, cov, neighbors, neighbor_weights, self_weight, capped })
}

/// Draw from a calibrated Gaussian after the default ridge.
pub fn sample_calibrated<R: Rng + ?Sized>(g: &CalibratedGaussian, n: usize, rng: &mut R) -> Result<Vec<Vector>> {
    let chol = match cholesky(&ridge_regularize(&g.cov, default_ridge(&g.cov))?) {
        Ok(c) => c,
        Err(_) => {
            let eps = default_ridge(&g.cov);
            let diag: Vec<f64> = g.cov.diag().iter().map(|v| v.max(0.0) + eps).collect();
            cholesky(&Matrix::from_diag(&diag))?
        }
    };
    sample_gaussian(&g.mean, &chol, n, rng)
}

/// `total` split over `units`: `floor(total/units)` each, remainder to the first units.
pub fn split_counts(total: usize, units: usize) -> Vec<usize> {
    if units == 0 {
        return Vec::new();
    }
    let base = total / units;
    let rem = total % units;
    (0..units).map(|i| base + usize::from(i < rem)).collect()
}

/// Top up an intermediate class from its own components.
pub fn oversample_intermediate<R: Rng + ?Sized>(gmm: &GmmModel, n_i: usize, rng: &mut R) -> Result<Vec<Vector>> {
    let mut out = Vec::with_capacity(n_i);
    for (j, n) in split_counts(n_i, gmm.n_components()).into_iter().enumerate() {
        if n > 0 {
            out.extend(sample_component(gmm, j, n, rng)?);
        }
    }
    Ok(out)
}

/// Generated rows of a minority class plus the number of rows whose neighbor
/// weights were rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorityDraws {
    pub rows: Vec<Vector>,
    pub capped: usize,
}

/// Ridge used in place of a class covariance for singleton classes.
fn singleton_ridge(pool: &ComponentPool) -> f64 {
    let d = pool.dim().max(1) as f64;
    let avg_trace =
        pool.entries.iter().map(|e| e.cov.trace()).sum::<f64>() / pool.len().max(1) as f64;
    (1e-6 * avg_trace / d).max(1e-9)
}

/// Calibrate every row of a minority class and draw `n_i` rows in total.
///
/// Row `r` draws from its own stream `seed.index(r)`.
pub fn oversample_minority(
    class_data: &[Vector],
    pool: &ComponentPool,
    weights: &[f64],
    k: usize,
    n_i: usize,
    seed: Seed,
    exec: Exec,
) -> Result<MinorityDraws> {
    if class_data.is_empty() {
        return Err(RcsError::EmptyInput("minority class without rows".into()));
    }
    let d = class_data[0].len();
    let sigma_m = if class_data.len() < 2 {
        Matrix::identity(d).scale(singleton_ridge(pool))
    } else {
        covariance_matrix(class_data, &mean_vector(class_data)?)?
    };
    let per_row = split_counts(n_i, class_data.len());
    let idx: Vec<usize> = (0..class_data.len()).collect();
    let results = exec.try_map(&idx, |&r| -> Result<(Vec<Vector>, bool)> {
        let g = calibrate_point(&class_data[r], pool, weights, k, &sigma_m)?;
        let draws = if per_row[r] > 0 {
            sample_calibrated(&g, per_row[r], &mut seed.index(r as u64).rng())?
        } else {
            Vec::new()
        };
        Ok((draws, g.capped))
    })?;
    let mut rows = Vec::with_capacity(n_i);
    let mut capped = 0;
    for (draws, c) in results {
        rows.extend(draws);
        capped += usize::from(c);
    }
    Ok(MinorityDraws { rows, capped })
}

/// Per-class generation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub label: usize,
    pub count: usize,
    pub role: ClassRole,
    /// Mixture components fitted for the class (majority and intermediate classes).
    pub xi: Option<usize>,
    /// `N₁ − N_c`
    pub n_generate: usize,
    /// Draws per generation unit (component or row) before the remainder.
    pub base_per_unit: usize,
    /// Units receiving one extra draw.
    pub remainder: usize,
}

/// What RCS would do to a dataset, without sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversamplePlan {
    pub counts: ClassCounts,
    pub partition: ClassPartition,
    pub classes: Vec<ClassPlan>,
}

impl OversamplePlan {
    pub fn total_generated(&self) -> usize {
        self.classes.iter().map(|c| c.n_generate).sum()
    }

    pub fn class(&self, label: usize) -> Option<&ClassPlan> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn needs_pool(&self) -> bool {
        self.classes.iter().any(|c| c.role == ClassRole::Minority && c.n_generate > 0)
    }
}

pub fn plan_oversampling(ds: &LabeledDataset, eta: f64) -> Result<OversamplePlan> {
    let counts = class_counts(ds)?;
    let zeta = compute_threshold(counts.n1, eta)?;
    let partition = partition_classes(&counts, zeta);
    let mut classes = Vec::with_capacity(counts.ordered.len());
    for &(label, n) in &counts.ordered {
        let role = partition.role(label).expect("every class is partitioned");
        let n_generate = counts.n1 - n;
        let xi = match role {
            ClassRole::Majority => Some(component_count(n, counts.nk)?),
            ClassRole::Intermediate if n_generate > 0 => Some(component_count(n, counts.nk)?),
            _ => None,
        };
        let units = match role {
            ClassRole::Minority => n,
            _ => xi.unwrap_or(1),
        };
        classes.push(ClassPlan {
            label,
            count: n,
            role,
            xi,
            n_generate,
            base_per_unit: n_generate / units,
            remainder: n_generate % units,
        });
    }
    Ok(OversamplePlan { counts, partition, classes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub majority: String,
    pub intermediate: Vec<String>,
    pub minority: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub role: ClassRole,
    pub xi: Option<usize>,
    pub n_generated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub zeta: f64,
    pub eta: f64,
    pub k: usize,
    pub k_effective: usize,
    pub pool_size: usize,
    pub partition: PartitionReport,
    pub per_class: Vec<ClassReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcsConfig {
    pub eta: f64,
    pub k: usize,
    pub em: EmConfig,
    pub seed: u64,
    pub exec: Exec,
}

impl RcsConfig {
    pub fn new(eta: f64, k: usize, seed: u64) -> Self {
        RcsConfig { eta, k, em: EmConfig::default(), seed, exec: Exec::default() }
    }
}

/// Balance every class to `N₁`. Originals come first, unchanged, followed by
/// synthetic rows grouped by class in descending-count order.
pub fn rcs_oversample(ds: &LabeledDataset, cfg: &RcsConfig) -> Result<(LabeledDataset, RunReport)> {
    if cfg.k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    cfg.em.validate()?;
    let plan = plan_oversampling(ds, cfg.eta)?;
    if plan.counts.ordered.len() < 2 {
        return Err(invalid("oversampling needs at least two classes"));
    }
    let names = ds.label_names();
    let root = Seed::new(cfg.seed).child("rcs");
    let class_seed = |label: usize| root.child("class").index(label as u64);
    let mut warnings = Vec::new();

    // mixtures: majority only when a minority class needs the pool
    let needs_pool = plan.needs_pool();
    let to_fit: Vec<&ClassPlan> = plan
        .classes
        .iter()
        .filter(|c| match c.role {
            ClassRole::Majority => needs_pool,
            ClassRole::Intermediate => c.xi.is_some(),
            ClassRole::Minority => false,
        })
        .collect();
    let models = cfg.exec.try_map(&to_fit, |c| {
        let rows = ds.class_rows(c.label);
        fit_gmm(&rows, c.xi.unwrap_or(1), &cfg.em, &mut class_seed(c.label).child("gmm").rng())
    })?;
    for (c, m) in to_fit.iter().zip(&models) {
        for w in &m.warnings {
            warnings.push(format!("class {}: {w}", names[c.label]));
        }
    }
    let model_of = |label: usize| to_fit.iter().position(|c| c.label == label).map(|i| &models[i]);

    let mut generated: Vec<(usize, Vec<Vector>)> = Vec::new();

    let intermediates: Vec<&ClassPlan> =
        plan.classes.iter().filter(|c| c.role == ClassRole::Intermediate && c.xi.is_some()).collect();
    let inter_rows = cfg.exec.try_map(&intermediates, |c| {
        let m = model_of(c.label).expect("fitted");
        oversample_intermediate(m, c.n_generate, &mut class_seed(c.label).child("intermediate").rng())
    })?;
    for (c, rows) in intermediates.iter().zip(inter_rows) {
        generated.push((c.label, rows));
    }

    let mut pool_size = 0;
    let mut k_eff = cfg.k;
    if needs_pool {
        let majority = model_of(plan.partition.majority).expect("majority fitted");
        let inter_models: Vec<(usize, &GmmModel)> =
            intermediates.iter().map(|c| (c.label, model_of(c.label).expect("fitted"))).collect();
        let pool = build_component_pool((plan.partition.majority, majority), &inter_models);
        pool_size = pool.len();
        if k_eff > pool.len() {
            warnings.push(format!(
                "k = {} exceeds the component pool size {}; using k = {}",
                cfg.k,
                pool.len(),
                pool.len()
            ));
            k_eff = pool.len();
        }
        let weights = component_weights(&pool)?;
        for c in plan.classes.iter().filter(|c| c.role == ClassRole::Minority && c.n_generate > 0) {
            let rows = ds.class_rows(c.label);
            let draws = oversample_minority(
                &rows,
                &pool,
                &weights,
                k_eff,
                c.n_generate,
                class_seed(c.label).child("minority"),
                cfg.exec,
            )?;
            if draws.capped > 0 {
                warnings.push(format!(
                    "class {}: neighbor weights rescaled to keep the row dominant for {} of {} rows",
                    names[c.label],
                    draws.capped,
                    rows.len()
                ));
            }
            if rows.len() < 2 {
                warnings.push(format!(
                    "class {}: single row, class covariance replaced by a ridge",
                    names[c.label]
                ));
            }
            generated.push((c.label, draws.rows));
        }
    }

    // descending-count order regardless of which phase produced the rows
    generated.sort_by_key(|(label, _)| plan.classes.iter().position(|c| c.label == *label));
    let mut out = ds.clone();
    for (label, rows) in generated {
        out.push_synthetic(label, rows)?;
    }

    let out_counts = out.counts_by_label();
    debug_assert!(plan.classes.iter().all(|c| out_counts[c.label] == plan.counts.n1));

    let report = RunReport {
        seed: cfg.seed,
        zeta: plan.partition.zeta,
        eta: cfg.eta,
        k: cfg.k,
        k_effective: k_eff,
        pool_size,
        partition: PartitionReport {
            majority: names[plan.partition.majority].clone(),
            intermediate: plan.partition.intermediate.iter().map(|&l| names[l].clone()).collect(),
            minority: plan.partition.minority.iter().map(|&l| names[l].clone()).collect(),
        },
        per_class: plan
            .classes
            .iter()
            .map(|c| ClassReport {
                label: names[c.label].clone(),
                n: c.count,
                role: c.role,
                xi: c.xi,
                n_generated: out_counts[c.label] - c.count,
            })
            .collect(),
        warnings,
    };
    Ok((out, report))
}
