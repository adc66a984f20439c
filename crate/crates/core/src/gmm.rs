//! Per-class Gaussian mixture models fitted by EM.
//!
//! Covariances are full. Each component carries a ridge `c / n_k` where `c`
//! is fixed for the whole fit; with that choice every M-step is the exact
//! maximizer of the log-likelihood penalized by `-(c/2) Σ_k tr(Σ_k⁻¹)`, so the
//! recorded objective is non-decreasing. `cov` itself is the plain
//! responsibility-weighted ML estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, RcsError, Result};
use crate::linalg::{
    cholesky, default_ridge, dot, log_sum_exp, mean_vector, ridge_regularize, sample_gaussian,
    squared_distance, CholeskyFactor, Matrix, Vector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vector,
    /// Responsibility-weighted ML covariance.
    pub cov: Matrix,
    /// Diagonal loading applied wherever the component density is evaluated or sampled.
    pub ridge: f64,
    /// Rows whose largest responsibility belongs to this component.
    pub hard_count: usize,
}

impl GmmComponent {
    /// Sample count used for calibration weights, floored at 1.
    pub fn size(&self) -> usize {
        self.hard_count.max(1)
    }

    pub fn regularized_cov(&self) -> Matrix {
        let mut m = self.cov.clone();
        for i in 0..m.rows() {
            m[(i, i)] += self.ridge;
        }
        m
    }

    /// Factor of the regularized covariance; falls back to the default ridge
    /// and then to the diagonal. The flag reports whether a fallback was used.
    pub fn factor(&self) -> Result<(CholeskyFactor, bool)> {
        if let Ok(f) = cholesky(&self.regularized_cov()) {
            return Ok((f, false));
        }
        let eps = default_ridge(&self.cov).max(self.ridge);
        if let Ok(f) = cholesky(&ridge_regularize(&self.cov, eps)?) {
            return Ok((f, true));
        }
        let diag: Vec<f64> = self.cov.diag().iter().map(|v| v.max(0.0) + eps).collect();
        Ok((cholesky(&Matrix::from_diag(&diag))?, true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    /// Penalized log-likelihood before each M-step; the last entry belongs to
    /// the returned parameters.
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    KMeansPlusPlus,
    RandomPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RidgePolicy {
    /// `1e-6 · trace(Σ)/d` of the class covariance, floor `1e-9`.
    ScaleAware,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub ridge: RidgePolicy,
    pub init: Init,
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 200,
            tol: 1e-6,
            ridge: RidgePolicy::ScaleAware,
            init: Init::KMeansPlusPlus,
            restarts: 3,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be > 0"));
        }
        if self.restarts < 1 {
            return Err(invalid("restarts must be >= 1"));
        }
        if let RidgePolicy::Fixed(e) = self.ridge {
            if !(e >= 0.0) {
                return Err(invalid("ridge must be >= 0"));
            }
        }
        Ok(())
    }
}

/// `max(1, floor(N_c / N_K))`
pub fn component_count(n_c: usize, n_k: usize) -> Result<usize> {
    if n_k == 0 {
        return Err(invalid("smallest class count must be >= 1"));
    }
    Ok((n_c / n_k).max(1))
}

struct Workspace {
    factors: Vec<CholeskyFactor>,
    log_weights: Vec<f64>,
    fallback: bool,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn from_components(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(RcsError::EmptyInput("mixture without components".into()));
        }
        let d = components[0].mean.len();
        if components.iter().any(|c| c.mean.len() != d || c.cov.rows() != d || c.cov.cols() != d) {
            return Err(shape("component dimensions differ"));
        }
        Ok(GmmModel { components, loglik_trace: Vec::new(), warnings: Vec::new() })
    }

    fn workspace(&self) -> Result<Workspace> {
        let mut fallback = false;
        let mut factors = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let (f, fb) = c.factor()?;
            fallback |= fb;
            factors.push(f);
        }
        let log_weights = self.components.iter().map(|c| c.weight.ln()).collect();
        Ok(Workspace { factors, log_weights, fallback })
    }

    /// Per-row component log joint densities `log α_i + log f_i(x)`.
    fn log_joint(&self, ws: &Workspace, x: &[f64], out: &mut [f64]) {
        for (i, c) in self.components.iter().enumerate() {
            out[i] = if ws.log_weights[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                ws.log_weights[i] + ws.factors[i].log_density(x, &c.mean)
            };
        }
    }

    /// Index of the most responsible component for `x`.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let ws = self.workspace()?;
        let mut buf = vec![0.0; self.components.len()];
        self.log_joint(&ws, x, &mut buf);
        Ok(argmax(&buf))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `Σ_j log Σ_i α_i f_i(x_j)`
pub fn gmm_loglik(m: &GmmModel, data: &[Vector]) -> Result<f64> {
    let d = m.dim();
    if data.iter().any(|x| x.len() != d) {
        return Err(shape("data and model dimensions differ"));
    }
    if data.is_empty() {
        return Ok(0.0);
    }
    let ws = m.workspace()?;
    let mut buf = vec![0.0; m.components.len()];
    Ok(data
        .iter()
        .map(|x| {
            m.log_joint(&ws, x, &mut buf);
            log_sum_exp(&buf)
        })
        .sum())
}

/// `n` draws from component `j`.
pub fn sample_component<R: Rng + ?Sized>(
    m: &GmmModel,
    j: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    let c = m
        .components
        .get(j)
        .ok_or_else(|| invalid(format!("component {j} out of range ({})", m.components.len())))?;
    let (f, _) = c.factor()?;
    sample_gaussian(&c.mean, &f, n, rng)
}

/// Fit `xi` components by EM, keeping the best of `cfg.restarts` runs.
pub fn fit_gmm<R: Rng + ?Sized>(data: &[Vector], xi: usize, cfg: &EmConfig, rng: &mut R) -> Result<GmmModel> {
    cfg.validate()?;
    if xi < 1 {
        return Err(invalid("component count must be >= 1"));
    }
    if data.len() < xi {
        return Err(RcsError::InsufficientSamples(format!(
            "{} rows cannot support {xi} components",
            data.len()
        )));
    }
    let d = data[0].len();
    if data.iter().any(|x| x.len() != d) {
        return Err(shape("rows have different dimensions"));
    }

    let n = data.len() as f64;
    let mean = mean_vector(data)?;
    let global_cov = ml_covariance(data, &vec![1.0; data.len()], &mean);
    let base = match cfg.ridge {
        RidgePolicy::ScaleAware => default_ridge(&global_cov),
        RidgePolicy::Fixed(e) => e,
    };
    // prior strength: ridge equals `base` for a component holding N/xi rows
    let strength = base * n / xi as f64;

    let mut best: Option<GmmModel> = None;
    for _ in 0..cfg.restarts {
        let model = fit_once(data, xi, cfg, strength, &global_cov, rng)?;
        let better = match &best {
            None => true,
            Some(b) => model.loglik_trace.last() > b.loglik_trace.last(),
        };
        if better {
            best = Some(model);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn ml_covariance(data: &[Vector], resp: &[f64], mean: &[f64]) -> Matrix {
    let d = mean.len();
    let mut cov = Matrix::zeros(d, d);
    let mut total = 0.0;
    let mut diff = vec![0.0; d];
    for (x, &r) in data.iter().zip(resp) {
        if r == 0.0 {
            continue;
        }
        total += r;
        for (t, (a, b)) in diff.iter_mut().zip(x.iter().zip(mean)) {
            *t = a - b;
        }
        for i in 0..d {
            let ri = r * diff[i];
            for j in i..d {
                cov[(i, j)] += ri * diff[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = if total > 0.0 { cov[(i, j)] / total } else { 0.0 };
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

fn init_centers<R: Rng + ?Sized>(data: &[Vector], xi: usize, init: Init, rng: &mut R) -> Vec<Vector> {
    match init {
        Init::RandomPoints => rand::seq::index::sample(rng, data.len(), xi)
            .into_iter()
            .map(|i| data[i].clone())
            .collect(),
        Init::KMeansPlusPlus => {
            let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
            let mut d2: Vec<f64> = data.iter().map(|x| squared_distance(x, &centers[0])).collect();
            while centers.len() < xi {
                let total: f64 = d2.iter().sum();
                let pick = if total > 0.0 {
                    let mut u = rng.random::<f64>() * total;
                    let mut chosen = data.len() - 1;
                    for (i, &w) in d2.iter().enumerate() {
                        if u < w {
                            chosen = i;
                            break;
                        }
                        u -= w;
                    }
                    chosen
                } else {
                    rng.random_range(0..data.len())
                };
                let c = data[pick].clone();
                for (dist, x) in d2.iter_mut().zip(data) {
                    *dist = dist.min(squared_distance(x, &c));
                }
                centers.push(c);
            }
            lloyd(data, &mut centers, 10);
            centers
        }
    }
}

fn nearest(x: &[f64], centers: &[Vector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn lloyd(data: &[Vector], centers: &mut [Vector], iters: usize) {
    let d = data[0].len();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for x in data {
            let k = nearest(x, centers);
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut moved = false;
        for (k, c) in centers.iter_mut().enumerate() {
            if counts[k] == 0 {
                continue;
            }
            let new: Vector = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            moved |= new != *c;
            *c = new;
        }
        if !moved {
            break;
        }
    }
}

/// Penalty `-(c/2) Σ_k tr(Σ_k⁻¹)` over the regularized covariances.
fn penalty(strength: f64, factors: &[CholeskyFactor], alive: &[bool]) -> f64 {
    if strength == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (f, &a) in factors.iter().zip(alive) {
        if !a {
            continue;
        }
        let d = f.dim();
        let mut e = vec![0.0; d];
        for i in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[i] = 1.0;
            let y = f.solve_lower(&e);
            total += dot(&y, &y);
        }
    }
    -0.5 * strength * total
}

fn fit_once<R: Rng + ?Sized>(
    data: &[Vector],
    xi: usize,
    cfg: &EmConfig,
    strength: f64,
    global_cov: &Matrix,
    rng: &mut R,
) -> Result<GmmModel> {
    let n = data.len();
    let centers = init_centers(data, xi, cfg.init, rng);

    // hard assignment to the initial centers, then one M-step
    let mut resp = vec![vec![0.0; xi]; n];
    for (j, x) in data.iter().enumerate() {
        resp[j][nearest(x, &centers)] = 1.0;
    }
    let mut components: Vec<GmmComponent> = (0..xi)
        .map(|k| GmmComponent {
            weight: 1.0 / xi as f64,
            mean: centers[k].clone(),
            cov: global_cov.clone(),
            ridge: strength * xi as f64 / n as f64,
            hard_count: 0,
        })
        .collect();
    m_step(data, &resp, &mut components, strength, true);

    let mut model = GmmModel { components, loglik_trace: Vec::new(), warnings: Vec::new() };
    let mut buf = vec![0.0; xi];
    let mut warned = false;
    for iter in 0..cfg.max_iters {
        let ws = model.workspace()?;
        if ws.fallback && !warned {
            model.warnings.push("covariance factorization fell back to a diagonal/extra ridge".into());
            warned = true;
        }
        let alive: Vec<bool> = model.components.iter().map(|c| c.weight > 0.0).collect();
        let mut ll = 0.0;
        for (j, x) in data.iter().enumerate() {
            model.log_joint(&ws, x, &mut buf);
            let lse = log_sum_exp(&buf);
            ll += lse;
            for (r, &lp) in resp[j].iter_mut().zip(&buf) {
                *r = (lp - lse).exp();
            }
        }
        let objective = ll + penalty(strength, &ws.factors, &alive);
        let prev = model.loglik_trace.last().copied();
        model.loglik_trace.push(objective);
        if let Some(p) = prev {
            if (objective - p).abs() <= cfg.tol * p.abs().max(1e-300) {
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            break;
        }
        m_step(data, &resp, &mut model.components, strength, false);
    }

    // responsibilities in `resp` belong to the final parameters
    let mut counts = vec![0usize; xi];
    for r in &resp {
        counts[argmax(r)] += 1;
    }
    for (c, &h) in model.components.iter_mut().zip(&counts) {
        c.hard_count = h;
    }
    if counts.contains(&0) {
        model
            .warnings
            .push("some components own no rows under hard assignment; their size is floored at 1".into());
    }
    debug_assert_eq!(counts.iter().sum::<usize>(), n);
    Ok(model)
}

const DEAD_MASS: f64 = 1e-8;

fn m_step(data: &[Vector], resp: &[Vec<f64>], comps: &mut [GmmComponent], strength: f64, init: bool) {
    let n = data.len() as f64;
    let xi = comps.len();
    let mut masses = vec![0.0; xi];
    for r in resp {
        for (m, &v) in masses.iter_mut().zip(r) {
            *m += v;
        }
    }
    let total: f64 = if init {
        masses.iter().map(|&m| m.max(1.0)).sum()
    } else {
        n
    };
    for (k, c) in comps.iter_mut().enumerate() {
        let nk = masses[k];
        if nk < DEAD_MASS {
            // frozen: parameters stay, only the weight follows the mass
            c.weight = if init { 1.0 / total } else { nk / n };
            continue;
        }
        let col: Vec<f64> = resp.iter().map(|r| r[k]).collect();
        let mut mean = vec![0.0; data[0].len()];
        for (x, &r) in data.iter().zip(&col) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += r * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        c.cov = ml_covariance(data, &col, &mean);
        c.mean = mean;
        c.ridge = strength / nk;
        c.weight = if init { nk.max(1.0) / total } else { nk / n };
    }
    if !init {
        // renormalize away accumulated rounding
        let s: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= s);
    }
}

/// Weights, means, covariances and sizes for external inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub weights: Vec<f64>,
    pub means: Vec<Vector>,
    pub covariances: Vec<Vec<Vector>>,
    pub sizes: Vec<usize>,
}

impl From<&GmmModel> for GmmSummary {
    fn from(m: &GmmModel) -> Self {
        GmmSummary {
            weights: m.weights(),
            means: m.components.iter().map(|c| c.mean.clone()).collect(),
            covariances: m.components.iter().map(|c| c.cov.to_rows()).collect(),
            sizes: m.components.iter().map(|c| c.hard_count).collect(),
        }
    }
}
