//! Feed-forward networks: forward and backward passes, the three training
//! losses, Adam, finite-difference gradient checks and a softmax classifier.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{invalid, shape, RcsError, Result};
use crate::linalg::{dot, Matrix, Vector};
use crate::rng::Seed;

/// Probabilities below this are clipped inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Pull a gradient w.r.t. the activation output `a` back to the pre-activation.
    fn backprop(self, a: &[f64], g: &[f64]) -> Vector {
        match self {
            Activation::Identity => g.to_vec(),
            Activation::Relu => a.iter().zip(g).map(|(&a, &g)| if a > 0.0 { g } else { 0.0 }).collect(),
            Activation::Softmax => {
                let pg = dot(a, g);
                a.iter().zip(g).map(|(&p, &g)| p * (g - pg)).collect()
            }
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

pub fn softmax(z: &[f64]) -> Vector {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Affine map `W x + b` followed by an activation. `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn pre_activation(&self, x: &[f64]) -> Vector {
        let w = self.weight.as_slice();
        let n_in = self.in_dim();
        self.bias
            .iter()
            .enumerate()
            .map(|(o, b)| b + dot(&w[o * n_in..(o + 1) * n_in], x))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations recorded by a batched forward pass; `acts[0]` holds the inputs.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<Vector>>,
}

impl Trace {
    pub fn inputs(&self) -> &[Vector] {
        &self.acts[0]
    }

    pub fn output(&self) -> &[Vector] {
        &self.acts[self.acts.len() - 1]
    }
}

/// Parameter gradients plus the gradient w.r.t. each input row.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Mlp,
    pub inputs: Vec<Vector>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, ReLU hidden layers and `head` on the last layer.
    pub fn init(dims: &[usize], head: Activation, seed: u64) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(invalid("a network needs at least two layer dimensions"));
        }
        if dims.contains(&0) {
            return Err(invalid("layer dimensions must be positive"));
        }
        let mut rng = Seed::new(seed).child("mlp-init").rng();
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized above"),
                    bias: vec![0.0; fan_out],
                    activation: if l + 1 == n { head } else { Activation::Relu },
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(invalid("a network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(shape(format!("layer {i}: bias length {} vs {} outputs", l.bias.len(), l.out_dim())));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(shape(format!("layer {i} expects {} inputs, previous layer emits {}", l.in_dim(), layers[i - 1].out_dim())));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Layer::out_dim)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, each layer as row-major weights then bias.
    pub fn to_flat(&self) -> Vector {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Same architecture with parameters taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Mlp> {
        if flat.len() != self.n_params() {
            return Err(shape(format!("{} parameters for a network of {}", flat.len(), self.n_params())));
        }
        let mut out = self.clone();
        let mut at = 0;
        for l in &mut out.layers {
            let w = l.weight.as_mut_slice();
            w.copy_from_slice(&flat[at..at + w.len()]);
            at += w.len();
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(out)
    }

    /// Copy with biases drawn from `uniform(-scale, scale)`. Zero biases put
    /// ReLU units exactly on their kink whenever a whole layer is inactive,
    /// which finite differences cannot resolve.
    pub fn with_random_biases(&self, seed: u64, scale: f64) -> Mlp {
        let mut rng = Seed::new(seed).child("bias-jitter").rng();
        let mut out = self.clone();
        for l in &mut out.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-scale..=scale));
        }
        out
    }

    /// On/off state of every ReLU unit over a batch.
    pub fn relu_pattern(&self, xs: &[Vector]) -> Result<Vec<bool>> {
        let mut out = Vec::new();
        for x in xs {
            for (l, a) in self.layers.iter().zip(self.forward(x)?) {
                if l.activation == Activation::Relu {
                    out.extend(a.iter().map(|&v| v > 0.0));
                }
            }
        }
        Ok(out)
    }

    fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Activations of every layer for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vector>> {
        if x.len() != self.input_dim() {
            return Err(shape(format!("input of dimension {} for a network expecting {}", x.len(), self.input_dim())));
        }
        let mut acts: Vec<Vector> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let prev = acts.last().map_or(x, |a| a.as_slice());
            let mut z = l.pre_activation(prev);
            l.activation.apply(&mut z);
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn output(&self, x: &[f64]) -> Result<Vector> {
        Ok(self.forward(x)?.pop().expect("at least one layer"))
    }

    pub fn forward_batch(&self, xs: &[Vector]) -> Result<Trace> {
        let mut acts = vec![xs.to_vec()];
        acts.extend((0..self.layers.len()).map(|_| Vec::with_capacity(xs.len())));
        for x in xs {
            for (l, a) in self.forward(x)?.into_iter().enumerate() {
                acts[l + 1].push(a);
            }
        }
        Ok(Trace { acts })
    }

    /// Backpropagate `grad_out`, the loss gradient w.r.t. the network output.
    pub fn backward(&self, trace: &Trace, grad_out: &[Vector]) -> Result<Gradients> {
        let last = self.layers.len() - 1;
        let act = self.layers[last].activation;
        self.check_grad_shape(trace, grad_out)?;
        let deltas = trace.output().iter().zip(grad_out).map(|(a, g)| act.backprop(a, g)).collect();
        Ok(self.backward_from(trace, deltas))
    }

    /// Backpropagate a gradient w.r.t. the last layer's pre-activation (logits).
    pub fn backward_logits(&self, trace: &Trace, grad_logits: &[Vector]) -> Result<Gradients> {
        self.check_grad_shape(trace, grad_logits)?;
        Ok(self.backward_from(trace, grad_logits.to_vec()))
    }

    fn check_grad_shape(&self, trace: &Trace, g: &[Vector]) -> Result<()> {
        if trace.acts.len() != self.layers.len() + 1 || g.len() != trace.output().len() {
            return Err(shape("gradient batch does not match the forward trace"));
        }
        if g.iter().any(|r| r.len() != self.output_dim()) {
            return Err(shape("gradient rows do not match the output dimension"));
        }
        Ok(())
    }

    fn backward_from(&self, trace: &Trace, mut deltas: Vec<Vector>) -> Gradients {
        let mut grads = self.zeros_like();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let n_in = layer.in_dim();
            let Layer { weight: gw, bias: gb, .. } = &mut grads.layers[l];
            let gw = gw.as_mut_slice();
            let w = layer.weight.as_slice();
            let mut next = Vec::with_capacity(deltas.len());
            for (delta, a_prev) in deltas.iter().zip(&trace.acts[l]) {
                let mut g_prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += d * a_prev[i];
                        g_prev[i] += d * row[i];
                    }
                }
                next.push(g_prev);
            }
            deltas = if l > 0 {
                let act = self.layers[l - 1].activation;
                next.iter().zip(&trace.acts[l]).map(|(g, a)| act.backprop(a, g)).collect()
            } else {
                next
            };
        }
        Gradients { params: grads, inputs: deltas }
    }
}

fn check_batch(a: &[Vector], b: &[Vector]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape(format!("batches of {} and {} rows", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(RcsError::EmptyInput("empty batch".into()));
    }
    if a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(shape("row dimensions differ"));
    }
    Ok(())
}

/// Mean over all sample coordinates of the squared difference.
pub fn mse_loss(pred: &[Vector], target: &[Vector]) -> Result<f64> {
    Ok(mse_loss_grad(pred, target)?.0)
}

/// Loss and gradient w.r.t. `pred`.
pub fn mse_loss_grad(pred: &[Vector], target: &[Vector]) -> Result<(f64, Vec<Vector>)> {
    check_batch(pred, target)?;
    let count = (pred.len() * pred[0].len()) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            p.iter()
                .zip(t)
                .map(|(a, b)| {
                    loss += (a - b) * (a - b);
                    2.0 * (a - b) / count
                })
                .collect()
        })
        .collect();
    Ok((loss / count, grad))
}

fn check_labels(n: usize, k: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(shape(format!("{n} rows but {} labels", labels.len())));
    }
    if n == 0 {
        return Err(RcsError::EmptyInput("empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(invalid(format!("label {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Mean negative log-probability of the true label.
pub fn cross_entropy_loss(probs: &[Vector], labels: &[usize]) -> Result<f64> {
    check_labels(probs.len(), probs.first().map_or(0, Vec::len), labels)?;
    let mut clipped = 0;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            if p[y] < PROB_FLOOR {
                clipped += 1;
            }
            -p[y].max(PROB_FLOOR).ln()
        })
        .sum();
    if clipped > 0 {
        log::warn!("cross-entropy: {clipped} label probabilities clipped at {PROB_FLOOR:e}");
    }
    Ok(total / probs.len() as f64)
}

/// Cross-entropy of softmax outputs and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy_grad(probs: &[Vector], labels: &[usize]) -> Result<(f64, Vec<Vector>)> {
    let loss = cross_entropy_loss(probs, labels)?;
    let n = probs.len() as f64;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            p.iter()
                .enumerate()
                .map(|(c, &v)| (v - if c == y { 1.0 } else { 0.0 }) / n)
                .collect()
        })
        .collect();
    Ok((loss, grad))
}

fn normalize(z: &[f64]) -> (Vector, f64) {
    let norm = dot(z, z).sqrt().max(1e-12);
    (z.iter().map(|v| v / norm).collect(), norm)
}

/// Supervised contrastive loss summed over anchors on L2-normalized latents.
pub fn supcon_loss(latents: &[Vector], labels: &[usize], t: f64) -> Result<f64> {
    Ok(supcon_loss_grad(latents, labels, t)?.0)
}

/// Loss and gradient w.r.t. the unnormalized latents.
pub fn supcon_loss_grad(latents: &[Vector], labels: &[usize], t: f64) -> Result<(f64, Vec<Vector>)> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(invalid(format!("temperature must be positive, got {t}")));
    }
    let n = latents.len();
    if labels.len() != n {
        return Err(shape(format!("{n} latents but {} labels", labels.len())));
    }
    let d = latents.first().map_or(0, Vec::len);
    if latents.iter().any(|z| z.len() != d) {
        return Err(shape("latent rows differ in dimension"));
    }
    let (units, norms): (Vec<Vector>, Vec<f64>) = latents.iter().map(|z| normalize(z)).unzip();
    let mut loss = 0.0;
    let mut g_unit = vec![vec![0.0; d]; n];
    let mut anchors = 0;
    for i in 0..n {
        let positives = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if positives == 0 {
            continue;
        }
        anchors += 1;
        let s: Vec<f64> = (0..n).map(|a| if a == i { f64::NEG_INFINITY } else { dot(&units[i], &units[a]) / t }).collect();
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = s.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + denom.ln();
        let q = positives as f64;
        for a in (0..n).filter(|&a| a != i) {
            let positive = labels[a] == labels[i];
            if positive {
                loss -= (s[a] - lse) / q;
            }
            // dL/ds_ia
            let coef = (s[a] - lse).exp() - if positive { 1.0 / q } else { 0.0 };
            if coef == 0.0 {
                continue;
            }
            for c in 0..d {
                g_unit[i][c] += coef * units[a][c] / t;
                g_unit[a][c] += coef * units[i][c] / t;
            }
        }
    }
    if anchors == 0 {
        log::warn!("supervised contrastive loss: no anchor has a positive pair");
    }
    let grad = g_unit
        .iter()
        .zip(&units)
        .zip(&norms)
        .map(|((g, u), &norm)| {
            let proj = dot(u, g);
            g.iter().zip(u).map(|(gv, uv)| (gv - uv * proj) / norm).collect()
        })
        .collect();
    Ok((loss, grad))
}

/// Which loss terms are active, and the contrastive temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub reconstruction: bool,
    pub guidance: bool,
    pub contrastive: bool,
    pub temperature: f64,
}

impl LossSpec {
    pub fn full(temperature: f64) -> Self {
        LossSpec { reconstruction: true, guidance: true, contrastive: true, temperature }
    }

    pub fn mse_only() -> Self {
        LossSpec { reconstruction: true, guidance: false, contrastive: false, temperature: 1.0 }
    }

    /// All seven non-empty combinations of the three terms.
    pub fn combinations(temperature: f64) -> Vec<LossSpec> {
        (1u8..8)
            .map(|m| LossSpec {
                reconstruction: m & 1 != 0,
                guidance: m & 2 != 0,
                contrastive: m & 4 != 0,
                temperature,
            })
            .collect()
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.reconstruction {
            parts.push("reconstruction");
        }
        if self.guidance {
            parts.push("guidance");
        }
        if self.contrastive {
            parts.push("contrastive");
        }
        parts.join("+")
    }

    pub fn is_mse_only(&self) -> bool {
        self.reconstruction && !self.guidance && !self.contrastive
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reconstruction || self.guidance || self.contrastive) {
            return Err(invalid("at least one loss term must be active"));
        }
        if self.contrastive && !(self.temperature > 0.0) {
            return Err(invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vector,
    pub v: Vector,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &[f64], grads: &[f64], state: &AdamState, lr: f64) -> Result<(Vector, AdamState)> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    let mut next = state.clone();
    next.step += 1;
    let c1 = 1.0 - state.beta1.powi(next.step as i32);
    let c2 = 1.0 - state.beta2.powi(next.step as i32);
    let updated = params
        .iter()
        .zip(grads)
        .enumerate()
        .map(|(i, (&p, &g))| {
            next.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
            next.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = next.m[i] / c1;
            let v_hat = next.v[i] / c2;
            p - lr * m_hat / (v_hat.sqrt() + state.eps)
        })
        .collect();
    Ok((updated, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub eps: f64,
    /// Larger parameter vectors are checked on a seeded random subset of this size.
    pub max_params: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions { eps: 1e-5, max_params: 400, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Parameters whose every probe step moved a ReLU across its kink.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compare `analytic` with central differences of `loss` around `params`.
pub fn finite_diff_gradcheck<F>(params: &[f64], analytic: &[f64], loss: F, opts: GradcheckOptions) -> Result<GradcheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    finite_diff_gradcheck_kinks(params, analytic, loss, |_| Ok(Vec::new()), opts)
}

/// Central differences that avoid ReLU kinks. `pattern` returns the on/off
/// state of every ReLU unit; when a probe `p ± eps` changes it, the step is
/// shrunk tenfold (twice at most) and the parameter is skipped if the
/// kink is still crossed.
pub fn finite_diff_gradcheck_kinks<F, P>(
    params: &[f64],
    analytic: &[f64],
    loss: F,
    pattern: P,
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
    P: Fn(&[f64]) -> Result<Vec<bool>>,
{
    if params.len() != analytic.len() {
        return Err(shape(format!("{} parameters vs {} gradients", params.len(), analytic.len())));
    }
    let mut indices: Vec<usize> = (0..params.len()).collect();
    if indices.len() > opts.max_params {
        indices.shuffle(&mut Seed::new(opts.seed).child("gradcheck").rng());
        indices.truncate(opts.max_params);
        indices.sort_unstable();
    }
    let base = pattern(params)?;
    let mut work = params.to_vec();
    let mut report = GradcheckReport { max_rel_error: 0.0, worst_index: 0, checked: 0, skipped: 0 };
    for &i in &indices {
        let orig = work[i];
        let mut numeric = None;
        for eps in [opts.eps, opts.eps / 10.0, opts.eps / 100.0] {
            work[i] = orig + eps;
            let kink_up = pattern(&work)? != base;
            let up = loss(&work)?;
            work[i] = orig - eps;
            let kink_down = pattern(&work)? != base;
            let down = loss(&work)?;
            work[i] = orig;
            if !(kink_up || kink_down) {
                numeric = Some((up - down) / (2.0 * eps));
                break;
            }
        }
        let Some(numeric) = numeric else {
            report.skipped += 1;
            continue;
        };
        report.checked += 1;
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Downstream softmax classifier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { hidden: vec![64, 32], epochs: 100, lr: 1e-3, batch_size: 64 }
    }
}

/// Mini-batch Adam on mean cross-entropy with seeded shuffling.
pub fn train_classifier(train: &LabeledDataset, cfg: &ClassifierConfig, seed: u64) -> Result<Mlp> {
    if train.is_empty() {
        return Err(RcsError::EmptyInput("classifier training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) {
        return Err(invalid("batch size must be positive and the learning rate nonnegative"));
    }
    let root = Seed::new(seed);
    let dims: Vec<usize> = std::iter::once(train.dim())
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(train.n_classes()))
        .collect();
    let mut net = Mlp::init(&dims, Activation::Softmax, root.child("init").value())?;
    let mut flat = net.to_flat();
    let mut state = AdamState::new(flat.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = root.child("shuffle").rng();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Vector> = chunk.iter().map(|&i| train.features()[i].clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let trace = net.forward_batch(&xs)?;
            let (_, g) = softmax_cross_entropy_grad(trace.output(), &ys)?;
            let grads = net.backward_logits(&trace, &g)?;
            let (next, st) = adam_step(&flat, &grads.params.to_flat(), &state, cfg.lr)?;
            flat = next;
            state = st;
            net = net.with_flat(&flat)?;
        }
    }
    Ok(net)
}

/// Index of the largest output (first on ties).
pub fn predict(net: &Mlp, x: &[f64]) -> Result<usize> {
    let out = net.output(x)?;
    Ok(out
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0)
}

pub fn predict_all(net: &Mlp, xs: &[Vector]) -> Result<Vec<usize>> {
    xs.iter().map(|x| predict(net, x)).collect()
}
