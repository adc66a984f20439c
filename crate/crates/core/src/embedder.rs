//! Autoencoder with a latent classifier, trained jointly on reconstruction,
//! classifier-guidance and supervised-contrastive losses.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{invalid, shape, RcsError, Result};
use crate::linalg::Vector;
use crate::nn::{
    adam_step, finite_diff_gradcheck_kinks, mse_loss_grad, softmax_cross_entropy_grad, supcon_loss_grad, Activation,
    AdamState, GradcheckOptions, GradcheckReport, LossSpec, Mlp,
};
use crate::rng::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub loss: LossSpec,
}

impl AutoencoderConfig {
    /// Defaults: latent `min(d, 32)`, one hidden layer of 128 in the encoder
    /// and decoder, four hidden layers in the latent classifier.
    pub fn for_input(d: usize, temperature: f64) -> Self {
        AutoencoderConfig {
            latent_dim: d.min(32),
            temperature,
            epochs: 200,
            lr: 1e-4,
            batch_size: 64,
            encoder_hidden: vec![128],
            decoder_hidden: vec![128],
            classifier_hidden: vec![128, 64, 32, 16],
            loss: LossSpec::full(temperature),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(invalid("latent dimension must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if !(self.lr >= 0.0) {
            return Err(invalid(format!("learning rate must be nonnegative, got {}", self.lr)));
        }
        self.loss.validate()
    }
}

/// Per-epoch mean of each loss term over mini-batches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub guidance: f64,
    pub contrastive: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderBundle {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_classifier: Mlp,
    pub latent_dim: usize,
    pub temperature: f64,
    pub loss_trace: Vec<LossTerms>,
}

fn chain(first: usize, hidden: &[usize], last: usize) -> Vec<usize> {
    std::iter::once(first).chain(hidden.iter().copied()).chain(std::iter::once(last)).collect()
}

impl AutoencoderBundle {
    pub fn init(input_dim: usize, n_classes: usize, cfg: &AutoencoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = Seed::new(seed);
        let l = cfg.latent_dim;
        Self::from_parts(
            Mlp::init(&chain(input_dim, &cfg.encoder_hidden, l), Activation::Identity, root.child("encoder").value())?,
            Mlp::init(&chain(l, &cfg.decoder_hidden, input_dim), Activation::Identity, root.child("decoder").value())?,
            Mlp::init(
                &chain(l, &cfg.classifier_hidden, n_classes),
                Activation::Softmax,
                root.child("latent-classifier").value(),
            )?,
            cfg.temperature,
        )
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, latent_classifier: Mlp, temperature: f64) -> Result<Self> {
        let l = encoder.output_dim();
        if decoder.input_dim() != l || latent_classifier.input_dim() != l {
            return Err(shape("decoder and latent classifier must read the encoder output"));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(shape("decoder must reconstruct the encoder input dimension"));
        }
        Ok(AutoencoderBundle { encoder, decoder, latent_classifier, latent_dim: l, temperature, loss_trace: Vec::new() })
    }

    /// Copy with jittered biases in all three networks, for gradient checks.
    pub fn with_random_biases(&self, seed: u64, scale: f64) -> Self {
        let root = Seed::new(seed);
        AutoencoderBundle {
            encoder: self.encoder.with_random_biases(root.child("encoder").value(), scale),
            decoder: self.decoder.with_random_biases(root.child("decoder").value(), scale),
            latent_classifier: self.latent_classifier.with_random_biases(root.child("latent-classifier").value(), scale),
            ..self.clone()
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn to_flat(&self) -> Vector {
        [self.encoder.to_flat(), self.decoder.to_flat(), self.latent_classifier.to_flat()].concat()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let (ne, nd) = (self.encoder.n_params(), self.decoder.n_params());
        if flat.len() != ne + nd + self.latent_classifier.n_params() {
            return Err(shape("flat parameter vector does not match the bundle"));
        }
        Ok(AutoencoderBundle {
            encoder: self.encoder.with_flat(&flat[..ne])?,
            decoder: self.decoder.with_flat(&flat[ne..ne + nd])?,
            latent_classifier: self.latent_classifier.with_flat(&flat[ne + nd..])?,
            ..self.clone()
        })
    }

    /// Active loss terms on a batch and the gradient w.r.t. [`Self::to_flat`].
    pub fn loss_and_grad(&self, xs: &[Vector], ys: &[usize], spec: &LossSpec) -> Result<(LossTerms, Vector)> {
        spec.validate()?;
        let enc = self.encoder.forward_batch(xs)?;
        let z = enc.output();
        let mut terms = LossTerms::default();
        let mut gz = vec![vec![0.0; self.latent_dim]; z.len()];
        let add = |acc: &mut Vec<Vector>, g: &[Vector]| {
            for (a, b) in acc.iter_mut().zip(g) {
                a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
            }
        };
        let mut g_dec = vec![0.0; self.decoder.n_params()];
        let mut g_cls = vec![0.0; self.latent_classifier.n_params()];
        if spec.reconstruction {
            let dec = self.decoder.forward_batch(z)?;
            let (loss, g) = mse_loss_grad(dec.output(), xs)?;
            let grads = self.decoder.backward(&dec, &g)?;
            terms.reconstruction = loss;
            g_dec = grads.params.to_flat();
            add(&mut gz, &grads.inputs);
        }
        if spec.guidance {
            let cls = self.latent_classifier.forward_batch(z)?;
            let (loss, g) = softmax_cross_entropy_grad(cls.output(), ys)?;
            let grads = self.latent_classifier.backward_logits(&cls, &g)?;
            terms.guidance = loss;
            g_cls = grads.params.to_flat();
            add(&mut gz, &grads.inputs);
        }
        if spec.contrastive {
            let (loss, g) = supcon_loss_grad(z, ys, spec.temperature)?;
            terms.contrastive = loss;
            add(&mut gz, &g);
        }
        terms.total = terms.reconstruction + terms.guidance + terms.contrastive;
        let g_enc = self.encoder.backward(&enc, &gz)?.params.to_flat();
        Ok((terms, [g_enc, g_dec, g_cls].concat()))
    }

    /// On/off state of every ReLU unit in the networks `spec` exercises.
    pub fn relu_pattern(&self, xs: &[Vector], spec: &LossSpec) -> Result<Vec<bool>> {
        let mut out = self.encoder.relu_pattern(xs)?;
        let z = xs.iter().map(|x| self.encoder.output(x)).collect::<Result<Vec<_>>>()?;
        if spec.reconstruction {
            out.extend(self.decoder.relu_pattern(&z)?);
        }
        if spec.guidance {
            out.extend(self.latent_classifier.relu_pattern(&z)?);
        }
        Ok(out)
    }

    pub fn loss(&self, xs: &[Vector], ys: &[usize], spec: &LossSpec) -> Result<LossTerms> {
        Ok(self.loss_and_grad(xs, ys, spec)?.0)
    }
}

/// Mini-batches of row indices. With `stratified`, each class is shuffled and
/// dealt round-robin so every batch sees a proportional label mix.
fn batches(ds: &LabeledDataset, batch_size: usize, stratified: bool, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let n = ds.len();
    let n_batches = n.div_ceil(batch_size);
    if !stratified {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        return order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &y) in ds.labels().iter().enumerate() {
        per_class[y].push(i);
    }
    let mut out = vec![Vec::with_capacity(batch_size); n_batches];
    let mut slot = 0;
    for rows in &mut per_class {
        rows.shuffle(rng);
        for &i in rows.iter() {
            out[slot % n_batches].push(i);
            slot += 1;
        }
    }
    out.shuffle(rng);
    out
}

/// Joint Adam training of encoder, decoder and latent classifier.
pub fn train_autoencoder(ds: &LabeledDataset, cfg: &AutoencoderConfig, seed: u64) -> Result<AutoencoderBundle> {
    if ds.is_empty() {
        return Err(RcsError::EmptyInput("autoencoder training set is empty".into()));
    }
    let root = Seed::new(seed);
    let mut bundle = AutoencoderBundle::init(ds.dim(), ds.n_classes(), cfg, root.child("init").value())?;
    let mut flat = bundle.to_flat();
    let mut state = AdamState::new(flat.len());
    let mut rng = root.child("batches").rng();
    for _ in 0..cfg.epochs {
        let mut sum = LossTerms::default();
        let plan = batches(ds, cfg.batch_size, cfg.loss.contrastive, &mut rng);
        for idx in &plan {
            let xs: Vec<Vector> = idx.iter().map(|&i| ds.features()[i].clone()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
            let (terms, grad) = bundle.loss_and_grad(&xs, &ys, &cfg.loss)?;
            sum.reconstruction += terms.reconstruction;
            sum.guidance += terms.guidance;
            sum.contrastive += terms.contrastive;
            let (next, st) = adam_step(&flat, &grad, &state, cfg.lr)?;
            flat = next;
            state = st;
            bundle = bundle.with_flat(&flat)?;
        }
        let nb = plan.len() as f64;
        let mut epoch = LossTerms {
            reconstruction: sum.reconstruction / nb,
            guidance: sum.guidance / nb,
            contrastive: sum.contrastive / nb,
            total: 0.0,
        };
        epoch.total = epoch.reconstruction + epoch.guidance + epoch.contrastive;
        bundle.loss_trace.push(epoch);
    }
    Ok(bundle)
}

/// Latent features for every row; labels and order are kept.
pub fn encode(b: &AutoencoderBundle, ds: &LabeledDataset) -> Result<LabeledDataset> {
    if !ds.is_empty() && ds.dim() != b.input_dim() {
        return Err(shape(format!("dataset dimension {} vs encoder input {}", ds.dim(), b.input_dim())));
    }
    let z = ds.features().iter().map(|x| b.encoder.output(x)).collect::<Result<Vec<_>>>()?;
    ds.with_features(z)
}

pub fn decode(b: &AutoencoderBundle, latents: &[Vector]) -> Result<Vec<Vector>> {
    latents.iter().map(|z| b.decoder.output(z)).collect()
}

/// Finite-difference check of [`AutoencoderBundle::loss_and_grad`].
pub fn gradcheck_bundle(
    b: &AutoencoderBundle,
    xs: &[Vector],
    ys: &[usize],
    spec: &LossSpec,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    let (_, analytic) = b.loss_and_grad(xs, ys, spec)?;
    finite_diff_gradcheck_kinks(
        &b.to_flat(),
        &analytic,
        |p| Ok(b.with_flat(p)?.loss(xs, ys, spec)?.total),
        |p| b.with_flat(p)?.relu_pattern(xs, spec),
        opts,
    )
}
