//! Objective, backpropagation, Adam, and the finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{kl_unchecked, Dense, VaeConfig, VaeModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const FD_STEP: f64 = 1e-5;

// ChaCha stream ids; stream 0 is reserved for weight initialization.
const TRAIN_STREAM: u64 = 1;
const GRAD_CHECK_STREAM: u64 = 2;

/// Standardized inputs with their raw targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                what: "batch inputs/targets",
                left: inputs.len(),
                right: targets.len(),
            });
        }
        Ok(Self { inputs, targets })
    }

    /// Features and targets of a labeled dataset (assumed already standardized).
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let targets = d.targets().ok_or(Error::MissingErrors)?;
        let inputs = d.observations().iter().map(|o| o.features.clone()).collect();
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// `regression + kl_weight * kl`
    pub total: f64,
    /// Mean squared error in raw target units.
    pub regression: f64,
    /// Mean KL divergence per row.
    pub kl: f64,
}

/// Per-epoch losses, averaged over the rows seen in that epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub total: Vec<f64>,
    pub regression: Vec<f64>,
    pub kl: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    fn push(&mut self, parts: LossParts) {
        self.total.push(parts.total);
        self.regression.push(parts.regression);
        self.kl.push(parts.kl);
    }
}

/// Gradient of the total loss, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(m: &VaeModel) -> Self {
        Self {
            layers: m.layers().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g = 0.0);
            l.bias.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Gradient entry at a flat parameter index (see [`flat_param`]).
    pub fn get(&self, flat: usize) -> f64 {
        *flat_param(self.layers.iter(), flat)
    }
}

/// Flat indexing over layers: each layer contributes its weights then its bias.
fn flat_param<'a>(mut layers: impl Iterator<Item = &'a Dense>, mut flat: usize) -> &'a f64 {
    loop {
        let l = layers.next().expect("flat parameter index out of range");
        if flat < l.weights.len() {
            return &l.weights[flat];
        }
        flat -= l.weights.len();
        if flat < l.bias.len() {
            return &l.bias[flat];
        }
        flat -= l.bias.len();
    }
}

fn flat_param_mut<'a>(
    mut layers: impl Iterator<Item = &'a mut Dense>,
    mut flat: usize,
) -> &'a mut f64 {
    loop {
        let l = layers.next().expect("flat parameter index out of range");
        if flat < l.weights.len() {
            return &mut l.weights[flat];
        }
        flat -= l.weights.len();
        if flat < l.bias.len() {
            return &mut l.bias[flat];
        }
        flat -= l.bias.len();
    }
}

/// Activations kept from the forward pass of one row.
struct Trace {
    /// Input followed by every encoder hidden output.
    enc: Vec<Vec<f64>>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    /// Latent sample followed by every decoder hidden output.
    dec: Vec<Vec<f64>>,
    yhat: f64,
}

fn forward_trace(m: &VaeModel, x: &[f64], noise: &[f64]) -> Trace {
    let act = m.config.activation;
    let mut enc = Vec::with_capacity(m.encoder.len() + 1);
    enc.push(x.to_vec());
    for layer in &m.encoder {
        let mut out = Vec::new();
        layer.forward(enc.last().expect("non-empty"), &mut out);
        out.iter_mut().for_each(|v| *v = act.apply(*v));
        enc.push(out);
    }
    let top = enc.last().expect("non-empty");
    let mut mu = Vec::new();
    let mut logvar = Vec::new();
    m.mu_head.forward(top, &mut mu);
    m.logvar_head.forward(top, &mut logvar);

    let z: Vec<f64> = mu
        .iter()
        .zip(&logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect();
    let mut dec = Vec::with_capacity(m.decoder.len() + 1);
    dec.push(z);
    for layer in &m.decoder {
        let mut out = Vec::new();
        layer.forward(dec.last().expect("non-empty"), &mut out);
        out.iter_mut().for_each(|v| *v = act.apply(*v));
        dec.push(out);
    }
    let mut out = Vec::new();
    m.output.forward(dec.last().expect("non-empty"), &mut out);
    Trace {
        enc,
        mu,
        logvar,
        dec,
        yhat: m.target_shift + m.target_scale * out[0],
    }
}

/// Accumulates `d_out ⊗ input` into `grad` and returns `Wᵀ d_out`.
fn backprop_dense(layer: &Dense, grad: &mut Dense, input: &[f64], d_out: &[f64]) -> Vec<f64> {
    let mut d_in = vec![0.0; layer.in_dim];
    for (r, &d) in d_out.iter().enumerate() {
        grad.bias[r] += d;
        let row = r * layer.in_dim;
        let w = &layer.weights[row..row + layer.in_dim];
        let g = &mut grad.weights[row..row + layer.in_dim];
        for c in 0..layer.in_dim {
            g[c] += d * input[c];
            d_in[c] += w[c] * d;
        }
    }
    d_in
}

/// One pass over `rows`; fills `grads` (when given) with the gradient of the
/// batch-mean objective.
fn run_batch<'a>(
    m: &VaeModel,
    rows: impl Iterator<Item = (&'a [f64], f64, &'a [f64])>,
    n: usize,
    mut grads: Option<&mut Gradients>,
) -> LossParts {
    let beta = m.config.kl_weight;
    let inv_n = 1.0 / n as f64;
    let act = m.config.activation;
    let n_enc = m.encoder.len();
    let n_dec = m.decoder.len();
    let mut sq_sum = 0.0;
    let mut kl_sum = 0.0;

    for (x, y, noise) in rows {
        let t = forward_trace(m, x, noise);
        let resid = t.yhat - y;
        sq_sum += resid * resid;
        kl_sum += kl_unchecked(&t.mu, &t.logvar);

        let Some(g) = grads.as_deref_mut() else {
            continue;
        };
        // Gradient layout: [encoder..., mu, logvar, decoder..., output]
        let (g_enc, rest) = g.layers.split_at_mut(n_enc);
        let (g_heads, rest) = rest.split_at_mut(2);
        let (g_dec, g_out) = rest.split_at_mut(n_dec);

        let d_out = [2.0 * resid * inv_n * m.target_scale];
        let mut d_h = backprop_dense(&m.output, &mut g_out[0], &t.dec[n_dec], &d_out);
        for k in (0..n_dec).rev() {
            let d_a: Vec<f64> = d_h
                .iter()
                .zip(&t.dec[k + 1])
                .map(|(d, h)| d * act.derivative_from_output(*h))
                .collect();
            d_h = backprop_dense(&m.decoder[k], &mut g_dec[k], &t.dec[k], &d_a);
        }
        let d_z = d_h;

        let kl_scale = beta * inv_n;
        let d_mu: Vec<f64> = d_z
            .iter()
            .zip(&t.mu)
            .map(|(dz, mu)| dz + kl_scale * mu)
            .collect();
        let d_logvar: Vec<f64> = d_z
            .iter()
            .zip(&t.logvar)
            .zip(noise)
            .map(|((dz, lv), eps)| {
                dz * eps * 0.5 * (0.5 * lv).exp() + kl_scale * 0.5 * lv.exp_m1()
            })
            .collect();

        let top = &t.enc[n_enc];
        let (g_mu, g_lv) = g_heads.split_at_mut(1);
        let mut d_h = backprop_dense(&m.mu_head, &mut g_mu[0], top, &d_mu);
        let d_h_lv = backprop_dense(&m.logvar_head, &mut g_lv[0], top, &d_logvar);
        d_h.iter_mut().zip(d_h_lv).for_each(|(a, b)| *a += b);
        for k in (0..n_enc).rev() {
            let d_a: Vec<f64> = d_h
                .iter()
                .zip(&t.enc[k + 1])
                .map(|(d, h)| d * act.derivative_from_output(*h))
                .collect();
            d_h = backprop_dense(&m.encoder[k], &mut g_enc[k], &t.enc[k], &d_a);
        }
    }

    let regression = sq_sum * inv_n;
    let kl = kl_sum * inv_n;
    LossParts {
        total: regression + beta * kl,
        regression,
        kl,
    }
}

fn check_batch(m: &VaeModel, batch: &Batch, noise: &[Vec<f64>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if noise.len() != batch.len() {
        return Err(Error::LengthMismatch {
            what: "noise rows vs batch rows",
            left: noise.len(),
            right: batch.len(),
        });
    }
    if let Some(x) = batch.inputs.iter().find(|x| x.len() != m.input_dim()) {
        return Err(Error::ArityMismatch {
            expected: m.input_dim(),
            found: x.len(),
        });
    }
    if let Some(e) = noise.iter().find(|e| e.len() != m.latent_dim()) {
        return Err(Error::ArityMismatch {
            expected: m.latent_dim(),
            found: e.len(),
        });
    }
    Ok(())
}

fn rows<'a>(
    batch: &'a Batch,
    noise: &'a [Vec<f64>],
) -> impl Iterator<Item = (&'a [f64], f64, &'a [f64])> {
    batch
        .inputs
        .iter()
        .zip(&batch.targets)
        .zip(noise)
        .map(|((x, y), e)| (x.as_slice(), *y, e.as_slice()))
}

/// Objective on `batch` with one standard-normal noise vector per row.
pub fn loss(m: &VaeModel, batch: &Batch, noise: &[Vec<f64>]) -> Result<LossParts> {
    check_batch(m, batch, noise)?;
    Ok(run_batch(m, rows(batch, noise), batch.len(), None))
}

pub fn loss_and_gradients(
    m: &VaeModel,
    batch: &Batch,
    noise: &[Vec<f64>],
) -> Result<(LossParts, Gradients)> {
    check_batch(m, batch, noise)?;
    let mut grads = Gradients::zeros_like(m);
    let parts = run_batch(m, rows(batch, noise), batch.len(), Some(&mut grads));
    Ok((parts, grads))
}

struct Adam {
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    fn update(&mut self, model: &mut VaeModel, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let mut i = 0;
        for (layer, g) in model.layers_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let grad = g.weights.iter().chain(&g.bias);
            for (p, &gr) in params.zip(grad) {
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gr;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gr * gr;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                i += 1;
            }
        }
    }
}

/// Trains `model` on a labeled, standardized dataset with Adam on shuffled
/// mini-batches. The optimizer settings come from `cfg`; its layer shapes must
/// match the model. Bit-reproducible for a given `cfg.seed`.
pub fn fit(mut model: VaeModel, train: &Dataset, cfg: &VaeConfig) -> Result<(VaeModel, TrainHistory)> {
    cfg.validate()?;
    if !cfg.same_architecture(&model.config) {
        return Err(Error::InvalidConfig(
            "training config does not match the model architecture".into(),
        ));
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((model, history));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.arity() != model.input_dim() {
        return Err(Error::ArityMismatch {
            expected: model.input_dim(),
            found: train.arity(),
        });
    }
    let data = Batch::from_dataset(train)?;
    model.config = cfg.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut adam = Adam::new(cfg.learning_rate, model.param_count());
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let latent = model.latent_dim();
    let mut noise: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            noise.clear();
            for _ in chunk {
                noise.push((0..latent).map(|_| StandardNormal.sample(&mut rng)).collect());
            }
            grads.clear();
            let batch_rows = chunk
                .iter()
                .zip(&noise)
                .map(|(&i, e)| (data.inputs[i].as_slice(), data.targets[i], e.as_slice()));
            let parts = run_batch(&model, batch_rows, chunk.len(), Some(&mut grads));
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.update(&mut model, &grads);
            let w = chunk.len() as f64;
            sums.0 += parts.total * w;
            sums.1 += parts.regression * w;
            sums.2 += parts.kl * w;
        }
        let n = data.len() as f64;
        history.push(LossParts {
            total: sums.0 / n,
            regression: sums.1 / n,
            kl: sums.2 / n,
        });
    }
    model.validate()?;
    Ok((model, history))
}

/// Maximum relative error between analytic and central-difference gradients
/// over `probe_count` distinct parameters drawn at random.
pub fn grad_check(m: &VaeModel, batch: &Batch, probe_count: usize) -> Result<f64> {
    grad_check_tampered(m, batch, probe_count, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradient before the
/// comparison; used to confirm the check detects a broken backward pass.
pub fn grad_check_tampered(
    m: &VaeModel,
    batch: &Batch,
    probe_count: usize,
    tamper: impl FnOnce(&mut Gradients),
) -> Result<f64> {
    if probe_count == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(m.config.seed);
    rng.set_stream(GRAD_CHECK_STREAM);
    let noise: Vec<Vec<f64>> = (0..batch.len())
        .map(|_| {
            (0..m.latent_dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect();
    let (_, mut grads) = loss_and_gradients(m, batch, &noise)?;
    tamper(&mut grads);

    let total = m.param_count();
    let probes = rand::seq::index::sample(&mut rng, total, probe_count.min(total));
    let mut probe_model = m.clone();
    let mut worst: f64 = 0.0;
    for flat in probes.iter() {
        let original = *flat_param(m.layers(), flat);
        *flat_param_mut(probe_model.layers_mut(), flat) = original + FD_STEP;
        let plus = loss(&probe_model, batch, &noise)?.total;
        *flat_param_mut(probe_model.layers_mut(), flat) = original - FD_STEP;
        let minus = loss(&probe_model, batch, &noise)?.total;
        *flat_param_mut(probe_model.layers_mut(), flat) = original;

        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = grads.get(flat);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::init_model;

    fn random_batch(cfg: &VaeConfig, rows: usize, seed: u64) -> (Batch, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let inputs = (0..rows).map(|_| draw(cfg.input_dim)).collect();
        let targets = draw(rows);
        let noise = (0..rows).map(|_| draw(cfg.latent_dim)).collect();
        (Batch::new(inputs, targets).unwrap(), noise)
    }

    #[test]
    fn zero_beta_total_is_regression() {
        let cfg = VaeConfig {
            kl_weight: 0.0,
            ..VaeConfig::new(3)
        };
        let m = init_model(&cfg).unwrap();
        let (batch, noise) = random_batch(&cfg, 5, 1);
        let p = loss(&m, &batch, &noise).unwrap();
        assert_eq!(p.total, p.regression);
        assert!(p.kl > 0.0);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let cfg = VaeConfig::new(2);
        let m = VaeModel::zeros(&cfg).unwrap();
        let batch = Batch::new(vec![vec![1.0, 2.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
        let noise = vec![vec![0.3; 8], vec![-1.0; 8]];
        let p = loss(&m, &batch, &noise).unwrap();
        assert_eq!((p.total, p.regression, p.kl), (0.0, 0.0, 0.0));
    }

    #[test]
    fn loss_arithmetic() {
        // Zero network with output shift 2 predicts 2 for target 0; mu = 0 and
        // logvar = 0 give kl = 0, so nudge the mu bias to get kl = 0.5.
        let cfg = VaeConfig {
            kl_weight: 0.1,
            latent_dim: 1,
            ..VaeConfig::new(1)
        };
        let mut m = VaeModel::zeros(&cfg).unwrap();
        m.target_shift = 2.0;
        m.mu_head.bias[0] = 1.0;
        let batch = Batch::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let p = loss(&m, &batch, &[vec![0.0]]).unwrap();
        assert!((p.regression - 4.0).abs() < 1e-12);
        assert!((p.kl - 0.5).abs() < 1e-12);
        assert!((p.total - 4.05).abs() < 1e-12);
    }

    #[test]
    fn loss_rejects_empty_batch() {
        let m = VaeModel::zeros(&VaeConfig::new(2)).unwrap();
        let empty = Batch::new(vec![], vec![]).unwrap();
        assert!(matches!(loss(&m, &empty, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for activation in [super::super::Activation::Tanh, super::super::Activation::Softplus] {
            let cfg = VaeConfig {
                activation,
                encoder_hidden: vec![6, 5],
                latent_dim: 3,
                decoder_hidden: vec![4],
                kl_weight: 0.5,
                seed: 3,
                ..VaeConfig::new(4)
            };
            let m = init_model(&cfg).unwrap();
            let (batch, _) = random_batch(&cfg, 7, 11);
            let err = grad_check(&m, &batch, m.param_count()).unwrap();
            assert!(err < 1e-5, "{activation:?}: {err}");
        }
    }

    #[test]
    fn gradient_check_flags_tampering() {
        let cfg = VaeConfig {
            encoder_hidden: vec![6],
            latent_dim: 2,
            decoder_hidden: vec![5],
            seed: 5,
            ..VaeConfig::new(3)
        };
        let m = init_model(&cfg).unwrap();
        let (batch, _) = random_batch(&cfg, 6, 2);
        let err = grad_check_tampered(&m, &batch, m.param_count(), |g| {
            g.layers[0].weights.iter_mut().for_each(|w| *w *= 2.0);
        })
        .unwrap();
        assert!(err > 0.1, "{err}");
        assert_eq!(grad_check(&m, &batch, 0).unwrap(), 0.0);
    }

    #[test]
    fn zero_epochs_is_noop() {
        let cfg = VaeConfig {
            epochs: 0,
            ..VaeConfig::new(2)
        };
        let m = init_model(&cfg).unwrap();
        let empty = Dataset::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        let (out, hist) = fit(m.clone(), &empty, &cfg).unwrap();
        assert_eq!(out, m);
        assert!(hist.is_empty());
    }
}
