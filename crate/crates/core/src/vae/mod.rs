//! Dense variational autoencoder whose decoder regresses a scalar target.
//!
//! ```text
//! x ─► [dense+act]* ─┬─► mu ──────┐
//!                    └─► logvar ──┴─► z = mu + exp(logvar/2)·ε ─► [dense+act]* ─► dense ─► ŷ
//! ```
//!
//! Inference always decodes the posterior mean, so `predict(x) == decode(encode(x).mu)`
//! and repeated calls are bit-identical. The decoder output passes through a
//! fixed affine map (`target_shift + target_scale · out`) so the network can
//! work at unit scale while predictions stay in raw count units.

mod io;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Scaler;
use crate::error::{Error, Result};

pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{
    fit, grad_check, grad_check_tampered, loss, loss_and_gradients, Batch, Gradients, LossParts,
    TrainHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Softplus => a.max(0.0) + (-a.abs()).exp().ln_1p(),
        }
    }

    /// Derivative expressed through the activation output `h`.
    #[inline]
    pub(crate) fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            // softplus'(a) = sigmoid(a) = 1 - exp(-softplus(a))
            Activation::Softplus => -(-h).exp_m1(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

/// Architecture and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
    /// Weight of the KL term in the training objective.
    pub kl_weight: f64,
    pub learning_rate: f64,
    /// Zero is allowed and leaves the model untouched.
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl VaeConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_hidden: vec![64, 32],
            latent_dim: 8,
            decoder_hidden: vec![32, 64],
            activation: Activation::Tanh,
            kl_weight: 1e-3,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be at least 1");
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return bad("hidden layer widths must be at least 1");
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return bad("kl_weight must be finite and non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }

    /// True when both configs describe the same layer shapes.
    pub fn same_architecture(&self, other: &VaeConfig) -> bool {
        self.input_dim == other.input_dim
            && self.encoder_hidden == other.encoder_hidden
            && self.latent_dim == other.latent_dim
            && self.decoder_hidden == other.decoder_hidden
            && self.activation == other.activation
    }

    /// `(fan_in, fan_out)` of every layer in declaration order:
    /// encoder hidden layers, mu head, logvar head, decoder hidden layers, output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &h in &self.encoder_hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, self.latent_dim));
        shapes.push((prev, self.latent_dim));
        prev = self.latent_dim;
        for &h in &self.decoder_hidden {
            shapes.push((prev, h));
            prev = h;
        }
        shapes.push((prev, 1));
        shapes
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::InvalidArgument(format!(
                "dense {in_dim}->{out_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    fn glorot(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-a..a))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    pub(crate) fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, b)| {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Encoder, decoder, feature scaler and output affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub encoder: Vec<Dense>,
    pub mu_head: Dense,
    pub logvar_head: Dense,
    pub decoder: Vec<Dense>,
    pub output: Dense,
    pub scaler: Scaler,
    pub target_shift: f64,
    pub target_scale: f64,
}

/// Glorot-uniform weights seeded from `cfg.seed`, zero biases, identity scaler
/// and identity output map.
pub fn init_model(cfg: &VaeConfig) -> Result<VaeModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers: Vec<Dense> = cfg
        .layer_shapes()
        .into_iter()
        .map(|(i, o)| Dense::glorot(i, o, &mut rng))
        .collect();
    VaeModel::from_layers(cfg.clone(), &mut layers)
}

impl VaeModel {
    /// Every layer zero; `encode` yields zeros and `decode` yields `target_shift`.
    pub fn zeros(cfg: &VaeConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers: Vec<Dense> = cfg
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Self::from_layers(cfg.clone(), &mut layers)
    }

    /// Assembles a model from layers listed in declaration order (see
    /// [`VaeConfig::layer_shapes`]) and checks the shapes.
    pub fn from_layers(config: VaeConfig, layers: &mut Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let expected = config.layer_shapes();
        if layers.len() != expected.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} layers, got {}",
                expected.len(),
                layers.len()
            )));
        }
        let n_enc = config.encoder_hidden.len();
        let mut drain = layers.drain(..);
        let encoder: Vec<Dense> = drain.by_ref().take(n_enc).collect();
        let mu_head = drain.next().expect("length checked");
        let logvar_head = drain.next().expect("length checked");
        let rest: Vec<Dense> = drain.collect();
        let (decoder, output) = rest.split_at(rest.len() - 1);
        let model = Self {
            scaler: Scaler::identity(config.input_dim),
            encoder,
            mu_head,
            logvar_head,
            decoder: decoder.to_vec(),
            output: output[0].clone(),
            config,
            target_shift: 0.0,
            target_scale: 1.0,
        };
        model.validate()?;
        Ok(model)
    }

    /// Shape chaining and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for (i, (layer, &(fan_in, fan_out))) in
            self.layers().zip(&self.config.layer_shapes()).enumerate()
        {
            if layer.in_dim != fan_in
                || layer.out_dim != fan_out
                || layer.weights.len() != fan_in * fan_out
                || layer.bias.len() != fan_out
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} has shape {}->{}, expected {fan_in}->{fan_out}",
                    layer.in_dim, layer.out_dim
                )));
            }
            if !layer.is_finite() {
                return Err(Error::InvalidArgument(format!("layer {i} has non-finite weights")));
            }
        }
        if self.scaler.arity() != self.config.input_dim {
            return Err(Error::ArityMismatch {
                expected: self.config.input_dim,
                found: self.scaler.arity(),
            });
        }
        if !(self.target_shift.is_finite() && self.target_scale.is_finite() && self.target_scale > 0.0)
        {
            return Err(Error::InvalidArgument("output map must be finite with positive scale".into()));
        }
        Ok(())
    }

    pub fn with_scaler(mut self, scaler: Scaler) -> Result<Self> {
        if scaler.arity() != self.config.input_dim {
            return Err(Error::ArityMismatch {
                expected: self.config.input_dim,
                found: scaler.arity(),
            });
        }
        self.scaler = scaler;
        Ok(self)
    }

    /// Centers the decoder output on the training targets: shift = mean,
    /// scale = population std (floored like feature stds).
    pub fn calibrate_targets(&mut self, targets: &[f64]) -> Result<()> {
        if targets.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        self.target_shift = mean;
        self.target_scale = var.sqrt().max(crate::dataset::STD_FLOOR);
        Ok(())
    }

    /// Layers in declaration order.
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.encoder
            .iter()
            .chain([&self.mu_head, &self.logvar_head])
            .chain(&self.decoder)
            .chain(std::iter::once(&self.output))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.encoder
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.logvar_head])
            .chain(&mut self.decoder)
            .chain(std::iter::once(&mut self.output))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Posterior mean and log-variance for one standardized feature vector.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(x.len(), self.input_dim())?;
        let h = self.encoder_hidden(x);
        let mut mu = Vec::new();
        let mut logvar = Vec::new();
        self.mu_head.forward(&h, &mut mu);
        self.logvar_head.forward(&h, &mut logvar);
        Ok((mu, logvar))
    }

    /// Prediction in raw target units for a latent point.
    pub fn decode(&self, z: &[f64]) -> Result<f64> {
        self.check_len(z.len(), self.latent_dim())?;
        let mut cur = z.to_vec();
        let mut next = Vec::new();
        for layer in &self.decoder {
            layer.forward(&cur, &mut next);
            next.iter_mut().for_each(|v| *v = self.config.activation.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        self.output.forward(&cur, &mut next);
        Ok(self.target_shift + self.target_scale * next[0])
    }

    /// `decode(encode(x).mu)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let (mu, _) = self.encode(x)?;
        self.decode(&mu)
    }

    fn encoder_hidden(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.encoder {
            layer.forward(&cur, &mut next);
            next.iter_mut().for_each(|v| *v = self.config.activation.apply(*v));
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    fn check_len(&self, found: usize, expected: usize) -> Result<()> {
        if found != expected {
            return Err(Error::ArityMismatch { expected, found });
        }
        Ok(())
    }
}

/// Reparameterized sample `mu + exp(logvar / 2) ⊙ noise`.
pub fn sample_latent(mu: &[f64], logvar: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(Error::LengthMismatch {
            what: "sample_latent inputs",
            left: mu.len(),
            right: if mu.len() != logvar.len() {
                logvar.len()
            } else {
                noise.len()
            },
        });
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
        .collect())
}

/// KL divergence of `N(mu, diag(exp(logvar)))` from the standard normal.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::LengthMismatch {
            what: "kl_divergence inputs",
            left: mu.len(),
            right: logvar.len(),
        });
    }
    Ok(kl_unchecked(mu, logvar))
}

#[inline]
pub(crate) fn kl_unchecked(mu: &[f64], logvar: &[f64]) -> f64 {
    // exp_m1 keeps the (exp(lv) - 1 - lv) term accurate near lv = 0.
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + (lv.exp_m1() - lv))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(input: usize, enc: Vec<usize>, latent: usize, dec: Vec<usize>) -> VaeConfig {
        VaeConfig {
            encoder_hidden: enc,
            latent_dim: latent,
            decoder_hidden: dec,
            ..VaeConfig::new(input)
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = VaeConfig {
            seed: 7,
            ..VaeConfig::new(12)
        };
        let a = init_model(&cfg).unwrap();
        let b = init_model(&cfg).unwrap();
        assert_eq!(a, b);
        let other = init_model(&VaeConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.encoder[0].weights, other.encoder[0].weights);
    }

    #[test]
    fn init_shapes_chain() {
        let m = init_model(&VaeConfig::new(12)).unwrap();
        assert_eq!((m.encoder[0].in_dim, m.encoder[0].out_dim), (12, 64));
        assert_eq!((m.mu_head.in_dim, m.mu_head.out_dim), (32, 8));
        assert_eq!((m.logvar_head.in_dim, m.logvar_head.out_dim), (32, 8));
        assert_eq!((m.decoder[0].in_dim, m.decoder[0].out_dim), (8, 32));
        assert_eq!((m.output.in_dim, m.output.out_dim), (64, 1));
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let m = init_model(&VaeConfig::new(12)).unwrap();
        for layer in m.layers() {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
            let a = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= a));
        }
    }

    #[test]
    fn config_validation() {
        assert!(VaeConfig::new(0).validate().is_err());
        assert!(VaeConfig {
            kl_weight: -1.0,
            ..VaeConfig::new(3)
        }
        .validate()
        .is_err());
        assert!(tiny_config(3, vec![4, 0], 2, vec![]).validate().is_err());
        assert!(tiny_config(3, vec![], 2, vec![]).validate().is_ok());
    }

    #[test]
    fn zero_network_encodes_and_decodes_zero() {
        let m = VaeModel::zeros(&VaeConfig::new(5)).unwrap();
        let (mu, lv) = m.encode(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(mu, vec![0.0; 8]);
        assert_eq!(lv, vec![0.0; 8]);
        assert_eq!(m.decode(&mu).unwrap(), 0.0);
    }

    #[test]
    fn encode_rejects_wrong_arity() {
        let m = VaeModel::zeros(&VaeConfig::new(5)).unwrap();
        assert!(matches!(
            m.encode(&[1.0]),
            Err(Error::ArityMismatch {
                expected: 5,
                found: 1
            })
        ));
        assert!(m.decode(&[0.0; 3]).is_err());
    }

    /// 1 input -> 2 tanh hidden -> 1 latent, weights chosen by hand.
    fn hand_built() -> VaeModel {
        let cfg = tiny_config(1, vec![2], 1, vec![2]);
        let mut layers = vec![
            Dense::from_parts(1, 2, vec![0.5, -1.0], vec![0.1, 0.2]).unwrap(),
            Dense::from_parts(2, 1, vec![2.0, 3.0], vec![-0.5]).unwrap(),
            Dense::from_parts(2, 1, vec![1.0, 1.0], vec![0.0]).unwrap(),
            Dense::from_parts(1, 2, vec![1.0, -2.0], vec![0.0, 0.5]).unwrap(),
            Dense::from_parts(2, 1, vec![4.0, 1.0], vec![1.0]).unwrap(),
        ];
        VaeModel::from_layers(cfg, &mut layers).unwrap()
    }

    #[test]
    fn hand_built_encoder() {
        let m = hand_built();
        let x = 0.8;
        let h1 = (0.5 * x + 0.1f64).tanh();
        let h2 = (0.2f64 - x).tanh();
        let (mu, lv) = m.encode(&[x]).unwrap();
        assert!((mu[0] - (2.0 * h1 + 3.0 * h2 - 0.5)).abs() < 1e-12);
        assert!((lv[0] - (h1 + h2)).abs() < 1e-12);
        // Frozen from an independent evaluation of the same composition.
        assert!((mu[0] - (-1.1869143864740868)).abs() < 1e-12);
        assert!((lv[0] - (-0.07493240973802567)).abs() < 1e-12);
    }

    #[test]
    fn hand_built_decoder() {
        let m = hand_built();
        let z = 0.3;
        let g1 = (z * 1.0f64).tanh();
        let g2 = (-2.0 * z + 0.5f64).tanh();
        let want = 4.0 * g1 + g2 + 1.0;
        assert!((m.decode(&[z]).unwrap() - want).abs() < 1e-12);
        assert!((want - 2.0655824551814077).abs() < 1e-12);
    }

    #[test]
    fn predict_is_decode_of_mean() {
        let m = init_model(&VaeConfig::new(4)).unwrap();
        let x = [0.3, -1.2, 2.0, 0.0];
        let (mu, _) = m.encode(&x).unwrap();
        assert_eq!(m.predict(&x).unwrap(), m.decode(&mu).unwrap());
        assert_eq!(m.predict(&x).unwrap().to_bits(), m.predict(&x).unwrap().to_bits());
    }

    #[test]
    fn output_map_applies() {
        let mut m = VaeModel::zeros(&VaeConfig::new(2)).unwrap();
        m.calibrate_targets(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(m.target_shift, 20.0);
        assert_eq!(m.decode(&[0.0; 8]).unwrap(), 20.0);
    }

    #[test]
    fn softplus_derivative_matches_sigmoid() {
        for a in [-30.0, -2.0, -0.1, 0.0, 0.7, 5.0, 40.0] {
            let h = Activation::Softplus.apply(a);
            let sig = 1.0 / (1.0 + (-a).exp());
            assert!((Activation::Softplus.derivative_from_output(h) - sig).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_latent_cases() {
        assert_eq!(sample_latent(&[1.0, 2.0], &[0.3, -4.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(sample_latent(&[1.0, 2.0], &[0.0, 0.0], &[0.5, -1.5]).unwrap(), vec![1.5, 0.5]);
        let z = sample_latent(&[1.0], &[4f64.ln()], &[0.5]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        assert!(sample_latent(&[1.0], &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn kl_cases() {
        assert_eq!(kl_divergence(&[0.0; 4], &[0.0; 4]).unwrap(), 0.0);
        assert!((kl_divergence(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-12);
        let want = 0.5 * (2.0 - 1.0 - 2f64.ln());
        let got = kl_divergence(&[0.0], &[2f64.ln()]).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.15343).abs() < 1e-5);
        assert!(kl_divergence(&[0.0], &[]).is_err());
    }
}
