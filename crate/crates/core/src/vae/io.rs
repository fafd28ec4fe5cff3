//! Binary model files.
//!
//! Little-endian layout:
//!
//! ```text
//! "VAEC"                     magic
//! u32                        format version
//! config   u32 input_dim, u32 n_enc, u32 × n_enc widths, u32 latent_dim,
//!          u32 n_dec, u32 × n_dec widths, u8 activation (0 tanh, 1 softplus),
//!          f64 kl_weight, f64 learning_rate, u64 epochs, u64 batch_size, u64 seed
//! scaler   u32 arity, f64 × arity means, f64 × arity stds
//! output   f64 target_shift, f64 target_scale
//! layers   per layer in declaration order: f64 × (out·in) weights row-major, f64 × out bias
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Dense, VaeConfig, VaeModel};
use crate::dataset::Scaler;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VAEC";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_model(m: &VaeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(m, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<VaeModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

pub fn write_model<W: Write>(m: &VaeModel, w: &mut W) -> std::io::Result<()> {
    let cfg = &m.config;
    let u32_of = |v: usize| u32::try_from(v).expect("dimension fits in u32");
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;

    w.write_all(&u32_of(cfg.input_dim).to_le_bytes())?;
    w.write_all(&u32_of(cfg.encoder_hidden.len()).to_le_bytes())?;
    for &h in &cfg.encoder_hidden {
        w.write_all(&u32_of(h).to_le_bytes())?;
    }
    w.write_all(&u32_of(cfg.latent_dim).to_le_bytes())?;
    w.write_all(&u32_of(cfg.decoder_hidden.len()).to_le_bytes())?;
    for &h in &cfg.decoder_hidden {
        w.write_all(&u32_of(h).to_le_bytes())?;
    }
    let act: u8 = match cfg.activation {
        Activation::Tanh => 0,
        Activation::Softplus => 1,
    };
    w.write_all(&[act])?;
    w.write_all(&cfg.kl_weight.to_le_bytes())?;
    w.write_all(&cfg.learning_rate.to_le_bytes())?;
    w.write_all(&(cfg.epochs as u64).to_le_bytes())?;
    w.write_all(&(cfg.batch_size as u64).to_le_bytes())?;
    w.write_all(&cfg.seed.to_le_bytes())?;

    w.write_all(&u32_of(m.scaler.arity()).to_le_bytes())?;
    for v in m.scaler.means().iter().chain(m.scaler.stds()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&m.target_shift.to_le_bytes())?;
    w.write_all(&m.target_scale.to_le_bytes())?;

    for layer in m.layers() {
        for v in layer.weights.iter().chain(&layer.bias) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Fields<R> {
    inner: R,
}

impl<R: Read> Fields<R> {
    fn bytes<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated(field),
            _ => Error::io("<model reader>", e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        self.bytes(field).map(u32::from_le_bytes)
    }

    fn dim(&mut self, field: &'static str) -> Result<usize> {
        Ok(self.u32(field)? as usize)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        self.bytes(field).map(u64::from_le_bytes)
    }

    fn f64(&mut self, field: &'static str) -> Result<f64> {
        self.bytes(field).map(f64::from_le_bytes)
    }

    fn f64s(&mut self, n: usize, field: &'static str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(field)).collect()
    }
}

pub fn read_model<R: Read>(reader: R) -> Result<VaeModel> {
    let mut r = Fields { inner: reader };
    let magic: [u8; 4] = r.bytes("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u32("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }

    let input_dim = r.dim("config.input_dim")?;
    let n_enc = r.dim("config.encoder_hidden.len")?;
    let encoder_hidden = (0..n_enc)
        .map(|_| r.dim("config.encoder_hidden"))
        .collect::<Result<Vec<_>>>()?;
    let latent_dim = r.dim("config.latent_dim")?;
    let n_dec = r.dim("config.decoder_hidden.len")?;
    let decoder_hidden = (0..n_dec)
        .map(|_| r.dim("config.decoder_hidden"))
        .collect::<Result<Vec<_>>>()?;
    let activation = match r.bytes::<1>("config.activation")?[0] {
        0 => Activation::Tanh,
        1 => Activation::Softplus,
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    };
    let config = VaeConfig {
        input_dim,
        encoder_hidden,
        latent_dim,
        decoder_hidden,
        activation,
        kl_weight: r.f64("config.kl_weight")?,
        learning_rate: r.f64("config.learning_rate")?,
        epochs: r.u64("config.epochs")? as usize,
        batch_size: r.u64("config.batch_size")? as usize,
        seed: r.u64("config.seed")?,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("config block: {e}")))?;

    let arity = r.dim("scaler.arity")?;
    if arity != input_dim {
        return Err(Error::Format(format!(
            "scaler arity {arity} does not match input_dim {input_dim}"
        )));
    }
    let means = r.f64s(arity, "scaler.means")?;
    let stds = r.f64s(arity, "scaler.stds")?;
    let scaler = Scaler::new(means, stds).map_err(|e| Error::Format(format!("scaler block: {e}")))?;
    let target_shift = r.f64("target_shift")?;
    let target_scale = r.f64("target_scale")?;

    let mut layers = config
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let weights = r.f64s(fan_in * fan_out, "layer weights")?;
            let bias = r.f64s(fan_out, "layer bias")?;
            Dense::from_parts(fan_in, fan_out, weights, bias)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trailing = [0u8; 1];
    match r.inner.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Format("trailing bytes after last layer".into())),
        Err(e) => return Err(Error::io("<model reader>", e)),
    }

    let mut model = VaeModel::from_layers(config, &mut layers)
        .map_err(|e| Error::Format(format!("layers: {e}")))?;
    model.scaler = scaler;
    model.target_shift = target_shift;
    model.target_scale = target_scale;
    model
        .validate()
        .map_err(|e| Error::Format(format!("model: {e}")))?;
    Ok(model)
}
