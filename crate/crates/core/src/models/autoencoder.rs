use serde::{Deserialize, Serialize};

use super::latent::LatentCode;
use super::mlp::{GradientAt, Mlp};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Activation, Real, Rng};

/// Rows per GEMM call at inference time.
const INFERENCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoencoderConfig {
    pub hidden: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Epoch indices (0-based) at which the learning rate is multiplied by
    /// `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            latent_dim: 128,
            epochs: 40,
            lr: 0.005,
            batch: 32,
            decay_epochs: vec![30],
            decay_factor: 0.5,
            momentum: 0.0,
            seed: 1,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.latent_dim == 0 || self.batch == 0 {
            return Err(Error::Config(
                "autoencoder hidden, latent_dim and batch must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.decay_factor > 0.0) {
            return Err(Error::Config(format!(
                "autoencoder needs lr >= 0, 0 <= momentum < 1, decay_factor > 0 (got {}, {}, {})",
                self.lr, self.momentum, self.decay_factor
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * self.decay_factor.powi(decays as i32)
    }
}

/// Training provenance stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub config: Option<AutoencoderConfig>,
    pub n_images: usize,
    /// Mean per-pixel squared error per epoch.
    pub loss_curve: Vec<f64>,
}

/// Mirror-symmetric dense autoencoder: ReLU hidden layers, linear bottleneck,
/// sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T: Real = f32> {
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub width: usize,
    pub height: usize,
    pub info: TrainingInfo,
}

impl<T: Real> Autoencoder<T> {
    pub fn new(width: usize, height: usize, hidden: usize, latent_dim: usize, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, 0);
        let pixels = width * height;
        let encoder = Mlp::new(
            &[pixels, hidden, latent_dim],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        let decoder = Mlp::new(
            &[latent_dim, hidden, pixels],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        );
        Self {
            encoder,
            decoder,
            width,
            height,
            info: TrainingInfo::default(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.n_out()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn cast<U: Real>(&self) -> Autoencoder<U> {
        Autoencoder {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            width: self.width,
            height: self.height,
            info: self.info.clone(),
        }
    }

    /// Raw encoder forward pass over `batch` flattened images.
    pub fn encode_raw(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.encoder.forward(x, batch)
    }

    pub fn decode_raw(&self, z: &[T], batch: usize) -> Result<Vec<T>> {
        self.decoder.forward(z, batch)
    }

    /// Mean per-sample half sum of squared errors over a batch, plus parameter
    /// gradients for encoder and decoder. `x` holds `batch` rows.
    pub fn loss_and_grads(
        &self,
        x: &[T],
        batch: usize,
    ) -> Result<(f64, Vec<super::mlp::LayerGrad<T>>, Vec<super::mlp::LayerGrad<T>>)> {
        let enc = self.encoder.forward_trace(x.to_vec(), batch)?;
        let dec = self.decoder.forward_trace(enc.output().to_vec(), batch)?;
        let inv_b = T::of(1.0 / batch as f64);
        let mut sse = 0.0f64;
        let upstream: Vec<T> = dec
            .output()
            .iter()
            .zip(x)
            .map(|(&y, &t)| {
                let d = y - t;
                sse += d.wide() * d.wide();
                d * inv_b
            })
            .collect();
        let (dec_grads, dz) = self.decoder.backward(&dec, &upstream, GradientAt::Output, true);
        let dz = dz.expect("requested latent gradient");
        let (enc_grads, _) = self.encoder.backward(&enc, &dz, GradientAt::Output, false);
        Ok((0.5 * sse / batch as f64, enc_grads, dec_grads))
    }
}

impl Autoencoder<f32> {
    fn check_image(&self, image: &Image) -> Result<()> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::Shape(format!(
                "autoencoder expects {}x{} images, got {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, image: &Image) -> Result<LatentCode> {
        self.check_image(image)?;
        Ok(LatentCode::new(self.encode_raw(image.pixels(), 1)?))
    }

    pub fn encode_batch(&self, images: &[Image]) -> Result<Vec<Vec<f32>>> {
        let d = self.latent_dim();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(INFERENCE_CHUNK) {
            let mut x = Vec::with_capacity(chunk.len() * self.pixels());
            for img in chunk {
                self.check_image(img)?;
                x.extend_from_slice(img.pixels());
            }
            let z = self.encode_raw(&x, chunk.len())?;
            out.extend(z.chunks_exact(d).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    pub fn decode(&self, z: &[f32]) -> Result<Image> {
        if z.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent has {} dims, decoder expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let y = self.decode_raw(z, 1)?;
        Image::new(self.width, self.height, y)
    }

    pub fn reconstruct(&self, image: &Image) -> Result<Image> {
        self.decode(&self.encode(image)?.values())
    }

    /// Mean per-pixel squared reconstruction error over `images`.
    pub fn reconstruction_mse(&self, images: &[Image]) -> Result<f64> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("no images to score".into()));
        }
        let mut total = 0.0;
        for chunk in images.chunks(INFERENCE_CHUNK) {
            let mut x = Vec::with_capacity(chunk.len() * self.pixels());
            for img in chunk {
                self.check_image(img)?;
                x.extend_from_slice(img.pixels());
            }
            let z = self.encode_raw(&x, chunk.len())?;
            let y = self.decode_raw(&z, chunk.len())?;
            total += y
                .iter()
                .zip(&x)
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>();
        }
        Ok(total / (images.len() * self.pixels()) as f64)
    }
}

/// Mini-batch SGD (with heavy-ball momentum) on reconstruction error.
///
/// Takes images only: concept labels and masks cannot reach this function.
/// The objective per batch is the mean over samples of half the summed
/// squared pixel error; the logged curve is the per-pixel mean squared error.
pub fn train_autoencoder(images: &[Image], cfg: &AutoencoderConfig) -> Result<Autoencoder> {
    cfg.validate()?;
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("autoencoder training set is empty".into()))?;
    let (width, height) = (first.width(), first.height());
    if let Some(bad) = images.iter().find(|i| !i.same_shape(first)) {
        return Err(Error::Shape(format!(
            "mixed image sizes: {}x{} and {}x{}",
            width,
            height,
            bad.width(),
            bad.height()
        )));
    }
    let mut ae = Autoencoder::<f32>::new(width, height, cfg.hidden, cfg.latent_dim, cfg.seed);
    let pixels = width * height;
    let mut enc_velocity = zero_like(&ae.encoder);
    let mut dec_velocity = zero_like(&ae.decoder);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        Rng::stream(cfg.seed, 1000 + epoch as u64).shuffle(&mut order);
        let mut epoch_sse = 0.0;
        for idx in order.chunks(cfg.batch) {
            let mut x = Vec::with_capacity(idx.len() * pixels);
            for &i in idx {
                x.extend_from_slice(images[i].pixels());
            }
            let (loss, enc_g, dec_g) = ae.loss_and_grads(&x, idx.len())?;
            epoch_sse += 2.0 * loss * idx.len() as f64;
            momentum_step(&mut ae.encoder, &mut enc_velocity, enc_g, lr, cfg.momentum)?;
            momentum_step(&mut ae.decoder, &mut dec_velocity, dec_g, lr, cfg.momentum)?;
        }
        let mse = epoch_sse / (images.len() * pixels) as f64;
        if !mse.is_finite() || !ae.encoder.all_finite() || !ae.decoder.all_finite() {
            return Err(Error::Divergence { epoch, loss: mse });
        }
        log::info!("autoencoder epoch {epoch}: mse {mse:.6} (lr {lr})");
        curve.push(mse);
    }

    ae.info = TrainingInfo {
        config: Some(cfg.clone()),
        n_images: images.len(),
        loss_curve: curve,
    };
    Ok(ae)
}

type Velocity = Vec<super::mlp::LayerGrad<f32>>;

pub(crate) fn zero_like(net: &Mlp<f32>) -> Velocity {
    net.layers()
        .iter()
        .map(|l| super::mlp::LayerGrad {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect()
}

/// `v <- momentum * v + g`, then an SGD step along `v`.
pub(crate) fn momentum_step(
    net: &mut Mlp<f32>,
    velocity: &mut Velocity,
    grads: Vec<super::mlp::LayerGrad<f32>>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if momentum == 0.0 {
        return net.apply_gradients(&grads, lr, 0.0);
    }
    let m = momentum as f32;
    for (v, g) in velocity.iter_mut().zip(&grads) {
        for (vi, gi) in v.weights.iter_mut().zip(&g.weights) {
            *vi = m * *vi + gi;
        }
        for (vi, gi) in v.bias.iter_mut().zip(&g.bias) {
            *vi = m * *vi + gi;
        }
    }
    net.apply_gradients(velocity, lr, 0.0)
}
