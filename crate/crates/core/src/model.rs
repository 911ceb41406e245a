//! The assembled depth model: frozen encoders, learnable mirror, trainable
//! decoder, and the full forward/inference paths.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::{DecoderConfig, DenseDecoder};
use crate::depth::{DepthMap, ImageBuf};
use crate::element::Element;
use crate::encoder::{
    mirror_init, TextEncoder, TextEncoderConfig, VisionEncoder, VisionEncoderConfig,
    VisionFeatures,
};
use crate::error::{Error, Result};
use crate::nn::{Binding, Init, ParamId, ParamStore};
use crate::tensor::{Tape, TensorId};

/// Input pixels in [0,1] are normalized to (x − MEAN)/STD per channel before
/// entering the patch embedding.
pub const IMAGE_MEAN: f32 = 0.5;
pub const IMAGE_STD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub vision: VisionEncoderConfig,
    pub text: TextEncoderConfig,
    /// Mirror token count `s`; each token has the text width.
    pub mirror_tokens: usize,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// Full-scale preset: ViT-B/16-shaped vision tower at 352², 12-layer
    /// text tower at width 512, 64 mirror tokens, width-64 decoder.
    pub fn paper() -> Self {
        ModelConfig {
            vision: VisionEncoderConfig {
                image_size: 352,
                patch_size: 16,
                width: 768,
                layers: 12,
                heads: 12,
                mlp_dim: 3072,
                tap_layers: alloc::vec![3, 6, 9],
            },
            text: TextEncoderConfig {
                width: 512,
                layers: 12,
                heads: 8,
                mlp_dim: 2048,
                max_positions: 77,
                proj_dim: 512,
            },
            mirror_tokens: 64,
            decoder: DecoderConfig {
                width: 64,
                blocks: 3,
                heads: 4,
                mlp_dim: 2048,
                film_layers: 2,
                proj_in_dim: 768,
                cond_dim: 512,
                deconv_mid: 32,
            },
        }
    }

    /// Desk-scale preset small enough to overfit and gradient-check in
    /// seconds: 64² images, 8-pixel patches, width-32 towers.
    pub fn toy() -> Self {
        ModelConfig {
            vision: VisionEncoderConfig {
                image_size: 64,
                patch_size: 8,
                width: 32,
                layers: 3,
                heads: 4,
                mlp_dim: 64,
                tap_layers: alloc::vec![1, 2, 3],
            },
            text: TextEncoderConfig {
                width: 32,
                layers: 2,
                heads: 4,
                mlp_dim: 64,
                max_positions: 16,
                proj_dim: 32,
            },
            mirror_tokens: 8,
            decoder: DecoderConfig {
                width: 32,
                blocks: 3,
                heads: 4,
                mlp_dim: 64,
                film_layers: 2,
                proj_in_dim: 32,
                cond_dim: 32,
                deconv_mid: 16,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vision.validate()?;
        self.text.validate()?;
        self.decoder.validate(self.vision.tap_layers.len())?;
        if self.decoder.proj_in_dim != self.vision.width {
            return Err(Error::Config(
                "decoder.proj_in_dim must equal vision.width".into(),
            ));
        }
        if self.decoder.cond_dim != self.text.proj_dim {
            return Err(Error::Config(
                "decoder.cond_dim must equal text.proj_dim".into(),
            ));
        }
        if self.mirror_tokens == 0 {
            return Err(Error::Config("mirror must have at least one token".into()));
        }
        if self.mirror_tokens + 2 > self.text.max_positions {
            return Err(Error::Config(format!(
                "mirror length {} + BOS/EOS exceeds text capacity {}",
                self.mirror_tokens, self.text.max_positions
            )));
        }
        Ok(())
    }

    /// Side of the logit map: 16× the token grid (conv preserves, two 4×
    /// transposed convs upsample).
    pub fn logit_size(&self) -> usize {
        self.vision.grid() * 16
    }
}

pub struct DepthModel<E: Element> {
    pub cfg: ModelConfig,
    pub store: ParamStore<E>,
    pub vision: VisionEncoder,
    pub text: TextEncoder,
    pub decoder: DenseDecoder,
    pub mirror: ParamId,
    pub seed: u64,
}

impl<E: Element> DepthModel<E> {
    /// Build and initialize all parameters. Construction order (vision,
    /// text, mirror, decoder) is fixed: it defines both the RNG consumption
    /// and the checkpoint parameter order.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let vision = VisionEncoder::init(&mut store, &mut init, cfg.vision.clone());
        let text = TextEncoder::init(&mut store, &mut init, cfg.text.clone());
        let mirror_data = mirror_init::<E>(init.rng(), cfg.mirror_tokens, cfg.text.width);
        let mirror = store.add(
            "mirror".into(),
            &[cfg.mirror_tokens, cfg.text.width],
            mirror_data,
            false,
        );
        let decoder = DenseDecoder::init(&mut store, &mut init, cfg.decoder.clone());
        Ok(DepthModel {
            cfg,
            store,
            vision,
            text,
            decoder,
            mirror,
            seed,
        })
    }

    pub fn bind(&self, tape: &mut Tape<E>) -> Result<Binding> {
        self.store.bind(tape)
    }

    /// Normalize an RGB image and place it on the tape. The spatial size
    /// must already equal the configured image size.
    pub fn image_input(&self, tape: &mut Tape<E>, img: &ImageBuf) -> Result<TensorId> {
        let s = self.cfg.vision.image_size;
        if (img.height, img.width) != (s, s) {
            return Err(Error::dim(
                "encode_image",
                format!("expected {s}×{s} input, got {}×{}", img.height, img.width),
            ));
        }
        let data: Vec<E> = img
            .data
            .iter()
            .map(|&v| E::from_f64(((v - IMAGE_MEAN) / IMAGE_STD) as f64))
            .collect();
        tape.constant(&[3, s, s], data)
    }

    pub fn encode_image(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        img: &ImageBuf,
    ) -> Result<VisionFeatures> {
        let x = self.image_input(tape, img)?;
        self.vision.forward(tape, bind, x)
    }

    /// One conditioning vector `[1×proj_dim]` from the current mirror.
    pub fn encode_prompt(&self, tape: &mut Tape<E>, bind: &Binding) -> Result<TensorId> {
        self.text.encode_prompt(tape, bind, bind.get(self.mirror))
    }

    /// Full forward pass to the logit map `[1×L×L]`.
    pub fn forward(&self, tape: &mut Tape<E>, bind: &Binding, img: &ImageBuf) -> Result<TensorId> {
        let feats = self.encode_image(tape, bind, img)?;
        let cond = self.encode_prompt(tape, bind)?;
        self.decoder.decode(tape, bind, &feats.taps, cond)
    }

    /// softplus(logits) bilinearly resized to the target; strictly positive.
    pub fn predict_depth(
        &self,
        tape: &mut Tape<E>,
        logits: TensorId,
        target_h: usize,
        target_w: usize,
    ) -> Result<TensorId> {
        let depth = tape.softplus(logits)?;
        tape.bilinear_resize(depth, target_h, target_w)
    }

    /// Inference: resize the input to the model size, run the forward path
    /// without gradients, and resize the prediction back to the input size.
    pub fn infer(&self, img: &ImageBuf) -> Result<DepthMap> {
        let s = self.cfg.vision.image_size;
        let resized = img.resized(s, s);
        let mut tape = Tape::inference();
        let bind = self.bind(&mut tape)?;
        let logits = self.forward(&mut tape, &bind, &resized)?;
        let pred = self.predict_depth(&mut tape, logits, img.height, img.width)?;
        let data: Vec<f32> = tape.data(pred).iter().map(|&v| v.as_f64() as f32).collect();
        Ok(DepthMap::from_data(img.height, img.width, data))
    }

    /// Trainable scalar count: mirror plus the decoder's non-frozen parts.
    pub fn count_learnable_params(&self) -> usize {
        self.store.count_learnable()
    }

    /// Redraw the mirror from N(0, 0.02) with a fresh seed (post-training
    /// ablation).
    pub fn randomize_mirror(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.redraw_mirror_from(&mut rng);
    }

    /// Redraw the mirror from an existing RNG stream (disrupted training
    /// draws once per step from the training RNG).
    pub fn redraw_mirror_from(&mut self, rng: &mut ChaCha8Rng) {
        let data = mirror_init::<E>(rng, self.cfg.mirror_tokens, self.cfg.text.width);
        self.store.set_data(self.mirror, data);
    }
}
