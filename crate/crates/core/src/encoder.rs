//! Frozen vision and text transformer encoders plus the learnable mirror.
//!
//! Both encoders are randomly initialized and frozen: the mechanism under
//! study is the conditioning path, not pretrained semantics. The vision
//! tower patchifies with a strided conv, prepends a class token, adds
//! positional embeddings and runs bidirectional pre-norm blocks, returning
//! the patch-token hidden states after each tap layer (class token removed).
//! The text tower runs causally masked blocks over `[BOS; mirror; EOS]`,
//! applies the final layer norm, pools the EOS position and projects it to
//! one conditioning vector — a single query regardless of mirror length.

use alloc::format;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::{config_check, Binding, Block, Init, LayerNorm, ParamId, ParamStore, WeightScale};
use crate::tensor::{Tape, TensorId};

/// Standard deviation for embedding-style parameters (patch embedding,
/// class/special tokens, positional tables, output projection, mirror).
pub const EMBED_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisionEncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// 1-based block indices whose outputs feed the decoder.
    pub tap_layers: Vec<usize>,
}

impl VisionEncoderConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn validate(&self) -> Result<()> {
        config_check(self.patch_size > 0, "vision: patch_size must be positive")?;
        config_check(
            self.image_size % self.patch_size == 0,
            "vision: image_size must be divisible by patch_size",
        )?;
        config_check(self.layers > 0, "vision: layers must be positive")?;
        config_check(
            self.heads > 0 && self.width % self.heads == 0,
            "vision: width must be divisible by heads",
        )?;
        config_check(!self.tap_layers.is_empty(), "vision: at least one tap layer")?;
        config_check(
            self.tap_layers.iter().all(|&t| t >= 1 && t <= self.layers),
            "vision: tap layers must lie in [1, layers]",
        )?;
        config_check(
            self.tap_layers.windows(2).all(|w| w[0] < w[1]),
            "vision: tap layers must be strictly increasing",
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextEncoderConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub max_positions: usize,
    pub proj_dim: usize,
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        config_check(self.layers > 0, "text: layers must be positive")?;
        config_check(
            self.heads > 0 && self.width % self.heads == 0,
            "text: width must be divisible by heads",
        )?;
        config_check(self.proj_dim > 0, "text: proj_dim must be positive")
    }
}

/// Hidden states handed to the decoder: one `[tokens×width]` tensor per tap
/// layer plus the last block's output, class token excluded.
pub struct VisionFeatures {
    pub taps: Vec<TensorId>,
    pub final_hidden: TensorId,
}

pub struct VisionEncoder {
    pub cfg: VisionEncoderConfig,
    patch_w: ParamId,
    patch_b: ParamId,
    class_token: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
}

impl VisionEncoder {
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        init: &mut Init,
        cfg: VisionEncoderConfig,
    ) -> Self {
        let w = cfg.width;
        let p = cfg.patch_size;
        let patch_w = store.add(
            "vision.patch.w".into(),
            &[w, 3, p, p],
            init.normal(w * 3 * p * p, EMBED_SIGMA),
            true,
        );
        let patch_b = store.add("vision.patch.b".into(), &[w], init.fill(w, 0.0), true);
        let class_token = store.add(
            "vision.class_token".into(),
            &[1, w],
            init.normal(w, EMBED_SIGMA),
            true,
        );
        let n_pos = cfg.tokens() + 1;
        let pos = store.add(
            "vision.pos".into(),
            &[n_pos, w],
            init.normal(n_pos * w, EMBED_SIGMA),
            true,
        );
        let blocks = (0..cfg.layers)
            .map(|i| {
                Block::init(
                    store,
                    init,
                    &format!("vision.block{i}"),
                    w,
                    cfg.heads,
                    cfg.mlp_dim,
                    WeightScale::FanIn,
                    false,
                    true,
                )
            })
            .collect();
        VisionEncoder {
            cfg,
            patch_w,
            patch_b,
            class_token,
            pos,
            blocks,
        }
    }

    /// `x` is a normalized `[3×image_size×image_size]` tensor already on the
    /// tape. Sizes must match exactly; resizing happens upstream.
    pub fn forward<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        x: TensorId,
    ) -> Result<VisionFeatures> {
        let s = tape.shape(x).to_vec();
        if s != [3, self.cfg.image_size, self.cfg.image_size] {
            return Err(Error::dim(
                "encode_image",
                format!(
                    "expected [3, {0}, {0}], got {1:?}",
                    self.cfg.image_size, s
                ),
            ));
        }
        let p = self.cfg.patch_size;
        let patches = tape.conv2d(x, bind.get(self.patch_w), Some(bind.get(self.patch_b)), p, 0)?;
        let tokens = tape.grid_to_tokens(patches)?;
        let seq = tape.concat_rows(&[bind.get(self.class_token), tokens])?;
        let mut h = tape.add(seq, bind.get(self.pos))?;

        let n_patch = self.cfg.tokens();
        let mut taps = Vec::with_capacity(self.cfg.tap_layers.len());
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(tape, bind, h)?;
            if self.cfg.tap_layers.contains(&(i + 1)) {
                taps.push(tape.slice_rows(h, 1, n_patch)?);
            }
        }
        let final_hidden = tape.slice_rows(h, 1, n_patch)?;
        Ok(VisionFeatures { taps, final_hidden })
    }
}

pub struct TextEncoder {
    pub cfg: TextEncoderConfig,
    bos: ParamId,
    eos: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    final_ln: LayerNorm,
    proj: ParamId,
}

impl TextEncoder {
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        init: &mut Init,
        cfg: TextEncoderConfig,
    ) -> Self {
        let w = cfg.width;
        let bos = store.add("text.bos".into(), &[1, w], init.normal(w, EMBED_SIGMA), true);
        let eos = store.add("text.eos".into(), &[1, w], init.normal(w, EMBED_SIGMA), true);
        let pos = store.add(
            "text.pos".into(),
            &[cfg.max_positions, w],
            init.normal(cfg.max_positions * w, EMBED_SIGMA),
            true,
        );
        let blocks = (0..cfg.layers)
            .map(|i| {
                Block::init(
                    store,
                    init,
                    &format!("text.block{i}"),
                    w,
                    cfg.heads,
                    cfg.mlp_dim,
                    WeightScale::FanIn,
                    true,
                    true,
                )
            })
            .collect();
        let final_ln = LayerNorm::init(store, init, "text.ln_final", w, true);
        let proj = store.add(
            "text.proj".into(),
            &[cfg.proj_dim, w],
            init.normal(cfg.proj_dim * w, EMBED_SIGMA),
            true,
        );
        TextEncoder {
            cfg,
            bos,
            eos,
            pos,
            blocks,
            final_ln,
            proj,
        }
    }

    /// Encode `[BOS; mirror; EOS]` and pool the projected EOS embedding into
    /// a single `[1×proj_dim]` conditioning vector.
    pub fn encode_prompt<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        mirror: TensorId,
    ) -> Result<TensorId> {
        let s = tape.shape(mirror)[0];
        let seq_len = s + 2;
        if seq_len > self.cfg.max_positions {
            return Err(Error::Config(format!(
                "prompt length {seq_len} exceeds text capacity {}",
                self.cfg.max_positions
            )));
        }
        let seq = tape.concat_rows(&[bind.get(self.bos), mirror, bind.get(self.eos)])?;
        let pos = tape.slice_rows(bind.get(self.pos), 0, seq_len)?;
        let mut h = tape.add(seq, pos)?;
        for block in &self.blocks {
            h = block.forward(tape, bind, h)?;
        }
        let h = self.final_ln.forward(tape, bind, h)?;
        let eos_h = tape.slice_rows(h, seq_len - 1, 1)?;
        tape.matmul_tb(eos_h, bind.get(self.proj))
    }
}

/// Fresh N(0, 0.02) draw for a `[s×d]` mirror.
pub fn mirror_init<E: Element>(
    rng: &mut rand_chacha::ChaCha8Rng,
    tokens: usize,
    dim: usize,
) -> Vec<E> {
    use rand_distr::Distribution;
    let dist = rand_distr::Normal::new(0.0f64, EMBED_SIGMA).expect("sigma > 0");
    (0..tokens * dim)
        .map(|_| E::from_f64(dist.sample(rng)))
        .collect()
}
