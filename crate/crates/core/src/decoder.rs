//! Dense depth decoder: projects tapped hidden states down to its own width,
//! injects the conditioning vector through two FiLM layers (whose nets stay
//! frozen), fuses the taps with additive skips around small transformer
//! blocks, and decodes the token grid to a logit map with a conv followed by
//! two 4× transposed convolutions (16× total upsampling per token).
//!
//! Skip pairing is reversed: the deepest tap enters first and the shallowest
//! is added last. FiLM sits before the first and second blocks.

use alloc::format;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::{config_check, Binding, Block, Init, Linear, ParamId, ParamStore, WeightScale};
use crate::tensor::{Tape, TensorId};

/// Decoder weight init (trainable parts).
pub const DECODER_SIGMA: f64 = 0.02;

/// Gain of the frozen FiLM nets over plain fan-in scaling. The conditioning
/// vector must modulate the token stream strongly enough that the trained
/// decoder actually depends on the mirror.
pub const FILM_GAIN: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub film_layers: usize,
    /// Width of the vision encoder hidden states entering the projections.
    pub proj_in_dim: usize,
    /// Length of the conditioning vector (text projection dim).
    pub cond_dim: usize,
    /// Channel count between the two transposed convolutions.
    pub deconv_mid: usize,
}

impl DecoderConfig {
    pub fn validate(&self, tap_count: usize) -> Result<()> {
        config_check(self.blocks > 0, "decoder: blocks must be positive")?;
        config_check(
            self.heads > 0 && self.width % self.heads == 0,
            "decoder: width must be divisible by heads",
        )?;
        config_check(
            tap_count == self.blocks,
            "decoder: one projection per tap layer, one tap per block",
        )?;
        config_check(
            self.film_layers <= self.blocks,
            "decoder: film_layers must not exceed blocks",
        )?;
        config_check(self.deconv_mid > 0, "decoder: deconv_mid must be positive")
    }
}

/// One FiLM layer: two frozen affine nets mapping the conditioning vector to
/// a per-channel scale and shift.
pub struct Film {
    gamma_net: Linear,
    beta_net: Linear,
}

pub struct DenseDecoder {
    pub cfg: DecoderConfig,
    projections: Vec<Linear>,
    films: Vec<Film>,
    blocks: Vec<Block>,
    conv_w: ParamId,
    conv_b: ParamId,
    deconv1_w: ParamId,
    deconv1_b: ParamId,
    deconv2_w: ParamId,
    deconv2_b: ParamId,
}

impl DenseDecoder {
    pub fn init<E: Element>(store: &mut ParamStore<E>, init: &mut Init, cfg: DecoderConfig) -> Self {
        let w = cfg.width;
        let projections = (0..cfg.blocks)
            .map(|i| {
                Linear::init(
                    store,
                    init,
                    &format!("decoder.proj{i}"),
                    cfg.proj_in_dim,
                    w,
                    WeightScale::Fixed(DECODER_SIGMA),
                    true,
                    false,
                )
            })
            .collect();
        // FiLM nets are frozen; fan-in scale keeps the conditioning signal at
        // the activations' order of magnitude, and the gamma bias starts the
        // multiplicative path at identity.
        let films = (0..cfg.film_layers)
            .map(|i| {
                let gamma_net = Linear::init(
                    store,
                    init,
                    &format!("decoder.film{i}.gamma"),
                    cfg.cond_dim,
                    w,
                    WeightScale::FanInScaled(FILM_GAIN),
                    true,
                    true,
                );
                let ones = init.fill::<E>(w, 1.0);
                store.set_data(gamma_net.b.expect("film gamma bias"), ones);
                let beta_net = Linear::init(
                    store,
                    init,
                    &format!("decoder.film{i}.beta"),
                    cfg.cond_dim,
                    w,
                    WeightScale::FanInScaled(FILM_GAIN),
                    true,
                    true,
                );
                Film { gamma_net, beta_net }
            })
            .collect();
        let blocks = (0..cfg.blocks)
            .map(|i| {
                Block::init(
                    store,
                    init,
                    &format!("decoder.block{i}"),
                    w,
                    cfg.heads,
                    cfg.mlp_dim,
                    WeightScale::Fixed(DECODER_SIGMA),
                    false,
                    false,
                )
            })
            .collect();
        let mid = cfg.deconv_mid;
        let conv_w = store.add(
            "decoder.conv.w".into(),
            &[w, w, 3, 3],
            init.normal(w * w * 9, DECODER_SIGMA),
            false,
        );
        let conv_b = store.add("decoder.conv.b".into(), &[w], init.fill(w, 0.0), false);
        let deconv1_w = store.add(
            "decoder.deconv1.w".into(),
            &[w, mid, 4, 4],
            init.normal(w * mid * 16, DECODER_SIGMA),
            false,
        );
        let deconv1_b = store.add("decoder.deconv1.b".into(), &[mid], init.fill(mid, 0.0), false);
        let deconv2_w = store.add(
            "decoder.deconv2.w".into(),
            &[mid, 1, 4, 4],
            init.normal(mid * 16, DECODER_SIGMA),
            false,
        );
        let deconv2_b = store.add("decoder.deconv2.b".into(), &[1], init.fill(1, 0.0), false);
        DenseDecoder {
            cfg,
            projections,
            films,
            blocks,
            conv_w,
            conv_b,
            deconv1_w,
            deconv1_b,
            deconv2_w,
            deconv2_b,
        }
    }

    /// `out = gamma_net(cond) ⊙ activation + beta_net(cond)`, the scale and
    /// shift broadcast over tokens.
    pub fn film_modulate<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        activation: TensorId,
        cond: TensorId,
        layer: usize,
    ) -> Result<TensorId> {
        let film = &self.films[layer];
        let gamma = film.gamma_net.forward(tape, bind, cond)?;
        let beta = film.beta_net.forward(tape, bind, cond)?;
        let gamma = tape.reshape(gamma, &[self.cfg.width])?;
        let beta = tape.reshape(beta, &[self.cfg.width])?;
        let scaled = tape.mul_row_vec(activation, gamma)?;
        tape.add_row_vec(scaled, beta)
    }

    /// Fuse the tapped hidden states (deepest first) under FiLM conditioning
    /// and decode to a `[1×16g×16g]` logit map.
    pub fn decode<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        taps: &[TensorId],
        cond: TensorId,
    ) -> Result<TensorId> {
        if taps.len() != self.blocks.len() {
            return Err(Error::dim(
                "decode",
                format!("{} taps for {} blocks", taps.len(), self.blocks.len()),
            ));
        }
        let tokens = tape.shape(taps[0])[0];
        let g = tokens.isqrt();
        if g * g != tokens {
            return Err(Error::dim(
                "decode",
                format!("token count {tokens} is not a square grid"),
            ));
        }
        let cs = tape.shape(cond).to_vec();
        if cs != [1, self.cfg.cond_dim] {
            return Err(Error::dim(
                "decode",
                format!("conditioning shape {:?}, expected [1, {}]", cs, self.cfg.cond_dim),
            ));
        }

        let deepest = taps.len() - 1;
        let mut a = self.projections[deepest].forward(tape, bind, taps[deepest])?;
        for (i, block) in self.blocks.iter().enumerate() {
            if i < self.films.len() {
                a = self.film_modulate(tape, bind, a, cond, i)?;
            }
            a = block.forward(tape, bind, a)?;
            if let Some(j) = deepest.checked_sub(i + 1) {
                let skip = self.projections[j].forward(tape, bind, taps[j])?;
                a = tape.add(a, skip)?;
            }
        }

        let grid = tape.tokens_to_grid(a, g)?;
        let c = tape.conv2d(grid, bind.get(self.conv_w), Some(bind.get(self.conv_b)), 1, 1)?;
        let c = tape.gelu(c)?;
        let d1 = tape.conv_transpose2d(
            c,
            bind.get(self.deconv1_w),
            Some(bind.get(self.deconv1_b)),
            4,
            0,
        )?;
        let d1 = tape.gelu(d1)?;
        tape.conv_transpose2d(
            d1,
            bind.get(self.deconv2_w),
            Some(bind.get(self.deconv2_b)),
            4,
            0,
        )
    }
}
