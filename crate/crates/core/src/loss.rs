//! Masked scale-invariant log-depth loss:
//! `α · sqrt( mean(g²) − λ·(mean g)² )` with `g = ln(pred) − ln(gt)` over
//! valid pixels (gt inside the configured depth bounds).

use alloc::vec::Vec;

use crate::depth::DepthMap;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Scale-invariance weight λ ∈ [0, 1].
    pub lambda: f64,
    /// Output scale α > 0.
    pub alpha: f64,
    /// Ground-truth pixels outside [min_depth, max_depth] are masked out.
    pub min_depth: f64,
    pub max_depth: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.85,
            alpha: 10.0,
            min_depth: 1e-3,
            max_depth: 80.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("loss: lambda must lie in [0, 1]".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config("loss: alpha must be positive".into()));
        }
        if !(self.min_depth > 0.0 && self.min_depth < self.max_depth) {
            return Err(Error::Config("loss: need 0 < min_depth < max_depth".into()));
        }
        Ok(())
    }

    /// Validity of one ground-truth pixel under this config.
    #[inline]
    pub fn valid(&self, gt: f32, mask: bool) -> bool {
        mask && gt as f64 >= self.min_depth && gt as f64 <= self.max_depth
    }
}

/// Differentiable loss between a predicted depth tensor on the tape (shape
/// `[h×w]` or `[1×h×w]`) and a ground-truth map. Masked-out pixels
/// contribute nothing to value or gradient.
pub fn silog_loss<E: Element>(
    tape: &mut Tape<E>,
    pred: TensorId,
    gt: &DepthMap,
    cfg: &LossConfig,
) -> Result<TensorId> {
    let n = gt.data.len();
    if tape.data(pred).len() != n {
        return Err(Error::dim(
            "silog_loss",
            alloc::format!(
                "prediction has {} elements, ground truth {}",
                tape.data(pred).len(),
                n
            ),
        ));
    }
    for &v in tape.data(pred) {
        if !(v > E::zero()) {
            return Err(Error::Contract(
                "silog_loss: predictions must be strictly positive (softplus upstream)".into(),
            ));
        }
    }
    let mut mask = Vec::with_capacity(n);
    let mut ln_gt = Vec::with_capacity(n);
    let mut count = 0usize;
    for i in 0..n {
        if cfg.valid(gt.data[i], gt.mask[i]) {
            mask.push(E::one());
            ln_gt.push(E::from_f64((gt.data[i] as f64).ln()));
            count += 1;
        } else {
            mask.push(E::zero());
            ln_gt.push(E::zero());
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask("silog_loss"));
    }

    let flat = tape.reshape(pred, &[n])?;
    let ln_pred = tape.ln(flat)?;
    let ln_gt = tape.constant(&[n], ln_gt)?;
    let diff = tape.sub(ln_pred, ln_gt)?;
    let mask = tape.constant(&[n], mask)?;
    let g = tape.mul(diff, mask)?;

    // mean(g²) − λ·(mean g)² computed as Var(g) + (1−λ)·(mean g)² — the same
    // quantity, but centering g first avoids the cancellation that breaks
    // λ=1 scale invariance in 32-bit arithmetic.
    let inv_t = E::from_f64(1.0 / count as f64);
    let sum_g = tape.sum(g)?;
    let mean_g = tape.scale(sum_g, inv_t)?;
    let neg_mean = tape.scale(mean_g, -E::one())?;
    let g_col = tape.reshape(g, &[n, 1])?;
    let dev = tape.add_row_vec(g_col, neg_mean)?;
    let mask_col = tape.reshape(mask, &[n, 1])?;
    let dev = tape.mul(dev, mask_col)?;
    let dev_sq = tape.mul(dev, dev)?;
    let sum_sq = tape.sum(dev_sq)?;
    let variance = tape.scale(sum_sq, inv_t)?;
    let mean_sq = tape.mul(mean_g, mean_g)?;
    let extra = tape.scale(mean_sq, E::from_f64(1.0 - cfg.lambda))?;
    let total = tape.add(variance, extra)?;
    // non-negative for λ ≤ 1; the clamp absorbs round-off at pred == gt
    let clamped = tape.relu(total)?;
    let root = tape.sqrt(clamped)?;
    tape.scale(root, E::from_f64(cfg.alpha))
}
