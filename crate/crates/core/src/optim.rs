//! AdamW with decoupled weight decay and a cosine-annealed learning rate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr0: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Cosine floor; the schedule ends here at `total_steps`.
    pub eta_min: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr0: 0.003,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            eta_min: 0.0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(Error::Config("optim: lr0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("optim: betas must lie in [0, 1)".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("optim: eps must be positive".into()));
        }
        Ok(())
    }
}

/// `lr(t) = eta_min + (lr0 − eta_min)·(1 + cos(π·t/T))/2` for `0 ≤ t ≤ T`.
pub fn cosine_lr(step: u32, total_steps: u32, cfg: &OptimConfig) -> Result<f64> {
    if step > total_steps || total_steps == 0 {
        return Err(Error::Contract(alloc::format!(
            "cosine_lr: step {step} outside [0, {total_steps}]"
        )));
    }
    let frac = step as f64 / total_steps as f64;
    Ok(cfg.eta_min + (cfg.lr0 - cfg.eta_min) * (1.0 + (core::f64::consts::PI * frac).cos()) / 2.0)
}

/// Optimizer state: bias-corrected first/second moments for each updated
/// parameter, in a fixed order.
pub struct AdamW<E> {
    pub cfg: OptimConfig,
    /// Parameters this optimizer updates (trainable set, minus the mirror in
    /// disrupted mode).
    updated: Vec<ParamId>,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    /// Number of applied steps (bias correction exponent).
    pub t: u32,
}

impl<E: Element> AdamW<E> {
    pub fn new(cfg: OptimConfig, store: &ParamStore<E>, updated: Vec<ParamId>) -> Self {
        let m = updated
            .iter()
            .map(|&id| vec![E::zero(); store.get(id).numel()])
            .collect();
        let v = updated
            .iter()
            .map(|&id| vec![E::zero(); store.get(id).numel()])
            .collect();
        AdamW {
            cfg,
            updated,
            m,
            v,
            t: 0,
        }
    }

    pub fn updated_ids(&self) -> &[ParamId] {
        &self.updated
    }

    /// Moment buffers by position, for checkpointing.
    pub fn moments(&self, i: usize) -> (&[E], &[E]) {
        (&self.m[i], &self.v[i])
    }

    pub fn load_moments(&mut self, i: usize, m: Vec<E>, v: Vec<E>) {
        assert_eq!(m.len(), self.m[i].len());
        assert_eq!(v.len(), self.v[i].len());
        self.m[i] = m;
        self.v[i] = v;
    }

    /// One update over the gradient slices aligned with `updated_ids`.
    /// Decoupled decay shrinks the parameter before the moment update is
    /// applied; frozen parameters are never part of the updated set.
    pub fn step(
        &mut self,
        store: &mut ParamStore<E>,
        grads: &[Option<&[E]>],
        lr: f64,
    ) -> Result<()> {
        assert_eq!(grads.len(), self.updated.len());
        self.t += 1;
        let b1 = E::from_f64(self.cfg.beta1);
        let b2 = E::from_f64(self.cfg.beta2);
        let one = E::one();
        let eps = E::from_f64(self.cfg.eps);
        let lr_e = E::from_f64(lr);
        let decay = E::from_f64(lr * self.cfg.weight_decay);
        let corr1 = E::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let corr2 = E::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (i, &id) in self.updated.iter().enumerate() {
            let g = grads[i].ok_or_else(|| {
                Error::Contract(alloc::format!(
                    "missing gradient for {}",
                    store.get(id).name
                ))
            })?;
            if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(non_finite_msg(store, id, bad)));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = store.data_mut(id);
            for j in 0..p.len() {
                p[j] = p[j] - decay * p[j];
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / corr1;
                let vhat = v[j] / corr2;
                p[j] = p[j] - lr_e * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

fn non_finite_msg<E: Element>(store: &ParamStore<E>, id: ParamId, idx: usize) -> String {
    alloc::format!(
        "gradient of {} at element {idx} — aborting before the update",
        store.get(id).name
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        let cfg = OptimConfig::default();
        assert_eq!(cosine_lr(0, 100, &cfg).unwrap(), 0.003);
        let end = cosine_lr(100, 100, &cfg).unwrap();
        assert!(end.abs() < 1e-18, "eta_min endpoint, got {end}");
        let mid = cosine_lr(50, 100, &cfg).unwrap();
        assert!((mid - (0.003 + 0.0) / 2.0).abs() < 1e-12);
        assert!(cosine_lr(101, 100, &cfg).is_err());
    }

    #[test]
    fn zero_grads_without_decay_leave_params_unchanged() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("p".into(), &[3], vec![1.0, -2.0, 0.5], false);
        let cfg = OptimConfig {
            weight_decay: 0.0,
            ..OptimConfig::default()
        };
        let mut opt = AdamW::new(cfg, &store, vec![id]);
        let zeros = vec![0.0f64; 3];
        opt.step(&mut store, &[Some(&zeros)], 0.003).unwrap();
        assert_eq!(store.get(id).data.as_slice(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_step_matches_hand_computed_update() {
        // p0 = 1, g = 0.5, lr = 0.1, wd = 0.01, β = (0.9, 0.999), eps = 1e-8:
        // decay:  p ← 1 − 0.1·0.01·1          = 0.999
        // m = 0.05, v = 2.5e-4, m̂ = 0.5, v̂ = 0.25
        // p ← 0.999 − 0.1·0.5/(0.5 + 1e-8)    = 0.899000001
        let mut store = ParamStore::<f64>::new();
        let id = store.add("p".into(), &[1], vec![1.0], false);
        let cfg = OptimConfig {
            lr0: 0.1,
            weight_decay: 0.01,
            ..OptimConfig::default()
        };
        let mut opt = AdamW::new(cfg, &store, vec![id]);
        let g = vec![0.5f64];
        opt.step(&mut store, &[Some(&g)], 0.1).unwrap();
        let expect = 0.999 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        let got = store.get(id).data[0];
        assert!((got - expect).abs() < 1e-7, "{got} vs {expect}");
    }

    #[test]
    fn nan_gradient_aborts_with_diagnostics() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w".into(), &[2], vec![1.0, 2.0], false);
        let mut opt = AdamW::new(OptimConfig::default(), &store, vec![id]);
        let g = vec![0.0f32, f32::NAN];
        let err = opt.step(&mut store, &[Some(&g)], 0.003).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
