//! Named parameters and the small set of layers shared by the encoders and
//! the decoder.
//!
//! Parameters live in a [`ParamStore`] in construction order; a forward pass
//! first [`bind`](ParamStore::bind)s every parameter onto the tape (one leaf
//! per parameter, shared across batch elements) and layers address them
//! through the resulting [`Binding`]. Frozen parameters are bound without
//! `requires_grad`, so they can never receive a gradient and the optimizer
//! never sees them.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// A named tensor with a frozen flag. Frozen parameters are bitwise-stable
/// across any number of optimizer steps.
#[derive(Debug, Clone)]
pub struct Parameter<E> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Arc<Vec<E>>,
    pub frozen: bool,
}

impl<E: Element> Parameter<E> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// All parameters of one model, in construction order.
#[derive(Debug, Default)]
pub struct ParamStore<E> {
    items: Vec<Parameter<E>>,
}

/// Tape leaves for every parameter of a store, built once per forward tape.
pub struct Binding {
    ids: Vec<TensorId>,
}

impl Binding {
    #[inline]
    pub fn get(&self, p: ParamId) -> TensorId {
        self.ids[p.0]
    }
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore { items: Vec::new() }
    }

    pub fn add(&mut self, name: String, shape: &[usize], data: Vec<E>, frozen: bool) -> ParamId {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "parameter {name}: shape/data mismatch"
        );
        assert!(
            self.items.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.items.len());
        self.items.push(Parameter {
            name,
            shape: shape.to_vec(),
            data: Arc::new(data),
            frozen,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<E> {
        &self.items[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.items.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<E>)> {
        self.items.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Replace the values of a parameter (optimizer step, mirror redraw,
    /// checkpoint load). The shape is fixed at construction.
    pub fn set_data(&mut self, id: ParamId, data: Vec<E>) {
        let p = &mut self.items[id.0];
        assert_eq!(data.len(), p.data.len(), "parameter {}: length change", p.name);
        p.data = Arc::new(data);
    }

    /// Mutable access to a parameter's values without reallocating when the
    /// buffer is unshared (i.e. no live tape references it).
    pub fn data_mut(&mut self, id: ParamId) -> &mut Vec<E> {
        Arc::make_mut(&mut self.items[id.0].data)
    }

    pub fn ids_trainable(&self) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| !p.frozen)
            .map(|(id, _)| id)
            .collect()
    }

    /// Total scalar count over non-frozen parameters.
    pub fn count_learnable(&self) -> usize {
        self.items
            .iter()
            .filter(|p| !p.frozen)
            .map(|p| p.numel())
            .sum()
    }

    /// Insert every parameter as a tape leaf (frozen ones without grad).
    pub fn bind(&self, tape: &mut Tape<E>) -> Result<Binding> {
        self.bind_with(tape, &[])
    }

    /// Like [`bind`](Self::bind), but the listed parameters are replaced by
    /// tensors already on the tape (the gradient checker substitutes its own
    /// leaves for the trainable set).
    pub fn bind_with(
        &self,
        tape: &mut Tape<E>,
        overrides: &[(ParamId, TensorId)],
    ) -> Result<Binding> {
        let ids = self
            .items
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if let Some((_, t)) = overrides.iter().find(|(pid, _)| pid.0 == i) {
                    Ok(*t)
                } else {
                    tape.leaf(&p.shape, Arc::clone(&p.data), !p.frozen)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Binding { ids })
    }
}

/// Seeded initializer; draws are f64 and cast, so a model built at f32 and
/// one built at f64 from the same seed carry identical weights.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Init { rng }
    }

    pub fn normal<E: Element>(&mut self, n: usize, sigma: f64) -> Vec<E> {
        let dist = Normal::new(0.0f64, sigma).expect("sigma > 0");
        (0..n)
            .map(|_| E::from_f64(dist.sample(&mut self.rng)))
            .collect()
    }

    pub fn fill<E: Element>(&mut self, n: usize, v: f64) -> Vec<E> {
        alloc::vec![E::from_f64(v); n]
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Weight scale selection for linear layers.
#[derive(Debug, Clone, Copy)]
pub enum WeightScale {
    /// Fixed standard deviation (embedding-style init).
    Fixed(f64),
    /// 1/√fan_in, which keeps per-layer gain near one so the conditioning
    /// signal survives a deep randomly initialized encoder.
    FanIn,
    /// gain/√fan_in for paths that should dominate their addition site.
    FanInScaled(f64),
}

impl WeightScale {
    fn sigma(self, fan_in: usize) -> f64 {
        match self {
            WeightScale::Fixed(s) => s,
            WeightScale::FanIn => 1.0 / (fan_in as f64).sqrt(),
            WeightScale::FanInScaled(gain) => gain / (fan_in as f64).sqrt(),
        }
    }
}

/// y = x·Wᵀ + b with W stored [out×in].
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    #[allow(clippy::too_many_arguments)]
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        scale: WeightScale,
        bias: bool,
        frozen: bool,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            &[out_dim, in_dim],
            init.normal(out_dim * in_dim, scale.sigma(in_dim)),
            frozen,
        );
        let b = bias.then(|| {
            store.add(
                format!("{name}.b"),
                &[out_dim],
                init.fill(out_dim, 0.0),
                frozen,
            )
        });
        Linear { w, b }
    }

    pub fn forward<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        x: TensorId,
    ) -> Result<TensorId> {
        let y = tape.matmul_tb(x, bind.get(self.w))?;
        match self.b {
            Some(b) => tape.add_row_vec(y, bind.get(b)),
            None => Ok(y),
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        init: &mut Init,
        name: &str,
        dim: usize,
        frozen: bool,
    ) -> Self {
        let gamma = store.add(format!("{name}.g"), &[dim], init.fill(dim, 1.0), frozen);
        let beta = store.add(format!("{name}.b"), &[dim], init.fill(dim, 0.0), frozen);
        LayerNorm { gamma, beta }
    }

    pub fn forward<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        x: TensorId,
    ) -> Result<TensorId> {
        tape.layer_norm(x, bind.get(self.gamma), bind.get(self.beta), LAYER_NORM_EPS)
    }
}

/// Pre-norm transformer block: x + attn(ln1(x)), then x + mlp(ln2(x)).
#[derive(Debug, Clone)]
pub struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    fc: Linear,
    proj: Linear,
    heads: usize,
    causal: bool,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        init: &mut Init,
        name: &str,
        width: usize,
        heads: usize,
        mlp_dim: usize,
        scale: WeightScale,
        causal: bool,
        frozen: bool,
    ) -> Self {
        assert!(heads > 0 && width % heads == 0, "{name}: width/heads mismatch");
        let lin = |store: &mut ParamStore<E>, init: &mut Init, part: &str, i: usize, o: usize| {
            Linear::init(store, init, &format!("{name}.{part}"), i, o, scale, true, frozen)
        };
        Block {
            ln1: LayerNorm::init(store, init, &format!("{name}.ln1"), width, frozen),
            q: lin(store, init, "attn.q", width, width),
            k: lin(store, init, "attn.k", width, width),
            v: lin(store, init, "attn.v", width, width),
            o: lin(store, init, "attn.o", width, width),
            ln2: LayerNorm::init(store, init, &format!("{name}.ln2"), width, frozen),
            fc: lin(store, init, "mlp.fc", width, mlp_dim),
            proj: lin(store, init, "mlp.proj", mlp_dim, width),
            heads,
            causal,
        }
    }

    pub fn forward<E: Element>(
        &self,
        tape: &mut Tape<E>,
        bind: &Binding,
        x: TensorId,
    ) -> Result<TensorId> {
        let h = self.ln1.forward(tape, bind, x)?;
        let q = self.q.forward(tape, bind, h)?;
        let k = self.k.forward(tape, bind, h)?;
        let v = self.v.forward(tape, bind, h)?;
        let ctx = tape.attention(q, k, v, self.heads, self.causal)?;
        let att = self.o.forward(tape, bind, ctx)?;
        let x = tape.add(x, att)?;

        let h = self.ln2.forward(tape, bind, x)?;
        let h = self.fc.forward(tape, bind, h)?;
        let h = tape.gelu(h)?;
        let h = self.proj.forward(tape, bind, h)?;
        tape.add(x, h)
    }
}

/// Errors for configuration checks shared by the encoder/decoder configs.
pub fn config_check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.into()))
    }
}
