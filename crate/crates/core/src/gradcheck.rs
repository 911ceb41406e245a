//! Central-difference gradient checking.
//!
//! The checker re-evaluates a taped scalar function in 64-bit mode and
//! compares analytic gradients against `(f(x+h) − f(x−h)) / 2h` per leaf
//! coordinate. Large leaves can be subsampled (seeded, reproducible); small
//! ones are checked exhaustively. [`suite`] bundles the per-primitive checks
//! and the end-to-end model loss check used by the `gradcheck` subcommand.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};
#[allow(unused_imports)]
use num_traits::Float;

/// One differentiable input of the function under test.
#[derive(Clone)]
pub struct Leaf {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Leaf {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        Leaf {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LeafReport {
    pub name: String,
    pub checked_coords: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub value: f64,
    pub leaves: Vec<LeafReport>,
    pub pass: bool,
}

impl CheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.leaves.iter().fold(0.0, |m, l| m.max(l.max_rel_err))
    }
}

/// Settings for one gradient check run.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    /// Cap on coordinates checked per leaf (`None` = all).
    pub max_coords: Option<usize>,
    /// Seed for coordinate subsampling.
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-3,
            tolerance: 1e-3,
            max_coords: None,
            seed: 0,
        }
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-6 {
        // Both effectively zero: compare absolutely on the same scale.
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

impl GradCheck {
    /// Check `f` at the given leaves. `f` must be deterministic: it is
    /// evaluated twice at the base point and a bitwise mismatch is a
    /// contract error.
    pub fn run<F>(&self, name: &str, leaves: &[Leaf], f: F) -> Result<CheckReport>
    where
        F: Fn(&mut Tape<f64>, &[TensorId]) -> Result<TensorId>,
    {
        let eval = |data: &[Vec<f64>]| -> Result<f64> {
            let mut tape = Tape::<f64>::new();
            tape.set_check_finite(true);
            let ids = leaves
                .iter()
                .zip(data)
                .map(|(l, d)| tape.leaf(&l.shape, Arc::new(d.clone()), true))
                .collect::<Result<Vec<_>>>()?;
            let root = f(&mut tape, &ids)?;
            if tape.shape(root).iter().product::<usize>() != 1 {
                return Err(Error::Contract(format!(
                    "gradcheck function '{name}' must return a scalar"
                )));
            }
            Ok(tape.scalar_value(root))
        };

        let base: Vec<Vec<f64>> = leaves.iter().map(|l| l.data.clone()).collect();
        let v0 = eval(&base)?;
        let v1 = eval(&base)?;
        if v0.to_bits() != v1.to_bits() {
            return Err(Error::Contract(format!(
                "gradcheck function '{name}' is not deterministic: {v0} vs {v1}"
            )));
        }

        // Analytic gradients at the base point.
        let mut tape = Tape::<f64>::new();
        tape.set_check_finite(true);
        let ids = leaves
            .iter()
            .map(|l| tape.leaf(&l.shape, Arc::new(l.data.clone()), true))
            .collect::<Result<Vec<_>>>()?;
        let root = f(&mut tape, &ids)?;
        tape.backward(root)?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut reports = Vec::with_capacity(leaves.len());
        let mut scratch = base.clone();
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = tape.grad(ids[li]).unwrap_or(&[]);
            let n = leaf.data.len();
            let coords: Vec<usize> = match self.max_coords {
                Some(m) if m < n => (0..m).map(|_| rng.random_range(0..n)).collect(),
                _ => (0..n).collect(),
            };
            let mut max_err = 0.0f64;
            for &c in &coords {
                let orig = scratch[li][c];
                scratch[li][c] = orig + self.step;
                let fp = eval(&scratch)?;
                scratch[li][c] = orig - self.step;
                let fm = eval(&scratch)?;
                scratch[li][c] = orig;
                let numeric = (fp - fm) / (2.0 * self.step);
                let a = analytic.get(c).copied().unwrap_or(0.0);
                max_err = max_err.max(rel_err(a, numeric));
            }
            reports.push(LeafReport {
                name: leaf.name.clone(),
                checked_coords: coords.len(),
                max_rel_err: max_err,
                pass: max_err <= self.tolerance,
            });
        }
        let pass = reports.iter().all(|r| r.pass);
        Ok(CheckReport {
            name: name.into(),
            value: v0,
            leaves: reports,
            pass,
        })
    }
}

/// Uniform values in [lo, hi) for test inputs.
pub fn uniform_leaf(rng: &mut ChaCha8Rng, name: &str, shape: &[usize], lo: f64, hi: f64) -> Leaf {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Leaf::new(name, shape, data)
}

/// Report of the complete finite-difference suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

/// Run the whole 64-bit suite: every tape primitive on a few random shapes,
/// the loss, and the end-to-end toy-model loss with respect to every
/// trainable leaf. Tolerance 1e-3, central differences with step 1e-3.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    primitive_checks(&mut rng, &mut checks)?;
    checks.push(silog_check(&mut rng)?);
    checks.push(end_to_end_check(seed)?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport { checks, pass })
}

fn weighted_readout(
    tape: &mut Tape<f64>,
    x: TensorId,
    seed: u64,
) -> Result<TensorId> {
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wt = tape.constant(&shape, w)?;
    let p = tape.mul(x, wt)?;
    tape.sum(p)
}

fn primitive_checks(rng: &mut ChaCha8Rng, out: &mut Vec<CheckReport>) -> Result<()> {
    let gc = GradCheck {
        max_coords: Some(32),
        ..GradCheck::default()
    };
    const ROUNDS: u64 = 3;
    for round in 0..ROUNDS {
        let a = uniform_leaf(rng, "a", &[3, 4], -1.0, 1.0);
        let b = uniform_leaf(rng, "b", &[3, 4], -1.0, 1.0);
        let v = uniform_leaf(rng, "v", &[4], -1.0, 1.0);
        let pos = uniform_leaf(rng, "x", &[3, 4], 0.3, 3.0);
        let m_kn = uniform_leaf(rng, "b", &[4, 5], -1.0, 1.0);
        let m_nk = uniform_leaf(rng, "b", &[5, 4], -1.0, 1.0);

        out.push(gc.run("add", &[a.clone(), b.clone()], |t, i| {
            let y = t.add(i[0], i[1])?;
            weighted_readout(t, y, round)
        })?);
        out.push(gc.run("sub", &[a.clone(), b.clone()], |t, i| {
            let y = t.sub(i[0], i[1])?;
            weighted_readout(t, y, round + 10)
        })?);
        out.push(gc.run("mul", &[a.clone(), b.clone()], |t, i| {
            let y = t.mul(i[0], i[1])?;
            weighted_readout(t, y, round + 20)
        })?);
        out.push(gc.run("scale", &[a.clone()], |t, i| {
            let y = t.scale(i[0], -0.37)?;
            weighted_readout(t, y, round + 30)
        })?);
        out.push(gc.run("add_row_vec", &[a.clone(), v.clone()], |t, i| {
            let y = t.add_row_vec(i[0], i[1])?;
            weighted_readout(t, y, round + 40)
        })?);
        out.push(gc.run("mul_row_vec", &[a.clone(), v.clone()], |t, i| {
            let y = t.mul_row_vec(i[0], i[1])?;
            weighted_readout(t, y, round + 50)
        })?);
        out.push(gc.run("matmul", &[a.clone(), m_kn], |t, i| {
            let y = t.matmul(i[0], i[1])?;
            weighted_readout(t, y, round + 60)
        })?);
        out.push(gc.run("matmul_tb", &[a.clone(), m_nk], |t, i| {
            let y = t.matmul_tb(i[0], i[1])?;
            weighted_readout(t, y, round + 70)
        })?);
        out.push(gc.run("softmax", &[a.clone()], |t, i| {
            let y = t.softmax(i[0])?;
            weighted_readout(t, y, round + 80)
        })?);
        let gm = uniform_leaf(rng, "gamma", &[4], 0.5, 1.5);
        let bt = uniform_leaf(rng, "beta", &[4], -0.5, 0.5);
        out.push(gc.run("layer_norm", &[a.clone(), gm, bt], |t, i| {
            let y = t.layer_norm(i[0], i[1], i[2], 1e-5)?;
            weighted_readout(t, y, round + 90)
        })?);
        out.push(gc.run("gelu", &[a.clone()], |t, i| {
            let y = t.gelu(i[0])?;
            weighted_readout(t, y, round + 100)
        })?);
        out.push(gc.run("softplus", &[a.clone()], |t, i| {
            let y = t.softplus(i[0])?;
            weighted_readout(t, y, round + 110)
        })?);
        out.push(gc.run("relu", &[pos.clone()], |t, i| {
            let y = t.relu(i[0])?;
            weighted_readout(t, y, round + 120)
        })?);
        out.push(gc.run("ln", &[pos.clone()], |t, i| {
            let y = t.ln(i[0])?;
            weighted_readout(t, y, round + 130)
        })?);
        out.push(gc.run("sqrt", &[pos.clone()], |t, i| {
            let y = t.sqrt(i[0])?;
            weighted_readout(t, y, round + 140)
        })?);
        out.push(gc.run("sum_mean", &[a.clone()], |t, i| {
            let s = t.mean(i[0])?;
            t.scale(s, 2.5)
        })?);

        let x3 = uniform_leaf(rng, "x", &[2, 5, 5], -1.0, 1.0);
        let w3 = uniform_leaf(rng, "w", &[3, 2, 3, 3], -1.0, 1.0);
        let bias3 = uniform_leaf(rng, "bias", &[3], -0.5, 0.5);
        out.push(gc.run("conv2d", &[x3.clone(), w3, bias3.clone()], |t, i| {
            let y = t.conv2d(i[0], i[1], Some(i[2]), 1, 1)?;
            weighted_readout(t, y, round + 150)
        })?);
        let wt3 = uniform_leaf(rng, "w", &[2, 3, 4, 4], -1.0, 1.0);
        out.push(gc.run("conv_transpose2d", &[x3.clone(), wt3, bias3], |t, i| {
            let y = t.conv_transpose2d(i[0], i[1], Some(i[2]), 4, 0)?;
            weighted_readout(t, y, round + 160)
        })?);
        out.push(gc.run("bilinear_resize", &[x3.clone()], |t, i| {
            let y = t.bilinear_resize(i[0], 8, 3)?;
            weighted_readout(t, y, round + 170)
        })?);
        out.push(gc.run("grid_layout", &[x3], |t, i| {
            let tok = t.grid_to_tokens(i[0])?;
            let sl = t.slice_rows(tok, 2, 20)?;
            weighted_readout(t, sl, round + 180)
        })?);
        let q = uniform_leaf(rng, "q", &[5, 6], -1.0, 1.0);
        let k = uniform_leaf(rng, "k", &[5, 6], -1.0, 1.0);
        let vv = uniform_leaf(rng, "v", &[5, 6], -1.0, 1.0);
        let causal = round % 2 == 1;
        out.push(gc.run("attention", &[q, k, vv], move |t, i| {
            let y = t.attention(i[0], i[1], i[2], 2, causal)?;
            weighted_readout(t, y, round + 190)
        })?);
        let tok = uniform_leaf(rng, "tok", &[9, 3], -1.0, 1.0);
        out.push(gc.run("tokens_to_grid", &[tok], |t, i| {
            let y = t.tokens_to_grid(i[0], 3)?;
            weighted_readout(t, y, round + 200)
        })?);
        let p1 = uniform_leaf(rng, "p1", &[2, 3], -1.0, 1.0);
        let p2 = uniform_leaf(rng, "p2", &[4, 3], -1.0, 1.0);
        out.push(gc.run("concat_reshape", &[p1, p2], |t, i| {
            let cat = t.concat_rows(&[i[0], i[1]])?;
            let rs = t.reshape(cat, &[18])?;
            weighted_readout(t, rs, round + 210)
        })?);
    }
    Ok(())
}

fn silog_check(rng: &mut ChaCha8Rng) -> Result<CheckReport> {
    use crate::depth::DepthMap;
    use crate::loss::{silog_loss, LossConfig};
    let gt = DepthMap::from_data(4, 4, (0..16).map(|v| 1.0 + 0.5 * v as f32).collect());
    let leaf = uniform_leaf(rng, "pred", &[4, 4], 0.5, 9.0);
    let cfg = LossConfig::default();
    GradCheck::default().run("silog_loss", &[leaf], |t, i| silog_loss(t, i[0], &gt, &cfg))
}

/// End-to-end: d(loss)/d(every trainable leaf) of the toy model on one
/// synthetic frame, in 64-bit, with subsampled coordinates.
fn end_to_end_check(seed: u64) -> Result<CheckReport> {
    use crate::loss::{silog_loss, LossConfig};
    use crate::model::{DepthModel, ModelConfig};
    use crate::synth::{default_scene, make_sequence, SceneParams};

    let model = DepthModel::<f64>::new(ModelConfig::toy(), seed)?;
    let (frames, _) = make_sequence(&default_scene(&SceneParams {
        frames: 1,
        ..SceneParams::default()
    }))?;
    let frame = &frames[0];
    let loss_cfg = LossConfig::default();

    let trainable = model.store.ids_trainable();
    let leaves: Vec<Leaf> = trainable
        .iter()
        .map(|&id| {
            let p = model.store.get(id);
            Leaf::new(p.name.clone(), &p.shape, p.data.to_vec())
        })
        .collect();

    let gc = GradCheck {
        max_coords: Some(4),
        seed,
        ..GradCheck::default()
    };
    gc.run("end_to_end_toy_loss", &leaves, |tape, ids| {
        let overrides: Vec<_> = trainable.iter().copied().zip(ids.iter().copied()).collect();
        let bind = model.store.bind_with(tape, &overrides)?;
        let logits = model.forward(tape, &bind, &frame.rgb)?;
        let pred = model.predict_depth(tape, logits, frame.depth.height, frame.depth.width)?;
        silog_loss(tape, pred, &frame.depth, &loss_cfg)
    })
}
