//! Central-difference verification of every tape primitive on randomized
//! small shapes, plus the conv/conv-transpose adjoint identity.

use std::sync::Arc;

use mirrordepth_core::gradcheck::{uniform_leaf, GradCheck, Leaf};
use mirrordepth_core::tensor::{Tape, TensorId};
use mirrordepth_core::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHAPES_PER_PRIMITIVE: usize = 20;

/// Weighted scalar readout so the check exercises non-uniform upstream
/// gradients, not just d(sum)/dx.
fn weighted_sum(tape: &mut Tape<f64>, x: TensorId, seed: u64) -> Result<TensorId> {
    let n: usize = tape.shape(x).iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let wt = tape.constant(&tape.shape(x).to_vec(), w)?;
    let p = tape.mul(x, wt)?;
    tape.sum(p)
}

fn check<F>(name: &str, leaves: &[Leaf], seed: u64, f: F)
where
    F: Fn(&mut Tape<f64>, &[TensorId]) -> Result<TensorId>,
{
    let gc = GradCheck {
        step: 1e-3,
        tolerance: 1e-3,
        max_coords: Some(48),
        seed,
        ..Default::default()
    };
    let report = gc.run(name, leaves, f).unwrap();
    assert!(
        report.pass,
        "{name}: max rel err {:.3e}",
        report.max_rel_err()
    );
}

#[test]
fn matmul_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let (m, k, n) = (
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng.random_range(1..6),
        );
        let a = uniform_leaf(&mut rng, "a", &[m, k], -1.0, 1.0);
        let b = uniform_leaf(&mut rng, "b", &[k, n], -1.0, 1.0);
        check("matmul", &[a, b], i as u64, |t, ids| {
            let y = t.matmul(ids[0], ids[1])?;
            weighted_sum(t, y, 100 + i as u64)
        });
    }
}

#[test]
fn matmul_grad_of_sum_is_ones_times_bt() {
    // 5×7 · 7×3: d(sum)/dA = ones(5,3)·Bᵀ, cross-checked against the
    // finite-difference path by the other matmul tests.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut tape = Tape::<f64>::new();
    let at = tape.leaf(&[5, 7], Arc::new(a), true).unwrap();
    let bt = tape.leaf(&[7, 3], Arc::new(b.clone()), true).unwrap();
    let y = tape.matmul(at, bt).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s).unwrap();
    let ga = tape.grad(at).unwrap();
    for r in 0..5 {
        for c in 0..7 {
            let expect: f64 = (0..3).map(|j| b[c * 3 + j]).sum();
            assert!((ga[r * 7 + c] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_tb_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let (m, k, n) = (
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng.random_range(1..6),
        );
        let a = uniform_leaf(&mut rng, "a", &[m, k], -1.0, 1.0);
        let b = uniform_leaf(&mut rng, "b", &[n, k], -1.0, 1.0);
        check("matmul_tb", &[a, b], i as u64, |t, ids| {
            let y = t.matmul_tb(ids[0], ids[1])?;
            weighted_sum(t, y, 200 + i as u64)
        });
    }
}

#[test]
fn conv2d_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let k = rng.random_range(1..4);
        let stride = rng.random_range(1..3);
        let padding = rng.random_range(0..2);
        let h = rng.random_range(k.max(2)..7);
        let w = rng.random_range(k.max(2)..7);
        let x = uniform_leaf(&mut rng, "x", &[ci, h, w], -1.0, 1.0);
        let wt = uniform_leaf(&mut rng, "w", &[co, ci, k, k], -1.0, 1.0);
        let bias = uniform_leaf(&mut rng, "b", &[co], -0.5, 0.5);
        check("conv2d", &[x, wt, bias], i as u64, move |t, ids| {
            let y = t.conv2d(ids[0], ids[1], Some(ids[2]), stride, padding)?;
            weighted_sum(t, y, 300 + i as u64)
        });
    }
}

#[test]
fn conv_transpose2d_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let k = rng.random_range(1..4);
        let stride = rng.random_range(1..3);
        let padding = if (k as i64 - 1) > 0 { rng.random_range(0..((k - 1).min(1) + 1)) } else { 0 };
        let h = rng.random_range(2..6);
        let w = rng.random_range(2..6);
        let x = uniform_leaf(&mut rng, "x", &[ci, h, w], -1.0, 1.0);
        let wt = uniform_leaf(&mut rng, "w", &[ci, co, k, k], -1.0, 1.0);
        let bias = uniform_leaf(&mut rng, "b", &[co], -0.5, 0.5);
        check("conv_transpose2d", &[x, wt, bias], i as u64, move |t, ids| {
            let y = t.conv_transpose2d(ids[0], ids[1], Some(ids[2]), stride, padding)?;
            weighted_sum(t, y, 400 + i as u64)
        });
    }
}

#[test]
fn conv_and_transpose_are_adjoint() {
    // ⟨conv2d(x,w), y⟩ == ⟨x, conv_transpose2d(y,w)⟩ for matching stride
    // and padding.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..SHAPES_PER_PRIMITIVE {
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let k: usize = rng.random_range(1..4);
        let stride = rng.random_range(1..3);
        let mut padding = rng.random_range(0..k);
        // Pick output sizes first so the transposed size round-trips; the
        // pair are exact adjoints iff stride divides h + 2p − k.
        let oh: usize = rng.random_range(1..5);
        let ow: usize = rng.random_range(1..5);
        if (oh - 1) * stride + k <= 2 * padding || (ow - 1) * stride + k <= 2 * padding {
            padding = 0;
        }
        let h = (oh - 1) * stride + k - 2 * padding;
        let w = (ow - 1) * stride + k - 2 * padding;

        let mut tape = Tape::<f64>::new();
        let x: Vec<f64> = (0..ci * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wt: Vec<f64> = (0..co * ci * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xt = tape.constant(&[ci, h, w], x.clone()).unwrap();
        let wt_conv = tape.constant(&[co, ci, k, k], wt.clone()).unwrap();
        let fx = tape.conv2d(xt, wt_conv, None, stride, padding).unwrap();
        let oshape = tape.shape(fx).to_vec();
        let y: Vec<f64> = (0..oshape.iter().product::<usize>())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        let lhs: f64 = tape.data(fx).iter().zip(&y).map(|(a, b)| a * b).sum();

        let yt = tape.constant(&oshape, y).unwrap();
        // same weight buffer read in [in=co, out=ci] layout
        let wt_t = tape.constant(&[co, ci, k, k], wt).unwrap();
        let bx = tape.conv_transpose2d(yt, wt_t, None, stride, padding).unwrap();
        assert_eq!(tape.shape(bx), &[ci, h, w]);
        let rhs: f64 = tape.data(bx).iter().zip(&x).map(|(a, b)| a * b).sum();

        let denom = lhs.abs().max(rhs.abs()).max(1e-9);
        assert!(
            ((lhs - rhs) / denom).abs() < 1e-4,
            "adjoint mismatch: {lhs} vs {rhs}"
        );
    }
}

#[test]
fn layer_norm_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let r = rng.random_range(1..5);
        let d = rng.random_range(2..7);
        let x = uniform_leaf(&mut rng, "x", &[r, d], -2.0, 2.0);
        let gamma = uniform_leaf(&mut rng, "gamma", &[d], 0.5, 1.5);
        let beta = uniform_leaf(&mut rng, "beta", &[d], -0.5, 0.5);
        check("layer_norm", &[x, gamma, beta], i as u64, move |t, ids| {
            let y = t.layer_norm(ids[0], ids[1], ids[2], 1e-5)?;
            weighted_sum(t, y, 500 + i as u64)
        });
    }
}

#[test]
fn softmax_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let r = rng.random_range(1..5);
        let d = rng.random_range(2..7);
        let x = uniform_leaf(&mut rng, "x", &[r, d], -3.0, 3.0);
        check("softmax", &[x], i as u64, |t, ids| {
            let y = t.softmax(ids[0])?;
            weighted_sum(t, y, 600 + i as u64)
        });
    }
}

#[test]
fn attention_grad_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let heads = [1, 2][rng.random_range(0..2)];
        let dh = rng.random_range(1..4);
        let width = heads * dh;
        let n = rng.random_range(1..6);
        let causal = rng.random_range(0..2) == 1;
        let q = uniform_leaf(&mut rng, "q", &[n, width], -1.0, 1.0);
        let k = uniform_leaf(&mut rng, "k", &[n, width], -1.0, 1.0);
        let v = uniform_leaf(&mut rng, "v", &[n, width], -1.0, 1.0);
        check("attention", &[q, k, v], i as u64, move |t, ids| {
            let y = t.attention(ids[0], ids[1], ids[2], heads, causal)?;
            weighted_sum(t, y, 700 + i as u64)
        });
    }
}

#[test]
fn pointwise_grads_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let n = rng.random_range(1..12);
        let x = uniform_leaf(&mut rng, "x", &[n], -2.0, 2.0);
        check("gelu", &[x.clone()], i as u64, |t, ids| {
            let y = t.gelu(ids[0])?;
            weighted_sum(t, y, 800 + i as u64)
        });
        check("softplus", &[x], i as u64, |t, ids| {
            let y = t.softplus(ids[0])?;
            weighted_sum(t, y, 801 + i as u64)
        });
        // relu away from the kink, ln/sqrt on positive inputs
        let pos = uniform_leaf(&mut rng, "x", &[n], 0.2, 3.0);
        check("ln", &[pos.clone()], i as u64, |t, ids| {
            let y = t.ln(ids[0])?;
            weighted_sum(t, y, 802 + i as u64)
        });
        check("sqrt", &[pos.clone()], i as u64, |t, ids| {
            let y = t.sqrt(ids[0])?;
            weighted_sum(t, y, 803 + i as u64)
        });
        check("relu", &[pos], i as u64, |t, ids| {
            let y = t.relu(ids[0])?;
            weighted_sum(t, y, 804 + i as u64)
        });
    }
}

#[test]
fn elementwise_and_broadcast_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let r = rng.random_range(1..5);
        let d = rng.random_range(1..6);
        let a = uniform_leaf(&mut rng, "a", &[r, d], -1.0, 1.0);
        let b = uniform_leaf(&mut rng, "b", &[r, d], -1.0, 1.0);
        let v = uniform_leaf(&mut rng, "v", &[d], -1.0, 1.0);
        check("add", &[a.clone(), b.clone()], i as u64, |t, ids| {
            let y = t.add(ids[0], ids[1])?;
            weighted_sum(t, y, 900 + i as u64)
        });
        check("sub", &[a.clone(), b.clone()], i as u64, |t, ids| {
            let y = t.sub(ids[0], ids[1])?;
            weighted_sum(t, y, 901 + i as u64)
        });
        check("mul", &[a.clone(), b.clone()], i as u64, |t, ids| {
            let y = t.mul(ids[0], ids[1])?;
            weighted_sum(t, y, 902 + i as u64)
        });
        check("add_row_vec", &[a.clone(), v.clone()], i as u64, |t, ids| {
            let y = t.add_row_vec(ids[0], ids[1])?;
            weighted_sum(t, y, 903 + i as u64)
        });
        check("mul_row_vec", &[a.clone(), v], i as u64, |t, ids| {
            let y = t.mul_row_vec(ids[0], ids[1])?;
            weighted_sum(t, y, 904 + i as u64)
        });
        check("scale_mean", &[a], i as u64, |t, ids| {
            let y = t.scale(ids[0], -1.75)?;
            t.mean(y)
        });
    }
}

#[test]
fn structural_op_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..SHAPES_PER_PRIMITIVE {
        let g = rng.random_range(1..4);
        let c = rng.random_range(1..5);
        let tokens = uniform_leaf(&mut rng, "tok", &[g * g, c], -1.0, 1.0);
        check("tokens_to_grid", &[tokens], i as u64, move |t, ids| {
            let y = t.tokens_to_grid(ids[0], g)?;
            weighted_sum(t, y, 1000 + i as u64)
        });

        let ch = rng.random_range(1..4);
        let h = rng.random_range(2..6);
        let w = rng.random_range(2..6);
        let grid = uniform_leaf(&mut rng, "grid", &[ch, h, w], -1.0, 1.0);
        check("grid_to_tokens", &[grid.clone()], i as u64, |t, ids| {
            let y = t.grid_to_tokens(ids[0])?;
            weighted_sum(t, y, 1001 + i as u64)
        });

        let th = rng.random_range(1..9);
        let tw = rng.random_range(1..9);
        check("bilinear_resize", &[grid], i as u64, move |t, ids| {
            let y = t.bilinear_resize(ids[0], th, tw)?;
            weighted_sum(t, y, 1002 + i as u64)
        });

        let a = uniform_leaf(&mut rng, "a", &[2, c], -1.0, 1.0);
        let b = uniform_leaf(&mut rng, "b", &[3, c], -1.0, 1.0);
        check("concat_slice", &[a, b], i as u64, |t, ids| {
            let cat = t.concat_rows(&[ids[0], ids[1]])?;
            let sl = t.slice_rows(cat, 1, 3)?;
            let rs = t.reshape(sl, &[3 * t.shape(sl)[1]])?;
            weighted_sum(t, rs, 1003 + i as u64)
        });
    }
}

#[test]
fn corrupted_gradient_rule_fails_the_check() {
    // Detaching a dependency (rebuilding a value as a constant) produces an
    // analytic gradient of zero while finite differences see the true slope;
    // the checker must flag it.
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = uniform_leaf(&mut rng, "x", &[4], 0.5, 1.5);
    let gc = GradCheck::default();
    let report = gc
        .run("detached", &[x], |t, ids| {
            let data = t.data(ids[0]).to_vec();
            let detached = t.constant(&[4], data)?;
            t.sum(detached)
        })
        .unwrap();
    assert!(!report.pass, "detached gradient should fail the check");
}

#[test]
fn nondeterministic_function_is_rejected() {
    use std::sync::atomic::{AtomicU64, Ordering};
    let counter = AtomicU64::new(0);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x = uniform_leaf(&mut rng, "x", &[2], 0.5, 1.5);
    let gc = GradCheck::default();
    let err = gc.run("flaky", &[x], |t, ids| {
        let bump = counter.fetch_add(1, Ordering::SeqCst) as f64;
        let c = t.scalar(bump);
        let s = t.sum(ids[0])?;
        t.mul(s, c)
    });
    assert!(err.is_err());
}
