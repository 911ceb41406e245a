//! Shape chains, parameter accounting, frozen-flag behavior and
//! conditioning-path contracts of the assembled model.

use mirrordepth_core::depth::ImageBuf;
use mirrordepth_core::loss::{silog_loss, LossConfig};
use mirrordepth_core::model::{DepthModel, ModelConfig};
use mirrordepth_core::synth::{default_scene, make_sequence, SceneParams};
use mirrordepth_core::tensor::Tape;

fn toy_frame() -> mirrordepth_core::synth::Frame {
    let (frames, _) = make_sequence(&default_scene(&SceneParams {
        frames: 1,
        ..SceneParams::default()
    }))
    .unwrap();
    frames.into_iter().next().unwrap()
}

#[test]
fn toy_shape_chain() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let frame = toy_frame();
    let mut tape = Tape::inference();
    let bind = model.bind(&mut tape).unwrap();
    let feats = model.encode_image(&mut tape, &bind, &frame.rgb).unwrap();
    assert_eq!(feats.taps.len(), 3);
    for &t in &feats.taps {
        assert_eq!(tape.shape(t), &[64, 32]); // (64/8)² tokens × width
    }
    assert_eq!(tape.shape(feats.final_hidden), &[64, 32]);
    let cond = model.encode_prompt(&mut tape, &bind).unwrap();
    assert_eq!(tape.shape(cond), &[1, 32]);
    let logits = model
        .decoder
        .decode(&mut tape, &bind, &feats.taps, cond)
        .unwrap();
    assert_eq!(tape.shape(logits), &[1, 128, 128]); // 8·16
}

#[test]
fn paper_preset_parameter_accounting() {
    let model = DepthModel::<f32>::new(ModelConfig::paper(), 7).unwrap();
    // group arithmetic: mirror 64·512 + 3 projections (768→64 with bias)
    // + 3 width-64 blocks (mlp 64→2048→64) + conv/deconv stack
    let count = model.count_learnable_params();
    assert_eq!(count, 1_094_113);
    assert_eq!(
        model
            .store
            .iter()
            .find(|(_, p)| p.name == "mirror")
            .map(|(_, p)| p.numel()),
        Some(32_768)
    );
    // patch embedding weight carries the documented shape
    let patch = model
        .store
        .iter()
        .find(|(_, p)| p.name == "vision.patch.w")
        .unwrap()
        .1;
    assert_eq!(patch.shape, vec![768, 3, 16, 16]);
    assert!(patch.frozen);
}

#[test]
fn toy_count_matches_closed_form() {
    let cfg = ModelConfig::toy();
    let model = DepthModel::<f32>::new(cfg.clone(), 7).unwrap();
    let w = cfg.decoder.width;
    let mlp = cfg.decoder.mlp_dim;
    let mid = cfg.decoder.deconv_mid;
    let vin = cfg.vision.width;
    let block = 4 * (w * w + w) + (w * mlp + mlp) + (mlp * w + w) + 4 * w;
    let expect = cfg.mirror_tokens * cfg.text.width
        + 3 * (vin * w + w)
        + 3 * block
        + (w * w * 9 + w)
        + (w * mid * 16 + mid)
        + (mid * 16 + 1);
    assert_eq!(model.count_learnable_params(), expect);
}

#[test]
fn freezing_everything_counts_zero() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let frozen: usize = model
        .store
        .iter()
        .filter(|(_, p)| p.frozen)
        .map(|(_, p)| p.numel())
        .sum();
    let total: usize = model.store.iter().map(|(_, p)| p.numel()).sum();
    assert_eq!(model.count_learnable_params() + frozen, total);
    // a store with every parameter frozen reports zero learnable
    let mut store = mirrordepth_core::nn::ParamStore::<f32>::new();
    store.add("a".into(), &[3], vec![0.0; 3], true);
    store.add("b".into(), &[2, 2], vec![0.0; 4], true);
    assert_eq!(store.count_learnable(), 0);
}

#[test]
fn single_query_regardless_of_mirror_length() {
    for s in [1usize, 8, 64] {
        let mut cfg = ModelConfig::toy();
        cfg.mirror_tokens = s;
        cfg.text.max_positions = 70;
        let model = DepthModel::<f32>::new(cfg, 7).unwrap();
        let mut tape = Tape::inference();
        let bind = model.bind(&mut tape).unwrap();
        let cond = model.encode_prompt(&mut tape, &bind).unwrap();
        assert_eq!(tape.shape(cond), &[1, 32], "s = {s}");
    }
}

#[test]
fn prompt_longer_than_capacity_is_a_config_error() {
    let mut cfg = ModelConfig::toy();
    cfg.mirror_tokens = 15; // 15 + 2 > 16
    assert!(DepthModel::<f32>::new(cfg, 7).is_err());
}

#[test]
fn wrong_image_size_is_a_dimension_error() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let mut tape = Tape::inference();
    let bind = model.bind(&mut tape).unwrap();
    let img = ImageBuf::zeros(48, 64);
    assert!(model.encode_image(&mut tape, &bind, &img).is_err());
}

#[test]
fn mirror_gets_gradient_frozen_encoders_do_not() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let frame = toy_frame();
    let mut tape = Tape::new();
    let bind = model.bind(&mut tape).unwrap();
    let logits = model.forward(&mut tape, &bind, &frame.rgb).unwrap();
    let pred = model
        .predict_depth(&mut tape, logits, frame.depth.height, frame.depth.width)
        .unwrap();
    let loss = silog_loss(&mut tape, pred, &frame.depth, &LossConfig::default()).unwrap();
    tape.backward(loss).unwrap();

    let mg = tape.grad(bind.get(model.mirror)).expect("mirror gradient");
    assert!(mg.iter().any(|&v| v != 0.0), "mirror gradient must be nonzero");
    for (id, p) in model.store.iter() {
        if p.frozen {
            assert!(tape.grad(bind.get(id)).is_none(), "{} got a gradient", p.name);
        }
    }
}

#[test]
fn conditioning_changes_logits_and_zeroed_film_decouples() {
    let frame = toy_frame();
    let run = |model: &DepthModel<f32>| -> Vec<f32> {
        let mut tape = Tape::inference();
        let bind = model.bind(&mut tape).unwrap();
        let id = model.forward(&mut tape, &bind, &frame.rgb).unwrap();
        tape.data(id).to_vec()
    };
    let mut model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let base = run(&model);
    model.randomize_mirror(999);
    let changed = run(&model);
    assert_ne!(base, changed, "logits must depend on the mirror");

    // zero both FiLM nets' weight matrices (keep biases): the conditioning
    // path is severed and the mirror no longer matters
    let film_ws: Vec<_> = model
        .store
        .iter()
        .filter(|(_, p)| p.name.contains(".film") && p.name.ends_with(".w"))
        .map(|(id, p)| (id, p.numel()))
        .collect();
    assert_eq!(film_ws.len(), 4);
    for (id, n) in film_ws {
        model.store.set_data(id, vec![0.0; n]);
    }
    let a = run(&model);
    model.randomize_mirror(31337);
    let b = run(&model);
    assert_eq!(a, b, "zeroed FiLM weights must make logits mirror-independent");
}

#[test]
fn film_identity_and_override_cases() {
    use std::sync::Arc;
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let w = model.cfg.decoder.width;
    let c = model.cfg.decoder.cond_dim;
    let mut zeroed = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    for (id, p) in model.store.iter() {
        if p.name.starts_with("decoder.film0.") {
            let data = if p.name == "decoder.film0.gamma.b" {
                vec![1.0; p.numel()]
            } else {
                vec![0.0; p.numel()]
            };
            zeroed.store.set_data(id, data);
        }
    }
    let mut tape = Tape::inference();
    let bind = zeroed.bind(&mut tape).unwrap();
    let act = tape
        .leaf(&[5, w], Arc::new((0..5 * w).map(|v| v as f32 * 0.01).collect()), false)
        .unwrap();
    let cond = tape.constant(&[1, c], vec![0.3; c]).unwrap();
    // gamma_net ≡ 1 (zero weight, unit bias), beta_net ≡ 0: identity
    let out = zeroed
        .decoder
        .film_modulate(&mut tape, &bind, act, cond, 0)
        .unwrap();
    assert_eq!(tape.data(out), tape.data(act));

    // gamma_net ≡ 0: output is the broadcast beta
    let mut gamma_zero = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    for (id, p) in model.store.iter() {
        if p.name.starts_with("decoder.film0.gamma") {
            gamma_zero.store.set_data(id, vec![0.0; p.numel()]);
        }
    }
    let mut tape2 = Tape::inference();
    let bind2 = gamma_zero.bind(&mut tape2).unwrap();
    let act2 = tape2
        .leaf(&[4, w], Arc::new(vec![3.7; 4 * w]), false)
        .unwrap();
    let cond2 = tape2.constant(&[1, c], vec![0.2; c]).unwrap();
    let out2 = gamma_zero
        .decoder
        .film_modulate(&mut tape2, &bind2, act2, cond2, 0)
        .unwrap();
    let d = tape2.data(out2);
    for r in 1..4 {
        assert_eq!(d[..w], d[r * w..(r + 1) * w], "rows must be identical");
    }
}

#[test]
fn init_is_seed_deterministic() {
    let a = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let b = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let c = DepthModel::<f32>::new(ModelConfig::toy(), 8).unwrap();
    for ((_, pa), ((_, pb), (_, pc))) in a
        .store
        .iter()
        .zip(b.store.iter().zip(c.store.iter()))
    {
        assert_eq!(pa.name, pb.name);
        let bits = |p: &mirrordepth_core::nn::Parameter<f32>| {
            p.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(pa), bits(pb), "{}", pa.name);
        if pa.name == "mirror" {
            assert_ne!(bits(pa), bits(pc), "different seeds must differ");
        }
    }
}

#[test]
fn f64_build_carries_identical_weights() {
    let a = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let b = DepthModel::<f64>::new(ModelConfig::toy(), 7).unwrap();
    for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
        assert_eq!(pa.name, pb.name);
        for (x, y) in pa.data.iter().zip(pb.data.iter()) {
            assert_eq!(*x, *y as f32, "{}: draws must cast identically", pa.name);
        }
    }
}

#[test]
fn randomize_mirror_contract() {
    let mut model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let before = model.store.get(model.mirror).data.to_vec();
    model.randomize_mirror(42);
    let after = model.store.get(model.mirror).data.to_vec();
    assert_eq!(model.store.get(model.mirror).shape, vec![8, 32]);
    assert_ne!(before, after);
    let mut again = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    again.randomize_mirror(42);
    assert_eq!(after, again.store.get(again.mirror).data.to_vec());
}

#[test]
fn infer_contract() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let frame = toy_frame();
    let a = model.infer(&frame.rgb).unwrap();
    assert_eq!((a.height, a.width), (frame.rgb.height, frame.rgb.width));
    assert!(a.data.iter().all(|&v| v > 0.0), "softplus output is positive");
    assert!(a.mask.iter().all(|&m| m));
    let b = model.infer(&frame.rgb).unwrap();
    assert_eq!(
        a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        "inference is bitwise deterministic"
    );
    // odd input size still round-trips through the resize
    let odd = frame.rgb.resized(50, 70);
    let c = model.infer(&odd).unwrap();
    assert_eq!((c.height, c.width), (50, 70));
}

#[test]
fn token_order_matters_in_decode() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let frame = toy_frame();
    let mut tape = Tape::inference();
    let bind = model.bind(&mut tape).unwrap();
    let feats = model.encode_image(&mut tape, &bind, &frame.rgb).unwrap();
    let cond = model.encode_prompt(&mut tape, &bind).unwrap();
    let base = model
        .decoder
        .decode(&mut tape, &bind, &feats.taps, cond)
        .unwrap();
    // circularly shift the token rows of every tap: spatial layout changes,
    // so the logits must change
    let mut shuffled = Vec::new();
    for &t in &feats.taps {
        let tail = tape.slice_rows(t, 1, 63).unwrap();
        let head = tape.slice_rows(t, 0, 1).unwrap();
        shuffled.push(tape.concat_rows(&[tail, head]).unwrap());
    }
    let moved = model
        .decoder
        .decode(&mut tape, &bind, &shuffled, cond)
        .unwrap();
    assert_ne!(tape.data(base), tape.data(moved));
}

#[test]
fn predict_depth_contract() {
    let model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let mut tape = Tape::inference();
    // zero logits: softplus gives ln 2 everywhere, any resize preserves it
    let logits = tape.constant(&[1, 8, 8], vec![0.0; 64]).unwrap();
    let d = model.predict_depth(&mut tape, logits, 64, 64).unwrap();
    for &v in tape.data(d) {
        assert!((v - core::f32::consts::LN_2).abs() < 1e-6);
    }
    // same-size target: bitwise identity
    let wild = tape
        .constant(&[1, 8, 8], (0..64).map(|v| (v as f32).sin() * 9.0).collect())
        .unwrap();
    let sp = tape.softplus(wild).unwrap();
    let same = model.predict_depth(&mut tape, wild, 8, 8).unwrap();
    assert_eq!(tape.data(same), tape.data(sp));
    assert!(tape.data(same).iter().all(|&v| v > 0.0));
}
