use mirrordepth_core::loss::LossConfig;
use mirrordepth_core::model::{DepthModel, ModelConfig};
use mirrordepth_core::synth::{default_scene, make_sequence, SceneParams};
use mirrordepth_core::train::{evaluate_on, train, MirrorMode, RecordingObserver, TrainConfig};

fn main() {
    let t0 = std::time::Instant::now();
    let (frames, _) = make_sequence(&default_scene(&SceneParams::default())).unwrap();
    let cfg = TrainConfig::default();

    let mut model = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    let mut obs = RecordingObserver::default();
    train(&mut model, &frames, &cfg, MirrorMode::Converged, &mut obs).unwrap();
    let first = obs.steps.first().unwrap().loss;
    let last = obs.steps.last().unwrap();
    println!("steps: {} first loss {:.4} final loss {:.4} ratio {:.4}  [{:?}]",
        obs.steps.len(), first, last.loss, last.loss / first, t0.elapsed());

    let m_conv = evaluate_on(&model, &frames, &LossConfig::default()).unwrap();
    println!("converged: abs_rel {:.4} rmse {:.4} d1 {:.4}", m_conv.abs_rel, m_conv.rmse, m_conv.delta1);

    let mut randomized = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
    // copy trained params, then randomize the mirror
    for (id, p) in model.store.iter() {
        randomized.store.set_data(id, p.data.to_vec());
    }
    randomized.randomize_mirror(4242);
    let m_rand = evaluate_on(&randomized, &frames, &LossConfig::default()).unwrap();
    println!("randomized: abs_rel {:.4} (ratio {:.3})", m_rand.abs_rel, m_rand.abs_rel / m_conv.abs_rel);

    let t1 = std::time::Instant::now();
    let mut disrupted = DepthModel::<f32>::new(ModelConfig::toy(), 8).unwrap();
    let mut obs2 = RecordingObserver::default();
    train(&mut disrupted, &frames, &cfg, MirrorMode::Disrupted, &mut obs2).unwrap();
    let d_first = obs2.steps.first().unwrap().loss;
    let d_last = obs2.steps.last().unwrap().loss;
    println!("disrupted train: first {:.4} final {:.4} [{:?}]", d_first, d_last, t1.elapsed());
    let m_dis = evaluate_on(&disrupted, &frames, &LossConfig::default()).unwrap();
    let saved: Vec<f32> = disrupted.store.get(disrupted.mirror).data.to_vec();
    for seed in [777u64, 13, 99, 500, 4242, 31337] {
        disrupted.store.set_data(disrupted.mirror, saved.clone());
        disrupted.randomize_mirror(seed);
        let m_dis2 = evaluate_on(&disrupted, &frames, &LossConfig::default()).unwrap();
        println!("disrupted: abs_rel {:.4} -> seed {} {:.4} (rel change {:.4})",
            m_dis.abs_rel, seed, m_dis2.abs_rel, (m_dis2.abs_rel - m_dis.abs_rel).abs() / m_dis.abs_rel);
    }
    // converged-model randomized ratios across seeds
    for seed in [777u64, 13, 99, 500] {
        let mut r2 = DepthModel::<f32>::new(ModelConfig::toy(), 7).unwrap();
        for (id, p) in model.store.iter() { r2.store.set_data(id, p.data.to_vec()); }
        r2.randomize_mirror(seed);
        let m = evaluate_on(&r2, &frames, &LossConfig::default()).unwrap();
        println!("converged randomized seed {}: ratio {:.3}", seed, m.abs_rel / m_conv.abs_rel);
    }
}
