use mirrordepth_core::depth::ImageBuf;
use mirrordepth_core::model::{DepthModel, ModelConfig};
use mirrordepth_core::tensor::Tape;

fn main() {
    let t0 = std::time::Instant::now();
    let m = DepthModel::<f32>::new(ModelConfig::paper(), 7).unwrap();
    println!("build: {:?}  learnable: {}", t0.elapsed(), m.count_learnable_params());
    let img = ImageBuf::zeros(352, 352);
    let t1 = std::time::Instant::now();
    let mut tape = Tape::inference();
    let bind = m.bind(&mut tape).unwrap();
    let feats = m.encode_image(&mut tape, &bind, &img).unwrap();
    println!("vision: {:?}", t1.elapsed());
    for t in &feats.taps {
        println!("tap shape: {:?}", tape.shape(*t));
    }
    let t2 = std::time::Instant::now();
    let cond = m.encode_prompt(&mut tape, &bind).unwrap();
    println!("text: {:?} cond {:?}", t2.elapsed(), tape.shape(cond));
    let t3 = std::time::Instant::now();
    let logits = m.decoder.decode(&mut tape, &bind, &feats.taps, cond).unwrap();
    println!("decode: {:?} logits {:?}", t3.elapsed(), tape.shape(logits));
    println!("total forward: {:?}, tape nodes: {}", t1.elapsed(), tape.len());
}
