pub mod ablate;
pub mod consistency;
pub mod eval;
pub mod gradcheck;
pub mod infer;
pub mod params;
pub mod synth;
pub mod train;

use std::path::Path;

use mirrordepth_core::depth::DepthMap;
use mirrordepth_core::model::DepthModel;
use mirrordepth_core::synth::Frame;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, Result};

/// Environment variable controlling evaluation worker threads (default 1).
pub const THREADS_ENV: &str = "MIRRORDEPTH_THREADS";

/// Create a fresh run directory and echo the effective configuration into
/// it. Refuses to reuse a directory that already holds a run.
pub fn init_run_dir(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let resolved = dir.join("config.resolved");
    if resolved.exists() {
        return Err(CliError::Config(format!(
            "{} already contains a run (config.resolved present)",
            dir.display()
        )));
    }
    cfg.write_resolved(dir)
}

pub fn build_model(cfg: &RunConfig) -> Result<DepthModel<f32>> {
    Ok(DepthModel::new(cfg.model_config(), cfg.seed)?)
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// One prediction per frame. Frames fan out over `MIRRORDEPTH_THREADS`
/// workers; results are assembled in frame order, so the output does not
/// depend on the thread count.
pub fn predict_all(model: &DepthModel<f32>, frames: &[Frame]) -> Result<Vec<DepthMap>> {
    let threads = thread_count().min(frames.len().max(1));
    if threads <= 1 {
        return frames.iter().map(|f| Ok(model.infer(&f.rgb)?)).collect();
    }
    let mut results: Vec<Option<Result<DepthMap>>> = (0..frames.len()).map(|_| None).collect();
    let chunk = frames.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let mut slots = results.as_mut_slice();
        let mut offset = 0;
        while !slots.is_empty() {
            let take = chunk.min(slots.len());
            let (head, tail) = slots.split_at_mut(take);
            let frame_chunk = &frames[offset..offset + take];
            scope.spawn(move || {
                for (slot, frame) in head.iter_mut().zip(frame_chunk) {
                    *slot = Some(model.infer(&frame.rgb).map_err(CliError::from));
                }
            });
            slots = tail;
            offset += take;
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Deterministic CSV assembly: header plus preformatted rows, LF endings.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn metrics_row(label: &str, m: &mirrordepth_core::metrics::MetricsRecord) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{}",
        m.abs_rel, m.sq_rel, m.rmse, m.log10, m.delta1, m.delta2, m.delta3, m.t
    )
}

pub const METRICS_HEADER: &str = "frame_id,abs_rel,sq_rel,rmse,log10,d1,d2,d3,t";
