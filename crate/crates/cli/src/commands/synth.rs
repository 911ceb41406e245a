use std::path::Path;

use mirrordepth_core::synth::{default_scene, make_sequence};

use crate::commands::init_run_dir;
use crate::config::RunConfig;
use crate::dataset::write_dataset;
use crate::error::Result;

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    init_run_dir(cfg, out)?;
    let spec = default_scene(&cfg.scene_params());
    let (frames, reports) = make_sequence(&spec)?;
    for (i, r) in reports.iter().enumerate() {
        if !r.skipped_objects.is_empty() {
            eprintln!(
                "warning: frame {i}: skipped objects behind the camera: {:?}",
                r.skipped_objects
            );
        }
    }
    write_dataset(&frames, out)?;
    println!(
        "wrote {} frames ({}x{}) to {}",
        frames.len(),
        spec.width,
        spec.height,
        out.display()
    );
    Ok(())
}
