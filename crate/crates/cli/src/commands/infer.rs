use std::path::Path;

use crate::checkpoint::load_params;
use crate::commands::build_model;
use crate::config::RunConfig;
use crate::error::Result;
use crate::pfm::write_pfm;
use crate::ppm::read_ppm;

pub fn run(cfg: &RunConfig, checkpoint: &Path, image: &Path, out: &Path) -> Result<()> {
    let mut model = build_model(cfg)?;
    load_params(&mut model, checkpoint)?;
    let img = read_ppm(image)?;
    let depth = model.infer(&img)?;
    write_pfm(&depth, out)?;
    println!(
        "predicted {}x{} depth -> {}",
        depth.width,
        depth.height,
        out.display()
    );
    Ok(())
}
