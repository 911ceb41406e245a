use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mirrordepth_core::train::{
    train_epochs, EpochRecord, StepRecord, TrainObserver, TrainState,
};

use crate::checkpoint::{load_params, load_train_state, save_checkpoint};
use crate::commands::{build_model, init_run_dir, metrics_row};
use crate::config::RunConfig;
use crate::dataset::read_dataset;
use crate::error::{io_err, Result};

/// CSV-writing observer: per-step `step,lr,loss`, per-epoch mean losses, and
/// metric sweeps at the configured cadence.
struct CsvObserver {
    loss: BufWriter<File>,
    epochs: BufWriter<File>,
    eval: BufWriter<File>,
}

impl CsvObserver {
    fn create(dir: &Path) -> Result<Self> {
        let open = |name: &str, header: &str| -> Result<BufWriter<File>> {
            let path = dir.join(name);
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "{header}").map_err(io_err(&path))?;
            Ok(w)
        };
        Ok(CsvObserver {
            loss: open("loss.csv", "step,lr,loss")?,
            epochs: open("epochs.csv", "epoch,mean_loss")?,
            eval: open(
                "epoch_eval.csv",
                "epoch,abs_rel,sq_rel,rmse,log10,d1,d2,d3,t",
            )?,
        })
    }

    fn finish(mut self) -> std::io::Result<()> {
        self.loss.flush()?;
        self.epochs.flush()?;
        self.eval.flush()
    }
}

impl TrainObserver for CsvObserver {
    fn on_step(&mut self, rec: &StepRecord) {
        let _ = writeln!(self.loss, "{},{},{}", rec.step, rec.lr, rec.loss);
    }
    fn on_epoch(&mut self, rec: &EpochRecord) {
        let _ = writeln!(self.epochs, "{},{}", rec.epoch, rec.mean_loss);
        if let Some(m) = &rec.metrics {
            let _ = writeln!(self.eval, "{}", metrics_row(&rec.epoch.to_string(), m));
        }
    }
}

pub fn run(cfg: &RunConfig, dataset: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    init_run_dir(cfg, out)?;
    let frames = read_dataset(dataset)?;
    let train_cfg = cfg.train_config();
    let mut model = build_model(cfg)?;
    let mut state = TrainState::new(&model, &train_cfg, cfg.train_mirror_mode, frames.len())?;
    if let Some(ckpt) = resume {
        load_params(&mut model, ckpt)?;
        load_train_state(&model, &mut state, ckpt)?;
        eprintln!("resumed at epoch {} (step {})", state.epoch, state.step);
    }

    let mut obs = CsvObserver::create(out)?;
    while state.epoch < train_cfg.epochs {
        let until = if cfg.train_save_every > 0 {
            (state.epoch + cfg.train_save_every).min(train_cfg.epochs)
        } else {
            train_cfg.epochs
        };
        train_epochs(&mut model, &mut state, &frames, &train_cfg, until, &mut obs)?;
        if cfg.train_save_every > 0 && state.epoch < train_cfg.epochs {
            let path = out.join(format!("checkpoint_e{:04}.mdc", state.epoch));
            save_checkpoint(&model, Some(&state), &path)?;
        }
    }
    obs.finish().map_err(io_err(out.join("loss.csv")))?;
    let final_path = out.join("checkpoint.mdc");
    save_checkpoint(&model, Some(&state), &final_path)?;
    println!(
        "trained {} epochs ({} steps), checkpoint at {}",
        state.epoch,
        state.step,
        final_path.display()
    );
    Ok(())
}
