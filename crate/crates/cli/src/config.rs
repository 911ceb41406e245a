//! Flat run configuration: a preset plus `key=value` overrides covering
//! every tunable default. The effective configuration is echoed to
//! `config.resolved` in the run directory, and re-running from that file
//! reproduces the run bitwise. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use mirrordepth_core::decoder::DecoderConfig;
use mirrordepth_core::encoder::{TextEncoderConfig, VisionEncoderConfig};
use mirrordepth_core::loss::LossConfig;
use mirrordepth_core::metrics::CropSpec;
use mirrordepth_core::model::ModelConfig;
use mirrordepth_core::optim::OptimConfig;
use mirrordepth_core::synth::SceneParams;
use mirrordepth_core::train::{MirrorMode, TrainConfig};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Toy,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper" => Ok(Preset::Paper),
            other => Err(CliError::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::Paper => "paper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropKind {
    None,
    Eigen,
    Garg,
}

impl CropKind {
    pub fn parse(s: &str) -> Result<CropKind> {
        match s {
            "none" => Ok(CropKind::None),
            "eigen" => Ok(CropKind::Eigen),
            "garg" => Ok(CropKind::Garg),
            other => Err(CliError::Config(format!("unknown crop '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CropKind::None => "none",
            CropKind::Eigen => "eigen",
            CropKind::Garg => "garg",
        }
    }

    pub fn spec(self) -> CropSpec {
        match self {
            CropKind::None => CropSpec::NONE,
            CropKind::Eigen => CropSpec::EIGEN,
            CropKind::Garg => CropSpec::GARG,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,

    pub vision_image_size: usize,
    pub vision_patch_size: usize,
    pub vision_width: usize,
    pub vision_layers: usize,
    pub vision_heads: usize,
    pub vision_mlp_dim: usize,
    pub vision_taps: Vec<usize>,

    pub text_width: usize,
    pub text_layers: usize,
    pub text_heads: usize,
    pub text_mlp_dim: usize,
    pub text_max_positions: usize,
    pub text_proj_dim: usize,

    pub mirror_tokens: usize,

    pub decoder_width: usize,
    pub decoder_blocks: usize,
    pub decoder_heads: usize,
    pub decoder_mlp_dim: usize,
    pub decoder_film_layers: usize,
    pub decoder_deconv_mid: usize,

    pub loss_lambda: f64,
    pub loss_alpha: f64,
    pub loss_min_depth: f64,
    pub loss_max_depth: f64,

    pub optim_lr0: f64,
    pub optim_weight_decay: f64,
    pub optim_beta1: f64,
    pub optim_beta2: f64,
    pub optim_eps: f64,
    pub optim_eta_min: f64,

    pub train_epochs: u32,
    pub train_batch_size: usize,
    pub train_total_steps: u32,
    pub train_eval_every: u32,
    pub train_save_every: u32,
    pub train_mirror_mode: MirrorMode,

    pub eval_crop: CropKind,
    pub eval_min_depth: f64,
    pub eval_max_depth: f64,

    pub consistency_window: usize,
    pub consistency_baseline_seed: u64,

    pub ablate_randomize_seed: u64,

    pub synth_frames: usize,
    pub synth_size: usize,
    pub synth_objects: usize,
    pub synth_depth_min: f64,
    pub synth_depth_max: f64,
    pub synth_forward_step: f64,
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> RunConfig {
        let model = match preset {
            Preset::Toy => ModelConfig::toy(),
            Preset::Paper => ModelConfig::paper(),
        };
        let (epochs, batch, eval_every) = match preset {
            Preset::Toy => (250, 4, 50),
            Preset::Paper => (25, 32, 1),
        };
        RunConfig {
            preset,
            seed: 7,
            vision_image_size: model.vision.image_size,
            vision_patch_size: model.vision.patch_size,
            vision_width: model.vision.width,
            vision_layers: model.vision.layers,
            vision_heads: model.vision.heads,
            vision_mlp_dim: model.vision.mlp_dim,
            vision_taps: model.vision.tap_layers.clone(),
            text_width: model.text.width,
            text_layers: model.text.layers,
            text_heads: model.text.heads,
            text_mlp_dim: model.text.mlp_dim,
            text_max_positions: model.text.max_positions,
            text_proj_dim: model.text.proj_dim,
            mirror_tokens: model.mirror_tokens,
            decoder_width: model.decoder.width,
            decoder_blocks: model.decoder.blocks,
            decoder_heads: model.decoder.heads,
            decoder_mlp_dim: model.decoder.mlp_dim,
            decoder_film_layers: model.decoder.film_layers,
            decoder_deconv_mid: model.decoder.deconv_mid,
            loss_lambda: 0.85,
            loss_alpha: 10.0,
            loss_min_depth: 1e-3,
            loss_max_depth: 80.0,
            optim_lr0: 0.003,
            optim_weight_decay: 0.01,
            optim_beta1: 0.9,
            optim_beta2: 0.999,
            optim_eps: 1e-8,
            optim_eta_min: 0.0,
            train_epochs: epochs,
            train_batch_size: batch,
            train_total_steps: 0,
            train_eval_every: eval_every,
            train_save_every: 0,
            train_mirror_mode: MirrorMode::Converged,
            eval_crop: CropKind::None,
            eval_min_depth: 1e-3,
            eval_max_depth: 80.0,
            consistency_window: 1,
            consistency_baseline_seed: 1001,
            ablate_randomize_seed: 4242,
            synth_frames: 16,
            synth_size: match preset {
                Preset::Toy => 64,
                Preset::Paper => 352,
            },
            synth_objects: 3,
            synth_depth_min: 2.0,
            synth_depth_max: 12.0,
            synth_forward_step: 0.15,
        }
    }

    /// Apply one `key=value` override. Unknown keys are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| CliError::Config(format!("invalid value '{value}' for {what}"));
        macro_rules! num {
            ($field:expr, $ty:ty) => {{
                $field = value.parse::<$ty>().map_err(|_| bad(key))?;
            }};
        }
        match key {
            "preset" => self.preset = Preset::parse(value)?,
            "seed" => num!(self.seed, u64),
            "vision.image_size" => num!(self.vision_image_size, usize),
            "vision.patch_size" => num!(self.vision_patch_size, usize),
            "vision.width" => num!(self.vision_width, usize),
            "vision.layers" => num!(self.vision_layers, usize),
            "vision.heads" => num!(self.vision_heads, usize),
            "vision.mlp_dim" => num!(self.vision_mlp_dim, usize),
            "vision.taps" => {
                self.vision_taps = value
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(key))?;
            }
            "text.width" => num!(self.text_width, usize),
            "text.layers" => num!(self.text_layers, usize),
            "text.heads" => num!(self.text_heads, usize),
            "text.mlp_dim" => num!(self.text_mlp_dim, usize),
            "text.max_positions" => num!(self.text_max_positions, usize),
            "text.proj_dim" => num!(self.text_proj_dim, usize),
            "mirror.tokens" => num!(self.mirror_tokens, usize),
            "decoder.width" => num!(self.decoder_width, usize),
            "decoder.blocks" => num!(self.decoder_blocks, usize),
            "decoder.heads" => num!(self.decoder_heads, usize),
            "decoder.mlp_dim" => num!(self.decoder_mlp_dim, usize),
            "decoder.film_layers" => num!(self.decoder_film_layers, usize),
            "decoder.deconv_mid" => num!(self.decoder_deconv_mid, usize),
            "loss.lambda" => num!(self.loss_lambda, f64),
            "loss.alpha" => num!(self.loss_alpha, f64),
            "loss.min_depth" => num!(self.loss_min_depth, f64),
            "loss.max_depth" => num!(self.loss_max_depth, f64),
            "optim.lr0" => num!(self.optim_lr0, f64),
            "optim.weight_decay" => num!(self.optim_weight_decay, f64),
            "optim.beta1" => num!(self.optim_beta1, f64),
            "optim.beta2" => num!(self.optim_beta2, f64),
            "optim.eps" => num!(self.optim_eps, f64),
            "optim.eta_min" => num!(self.optim_eta_min, f64),
            "train.epochs" => num!(self.train_epochs, u32),
            "train.batch_size" => num!(self.train_batch_size, usize),
            "train.total_steps" => num!(self.train_total_steps, u32),
            "train.eval_every" => num!(self.train_eval_every, u32),
            "train.save_every" => num!(self.train_save_every, u32),
            "train.mirror_mode" => self.train_mirror_mode = MirrorMode::parse(value)?,
            "eval.crop" => self.eval_crop = CropKind::parse(value)?,
            "eval.min_depth" => num!(self.eval_min_depth, f64),
            "eval.max_depth" => num!(self.eval_max_depth, f64),
            "consistency.window" => num!(self.consistency_window, usize),
            "consistency.baseline_seed" => num!(self.consistency_baseline_seed, u64),
            "ablate.randomize_seed" => num!(self.ablate_randomize_seed, u64),
            "synth.frames" => num!(self.synth_frames, usize),
            "synth.size" => num!(self.synth_size, usize),
            "synth.objects" => num!(self.synth_objects, usize),
            "synth.depth_min" => num!(self.synth_depth_min, f64),
            "synth.depth_max" => num!(self.synth_depth_max, f64),
            "synth.forward_step" => num!(self.synth_forward_step, f64),
            other => {
                return Err(CliError::Config(format!("unknown configuration key '{other}'")));
            }
        }
        Ok(())
    }

    /// Apply a `--set key=value` argument.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got '{assignment}'")))?;
        self.apply(k.trim(), v.trim())
    }

    /// Read a `config.resolved`-style file (key=value lines, `#` comments).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line)?;
        }
        Ok(())
    }

    /// Every key in a fixed order. Float values use the shortest
    /// round-tripping decimal form, so the echo re-parses bitwise.
    pub fn lines(&self) -> Vec<String> {
        let taps = self
            .vision_taps
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            format!("preset={}", self.preset.as_str()),
            format!("seed={}", self.seed),
            format!("vision.image_size={}", self.vision_image_size),
            format!("vision.patch_size={}", self.vision_patch_size),
            format!("vision.width={}", self.vision_width),
            format!("vision.layers={}", self.vision_layers),
            format!("vision.heads={}", self.vision_heads),
            format!("vision.mlp_dim={}", self.vision_mlp_dim),
            format!("vision.taps={taps}"),
            format!("text.width={}", self.text_width),
            format!("text.layers={}", self.text_layers),
            format!("text.heads={}", self.text_heads),
            format!("text.mlp_dim={}", self.text_mlp_dim),
            format!("text.max_positions={}", self.text_max_positions),
            format!("text.proj_dim={}", self.text_proj_dim),
            format!("mirror.tokens={}", self.mirror_tokens),
            format!("decoder.width={}", self.decoder_width),
            format!("decoder.blocks={}", self.decoder_blocks),
            format!("decoder.heads={}", self.decoder_heads),
            format!("decoder.mlp_dim={}", self.decoder_mlp_dim),
            format!("decoder.film_layers={}", self.decoder_film_layers),
            format!("decoder.deconv_mid={}", self.decoder_deconv_mid),
            format!("loss.lambda={}", self.loss_lambda),
            format!("loss.alpha={}", self.loss_alpha),
            format!("loss.min_depth={}", self.loss_min_depth),
            format!("loss.max_depth={}", self.loss_max_depth),
            format!("optim.lr0={}", self.optim_lr0),
            format!("optim.weight_decay={}", self.optim_weight_decay),
            format!("optim.beta1={}", self.optim_beta1),
            format!("optim.beta2={}", self.optim_beta2),
            format!("optim.eps={}", self.optim_eps),
            format!("optim.eta_min={}", self.optim_eta_min),
            format!("train.epochs={}", self.train_epochs),
            format!("train.batch_size={}", self.train_batch_size),
            format!("train.total_steps={}", self.train_total_steps),
            format!("train.eval_every={}", self.train_eval_every),
            format!("train.save_every={}", self.train_save_every),
            format!("train.mirror_mode={}", self.train_mirror_mode.as_str()),
            format!("eval.crop={}", self.eval_crop.as_str()),
            format!("eval.min_depth={}", self.eval_min_depth),
            format!("eval.max_depth={}", self.eval_max_depth),
            format!("consistency.window={}", self.consistency_window),
            format!("consistency.baseline_seed={}", self.consistency_baseline_seed),
            format!("ablate.randomize_seed={}", self.ablate_randomize_seed),
            format!("synth.frames={}", self.synth_frames),
            format!("synth.size={}", self.synth_size),
            format!("synth.objects={}", self.synth_objects),
            format!("synth.depth_min={}", self.synth_depth_min),
            format!("synth.depth_max={}", self.synth_depth_max),
            format!("synth.forward_step={}", self.synth_forward_step),
        ]
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for line in self.lines() {
            let _ = writeln!(text, "{line}");
        }
        let path = dir.join("config.resolved");
        std::fs::write(&path, text).map_err(io_err(path))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            vision: VisionEncoderConfig {
                image_size: self.vision_image_size,
                patch_size: self.vision_patch_size,
                width: self.vision_width,
                layers: self.vision_layers,
                heads: self.vision_heads,
                mlp_dim: self.vision_mlp_dim,
                tap_layers: self.vision_taps.clone(),
            },
            text: TextEncoderConfig {
                width: self.text_width,
                layers: self.text_layers,
                heads: self.text_heads,
                mlp_dim: self.text_mlp_dim,
                max_positions: self.text_max_positions,
                proj_dim: self.text_proj_dim,
            },
            mirror_tokens: self.mirror_tokens,
            decoder: DecoderConfig {
                width: self.decoder_width,
                blocks: self.decoder_blocks,
                heads: self.decoder_heads,
                mlp_dim: self.decoder_mlp_dim,
                film_layers: self.decoder_film_layers,
                proj_in_dim: self.vision_width,
                cond_dim: self.text_proj_dim,
                deconv_mid: self.decoder_deconv_mid,
            },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: LossConfig {
                lambda: self.loss_lambda,
                alpha: self.loss_alpha,
                min_depth: self.loss_min_depth,
                max_depth: self.loss_max_depth,
            },
            optim: OptimConfig {
                lr0: self.optim_lr0,
                weight_decay: self.optim_weight_decay,
                beta1: self.optim_beta1,
                beta2: self.optim_beta2,
                eps: self.optim_eps,
                eta_min: self.optim_eta_min,
            },
            epochs: self.train_epochs,
            batch_size: self.train_batch_size,
            total_steps: self.train_total_steps,
            eval_every: self.train_eval_every,
            seed: self.seed,
        }
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            seed: self.seed,
            size: self.synth_size,
            frames: self.synth_frames,
            objects: self.synth_objects,
            depth_min: self.synth_depth_min,
            depth_max: self.synth_depth_max,
            forward_step: self.synth_forward_step,
        }
    }
}

/// Resolve preset + optional config file + `--set` overrides, in that order.
pub fn resolve(
    preset: Option<&str>,
    config_file: Option<&Path>,
    sets: &[String],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_preset(match preset {
        Some(p) => Preset::parse(p)?,
        None => Preset::Toy,
    });
    if let Some(path) = config_file {
        cfg.apply_file(path)?;
    }
    for s in sets {
        cfg.apply_assignment(s)?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_emitted_line_reapplies() {
        let cfg = RunConfig::from_preset(Preset::Toy);
        let mut other = RunConfig::from_preset(Preset::Paper);
        for line in cfg.lines() {
            other.apply_assignment(&line).unwrap();
        }
        assert_eq!(cfg, other, "echo must fully determine the config");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::from_preset(Preset::Toy);
        assert!(cfg.apply("vision.imagesize", "64").is_err());
        assert!(cfg.apply_assignment("no_equals_sign").is_err());
        assert!(cfg.apply("seed", "not_a_number").is_err());
    }

    #[test]
    fn paper_preset_carries_published_hyperparameters() {
        let cfg = RunConfig::from_preset(Preset::Paper);
        assert_eq!(cfg.train_epochs, 25);
        assert_eq!(cfg.train_batch_size, 32);
        assert_eq!(cfg.optim_lr0, 0.003);
        assert_eq!(cfg.optim_weight_decay, 0.01);
        assert_eq!(cfg.loss_lambda, 0.85);
        assert_eq!(cfg.loss_alpha, 10.0);
        assert_eq!(cfg.mirror_tokens, 64);
        assert_eq!(cfg.vision_taps, vec![3, 6, 9]);
        cfg.model_config().validate().unwrap();
    }

    #[test]
    fn float_values_round_trip_through_the_echo() {
        let mut cfg = RunConfig::from_preset(Preset::Toy);
        cfg.apply("loss.lambda", "0.8500000001").unwrap();
        cfg.apply("optim.lr0", "0.0031415926535897933").unwrap();
        let mut back = RunConfig::from_preset(Preset::Toy);
        for line in cfg.lines() {
            back.apply_assignment(&line).unwrap();
        }
        assert_eq!(cfg.loss_lambda.to_bits(), back.loss_lambda.to_bits());
        assert_eq!(cfg.optim_lr0.to_bits(), back.optim_lr0.to_bits());
    }
}
