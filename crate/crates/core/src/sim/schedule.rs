//! Linear-scaling learning rate with linear warmup from zero and cosine
//! decay to zero.

use std::f64::consts::PI;

use super::{SimError, TrainConfig};

/// `base_lr_per_8 · k·n / 8`.
pub fn peak_lr(cfg: &TrainConfig) -> f64 {
    cfg.base_lr_per_8 * cfg.total_batch() as f64 / 8.0
}

pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> Result<f64, SimError> {
    cfg.validate()?;
    if !(0.0..=cfg.epochs).contains(&epoch) {
        return Err(SimError::EpochOutOfRange { epoch, epochs: cfg.epochs });
    }
    let peak = peak_lr(cfg);
    if epoch < cfg.warmup_epochs {
        return Ok(peak * epoch / cfg.warmup_epochs);
    }
    let progress = (epoch - cfg.warmup_epochs) / (cfg.epochs - cfg.warmup_epochs);
    Ok(0.5 * peak * (1.0 + (PI * progress).cos()))
}
