//! Full-batch training on one trajectory and warm-started extrapolation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use picrnn_autodiff::{AdamConfig, AdamState, Tape, Tensor};
use picrnn_core::{ControlSchedule, StateSpaceSystem, Trajectory};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::loss::{PhysicsLoss, Scaling};
use crate::network::{HiddenState, Surrogate};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay per interval.
    pub decay: f64,
    pub decay_interval: usize,
    /// Unrolled steps per epoch.
    pub steps: usize,
    /// Smooth-L1 threshold; defaults by scaling mode.
    pub beta: Option<f64>,
    pub scaling: Scaling,
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Global gradient-norm clip.
    pub clip_norm: Option<f64>,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30_000,
            learning_rate: 0.0023,
            decay: 0.995,
            decay_interval: 100,
            steps: 300,
            beta: None,
            scaling: Scaling::Nondimensional,
            seed: 0,
            checkpoint_every: 500,
            clip_norm: None,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.scaling.default_beta())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail("decay must lie in (0, 1]");
        }
        if self.decay_interval == 0 {
            return fail("decay_interval must be at least 1");
        }
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if !(self.beta() > 0.0) {
            return fail("beta must be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return fail("clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return fail("adam moments must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// `η0 · γ^⌊epoch / interval⌋`
pub fn lr_schedule(epoch: usize, eta0: f64, gamma: f64, interval: usize) -> f64 {
    eta0 * gamma.powi((epoch / interval.max(1)) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 0-based.
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

/// Per-step loss terms captured at a checkpoint epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBreakdown {
    pub epoch: usize,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossRecord {
    pub epochs: Vec<EpochLoss>,
    pub breakdown: Vec<StepBreakdown>,
}

impl LossRecord {
    pub fn initial(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn last(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// Means of `blocks` equal consecutive chunks (a trailing remainder is
    /// folded into the last block).
    pub fn block_means(&self, blocks: usize) -> Vec<f64> {
        let n = self.epochs.len();
        if blocks == 0 || n < blocks {
            return Vec::new();
        }
        let size = n / blocks;
        (0..blocks)
            .map(|b| {
                let end = if b + 1 == blocks { n } else { (b + 1) * size };
                let chunk = &self.epochs[b * size..end];
                chunk.iter().map(|e| e.loss).sum::<f64>() / chunk.len() as f64
            })
            .collect()
    }

    /// `epoch,loss,lr,wall_ms` CSV. Wall time is excluded when
    /// `with_timing` is false so that reruns compare byte-for-byte.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut s = String::from("epoch,loss,lr,wall_ms\n");
        for e in &self.epochs {
            let wall = if with_timing { format!("{:.3}", e.wall_ms) } else { String::new() };
            let _ = writeln!(s, "{},{:e},{:e},{}", e.epoch, e.loss, e.lr, wall);
        }
        s
    }
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
}

/// Trains `net` in place on the residual of `system` along one rollout from
/// `x0` under `schedule`, with zero initial hidden state.
///
/// With `checkpoints` set, parameters are written every
/// `checkpoint_every` epochs to `epoch-NNNNNN/`, plus `best/` and `final/`
/// at the end. On a non-finite loss the parameters of the last checkpoint
/// (or the initial ones) are restored and [`Error::Diverged`] carries the
/// record so far.
pub fn train(
    net: &mut Surrogate,
    system: &StateSpaceSystem,
    x0: &[f64],
    schedule: &ControlSchedule,
    cfg: &TrainConfig,
    checkpoints: Option<&Path>,
) -> Result<LossRecord> {
    cfg.validate()?;
    let loss_fn = PhysicsLoss::new(system, schedule, cfg.steps, net.normalizer.p_scale, cfg.scaling, cfg.beta())?;
    let mut adam = AdamState::new(net.params.values(), cfg.adam());
    let mut record = LossRecord::default();
    let mut last_good = net.params.clone();
    let mut best = (f64::INFINITY, net.params.clone());
    let hidden = net.zero_hidden();
    let meta = |epoch| CheckpointMeta { epoch: Some(epoch), train: Some(cfg.clone()) };

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, true)?;
        let evaluated = net
            .rollout_on(&mut tape, &bound, x0, &hidden, schedule, cfg.steps)
            .and_then(|roll| loss_fn.record(&mut tape, &roll.states));
        let (loss, terms) = match evaluated {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => return Err(diverged(net, last_good, epoch, f64::NAN, record)),
            Err(e) => return Err(e),
        };
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(diverged(net, last_good, epoch, value, record));
        }
        let mut grads = tape.backward(loss)?;
        let mut grads: Vec<Tensor> = bound
            .params
            .iter()
            .zip(net.params.values())
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        if let Some(max) = cfg.clip_norm {
            let norm = global_norm(&grads);
            if norm > max {
                let s = max / norm;
                grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
            }
        }
        if value < best.0 {
            best = (value, net.params.clone());
        }
        let lr = lr_schedule(epoch, cfg.learning_rate, cfg.decay, cfg.decay_interval);
        adam.update(net.params.values_mut(), &grads, lr)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        record.epochs.push(EpochLoss { epoch, loss: value, lr, wall_ms });
        log::debug!("epoch {epoch} loss {value:e} lr {lr:e} {wall_ms:.0} ms");

        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            record.breakdown.push(StepBreakdown { epoch, losses: terms.iter().map(|&t| tape.value(t).item()).collect() });
            last_good = net.params.clone();
            if let Some(dir) = checkpoints {
                save_checkpoint(net, &dir.join(format!("epoch-{:06}", epoch + 1)), &meta(epoch + 1))?;
            }
        }
    }

    if let Some(dir) = checkpoints {
        save_checkpoint(net, &dir.join("final"), &meta(cfg.epochs))?;
        let mut best_net = net.clone();
        best_net.params = best.1;
        save_checkpoint(&best_net, &dir.join("best"), &meta(cfg.epochs))?;
    }
    Ok(record)
}

fn diverged(net: &mut Surrogate, restore: crate::arch::ParamStore, epoch: usize, loss: f64, record: LossRecord) -> Error {
    net.params = restore;
    log::warn!("non-finite loss at epoch {epoch}; parameters rolled back");
    Error::Diverged { epoch, loss, record: Box::new(record) }
}

/// Continues a rollout from the last trained state and hidden state under
/// `future` controls. Returns only the new states `x_{t+1}..x_{t+steps}`.
pub fn extrapolate(
    net: &Surrogate,
    x_t: &[f64],
    hidden: &HiddenState,
    future: &ControlSchedule,
    steps: usize,
) -> Result<(Trajectory, HiddenState)> {
    let (mut traj, hidden) = net.rollout(x_t, hidden, future, steps)?;
    traj.states.remove(0);
    Ok((traj, hidden))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepped_decay() {
        assert_eq!(lr_schedule(0, 0.0023, 0.995, 100), 0.0023);
        assert_eq!(lr_schedule(99, 0.0023, 0.995, 100), 0.0023);
        assert!((lr_schedule(100, 0.0023, 0.995, 100) - 0.0022885).abs() < 1e-15);
        assert!((lr_schedule(250, 1.0, 0.5, 100) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { decay: 1.5, ..Default::default() },
            TrainConfig { steps: 0, ..Default::default() },
            TrainConfig { beta: Some(-1.0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert_eq!(TrainConfig { scaling: Scaling::FieldUnits, ..Default::default() }.beta(), 50.0);
    }

    #[test]
    fn block_means_fold_remainder() {
        let epochs = (0..23).map(|e| EpochLoss { epoch: e, loss: e as f64, lr: 1.0, wall_ms: 0.0 }).collect();
        let r = LossRecord { epochs, breakdown: vec![] };
        let m = r.block_means(2);
        assert_eq!(m, vec![5.0, 16.5]);
        assert!(r.block_means(30).is_empty());
    }
}
