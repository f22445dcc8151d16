//! Smooth-L1 penalty on the backward-Euler state-space residual.

use std::sync::Arc;

use picrnn_autodiff::{LinearOperator, Tape, Tensor, Var};
use picrnn_core::units::DAY;
use picrnn_core::{ControlSchedule, StateSpaceSystem, Trajectory};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How each cell's residual (m³/s) is scaled before the smooth-L1 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Divide by `V_ii · p_scale / Δt`, the accumulation rate of a full
    /// pressure swing in one step.
    #[default]
    Nondimensional,
    /// Pressure in psi and time in days, so the residual is in m³/day.
    FieldUnits,
}

impl Scaling {
    pub fn default_beta(self) -> f64 {
        match self {
            Scaling::Nondimensional => 1.0,
            Scaling::FieldUnits => 50.0,
        }
    }
}

/// `T` as a tape operator. `T` is symmetric, so it is its own adjoint.
struct Transmissibility(StateSpaceSystem);

impl LinearOperator for Transmissibility {
    fn rows(&self) -> usize {
        self.0.n()
    }
    fn cols(&self) -> usize {
        self.0.n()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.apply_t(x)
    }
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.0.apply_t(y)
    }
}

/// `Σ_k mean_i L_β(w_i · r_k,i)` with
/// `r_k = −V (x_k − x_{k−1})/Δt + T x_k + B u_{k−1}`.
///
/// Coefficients that do not depend on the states are precomputed once.
pub struct PhysicsLoss {
    op: Arc<dyn LinearOperator>,
    /// `−w_i V_ii / Δt`
    accumulation: Arc<[f64]>,
    /// `w_i`
    weight: Arc<[f64]>,
    /// `w_i (B u_{k−1})_i` for each step `k`.
    forcing: Vec<Vec<f64>>,
    beta: f64,
}

impl PhysicsLoss {
    pub fn new(
        system: &StateSpaceSystem,
        schedule: &ControlSchedule,
        steps: usize,
        p_scale: f64,
        scaling: Scaling,
        beta: f64,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        if steps > schedule.len() {
            return Err(Error::Config(format!("{steps} steps requested, schedule covers {}", schedule.len())));
        }
        let dt = schedule.dt();
        let weight: Vec<f64> = match scaling {
            Scaling::Nondimensional => system.v.iter().map(|v| dt / (v * p_scale)).collect(),
            Scaling::FieldUnits => vec![DAY; system.n()],
        };
        let accumulation: Vec<f64> = system.v.iter().zip(&weight).map(|(v, w)| -w * v / dt).collect();
        let forcing = (0..steps)
            .map(|k| {
                let bu = system.apply_b(schedule.control_at(k)?);
                Ok(bu.iter().zip(&weight).map(|(b, w)| w * b).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            op: Arc::new(Transmissibility(system.clone())),
            accumulation: accumulation.into(),
            weight: weight.into(),
            forcing,
            beta,
        })
    }

    pub fn steps(&self) -> usize {
        self.forcing.len()
    }

    /// Records the loss over `states = [x_0, .., x_t]`; returns the total
    /// and the per-step terms.
    pub fn record(&self, tape: &mut Tape, states: &[Var]) -> Result<(Var, Vec<Var>)> {
        if states.len() != self.steps() + 1 {
            return Err(Error::Config(format!(
                "loss prepared for {} steps, got {} states",
                self.steps(),
                states.len()
            )));
        }
        let zero = tape.constant(Tensor::zeros(tape.shape(states[0])));
        let mut terms = Vec::with_capacity(self.steps());
        let mut total = None;
        for k in 1..states.len() {
            let d = tape.sub(states[k], states[k - 1])?;
            let acc = tape.scale_shift(d, self.accumulation.clone(), None)?;
            let tx = tape.linear(states[k], self.op.clone())?;
            let flow = tape.scale_shift(tx, self.weight.clone(), Some(&self.forcing[k - 1]))?;
            let r = tape.add(acc, flow)?;
            let l = tape.smooth_l1(r, zero, self.beta)?;
            terms.push(l);
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0)));
        Ok((total, terms))
    }

    /// Loss of a fixed trajectory; returns the total and per-step terms.
    pub fn evaluate(&self, traj: &Trajectory) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let n = traj.state_len();
        let states: Vec<Var> = traj
            .states
            .iter()
            .map(|x| Ok(tape.constant(Tensor::new(vec![n], x.clone())?)))
            .collect::<Result<_>>()?;
        let (total, terms) = self.record(&mut tape, &states)?;
        Ok((tape.value(total).item(), terms.iter().map(|&t| tape.value(t).item()).collect()))
    }
}
