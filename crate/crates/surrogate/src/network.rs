//! Encoders, recurrent cell, decoder and the unrolled rollout.

use picrnn_autodiff::{Tape, Tensor, Var};
use picrnn_core::{ControlKind, ControlSchedule, Provenance, ReservoirModel, StateSpaceSystem, Trajectory};
use serde::{Deserialize, Serialize};

use crate::arch::{build, Arch, Layout, ParamStore, WnConv};
use crate::{Error, Result};

/// Affine pressure scaling between physical (Pa) and network units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    /// Pa; maps to 0.
    pub p_ref: f64,
    /// Pa per network unit.
    pub p_scale: f64,
    /// m³/s per network unit, for rate-controlled wells.
    pub rate_scale: f64,
}

impl Normalizer {
    pub fn new(p_ref: f64, p_scale: f64, rate_scale: f64) -> Result<Self> {
        if !(p_scale > 0.0 && rate_scale > 0.0 && p_ref.is_finite() && p_scale.is_finite() && rate_scale.is_finite()) {
            return Err(Error::Arch(format!("normalizer scales must be positive and finite, got {p_scale} and {rate_scale}")));
        }
        Ok(Self { p_ref, p_scale, rate_scale })
    }

    /// `p_ref` is the initial pressure and `p_scale` the largest BHP
    /// drawdown (or buildup) in the schedule. `rate_scale` is the rate a
    /// well of mean productivity index delivers at that drawdown.
    pub fn for_case(model: &ReservoirModel, schedule: &ControlSchedule, system: &StateSpaceSystem) -> Result<Self> {
        let p_ref = model.rock.initial_pressure;
        let mut p_scale: f64 = 0.0;
        for (w, well) in model.wells.iter().enumerate() {
            if well.control == ControlKind::Bhp {
                for k in 0..schedule.len() {
                    p_scale = p_scale.max((schedule.control_at(k)?[w] - p_ref).abs());
                }
            }
        }
        if p_scale == 0.0 {
            p_scale = 0.1 * p_ref.abs();
        }
        let rate_scale = if system.pi.is_empty() {
            1.0
        } else {
            p_scale * system.pi.iter().sum::<f64>() / system.pi.len() as f64
        };
        Self::new(p_ref, p_scale, rate_scale)
    }

    pub fn state(&self, x: f64) -> f64 {
        (x - self.p_ref) / self.p_scale
    }

    pub fn control(&self, u: f64, kind: ControlKind) -> f64 {
        match kind {
            ControlKind::Bhp => self.state(u),
            ControlKind::Rate => u / self.rate_scale,
        }
    }
}

/// Well position and control kind as seen by the control encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellSlot {
    pub i: usize,
    pub j: usize,
    pub kind: ControlKind,
}

impl WellSlot {
    pub fn from_model(model: &ReservoirModel) -> Vec<Self> {
        model.wells.iter().map(|w| Self { i: w.i, j: w.j, kind: w.control }).collect()
    }
}

/// Recurrent cell state `(h, c)`, each `1 × hidden × H/8 × W/8`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Tensor,
    pub c: Tensor,
}

impl HiddenState {
    pub fn zeros(arch: &Arch) -> Self {
        let (lh, lw) = arch.latent();
        let shape = [1, arch.hidden, lh, lw];
        Self { h: Tensor::zeros(&shape), c: Tensor::zeros(&shape) }
    }

    fn check(&self, arch: &Arch) -> Result<()> {
        let (lh, lw) = arch.latent();
        let want = [1, arch.hidden, lh, lw];
        if self.h.shape() != want || self.c.shape() != want {
            return Err(Error::Arch(format!(
                "hidden state shapes {:?}/{:?}, expected {want:?}",
                self.h.shape(),
                self.c.shape()
            )));
        }
        if !self.h.is_finite() || !self.c.is_finite() {
            return Err(Error::Arch("hidden state is not finite".into()));
        }
        Ok(())
    }
}

/// Effective weights of one forward pass, recorded on a tape.
///
/// Weight normalization is applied once here, so every unrolled step reads
/// the same nodes and gradients accumulate across steps.
#[derive(Debug, Clone)]
pub struct Bound {
    /// One leaf per stored tensor, in store order.
    pub params: Vec<Var>,
    encoder: Vec<(Var, Var)>,
    control: (Var, Var),
    cell: [[Var; 3]; 4],
    cell_bias: [Var; 4],
    decoder: Vec<(Var, Var)>,
    head: (Var, Var),
}

/// Result of a rollout recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeRollout {
    /// `x_0..x_steps`, each `1 × 1 × ny × nx` in Pa.
    pub states: Vec<Var>,
    pub h: Var,
    pub c: Var,
}

#[derive(Debug, Clone)]
pub struct Surrogate {
    pub arch: Arch,
    pub wells: Vec<WellSlot>,
    pub normalizer: Normalizer,
    pub params: ParamStore,
    pub seed: u64,
    layout: Layout,
}

impl Surrogate {
    pub fn new(arch: Arch, wells: Vec<WellSlot>, normalizer: Normalizer, seed: u64) -> Result<Self> {
        let (params, layout) = build(&arch, seed)?;
        for w in &wells {
            if w.i >= arch.nx || w.j >= arch.ny {
                return Err(Error::Arch(format!("well ({}, {}) outside the {}×{} grid", w.i, w.j, arch.nx, arch.ny)));
            }
        }
        Ok(Self { arch, wells, normalizer, params, seed, layout })
    }

    /// Surrogate sized for `model`, normalized for `schedule`.
    pub fn for_case(model: &ReservoirModel, schedule: &ControlSchedule, system: &StateSpaceSystem, seed: u64) -> Result<Self> {
        let arch = Arch::new(model.grid.nx, model.grid.ny);
        let normalizer = Normalizer::for_case(model, schedule, system)?;
        Self::new(arch, WellSlot::from_model(model), normalizer, seed)
    }

    pub fn zero_hidden(&self) -> HiddenState {
        HiddenState::zeros(&self.arch)
    }

    fn grid_shape(&self) -> [usize; 4] {
        [1, 1, self.arch.ny, self.arch.nx]
    }

    /// Records the parameters on `tape`, as trainable leaves when `track`
    /// is set.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Result<Bound> {
        let params: Vec<Var> = self
            .params
            .values()
            .iter()
            .map(|t| if track { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let mut wn = |l: &WnConv| -> Result<(Var, Var)> { Ok((tape.weight_norm(params[l.v], params[l.g])?, params[l.bias])) };
        let encoder = self.layout.encoder.iter().map(&mut wn).collect::<Result<_>>()?;
        let control = wn(&self.layout.control)?;
        let decoder = self.layout.decoder.iter().map(&mut wn).collect::<Result<_>>()?;
        let cell = self.layout.cell.map(|g| g.map(|i| params[i]));
        let cell_bias = self.layout.cell_bias.map(|i| params[i]);
        let head = (params[self.layout.head.0], params[self.layout.head.1]);
        Ok(Bound { params, encoder, control, cell, cell_bias, decoder, head })
    }

    /// Three `[conv 4×4 stride 2 → tanh]` blocks on a normalized
    /// `1 × 1 × H × W` map.
    pub fn encode_state(&self, tape: &mut Tape, b: &Bound, x_norm: Var) -> Result<Var> {
        let mut x = x_norm;
        for (l, &(w, bias)) in self.layout.encoder.iter().zip(&b.encoder) {
            let y = tape.conv2d(x, w, Some(bias), l.stride, l.pad)?;
            x = tape.tanh(y);
        }
        Ok(x)
    }

    /// The normalized controls placed at their well cells on an otherwise
    /// zero `1 × 1 × H × W` map.
    pub fn control_map(&self, u: &[f64]) -> Result<Tensor> {
        if u.len() != self.wells.len() {
            return Err(Error::Arch(format!("{} controls for {} wells", u.len(), self.wells.len())));
        }
        let mut map = Tensor::zeros(&self.grid_shape());
        for (w, &uw) in self.wells.iter().zip(u) {
            map.data_mut()[w.j * self.arch.nx + w.i] = self.normalizer.control(uw, w.kind);
        }
        Ok(map)
    }

    /// Control map → pixel-unshuffle → weight-normalized conv.
    pub fn encode_control(&self, tape: &mut Tape, b: &Bound, u: &[f64]) -> Result<Var> {
        let map = tape.constant(self.control_map(u)?);
        let packed = tape.pixel_unshuffle(map, self.arch.factor())?;
        let l = self.layout.control;
        Ok(tape.conv2d(packed, b.control.0, Some(b.control.1), l.stride, l.pad)?)
    }

    /// One step of the control-aware ConvLSTM; returns `(h_k, c_k)`.
    pub fn cell(&self, tape: &mut Tape, b: &Bound, h: Var, c: Var, ex: Var, eu: Var) -> Result<(Var, Var)> {
        let pad = self.layout.cell_pad;
        let mut gates = [h; 4];
        for (g, gate) in gates.iter_mut().enumerate() {
            let [wh, wx, wu] = b.cell[g];
            let a = tape.conv2d(h, wh, Some(b.cell_bias[g]), 1, pad)?;
            let bx = tape.conv2d(ex, wx, None, 1, pad)?;
            let bu = tape.conv2d(eu, wu, None, 1, pad)?;
            let s = tape.add(a, bx)?;
            let s = tape.add(s, bu)?;
            *gate = if g == 2 { tape.tanh(s) } else { tape.sigmoid(s) };
        }
        let [f, i, cand, o] = gates;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, cand)?;
        let c_new = tape.add(keep, write)?;
        let squashed = tape.tanh(c_new);
        let h_new = tape.mul(o, squashed)?;
        Ok((h_new, c_new))
    }

    /// Three `[upsample ×2 → conv 3×3 → tanh]` blocks, before the output
    /// layer.
    pub fn decode_features(&self, tape: &mut Tape, b: &Bound, h: Var) -> Result<Var> {
        let mut x = h;
        for (l, &(w, bias)) in self.layout.decoder.iter().zip(&b.decoder) {
            let up = tape.upsample_nearest(x, 2)?;
            let y = tape.conv2d(up, w, Some(bias), l.stride, l.pad)?;
            x = tape.tanh(y);
        }
        Ok(x)
    }

    /// Decoder blocks and the 1×1 single-filter output conv: the
    /// normalized pressure increment.
    pub fn decode(&self, tape: &mut Tape, b: &Bound, h: Var) -> Result<Var> {
        let x = self.decode_features(tape, b, h)?;
        Ok(tape.conv2d(x, b.head.0, Some(b.head.1), 1, 0)?)
    }

    /// Advances `(x, h, c)` by one step under control `u`; `x` in Pa.
    pub fn step(&self, tape: &mut Tape, b: &Bound, x: Var, h: Var, c: Var, u: &[f64]) -> Result<(Var, Var, Var)> {
        let n = &self.normalizer;
        let x_norm = tape.affine(x, 1.0 / n.p_scale, -n.p_ref / n.p_scale);
        let ex = self.encode_state(tape, b, x_norm)?;
        let eu = self.encode_control(tape, b, u)?;
        let (h, c) = self.cell(tape, b, h, c, ex, eu)?;
        let dx = self.decode(tape, b, h)?;
        let dx = tape.affine(dx, n.p_scale, 0.0);
        let x = tape.add(x, dx)?;
        Ok((x, h, c))
    }

    fn state_tensor(&self, x: &[f64]) -> Result<Tensor> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Tensor::new(self.grid_shape().to_vec(), x.to_vec())?)
    }

    /// Unrolls `steps` steps on `tape` from `x0`, applying `schedule`'s
    /// `u_{k−1}` on the way to `x_k`.
    pub fn rollout_on(
        &self,
        tape: &mut Tape,
        b: &Bound,
        x0: &[f64],
        hidden: &HiddenState,
        schedule: &ControlSchedule,
        steps: usize,
    ) -> Result<TapeRollout> {
        self.check_rollout(hidden, schedule, steps)?;
        let x0 = tape.constant(self.state_tensor(x0)?);
        let mut h = tape.constant(hidden.h.clone());
        let mut c = tape.constant(hidden.c.clone());
        let mut states = vec![x0];
        for k in 1..=steps {
            let (x, h_new, c_new) = self.step(tape, b, states[k - 1], h, c, schedule.control_at(k - 1)?)?;
            if !tape.value(x).is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            states.push(x);
            (h, c) = (h_new, c_new);
        }
        Ok(TapeRollout { states, h, c })
    }

    /// Value-only rollout. The tape is cut back after every step, so memory
    /// stays flat in `steps`. Returns `x_0..x_steps` and the final hidden
    /// state.
    pub fn rollout(&self, x0: &[f64], hidden: &HiddenState, schedule: &ControlSchedule, steps: usize) -> Result<(Trajectory, HiddenState)> {
        self.check_rollout(hidden, schedule, steps)?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false)?;
        let mark = tape.len();
        let mut x = self.state_tensor(x0)?;
        let mut state = hidden.clone();
        let mut states = vec![x0.to_vec()];
        for k in 1..=steps {
            let xv = tape.constant(x);
            let hv = tape.constant(state.h);
            let cv = tape.constant(state.c);
            let (xn, hn, cn) = self.step(&mut tape, &b, xv, hv, cv, schedule.control_at(k - 1)?)?;
            x = tape.value(xn).clone();
            if !x.is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            state = HiddenState { h: tape.value(hn).clone(), c: tape.value(cn).clone() };
            states.push(x.data().to_vec());
            tape.truncate(mark);
        }
        Ok((Trajectory { states, dt: schedule.dt(), provenance: Provenance::Nn }, state))
    }

    fn check_rollout(&self, hidden: &HiddenState, schedule: &ControlSchedule, steps: usize) -> Result<()> {
        hidden.check(&self.arch)?;
        if steps > schedule.len() {
            return Err(Error::Arch(format!("{steps} steps requested, schedule covers {}", schedule.len())));
        }
        if steps > 0 && schedule.wells() != self.wells.len() {
            return Err(Error::Arch(format!("schedule has {} wells, surrogate {}", schedule.wells(), self.wells.len())));
        }
        Ok(())
    }
}
