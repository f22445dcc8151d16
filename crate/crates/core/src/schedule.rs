use serde::{Deserialize, Serialize};

use crate::model::{ControlKind, ReservoirModel};
use crate::{Error, Result};

/// Per-step well controls `u_k`, stored densely step-major.
///
/// `u_k` is applied over the interval `[k·Δt, (k+1)·Δt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    wells: usize,
    steps: usize,
    /// Seconds.
    dt: f64,
    values: Vec<f64>,
}

/// A piece of a piecewise-constant schedule: `controls` hold from `start`
/// (seconds, inclusive) until the next segment starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub controls: Vec<f64>,
}

impl ControlSchedule {
    /// Builds from one control vector per step.
    pub fn new(dt: f64, per_step: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let wells = per_step.first().map_or(0, Vec::len);
        let steps = per_step.len();
        let mut values = Vec::with_capacity(wells * steps);
        for u in per_step {
            crate::error::check_len("control vector", wells, u.len())?;
            values.extend(u);
        }
        Ok(Self { wells, steps, dt, values })
    }

    pub fn constant(controls: &[f64], dt: f64, steps: usize) -> Result<Self> {
        Self::new(dt, vec![controls.to_vec(); steps])
    }

    /// Samples piecewise-constant segments at `t_k = k·Δt`, left-closed.
    ///
    /// Segments must be sorted by start time and the first must start at
    /// or before zero.
    pub fn from_segments(segments: &[Segment], dt: f64, steps: usize) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidArgument("schedule needs at least one segment".into()))?;
        if first.start > 0.0 {
            return Err(Error::InvalidArgument("first schedule segment must start at time 0".into()));
        }
        if segments.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::InvalidArgument("schedule segments must have increasing start times".into()));
        }
        let per_step = (0..steps)
            .map(|k| {
                let t = k as f64 * dt;
                // tolerate round-off in `k·Δt` against a segment boundary
                let slack = 1e-9 * dt;
                let seg = segments.iter().rev().find(|s| s.start <= t + slack).unwrap_or(first);
                seg.controls.clone()
            })
            .collect();
        Self::new(dt, per_step)
    }

    pub fn wells(&self) -> usize {
        self.wells
    }

    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn control_at(&self, k: usize) -> Result<&[f64]> {
        if k >= self.steps {
            return Err(Error::StepOutOfRange { k, len: self.steps });
        }
        Ok(&self.values[k * self.wells..(k + 1) * self.wells])
    }

    /// Steps `from..from + len` as a new schedule, e.g. the future controls
    /// used for extrapolation.
    pub fn window(&self, from: usize, len: usize) -> Result<Self> {
        if from + len > self.steps {
            return Err(Error::StepOutOfRange { k: from + len, len: self.steps });
        }
        Ok(Self {
            wells: self.wells,
            steps: len,
            dt: self.dt,
            values: self.values[from * self.wells..(from + len) * self.wells].to_vec(),
        })
    }

    /// Appends `other` after this schedule.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        crate::error::check_len("schedule well count", self.wells, other.wells)?;
        if self.dt != other.dt {
            return Err(Error::InvalidArgument("schedules have different time steps".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            wells: self.wells,
            steps: self.steps + other.steps,
            dt: self.dt,
            values,
        })
    }

    /// Non-fatal findings: production BHP at or above the initial pressure.
    pub fn warnings(&self, model: &ReservoirModel) -> Vec<String> {
        let mut out = Vec::new();
        if model.wells.len() != self.wells {
            out.push(format!(
                "schedule controls {} wells, model has {}",
                self.wells,
                model.wells.len()
            ));
            return out;
        }
        for (w, well) in model.wells.iter().enumerate() {
            if well.control != ControlKind::Bhp {
                continue;
            }
            if let Some(k) = (0..self.steps).find(|&k| self.values[k * self.wells + w] >= model.rock.initial_pressure) {
                out.push(format!(
                    "well {} BHP at step {k} is not below the initial pressure",
                    well.name
                ));
            }
        }
        out
    }

    /// Smallest prescribed BHP over all steps, if any well is BHP-controlled.
    pub fn min_bhp(&self, model: &ReservoirModel) -> Option<f64> {
        let mut min: Option<f64> = None;
        for (w, well) in model.wells.iter().enumerate() {
            if well.control != ControlKind::Bhp || w >= self.wells {
                continue;
            }
            for k in 0..self.steps {
                let v = self.values[k * self.wells + w];
                min = Some(min.map_or(v, |m| m.min(v)));
            }
        }
        min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{to_si, Unit};

    #[test]
    fn constant_schedule() {
        let bhp = to_si(1800.0, Unit::Psi);
        let s = ControlSchedule::constant(&[bhp, bhp], 43200.0, 400).unwrap();
        for k in [0, 17, 399] {
            let u = s.control_at(k).unwrap();
            assert!((u[0] - 1.2410563e7).abs() < 1.0);
            assert_eq!(u[0], u[1]);
        }
        assert!(matches!(s.control_at(400), Err(Error::StepOutOfRange { k: 400, len: 400 })));
    }

    #[test]
    fn segments_are_left_closed() {
        let day = 86400.0;
        let segs = vec![
            Segment { start: 0.0, controls: vec![1.0] },
            Segment { start: 50.0 * day, controls: vec![2.0] },
        ];
        let s = ControlSchedule::from_segments(&segs, 0.5 * day, 200).unwrap();
        // k = 99 sits at day 49.5, k = 100 at day 50.0
        assert_eq!(s.control_at(99).unwrap(), &[1.0]);
        assert_eq!(s.control_at(100).unwrap(), &[2.0]);
        for k in 100..200 {
            assert_eq!(s.control_at(k).unwrap().to_vec(), s.control_at(100).unwrap().to_vec());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ControlSchedule::new(0.0, vec![vec![1.0]]).is_err());
        assert!(ControlSchedule::new(1.0, vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let late = [Segment { start: 1.0, controls: vec![1.0] }];
        assert!(ControlSchedule::from_segments(&late, 1.0, 3).is_err());
    }

    #[test]
    fn window_and_concat_invert() {
        let s = ControlSchedule::new(1.0, (0..10).map(|k| vec![k as f64, -(k as f64)]).collect()).unwrap();
        let a = s.window(0, 4).unwrap();
        let b = s.window(4, 6).unwrap();
        assert_eq!(a.concat(&b).unwrap(), s);
        assert_eq!(b.control_at(0).unwrap(), &[4.0, -4.0]);
        assert!(s.window(5, 6).is_err());
    }
}
