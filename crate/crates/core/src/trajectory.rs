use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    /// Finite-volume reference solution.
    Fv,
    /// Surrogate network prediction.
    Nn,
}

/// Pressure snapshots `x_0..x_t` (Pa) at a fixed step `dt` (s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, dt: f64, provenance: Provenance) -> Result<Self> {
        let traj = Self { states, dt, provenance };
        traj.check()?;
        Ok(traj)
    }

    /// Checks equal snapshot lengths and finite values.
    pub fn check(&self) -> Result<()> {
        let n = self.state_len();
        for (k, x) in self.states.iter().enumerate() {
            crate::error::check_len("trajectory snapshot", n, x.len())?;
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(k * n + i));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_len(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Row-major `[snapshots, n]` buffer.
    pub fn flatten(&self) -> Vec<f64> {
        self.states.concat()
    }
}
