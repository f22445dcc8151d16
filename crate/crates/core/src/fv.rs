//! Backward-Euler finite-volume reference simulator.
//!
//! Each step solves `(V/Δt − T) x_{k+1} = (V/Δt) x_k + B u_k`, the same
//! discrete equations whose residual drives surrogate training.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::model::ControlKind;
use crate::schedule::ControlSchedule;
use crate::sparse::CsrMatrix;
use crate::statespace::StateSpaceSystem;
use crate::trajectory::{Provenance, Trajectory};
use crate::{Error, Result};

/// Largest system the dense direct solver accepts.
pub const DENSE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    ConjugateGradient,
    /// Conjugate gradient with a Jacobi (diagonal) preconditioner.
    JacobiCg,
    /// Cholesky factorization; only for `n ≤ DENSE_LIMIT`.
    DenseDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative residual `‖A x − b‖₂ / ‖b‖₂` at which iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            method: SolverMethod::ConjugateGradient,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!("solver tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("solver needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Achieved `‖A x − b‖₂ / ‖b‖₂`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// `guess` seeds the iterative methods; a guess that already satisfies the
/// tolerance is returned untouched.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], guess: Option<&[f64]>, cfg: &SolverConfig) -> Result<SolveStats> {
    cfg.validate()?;
    let n = a.nrows();
    check_len("matrix columns", n, a.ncols())?;
    check_len("right-hand side", n, b.len())?;
    if let Some(g) = guess {
        check_len("initial guess", n, g.len())?;
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(SolveStats { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    match cfg.method {
        SolverMethod::DenseDirect => dense_direct(a, b, b_norm),
        SolverMethod::ConjugateGradient => conjugate_gradient(a, b, b_norm, guess, None, cfg),
        SolverMethod::JacobiCg => {
            let inv_diag = a
                .diagonal()
                .into_iter()
                .map(|d| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::NotPositiveDefinite) })
                .collect::<Result<Vec<_>>>()?;
            conjugate_gradient(a, b, b_norm, guess, Some(&inv_diag), cfg)
        }
    }
}

fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    b_norm: f64,
    guess: Option<&[f64]>,
    inv_diag: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<SolveStats> {
    let n = b.len();
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ax = vec![0.0; n];
    a.mul_vec_into(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let target = cfg.tolerance * b_norm;
    let mut r_norm = norm(&r);
    if r_norm <= target {
        return Ok(SolveStats { x, iterations: 0, relative_residual: r_norm / b_norm });
    }

    let precondition = |r: &[f64]| -> Vec<f64> {
        match inv_diag {
            Some(d) => r.iter().zip(d).map(|(ri, di)| ri * di).collect(),
            None => r.to_vec(),
        }
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for it in 1..=cfg.max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        r_norm = norm(&r);
        if r_norm <= target {
            // recursive residual drifts from the true one; confirm before accepting
            a.mul_vec_into(&x, &mut ax);
            let true_norm = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
            if true_norm <= target {
                return Ok(SolveStats { x, iterations: it, relative_residual: true_norm / b_norm });
            }
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: r_norm / b_norm,
    })
}

fn dense_direct(a: &CsrMatrix, b: &[f64], b_norm: f64) -> Result<SolveStats> {
    let n = b.len();
    if n > DENSE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "dense direct solve limited to n <= {DENSE_LIMIT}, got {n}"
        )));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in a.triplets() {
        m[(r, c)] = v;
    }
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    let x: Vec<f64> = x.iter().copied().collect();
    let ax = a.mul_vec(&x);
    let res = norm(&b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect::<Vec<_>>());
    Ok(SolveStats { x, iterations: 1, relative_residual: res / b_norm })
}

/// Backward-Euler right-hand side `(V/Δt) x_k + B u_k`.
fn implicit_rhs(system: &StateSpaceSystem, x_k: &[f64], u_k: &[f64], dt: f64) -> Vec<f64> {
    let bu = system.apply_b(u_k);
    x_k.iter()
        .zip(&system.v)
        .zip(&bu)
        .map(|((x, v), b)| v / dt * x + b)
        .collect()
}

fn check_step_inputs(system: &StateSpaceSystem, x_k: &[f64], u_k: &[f64], dt: f64) -> Result<()> {
    check_len("state", system.n(), x_k.len())?;
    check_len("control vector", system.m(), u_k.len())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// One implicit step `x_k → x_{k+1}` under control `u_k`.
pub fn step(system: &StateSpaceSystem, x_k: &[f64], u_k: &[f64], dt: f64, cfg: &SolverConfig) -> Result<Vec<f64>> {
    check_step_inputs(system, x_k, u_k, dt)?;
    let a = system.implicit_matrix(dt);
    let rhs = implicit_rhs(system, x_k, u_k, dt);
    Ok(solve_spd(&a, &rhs, Some(x_k), cfg)?.x)
}

/// Marches `x0` through every step of `schedule`, returning `len + 1`
/// snapshots.
///
/// A failing step aborts with [`Error::Simulation`], which carries the
/// snapshots computed so far.
pub fn simulate(system: &StateSpaceSystem, x0: &[f64], schedule: &ControlSchedule, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_len("initial state", system.n(), x0.len())?;
    check_len("schedule well count", system.m(), schedule.wells())?;
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("schedule has no steps".into()));
    }
    let dt = schedule.dt();
    let a = system.implicit_matrix(dt);
    let mut states = Vec::with_capacity(schedule.len() + 1);
    states.push(x0.to_vec());
    for k in 0..schedule.len() {
        let u = schedule.control_at(k)?;
        let x_k = states.last().unwrap();
        let rhs = implicit_rhs(system, x_k, u, dt);
        match solve_spd(&a, &rhs, Some(x_k), cfg) {
            Ok(sol) => states.push(sol.x),
            Err(source) => {
                return Err(Error::Simulation {
                    step: k,
                    partial: Box::new(Trajectory { states, dt, provenance: Provenance::Fv }),
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(Trajectory { states, dt, provenance: Provenance::Fv })
}

/// Per-well volumetric rate, m³/s. BHP wells report the Peaceman rate
/// `PI (p_cell − p_wf)`, positive for production; rate wells echo their
/// control.
pub fn well_rates(system: &StateSpaceSystem, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("state", system.n(), x.len())?;
    check_len("control vector", system.m(), u.len())?;
    Ok(system
        .well_kinds
        .iter()
        .enumerate()
        .map(|(w, kind)| match kind {
            ControlKind::Bhp => system.pi[w] * (x[system.well_cells[w]] - u[w]),
            ControlKind::Rate => u[w],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                if i == j {
                    v += n as f64 * 0.1;
                }
                t.push((i, j, v));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    /// Gaussian elimination with partial pivoting, independent of nalgebra.
    fn gauss(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m = a.to_dense();
        let mut rhs = b.to_vec();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, p);
            rhs.swap(c, p);
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
            x[r] = (rhs[r] - s) / m[r][r];
        }
        x
    }

    #[test]
    fn identity_and_diagonal() {
        let eye = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let b = [1.0, -2.0, 3.5];
        for method in [SolverMethod::ConjugateGradient, SolverMethod::JacobiCg, SolverMethod::DenseDirect] {
            let cfg = SolverConfig { method, ..Default::default() };
            assert_eq!(solve_spd(&eye, &b, None, &cfg).unwrap().x, b.to_vec());
        }
        let d = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 4.0), (2, 2, 8.0)]);
        let x = solve_spd(&d, &b, None, &SolverConfig::default()).unwrap().x;
        for i in 0..3 {
            assert!((x[i] - b[i] / d.get(i, i)).abs() < 1e-14);
        }
    }

    #[test]
    fn random_spd_matches_elimination() {
        for seed in 0..4 {
            let a = random_spd(8, seed);
            let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
            let oracle = gauss(&a, &b);
            for method in [SolverMethod::ConjugateGradient, SolverMethod::JacobiCg, SolverMethod::DenseDirect] {
                let cfg = SolverConfig { method, tolerance: 1e-13, ..Default::default() };
                let sol = solve_spd(&a, &b, None, &cfg).unwrap();
                for (x, o) in sol.x.iter().zip(&oracle) {
                    assert!((x - o).abs() < 1e-8 * o.abs().max(1.0), "{method:?}");
                }
            }
        }
    }

    #[test]
    fn non_convergence_reported() {
        let a = random_spd(30, 7);
        let b = vec![1.0; 30];
        let cfg = SolverConfig { max_iterations: 2, ..Default::default() };
        match solve_spd(&a, &b, None, &cfg) {
            Err(Error::NoConvergence { iterations: 2, residual }) => assert!(residual > 1e-10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        let cfg = SolverConfig { method: SolverMethod::DenseDirect, ..Default::default() };
        assert!(matches!(solve_spd(&a, &[1.0, 1.0], None, &cfg), Err(Error::NotPositiveDefinite)));
        let cfg = SolverConfig::default();
        assert!(matches!(solve_spd(&a, &[0.0, 1.0], None, &cfg), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn bad_config_rejected() {
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]);
        for cfg in [
            SolverConfig { tolerance: 0.0, ..Default::default() },
            SolverConfig { tolerance: 1.0, ..Default::default() },
            SolverConfig { max_iterations: 0, ..Default::default() },
        ] {
            assert!(solve_spd(&a, &[1.0], None, &cfg).is_err());
        }
    }
}
