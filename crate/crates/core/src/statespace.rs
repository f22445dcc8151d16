//! Two-point flux approximation and Peaceman well model assembled into the
//! linear state-space form `V ẋ = T x + B u`.

use std::f64::consts::PI;

use crate::error::check_len;
use crate::model::{ControlKind, ReservoirModel};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Peaceman equivalent radius of a `dx × dy` block, m.
pub fn effective_radius(dx: f64, dy: f64) -> f64 {
    0.14 * (dx * dx + dy * dy).sqrt()
}

/// Well-block productivity index, m³/(Pa·s):
/// `2π K dz / (μ (ln(r_e/r_w) + s))`.
pub fn peaceman_pi(
    permeability: f64,
    dx: f64,
    dy: f64,
    dz: f64,
    viscosity: f64,
    radius: f64,
    skin: f64,
) -> Result<f64> {
    for (name, v) in [
        ("permeability", permeability),
        ("dx", dx),
        ("dy", dy),
        ("dz", dz),
        ("viscosity", viscosity),
        ("wellbore radius", radius),
    ] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    let denom = (effective_radius(dx, dy) / radius).ln() + skin;
    if !(denom > 0.0) {
        return Err(Error::DegenerateWell(denom));
    }
    Ok(2.0 * PI * permeability * dz / (viscosity * denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceAxis {
    X,
    Y,
}

/// Transmissibility of the face shared by two neighbouring cells, using the
/// harmonic mean of the cell permeabilities.
pub fn face_transmissibility(k_i: f64, k_j: f64, axis: FaceAxis, dx: f64, dy: f64, dz: f64, viscosity: f64) -> f64 {
    let (area, distance) = match axis {
        FaceAxis::X => (dy * dz, dx),
        FaceAxis::Y => (dx * dz, dy),
    };
    let sum = k_i + k_j;
    let harmonic = if sum > 0.0 { 2.0 * k_i * k_j / sum } else { 0.0 };
    area * harmonic / (viscosity * distance)
}

/// Assembled `V ẋ = T x + B u` for one reservoir model.
///
/// `T` carries the no-flow boundary implicitly (boundary faces contribute
/// nothing) and the BHP well sinks on its diagonal.
#[derive(Debug, Clone)]
pub struct StateSpaceSystem {
    pub nx: usize,
    pub ny: usize,
    /// Accumulation diagonal, m³/Pa.
    pub v: Vec<f64>,
    /// Transmissibility, m³/(Pa·s).
    pub t: CsrMatrix,
    /// Control location matrix, `n × m`.
    pub b: CsrMatrix,
    /// Productivity index of every well, including rate-controlled ones.
    pub pi: Vec<f64>,
    pub well_cells: Vec<usize>,
    pub well_kinds: Vec<ControlKind>,
    /// Per-cell BHP well sink (the part of `-T_ii` not balanced by faces).
    sink: Vec<f64>,
}

impl StateSpaceSystem {
    pub fn assemble(model: &ReservoirModel) -> Result<Self> {
        let violations = model.validate();
        if let Some(shared) = violations.iter().find_map(|v| match v {
            crate::model::Violation::SharedWellCell { i, j } => Some((*i, *j)),
            _ => None,
        }) {
            return Err(Error::DuplicateWellCell { i: shared.0, j: shared.1 });
        }
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidModel(msg.join("; ")));
        }

        let g = &model.grid;
        let r = &model.rock;
        let n = g.n();
        let m = model.wells.len();

        let v: Vec<f64> = r
            .porosity
            .iter()
            .map(|phi| g.cell_volume() * phi * r.compressibility)
            .collect();

        let mut triplets = Vec::with_capacity(5 * n);
        let mut diag = vec![0.0; n];
        let mut add_face = |a: usize, b: usize, tf: f64, diag: &mut [f64]| {
            triplets.push((a, b, tf));
            triplets.push((b, a, tf));
            diag[a] -= tf;
            diag[b] -= tf;
        };
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.index(i, j);
                if i + 1 < g.nx {
                    let e = g.index(i + 1, j);
                    let tf = face_transmissibility(r.permeability[c], r.permeability[e], FaceAxis::X, g.dx, g.dy, g.dz, r.viscosity);
                    add_face(c, e, tf, &mut diag);
                }
                if j + 1 < g.ny {
                    let s = g.index(i, j + 1);
                    let tf = face_transmissibility(r.permeability[c], r.permeability[s], FaceAxis::Y, g.dx, g.dy, g.dz, r.viscosity);
                    add_face(c, s, tf, &mut diag);
                }
            }
        }

        let mut sink = vec![0.0; n];
        let mut pi = Vec::with_capacity(m);
        let mut well_cells = Vec::with_capacity(m);
        let mut b_triplets = Vec::with_capacity(m);
        for (w, well) in model.wells.iter().enumerate() {
            let c = g.index(well.i, well.j);
            let index = peaceman_pi(r.permeability[c], g.dx, g.dy, g.dz, r.viscosity, well.radius, well.skin)?;
            match well.control {
                ControlKind::Bhp => {
                    sink[c] = index;
                    diag[c] -= index;
                    b_triplets.push((c, w, index));
                }
                ControlKind::Rate => b_triplets.push((c, w, 1.0)),
            }
            pi.push(index);
            well_cells.push(c);
        }
        triplets.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));

        Ok(Self {
            nx: g.nx,
            ny: g.ny,
            v,
            t: CsrMatrix::from_triplets(n, n, &triplets),
            b: CsrMatrix::from_triplets(n, m, &b_triplets),
            pi,
            well_cells,
            well_kinds: model.wells.iter().map(|w| w.control).collect(),
            sink,
        })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn m(&self) -> usize {
        self.pi.len()
    }

    /// Well sink on the diagonal of `T` for each cell (0 without a BHP well).
    pub fn sink(&self) -> &[f64] {
        &self.sink
    }

    /// `T x` in flux form, `Σ_j T_ij (x_j − x_i) − sink_i x_i`, so a uniform
    /// field without wells maps to exactly zero.
    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n());
        (0..self.n())
            .map(|i| {
                let xi = x[i];
                let mut acc = 0.0;
                for (j, tij) in self.t.row(i) {
                    if j != i {
                        acc += tij * (x[j] - xi);
                    }
                }
                acc - self.sink[i] * xi
            })
            .collect()
    }

    pub fn apply_b(&self, u: &[f64]) -> Vec<f64> {
        self.b.mul_vec(u)
    }

    /// `V/Δt − T`, the backward-Euler system matrix.
    pub fn implicit_matrix(&self, dt: f64) -> CsrMatrix {
        let d: Vec<f64> = self.v.iter().map(|v| v / dt).collect();
        self.t.add_diagonal(-1.0, &d, 1.0)
    }

    /// `−V (x_k − x_{k−1})/Δt + T x_k + B u_k`, m³/s per cell.
    pub fn residual(&self, x_k: &[f64], x_km1: &[f64], u_k: &[f64], dt: f64) -> Result<Vec<f64>> {
        let n = self.n();
        check_len("state x_k", n, x_k.len())?;
        check_len("state x_{k-1}", n, x_km1.len())?;
        check_len("control vector", self.m(), u_k.len())?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let tx = self.apply_t(x_k);
        let bu = self.apply_b(u_k);
        Ok((0..n)
            .map(|i| -self.v[i] * (x_k[i] - x_km1[i]) / dt + tx[i] + bu[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Grid, RockFluid, WellSpec};
    use crate::units::{to_si, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MD50: f64 = 50.0 * 9.869233e-16;
    const CP113: f64 = 1.13e-3;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn model(nx: usize, ny: usize, wells: Vec<WellSpec>) -> ReservoirModel {
        let grid = Grid::new(nx, ny, 0.625, 0.625, 1.0);
        let rock = RockFluid::homogeneous(grid.n(), 0.2, MD50, CP113, to_si(1e-5, Unit::PerPsi), to_si(3000.0, Unit::Psi));
        ReservoirModel::new(grid, rock, wells)
    }

    fn random_model(nx: usize, ny: usize, seed: u64) -> ReservoirModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = model(nx, ny, vec![WellSpec::bhp("P", 1, 1, 0.09), WellSpec::rate("I", nx - 2, ny - 2, 0.09)]);
        for k in m.rock.permeability.iter_mut() {
            *k = MD50 * 10f64.powf(rng.random_range(-1.5..1.5));
        }
        for p in m.rock.porosity.iter_mut() {
            *p = rng.random_range(0.05..0.35);
        }
        m
    }

    #[test]
    fn effective_radius_of_reference_block() {
        assert!(rel(effective_radius(0.625, 0.625), 0.1237437) < 1e-6);
    }

    #[test]
    fn productivity_index_hand_value() {
        let pi = peaceman_pi(MD50, 0.625, 0.625, 1.0, CP113, 0.09, 0.0).unwrap();
        // independently evaluated: 8.617436e-10
        assert!(rel(pi, 8.617436095e-10) < 1e-8, "{pi}");
        let doubled = peaceman_pi(MD50, 0.625, 0.625, 2.0, CP113, 0.09, 0.0).unwrap();
        assert_eq!(doubled, 2.0 * pi);
    }

    #[test]
    fn degenerate_well_rejected() {
        assert!(matches!(
            peaceman_pi(MD50, 0.625, 0.625, 1.0, CP113, 0.2, 0.0),
            Err(Error::DegenerateWell(_))
        ));
        assert!(matches!(
            peaceman_pi(MD50, 0.625, 0.625, 1.0, CP113, 0.09, -1.0),
            Err(Error::DegenerateWell(_))
        ));
    }

    #[test]
    fn face_transmissibility_values() {
        let tf = face_transmissibility(MD50, MD50, FaceAxis::X, 0.625, 0.625, 1.0, CP113);
        assert!(rel(tf, 4.3669172566e-11) < 1e-9, "{tf}");
        let ty = face_transmissibility(MD50, MD50, FaceAxis::Y, 0.625, 0.625, 1.0, CP113);
        assert_eq!(tf, ty);
        assert_eq!(face_transmissibility(0.0, MD50, FaceAxis::X, 1.0, 1.0, 1.0, 1.0), 0.0);
        assert!(face_transmissibility(1e-30, MD50, FaceAxis::X, 1.0, 1.0, 1.0, 1.0) < 1e-29);
    }

    #[test]
    fn single_cell_with_bhp_well() {
        let mut m = model(1, 1, vec![WellSpec::bhp("P", 0, 0, 0.09)]);
        m.grid.dx = 2.0;
        m.grid.dy = 2.0;
        let s = StateSpaceSystem::assemble(&m).unwrap();
        let pi = s.pi[0];
        assert_eq!(s.t.to_dense(), vec![vec![-pi]]);
        assert_eq!(s.b.to_dense(), vec![vec![pi]]);
        assert_eq!(s.v, vec![4.0 * 0.2 * m.rock.compressibility]);

        let p0 = to_si(3000.0, Unit::Psi);
        let pwf = to_si(1800.0, Unit::Psi);
        let r = s.residual(&[p0], &[p0], &[pwf], 43200.0).unwrap();
        assert!(rel(r[0], pi * (pwf - p0)) < 1e-12);
        assert!(r[0] < 0.0);
    }

    #[test]
    fn two_cells_no_wells() {
        let s = StateSpaceSystem::assemble(&model(2, 1, vec![])).unwrap();
        let tf = face_transmissibility(MD50, MD50, FaceAxis::X, 0.625, 0.625, 1.0, CP113);
        assert_eq!(s.t.to_dense(), vec![vec![-tf, tf], vec![tf, -tf]]);
        assert_eq!(s.m(), 0);
    }

    #[test]
    fn reference_case_layout() {
        let s = StateSpaceSystem::assemble(&model(64, 64, vec![WellSpec::bhp("P1", 10, 10, 0.09), WellSpec::bhp("P2", 54, 54, 0.09)])).unwrap();
        assert_eq!((s.n(), s.m()), (4096, 2));
        let b = s.b.triplets();
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].0, b[0].1), (10 * 64 + 10, 0));
        assert_eq!((b[1].0, b[1].1), (54 * 64 + 54, 1));
    }

    #[test]
    fn duplicate_well_cell_rejected() {
        let m = model(4, 4, vec![WellSpec::bhp("A", 1, 1, 0.09), WellSpec::rate("B", 1, 1, 0.09)]);
        assert!(matches!(StateSpaceSystem::assemble(&m), Err(Error::DuplicateWellCell { i: 1, j: 1 })));
    }

    #[test]
    fn uniform_pressure_is_steady_without_wells() {
        let mut m = random_model(6, 5, 3);
        m.wells.clear();
        let s = StateSpaceSystem::assemble(&m).unwrap();
        let x = vec![m.rock.initial_pressure; s.n()];
        for dt in [1.0, 43200.0, 1e9] {
            assert!(s.residual(&x, &x, &[], dt).unwrap().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn structure_on_random_fields() {
        for seed in 0..5 {
            let m = random_model(8, 7, seed);
            let s = StateSpaceSystem::assemble(&m).unwrap();
            let dense = s.t.to_dense();
            let n = s.n();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(dense[i][j], dense[j][i]);
                    if i != j {
                        assert!(dense[i][j] >= 0.0);
                    }
                }
                let row_sum: f64 = dense[i].iter().sum();
                let scale = dense[i][i].abs();
                assert!((row_sum + s.sink()[i]).abs() <= 1e-12 * scale);
            }
            // one nonzero per column of B, at the well cell
            for (w, &cell) in s.well_cells.iter().enumerate() {
                let col: Vec<_> = s.b.triplets().into_iter().filter(|t| t.1 == w).collect();
                assert_eq!(col.len(), 1);
                assert_eq!(col[0].0, cell);
            }
            assert_eq!(s.b.get(s.well_cells[1], 1), 1.0);
        }
    }

    #[test]
    fn permeability_scaling() {
        let m = random_model(5, 4, 9);
        let mut scaled = m.clone();
        for k in scaled.rock.permeability.iter_mut() {
            *k *= 4.0;
        }
        let a = StateSpaceSystem::assemble(&m).unwrap();
        let b = StateSpaceSystem::assemble(&scaled).unwrap();
        for ((r1, c1, v1), (r2, c2, v2)) in a.t.triplets().into_iter().zip(b.t.triplets()) {
            assert_eq!((r1, c1), (r2, c2));
            assert!((v2 - 4.0 * v1).abs() <= 1e-14 * v2.abs());
        }
        for (p1, p2) in a.pi.iter().zip(&b.pi) {
            assert!(rel(*p2, 4.0 * p1) < 1e-14);
        }
        assert!(rel(b.b.get(a.well_cells[0], 0), 4.0 * a.b.get(a.well_cells[0], 0)) < 1e-14);
    }

    #[test]
    fn residual_dimension_checks() {
        let s = StateSpaceSystem::assemble(&model(3, 3, vec![WellSpec::bhp("P", 1, 1, 0.09)])).unwrap();
        let x = vec![1.0; 9];
        assert!(matches!(s.residual(&x[..8], &x, &[0.0], 1.0), Err(Error::Dimension { .. })));
        assert!(matches!(s.residual(&x, &x, &[], 1.0), Err(Error::Dimension { .. })));
        assert!(s.residual(&x, &x, &[0.0], 0.0).is_err());
    }

    #[test]
    fn flux_form_matches_matrix_product() {
        let m = random_model(6, 6, 11);
        let s = StateSpaceSystem::assemble(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..s.n()).map(|_| rng.random_range(1e7..2e7)).collect();
        let a = s.apply_t(&x);
        let b = s.t.mul_vec(&x);
        let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-9 * scale);
        }
    }
}
