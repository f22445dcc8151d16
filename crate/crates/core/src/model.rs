//! Grid, rock/fluid properties and well descriptions.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Single-layer Cartesian grid. Cells are numbered `j * nx + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, dz: f64) -> Self {
        Self { nx, ny, dx, dy, dz }
    }

    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.nx && j < self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }
}

/// Rock and fluid properties in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RockFluid {
    /// Per-cell porosity, dimensionless.
    pub porosity: Vec<f64>,
    /// Per-cell isotropic permeability, m².
    pub permeability: Vec<f64>,
    /// Pa·s
    pub viscosity: f64,
    /// Total compressibility, 1/Pa.
    pub compressibility: f64,
    /// Pa
    pub initial_pressure: f64,
    /// kg/m³. Carried as metadata; it cancels out of the slightly
    /// compressible formulation.
    pub density: f64,
}

impl RockFluid {
    /// Uniform properties on `n` cells.
    pub fn homogeneous(
        n: usize,
        porosity: f64,
        permeability: f64,
        viscosity: f64,
        compressibility: f64,
        initial_pressure: f64,
    ) -> Self {
        Self {
            porosity: vec![porosity; n],
            permeability: vec![permeability; n],
            viscosity,
            compressibility,
            initial_pressure,
            density: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    /// Bottomhole pressure, Pa.
    Bhp,
    /// Volumetric rate, m³/s, positive for injection.
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub name: String,
    pub i: usize,
    pub j: usize,
    /// Wellbore radius, m.
    pub radius: f64,
    pub skin: f64,
    pub control: ControlKind,
}

impl WellSpec {
    pub fn bhp(name: impl Into<String>, i: usize, j: usize, radius: f64) -> Self {
        Self {
            name: name.into(),
            i,
            j,
            radius,
            skin: 0.0,
            control: ControlKind::Bhp,
        }
    }

    pub fn rate(name: impl Into<String>, i: usize, j: usize, radius: f64) -> Self {
        Self {
            control: ControlKind::Rate,
            ..Self::bhp(name, i, j, radius)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirModel {
    pub grid: Grid,
    pub rock: RockFluid,
    pub wells: Vec<WellSpec>,
}

/// One broken invariant found by [`ReservoirModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyGrid,
    NonPositiveCellSize,
    FieldLength { field: &'static str, expected: usize, got: usize },
    Porosity { cell: usize, value: f64 },
    Permeability { cell: usize, value: f64 },
    NonPositive { property: &'static str, value: f64 },
    WellOutsideGrid { well: String, i: usize, j: usize },
    WellRadius { well: String, radius: f64 },
    WellRadiusExceedsBlock { well: String, radius: f64, effective: f64 },
    SharedWellCell { i: usize, j: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGrid => write!(f, "grid must have at least one cell in each direction"),
            Violation::NonPositiveCellSize => write!(f, "cell sizes dx, dy, dz must be positive"),
            Violation::FieldLength { field, expected, got } => {
                write!(f, "{field} field has {got} values, grid has {expected} cells")
            }
            Violation::Porosity { cell, value } => {
                if *value <= 0.0 {
                    write!(f, "porosity must be positive (cell {cell}: {value})")
                } else {
                    write!(f, "porosity must be below 1 (cell {cell}: {value})")
                }
            }
            Violation::Permeability { cell, value } => {
                write!(f, "permeability must be positive (cell {cell}: {value})")
            }
            Violation::NonPositive { property, value } => {
                write!(f, "{property} must be positive (got {value})")
            }
            Violation::WellOutsideGrid { well, i, j } => {
                write!(f, "well outside grid: {well} at ({i}, {j})")
            }
            Violation::WellRadius { well, radius } => {
                write!(f, "wellbore radius of {well} must be positive (got {radius})")
            }
            Violation::WellRadiusExceedsBlock { well, radius, effective } => write!(
                f,
                "wellbore radius of {well} ({radius} m) must be below the block effective radius ({effective} m)"
            ),
            Violation::SharedWellCell { i, j } => write!(f, "more than one well in cell ({i}, {j})"),
        }
    }
}

impl ReservoirModel {
    pub fn new(grid: Grid, rock: RockFluid, wells: Vec<WellSpec>) -> Self {
        Self { grid, rock, wells }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn well_cell(&self, w: usize) -> usize {
        let well = &self.wells[w];
        self.grid.index(well.i, well.j)
    }

    /// Collects every broken invariant; an empty list means the model can be
    /// assembled.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 {
            out.push(Violation::EmptyGrid);
        }
        if !(g.dx > 0.0 && g.dy > 0.0 && g.dz > 0.0) {
            out.push(Violation::NonPositiveCellSize);
        }
        let n = g.n();
        let r = &self.rock;
        for (field, len) in [("porosity", r.porosity.len()), ("permeability", r.permeability.len())] {
            if len != n {
                out.push(Violation::FieldLength { field, expected: n, got: len });
            }
        }
        if let Some((cell, &value)) = r
            .porosity
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p < 1.0))
        {
            out.push(Violation::Porosity { cell, value });
        }
        if let Some((cell, &value)) = r
            .permeability
            .iter()
            .enumerate()
            .find(|(_, &k)| !(k > 0.0 && k.is_finite()))
        {
            out.push(Violation::Permeability { cell, value });
        }
        for (property, value) in [
            ("viscosity", r.viscosity),
            ("compressibility", r.compressibility),
            ("initial pressure", r.initial_pressure),
            ("density", r.density),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                out.push(Violation::NonPositive { property, value });
            }
        }

        let effective = crate::statespace::effective_radius(g.dx, g.dy);
        let mut cells = std::collections::HashSet::new();
        for well in &self.wells {
            if !g.contains(well.i, well.j) {
                out.push(Violation::WellOutsideGrid {
                    well: well.name.clone(),
                    i: well.i,
                    j: well.j,
                });
            } else if !cells.insert((well.i, well.j)) {
                out.push(Violation::SharedWellCell { i: well.i, j: well.j });
            }
            if !(well.radius > 0.0) {
                out.push(Violation::WellRadius {
                    well: well.name.clone(),
                    radius: well.radius,
                });
            } else if well.radius >= effective {
                out.push(Violation::WellRadiusExceedsBlock {
                    well: well.name.clone(),
                    radius: well.radius,
                    effective,
                });
            }
        }
        out
    }
}
