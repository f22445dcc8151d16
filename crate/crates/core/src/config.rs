//! JSON case description.
//!
//! Every physical quantity is either a bare number (taken as SI) or an
//! object `{"value": 1800, "unit": "psi"}`. Per-cell fields additionally
//! accept `{"file": "perm.parr", "unit": "mD"}` pointing at a portable array
//! with `nx·ny` values (`[ny, nx]` or flat). See the project README for a
//! complete example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fv::SolverConfig;
use crate::model::{ControlKind, Grid, ReservoirModel, RockFluid, WellSpec};
use crate::parr::PortableArray;
use crate::schedule::{ControlSchedule, Segment};
use crate::units::Unit;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Si(f64),
    Tagged { value: f64, unit: String },
}

impl Quantity {
    pub fn tagged(value: f64, unit: Unit) -> Self {
        Quantity::Tagged { value, unit: unit.tag().to_string() }
    }

    pub fn si(&self, key: &str) -> Result<f64> {
        match self {
            Quantity::Si(v) => Ok(*v),
            Quantity::Tagged { value, unit } => {
                let unit: Unit = unit.parse().map_err(|e: Error| Error::config(key, e.to_string()))?;
                Ok(crate::units::to_si(*value, unit))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Uniform(Quantity),
    File {
        file: PathBuf,
        #[serde(default)]
        unit: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: Quantity,
    pub dy: Quantity,
    #[serde(default = "default_dz")]
    pub dz: Quantity,
}

fn default_dz() -> Quantity {
    Quantity::Si(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockConfig {
    pub porosity: FieldSpec,
    pub permeability: FieldSpec,
    pub viscosity: Quantity,
    pub compressibility: Quantity,
    pub initial_pressure: Quantity,
    #[serde(default = "default_density")]
    pub density: Quantity,
}

fn default_density() -> Quantity {
    Quantity::Si(1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellConfig {
    pub name: String,
    pub i: usize,
    pub j: usize,
    pub radius: Quantity,
    #[serde(default)]
    pub skin: f64,
    pub control: ControlKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub start: Quantity,
    pub controls: Vec<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub dt: Quantity,
    pub steps: usize,
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub grid: GridConfig,
    pub rock: RockConfig,
    pub wells: Vec<WellConfig>,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// A fully resolved case in SI units.
#[derive(Debug, Clone)]
pub struct Case {
    pub model: ReservoirModel,
    pub schedule: ControlSchedule,
    pub solver: SolverConfig,
}

impl Case {
    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.model.rock.initial_pressure; self.model.n()]
    }
}

/// Deserializes `T` from JSON text, reporting the path of the offending key.
pub fn from_json_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::config(key, e.into_inner().to_string())
    })
}

impl CaseConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        from_json_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Converts to SI and checks the model invariants. Relative field file
    /// paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Case> {
        let g = &self.grid;
        let grid = Grid::new(g.nx, g.ny, g.dx.si("grid.dx")?, g.dy.si("grid.dy")?, g.dz.si("grid.dz")?);
        let n = grid.n();
        let r = &self.rock;
        let rock = RockFluid {
            porosity: resolve_field(&r.porosity, n, base_dir, "rock.porosity")?,
            permeability: resolve_field(&r.permeability, n, base_dir, "rock.permeability")?,
            viscosity: r.viscosity.si("rock.viscosity")?,
            compressibility: r.compressibility.si("rock.compressibility")?,
            initial_pressure: r.initial_pressure.si("rock.initial_pressure")?,
            density: r.density.si("rock.density")?,
        };
        let wells = self
            .wells
            .iter()
            .enumerate()
            .map(|(w, cfg)| {
                Ok(WellSpec {
                    name: cfg.name.clone(),
                    i: cfg.i,
                    j: cfg.j,
                    radius: cfg.radius.si(&format!("wells[{w}].radius"))?,
                    skin: cfg.skin,
                    control: cfg.control,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = ReservoirModel::new(grid, rock, wells);
        let violations = model.validate();
        if !violations.is_empty() {
            let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidModel(msg.join("; ")));
        }

        let s = &self.schedule;
        let dt = s.dt.si("schedule.dt")?;
        let segments = s
            .segments
            .iter()
            .enumerate()
            .map(|(k, seg)| {
                let key = format!("schedule.segments[{k}]");
                if seg.controls.len() != model.wells.len() {
                    return Err(Error::config(
                        format!("{key}.controls"),
                        format!("expected {} controls, got {}", model.wells.len(), seg.controls.len()),
                    ));
                }
                Ok(Segment {
                    start: seg.start.si(&format!("{key}.start"))?,
                    controls: seg
                        .controls
                        .iter()
                        .enumerate()
                        .map(|(w, q)| q.si(&format!("{key}.controls[{w}]")))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = ControlSchedule::from_segments(&segments, dt, s.steps)
            .map_err(|e| Error::config("schedule", e.to_string()))?;
        self.solver.validate().map_err(|e| Error::config("solver", e.to_string()))?;
        Ok(Case { model, schedule, solver: self.solver })
    }
}

fn resolve_field(spec: &FieldSpec, n: usize, base_dir: &Path, key: &str) -> Result<Vec<f64>> {
    match spec {
        FieldSpec::Uniform(q) => Ok(vec![q.si(key)?; n]),
        FieldSpec::File { file, unit } => {
            let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
            let arr = PortableArray::read(&path)?;
            if arr.data.len() != n {
                return Err(Error::config(key, format!("{} holds {} values, grid has {n} cells", path.display(), arr.data.len())));
            }
            let factor = match unit {
                Some(u) => u.parse::<Unit>().map_err(|e| Error::config(key, e.to_string()))?.factor(),
                None => 1.0,
            };
            Ok(arr.data.iter().map(|v| v * factor).collect())
        }
    }
}

/// The homogeneous 64×64 constant-BHP reference case, in field units.
pub fn reference_case() -> CaseConfig {
    let psi = |v| Quantity::tagged(v, Unit::Psi);
    CaseConfig {
        grid: GridConfig {
            nx: 64,
            ny: 64,
            dx: Quantity::Si(40.0 / 64.0),
            dy: Quantity::Si(40.0 / 64.0),
            dz: Quantity::Si(1.0),
        },
        rock: RockConfig {
            porosity: FieldSpec::Uniform(Quantity::Si(0.2)),
            permeability: FieldSpec::Uniform(Quantity::tagged(50.0, Unit::Millidarcy)),
            viscosity: Quantity::tagged(1.13, Unit::Centipoise),
            compressibility: Quantity::tagged(1e-5, Unit::PerPsi),
            initial_pressure: psi(3000.0),
            density: default_density(),
        },
        wells: vec![
            WellConfig { name: "P1".into(), i: 10, j: 10, radius: Quantity::Si(0.09), skin: 0.0, control: ControlKind::Bhp },
            WellConfig { name: "P2".into(), i: 54, j: 54, radius: Quantity::Si(0.09), skin: 0.0, control: ControlKind::Bhp },
        ],
        schedule: ScheduleConfig {
            dt: Quantity::tagged(0.5, Unit::Day),
            steps: 400,
            segments: vec![SegmentConfig { start: Quantity::Si(0.0), controls: vec![psi(1800.0), psi(1800.0)] }],
        },
        solver: SolverConfig::default(),
    }
}

/// Desk-scale analogue of [`reference_case`]: 16×16 cells of 20 m with
/// wells at the 180°-symmetric cells (2, 2) and (13, 13). The larger cells
/// stretch the drawdown over tens of steps; on the 40 m domain it is over
/// within two.
pub fn desk_case(steps: usize) -> CaseConfig {
    let mut cfg = reference_case();
    cfg.grid.nx = 16;
    cfg.grid.ny = 16;
    cfg.grid.dx = Quantity::Si(20.0);
    cfg.grid.dy = Quantity::Si(20.0);
    cfg.wells[0].i = 2;
    cfg.wells[0].j = 2;
    cfg.wells[1].i = 13;
    cfg.wells[1].j = 13;
    cfg.schedule.steps = steps;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_case_builds() {
        let case = reference_case().build(Path::new(".")).unwrap();
        assert_eq!(case.model.n(), 4096);
        assert_eq!(case.schedule.len(), 400);
        assert_eq!(case.schedule.dt(), 43200.0);
        let u = case.schedule.control_at(399).unwrap();
        assert!((u[0] - 1.2410563e7).abs() < 1.0);
    }

    #[test]
    fn json_round_trip() {
        let text = serde_json::to_string_pretty(&reference_case()).unwrap();
        assert_eq!(CaseConfig::from_json(&text).unwrap(), reference_case());
    }

    #[test]
    fn bad_key_is_pointed_at() {
        let mut v = serde_json::to_value(reference_case()).unwrap();
        v["grid"]["nx"] = serde_json::json!("sixty-four");
        match CaseConfig::from_json(&v.to_string()) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "grid.nx"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_unit_is_pointed_at() {
        let mut cfg = reference_case();
        cfg.rock.viscosity = Quantity::Tagged { value: 1.0, unit: "poise".into() };
        match cfg.build(Path::new(".")) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "rock.viscosity"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn control_count_checked() {
        let mut cfg = reference_case();
        cfg.schedule.segments[0].controls.pop();
        assert!(matches!(cfg.build(Path::new(".")), Err(Error::Config { .. })));
    }

    #[test]
    fn permeability_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = desk_case(10);
        let field: Vec<f64> = (0..256).map(|i| 10.0 + i as f64).collect();
        PortableArray::new(vec![16, 16], field.clone()).unwrap().write(dir.path().join("k.parr")).unwrap();
        cfg.rock.permeability = FieldSpec::File { file: "k.parr".into(), unit: Some("mD".into()) };
        let case = cfg.build(dir.path()).unwrap();
        assert_eq!(case.model.rock.permeability[5], 15.0 * 9.869233e-16);
    }
}
