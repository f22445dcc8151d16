//! Portable array files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes          | content                         |
//! |----------------|---------------------------------|
//! | 5              | magic `PARR1`                   |
//! | 3              | dtype tag `f64`                 |
//! | 4              | rank `r` as `u32`               |
//! | 8·r            | dims as `u64`, outermost first  |
//! | 8·∏dims        | row-major `f64` payload         |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::trajectory::{Provenance, Trajectory};
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"PARR1";
pub const DTYPE: &[u8; 3] = b"f64";

#[derive(Debug, Clone, PartialEq)]
pub struct PortableArray {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl PortableArray {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = dims.iter().product();
        crate::error::check_len("array payload", count, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(DTYPE);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| Error::Format(m.to_string());
        if bytes.len() < 12 || &bytes[..5] != MAGIC {
            return Err(fail("missing PARR1 magic"));
        }
        if &bytes[5..8] != DTYPE {
            return Err(fail("unsupported dtype tag"));
        }
        let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = 12 + 8 * rank;
        if bytes.len() < header {
            return Err(fail("truncated header"));
        }
        let dims: Vec<usize> = bytes[12..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| fail("dims overflow"))?;
        if bytes.len() - header != 8 * count {
            return Err(Error::Format(format!(
                "payload has {} bytes, dims {:?} need {}",
                bytes.len() - header,
                dims,
                8 * count
            )));
        }
        let data = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryMeta {
    dt: f64,
    provenance: Provenance,
    nx: usize,
    ny: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes a trajectory as a rank-3 `[snapshots, ny, nx]` array plus a
/// `<path>.json` sidecar holding `dt` and provenance.
pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory, nx: usize, ny: usize) -> Result<()> {
    let path = path.as_ref();
    traj.check()?;
    crate::error::check_len("trajectory snapshot", nx * ny, traj.state_len())?;
    PortableArray::new(vec![traj.len(), ny, nx], traj.flatten())?.write(path)?;
    let meta = TrajectoryMeta { dt: traj.dt, provenance: traj.provenance, nx, ny };
    write_atomic(&sidecar(path), serde_json::to_string_pretty(&meta)?.as_bytes())
}

/// Reads a trajectory; returns it with `(nx, ny)`. A missing sidecar is
/// tolerated (dt = 0, provenance FV).
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<(Trajectory, usize, usize)> {
    let path = path.as_ref();
    let arr = PortableArray::read(path)?;
    let (snapshots, ny, nx) = match arr.dims[..] {
        [s, ny, nx] => (s, ny, nx),
        [s, n] => (s, 1, n),
        _ => return Err(Error::Format(format!("trajectory must be rank 2 or 3, got dims {:?}", arr.dims))),
    };
    let (dt, provenance) = match fs::read(sidecar(path)) {
        Ok(bytes) => {
            let meta: TrajectoryMeta = serde_json::from_slice(&bytes)?;
            (meta.dt, meta.provenance)
        }
        Err(_) => (0.0, Provenance::Fv),
    };
    let n = nx * ny;
    let states = (0..snapshots).map(|k| arr.data[k * n..(k + 1) * n].to_vec()).collect();
    Ok((Trajectory { states, dt, provenance }, nx, ny))
}
