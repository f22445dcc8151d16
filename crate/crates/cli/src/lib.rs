//! `picrnn` command-line front end.
//!
//! Output paths that are relative resolve against `PICRNN_OUT_DIR` when it
//! is set. `PICRNN_SEED` overrides the training seed unless `--seed` is
//! given.

mod error;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use picrnn_core::config::{from_json_str, Case, CaseConfig};
use picrnn_core::parr::{read_trajectory, write_atomic, write_trajectory, PortableArray};
use picrnn_core::report::{rates_csv, report_steps, write_heatmap, relative_error_map, ErrorReport, RateRow, NEAR_WELL_RADIUS};
use picrnn_core::units::DAY;
use picrnn_core::{simulate, well_rates, CsrMatrix, StateSpaceSystem, Trajectory};
use picrnn_surrogate::{extrapolate, load_checkpoint, save_checkpoint, train, CheckpointMeta, Surrogate, TrainConfig};

pub use error::CliError;

pub const SEED_VAR: &str = "PICRNN_SEED";
pub const OUT_DIR_VAR: &str = "PICRNN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "picrnn", version, about = "Reservoir state-space simulation and physics-informed surrogate training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the implicit finite-volume simulator.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-step well rates as CSV.
        #[arg(long)]
        rates: Option<PathBuf>,
    },
    /// Export V (diagonal), T and B (triplets) as array files.
    Assemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a surrogate on the case's residual.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training config JSON; defaults apply when omitted.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Defaults to `PICRNN_OUT_DIR`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Roll a checkpoint forward, then extrapolate from its final hidden state.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        extrapolate: usize,
        /// Trajectory file; the final hidden state goes to `<out>.h.parr` and `<out>.c.parr`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative-error statistics of `--test` against `--ref`.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Case config, for the well cells of the near-well partition.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Snapshot indices; overrides `--trained`.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        /// Trained horizon; reports at the scaled reference days.
        #[arg(long)]
        trained: Option<usize>,
        #[arg(long, default_value_t = 0)]
        extrapolated: usize,
        #[arg(long, default_value_t = NEAR_WELL_RADIUS)]
        radius: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one snapshot, or its relative error against `--ref`, as PGM.
    Heatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

type Result<T> = std::result::Result<T, CliError>;

fn out_path(path: &Path) -> Result<PathBuf> {
    let resolved = match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = resolved.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| picrnn_core::Error::io(parent, e))?;
    }
    Ok(resolved)
}

fn load_case(path: &Path) -> Result<Case> {
    let cfg = CaseConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(cfg.build(base)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn triplet_array(m: &CsrMatrix) -> Result<PortableArray> {
    let t = m.triplets();
    let data = t.iter().flat_map(|&(r, c, v)| [r as f64, c as f64, v]).collect();
    Ok(PortableArray::new(vec![t.len(), 3], data)?)
}

fn seed_override(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| CliError::Usage(format!("{SEED_VAR}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Runs one command; prints a one-line summary on success.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, rates } => {
            let case = load_case(&config)?;
            let system = StateSpaceSystem::assemble(&case.model)?;
            for w in case.schedule.warnings(&case.model) {
                eprintln!("warning: {w}");
            }
            let traj = simulate(&system, &case.initial_state(), &case.schedule, &case.solver)?;
            let out = out_path(&out)?;
            write_trajectory(&out, &traj, case.model.grid.nx, case.model.grid.ny)?;
            if let Some(rates) = rates {
                let mut rows = Vec::new();
                for k in 1..traj.len() {
                    let q = well_rates(&system, &traj.states[k], case.schedule.control_at(k - 1)?)?;
                    for (w, rate) in q.into_iter().enumerate() {
                        rows.push(RateRow { step: k, day: k as f64 * traj.dt / DAY, well: case.model.wells[w].name.clone(), rate });
                    }
                }
                write_text(&out_path(&rates)?, &rates_csv(&rows))?;
            }
            println!("simulated {} steps -> {}", traj.len() - 1, out.display());
        }
        Command::Assemble { config, out_dir } => {
            let case = load_case(&config)?;
            let system = StateSpaceSystem::assemble(&case.model)?;
            let dir = out_path(&out_dir.join("v.parr"))?;
            let dir = dir.parent().unwrap_or(Path::new("."));
            PortableArray::new(vec![system.n()], system.v.clone())?.write(dir.join("v.parr"))?;
            triplet_array(&system.t)?.write(dir.join("t.parr"))?;
            triplet_array(&system.b)?.write(dir.join("b.parr"))?;
            PortableArray::new(vec![system.m()], system.pi.clone())?.write(dir.join("pi.parr"))?;
            println!("assembled n={} m={} nnz(T)={} -> {}", system.n(), system.m(), system.t.nnz(), dir.display());
        }
        Command::Train { config, train: train_cfg, out_dir, epochs, steps, seed } => {
            let case = load_case(&config)?;
            let mut cfg: TrainConfig = match &train_cfg {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| picrnn_core::Error::io(p, e))?;
                    from_json_str(&text)?
                }
                None => TrainConfig::default(),
            };
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.seed = seed_override(seed)?.unwrap_or(cfg.seed);
            let out_dir = match out_dir {
                Some(d) => out_path(&d.join("loss.csv"))?.parent().map(Path::to_path_buf).unwrap_or_default(),
                None => std::env::var_os(OUT_DIR_VAR)
                    .map(PathBuf::from)
                    .ok_or_else(|| CliError::Usage(format!("--out-dir or {OUT_DIR_VAR} is required")))?,
            };
            fs::create_dir_all(&out_dir).map_err(|e| picrnn_core::Error::io(&out_dir, e))?;
            write_text(&out_dir.join("train.json"), &serde_json::to_string_pretty(&cfg).map_err(picrnn_core::Error::from)?)?;

            let system = StateSpaceSystem::assemble(&case.model)?;
            let mut net = Surrogate::for_case(&case.model, &case.schedule, &system, cfg.seed)?;
            let result = train(&mut net, &system, &case.initial_state(), &case.schedule, &cfg, Some(&out_dir.join("checkpoints")));
            let record = match result {
                Ok(r) => r,
                Err(picrnn_surrogate::Error::Diverged { epoch, loss, record }) => {
                    write_text(&out_dir.join("loss.csv"), &record.to_csv(true))?;
                    return Err(picrnn_surrogate::Error::Diverged { epoch, loss, record }.into());
                }
                Err(e) => return Err(e.into()),
            };
            write_text(&out_dir.join("loss.csv"), &record.to_csv(true))?;
            if cfg.epochs == 0 {
                save_checkpoint(&net, &out_dir.join("checkpoints").join("final"), &CheckpointMeta { epoch: Some(0), train: Some(cfg.clone()) })?;
            }
            match (record.initial(), record.last()) {
                (Some(first), Some(last)) => println!(
                    "trained {} epochs: first loss {first:e}, last loss {last:e} -> {}",
                    record.epochs.len(),
                    out_dir.display()
                ),
                _ => println!("no epochs run; initial weights -> {}", out_dir.display()),
            }
        }
        Command::Predict { checkpoint, config, steps, extrapolate: extra, out } => {
            let case = load_case(&config)?;
            let (net, _) = load_checkpoint(&checkpoint)?;
            if (net.arch.nx, net.arch.ny) != (case.model.grid.nx, case.model.grid.ny) {
                return Err(CliError::Usage("checkpoint grid does not match the case grid".into()));
            }
            let total = steps + extra;
            if case.schedule.len() < total {
                return Err(CliError::Usage(format!("schedule covers {} steps, {total} requested", case.schedule.len())));
            }
            let (mut traj, hidden) = net.rollout(&case.initial_state(), &net.zero_hidden(), &case.schedule, steps)?;
            let future = case.schedule.window(steps, extra)?;
            let x_t = traj.last().map(<[f64]>::to_vec).unwrap_or_default();
            let (tail, hidden) = extrapolate(&net, &x_t, &hidden, &future, extra)?;
            traj.states.extend(tail.states);
            let out = out_path(&out)?;
            write_trajectory(&out, &traj, net.arch.nx, net.arch.ny)?;
            for (suffix, t) in [("h", &hidden.h), ("c", &hidden.c)] {
                let mut p = out.as_os_str().to_owned();
                p.push(format!(".{suffix}.parr"));
                PortableArray::new(t.shape().to_vec(), t.data().to_vec())?.write(PathBuf::from(p))?;
            }
            println!("predicted {} + {} steps -> {}", steps, extra, out.display());
        }
        Command::Eval { reference, test, config, steps, trained, extrapolated, radius, out } => {
            let (r, nx, ny) = read_trajectory(&reference)?;
            let (t, tnx, tny) = read_trajectory(&test)?;
            if (nx, ny) != (tnx, tny) {
                return Err(CliError::Usage(format!("grids differ: {nx}×{ny} vs {tnx}×{tny}")));
            }
            let wells = match &config {
                Some(c) => load_case(c)?.model.wells.iter().map(|w| (w.i, w.j)).collect(),
                None => Vec::new(),
            };
            let steps = match (steps, trained) {
                (Some(s), _) => s,
                (None, Some(tr)) => report_steps(tr, extrapolated),
                (None, None) => (0..r.len().min(t.len())).collect(),
            };
            let report = ErrorReport::new(&r.states, &t.states, &steps, nx, ny, &wells, radius)?;
            let csv = report.to_csv(r.dt / DAY);
            match out {
                Some(p) => write_text(&out_path(&p)?, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Heatmap { input, step, reference, out } => {
            let (traj, nx, ny) = read_trajectory(&input)?;
            let shown = snapshot(&traj, step)?;
            let field = match reference {
                Some(p) => {
                    let (r, rnx, rny) = read_trajectory(&p)?;
                    if (rnx, rny) != (nx, ny) {
                        return Err(CliError::Usage("reference grid differs".into()));
                    }
                    relative_error_map(snapshot(&r, step)?, shown)?
                }
                None => shown.to_vec(),
            };
            let out = out_path(&out)?;
            let bounds = write_heatmap(&out, &field, nx, ny)?;
            println!("heatmap [{:e}, {:e}] -> {}", bounds.min, bounds.max, out.display());
        }
    }
    Ok(())
}

fn snapshot(traj: &Trajectory, k: usize) -> Result<&[f64]> {
    traj.states
        .get(k)
        .map(Vec::as_slice)
        .ok_or_else(|| picrnn_core::Error::StepOutOfRange { k, len: traj.len() }.into())
}
