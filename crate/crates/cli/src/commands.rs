use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use maglorentz::boltzmann::check_collision_rate;
use maglorentz::coupling::{fit_constant, CouplingStudy};
use maglorentz::density::{estimate_density, estimate_lorentz_density};
use maglorentz::ensemble::{boltzmann_ensemble, lorentz_ensemble, BoltzmannSetup, LorentzSetup};
use maglorentz::field::scatterers_in_rect;
use maglorentz::geometry::{advance_free, reflect, scatter, self_recollision_map, Reflection};
use maglorentz::io::{self, Header};
use maglorentz::stats::{convergence_table, ConvergenceConfig};
use maglorentz::{ParticleState, Vec2};

use crate::config::{ConfigError, Process, RunConfig};
use crate::Command;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] maglorentz::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("selfcheck failed: {0}")]
    Selfcheck(String),
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Config(_) => crate::EXIT_CONFIG,
            CommandError::Selfcheck(_) => crate::EXIT_SELFCHECK,
            _ => crate::EXIT_RUNTIME,
        }
    }
}

type Result<T> = std::result::Result<T, CommandError>;

/// Create `name` in the output directory and hand a buffered writer to `f`.
fn write_file<F>(cfg: &RunConfig, name: &str, f: F) -> Result<PathBuf>
where
    F: FnOnce(&mut BufWriter<File>) -> maglorentz::Result<()>,
{
    let path = cfg.out.join(name);
    let io_err = |source| CommandError::Io { path: path.clone(), source };
    fs::create_dir_all(&cfg.out).map_err(|source| CommandError::Io { path: cfg.out.clone(), source })?;
    let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
    f(&mut w).map_err(|e| match e {
        maglorentz::Error::Io(source) => CommandError::Io { path: path.clone(), source },
        other => other.into(),
    })?;
    w.flush().map_err(io_err)?;
    Ok(path)
}

/// JSONL outputs cannot carry `#` lines, so their settings go to a sidecar.
fn write_sidecar(cfg: &RunConfig, name: &str, header: &Header) -> Result<PathBuf> {
    write_file(cfg, name, |w| header.write(w))
}

fn report(path: &Path) {
    println!("wrote {}", path.display());
}

pub fn run_command(cmd: Command, cfg: &RunConfig) -> Result<()> {
    let mut header = cfg.header(cmd.name());
    let horizon = match cmd {
        Command::Density | Command::Converge => Some(cfg.horizon_or(2.0)),
        Command::SimulateLorentz | Command::SimulateBoltzmann | Command::Couple => Some(cfg.horizon_or(3.0)),
        Command::Selfcheck | Command::DumpField => None,
    };
    if let Some(t) = horizon {
        header.push_f64("horizon", t);
    }
    match cmd {
        Command::SimulateLorentz => simulate_lorentz(cfg, &header),
        Command::SimulateBoltzmann => simulate_boltzmann(cfg, &header),
        Command::Density => density(cfg, &header),
        Command::Couple => couple(cfg, &header),
        Command::Converge => converge(cfg, &header),
        Command::Selfcheck => selfcheck(),
        Command::DumpField => dump_field(cfg, &header),
    }
}

fn lorentz_setup(cfg: &RunConfig) -> Result<LorentzSetup> {
    Ok(LorentzSetup { mag: cfg.mag(), eps: cfg.single_eps()?, cell_side: cfg.cell_side, f0: cfg.initial(), seed: cfg.seed })
}

fn simulate_lorentz(cfg: &RunConfig, header: &Header) -> Result<()> {
    let setup = lorentz_setup(cfg)?;
    let horizon = cfg.horizon_or(3.0);
    let records = lorentz_ensemble(&setup, cfg.n, horizon);
    let arcs = (cfg.arcs > 0).then_some(cfg.arcs);
    report(&write_file(cfg, "trajectories.jsonl", |w| io::write_trajectories_jsonl(w, &records, arcs))?);
    report(&write_sidecar(cfg, "trajectories.cfg", header)?);
    report(&write_file(cfg, "summary.csv", |w| io::write_summary_csv(w, header, &records))?);
    Ok(())
}

fn simulate_boltzmann(cfg: &RunConfig, header: &Header) -> Result<()> {
    let setup = BoltzmannSetup { mag: cfg.mag(), f0: cfg.initial(), seed: cfg.seed };
    let paths = boltzmann_ensemble(&setup, cfg.n, cfg.horizon_or(3.0));
    let arcs = (cfg.arcs > 0).then_some(cfg.arcs);
    report(&write_file(cfg, "paths.jsonl", |w| io::write_paths_jsonl(w, &paths, &setup.mag, arcs))?);
    report(&write_sidecar(cfg, "paths.cfg", header)?);
    Ok(())
}

fn density(cfg: &RunConfig, header: &Header) -> Result<()> {
    let t = cfg.horizon_or(2.0);
    let (grid, name) = match cfg.process {
        Process::Boltzmann => {
            let setup = BoltzmannSetup { mag: cfg.mag(), f0: cfg.initial(), seed: cfg.seed };
            (estimate_density(t, &setup, cfg.n, cfg.circling_policy(), cfg.grid()), "density_boltzmann.csv")
        }
        Process::Lorentz => {
            let setup = lorentz_setup(cfg)?;
            (estimate_lorentz_density(t, &setup, cfg.n, cfg.circling_policy(), cfg.grid()), "density_lorentz.csv")
        }
    };
    report(&write_file(cfg, name, |w| io::write_grid_csv(w, header, &grid))?);
    println!("mass {}", io::fmt_f64(grid.mass()));
    Ok(())
}

fn couple(cfg: &RunConfig, header: &Header) -> Result<()> {
    let mag = cfg.mag();
    let study = CouplingStudy { mag, start: cfg.start(), horizon: cfg.horizon_or(3.0), eps: cfg.eps.clone(), seed: cfg.seed, paths: cfg.n };
    let rows = study.run();
    report(&write_file(cfg, "coupling.csv", |w| io::write_coupling_csv(w, header, &rows))?);
    for &eps in &cfg.eps {
        match fit_constant(&rows, eps, study.horizon, &mag) {
            Some(c) => println!("eps {} C_fit {}", io::fmt_f64(eps), io::fmt_f64(c)),
            None => println!("eps {} C_fit n/a", io::fmt_f64(eps)),
        }
    }
    Ok(())
}

fn converge(cfg: &RunConfig, header: &Header) -> Result<()> {
    let mag = cfg.mag();
    let mut cc = ConvergenceConfig::standard(mag, cfg.start(), cfg.n, cfg.seed);
    cc.t = cfg.horizon_or(2.0);
    if let Some(c) = cfg.count_time {
        cc.count_time = c;
    }
    cc.grid = cfg.grid();
    cc.cell_side = cfg.cell_side;
    let rep = convergence_table(&cfg.eps, &cc)?;
    for (eps, row) in rep.eps.iter().zip(&rep.rows) {
        match row {
            Ok(r) => log::info!("eps {eps}: {:.1} s", r.runtime_s),
            Err(e) => log::warn!("eps {eps} failed: {e}"),
        }
    }
    let mut h = header.clone();
    h.push_f64("T", mag.period()).push_f64("count_time", cc.count_time);
    report(&write_file(cfg, "convergence.csv", |w| io::write_convergence_csv(w, &h, &rep))?);
    Ok(())
}

fn dump_field(cfg: &RunConfig, header: &Header) -> Result<()> {
    let setup = lorentz_setup(cfg)?;
    let start = setup.start(cfg.field_index);
    let field = setup.field(cfg.field_index, start);
    let r = 4.0 * cfg.mag().radius();
    let [x0, y0, x1, y1] = cfg.rect.unwrap_or([start.x.x - r, start.x.y - r, start.x.x + r, start.x.y + r]);
    let disks = scatterers_in_rect(&field, Vec2::new(x0, y0), Vec2::new(x1, y1));
    let mut h = header.clone();
    h.push("rect_used", [x0, y0, x1, y1].map(io::fmt_f64).join(","));
    report(&write_file(cfg, "field.csv", |w| io::write_scatterers_csv(w, &h, &disks))?);
    Ok(())
}

/// Checks run by `selfcheck`, each with its name and outcome.
pub fn selfcheck_results() -> Vec<(&'static str, std::result::Result<(), String>)> {
    let mag = maglorentz::MagneticConfig::new(4.0).expect("B = 4");
    let states: Vec<ParticleState> =
        (0..16).map(|i| ParticleState::with_heading(Vec2::new(0.3 * i as f64 - 2.0, 0.1 * i as f64), 0.7 * i as f64)).collect();
    let mut out = Vec::new();
    out.push(("collision rate quadrature", check_collision_rate().map_err(|e| e.to_string())));
    let periodic = states.iter().try_for_each(|&s| {
        (1..=3).try_for_each(|k| {
            let back = advance_free(s, k as f64 * mag.period(), &mag);
            let err = back.x.dist(s.x);
            if err <= 1e-10 {
                Ok(())
            } else {
                Err(format!("advance_free({k}T) moved the particle by {err:e}"))
            }
        })
    });
    out.push(("free-flight periodicity", periodic));
    let involution = states.iter().enumerate().try_for_each(|(i, s)| {
        let n = Vec2::from_angle(0.37 * i as f64 + 0.1);
        if n.dot(s.v) >= 0.0 {
            return Ok(());
        }
        let eps = 0.05;
        let at = ParticleState::new(s.x, s.v);
        let twice = scatter(n, scatter(n, s.v));
        let reflected = match reflect(ParticleState::new(s.x + eps * n, s.v), s.x, eps) {
            Ok(Reflection::Reflected(r)) => r.v,
            Ok(Reflection::Grazing(_)) => return Ok(()),
            Err(e) => return Err(e.to_string()),
        };
        let (d1, d2) = ((twice - at.v).norm(), (reflected - scatter(n, s.v)).norm());
        if d1 <= 1e-12 && d2 <= 1e-12 {
            Ok(())
        } else {
            Err(format!("reflection is not an involution (errors {d1:e}, {d2:e})"))
        }
    });
    out.push(("reflection involution", involution));
    let conserved = states.iter().enumerate().try_for_each(|(i, s)| {
        let n = Vec2::from_angle(0.91 * i as f64 + 0.2);
        if n.dot(s.v) >= 0.0 {
            return Ok(());
        }
        let (_, v) = self_recollision_map(Vec2::ZERO, n, s.v, 0.01, &mag).map_err(|e| e.to_string())?;
        if (v.norm() - 1.0).abs() <= 1e-12 {
            Ok(())
        } else {
            Err(format!("self-recollision map changed the speed to {}", v.norm()))
        }
    });
    out.push(("self-recollision map speed", conserved));
    out
}

fn selfcheck() -> Result<()> {
    let mut failed = Vec::new();
    for (name, r) in selfcheck_results() {
        match r {
            Ok(()) => println!("ok   {name}"),
            Err(e) => {
                println!("FAIL {name}: {e}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CommandError::Selfcheck(failed.join(", ")))
    }
}
