//! `dpns`: runs the convergence, ratio, penalty, Newton and wellbore studies.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpns::experiments::{compare_newton, converge, penalty_sweep, ratio_sweep, reports_csv, wellbore, MmsRun};
use dpns::postprocess::ErrorReport;
use log::info;

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(#[from] dpns::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dpns", version, about = "Multirate characteristic FEM for coupled dual-porosity / Navier-Stokes flow")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "DPNS_OUT_DIR")]
    out: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Overrides {
    /// Mesh sizes as inverse widths, e.g. `4,8,16` for h = 1/4, 1/8, 1/16.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<usize>>,
    /// Porous-to-conduit time step ratio.
    #[arg(long)]
    r: Option<usize>,
    /// Interface penalty parameter.
    #[arg(long)]
    gamma: Option<f64>,
    /// Conduit time step (default h^2).
    #[arg(long)]
    dt: Option<f64>,
    /// Porous time step; must equal r * dt.
    #[arg(long)]
    ds: Option<f64>,
    /// Final time.
    #[arg(long = "final-time")]
    final_time: Option<f64>,
    /// 1 runs sequentially; 2 overlaps the matrix solve with the conduit substeps.
    #[arg(long)]
    workers: Option<usize>,
    /// Keep the first porous LU factors for the whole run.
    #[arg(long)]
    reuse_darcy_lu: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Errors and convergence rates on a sequence of meshes.
    Converge(Overrides),
    /// Errors and wall time for each time step ratio.
    RatioSweep {
        #[command(flatten)]
        o: Overrides,
        /// Ratios to sweep.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<usize>>,
    },
    /// Convergence rates for each interface penalty.
    PenaltySweep {
        #[command(flatten)]
        o: Overrides,
        /// Penalties to sweep.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
    /// Characteristic versus Newton treatment of the convection term.
    CompareNewton(Overrides),
    /// Injection/production wellbore simulation with VTK output.
    Wellbore {
        /// Boundary speed of the matrix flow.
        #[arg(long)]
        theta: Option<f64>,
        /// Time step ratio.
        #[arg(long)]
        r: Option<usize>,
        /// Mesh size as inverse width.
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "final-time")]
        final_time: Option<f64>,
        /// Write a VTK file every this many macro steps.
        #[arg(long = "vtk-every")]
        vtk_every: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Keep the first porous LU factors for the whole run.
        #[arg(long)]
        reuse_darcy_lu: bool,
    },
    /// Print the effective configuration as TOML.
    Config(Overrides),
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(h) = &self.h {
            c.mesh.h = h.clone();
        }
        if let Some(r) = self.r {
            c.time.r = r;
        }
        if let Some(g) = self.gamma {
            c.physics.gamma = g;
        }
        if self.dt.is_some() {
            c.time.dt = self.dt;
        }
        if self.ds.is_some() {
            c.time.ds = self.ds;
        }
        if let Some(t) = self.final_time {
            c.time.final_time = t;
        }
        if let Some(w) = self.workers {
            c.solver.workers = w;
        }
        if self.reuse_darcy_lu {
            c.solver.reuse_darcy_factorization = true;
        }
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let io = |source| CliError::Io { path: dir.join(name), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(io)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn rate_csv_with(key: &str, value: &str, csv: &str) -> String {
    let mut lines = csv.lines();
    let mut s = format!("{key},{}\n", lines.next().unwrap_or_default());
    for l in lines {
        let _ = writeln!(s, "{value},{l}");
    }
    s
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    match &cli.command {
        Command::Converge(o) | Command::CompareNewton(o) | Command::Config(o) => o.apply(&mut cfg),
        Command::RatioSweep { o, ratios } => {
            o.apply(&mut cfg);
            if let Some(r) = ratios {
                cfg.sweep.ratios = r.clone();
            }
        }
        Command::PenaltySweep { o, gammas } => {
            o.apply(&mut cfg);
            if let Some(g) = gammas {
                cfg.sweep.gammas = g.clone();
            }
        }
        Command::Wellbore { theta, r, h, dt, final_time, vtk_every, workers, reuse_darcy_lu } => {
            let w = &mut cfg.wellbore;
            w.theta = theta.unwrap_or(w.theta);
            w.r = r.unwrap_or(w.r);
            w.h = h.unwrap_or(w.h);
            w.dt = dt.unwrap_or(w.dt);
            w.final_time = final_time.unwrap_or(w.final_time);
            w.vtk_every = vtk_every.unwrap_or(w.vtk_every);
            cfg.solver.workers = workers.unwrap_or(cfg.solver.workers);
            cfg.solver.reuse_darcy_factorization |= reuse_darcy_lu;
        }
    }
    cfg.validate()?;
    let dir = cfg.output.dir.clone();
    let base = cfg.mms_run();
    match &cli.command {
        Command::Config(_) => print!("{}", cfg.to_toml()),
        Command::Converge(_) => {
            let (reports, table) = converge(&cfg.mesh.h, &base)?;
            let r = cfg.time.r;
            let csv = table.to_csv();
            print!("{csv}");
            write_file(&dir, &format!("converge_r{r}.csv"), &csv)?;
            let rows: Vec<(String, &ErrorReport)> = reports.iter().map(|x| (format!("1/{}", (1.0 / x.h).round()), x)).collect();
            write_file(&dir, &format!("converge_r{r}_runs.csv"), &reports_csv("mesh", &rows))?;
        }
        Command::RatioSweep { .. } => {
            let mut all = String::new();
            for &n in &cfg.mesh.h {
                let reports = ratio_sweep(&cfg.sweep.ratios, &MmsRun { n, ..base.clone() })?;
                let rows: Vec<(String, &ErrorReport)> = reports.iter().map(|x| (x.r.to_string(), x)).collect();
                let csv = reports_csv("ratio", &rows);
                for x in &reports {
                    let _ = writeln!(all, "h=1/{n} r={} wall={:.3}s u_c={:.6e}", x.r, x.timings.total, x.absolute.u_c);
                }
                write_file(&dir, &format!("ratio_sweep_h{n}.csv"), &csv)?;
            }
            print!("{all}");
        }
        Command::PenaltySweep { .. } => {
            let mut csv = String::new();
            for (i, (gamma, _, table)) in penalty_sweep(&cfg.sweep.gammas, &cfg.mesh.h, &base)?.iter().enumerate() {
                let part = rate_csv_with("gamma", &gamma.to_string(), &table.to_csv());
                csv.push_str(if i == 0 { &part } else { part.split_once('\n').map_or("", |p| p.1) });
            }
            print!("{csv}");
            write_file(&dir, &format!("penalty_sweep_r{}.csv", cfg.time.r), &csv)?;
        }
        Command::CompareNewton(_) => {
            let mut rows_out = String::new();
            for &n in &cfg.mesh.h {
                let run = MmsRun { n, dt: Some(cfg.time.dt.unwrap_or(cfg.solver.newton_dt)), ..base.clone() };
                let (c, nw) = compare_newton(&run, cfg.newton_scheme())?;
                let rows = vec![("characteristic".to_string(), &c), ("newton".to_string(), &nw)];
                write_file(&dir, &format!("compare_newton_h{n}.csv"), &reports_csv("scheme", &rows))?;
                let _ = writeln!(
                    rows_out,
                    "h=1/{n}: characteristic u_c_rel={:.6e} wall={:.2}s | newton u_c_rel={:.6e} wall={:.2}s",
                    c.relative.u_c, c.timings.total, nw.relative.u_c, nw.timings.total
                );
            }
            print!("{rows_out}");
        }
        Command::Wellbore { .. } => {
            let vtk_dir = dir.join("wellbore");
            let summary = wellbore(&cfg.scenario(), cfg.wellbore.r, cfg.options(), Some(&vtk_dir), cfg.wellbore.vtk_every)?;
            write_file(&dir, "wellbore_flux.csv", &summary.flux_csv())?;
            let (a, b) = summary.final_fluxes();
            println!(
                "{} macro steps, {} VTK files in {}, final inflow flux {a:.6e}, outflow flux {b:.6e}, {:.1}s",
                summary.macro_steps,
                summary.files.len(),
                vtk_dir.display(),
                summary.wall
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
