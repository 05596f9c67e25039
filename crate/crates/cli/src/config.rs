//! Run configuration: a TOML file with sections, overridable by flags.

use std::path::{Path, PathBuf};

use dpns::assembly::PhysParams;
use dpns::experiments::MmsRun;
use dpns::mms::WellboreScenario;
use dpns::stepper::{ConduitScheme, StepperOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub physics: Physics,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub wellbore: WellboreConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Mesh sizes as inverse widths: `4` means `h = 1/4`.
    pub h: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub final_time: f64,
    /// Conduit step; `h^2` when absent.
    pub dt: Option<f64>,
    pub r: usize,
    /// Porous step; must be `r * dt` when given.
    pub ds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub nu: f64,
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eta_f: f64,
    pub eta_m: f64,
    pub c_ft: f64,
    pub c_mt: f64,
    pub k_f: f64,
    pub k_m: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub workers: usize,
    pub reuse_darcy_factorization: bool,
    pub track_energy: bool,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Conduit step used by `compare-newton`.
    pub newton_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ratios: Vec<usize>,
    pub gammas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WellboreConfig {
    pub theta: f64,
    pub r: usize,
    pub h: usize,
    pub dt: f64,
    pub final_time: f64,
    pub vtk_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshConfig::default(),
            time: TimeConfig::default(),
            physics: Physics::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            wellbore: WellboreConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { h: vec![4, 8, 16, 32] }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { final_time: 0.5, dt: None, r: 1, ds: None }
    }
}

impl Default for Physics {
    fn default() -> Self {
        Physics::from(&PhysParams::default())
    }
}

impl From<&PhysParams> for Physics {
    fn from(p: &PhysParams) -> Self {
        Physics {
            nu: p.nu,
            mu: p.mu,
            rho: p.rho,
            sigma: p.sigma,
            alpha: p.alpha,
            eta_f: p.eta_f,
            eta_m: p.eta_m,
            c_ft: p.c_ft,
            c_mt: p.c_mt,
            k_f: p.k_f,
            k_m: p.k_m,
            gamma: p.gamma,
        }
    }
}

impl From<&Physics> for PhysParams {
    fn from(p: &Physics) -> Self {
        PhysParams {
            nu: p.nu,
            mu: p.mu,
            rho: p.rho,
            sigma: p.sigma,
            alpha: p.alpha,
            eta_f: p.eta_f,
            eta_m: p.eta_m,
            c_ft: p.c_ft,
            c_mt: p.c_mt,
            k_f: p.k_f,
            k_m: p.k_m,
            gamma: p.gamma,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let ConduitScheme::Newton { tol, max_iter } = ConduitScheme::NEWTON else {
            unreachable!("NEWTON is the Newton scheme")
        };
        SolverConfig {
            workers: 1,
            reuse_darcy_factorization: false,
            track_energy: true,
            newton_tol: tol,
            newton_max_iter: max_iter,
            newton_dt: 1e-3,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { ratios: vec![1, 2, 4, 8], gammas: vec![0.0, 1e-4, 1e-3, 1e-2, 1.0] }
    }
}

impl Default for WellboreConfig {
    fn default() -> Self {
        let s = WellboreScenario::default();
        WellboreConfig {
            theta: s.theta,
            r: 4,
            h: (1.0 / s.h).round() as usize,
            dt: s.dt,
            final_time: s.final_time,
            vtk_every: 10,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn params(&self) -> PhysParams {
        PhysParams::from(&self.physics)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.mesh.h.is_empty() || self.mesh.h.iter().any(|&n| n < 2) {
            return Err(CliError::Config(format!("mesh sizes must be 1/n with n >= 2, got {:?}", self.mesh.h)));
        }
        if self.time.r == 0 {
            return Err(CliError::Config("time step ratio r must be at least 1".into()));
        }
        positive("final time", self.time.final_time)?;
        if let Some(dt) = self.time.dt {
            positive("dt", dt)?;
        }
        if let Some(ds) = self.time.ds {
            positive("ds", ds)?;
            let dts: Vec<f64> = match self.time.dt {
                Some(dt) => vec![dt],
                None => self.mesh.h.iter().map(|&n| 1.0 / (n * n) as f64).collect(),
            };
            for dt in dts {
                let ratio = ds / dt;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() as usize != self.time.r {
                    return Err(CliError::Config(format!(
                        "ds = {ds} is not r * dt for r = {} and dt = {dt} (ratio {ratio})",
                        self.time.r
                    )));
                }
            }
        }
        self.params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !matches!(self.solver.workers, 1 | 2) {
            return Err(CliError::Config(format!("workers must be 1 or 2, got {}", self.solver.workers)));
        }
        positive("newton_tol", self.solver.newton_tol)?;
        positive("newton_dt", self.solver.newton_dt)?;
        if self.solver.newton_max_iter == 0 {
            return Err(CliError::Config("newton_max_iter must be at least 1".into()));
        }
        if self.sweep.ratios.is_empty() || self.sweep.ratios.contains(&0) {
            return Err(CliError::Config(format!("sweep ratios must be >= 1, got {:?}", self.sweep.ratios)));
        }
        if self.sweep.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(CliError::Config(format!("penalties must be >= 0, got {:?}", self.sweep.gammas)));
        }
        let w = &self.wellbore;
        if w.r == 0 || w.h < 2 {
            return Err(CliError::Config(format!("wellbore needs r >= 1 and h = 1/n with n >= 2, got r={} n={}", w.r, w.h)));
        }
        positive("wellbore theta", w.theta)?;
        positive("wellbore dt", w.dt)?;
        positive("wellbore final time", w.final_time)?;
        Ok(())
    }

    pub fn options(&self) -> StepperOptions {
        StepperOptions {
            workers: self.solver.workers,
            reuse_darcy_factorization: self.solver.reuse_darcy_factorization,
            track_energy: self.solver.track_energy,
            ..StepperOptions::default()
        }
    }

    pub fn newton_scheme(&self) -> ConduitScheme {
        ConduitScheme::Newton { tol: self.solver.newton_tol, max_iter: self.solver.newton_max_iter }
    }

    /// Base manufactured-solution run; the mesh size is filled in per case.
    pub fn mms_run(&self) -> MmsRun {
        MmsRun {
            dt: self.time.dt,
            params: self.params(),
            final_time: self.time.final_time,
            options: self.options(),
            ..MmsRun::new(self.mesh.h[0], self.time.r)
        }
    }

    pub fn scenario(&self) -> WellboreScenario {
        let w = &self.wellbore;
        WellboreScenario {
            theta: w.theta,
            h: 1.0 / w.h as f64,
            dt: w.dt,
            final_time: w.final_time,
            ..WellboreScenario::default()
        }
    }
}
