//! Drivers for the numerical studies: convergence, time-step ratio and
//! penalty sweeps, the Newton comparison, and the wellbore simulation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::assembly::PhysParams;
use crate::error::{Error, Result};
use crate::fespace::FeSpaces;
use crate::mesh::{build_structured_rect_mesh, build_wellbore_mesh, BoundaryLabel, StackedSquares};
use crate::mms::{MmsProblem, WellboreScenario};
use crate::postprocess::{boundary_flux, compute_errors, export_vtk, make_rate_table, ErrorReport, FieldErrors, RateTable};
use crate::stepper::{run, ConduitScheme, StepperOptions, TimeGrid};

/// One manufactured-solution run on the stacked unit squares.
#[derive(Clone, Debug, PartialEq)]
pub struct MmsRun {
    /// Cells per unit length; `h = 1/n`.
    pub n: usize,
    pub r: usize,
    /// Conduit step; `h^2` when absent.
    pub dt: Option<f64>,
    pub params: PhysParams,
    pub final_time: f64,
    pub options: StepperOptions,
    /// Also record the largest errors over all macro time levels.
    pub track_max: bool,
}

impl MmsRun {
    pub fn new(n: usize, r: usize) -> Self {
        MmsRun {
            n,
            r,
            dt: None,
            params: PhysParams::default(),
            final_time: 0.5,
            options: StepperOptions::default(),
            track_max: false,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let h = 1.0 / self.n as f64;
        TimeGrid::from_dt(self.final_time, self.dt.unwrap_or(h * h), self.r)
    }
}

/// Runs one manufactured-solution case and measures final-time errors.
pub fn run_mms(cfg: &MmsRun) -> Result<ErrorReport> {
    let grid = cfg.grid()?;
    let spaces = FeSpaces::new(build_structured_rect_mesh(cfg.n, StackedSquares::default())?);
    let problem = MmsProblem { params: cfg.params.clone(), final_time: cfg.final_time, scale: 1.0 };
    let mut max: Option<FieldErrors> = None;
    let out = run(&spaces, &problem, grid, cfg.options.clone(), |st, rep| {
        if cfg.track_max {
            let e = compute_errors(&spaces, st, &problem, rep.time)?.absolute;
            max = Some(max.map_or(e, |m| m.max(&e)));
        }
        Ok(())
    })?;
    let mut report = compute_errors(&spaces, &out.state, &problem, grid.final_time())?;
    report.h = 1.0 / cfg.n as f64;
    report.dt = grid.dt();
    report.r = grid.r();
    report.max_in_time = max;
    report.timings = out.times;
    info!(
        "mms h=1/{} r={} dt={:.3e}: u_c={:.4e} wall={:.2}s",
        cfg.n,
        cfg.r,
        grid.dt(),
        report.absolute.u_c,
        report.timings.total
    );
    Ok(report)
}

/// Final-time errors on each mesh in `ns` (coarse to fine) and their rates.
pub fn converge(ns: &[usize], base: &MmsRun) -> Result<(Vec<ErrorReport>, RateTable)> {
    let reports = ns
        .iter()
        .map(|&n| run_mms(&MmsRun { n, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let table = make_rate_table(&reports)?;
    Ok((reports, table))
}

/// Errors and wall times for each ratio in `rs` on one mesh.
pub fn ratio_sweep(rs: &[usize], base: &MmsRun) -> Result<Vec<ErrorReport>> {
    rs.iter().map(|&r| run_mms(&MmsRun { r, ..base.clone() })).collect()
}

/// Convergence tables for each penalty value.
pub fn penalty_sweep(gammas: &[f64], ns: &[usize], base: &MmsRun) -> Result<Vec<(f64, Vec<ErrorReport>, RateTable)>> {
    gammas
        .iter()
        .map(|&gamma| {
            let mut cfg = base.clone();
            cfg.params.gamma = gamma;
            let (reports, table) = converge(ns, &cfg)?;
            Ok((gamma, reports, table))
        })
        .collect()
}

/// The same run with the characteristic conduit solver and with `newton`
/// (a [`ConduitScheme::Newton`] setting).
pub fn compare_newton(base: &MmsRun, newton: ConduitScheme) -> Result<(ErrorReport, ErrorReport)> {
    if !matches!(newton, ConduitScheme::Newton { .. }) {
        return Err(Error::Parameter("the comparison scheme must be Newton".into()));
    }
    let mut c = base.clone();
    c.options.scheme = ConduitScheme::Characteristic;
    let mut n = base.clone();
    n.options.scheme = newton;
    Ok((run_mms(&c)?, run_mms(&n)?))
}

/// CSV of a set of reports, one row per report, keyed by `key`.
pub fn reports_csv(key: &str, rows: &[(String, &ErrorReport)]) -> String {
    let mut s = format!("{key},h,dt,r,wall_s,ns_assembly_s,trace_s,ns_solve_s,darcy_assembly_s,darcy_solve_s");
    for name in FieldErrors::NAMES {
        let _ = write!(s, ",{name},{name}_rel");
    }
    s.push('\n');
    for (k, r) in rows {
        let t = &r.timings;
        let _ = write!(
            s,
            "{k},{},{:e},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.h, r.dt, r.r, t.total, t.ns_assembly, t.trace, t.ns_solve, t.darcy_assembly, t.darcy_solve
        );
        for ((_, a), (_, b)) in r.absolute.entries().iter().zip(r.relative.entries()) {
            let _ = write!(s, ",{a:.6e},{b:.6e}");
        }
        s.push('\n');
    }
    s
}

/// Outcome of the wellbore simulation.
#[derive(Clone, Debug)]
pub struct WellboreSummary {
    pub macro_steps: usize,
    pub r: usize,
    /// `(t, inflow, outflow)`; fluxes are `int u . n` with `n` leaving the conduit.
    pub fluxes: Vec<(f64, f64, f64)>,
    pub files: Vec<PathBuf>,
    pub clamped_feet: usize,
    pub wall: f64,
}

impl WellboreSummary {
    pub fn final_fluxes(&self) -> (f64, f64) {
        self.fluxes.last().map_or((0.0, 0.0), |&(_, a, b)| (a, b))
    }

    pub fn flux_csv(&self) -> String {
        let mut s = String::from("t,inflow,outflow\n");
        for (t, a, b) in &self.fluxes {
            let _ = writeln!(s, "{t},{a:.6e},{b:.6e}");
        }
        s
    }
}

/// Runs the wellbore scenario, writing a VTK file every `vtk_every` macro
/// steps (and for the initial and final states) into `out`.
pub fn wellbore(scenario: &WellboreScenario, r: usize, options: StepperOptions, out: Option<&Path>, vtk_every: usize) -> Result<WellboreSummary> {
    let started = Instant::now();
    scenario.geometry.validate()?;
    let grid = TimeGrid::from_dt(scenario.final_time, scenario.dt, r)?;
    let spaces = FeSpaces::new(build_wellbore_mesh(scenario.h, scenario.geometry.clone())?);
    info!(
        "wellbore: {} triangles, {} conduit dofs, M={} r={}",
        spaces.mesh.triangles.len(),
        crate::assembly::BlockLayout::conduit(&spaces).len(),
        grid.m(),
        r
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let every = vtk_every.max(1);
    let mut files = Vec::new();
    let mut fluxes = Vec::new();
    let mut write = |st: &crate::stepper::State, k: usize| -> Result<()> {
        if let Some(dir) = out {
            let path = dir.join(format!("wellbore_{k:05}.vtk"));
            export_vtk(&spaces, st, &path)?;
            files.push(path);
        }
        Ok(())
    };
    let init = crate::stepper::init_state(&spaces, scenario)?;
    write(&init, 0)?;
    let m = grid.m();
    let res = crate::stepper::run_from(&spaces, scenario, grid, options, init, |st, rep| {
        let a = boundary_flux(&spaces, &st.u_c, BoundaryLabel::ConduitInflow)?;
        let b = boundary_flux(&spaces, &st.u_c, BoundaryLabel::ConduitOutflow)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("boundary flux".into()));
        }
        fluxes.push((rep.time, a, b));
        if rep.k % every == 0 || rep.k == m {
            write(st, rep.k)?;
        }
        Ok(())
    })?;
    Ok(WellboreSummary {
        macro_steps: res.reports.len(),
        r,
        fluxes,
        files,
        clamped_feet: res.state.diagnostics.clamped_feet,
        wall: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_convergence_pipeline() {
        let (reports, table) = converge(&[2, 4], &MmsRun::new(2, 1)).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(table.to_csv().lines().count() == 1 + 2 * FieldErrors::NAMES.len());
        assert!(reports[1].absolute.u_c < reports[0].absolute.u_c);
    }

    #[test]
    fn max_in_time_dominates_final_errors() {
        let cfg = MmsRun { track_max: true, ..MmsRun::new(4, 2) };
        let r = run_mms(&cfg).unwrap();
        let m = r.max_in_time.unwrap();
        for ((_, a), (_, b)) in r.absolute.entries().iter().zip(m.entries()) {
            assert!(b >= *a);
        }
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let reports = ratio_sweep(&[1, 2], &MmsRun::new(2, 1)).unwrap();
        let rows: Vec<(String, &ErrorReport)> = reports.iter().map(|r| (r.r.to_string(), r)).collect();
        let csv = reports_csv("r", &rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("r,h,dt,r,"));
    }
}
