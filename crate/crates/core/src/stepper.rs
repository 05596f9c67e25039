//! Multirate time loop: `r` conduit substeps per porous macro step, with
//! the matrix-continuum solve running alongside the conduit substeps and the
//! fracture solve closing each macro step.

use std::time::Instant;

use log::{debug, info};

use crate::assembly::{
    apply_dirichlet, assemble_fracture_darcy_step, assemble_matrix_darcy_step, assemble_ns_step_with, ns_constraints,
    ns_convection, ns_matrix, ns_matrix_triplets, ns_rhs, BlockLayout, Inertia, PhysParams, StepSystem, TraceStats,
};
use crate::error::{Error, Result};
use crate::fespace::{l2_project, Analytic, FeSpaces, FieldHandle, SpaceId};
use crate::linalg::{norm2, CsrMatrix, Factorization, LinearSolver};
use crate::mms::FlowProblem;
use crate::postprocess::{energy_monitor, grad_sq, interface_jump_sq, norm_sq, EnergyComponents};

/// Nested conduit and porous time grids on `[0, T]` with `N = r M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    final_time: f64,
    m: usize,
    r: usize,
}

impl TimeGrid {
    pub fn new(final_time: f64, m: usize, r: usize) -> Result<Self> {
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::Parameter(format!("final time must be positive, got {final_time}")));
        }
        if r == 0 {
            return Err(Error::Parameter("step ratio r must be at least 1".into()));
        }
        Ok(TimeGrid { final_time, m, r })
    }

    /// Grid with conduit step close to `dt`: `M = round(T / (r dt))`, `N = r M`.
    pub fn from_dt(final_time: f64, dt: f64, r: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        if r == 0 {
            return Err(Error::Parameter("step ratio r must be at least 1".into()));
        }
        let m = (final_time / (r as f64 * dt)).round() as usize;
        if m == 0 {
            return Err(Error::Parameter(format!("porous step {} exceeds the final time {final_time}", r as f64 * dt)));
        }
        Self::new(final_time, m, r)
    }

    /// Grid from both step sizes; `ds / dt` must be an integer.
    pub fn from_steps(final_time: f64, dt: f64, ds: f64) -> Result<Self> {
        if !(dt > 0.0 && ds > 0.0) {
            return Err(Error::Parameter(format!("time steps must be positive, got dt={dt}, ds={ds}")));
        }
        let r = (ds / dt).round();
        if r < 1.0 || (r * dt - ds).abs() > 1e-9 * ds {
            return Err(Error::Parameter(format!("ds/dt = {} is not a positive integer", ds / dt)));
        }
        Self::from_dt(final_time, dt, r as usize)
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    /// Number of conduit steps `N`.
    pub fn n(&self) -> usize {
        self.m * self.r
    }

    /// Number of porous steps `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dt(&self) -> f64 {
        self.final_time / self.n() as f64
    }

    pub fn ds(&self) -> f64 {
        self.final_time / self.m as f64
    }

    /// `t_n`, computed from the integer index.
    pub fn conduit_time(&self, n: usize) -> f64 {
        if n == self.n() {
            self.final_time
        } else {
            self.final_time * n as f64 / self.n() as f64
        }
    }

    /// `t_{n_k}`; identical to `conduit_time(k r)`.
    pub fn porous_time(&self, k: usize) -> f64 {
        self.conduit_time(k * self.r)
    }
}

/// Running sum of the conduit velocities of the current macro step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub sum: Vec<f64>,
    pub count: usize,
}

impl Accumulator {
    pub fn add(&mut self, coeffs: &[f64]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; coeffs.len()];
        }
        for (s, c) in self.sum.iter_mut().zip(coeffs) {
            *s += c;
        }
        self.count += 1;
    }

    /// Average over the `r` substeps, labelled with `time`.
    pub fn average(&self, r: usize, time: f64) -> Result<FieldHandle> {
        if self.count != r {
            return Err(Error::Parameter(format!("average over {} of {r} substeps", self.count)));
        }
        let inv = 1.0 / r as f64;
        Ok(FieldHandle { space: SpaceId::ConduitVelocity, coeffs: self.sum.iter().map(|s| s * inv).collect(), time })
    }

    pub fn reset(&mut self) {
        self.sum.clear();
        self.count = 0;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub clamped_feet: usize,
    pub traced_points: usize,
    pub newton_iterations: usize,
    /// Accumulated time-integral summands of the energy monitor.
    pub energy_sums: EnergyComponents,
}

/// Discrete solution: conduit fields at `t_n`, porous fields at `t_{n_k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u_c: FieldHandle,
    pub p_c: FieldHandle,
    pub u_f: FieldHandle,
    pub phi_f: FieldHandle,
    pub u_m: FieldHandle,
    pub phi_m: FieldHandle,
    pub n: usize,
    pub k: usize,
    pub accumulator: Accumulator,
    pub diagnostics: Diagnostics,
}

impl State {
    pub fn from_fields(
        u_c: FieldHandle,
        p_c: FieldHandle,
        u_f: FieldHandle,
        phi_f: FieldHandle,
        u_m: FieldHandle,
        phi_m: FieldHandle,
    ) -> Self {
        State { u_c, p_c, u_f, phi_f, u_m, phi_m, n: 0, k: 0, accumulator: Accumulator::default(), diagnostics: Diagnostics::default() }
    }

    pub fn zeros(spaces: &FeSpaces, time: f64) -> Self {
        let z = |s| FieldHandle::zeros(spaces, s, time);
        Self::from_fields(
            z(SpaceId::ConduitVelocity),
            z(SpaceId::ConduitPressure),
            z(SpaceId::Bdm1),
            z(SpaceId::P0),
            z(SpaceId::Bdm1),
            z(SpaceId::P0),
        )
    }

    pub fn fields(&self) -> [&FieldHandle; 6] {
        [&self.u_c, &self.p_c, &self.u_f, &self.phi_f, &self.u_m, &self.phi_m]
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|h| h.is_finite())
    }
}

/// L2 projections of the initial data of `problem` at `t = 0`.
pub fn init_state(spaces: &FeSpaces, problem: &dyn FlowProblem) -> Result<State> {
    let v = |f: &dyn Fn(crate::mesh::Point) -> crate::mesh::Point, s| l2_project(spaces, Analytic::Vector(f), s, 0.0);
    let c = |f: &dyn Fn(crate::mesh::Point) -> f64, s| l2_project(spaces, Analytic::Scalar(f), s, 0.0);
    Ok(State::from_fields(
        v(&|x| problem.initial_conduit_velocity(x), SpaceId::ConduitVelocity)?,
        c(&|x| problem.initial_conduit_pressure(x), SpaceId::ConduitPressure)?,
        v(&|x| problem.initial_fracture_velocity(x), SpaceId::Bdm1)?,
        c(&|x| problem.initial_fracture_pressure(x), SpaceId::P0)?,
        v(&|x| problem.initial_matrix_velocity(x), SpaceId::Bdm1)?,
        c(&|x| problem.initial_matrix_pressure(x), SpaceId::P0)?,
    ))
}

/// Treatment of the conduit inertia.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConduitScheme {
    /// Backtracked old velocity; one linear solve per substep.
    Characteristic,
    /// Fully implicit convection solved by Newton's method.
    Newton { tol: f64, max_iter: usize },
}

impl ConduitScheme {
    pub const NEWTON: ConduitScheme = ConduitScheme::Newton { tol: 1e-8, max_iter: 25 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperOptions {
    /// 1 runs everything in order; 2 overlaps the matrix solve with the
    /// conduit substeps.
    pub workers: usize,
    /// Keep the first LU of each porous system instead of refactorizing
    /// every macro step (their matrices never change).
    pub reuse_darcy_factorization: bool,
    pub scheme: ConduitScheme,
    pub track_energy: bool,
    /// Fix the first conduit pressure dof to zero.
    pub pin_conduit_pressure: bool,
}

impl Default for StepperOptions {
    fn default() -> Self {
        StepperOptions {
            workers: 1,
            reuse_darcy_factorization: false,
            scheme: ConduitScheme::Characteristic,
            track_energy: true,
            pin_conduit_pressure: false,
        }
    }
}

/// Wall-clock seconds per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    /// Conduit assembly, including backtracking.
    pub ns_assembly: f64,
    pub trace: f64,
    pub ns_solve: f64,
    pub darcy_assembly: f64,
    pub darcy_solve: f64,
    pub total: f64,
}

impl PhaseTimes {
    pub fn add(&mut self, o: &PhaseTimes) {
        self.ns_assembly += o.ns_assembly;
        self.trace += o.trace;
        self.ns_solve += o.ns_solve;
        self.darcy_assembly += o.darcy_assembly;
        self.darcy_solve += o.darcy_solve;
        self.total += o.total;
    }
}

/// Summary of one completed macro step.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroReport {
    pub k: usize,
    pub time: f64,
    pub times: PhaseTimes,
    pub energy: Option<EnergyComponents>,
    pub clamped_feet: usize,
    pub newton_iterations: usize,
}

struct DarcySolver {
    solver: LinearSolver,
    kept: Option<Factorization>,
}

impl DarcySolver {
    fn new() -> Self {
        DarcySolver { solver: LinearSolver::new(), kept: None }
    }

    fn solve(&mut self, sys: &StepSystem, reuse: bool) -> Result<Vec<f64>> {
        if !reuse {
            return self.solver.solve(&sys.matrix, &sys.rhs);
        }
        if self.kept.is_none() {
            self.kept = Some(self.solver.factorize(&sys.matrix)?);
        }
        self.kept.as_ref().expect("factorization kept").solve_checked(&sys.matrix, &sys.rhs)
    }
}

fn finite(x: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what()))
    }
}

fn split_conduit(spaces: &FeSpaces, x: &[f64], time: f64) -> (FieldHandle, FieldHandle) {
    let l = BlockLayout::conduit(spaces);
    (
        FieldHandle { space: SpaceId::ConduitVelocity, coeffs: x[l.velocity].to_vec(), time },
        FieldHandle { space: SpaceId::ConduitPressure, coeffs: x[l.pressure].to_vec(), time },
    )
}

fn split_porous(spaces: &FeSpaces, x: &[f64], time: f64) -> (FieldHandle, FieldHandle) {
    let l = BlockLayout::porous(spaces);
    (
        FieldHandle { space: SpaceId::Bdm1, coeffs: x[l.velocity].to_vec(), time },
        FieldHandle { space: SpaceId::P0, coeffs: x[l.pressure].to_vec(), time },
    )
}

fn pin(system: StepSystem, on: bool) -> Result<StepSystem> {
    if on {
        let p0 = system.layout.pressure.start;
        apply_dirichlet(system, &[(p0, 0.0)])
    } else {
        Ok(system)
    }
}

/// Outcome of one conduit substep.
#[derive(Clone, Debug)]
pub struct ConduitStep {
    pub u_c: FieldHandle,
    pub p_c: FieldHandle,
    pub trace: TraceStats,
    pub newton_iterations: usize,
    pub residual_history: Vec<f64>,
    pub times: PhaseTimes,
}

/// Conduit linear solver that keeps the time-independent characteristic
/// operator and its LU factors between substeps.
#[derive(Debug)]
pub struct ConduitSolver {
    solver: LinearSolver,
    newton: LinearSolver,
    operator: Option<(PhysParams, f64, CsrMatrix)>,
}

impl Default for ConduitSolver {
    fn default() -> Self {
        ConduitSolver { solver: LinearSolver::keeping_factors(), newton: LinearSolver::new(), operator: None }
    }
}

impl ConduitSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn operator(&mut self, spaces: &FeSpaces, params: &PhysParams, dt: f64) -> Result<CsrMatrix> {
        let n = BlockLayout::conduit(spaces).len();
        let hit = matches!(&self.operator, Some((p, d, m)) if p == params && *d == dt && m.nrows == n);
        if !hit {
            self.operator = Some((params.clone(), dt, ns_matrix(spaces, params, dt)?));
        }
        Ok(self.operator.as_ref().expect("operator cached").2.clone())
    }
}

/// One characteristic conduit substep `t_next - dt -> t_next`.
#[allow(clippy::too_many_arguments)]
pub fn characteristic_ns_step(
    spaces: &FeSpaces,
    problem: &dyn FlowProblem,
    u_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    u_f_lag: &FieldHandle,
    t_next: f64,
    dt: f64,
    conduit: &mut ConduitSolver,
    pin_pressure: bool,
) -> Result<ConduitStep> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let mut times = PhaseTimes::default();
    let t0 = Instant::now();
    let matrix = conduit.operator(spaces, problem.params(), dt)?;
    let sys = assemble_ns_step_with(spaces, matrix, u_old, phi_f_lag, u_f_lag, t_next, dt, problem)?;
    let sys = pin(sys, pin_pressure)?;
    let solver = &mut conduit.solver;
    times.ns_assembly = t0.elapsed().as_secs_f64();
    times.trace = sys.trace.seconds;
    let t1 = Instant::now();
    let x = solver.solve(&sys.matrix, &sys.rhs)?;
    times.ns_solve = t1.elapsed().as_secs_f64();
    finite(&x, || format!("conduit solution at t={t_next}"))?;
    let (u_c, p_c) = split_conduit(spaces, &x, t_next);
    Ok(ConduitStep { u_c, p_c, trace: sys.trace, newton_iterations: 0, residual_history: Vec::new(), times })
}

/// Implicit Navier-Stokes substep with full convection, solved by Newton's
/// method until the residual drops below `tol * max(1, |b|)`.
#[allow(clippy::too_many_arguments)]
pub fn newton_ns_baseline_step(
    spaces: &FeSpaces,
    problem: &dyn FlowProblem,
    u_old: &FieldHandle,
    phi_f_lag: &FieldHandle,
    u_f_lag: &FieldHandle,
    t_next: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
    solver: &mut LinearSolver,
    pin_pressure: bool,
) -> Result<ConduitStep> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Parameter(format!("Newton needs tol > 0 and max_iter >= 1, got {tol}, {max_iter}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let mut times = PhaseTimes::default();
    let t0 = Instant::now();
    let layout = BlockLayout::conduit(spaces);
    let nv = layout.velocity.end;
    let stokes = ns_matrix_triplets(spaces, problem.params(), dt);
    let stokes_csr = stokes.compress()?;
    let (rhs_lin, _) = ns_rhs(spaces, u_old, phi_f_lag, u_f_lag, t_next, dt, problem, Inertia::Eulerian)?;
    let mut constraints = ns_constraints(spaces, problem, t_next)?;
    if pin_pressure {
        constraints.push((layout.pressure.start, 0.0));
    }
    let mut fixed = vec![false; layout.len()];
    for &(d, _) in &constraints {
        fixed[d] = true;
    }
    let scale = norm2(&rhs_lin).max(1.0);
    let mut x = u_old.coeffs.clone();
    x.resize(layout.len(), 0.0);
    let (mut conv, mut crhs) = ns_convection(spaces, &x[..nv]);
    times.ns_assembly += t0.elapsed().as_secs_f64();
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let ta = Instant::now();
        let mut trip = stokes.clone();
        trip.merge(conv)?;
        let rhs: Vec<f64> = rhs_lin.iter().zip(&crhs).map(|(a, b)| a + b).collect();
        let sys = StepSystem { matrix: trip.compress()?, rhs, layout: layout.clone(), trace: TraceStats::default() };
        let sys = apply_dirichlet(sys, &constraints)?;
        times.ns_assembly += ta.elapsed().as_secs_f64();
        let ts = Instant::now();
        x = solver.solve(&sys.matrix, &sys.rhs)?;
        times.ns_solve += ts.elapsed().as_secs_f64();
        finite(&x, || format!("Newton iterate {it} at t={t_next}"))?;
        let ta = Instant::now();
        (conv, crhs) = ns_convection(spaces, &x[..nv]);
        let ax = stokes_csr.matvec(&x);
        let res: f64 = (0..layout.len())
            .filter(|&i| !fixed[i])
            .map(|i| (ax[i] + crhs[i] - rhs_lin[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        times.ns_assembly += ta.elapsed().as_secs_f64();
        history.push(res);
        debug!("newton t={t_next:.6} it={it} residual={res:.3e}");
        if res <= tol * scale {
            let (u_c, p_c) = split_conduit(spaces, &x, t_next);
            return Ok(ConduitStep {
                u_c,
                p_c,
                trace: TraceStats::default(),
                newton_iterations: it,
                residual_history: history,
                times,
            });
        }
    }
    Err(Error::NewtonDiverged { history })
}

/// Advances a [`State`] macro step by macro step.
pub struct Stepper<'a> {
    spaces: &'a FeSpaces,
    problem: &'a dyn FlowProblem,
    grid: TimeGrid,
    options: StepperOptions,
    ns_solver: ConduitSolver,
    matrix_solver: DarcySolver,
    fracture_solver: DarcySolver,
}

struct ConduitLoop {
    times: PhaseTimes,
    clamped: usize,
    traced: usize,
    newton: usize,
    grad_energy: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(spaces: &'a FeSpaces, problem: &'a dyn FlowProblem, grid: TimeGrid, options: StepperOptions) -> Result<Self> {
        problem.params().validate()?;
        if !(1..=2).contains(&options.workers) {
            return Err(Error::Parameter(format!("workers must be 1 or 2, got {}", options.workers)));
        }
        if let ConduitScheme::Newton { tol, max_iter } = options.scheme {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(Error::Parameter(format!("Newton needs tol > 0 and max_iter >= 1, got {tol}, {max_iter}")));
            }
        }
        Ok(Stepper {
            spaces,
            problem,
            grid,
            options,
            ns_solver: ConduitSolver::new(),
            matrix_solver: DarcySolver::new(),
            fracture_solver: DarcySolver::new(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Runs the conduit substeps `n_k .. n_{k+1}` with frozen porous data.
    #[allow(clippy::too_many_arguments)]
    fn conduit_loop(
        spaces: &FeSpaces,
        problem: &dyn FlowProblem,
        grid: &TimeGrid,
        options: &StepperOptions,
        solver: &mut ConduitSolver,
        k: usize,
        u_c: &mut FieldHandle,
        p_c: &mut FieldHandle,
        phi_f_lag: &FieldHandle,
        u_f_lag: &FieldHandle,
        acc: &mut Accumulator,
    ) -> Result<ConduitLoop> {
        let r = grid.r();
        let dt = grid.dt();
        let mut out = ConduitLoop {
            times: PhaseTimes::default(),
            clamped: 0,
            traced: 0,
            newton: 0,
            grad_energy: 0.0,
        };
        for n in k * r..(k + 1) * r {
            let t_next = grid.conduit_time(n + 1);
            let step = match options.scheme {
                ConduitScheme::Characteristic => {
                    characteristic_ns_step(spaces, problem, u_c, phi_f_lag, u_f_lag, t_next, dt, solver, options.pin_conduit_pressure)
                }
                ConduitScheme::Newton { tol, max_iter } => newton_ns_baseline_step(
                    spaces,
                    problem,
                    u_c,
                    phi_f_lag,
                    u_f_lag,
                    t_next,
                    dt,
                    tol,
                    max_iter,
                    &mut solver.newton,
                    options.pin_conduit_pressure,
                ),
            }
            .map_err(|e| e.in_step(format!("conduit step {}", n + 1)))?;
            out.times.add(&step.times);
            out.clamped += step.trace.clamped_feet;
            out.traced += step.trace.traced_points;
            out.newton += step.newton_iterations;
            acc.add(&step.u_c.coeffs);
            if options.track_energy {
                out.grad_energy += dt * grad_sq(spaces, &step.u_c)?;
            }
            *u_c = step.u_c;
            *p_c = step.p_c;
        }
        Ok(out)
    }

    fn matrix_step(
        spaces: &FeSpaces,
        problem: &dyn FlowProblem,
        grid: &TimeGrid,
        reuse: bool,
        solver: &mut DarcySolver,
        k: usize,
        phi_m_old: &FieldHandle,
        phi_f_lag: &FieldHandle,
    ) -> Result<(FieldHandle, FieldHandle, PhaseTimes)> {
        let mut times = PhaseTimes::default();
        let t_next = grid.porous_time(k + 1);
        let t0 = Instant::now();
        let sys = assemble_matrix_darcy_step(spaces, phi_m_old, phi_f_lag, grid.ds(), t_next, problem)?;
        times.darcy_assembly = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let x = solver.solve(&sys, reuse)?;
        times.darcy_solve = t1.elapsed().as_secs_f64();
        finite(&x, || format!("matrix solution at t={t_next}"))?;
        let (u, phi) = split_porous(spaces, &x, t_next);
        Ok((u, phi, times))
    }

    /// Steps 1 and 2 (concurrently with two workers), then Step 3.
    pub fn advance_macro_step(&mut self, state: &mut State) -> Result<MacroReport> {
        let k = state.k;
        if k >= self.grid.m() {
            return Err(Error::Parameter(format!("macro step {k} is past the final time")));
        }
        self.advance_inner(state).map_err(|e| e.in_step(format!("macro step {}", k + 1)))
    }

    fn advance_inner(&mut self, state: &mut State) -> Result<MacroReport> {
        let started = Instant::now();
        let k = state.k;
        let (spaces, problem, grid, options) = (self.spaces, self.problem, self.grid, &self.options);
        let t_next = grid.porous_time(k + 1);
        let ns_solver = &mut self.ns_solver;
        let matrix_solver = &mut self.matrix_solver;
        let reuse = options.reuse_darcy_factorization;
        let State { u_c, p_c, u_f, phi_f, phi_m, accumulator, .. } = state;
        accumulator.reset();
        let (conduit, matrix) = if options.workers == 2 {
            std::thread::scope(|s| {
                let (phi_m_ref, phi_f_ref) = (&*phi_m, &*phi_f);
                let h = s.spawn(move || {
                    Self::matrix_step(spaces, problem, &grid, reuse, matrix_solver, k, phi_m_ref, phi_f_ref)
                });
                let c = Self::conduit_loop(spaces, problem, &grid, options, ns_solver, k, u_c, p_c, phi_f, u_f, accumulator);
                let m = h.join().expect("matrix step worker panicked");
                (c, m)
            })
        } else {
            let m = Self::matrix_step(spaces, problem, &grid, reuse, matrix_solver, k, phi_m, phi_f);
            let c = Self::conduit_loop(spaces, problem, &grid, options, ns_solver, k, u_c, p_c, phi_f, u_f, accumulator);
            (c, m)
        };
        let conduit = conduit?;
        let (u_m_new, phi_m_new, mtimes) = matrix.map_err(|e| e.in_step("matrix step"))?;

        let s_avg = state.accumulator.average(grid.r(), t_next)?;

        let t0 = Instant::now();
        let sys =
            assemble_fracture_darcy_step(spaces, &state.phi_f, &state.phi_m, &s_avg, grid.ds(), t_next, problem)
                .map_err(|e| e.in_step("fracture step"))?;
        let fa = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let x = self.fracture_solver.solve(&sys, reuse).map_err(|e| e.in_step("fracture step"))?;
        let fs = t1.elapsed().as_secs_f64();
        finite(&x, || format!("fracture solution at t={t_next}"))?;
        let (u_f_new, phi_f_new) = split_porous(spaces, &x, t_next);

        let mut times = conduit.times;
        times.add(&mtimes);
        times.darcy_assembly += fa;
        times.darcy_solve += fs;

        let d = &mut state.diagnostics;
        d.clamped_feet += conduit.clamped;
        d.traced_points += conduit.traced;
        d.newton_iterations += conduit.newton;
        if options.track_energy {
            let ds = grid.ds();
            let sums = &mut d.energy_sums;
            sums.grad_u_c += conduit.grad_energy;
            sums.u_f += ds * norm_sq(spaces, &u_f_new)?;
            sums.u_m += ds * norm_sq(spaces, &u_m_new)?;
            sums.interface_jump += ds * interface_jump_sq(spaces, problem.params(), &s_avg, &u_f_new);
        }
        state.u_f = u_f_new;
        state.phi_f = phi_f_new;
        state.u_m = u_m_new;
        state.phi_m = phi_m_new;
        state.accumulator.reset();
        state.n = (k + 1) * grid.r();
        state.k = k + 1;
        let energy = match options.track_energy {
            true => Some(energy_monitor(spaces, state)?),
            false => None,
        };
        times.total = started.elapsed().as_secs_f64();
        let report = MacroReport {
            k: state.k,
            time: t_next,
            times,
            energy,
            clamped_feet: conduit.clamped,
            newton_iterations: conduit.newton,
        };
        debug!(
            "macro step k={} t={:.6} ns_asm={:.3}s trace={:.3}s ns_solve={:.3}s darcy={:.3}s energy={:?} clamped={}",
            report.k,
            report.time,
            times.ns_assembly,
            times.trace,
            times.ns_solve,
            times.darcy_assembly + times.darcy_solve,
            report.energy.map(|e| e.total()),
            report.clamped_feet
        );
        Ok(report)
    }
}

/// Final state, per-macro-step reports and accumulated phase times of a run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: State,
    pub reports: Vec<MacroReport>,
    pub times: PhaseTimes,
}

/// Projects the initial data and runs all `M` macro steps. `callback` sees
/// the state after every macro step.
pub fn run(
    spaces: &FeSpaces,
    problem: &dyn FlowProblem,
    grid: TimeGrid,
    options: StepperOptions,
    callback: impl FnMut(&State, &MacroReport) -> Result<()>,
) -> Result<RunResult> {
    let state = init_state(spaces, problem)?;
    run_from(spaces, problem, grid, options, state, callback)
}

/// Like [`run`] but starting from a given state at macro index 0.
pub fn run_from(
    spaces: &FeSpaces,
    problem: &dyn FlowProblem,
    grid: TimeGrid,
    options: StepperOptions,
    mut state: State,
    mut callback: impl FnMut(&State, &MacroReport) -> Result<()>,
) -> Result<RunResult> {
    let started = Instant::now();
    let mut stepper = Stepper::new(spaces, problem, grid, options)?;
    let mut reports = Vec::with_capacity(grid.m());
    let mut times = PhaseTimes::default();
    while state.k < grid.m() {
        let report = stepper.advance_macro_step(&mut state)?;
        times.add(&report.times);
        callback(&state, &report)?;
        reports.push(report);
    }
    times.total = started.elapsed().as_secs_f64();
    info!(
        "run finished: M={} r={} dt={:.3e} wall={:.3}s clamped feet={}",
        grid.m(),
        grid.r(),
        grid.dt(),
        times.total,
        state.diagnostics.clamped_feet
    );
    Ok(RunResult { state, reports, times })
}
