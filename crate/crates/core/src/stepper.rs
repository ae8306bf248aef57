//! Coupled time stepping. Each step runs fixed-point sweeps in the order
//! phase, magnetic potential, heat, with the temperature of the previous
//! sweep frozen in every coefficient.

use serde::{Deserialize, Serialize};

use crate::em_solver::{em_step, EmConfig, EmStepReport, Waveform};
use crate::error::{Error, Result};
use crate::geometry::{Field, RegionGrid};
use crate::heat_solver::{
    energy_field, entropy_field, heat_source, solve_energy_balance, HeatConfig, HeatStepReport,
};
use crate::linalg::norm_inf;
use crate::materials::MaterialLaws;
use crate::phase_solver::{phase_step, regularisation_heating, PhaseConfig, PhaseReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Abort,
    /// Retry a failed step as two half steps, recursively.
    HalveDt,
    /// Accept steps whose sweeps ran out of budget and flag them in the
    /// report. Solver failures still abort.
    Continue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_final: f64,
    pub max_sweeps: usize,
    /// Relative change of `(θ, z, A)` between sweeps that ends the iteration.
    pub sweep_tol: f64,
    /// Under-relaxation of the lagged temperature, in `(0, 1]`.
    pub relaxation: f64,
    pub on_failure: FailurePolicy,
    pub max_halvings: usize,
    /// Write a snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub initial_theta: f64,
    pub initial_z: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1.5625e-3,
            t_final: 0.3125,
            max_sweeps: 3,
            sweep_tol: 1e-8,
            relaxation: 1.0,
            on_failure: FailurePolicy::HalveDt,
            max_halvings: 4,
            snapshot_every: 0,
            initial_theta: 300.0,
            initial_z: 0.0,
        }
    }
}

impl StepperConfig {
    /// Number of steps needed to reach `t_final`; the last one may be short.
    pub fn step_count(&self) -> usize {
        if self.t_final <= 0.0 {
            return 0;
        }
        let n = self.t_final / self.dt;
        let r = n.round();
        if (n - r).abs() <= 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub em: EmConfig,
    pub heat: HeatConfig,
    pub phase: PhaseConfig,
    pub stepper: StepperConfig,
}

/// Everything a simulation needs besides its state.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: RegionGrid,
    pub laws: MaterialLaws,
    pub source: Waveform,
    pub solver: SolverConfig,
}

/// Fields at one time level. `theta`, `z`, `e`, `s` live on the workpiece
/// and are zero elsewhere; `a` lives on the whole domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: usize,
    pub theta: Field,
    pub z: Field,
    pub a: Field,
    pub e: Field,
    pub s: Field,
}

impl SimState {
    pub fn from_fields(
        grid: &RegionGrid,
        laws: &MaterialLaws,
        t: f64,
        step: usize,
        mut theta: Field,
        mut z: Field,
        a: Field,
    ) -> Result<Self> {
        let n = grid.len();
        if theta.len() != n || z.len() != n || a.len() != n {
            return Err(Error::grid("state field length does not match the grid"));
        }
        for k in 0..n {
            if !grid.is_workpiece(k) {
                theta[k] = 0.0;
                z[k] = 0.0;
            } else if !(theta[k] > 0.0) {
                return Err(Error::NonPositiveTemperature(theta[k]));
            }
        }
        let e = energy_field(grid, laws, &theta, &z);
        let s = entropy_field(grid, laws, &theta, &z);
        Ok(SimState {
            t,
            step,
            theta,
            z,
            a,
            e,
            s,
        })
    }

    /// Uniform temperature and phase, vanishing potential.
    pub fn uniform(grid: &RegionGrid, laws: &MaterialLaws, theta0: f64, z0: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_fields(grid, laws, 0.0, 0, vec![theta0; n], vec![z0; n], vec![0.0; n])
    }

    pub fn initial(problem: &Problem) -> Result<Self> {
        let st = &problem.solver.stepper;
        Self::uniform(&problem.grid, &problem.laws, st.initial_theta, st.initial_z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub t: f64,
    pub dt: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Relative change after each sweep; the first entry compares with the
    /// previous time level.
    pub mismatch_history: Vec<f64>,
    pub phase: PhaseReport,
    pub em: EmStepReport,
    pub heat: HeatStepReport,
    /// Temperature at which σ and τ were evaluated in the final sweep.
    pub theta_lag: Field,
    /// Heat source density of the final sweep.
    pub heating: Field,
}

impl StepReport {
    pub fn mismatch(&self) -> f64 {
        self.mismatch_history.last().copied().unwrap_or(0.0)
    }
}

/// `‖new − old‖_∞ / max(‖new‖_∞, ‖old‖_∞, floor)`, zero for two zero fields.
fn relative_change(
    grid: &RegionGrid,
    new: &[f64],
    old: &[f64],
    workpiece_only: bool,
    floor: f64,
) -> f64 {
    let (mut diff, mut size): (f64, f64) = (0.0, floor);
    for k in 0..grid.len() {
        if workpiece_only && !grid.is_workpiece(k) {
            continue;
        }
        diff = diff.max((new[k] - old[k]).abs());
        size = size.max(new[k].abs()).max(old[k].abs());
    }
    if size == 0.0 {
        0.0
    } else {
        diff / size
    }
}

/// One coupled step of length `dt` without any retry logic.
pub fn coupled_step(problem: &Problem, state: &SimState, dt: f64) -> Result<(SimState, StepReport)> {
    let Problem {
        grid,
        laws,
        source,
        solver,
    } = problem;
    let cfg = &solver.stepper;
    let t_new = state.t + dt;
    let omega = cfg.relaxation.clamp(f64::MIN_POSITIVE, 1.0);
    let mut lag = state.theta.clone();
    let mut prev = (state.theta.clone(), state.z.clone(), state.a.clone());
    let mut history = Vec::new();
    let mut last = None;
    for sweep in 1..=cfg.max_sweeps.max(1) {
        let (z, phase) = phase_step(grid, laws, &solver.phase, &state.z, &lag, dt)?;
        let (a, em) = em_step(grid, laws, &solver.em, source, &state.a, &lag, &z, t_new, dt)?;
        let extra = (solver.phase.delta > 0.0)
            .then(|| regularisation_heating(grid, laws, solver.phase.delta, &z, &lag));
        let heating = heat_source(grid, laws, &lag, &a, &state.a, dt, extra.as_deref());
        let (theta, e, heat) =
            solve_energy_balance(grid, laws, &solver.heat, &state.e, &lag, &z, &heating, dt)?;
        // phase fractions are compared on an absolute scale
        let mismatch = relative_change(grid, &theta, &prev.0, true, 0.0)
            .max(relative_change(grid, &z, &prev.1, true, 1.0))
            .max(relative_change(grid, &a, &prev.2, false, 0.0));
        history.push(mismatch);
        let converged = mismatch <= cfg.sweep_tol;
        let next_lag: Field = if converged {
            lag.clone()
        } else {
            theta
                .iter()
                .zip(&lag)
                .map(|(t, l)| omega * t + (1.0 - omega) * l)
                .collect()
        };
        prev = (theta.clone(), z.clone(), a.clone());
        last = Some((theta, z, a, e, phase, em, heat, lag, heating, sweep, converged));
        if converged {
            break;
        }
        lag = next_lag;
    }
    let (theta, z, a, e, phase, em, heat, theta_lag, heating, sweeps, converged) =
        last.expect("at least one sweep runs");
    let s = entropy_field(grid, laws, &theta, &z);
    let report = StepReport {
        t: t_new,
        dt,
        sweeps,
        converged,
        mismatch_history: history,
        phase,
        em,
        heat,
        theta_lag,
        heating,
    };
    if !converged && cfg.on_failure != FailurePolicy::Continue {
        return Err(Error::SweepNotConverged {
            t: t_new,
            sweeps,
            mismatch: report.mismatch(),
        });
    }
    Ok((
        SimState {
            t: t_new,
            step: state.step + 1,
            theta,
            z,
            a,
            e,
            s,
        },
        report,
    ))
}

/// Accepted step: the state it started from, the state it produced, and how.
#[derive(Clone, Debug)]
pub struct AcceptedStep {
    pub old: SimState,
    pub new: SimState,
    pub report: StepReport,
}

fn recoverable(err: &Error) -> bool {
    matches!(
        err,
        Error::SweepNotConverged { .. }
            | Error::NewtonNotConverged { .. }
            | Error::CgNotConverged { .. }
            | Error::EnergyOutOfRange { .. }
            | Error::NonPositiveTemperature(_)
    )
}

/// Advances by `dt`, splitting into halves on failure when the policy allows.
/// Accepted substeps are appended to `out`; the state counter advances by
/// one per accepted substep.
pub fn advance(
    problem: &Problem,
    state: &SimState,
    dt: f64,
    out: &mut Vec<AcceptedStep>,
) -> Result<SimState> {
    advance_level(problem, state, dt, 0, out)
}

fn advance_level(
    problem: &Problem,
    state: &SimState,
    dt: f64,
    depth: usize,
    out: &mut Vec<AcceptedStep>,
) -> Result<SimState> {
    let cfg = &problem.solver.stepper;
    match coupled_step(problem, state, dt) {
        Ok((new, report)) => {
            out.push(AcceptedStep {
                old: state.clone(),
                new: new.clone(),
                report,
            });
            Ok(new)
        }
        Err(err)
            if cfg.on_failure == FailurePolicy::HalveDt
                && depth < cfg.max_halvings
                && recoverable(&err) =>
        {
            let mid = advance_level(problem, state, 0.5 * dt, depth + 1, out)?;
            let end = state.t + dt;
            advance_level(problem, &mid, end - mid.t, depth + 1, out)
        }
        Err(err) => Err(Error::Step {
            step: state.step + 1,
            t: state.t + dt,
            source: Box::new(err),
        }),
    }
}

/// Runs from `initial` to `initial.t + t_final`, handing every accepted
/// step to `observer`. Returns the final state.
pub fn run(
    problem: &Problem,
    initial: SimState,
    observer: impl FnMut(&AcceptedStep) -> Result<()>,
) -> Result<SimState> {
    let end = initial.t + problem.solver.stepper.t_final;
    run_until(problem, initial, end, observer)
}

/// Steps from `initial` to `end`. Step ends are the multiples `k·dt`
/// counted from t = 0, so a run resumed from one of its own states takes
/// exactly the same steps as the original.
pub fn run_until(
    problem: &Problem,
    initial: SimState,
    end: f64,
    mut observer: impl FnMut(&AcceptedStep) -> Result<()>,
) -> Result<SimState> {
    let dt = problem.solver.stepper.dt;
    let mut k = (initial.t / dt + 1e-9).floor() as usize;
    let mut state = initial;
    let mut steps = Vec::new();
    // the same rounding slack as the step count
    while end - state.t > 1e-9 * dt {
        k += 1;
        let target = (k as f64 * dt).min(end);
        let target = if end - target <= 1e-9 * dt { end } else { target };
        steps.clear();
        state = advance(problem, &state, target - state.t, &mut steps)?;
        for s in &steps {
            observer(s)?;
        }
    }
    Ok(state)
}

/// Largest relative difference between two states' fields, used by
/// self-convergence checks.
pub fn state_difference(grid: &RegionGrid, a: &SimState, b: &SimState) -> f64 {
    relative_change(grid, &a.theta, &b.theta, true, 0.0)
        .max(relative_change(grid, &a.z, &b.z, true, 1.0))
        .max(relative_change(grid, &a.a, &b.a, false, 0.0))
}

/// `max |θ|` on the workpiece, for quick reporting.
pub fn max_temperature(grid: &RegionGrid, state: &SimState) -> f64 {
    let w: Field = grid.workpiece_cells().iter().map(|&k| state.theta[k]).collect();
    norm_inf(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{integrate, Domain, Rect};

    fn problem(amplitude: f64) -> Problem {
        let grid = RegionGrid::from_rects(
            24,
            24,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Rect::new(0.25, 0.75, 0.25, 0.75),
            &[
                (Rect::new(0.05, 0.2, 0.35, 0.65), 1.0),
                (Rect::new(0.8, 0.95, 0.35, 0.65), -1.0),
            ],
        )
        .unwrap();
        Problem {
            grid,
            laws: MaterialLaws::default(),
            source: Waveform::Sinusoid {
                frequency: 32.0,
                amplitude,
            },
            solver: SolverConfig {
                stepper: StepperConfig {
                    dt: 2e-3,
                    t_final: 0.02,
                    max_sweeps: 40,
                    sweep_tol: 1e-9,
                    ..StepperConfig::default()
                },
                ..SolverConfig::default()
            },
        }
    }

    #[test]
    fn zero_source_keeps_equilibrium_state() {
        let mut p = problem(0.0);
        p.solver.stepper.initial_z = 0.01;
        let s0 = SimState::initial(&p).unwrap();
        let end = run(&p, s0.clone(), |_| Ok(())).unwrap();
        assert_eq!(end.step, 10);
        for k in 0..p.grid.len() {
            assert!((end.theta[k] - s0.theta[k]).abs() <= 1e-9 * 300.0);
            assert_eq!(end.z[k], s0.z[k]);
            assert_eq!(end.a[k], 0.0);
        }
    }

    #[test]
    fn zero_final_time_echoes_initial_state() {
        let mut p = problem(1e3);
        p.solver.stepper.t_final = 0.0;
        let s0 = SimState::initial(&p).unwrap();
        let end = run(&p, s0.clone(), |_| panic!("no steps expected")).unwrap();
        assert_eq!(end, s0);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = problem(3e3);
        let mut rows_a = Vec::new();
        let mut rows_b = Vec::new();
        let a = run(&p, SimState::initial(&p).unwrap(), |s| {
            rows_a.push(s.report.mismatch_history.clone());
            Ok(())
        })
        .unwrap();
        let b = run(&p, SimState::initial(&p).unwrap(), |s| {
            rows_b.push(s.report.mismatch_history.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(rows_a, rows_b);
    }

    #[test]
    fn heating_raises_energy_and_sweeps_contract() {
        let p = problem(3e3);
        let s0 = SimState::initial(&p).unwrap();
        let mut all_contract = true;
        let end = run(&p, s0.clone(), |s| {
            assert!(s.report.converged);
            // the first entry is the change from the previous time level
            all_contract &= s.report.mismatch_history[1..].windows(2).all(|w| w[1] <= w[0]);
            Ok(())
        })
        .unwrap();
        assert!(all_contract);
        let e0 = integrate(&p.grid, &s0.e, Domain::Workpiece);
        let e1 = integrate(&p.grid, &end.e, Domain::Workpiece);
        assert!(e1 > e0);
    }

    #[test]
    fn abort_policy_reports_step_context() {
        let mut p = problem(3e3);
        p.solver.stepper.max_sweeps = 1;
        p.solver.stepper.on_failure = FailurePolicy::Continue;
        let (_, rep) = coupled_step(&p, &SimState::initial(&p).unwrap(), 2e-3).unwrap();
        assert!(!rep.converged);
        p.solver.stepper.on_failure = FailurePolicy::Abort;
        let err = run(&p, SimState::initial(&p).unwrap(), |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }));
        p.solver.stepper.max_sweeps = 40;
        p.solver.heat.max_iter = 0;
        let err = run(&p, SimState::initial(&p).unwrap(), |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Step { step: 1, .. }));
    }

    #[test]
    fn halving_policy_splits_unconverged_steps() {
        let mut p = problem(3e3);
        p.solver.stepper.max_sweeps = 2;
        p.solver.stepper.sweep_tol = 1e-7;
        let s0 = SimState::initial(&p).unwrap();
        let mut out = Vec::new();
        let end = advance(&p, &s0, 2e-3, &mut out).unwrap();
        assert!((end.t - 2e-3).abs() < 1e-15);
        assert!(out.iter().all(|s| s.report.converged));
        let total: f64 = out.iter().map(|s| s.report.dt).sum();
        assert!((total - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn more_sweeps_change_the_answer_at_second_order() {
        let p = problem(3e3);
        let s0 = SimState::initial(&p).unwrap();
        let mut diffs = Vec::new();
        for &dt in &[2e-3, 1e-3] {
            let mut one = p.clone();
            one.solver.stepper.max_sweeps = 1;
            one.solver.stepper.on_failure = FailurePolicy::Continue;
            let mut four = one.clone();
            four.solver.stepper.max_sweeps = 4;
            let (a, _) = coupled_step(&one, &s0, dt).unwrap();
            let (b, _) = coupled_step(&four, &s0, dt).unwrap();
            diffs.push(state_difference(&p.grid, &a, &b));
        }
        // O(dt²) per step: halving dt should cut the difference by about 4
        assert!(diffs[0] / diffs[1] > 3.0, "{diffs:?}");
    }
}
