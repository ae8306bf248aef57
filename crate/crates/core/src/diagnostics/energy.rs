//! Discrete energy inequality
//!
//! `∫e + ∫_D |curl A|²/2μ(z) + ∫∫ μ′(z)ż|curl A|²/2μ² + ∫∫_{D∖Ω} σ|Ȧ|²
//!   ≤ initial + ∫∫ J_s·Ȧ + ∫∫ ε/θ²`
//!
//! accumulated step by step. With backward Euler the per-step slack equals
//! the magnetic energy of the increment `δA` at the new permeability, so it
//! is non-negative up to solver tolerance.

use crate::em_solver::{magnetic_energy, source_field, sigma_eff_field, CurrentSource, EmConfig};
use crate::geometry::{integrate, Domain, RegionGrid};
use crate::heat_solver::HeatConfig;
use crate::materials::MaterialLaws;
use crate::stepper::SimState;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedgerRow {
    pub t: f64,
    pub internal_energy: f64,
    pub magnetic_energy: f64,
    /// accumulated `∫∫ μ′(z)ż/(2μ²)|curl A|²`
    pub permeability_work: f64,
    /// accumulated `∫∫_{D∖Ω} σ|∂_t A|²` (inductors and air)
    pub outer_dissipation: f64,
    /// accumulated `∫∫ J_s·∂_t A`
    pub source_work: f64,
    /// accumulated heat supplied by the positivity and phase regularisations
    pub regularisation: f64,
    /// `∫e + E_mag` at the start of the run
    pub initial: f64,
    /// slack contributed by this step alone
    pub step_slack: f64,
    /// right side minus left side of the accumulated inequality
    pub slack: f64,
}

impl EnergyLedgerRow {
    pub fn initial(grid: &RegionGrid, laws: &MaterialLaws, state: &SimState) -> Self {
        let internal = integrate(grid, &state.e, Domain::Workpiece);
        let mag = magnetic_energy(grid, laws, &state.z, &state.a);
        EnergyLedgerRow {
            t: state.t,
            internal_energy: internal,
            magnetic_energy: mag,
            initial: internal + mag,
            ..Default::default()
        }
    }

    /// Largest magnitude among the terms of the inequality.
    pub fn scale(&self) -> f64 {
        [
            self.internal_energy,
            self.magnetic_energy,
            self.permeability_work,
            self.outer_dissipation,
            self.source_work,
            self.regularisation,
            self.initial,
        ]
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn holds(&self, rtol: f64) -> bool {
        self.slack >= -rtol * self.scale()
    }

    pub const HEADER: &'static str = "t,internal_energy,magnetic_energy,permeability_work,outer_dissipation,source_work,regularisation,initial,step_slack,slack";

    pub fn values(&self) -> [f64; 10] {
        [
            self.t,
            self.internal_energy,
            self.magnetic_energy,
            self.permeability_work,
            self.outer_dissipation,
            self.source_work,
            self.regularisation,
            self.initial,
            self.step_slack,
            self.slack,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        let [t, internal_energy, magnetic_energy, permeability_work, outer_dissipation, source_work, regularisation, initial, step_slack, slack] =
            v;
        EnergyLedgerRow {
            t,
            internal_energy,
            magnetic_energy,
            permeability_work,
            outer_dissipation,
            source_work,
            regularisation,
            initial,
            step_slack,
            slack,
        }
    }

    pub fn csv(&self) -> String {
        self.values().iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }
}

/// What the ledger needs to know about the solver besides the two states.
pub struct LedgerContext<'a> {
    pub grid: &'a RegionGrid,
    pub laws: &'a MaterialLaws,
    pub em: &'a EmConfig,
    pub heat: &'a HeatConfig,
    pub source: &'a dyn CurrentSource,
}

/// Appends one step. `extra_heating` is the heating density of the
/// regularised phase equation, if the step used one.
pub fn energy_ledger_update(
    ctx: &LedgerContext<'_>,
    prev: &EnergyLedgerRow,
    old: &SimState,
    new: &SimState,
    extra_heating: Option<&[f64]>,
) -> EnergyLedgerRow {
    let LedgerContext {
        grid,
        laws,
        em,
        heat,
        source,
    } = *ctx;
    let dt = new.t - old.t;
    let v = grid.cell_volume();
    let internal = integrate(grid, &new.e, Domain::Workpiece);
    let mag = magnetic_energy(grid, laws, &new.z, &new.a);
    let mag_old = magnetic_energy(grid, laws, &old.z, &old.a);
    let perm = -(magnetic_energy(grid, laws, &new.z, &old.a) - mag_old);
    let sigma = sigma_eff_field(grid, laws, &new.theta, em.sigma_air(laws));
    let j = source_field(grid, source, new.t);
    let (mut outer, mut work, mut reg) = (0.0, 0.0, 0.0);
    for k in 0..grid.len() {
        let da = new.a[k] - old.a[k];
        work += j[k] * da;
        if grid.is_workpiece(k) {
            let th = new.theta[k];
            reg += heat.eps_pos / (th * th) + extra_heating.map_or(0.0, |x| x[k]);
        } else {
            outer += sigma[k] * da * da / dt;
        }
    }
    let (outer, work, reg) = (outer * v, work * v, dt * reg * v);
    let step_slack =
        work + reg - ((internal - prev.internal_energy) + (mag - prev.magnetic_energy) + perm + outer);
    let mut row = EnergyLedgerRow {
        t: new.t,
        internal_energy: internal,
        magnetic_energy: mag,
        permeability_work: prev.permeability_work + perm,
        outer_dissipation: prev.outer_dissipation + outer,
        source_work: prev.source_work + work,
        regularisation: prev.regularisation + reg,
        initial: prev.initial,
        step_slack,
        slack: 0.0,
    };
    row.slack = row.initial + row.source_work + row.regularisation
        - (row.internal_energy + row.magnetic_energy + row.permeability_work + row.outer_dissipation);
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_solver::Waveform;
    use crate::geometry::Rect;
    use crate::materials::ScalarLaw;
    use crate::stepper::{run, FailurePolicy, Problem, SolverConfig, StepperConfig};

    fn problem(amplitude: f64) -> Problem {
        let grid = RegionGrid::from_rects(
            20,
            20,
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
                    t_final: 0.016,
                    on_failure: FailurePolicy::Continue,
                    ..StepperConfig::default()
                },
                ..SolverConfig::default()
            },
        }
    }

    fn ledger(p: &Problem) -> Vec<EnergyLedgerRow> {
        let s0 = SimState::initial(p).unwrap();
        let ctx = LedgerContext {
            grid: &p.grid,
            laws: &p.laws,
            em: &p.solver.em,
            heat: &p.solver.heat,
            source: &p.source,
        };
        let mut rows = vec![EnergyLedgerRow::initial(&p.grid, &p.laws, &s0)];
        run(p, s0, |s| {
            let row = energy_ledger_update(&ctx, rows.last().unwrap(), &s.old, &s.new, None);
            rows.push(row);
            Ok(())
        })
        .unwrap();
        rows
    }

    #[test]
    fn frozen_state_has_zero_increments() {
        let p = problem(0.0);
        let s = SimState::uniform(&p.grid, &p.laws, 300.0, 0.2).unwrap();
        let mut later = s.clone();
        later.t = 1e-3;
        let ctx = LedgerContext {
            grid: &p.grid,
            laws: &p.laws,
            em: &p.solver.em,
            heat: &HeatConfig {
                eps_pos: 0.0,
                ..HeatConfig::default()
            },
            source: &p.source,
        };
        let r0 = EnergyLedgerRow::initial(&p.grid, &p.laws, &s);
        let r1 = energy_ledger_update(&ctx, &r0, &s, &later, None);
        assert_eq!(r1.permeability_work, 0.0);
        assert_eq!(r1.outer_dissipation, 0.0);
        assert_eq!(r1.source_work, 0.0);
        assert_eq!(r1.step_slack, 0.0);
        assert_eq!(r1.slack, 0.0);
    }

    #[test]
    fn slack_is_nonnegative_on_a_driven_run() {
        let rows = ledger(&problem(3e3));
        assert!(rows.last().unwrap().source_work.abs() > 0.0);
        for r in &rows {
            assert!(r.holds(1e-10), "{r:?}");
            assert!(r.step_slack >= -1e-10 * r.scale(), "{r:?}");
        }
    }

    #[test]
    fn constant_permeability_does_no_work() {
        let mut p = problem(3e3);
        p.laws.mu_work = ScalarLaw::constant(2.0);
        for r in ledger(&p) {
            assert_eq!(r.permeability_work, 0.0);
        }
    }
}
