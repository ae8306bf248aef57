//! Per-step certificate bookkeeping for a single run.

use super::energy::{energy_ledger_update, EnergyLedgerRow, LedgerContext};
use super::norms::NormTracker;
use super::skin::{skin_depth, TimeAverage};
use super::DiagnosticsConfig;
use crate::error::Result;
use crate::geometry::{Field, RegionGrid};
use crate::heat_solver::{
    entropy_production_step, ComparisonBounds, EntropyRow, EntropyStep, EntropyWeight,
};
use crate::linalg::norm_inf;
use crate::phase_solver::regularisation_heating;
use crate::stepper::{AcceptedStep, Problem, SimState};

/// Outcome of one certificate over a whole run. `worst` is the smallest
/// normalised slack seen (negative means violated).
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub passed: bool,
    pub worst: f64,
    /// Time of the first violation, if any.
    pub first_violation: Option<f64>,
}

impl Certificate {
    pub(crate) fn new(name: impl Into<String>) -> Self {
        Certificate {
            name: name.into(),
            passed: true,
            worst: f64::INFINITY,
            first_violation: None,
        }
    }

    /// Records a normalised slack; violated when below `-tol`.
    pub(crate) fn record(&mut self, t: f64, normalised: f64, tol: f64) {
        self.worst = self.worst.min(normalised);
        if !(normalised >= -tol) {
            self.passed = false;
            self.first_violation.get_or_insert(t);
        }
    }

    pub fn message(&self) -> String {
        match self.first_violation {
            None => format!("{}: holds (worst normalised slack {:e})", self.name, self.worst),
            Some(t) => format!(
                "{} violated at t={t:e} (worst normalised slack {:e})",
                self.name, self.worst
            ),
        }
    }
}

pub const ENERGY_CERT: &str = "energy inequality";
pub const POSITIVITY_CERT: &str = "temperature positivity";
pub const COMPARISON_CERT: &str = "comparison principle";

pub fn entropy_cert_name(w: &EntropyWeight) -> String {
    format!("entropy inequality [{}]", w.name())
}

/// Observes accepted steps and keeps every ledger of the run.
pub struct Monitor<'a> {
    problem: &'a Problem,
    cfg: &'a DiagnosticsConfig,
    weights: Vec<(EntropyWeight, Field)>,
    pub energy: Vec<EnergyLedgerRow>,
    /// One ledger per entropy weight, in configuration order.
    pub entropy: Vec<Vec<EntropyRow>>,
    pub bounds: ComparisonBounds,
    pub norms: NormTracker,
    pub joule: TimeAverage,
    pub min_theta: f64,
    pub max_theta: f64,
    pub steps: usize,
    pub unconverged_steps: usize,
    pub max_mismatch: f64,
    energy_cert: Certificate,
    entropy_certs: Vec<Certificate>,
    positivity: Certificate,
    comparison: Certificate,
}

fn workpiece_extremes(grid: &RegionGrid, theta: &[f64]) -> (f64, f64) {
    grid.workpiece_cells()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &k| (lo.min(theta[k]), hi.max(theta[k])))
}

impl<'a> Monitor<'a> {
    pub fn new(problem: &'a Problem, cfg: &'a DiagnosticsConfig, initial: &SimState) -> Self {
        let grid = &problem.grid;
        let weights: Vec<_> = cfg
            .entropy_weights
            .iter()
            .map(|w| (*w, w.field(grid)))
            .collect();
        let entropy_certs = weights.iter().map(|(w, _)| Certificate::new(entropy_cert_name(w))).collect();
        let (lo, hi) = workpiece_extremes(grid, &initial.theta);
        let t_final = initial.t + problem.solver.stepper.t_final;
        Monitor {
            problem,
            cfg,
            energy: vec![EnergyLedgerRow::initial(grid, &problem.laws, initial)],
            entropy: vec![Vec::new(); weights.len()],
            weights,
            bounds: ComparisonBounds::new(grid, &initial.theta),
            norms: NormTracker::new(grid, initial),
            joule: TimeAverage::new(grid, initial.t + cfg.skin_average_from * (t_final - initial.t)),
            min_theta: lo,
            max_theta: hi,
            steps: 0,
            unconverged_steps: 0,
            max_mismatch: 0.0,
            energy_cert: Certificate::new(ENERGY_CERT),
            entropy_certs,
            positivity: Certificate::new(POSITIVITY_CERT),
            comparison: Certificate::new(COMPARISON_CERT),
        }
    }

    /// Continues the energy ledger of an earlier run from its row at the
    /// resume state instead of starting a fresh one.
    pub fn resume_ledger(&mut self, row: EnergyLedgerRow) {
        self.energy = vec![row];
    }

    pub fn observe(&mut self, step: &AcceptedStep) -> Result<()> {
        let p = self.problem;
        let grid = &p.grid;
        let (old, new, rep) = (&step.old, &step.new, &step.report);
        let t = new.t;
        let extra = (p.solver.phase.delta > 0.0)
            .then(|| regularisation_heating(grid, &p.laws, p.solver.phase.delta, &new.z, &rep.theta_lag));
        let ctx = LedgerContext {
            grid,
            laws: &p.laws,
            em: &p.solver.em,
            heat: &p.solver.heat,
            source: &p.source,
        };
        let row = energy_ledger_update(&ctx, self.energy.last().expect("initial row"), old, new, extra.as_deref());
        self.energy_cert.record(t, row.slack / row.scale(), self.cfg.energy_rtol);
        self.energy.push(row);

        let es = EntropyStep {
            t,
            dt: rep.dt,
            theta_new: &new.theta,
            theta_old: &old.theta,
            theta_lag: &rep.theta_lag,
            z_new: &new.z,
            z_old: &old.z,
            heating: &rep.heating,
        };
        for (i, (_, w)) in self.weights.iter().enumerate() {
            let row = entropy_production_step(grid, &p.laws, &p.solver.heat, &es, w);
            let scale = row.scale();
            let normalised = if scale > 0.0 { row.slack / scale } else { 0.0 };
            self.entropy_certs[i].record(t, normalised, self.cfg.entropy_rtol);
            self.entropy[i].push(row);
        }

        let (lo, hi) = workpiece_extremes(grid, &new.theta);
        self.min_theta = self.min_theta.min(lo);
        self.max_theta = self.max_theta.max(hi);
        let floor = p.solver.heat.theta_floor;
        let margin = if lo > floor { (lo - floor) / lo } else { -1.0 };
        self.positivity.record(t, margin, 0.0);

        let max_source = grid
            .workpiece_cells()
            .iter()
            .fold(0.0_f64, |m, &k| m.max(rep.heating[k]));
        self.bounds
            .advance(grid, &p.laws, &p.solver.heat, &old.z, &new.z, max_source, rep.dt)?;
        let margin = ((lo - self.bounds.sub) / self.bounds.sub).min((self.bounds.sup - hi) / self.bounds.sup);
        self.comparison.record(t, margin, self.cfg.comparison_rtol);

        self.norms.update(grid, old, new);
        self.joule.add(t, rep.dt, &rep.em.joule);
        self.steps += 1;
        if !rep.converged {
            self.unconverged_steps += 1;
        }
        self.max_mismatch = self.max_mismatch.max(rep.mismatch());
        Ok(())
    }

    pub fn certificates(&self) -> Vec<Certificate> {
        let mut out = vec![self.energy_cert.clone()];
        out.extend(self.entropy_certs.iter().cloned());
        out.push(self.positivity.clone());
        out.push(self.comparison.clone());
        out
    }

    pub fn passed(&self) -> bool {
        self.certificates().iter().all(|c| c.passed)
    }

    pub fn skin_depth(&self) -> Option<f64> {
        self.joule.mean().and_then(|m| skin_depth(&self.problem.grid, &m))
    }

    /// Largest Joule power density averaged over the tail of the run.
    pub fn peak_mean_joule(&self) -> f64 {
        self.joule.mean().map_or(0.0, |m| norm_inf(&m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_solver::Waveform;
    use crate::geometry::Rect;
    use crate::materials::MaterialLaws;
    use crate::stepper::{run, FailurePolicy, SolverConfig, StepperConfig};

    #[test]
    fn driven_run_passes_all_certificates() {
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
        let p = Problem {
            grid,
            laws: MaterialLaws::default(),
            source: Waveform::Sinusoid {
                frequency: 32.0,
                amplitude: 3e3,
            },
            solver: SolverConfig {
                stepper: StepperConfig {
                    dt: 2e-3,
                    t_final: 0.02,
                    on_failure: FailurePolicy::Continue,
                    ..StepperConfig::default()
                },
                ..SolverConfig::default()
            },
        };
        let cfg = DiagnosticsConfig::default();
        let s0 = SimState::initial(&p).unwrap();
        let mut mon = Monitor::new(&p, &cfg, &s0);
        run(&p, s0, |s| mon.observe(s)).unwrap();
        assert_eq!(mon.steps, 10);
        assert_eq!(mon.energy.len(), 11);
        for c in mon.certificates() {
            assert!(c.passed, "{}", c.message());
        }
        assert!(mon.max_theta > 300.0);
        assert!(mon.skin_depth().is_some());
    }
}
