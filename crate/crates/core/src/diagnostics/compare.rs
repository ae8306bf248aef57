//! Lockstep comparison of a run against a reference run that uses the same
//! or a finer grid and time step. The reference is restricted to the coarse
//! grid after every coarse step and plays the role of the regular solution.

use super::gronwall::{gronwall_coefficient, GronwallEnvelope, GronwallRate};
use super::relative::{
    relative_dissipation, relative_energy, relative_energy_lower_bound, LowerBound,
    LowerBoundConstants, RelativeEnergy, StepPair, GROUP_NAMES,
};
use super::monitor::Certificate;
use crate::em_solver::magnetic_energy;
use crate::error::{Error, Result};
use crate::geometry::{integrate, Domain};
use crate::stepper::{advance, Problem, SimState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareOptions {
    /// Envelope tolerance relative to the field scale.
    pub rtol: f64,
    /// Bound on `max E / scale` when both runs start from the same data.
    pub identical_rtol: f64,
    pub lower_bound: LowerBoundConstants,
    /// Proportionality constant of the Gronwall rate.
    pub rate_constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelEnergyRow {
    pub t: f64,
    pub energy: RelativeEnergy,
    pub dissipation: f64,
    pub rate: GronwallRate,
    /// `∫₀ᵗ K`
    pub rate_integral: f64,
    /// `E(0) exp(∫₀ᵗ K)`
    pub gronwall_bound: f64,
    /// `∫₀ᵗ W exp(∫ₛᵗ K)`
    pub weighted_dissipation: f64,
    pub lower_bound: LowerBound,
}

impl RelEnergyRow {
    pub fn header() -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend(GROUP_NAMES.iter().map(|s| s.to_string()));
        cols.extend(
            [
                "relative_energy",
                "relative_dissipation",
                "gronwall_rate",
                "gronwall_integral",
                "gronwall_bound",
                "weighted_dissipation",
                "lower_bound",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        cols.join(",")
    }

    pub fn csv(&self) -> String {
        let mut vals = vec![self.t];
        vals.extend(self.energy.groups);
        vals.extend([
            self.energy.total(),
            self.dissipation,
            self.rate.value(),
            self.rate_integral,
            self.gronwall_bound,
            self.weighted_dissipation,
            self.lower_bound.value(),
        ]);
        vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<RelEnergyRow>,
    /// `max_t (∫ẽ + E_mag(ũ))`
    pub scale: f64,
    pub identical_initial_data: bool,
    pub max_relative_energy: f64,
    pub certificates: Vec<Certificate>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(|c| c.passed)
    }
}

pub const ENVELOPE_CERT: &str = "relative energy inequality";
pub const UNIQUENESS_CERT: &str = "weak-strong uniqueness";
pub const LOWER_BOUND_CERT: &str = "relative energy lower bound";

/// Restricts a reference state to the coarse grid of `coarse`.
pub fn project(coarse: &Problem, fine: &Problem, state: &SimState) -> Result<SimState> {
    if coarse.grid == fine.grid {
        return Ok(state.clone());
    }
    let (cg, fg) = (&coarse.grid, &fine.grid);
    SimState::from_fields(
        cg,
        &coarse.laws,
        state.t,
        state.step,
        cg.restrict(fg, &state.theta)?,
        cg.restrict(fg, &state.z)?,
        cg.restrict(fg, &state.a)?,
    )
}

fn substeps(weak: &Problem, strong: &Problem) -> Result<usize> {
    let (dw, ds) = (weak.solver.stepper.dt, strong.solver.stepper.dt);
    let ratio = dw / ds;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::IncompatibleRuns(format!(
            "time step {dw} is not an integer multiple of the reference step {ds}"
        )));
    }
    Ok(m as usize)
}

fn check_compatible(weak: &Problem, strong: &Problem) -> Result<()> {
    if weak.laws != strong.laws {
        return Err(Error::IncompatibleRuns("material laws differ".into()));
    }
    if weak.source != strong.source {
        return Err(Error::IncompatibleRuns("current sources differ".into()));
    }
    if weak.grid != strong.grid && weak.grid.refinement_factor_of(&strong.grid).is_none() {
        return Err(Error::IncompatibleRuns(
            "reference grid is neither the same grid nor a uniform refinement of it".into(),
        ));
    }
    let (tw, ts) = (weak.solver.stepper.t_final, strong.solver.stepper.t_final);
    if (tw - ts).abs() > 1e-12 * tw.abs().max(1.0) {
        return Err(Error::IncompatibleRuns(format!("final times differ: {tw} vs {ts}")));
    }
    Ok(())
}

/// Runs both problems in lockstep and evaluates the relative energy
/// inequality, its lower bound and, for identical initial data, uniqueness.
pub fn weak_strong_compare(
    weak: &Problem,
    weak_initial: SimState,
    strong: &Problem,
    strong_initial: SimState,
    opts: &CompareOptions,
) -> Result<CompareReport> {
    check_compatible(weak, strong)?;
    let m = substeps(weak, strong)?;
    let grid = &weak.grid;
    let laws = &weak.laws;
    let field_scale = |s: &SimState| {
        integrate(grid, &s.e, Domain::Workpiece) + magnetic_energy(grid, laws, &s.z, &s.a)
    };
    let mut u = weak_initial;
    let mut strong_state = strong_initial;
    let mut reference = project(weak, strong, &strong_state)?;
    let e0 = relative_energy(grid, laws, &u, &reference)?;
    let mut scale = field_scale(&reference);
    let mut envelope = GronwallEnvelope::new(e0.total());
    let mut rows = vec![RelEnergyRow {
        t: u.t,
        energy: e0,
        dissipation: 0.0,
        rate: GronwallRate::default(),
        rate_integral: 0.0,
        gronwall_bound: envelope.bound(),
        weighted_dissipation: 0.0,
        lower_bound: relative_energy_lower_bound(grid, &opts.lower_bound, &u, &reference)?,
    }];
    let n = weak.solver.stepper.step_count();
    let (dt_w, dt_s) = (weak.solver.stepper.dt, strong.solver.stepper.dt);
    let t0 = u.t;
    let mut scratch = Vec::new();
    for i in 0..n {
        let target = (t0 + (i + 1) as f64 * dt_w).min(t0 + weak.solver.stepper.t_final);
        let dt = target - u.t;
        if dt <= 0.0 {
            break;
        }
        scratch.clear();
        let u_new = advance(weak, &u, dt, &mut scratch)?;
        for j in 0..m {
            let ts = if j + 1 == m {
                target
            } else {
                (strong_state.t + dt_s).min(target)
            };
            scratch.clear();
            strong_state = advance(strong, &strong_state, ts - strong_state.t, &mut scratch)?;
        }
        let ref_new = project(weak, strong, &strong_state)?;
        let energy = relative_energy(grid, laws, &u_new, &ref_new)?;
        let dissipation = relative_dissipation(
            grid,
            laws,
            &weak.solver.em,
            weak.solver.heat.eps_cond,
            &StepPair {
                old: &u,
                new: &u_new,
            },
            &StepPair {
                old: &reference,
                new: &ref_new,
            },
        )?;
        let rate = gronwall_coefficient(grid, laws, opts.rate_constant, &reference, &ref_new)?;
        envelope.advance(dt, rate.value(), dissipation);
        scale = scale.max(field_scale(&ref_new));
        rows.push(RelEnergyRow {
            t: u_new.t,
            energy,
            dissipation,
            rate,
            rate_integral: envelope.integral,
            gronwall_bound: envelope.bound(),
            weighted_dissipation: envelope.weighted_dissipation,
            lower_bound: relative_energy_lower_bound(grid, &opts.lower_bound, &u_new, &ref_new)?,
        });
        u = u_new;
        reference = ref_new;
    }

    let identical = rows[0].energy.total() <= opts.identical_rtol * scale;
    let mut env_cert = Certificate::new(ENVELOPE_CERT);
    let mut lb_cert = Certificate::new(LOWER_BOUND_CERT);
    let mut uniq = Certificate::new(UNIQUENESS_CERT);
    let mut max_e: f64 = 0.0;
    for r in &rows {
        let e = r.energy.total();
        max_e = max_e.max(e);
        let env_slack = r.gronwall_bound - (e + r.weighted_dissipation);
        env_cert.record(r.t, env_slack / scale, opts.rtol);
        lb_cert.record(r.t, (e - r.lower_bound.value()) / scale, 1e-12);
        if identical {
            uniq.record(r.t, (opts.identical_rtol * scale - e) / scale, 0.0);
        }
    }
    let mut certificates = vec![env_cert, lb_cert];
    if identical {
        certificates.push(uniq);
    }
    Ok(CompareReport {
        rows,
        scale,
        identical_initial_data: identical,
        max_relative_energy: max_e,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em_solver::Waveform;
    use crate::geometry::{Rect, RegionGrid};
    use crate::materials::{validate_assumptions, Level, MaterialLaws, SamplingSpec};
    use crate::stepper::{FailurePolicy, SolverConfig, StepperConfig};

    fn problem(n: usize, dt: f64) -> Problem {
        let grid = RegionGrid::from_rects(
            n,
            n,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Rect::new(0.25, 0.75, 0.25, 0.75),
            &[
                (Rect::new(0.0625, 0.1875, 0.375, 0.625), 1.0),
                (Rect::new(0.8125, 0.9375, 0.375, 0.625), -1.0),
            ],
        )
        .unwrap();
        Problem {
            grid,
            laws: MaterialLaws::default(),
            source: Waveform::Sinusoid {
                frequency: 32.0,
                amplitude: 3e3,
            },
            solver: SolverConfig {
                stepper: StepperConfig {
                    dt,
                    t_final: 0.012,
                    on_failure: FailurePolicy::Continue,
                    ..StepperConfig::default()
                },
                ..SolverConfig::default()
            },
        }
    }

    fn options(laws: &MaterialLaws) -> CompareOptions {
        let rep = validate_assumptions(laws, Level::A2, &SamplingSpec::default());
        CompareOptions {
            rtol: 1e-8,
            identical_rtol: 1e-10,
            lower_bound: LowerBoundConstants::from_constants(&rep.constants, laws),
            rate_constant: rep.constants.contrast(),
        }
    }

    #[test]
    fn identical_runs_have_zero_relative_energy() {
        let p = problem(16, 2e-3);
        let s = SimState::initial(&p).unwrap();
        let rep = weak_strong_compare(&p, s.clone(), &p, s, &options(&p.laws)).unwrap();
        assert!(rep.identical_initial_data);
        assert_eq!(rep.max_relative_energy, 0.0);
        assert!(rep.passed(), "{:?}", rep.certificates);
        assert_eq!(rep.rows.len(), 7);
    }

    #[test]
    fn perturbed_start_stays_inside_the_envelope() {
        let p = problem(16, 2e-3);
        let mut q = p.clone();
        q.solver.stepper.initial_theta = 303.0;
        let rep = weak_strong_compare(
            &q,
            SimState::initial(&q).unwrap(),
            &p,
            SimState::initial(&p).unwrap(),
            &options(&p.laws),
        )
        .unwrap();
        assert!(!rep.identical_initial_data);
        assert!(rep.rows[0].energy.total() > 0.0);
        assert!(rep.passed(), "{:?}", rep.certificates);
    }

    #[test]
    fn refined_reference_runs_in_lockstep() {
        let weak = problem(16, 2e-3);
        let strong = problem(32, 1e-3);
        let rep = weak_strong_compare(
            &weak,
            SimState::initial(&weak).unwrap(),
            &strong,
            SimState::initial(&strong).unwrap(),
            &options(&weak.laws),
        )
        .unwrap();
        assert_eq!(rep.rows.len(), 7);
        assert!(rep.rows.iter().all(|r| r.energy.total() >= r.lower_bound.value()));
    }

    #[test]
    fn incompatible_runs_are_rejected() {
        let p = problem(16, 2e-3);
        let s = SimState::initial(&p).unwrap();
        let other = problem(20, 2e-3);
        let so = SimState::initial(&other).unwrap();
        assert!(matches!(
            weak_strong_compare(&p, s.clone(), &other, so, &options(&p.laws)),
            Err(Error::IncompatibleRuns(_))
        ));
        let odd = problem(16, 0.8e-3);
        let so = SimState::initial(&odd).unwrap();
        assert!(matches!(
            weak_strong_compare(&p, s, &odd, so, &options(&p.laws)),
            Err(Error::IncompatibleRuns(_))
        ));
    }
}
