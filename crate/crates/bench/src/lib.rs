//! Benchmark fixtures: the bundled battery problem at a chosen resolution,
//! warmed up for a few steps so the potential and Joule heating are nonzero.

use hardening_core::config::{parse_config_str, ParseOptions};
use hardening_core::stepper::{run_until, Problem, SimState};
use hardening_core::Result;

const BATTERY: &str = include_str!("../../../configs/battery.toml");

pub struct Fixture {
    pub problem: Problem,
    pub state: SimState,
    /// Temperature the warm-up ended at, for lagged evaluations.
    pub theta_lag: Vec<f64>,
}

impl Fixture {
    pub fn battery(n: usize, warmup_steps: usize) -> Result<Self> {
        let opts = ParseOptions {
            overrides: vec![format!("grid.nx={n}"), format!("grid.ny={n}")],
            ..ParseOptions::default()
        };
        let problem = parse_config_str(BATTERY, &opts)?.config.problem()?;
        let end = warmup_steps as f64 * problem.solver.stepper.dt;
        let state = run_until(&problem, SimState::initial(&problem)?, end, |_| Ok(()))?;
        let theta_lag = state.theta.clone();
        Ok(Fixture {
            problem,
            state,
            theta_lag,
        })
    }

    pub fn dt(&self) -> f64 {
        self.problem.solver.stepper.dt
    }
}
