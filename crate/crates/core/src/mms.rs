//! Manufactured-solution convergence studies for the heat and magnetic
//! solvers.
//!
//! Spatial studies drive each solver with the continuous operator applied
//! to the exact solution and the discrete time difference of its
//! accumulation term, so the time discretisation is exact and only the
//! spatial error remains. Temporal studies do the opposite: the forcing uses
//! the discrete operator and the exact time derivative, so the exact
//! solution sampled at cell centres solves the spatially discrete problem
//! and only the time error remains.

use std::f64::consts::PI;

use crate::em_solver::{curl_curl_operator, em_step_with_forcing, sigma_eff_field, EmConfig};
use crate::error::Result;
use crate::geometry::{Field, Rect, RegionGrid};
use crate::heat_solver::{conduction_operator, energy_field, solve_energy_balance, HeatConfig};
use crate::materials::{FreeEnergy, FreeEnergyLaw, MaterialLaws, ScalarLaw, SmoothSteelLaw};

/// Errors on a refinement sequence and the observed orders between
/// consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderStudy {
    pub name: &'static str,
    /// Mesh width or time step of each level, coarsest first.
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
}

impl OrderStudy {
    pub fn orders(&self) -> Vec<f64> {
        self.errors
            .windows(2)
            .zip(self.resolutions.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect()
    }

    pub fn min_order(&self) -> f64 {
        self.orders().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Exact solution `base + amplitude · shape(x, y) · g(t)` with
/// `g(t) = 1 + sin(π t / T)/2`.
#[derive(Clone, Copy, Debug)]
struct Manufactured {
    base: f64,
    amplitude: f64,
    horizon: f64,
}

impl Manufactured {
    fn g(&self, t: f64) -> f64 {
        1.0 + 0.5 * (PI * t / self.horizon).sin()
    }
    fn dg(&self, t: f64) -> f64 {
        0.5 * PI / self.horizon * (PI * t / self.horizon).cos()
    }
}

fn mms_grid(n: usize) -> Result<RegionGrid> {
    RegionGrid::from_rects(
        n,
        n,
        Rect::new(0.0, 1.0, 0.0, 1.0),
        Rect::new(0.25, 0.75, 0.25, 0.75),
        &[],
    )
}

fn l2_error(grid: &RegionGrid, cells: impl Iterator<Item = usize>, u: &[f64], exact: &[f64]) -> f64 {
    let v = grid.cell_volume();
    cells.map(|k| (u[k] - exact[k]).powi(2) * v).sum::<f64>().sqrt()
}

pub const HORIZON: f64 = 0.1;

/// Laws of the heat studies: smooth free energy, constant conductivity,
/// no phase change (`z ≡ 0`).
pub fn heat_laws() -> MaterialLaws {
    MaterialLaws {
        free_energy: FreeEnergy::SmoothSteel(SmoothSteelLaw::default()),
        kappa_theta: ScalarLaw::constant(0.1),
        ..MaterialLaws::default()
    }
}

fn heat_cfg() -> HeatConfig {
    HeatConfig {
        eps_pos: 0.0,
        eps_cond: 0.0,
        newton_rtol: 1e-13,
        cg_rtol: 1e-13,
        ..HeatConfig::default()
    }
}

const HEAT: Manufactured = Manufactured {
    base: 600.0,
    amplitude: 100.0,
    horizon: HORIZON,
};

/// `cos(π ξ) cos(π η)` on the workpiece, `ξ, η ∈ [0, 1]`: zero normal flux.
fn heat_shape(x: f64, y: f64) -> f64 {
    (PI * (x - 0.25) / 0.5).cos() * (PI * (y - 0.25) / 0.5).cos()
}

fn heat_exact(grid: &RegionGrid, t: f64) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                let (x, y) = grid.center(k);
                HEAT.base + HEAT.amplitude * heat_shape(x, y) * HEAT.g(t)
            } else {
                0.0
            }
        })
        .collect()
}

/// Runs the heat solver over `[0, HORIZON]` with `steps` steps and returns
/// the final L² error.
fn heat_run(n: usize, steps: usize, discrete_in_space: bool) -> Result<f64> {
    let grid = mms_grid(n)?;
    let laws = heat_laws();
    let cfg = heat_cfg();
    let law = &laws.free_energy;
    let kappa = laws.kappa(HEAT.base, 0.0);
    let z = vec![0.0; grid.len()];
    let dt = HORIZON / steps as f64;
    let mut theta = heat_exact(&grid, 0.0);
    let mut e = energy_field(&grid, &laws, &theta, &z);
    for i in 1..=steps {
        let t = i as f64 * dt;
        let exact = heat_exact(&grid, t);
        let mut source = vec![0.0; grid.len()];
        if discrete_in_space {
            conduction_operator(&grid, &laws, 0.0, &exact, &z).apply(&exact, &mut source);
            for &k in grid.workpiece_cells() {
                let (x, y) = grid.center(k);
                let rate = HEAT.amplitude * heat_shape(x, y) * HEAT.dg(t);
                source[k] += law.heat_capacity(exact[k], 0.0) * rate;
            }
        } else {
            let previous = heat_exact(&grid, t - dt);
            for &k in grid.workpiece_cells() {
                let (x, y) = grid.center(k);
                // −κΔθ for the cosine mode on a workpiece of side 1/2
                let diffusion = kappa * 8.0 * PI * PI * HEAT.amplitude * heat_shape(x, y) * HEAT.g(t);
                source[k] = (law.energy(exact[k], 0.0) - law.energy(previous[k], 0.0)) / dt + diffusion;
            }
        }
        let (th, en, _) = solve_energy_balance(&grid, &laws, &cfg, &e, &theta, &z, &source, dt)?;
        theta = th;
        e = en;
    }
    let exact = heat_exact(&grid, HORIZON);
    Ok(l2_error(&grid, grid.workpiece_cells().iter().copied(), &theta, &exact))
}

pub fn heat_spatial_study(sizes: &[usize], steps: usize) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &n in sizes {
        errors.push(heat_run(n, steps, false)?);
    }
    Ok(OrderStudy {
        name: "heat_space",
        resolutions: sizes.iter().map(|&n| 1.0 / n as f64).collect(),
        errors,
    })
}

pub fn heat_temporal_study(n: usize, step_counts: &[usize]) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &s in step_counts {
        errors.push(heat_run(n, s, true)?);
    }
    Ok(OrderStudy {
        name: "heat_time",
        resolutions: step_counts.iter().map(|&s| HORIZON / s as f64).collect(),
        errors,
    })
}

/// Laws of the magnetic studies: unit permeability everywhere so the exact
/// potential is smooth across material interfaces.
pub fn em_laws() -> MaterialLaws {
    MaterialLaws {
        mu_work: ScalarLaw::constant(1.0),
        mu_cond: 1.0,
        mu_air: 1.0,
        ..MaterialLaws::default()
    }
}

const EM: Manufactured = Manufactured {
    base: 0.0,
    amplitude: 1.0,
    horizon: HORIZON,
};

fn em_exact(grid: &RegionGrid, t: f64) -> Field {
    (0..grid.len())
        .map(|k| {
            let (x, y) = grid.center(k);
            EM.amplitude * (PI * x).sin() * (PI * y).sin() * EM.g(t)
        })
        .collect()
}

fn em_run(n: usize, steps: usize, discrete_in_space: bool) -> Result<f64> {
    let grid = mms_grid(n)?;
    let laws = em_laws();
    let cfg = EmConfig {
        rtol: 1e-13,
        ..EmConfig::default()
    };
    let theta = vec![600.0; grid.len()];
    let z = vec![0.0; grid.len()];
    let sigma = sigma_eff_field(&grid, &laws, &theta, cfg.sigma_air(&laws));
    let dt = HORIZON / steps as f64;
    let mut a = em_exact(&grid, 0.0);
    for i in 1..=steps {
        let t = i as f64 * dt;
        let exact = em_exact(&grid, t);
        let mut forcing = vec![0.0; grid.len()];
        if discrete_in_space {
            curl_curl_operator(&grid, &laws, &z).apply(&exact, &mut forcing);
            for k in 0..grid.len() {
                let (x, y) = grid.center(k);
                let rate = EM.amplitude * (PI * x).sin() * (PI * y).sin() * EM.dg(t);
                forcing[k] += sigma[k] * rate;
            }
        } else {
            let previous = em_exact(&grid, t - dt);
            for k in 0..grid.len() {
                forcing[k] = sigma[k] * (exact[k] - previous[k]) / dt + 2.0 * PI * PI * exact[k];
            }
        }
        let (next, _) = em_step_with_forcing(&grid, &laws, &cfg, &forcing, &a, &theta, &z, dt)?;
        a = next;
    }
    let exact = em_exact(&grid, HORIZON);
    Ok(l2_error(&grid, 0..grid.len(), &a, &exact))
}

pub fn em_spatial_study(sizes: &[usize], steps: usize) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &n in sizes {
        errors.push(em_run(n, steps, false)?);
    }
    Ok(OrderStudy {
        name: "em_space",
        resolutions: sizes.iter().map(|&n| 1.0 / n as f64).collect(),
        errors,
    })
}

pub fn em_temporal_study(n: usize, step_counts: &[usize]) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &s in step_counts {
        errors.push(em_run(n, s, true)?);
    }
    Ok(OrderStudy {
        name: "em_time",
        resolutions: step_counts.iter().map(|&s| HORIZON / s as f64).collect(),
        errors,
    })
}

/// The four studies at the default resolutions: grids 32, 64, 128 and
/// 8, 16, 32 time steps.
pub fn standard_studies() -> Result<Vec<OrderStudy>> {
    Ok(vec![
        heat_spatial_study(&[32, 64, 128], 4)?,
        heat_temporal_study(32, &[8, 16, 32])?,
        em_spatial_study(&[32, 64, 128], 4)?,
        em_temporal_study(32, &[8, 16, 32])?,
    ])
}
