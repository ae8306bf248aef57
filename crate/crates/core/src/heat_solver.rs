//! Implicit energy balance on the workpiece in conservative form,
//!
//! `(e_new − e_old)/dt − div(κ_ε(θ_new, z_new) ∇θ_new) = S + ε_pos/θ_new²`,
//!
//! with `κ_ε = κ + ε_cond θ²`, `θ_new = ê(e_new, z_new)` and zero flux across
//! the workpiece boundary. `S` is the Joule power (plus the heating of the
//! regularised phase equation when that is enabled). The phase dissipation
//! `τ|ż|²` does not appear: in the internal-energy form it cancels against
//! the `ψ_z ż` part of `∂_t e`.
//!
//! Also hosts the per-step entropy ledger and the spatially constant
//! sub- and supersolutions used to test the comparison principle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiffusionOperator, FaceAverage, Field, RegionGrid};
use crate::linalg::{monotone_root, norm_inf, pcg};
use crate::materials::{invert_energy, FreeEnergyLaw, MaterialLaws};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatConfig {
    /// Coefficient of the positivity source `ε/θ²`.
    pub eps_pos: f64,
    /// Coefficient of the conductivity augmentation `ε θ²`.
    pub eps_cond: f64,
    /// Newton stops once `dt·‖R‖_∞ ≤ newton_rtol · scale`, where `scale` is
    /// the largest energy density involved.
    pub newton_rtol: f64,
    pub max_iter: usize,
    pub theta_floor: f64,
    pub cg_rtol: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            eps_pos: 1e-6,
            eps_cond: 1e-10,
            newton_rtol: 1e-12,
            max_iter: 50,
            theta_floor: 1e-8,
            cg_rtol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeatStepReport {
    pub newton_iterations: usize,
    /// Final `dt·‖R‖_∞ / scale`.
    pub residual: f64,
    /// `dt·‖R‖_∞` before each Newton update and after the last one.
    pub residual_history: Vec<f64>,
    pub cg_iterations: usize,
    pub line_search_halvings: usize,
    pub min_theta: f64,
}

/// Internal energy per cell; zero outside the workpiece.
pub fn energy_field(grid: &RegionGrid, laws: &MaterialLaws, theta: &[f64], z: &[f64]) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                laws.free_energy.energy(theta[k], z[k])
            } else {
                0.0
            }
        })
        .collect()
}

/// Entropy `−ψ_θ` per cell; zero outside the workpiece.
pub fn entropy_field(grid: &RegionGrid, laws: &MaterialLaws, theta: &[f64], z: &[f64]) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                -laws.free_energy.psi_theta(theta[k], z[k])
            } else {
                0.0
            }
        })
        .collect()
}

/// `κ(θ, z) + ε_cond θ²` per workpiece cell.
pub fn kappa_eps_field(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    eps_cond: f64,
    theta: &[f64],
    z: &[f64],
) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                laws.kappa(theta[k], z[k]) + eps_cond * theta[k] * theta[k]
            } else {
                0.0
            }
        })
        .collect()
}

/// `−div(κ_ε ∇·)` on the workpiece with harmonic face conductivities.
pub fn conduction_operator(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    eps_cond: f64,
    theta: &[f64],
    z: &[f64],
) -> DiffusionOperator {
    let kappa = kappa_eps_field(grid, laws, eps_cond, theta, z);
    DiffusionOperator::workpiece(grid, &kappa, FaceAverage::Harmonic)
}

/// Residual `R` of the energy balance; entries outside the workpiece are 0.
#[allow(clippy::too_many_arguments)]
fn residual(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &HeatConfig,
    e: &[f64],
    e_old: &[f64],
    theta: &[f64],
    z: &[f64],
    source: &[f64],
    dt: f64,
    out: &mut [f64],
) -> DiffusionOperator {
    let op = conduction_operator(grid, laws, cfg.eps_cond, theta, z);
    op.apply(theta, out);
    for k in 0..grid.len() {
        out[k] = if grid.is_workpiece(k) {
            out[k] + (e[k] - e_old[k]) / dt - source[k] - cfg.eps_pos / (theta[k] * theta[k])
        } else {
            0.0
        };
    }
    op
}

/// Solves the energy balance for a given source density. `theta_guess` is
/// the Newton starting point; the accumulation term uses `e_old` as given.
/// Returns `(θ_new, e_new, report)`; entries outside the workpiece are copied
/// from `theta_guess` and zeroed in `e_new`.
#[allow(clippy::too_many_arguments)]
pub fn solve_energy_balance(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &HeatConfig,
    e_old: &[f64],
    theta_guess: &[f64],
    z_new: &[f64],
    source: &[f64],
    dt: f64,
) -> Result<(Field, Field, HeatStepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Config(vec![format!("time step must be positive, got {dt}")]));
    }
    let law = &laws.free_energy;
    let cells = grid.workpiece_cells();
    let n = grid.len();
    if let Some(&k) = cells.iter().find(|&&k| !(theta_guess[k] > cfg.theta_floor)) {
        return Err(Error::NonPositiveTemperature(theta_guess[k]));
    }
    let mut theta = theta_guess.to_vec();
    let mut e = energy_field(grid, laws, &theta, z_new);
    let scale = cells
        .iter()
        .map(|&k| e_old[k].abs().max(e[k].abs()).max(dt * source[k].abs()))
        .fold(f64::MIN_POSITIVE, f64::max);
    let tol = cfg.newton_rtol * scale;
    let mut r = vec![0.0; n];
    let mut op = residual(grid, laws, cfg, &e, e_old, &theta, z_new, source, dt, &mut r);
    let mut norm = dt * norm_inf(&r);
    let mut report = HeatStepReport {
        residual_history: vec![norm],
        ..HeatStepReport::default()
    };
    while norm > tol {
        if report.newton_iterations >= cfg.max_iter {
            return Err(Error::NewtonNotConverged {
                solver: "energy balance",
                iterations: report.newton_iterations,
                residual: norm / scale,
            });
        }
        // J = diag(c_v/dt + 2ε/θ³) + L_κ, κ frozen at the current iterate
        let cv: Field = (0..n)
            .map(|k| if grid.is_workpiece(k) { law.heat_capacity(theta[k], z_new[k]) } else { 0.0 })
            .collect();
        let mass: Field = (0..n)
            .map(|k| {
                if grid.is_workpiece(k) {
                    cv[k] / dt + 2.0 * cfg.eps_pos / theta[k].powi(3)
                } else {
                    0.0
                }
            })
            .collect();
        let diag: Field = op.diagonal().iter().zip(&mass).map(|(d, m)| d + m).collect();
        let rhs: Field = r.iter().map(|v| -v).collect();
        let mut step = vec![0.0; n];
        let cg = pcg(
            |v, out| {
                op.apply(v, out);
                for k in 0..n {
                    out[k] += mass[k] * v[k];
                }
            },
            &diag,
            &rhs,
            &mut step,
            cfg.cg_rtol,
            10 * n,
        )?;
        report.cg_iterations += cg.iterations;

        // the update is taken in e: e += λ c_v δθ, θ = ê(e)
        let mut lambda = 1.0;
        loop {
            let mut trial_e = e.clone();
            let mut trial_theta = theta.clone();
            let mut admissible = true;
            for &k in cells {
                trial_e[k] = e[k] + lambda * cv[k] * step[k];
                match invert_energy(law, trial_e[k], z_new[k]) {
                    Ok(t) if t > cfg.theta_floor => trial_theta[k] = t,
                    _ => {
                        admissible = false;
                        break;
                    }
                }
            }
            if admissible {
                // keep the energy consistent with the inverted temperature
                for &k in cells {
                    trial_e[k] = law.energy(trial_theta[k], z_new[k]);
                }
                let mut trial_r = vec![0.0; n];
                let trial_op = residual(
                    grid, laws, cfg, &trial_e, e_old, &trial_theta, z_new, source, dt, &mut trial_r,
                );
                let trial_norm = dt * norm_inf(&trial_r);
                if trial_norm < norm || lambda < 1.0 / 64.0 {
                    e = trial_e;
                    theta = trial_theta;
                    r = trial_r;
                    op = trial_op;
                    norm = trial_norm;
                    break;
                }
            }
            lambda *= 0.5;
            report.line_search_halvings += 1;
            if lambda < 1e-10 {
                return Err(Error::NewtonNotConverged {
                    solver: "energy balance line search",
                    iterations: report.newton_iterations,
                    residual: norm / scale,
                });
            }
        }
        report.newton_iterations += 1;
        report.residual_history.push(norm);
    }
    report.residual = norm / scale;
    report.min_theta = cells.iter().map(|&k| theta[k]).fold(f64::INFINITY, f64::min);
    for k in 0..n {
        if !grid.is_workpiece(k) {
            e[k] = 0.0;
        }
    }
    Ok((theta, e, report))
}

/// Heat source `σ(θ_lag)|δA/dt|²` plus optional extra heating, on the workpiece.
pub fn heat_source(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    theta_lag: &[f64],
    a_new: &[f64],
    a_old: &[f64],
    dt: f64,
    extra: Option<&[f64]>,
) -> Field {
    let mut s = crate::em_solver::joule_power(grid, laws, a_new, a_old, dt, theta_lag);
    if let Some(x) = extra {
        for k in grid.workpiece_cells() {
            s[*k] += x[*k];
        }
    }
    s
}

/// One heat step driven by the magnetic update. The Joule power uses the
/// lagged temperature `theta_lag`, which is also the Newton starting point.
#[allow(clippy::too_many_arguments)]
pub fn heat_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &HeatConfig,
    e_old: &[f64],
    theta_lag: &[f64],
    z_new: &[f64],
    a_new: &[f64],
    a_old: &[f64],
    dt: f64,
    extra_heating: Option<&[f64]>,
) -> Result<(Field, Field, HeatStepReport)> {
    let source = heat_source(grid, laws, theta_lag, a_new, a_old, dt, extra_heating);
    solve_energy_balance(grid, laws, cfg, e_old, theta_lag, z_new, &source, dt)
}

/// Static test function for the entropy inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyWeight {
    Uniform,
    /// `1 + amplitude · cos(π ξ) cos(π η)` in coordinates `ξ, η ∈ [0, 1]`
    /// spanning the workpiece bounding box.
    Cosine { amplitude: f64 },
}

impl EntropyWeight {
    pub fn name(&self) -> String {
        match self {
            EntropyWeight::Uniform => "uniform".into(),
            EntropyWeight::Cosine { amplitude } => format!("cosine({amplitude})"),
        }
    }

    pub fn field(&self, grid: &RegionGrid) -> Field {
        match *self {
            EntropyWeight::Uniform => vec![1.0; grid.len()],
            EntropyWeight::Cosine { amplitude } => {
                let cells = grid.workpiece_cells();
                let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for &k in cells {
                    let (x, y) = grid.center(k);
                    x0 = x0.min(x - 0.5 * grid.hx());
                    x1 = x1.max(x + 0.5 * grid.hx());
                    y0 = y0.min(y - 0.5 * grid.hy());
                    y1 = y1.max(y + 0.5 * grid.hy());
                }
                use std::f64::consts::PI;
                (0..grid.len())
                    .map(|k| {
                        let (x, y) = grid.center(k);
                        let (xi, eta) = ((x - x0) / (x1 - x0), (y - y0) / (y1 - y0));
                        1.0 + amplitude * (PI * xi).cos() * (PI * eta).cos()
                    })
                    .collect()
            }
        }
    }
}

/// Face value of the test function for which the discrete conduction term
/// `Σ_f κ_f (θ_b − θ_a)(ϑ_a/θ_a − ϑ_b/θ_b)` splits exactly into
/// `ϑ_f ℓ² − ℓ (ϑ_b − ϑ_a)` with `ℓ = log θ_b − log θ_a`.
pub fn log_face_weight(ell: f64, wa: f64, wb: f64) -> f64 {
    if ell.abs() < 1e-4 {
        // series of (e^ℓ − 1 − ℓ)/ℓ² and (e^{−ℓ} − 1 + ℓ)/ℓ²
        let ca = 0.5 + ell / 6.0 + ell * ell / 24.0;
        let cb = 0.5 - ell / 6.0 + ell * ell / 24.0;
        return ca * wa + cb * wb;
    }
    let l2 = ell * ell;
    (ell.exp_m1() - ell) / l2 * wa + ((-ell).exp_m1() + ell) / l2 * wb
}

/// Terms of the discrete entropy inequality over one step for a static test
/// function `ϑ`:
///
/// `Δ∫ψ_θ ϑ + dt ∫ϑ(κ|∇log θ|² + σ|Ȧ|²/θ + τ|ż|²/θ + ε/θ³) − dt ∫κ ∇log θ·∇ϑ ≤ dt ∫ψ_θ ∂_tϑ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyRow {
    pub t: f64,
    /// `∫ϑ (ψ_θ(new) − ψ_θ(old))`
    pub psi_theta_change: f64,
    pub conduction: f64,
    pub joule: f64,
    pub phase: f64,
    /// Entropy supplied by the positivity source.
    pub regularisation: f64,
    /// `dt ∫κ ∇log θ·∇ϑ`
    pub flux: f64,
    /// `dt ∫ψ_θ ∂_tϑ`; zero for the static weights used here.
    pub weight_rate: f64,
    /// right side minus left side
    pub slack: f64,
}

impl EntropyRow {
    pub fn scale(&self) -> f64 {
        [
            self.psi_theta_change,
            self.conduction,
            self.joule,
            self.phase,
            self.regularisation,
            self.flux,
        ]
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub const HEADER: &'static str =
        "t,psi_theta_change,conduction,joule,phase,regularisation,flux,weight_rate,slack";

    pub fn values(&self) -> [f64; 9] {
        [
            self.t,
            self.psi_theta_change,
            self.conduction,
            self.joule,
            self.phase,
            self.regularisation,
            self.flux,
            self.weight_rate,
            self.slack,
        ]
    }

    pub fn from_values(v: [f64; 9]) -> Self {
        let [t, psi_theta_change, conduction, joule, phase, regularisation, flux, weight_rate, slack] = v;
        EntropyRow {
            t,
            psi_theta_change,
            conduction,
            joule,
            phase,
            regularisation,
            flux,
            weight_rate,
            slack,
        }
    }

    pub fn csv(&self) -> String {
        self.values().iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }
}

/// Inputs to one entropy-ledger row. `theta_lag` is the temperature at which
/// the step evaluated σ and τ, `heating` the source density the heat step
/// used.
pub struct EntropyStep<'a> {
    pub t: f64,
    pub dt: f64,
    pub theta_new: &'a [f64],
    pub theta_old: &'a [f64],
    pub theta_lag: &'a [f64],
    pub z_new: &'a [f64],
    pub z_old: &'a [f64],
    pub heating: &'a [f64],
}

pub fn entropy_production_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &HeatConfig,
    step: &EntropyStep<'_>,
    weight: &[f64],
) -> EntropyRow {
    let law = &laws.free_energy;
    let v = grid.cell_volume();
    let dt = step.dt;
    let (mut dpsi, mut joule, mut phase, mut reg) = (0.0, 0.0, 0.0, 0.0);
    for &k in grid.workpiece_cells() {
        let th = step.theta_new[k];
        let w = weight[k] * v;
        dpsi += w * (law.psi_theta(th, step.z_new[k]) - law.psi_theta(step.theta_old[k], step.z_old[k]));
        joule += w * step.heating[k] / th;
        let rate = (step.z_new[k] - step.z_old[k]) / dt;
        phase += w * laws.tau.value(step.theta_lag[k]) * rate * rate / th;
        reg += w * cfg.eps_pos / (th * th * th);
    }
    let kappa = kappa_eps_field(grid, laws, cfg.eps_cond, step.theta_new, step.z_new);
    let (mut cond, mut flux) = (0.0, 0.0);
    for f in grid.workpiece_faces() {
        let b = f.b.expect("workpiece faces are interior");
        let kf = FaceAverage::Harmonic.combine(kappa[f.a], kappa[b]) * f.geom * v;
        let ell = step.theta_new[b].ln() - step.theta_new[f.a].ln();
        cond += kf * log_face_weight(ell, weight[f.a], weight[b]) * ell * ell;
        flux += kf * ell * (weight[b] - weight[f.a]);
    }
    let (cond, joule, phase, reg, flux) = (dt * cond, dt * joule, dt * phase, dt * reg, dt * flux);
    let lhs = dpsi + cond + joule + phase + reg - flux;
    EntropyRow {
        t: step.t,
        psi_theta_change: dpsi,
        conduction: cond,
        joule,
        phase,
        regularisation: reg,
        flux,
        weight_rate: 0.0,
        slack: -lhs,
    }
}

/// Spatially constant lower and upper temperature bounds propagated with the
/// same implicit time discretisation as the heat step.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonBounds {
    pub sub: f64,
    pub sup: f64,
    /// `sup θ₀ + 1`
    pub sup_initial: f64,
    pub t: f64,
    /// Smallest `c` with `sup ≤ (sup θ₀ + 1) e^{c t}` so far.
    pub growth_rate: f64,
}

impl ComparisonBounds {
    pub fn new(grid: &RegionGrid, theta0: &[f64]) -> Self {
        let cells = grid.workpiece_cells();
        let lo = cells.iter().map(|&k| theta0[k]).fold(f64::INFINITY, f64::min);
        let hi = cells.iter().map(|&k| theta0[k]).fold(0.0, f64::max);
        ComparisonBounds {
            sub: lo,
            sup: hi + 1.0,
            sup_initial: hi + 1.0,
            t: 0.0,
            growth_rate: 0.0,
        }
    }

    /// Advances both bounds over one step. `max_source` bounds the heat
    /// source density on the workpiece during the step.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        grid: &RegionGrid,
        laws: &MaterialLaws,
        cfg: &HeatConfig,
        z_old: &[f64],
        z_new: &[f64],
        max_source: f64,
        dt: f64,
    ) -> Result<()> {
        let law = &laws.free_energy;
        let cap = law.admissible_box().theta_cap;
        let eps = cfg.eps_pos;
        let root = |target: f64, z: f64| -> Result<f64> {
            let g = |r: f64| {
                (
                    law.energy(r, z) - dt * eps / (r * r) - target,
                    law.heat_capacity(r, z) + 2.0 * dt * eps / (r * r * r),
                )
            };
            let lo = 1e-12;
            if g(lo).0 >= 0.0 {
                return Ok(lo);
            }
            monotone_root(g, lo, cap, target.max(lo), 1e-12_f64.max(4.0 * f64::EPSILON * target.abs()), "comparison bound")
        };
        let mut sub = f64::INFINITY;
        let mut sup: f64 = 0.0;
        for &k in grid.workpiece_cells() {
            sub = sub.min(root(law.energy(self.sub, z_old[k]), z_new[k])?);
            sup = sup.max(root(law.energy(self.sup, z_old[k]) + dt * max_source, z_new[k])?);
        }
        self.sub = sub;
        self.sup = sup;
        self.t += dt;
        if self.t > 0.0 {
            self.growth_rate = self
                .growth_rate
                .max((self.sup / self.sup_initial).ln() / self.t);
        }
        Ok(())
    }
}
