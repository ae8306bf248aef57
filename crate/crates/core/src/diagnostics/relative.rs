//! Relative energy between two states on the same grid, its lower bound, and
//! the relative dissipation of a pair of steps.
//!
//! The magnetic groups use the face discretisation of the solver: on a face
//! with reluctivity `ν_f = (ν_a + ν_b)/2` the energy density is
//! `½ ν_f geom Δ²` with `Δ` the potential jump, so every group below is an
//! exact Bregman term of the discrete energy.

use crate::em_solver::{magnetic_energy, reluctivity, sigma_eff_field, EmConfig};
use crate::error::{Error, Result};
use crate::geometry::{FaceAverage, RegionGrid};
use crate::heat_solver::kappa_eps_field;
use crate::materials::{EmpiricalConstants, FreeEnergyLaw, MaterialLaws};
use crate::stepper::SimState;

pub const GROUP_NAMES: [&str; 7] = [
    "internal_energy",
    "magnetic_energy",
    "reference_internal_energy",
    "reference_magnetic_energy",
    "phase_linearisation",
    "entropy_linearisation",
    "curl_linearisation",
];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelativeEnergy {
    /// `∫e(θ,z)`, `E_mag(z,A)`, `−∫e(θ̃,z̃)`, `−E_mag(z̃,Ã)`,
    /// `−∫ψ_z(θ̃,z̃)(z−z̃)`, `∫θ̃(ψ_θ(θ,z)−ψ_θ(θ̃,z̃))` and
    /// `−∫[ν̃ B̃·(B−B̃) − μ′(z̃)/(2μ(z̃)²)|B̃|²(z−z̃)]`
    pub groups: [f64; 7],
}

impl RelativeEnergy {
    /// Sum with each quantity paired against its reference counterpart, so
    /// identical states give exactly zero.
    pub fn total(&self) -> f64 {
        let g = &self.groups;
        (g[0] + g[2]) + (g[1] + g[3]) + g[4] + g[5] + g[6]
    }
}

pub(crate) fn check_pair(grid: &RegionGrid, u: &SimState, v: &SimState) -> Result<()> {
    let n = grid.len();
    for s in [u, v] {
        if s.theta.len() != n || s.z.len() != n || s.a.len() != n {
            return Err(Error::IncompatibleRuns(format!(
                "state has {} cells, grid has {n}",
                s.theta.len()
            )));
        }
    }
    Ok(())
}

/// Potential jump across a face; boundary faces see a ghost value of zero.
#[inline]
fn jump(a: &[f64], fa: usize, fb: Option<usize>) -> f64 {
    a[fa] - fb.map_or(0.0, |b| a[b])
}

/// `E(u | ũ)` with `ũ = reference`.
pub fn relative_energy(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    u: &SimState,
    reference: &SimState,
) -> Result<RelativeEnergy> {
    check_pair(grid, u, reference)?;
    let law = &laws.free_energy;
    let r = reference;
    let v = grid.cell_volume();
    let mut g = [0.0; 7];
    for &k in grid.workpiece_cells() {
        let (th, z, tt, zt) = (u.theta[k], u.z[k], r.theta[k], r.z[k]);
        g[0] += law.energy(th, z);
        g[2] -= law.energy(tt, zt);
        g[4] -= law.psi_z(tt, zt) * (z - zt);
        g[5] += tt * (law.psi_theta(th, z) - law.psi_theta(tt, zt));
    }
    for x in [0, 2, 4, 5] {
        g[x] *= v;
    }
    g[1] = magnetic_energy(grid, laws, &u.z, &u.a);
    g[3] = -magnetic_energy(grid, laws, &r.z, &r.a);
    let nu = reluctivity(grid, laws, &r.z);
    // ∂ν/∂z per cell
    let dnu: Vec<f64> = (0..grid.len())
        .map(|k| {
            let reg = grid.region(k);
            let mu = laws.mu(reg, r.z[k]);
            -laws.mu_prime(reg, r.z[k]) / (mu * mu)
        })
        .collect();
    let mut lin = 0.0;
    for f in grid.faces() {
        let dt_ = jump(&r.a, f.a, f.b);
        let d = jump(&u.a, f.a, f.b);
        let (nu_f, dz_term) = match f.b {
            Some(b) => (
                0.5 * (nu[f.a] + nu[b]),
                0.5 * (dnu[f.a] * (u.z[f.a] - r.z[f.a]) + dnu[b] * (u.z[b] - r.z[b])),
            ),
            None => (nu[f.a], dnu[f.a] * (u.z[f.a] - r.z[f.a])),
        };
        // derivative of ½ν_f geom Δ² in the jump and in the cell phases
        lin += f.geom * (nu_f * dt_ * (d - dt_) + 0.5 * dz_term * dt_ * dt_);
    }
    g[6] = -lin * v;
    Ok(RelativeEnergy { groups: g })
}

/// Constants of the lower bound
/// `c_θ ∫(θ − θ̃ − θ̃ log(θ/θ̃)) + c_z ∫|z − z̃|² + c_A ∫_D |curl A − curl Ã|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundConstants {
    pub thermal: f64,
    pub phase: f64,
    pub magnetic: f64,
}

impl LowerBoundConstants {
    /// `c_θ = min c_v`, `c_z = ½ min ψ_zz` and `c_A = 1/(6 μ_max)`. The
    /// halves come from the weight `(1 − s)` in the integral Taylor remainder;
    /// the third in `c_A` from the Young split of the mixed `(z, B)` Hessian.
    pub fn from_constants(c: &EmpiricalConstants, laws: &MaterialLaws) -> Self {
        let mu_max = c.mu_max.max(laws.mu_air).max(laws.mu_cond);
        LowerBoundConstants {
            thermal: c.heat_capacity_min.max(0.0),
            phase: 0.5 * c.psi_zz_min.max(0.0),
            magnetic: 1.0 / (6.0 * mu_max),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LowerBound {
    pub thermal: f64,
    pub phase: f64,
    pub magnetic: f64,
}

impl LowerBound {
    pub fn value(&self) -> f64 {
        self.thermal + self.phase + self.magnetic
    }
}

/// `θ − θ̃ − θ̃ log(θ/θ̃)`, evaluated without cancellation near `θ = θ̃`.
pub fn log_bregman(theta: f64, reference: f64) -> f64 {
    let x = theta / reference - 1.0;
    if x.abs() < 1e-3 {
        // x − log(1+x) = x²/2 − x³/3 + x⁴/4 − …
        reference * x * x * (0.5 - x / 3.0 + x * x / 4.0 - x * x * x / 5.0)
    } else {
        reference * (x - x.ln_1p())
    }
}

pub fn relative_energy_lower_bound(
    grid: &RegionGrid,
    c: &LowerBoundConstants,
    u: &SimState,
    reference: &SimState,
) -> Result<LowerBound> {
    check_pair(grid, u, reference)?;
    let v = grid.cell_volume();
    let (mut th, mut ph) = (0.0, 0.0);
    for &k in grid.workpiece_cells() {
        th += log_bregman(u.theta[k], reference.theta[k]);
        let dz = u.z[k] - reference.z[k];
        ph += dz * dz;
    }
    let mut mag = 0.0;
    for f in grid.faces() {
        let d = jump(&u.a, f.a, f.b) - jump(&reference.a, f.a, f.b);
        mag += f.geom * d * d;
    }
    Ok(LowerBound {
        thermal: c.thermal * th * v,
        phase: c.phase * ph * v,
        magnetic: c.magnetic * mag * v,
    })
}

/// Outcome of comparing the relative energy against its lower bound, with
/// the cell where the local margin is smallest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundCheck {
    pub energy: f64,
    pub bound: f64,
    pub worst_cell: usize,
    pub worst_margin: f64,
}

impl LowerBoundCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.energy >= self.bound - tol && self.bound >= 0.0
    }
}

/// Evaluates both sides and localises the smallest cellwise margin. Face
/// contributions are split evenly between the two adjacent cells.
pub fn check_lower_bound(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    c: &LowerBoundConstants,
    u: &SimState,
    reference: &SimState,
) -> Result<LowerBoundCheck> {
    let energy = relative_energy(grid, laws, u, reference)?.total();
    let bound = relative_energy_lower_bound(grid, c, u, reference)?.value();
    let law = &laws.free_energy;
    let r = reference;
    let mut margin = vec![0.0; grid.len()];
    for &k in grid.workpiece_cells() {
        let (th, z, tt, zt) = (u.theta[k], u.z[k], r.theta[k], r.z[k]);
        let local = law.energy(th, z) - law.energy(tt, zt) - law.psi_z(tt, zt) * (z - zt)
            + tt * (law.psi_theta(th, z) - law.psi_theta(tt, zt));
        margin[k] = local - c.thermal * log_bregman(th, tt) - c.phase * (z - zt) * (z - zt);
    }
    let nu_u = reluctivity(grid, laws, &u.z);
    let nu_r = reluctivity(grid, laws, &r.z);
    let dnu: Vec<f64> = (0..grid.len())
        .map(|k| {
            let reg = grid.region(k);
            let mu = laws.mu(reg, r.z[k]);
            -laws.mu_prime(reg, r.z[k]) / (mu * mu)
        })
        .collect();
    for f in grid.faces() {
        let (d, dr) = (jump(&u.a, f.a, f.b), jump(&r.a, f.a, f.b));
        let cells: Vec<usize> = std::iter::once(f.a).chain(f.b).collect();
        let share = 1.0 / cells.len() as f64;
        for &k in &cells {
            // the cell's own reluctivity, as in the half-face split of ν_f
            let local = 0.5 * nu_u[k] * d * d
                - 0.5 * nu_r[k] * dr * dr
                - nu_r[k] * dr * (d - dr)
                - 0.5 * dnu[k] * (u.z[k] - r.z[k]) * dr * dr;
            margin[k] += share * f.geom * (local - c.magnetic * (d - dr) * (d - dr));
        }
    }
    let v = grid.cell_volume();
    let (worst_cell, worst) = margin
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, &m)| if m < bv { (k, m) } else { (bk, bv) });
    Ok(LowerBoundCheck {
        energy,
        bound,
        worst_cell,
        worst_margin: worst * v,
    })
}

/// Backward-difference rates of one step of a run.
pub struct StepPair<'a> {
    pub old: &'a SimState,
    pub new: &'a SimState,
}

/// Relative dissipation at the end of a step pair,
///
/// `∫ θ̃/2 κ(θ,z)|∇log θ − ∇log θ̃|² + σ(θ)/2 |√(θ̃/θ) Ȧ − √(θ/θ̃) Ã̇|²
///   + τ(θ)/2 |√(θ̃/θ) ż − √(θ/θ̃) z̃̇|² + ∫_{D∖Ω} σ |Ȧ − Ã̇|²`.
///
/// Every term is a weighted square, so the result is non-negative.
pub fn relative_dissipation(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    em: &EmConfig,
    eps_cond: f64,
    u: &StepPair<'_>,
    reference: &StepPair<'_>,
) -> Result<f64> {
    check_pair(grid, u.new, reference.new)?;
    check_pair(grid, u.old, reference.old)?;
    let dt = u.new.t - u.old.t;
    let dtr = reference.new.t - reference.old.t;
    let v = grid.cell_volume();
    let (un, rn) = (u.new, reference.new);
    let sigma = sigma_eff_field(grid, laws, &un.theta, em.sigma_air(laws));
    let mut w = 0.0;
    for k in 0..grid.len() {
        let adot = (un.a[k] - u.old.a[k]) / dt;
        let rdot = (rn.a[k] - reference.old.a[k]) / dtr;
        if grid.is_workpiece(k) {
            let q = (rn.theta[k] / un.theta[k]).sqrt();
            let da = q * adot - rdot / q;
            let zdot = (un.z[k] - u.old.z[k]) / dt;
            let rzdot = (rn.z[k] - reference.old.z[k]) / dtr;
            let dz = q * zdot - rzdot / q;
            w += 0.5 * sigma[k] * da * da + 0.5 * laws.tau.value(un.theta[k]) * dz * dz;
        } else {
            w += sigma[k] * (adot - rdot) * (adot - rdot);
        }
    }
    let kappa = kappa_eps_field(grid, laws, eps_cond, &un.theta, &un.z);
    for f in grid.workpiece_faces() {
        let b = f.b.expect("workpiece faces are interior");
        let kf = FaceAverage::Harmonic.combine(kappa[f.a], kappa[b]);
        let tf = 0.5 * (rn.theta[f.a] + rn.theta[b]);
        let d = (un.theta[b].ln() - un.theta[f.a].ln()) - (rn.theta[b].ln() - rn.theta[f.a].ln());
        w += 0.5 * tf * kf * f.geom * d * d;
    }
    Ok(w * v)
}
