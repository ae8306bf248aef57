//! Inverse maps of `θ ↦ e(θ, z)` and `θ ↦ −ψ_θ(θ, z)`. Both are strictly
//! increasing whenever the heat capacity is positive, so a bracketed Newton
//! iteration with bisection fallback always converges.

use super::free_energy::FreeEnergyLaw;
use crate::error::{Error, Result};
use crate::linalg::monotone_root;

/// Smallest temperature the entropy inverse searches.
pub const THETA_SEARCH_MIN: f64 = 1e-8;

/// Absolute residual target, floored at a few ulps of the target value since
/// the forward map itself carries that much rounding.
fn residual_tol(target: f64) -> f64 {
    1e-12_f64.max(4.0 * f64::EPSILON * target.abs())
}

/// Temperature `θ ∈ [0, θ_cap]` with `e(θ, z) = e_val`.
pub fn invert_energy<L: FreeEnergyLaw + ?Sized>(law: &L, e_val: f64, z: f64) -> Result<f64> {
    let cap = law.admissible_box().theta_cap;
    let lo_val = law.energy(0.0, z);
    let hi_val = law.energy(cap, z);
    let tol = residual_tol(e_val);
    if !(e_val >= lo_val - tol && e_val <= hi_val + tol) {
        return Err(Error::EnergyOutOfRange {
            value: e_val,
            lo: lo_val,
            hi: hi_val,
            z,
        });
    }
    if e_val <= lo_val {
        return Ok(0.0);
    }
    // initial guess from the unit-capacity linearisation about θ = 0
    let c0 = law.heat_capacity(1.0, z).max(1e-12);
    let x0 = (e_val - lo_val) / c0;
    monotone_root(
        |t| (law.energy(t, z) - e_val, law.heat_capacity(t, z)),
        0.0,
        cap,
        x0,
        tol,
        "energy inversion",
    )
}

/// Log-temperature `ℓ` with `−ψ_θ(e^ℓ, z) = s_val`.
pub fn invert_entropy<L: FreeEnergyLaw + ?Sized>(law: &L, s_val: f64, z: f64) -> Result<f64> {
    let lo = THETA_SEARCH_MIN.ln();
    let hi = law.admissible_box().theta_cap.ln();
    let s = |l: f64| -law.psi_theta(l.exp(), z);
    let (lo_val, hi_val) = (s(lo), s(hi));
    let tol = residual_tol(s_val);
    if !(s_val >= lo_val - tol && s_val <= hi_val + tol) {
        return Err(Error::EntropyOutOfRange {
            value: s_val,
            lo,
            hi,
            z,
        });
    }
    let c0 = law.heat_capacity(1.0, z).max(1e-12);
    monotone_root(
        |l| {
            let t = l.exp();
            (-law.psi_theta(t, z) - s_val, law.heat_capacity(t, z))
        },
        lo,
        hi,
        s_val / c0,
        tol,
        "entropy inversion",
    )
}
