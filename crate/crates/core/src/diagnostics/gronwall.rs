//! Gronwall rate of the relative energy inequality along a reference
//! trajectory, and the envelope it implies.

use crate::error::{Error, Result};
use crate::geometry::{curl2d, grad_workpiece, DiffusionOperator, FaceAverage, Field, RegionGrid};
use crate::linalg::norm_inf;
use crate::materials::MaterialLaws;
use crate::stepper::SimState;

pub const RATE_NAMES: [&str; 7] = [
    "dt_log_theta",
    "dt_phase",
    "curl_dt_potential",
    "grad_log_theta_sq",
    "div_kappa_grad_log_theta",
    "dt_log_mu",
    "curl_potential_sq",
];

/// `K = c · Σ components` for one step of the reference trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GronwallRate {
    pub components: [f64; 7],
    pub constant: f64,
}

impl GronwallRate {
    pub fn value(&self) -> f64 {
        self.constant * self.components.iter().sum::<f64>()
    }
}

fn log_theta(grid: &RegionGrid, theta: &[f64]) -> Result<Field> {
    let mut out = vec![0.0; grid.len()];
    for &k in grid.workpiece_cells() {
        if !(theta[k] > 0.0) {
            return Err(Error::NonPositiveTemperature(theta[k]));
        }
        out[k] = theta[k].ln();
    }
    Ok(out)
}

fn max_face(g: &crate::geometry::FaceField) -> f64 {
    norm_inf(&g.x).max(norm_inf(&g.y))
}

fn max_curl(grid: &RegionGrid, a: &[f64]) -> f64 {
    curl2d(grid, a)
        .iter()
        .fold(0.0, |m: f64, c| m.max((c[0] * c[0] + c[1] * c[1]).sqrt()))
}

/// Sup-norms of the reference trajectory over the step `old → new`, time
/// derivatives by backward differences, spatial terms at `new`.
pub fn gronwall_coefficient(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    constant: f64,
    old: &SimState,
    new: &SimState,
) -> Result<GronwallRate> {
    let dt = new.t - old.t;
    if !(dt > 0.0) {
        return Err(Error::IncompatibleRuns(format!("non-increasing times {} → {}", old.t, new.t)));
    }
    let (ln_new, ln_old) = (log_theta(grid, &new.theta)?, log_theta(grid, &old.theta)?);
    let cells = grid.workpiece_cells();
    let sup = |f: &dyn Fn(usize) -> f64| cells.iter().fold(0.0, |m: f64, &k| m.max(f(k).abs()));
    let dt_log = sup(&|k| (ln_new[k] - ln_old[k]) / dt);
    let dt_z = sup(&|k| (new.z[k] - old.z[k]) / dt);
    let da: Field = new.a.iter().zip(&old.a).map(|(x, y)| (x - y) / dt).collect();
    let curl_da = max_curl(grid, &da);
    let g = max_face(&grad_workpiece(grid, &ln_new));
    let kappa: Field = (0..grid.len())
        .map(|k| if grid.is_workpiece(k) { laws.kappa(new.theta[k], new.z[k]) } else { 0.0 })
        .collect();
    let mut div = vec![0.0; grid.len()];
    DiffusionOperator::workpiece(grid, &kappa, FaceAverage::Harmonic).apply(&ln_new, &mut div);
    let div_sup = sup(&|k| div[k]);
    let region = crate::geometry::Region::Workpiece;
    let dt_mu = sup(&|k| (laws.mu(region, new.z[k]).ln() - laws.mu(region, old.z[k]).ln()) / dt);
    let curl = max_curl(grid, &new.a);
    Ok(GronwallRate {
        components: [dt_log, dt_z, curl_da, g * g, div_sup, dt_mu, curl * curl],
        constant,
    })
}

/// Running form of
/// `E(t) + ∫₀ᵗ W(s) exp(∫ₛᵗ K) ds ≤ E(0) exp(∫₀ᵗ K)`
/// with rectangle-rule time integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct GronwallEnvelope {
    pub initial: f64,
    /// `∫₀ᵗ K`
    pub integral: f64,
    /// `∫₀ᵗ W(s) exp(∫ₛᵗ K) ds`
    pub weighted_dissipation: f64,
}

impl GronwallEnvelope {
    pub fn new(initial: f64) -> Self {
        GronwallEnvelope {
            initial,
            integral: 0.0,
            weighted_dissipation: 0.0,
        }
    }

    pub fn advance(&mut self, dt: f64, rate: f64, dissipation: f64) {
        let growth = (dt * rate).exp();
        self.integral += dt * rate;
        self.weighted_dissipation = (self.weighted_dissipation + dt * dissipation) * growth;
    }

    /// `E(0) exp(∫K)`
    pub fn bound(&self) -> f64 {
        self.initial * self.integral.exp()
    }

    /// Right side minus left side for the relative energy `e`.
    pub fn slack(&self, e: f64) -> f64 {
        self.bound() - (e + self.weighted_dissipation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn grid() -> RegionGrid {
        RegionGrid::from_rects(
            12,
            12,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Rect::new(0.25, 0.75, 0.25, 0.75),
            &[],
        )
        .unwrap()
    }

    #[test]
    fn frozen_uniform_reference_has_zero_rate() {
        let g = grid();
        let laws = MaterialLaws::default();
        let a = SimState::uniform(&g, &laws, 400.0, 0.2).unwrap();
        let mut b = a.clone();
        b.t = 1e-3;
        let k = gronwall_coefficient(&g, &laws, 3.0, &a, &b).unwrap();
        assert_eq!(k.value(), 0.0);
    }

    #[test]
    fn doubling_the_potential_quadruples_its_curl_term() {
        let g = grid();
        let laws = MaterialLaws::default();
        let a = SimState::uniform(&g, &laws, 400.0, 0.2).unwrap();
        let mut b = a.clone();
        b.t = 1e-3;
        for (k, v) in b.a.iter_mut().enumerate() {
            let (x, y) = g.center(k);
            *v = (x * 3.0).sin() * y;
        }
        let mut b2 = b.clone();
        b2.a.iter_mut().for_each(|v| *v *= 2.0);
        let k1 = gronwall_coefficient(&g, &laws, 1.0, &b, &b).map(|_| ()).is_err();
        assert!(k1, "zero step length is rejected");
        let mut a0 = a.clone();
        a0.a = b.a.clone();
        let mut a2 = a.clone();
        a2.a = b2.a.clone();
        let r1 = gronwall_coefficient(&g, &laws, 1.0, &a0, &b).unwrap();
        let r2 = gronwall_coefficient(&g, &laws, 1.0, &a2, &b2).unwrap();
        assert!((r2.components[6] - 4.0 * r1.components[6]).abs() <= 1e-12 * r2.components[6]);
    }

    #[test]
    fn envelope_recursion_matches_closed_form() {
        let mut env = GronwallEnvelope::new(2.0);
        for _ in 0..10 {
            env.advance(0.1, 0.5, 0.0);
        }
        assert!((env.bound() - 2.0 * 0.5f64.exp()).abs() < 1e-12);
        let mut env = GronwallEnvelope::new(0.0);
        env.advance(0.1, 0.0, 3.0);
        env.advance(0.1, 0.0, 1.0);
        assert!((env.weighted_dissipation - 0.4).abs() < 1e-15);
        assert!((env.slack(0.1) + 0.5).abs() < 1e-15);
    }
}
