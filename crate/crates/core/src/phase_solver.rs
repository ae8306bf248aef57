//! Backward-Euler step for the phase relaxation `τ(θ) ∂_t z + ψ_z(θ, z) = 0`
//! on the workpiece, optionally with the regularising term `−δ Δz` under
//! zero-flux boundary conditions.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiffusionOperator, FaceAverage, Field, RegionGrid};
use crate::linalg::{monotone_root, norm_inf, pcg};
use crate::materials::{FreeEnergyLaw, MaterialLaws};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    /// Diffusion coefficient of the regularised phase equation; 0 disables it.
    pub delta: f64,
    /// Absolute residual target of the Newton iteration.
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            delta: 0.0,
            newton_tol: 1e-13,
            max_iter: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseReport {
    /// Largest per-cell iteration count (δ = 0) or global Newton count (δ > 0).
    pub newton_iterations: usize,
    pub residual: f64,
    /// `max |z_new − z_old| / dt` over the workpiece.
    pub max_rate: f64,
}

fn check_inputs(grid: &RegionGrid, theta: &[f64], dt: f64, delta: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Config(vec![format!("time step must be positive, got {dt}")]));
    }
    if !(delta >= 0.0) {
        return Err(Error::Config(vec![format!("phase diffusion must be nonnegative, got {delta}")]));
    }
    if let Some(&k) = grid.workpiece_cells().iter().find(|&&k| !(theta[k] > 0.0)) {
        return Err(Error::NonPositiveTemperature(theta[k]));
    }
    Ok(())
}

/// One implicit phase step at the frozen temperature `theta`. Cells outside
/// the workpiece keep their old value.
pub fn phase_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &PhaseConfig,
    z_old: &[f64],
    theta: &[f64],
    dt: f64,
) -> Result<(Field, PhaseReport)> {
    check_inputs(grid, theta, dt, cfg.delta)?;
    let (z, mut report) = if cfg.delta > 0.0 {
        regularised_step(grid, laws, cfg, z_old, theta, dt)?
    } else {
        local_step(grid, laws, cfg, z_old, theta, dt)?
    };
    report.max_rate = grid
        .workpiece_cells()
        .iter()
        .fold(0.0, |m: f64, &k| m.max((z[k] - z_old[k]).abs() / dt));
    Ok((z, report))
}

/// Cellwise solve of `z − z_old + (dt/τ) ψ_z(θ, z) = 0`. The residual has
/// slope `1 + (dt/τ) ψ_zz ≥ 1`, so the root lies within `|r(z_old)|` of `z_old`.
fn local_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &PhaseConfig,
    z_old: &[f64],
    theta: &[f64],
    dt: f64,
) -> Result<(Field, PhaseReport)> {
    let psi = &laws.free_energy;
    let mut z = z_old.to_vec();
    let mut report = PhaseReport::default();
    for &k in grid.workpiece_cells() {
        let th = theta[k];
        let rate = dt / laws.tau.value(th);
        let r = |x: f64| {
            (
                x - z_old[k] + rate * psi.psi_z(th, x),
                1.0 + rate * psi.psi_zz(th, x),
            )
        };
        let r0 = r(z_old[k]).0;
        if r0.abs() <= cfg.newton_tol {
            continue;
        }
        let span = r0.abs();
        let (lo, hi) = (z_old[k] - span, z_old[k] + span);
        let count = Cell::new(0usize);
        let root = monotone_root(
            |x| {
                count.set(count.get() + 1);
                r(x)
            },
            lo,
            hi,
            z_old[k],
            cfg.newton_tol,
            "phase relaxation",
        )?;
        report.newton_iterations = report.newton_iterations.max(count.get());
        report.residual = report.residual.max(r(root).0.abs());
        z[k] = root;
    }
    Ok((z, report))
}

/// Global semismooth Newton for `z − z_old + dt δ L z + (dt/τ) ψ_z(θ, z) = 0`
/// with `L = −Δ` under zero flux on the workpiece boundary.
fn regularised_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &PhaseConfig,
    z_old: &[f64],
    theta: &[f64],
    dt: f64,
) -> Result<(Field, PhaseReport)> {
    let psi = &laws.free_energy;
    let n = grid.len();
    let lap = DiffusionOperator::workpiece(grid, &vec![dt * cfg.delta; n], FaceAverage::Arithmetic);
    let lap_diag = lap.diagonal();
    let cells = grid.workpiece_cells();
    let rate: Field = (0..n)
        .map(|k| if grid.is_workpiece(k) { dt / laws.tau.value(theta[k]) } else { 0.0 })
        .collect();
    let mut z = z_old.to_vec();
    let mut res = vec![0.0; n];
    let residual = |z: &[f64], res: &mut [f64]| {
        lap.apply(z, res);
        for &k in cells {
            res[k] += z[k] - z_old[k] + rate[k] * psi.psi_z(theta[k], z[k]);
        }
        for k in 0..n {
            if !grid.is_workpiece(k) {
                res[k] = 0.0;
            }
        }
        norm_inf(res)
    };
    let mut norm = residual(&z, &mut res);
    let mut it = 0;
    while norm > cfg.newton_tol {
        if it >= cfg.max_iter {
            return Err(Error::NewtonNotConverged {
                solver: "regularised phase relaxation",
                iterations: it,
                residual: norm,
            });
        }
        let jac: Field = (0..n)
            .map(|k| {
                if grid.is_workpiece(k) {
                    1.0 + rate[k] * psi.psi_zz(theta[k], z[k])
                } else {
                    0.0
                }
            })
            .collect();
        let diag: Field = (0..n)
            .map(|k| if grid.is_workpiece(k) { jac[k] + lap_diag[k] } else { 0.0 })
            .collect();
        let rhs: Field = res.iter().map(|r| -r).collect();
        let mut step = vec![0.0; n];
        pcg(
            |v, out| {
                lap.apply(v, out);
                for k in 0..n {
                    out[k] += jac[k] * v[k];
                }
            },
            &diag,
            &rhs,
            &mut step,
            1e-14,
            10 * n,
        )?;
        for &k in cells {
            z[k] += step[k];
        }
        norm = residual(&z, &mut res);
        it += 1;
    }
    Ok((
        z,
        PhaseReport {
            newton_iterations: it,
            residual: norm,
            max_rate: 0.0,
        },
    ))
}

/// `τ(θ) |(z_new − z_old)/dt|²` on workpiece cells, zero elsewhere.
pub fn phase_dissipation(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    z_new: &[f64],
    z_old: &[f64],
    theta: &[f64],
    dt: f64,
) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                let r = (z_new[k] - z_old[k]) / dt;
                laws.tau.value(theta[k]) * r * r
            } else {
                0.0
            }
        })
        .collect()
}

/// Heating `δ^{3/2} τ(θ) |Δz|²` carried by the regularised phase equation.
/// Zero when `delta` is zero.
pub fn regularisation_heating(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    delta: f64,
    z: &[f64],
    theta: &[f64],
) -> Field {
    let n = grid.len();
    if delta <= 0.0 {
        return vec![0.0; n];
    }
    let lap = DiffusionOperator::workpiece(grid, &vec![1.0; n], FaceAverage::Arithmetic);
    let mut lz = vec![0.0; n];
    lap.apply(z, &mut lz);
    (0..n)
        .map(|k| {
            if grid.is_workpiece(k) {
                delta.powf(1.5) * laws.tau.value(theta[k]) * lz[k] * lz[k]
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::materials::{DefaultSteelLaw, EquilibriumCurve, FreeEnergy, ScalarLaw};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> RegionGrid {
        RegionGrid::from_rects(
            16,
            16,
            Rect::new(0.0, 1.0, 0.0, 1.0),
            Rect::new(0.25, 0.75, 0.25, 0.75),
            &[],
        )
        .unwrap()
    }

    fn steel() -> DefaultSteelLaw {
        DefaultSteelLaw::default()
    }

    #[test]
    fn hysteresis_branch_is_frozen() {
        let g = grid();
        let laws = MaterialLaws::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta: Field = (0..g.len()).map(|_| rng.gen_range(300.0..1500.0)).collect();
        let z_old: Field = theta
            .iter()
            .map(|&t| (steel().z_eq(t) + rng.gen_range(0.0..0.2)).min(1.0))
            .collect();
        let (z, rep) = phase_step(&g, &laws, &PhaseConfig::default(), &z_old, &theta, 0.1).unwrap();
        assert_eq!(z, z_old);
        assert_eq!(rep.max_rate, 0.0);
    }

    /// Closed-form relaxation `z(t) = z_eq − (z_eq − z₀) e^{−2Lt/τ}` at
    /// constant temperature; backward Euler is first order.
    #[test]
    fn matches_exponential_relaxation_to_first_order() {
        let g = grid();
        let laws = MaterialLaws::default();
        let theta = vec![1200.0; g.len()];
        let zeq = steel().z_eq(1200.0);
        let tau = laws.tau.value(1200.0);
        let t_end = 0.02;
        let mut errors = Vec::new();
        for level in 0..4 {
            let steps = 10usize << level;
            let dt = t_end / steps as f64;
            let mut z = vec![0.0; g.len()];
            let mut err: f64 = 0.0;
            for n in 1..=steps {
                z = phase_step(&g, &laws, &PhaseConfig::default(), &z, &theta, dt).unwrap().0;
                let exact = zeq - zeq * (-2.0 * n as f64 * dt / tau).exp();
                let k = g.workpiece_cells()[0];
                err = err.max((z[k] - exact).abs());
            }
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "ratio {ratio} from {errors:?}");
        }
    }

    #[test]
    fn transformation_is_monotone_and_bounded() {
        let g = grid();
        let laws = MaterialLaws::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let theta: Field = (0..g.len()).map(|_| rng.gen_range(800.0..1300.0)).collect();
        let z_old: Field = (0..g.len()).map(|_| rng.gen_range(0.0..0.5)).collect();
        let (z, rep) = phase_step(&g, &laws, &PhaseConfig::default(), &z_old, &theta, 0.005).unwrap();
        let zmax = theta.iter().map(|&t| steel().z_eq(t)).fold(0.5f64, f64::max);
        let bound = 2.0 * steel().latent / laws.tau.value(1000.0);
        for &k in g.workpiece_cells() {
            assert!(z[k] >= z_old[k]);
            assert!(z[k] <= zmax + 1e-14);
        }
        assert!(rep.max_rate <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn regularised_step_keeps_uniform_state_uniform() {
        let g = grid();
        let laws = MaterialLaws::default();
        let cfg = PhaseConfig {
            delta: 0.05,
            ..PhaseConfig::default()
        };
        let theta = vec![1100.0; g.len()];
        let z_old = vec![0.1; g.len()];
        let (z, _) = phase_step(&g, &laws, &cfg, &z_old, &theta, 0.002).unwrap();
        let (z_local, _) = phase_step(&g, &laws, &PhaseConfig::default(), &z_old, &theta, 0.002)
            .unwrap();
        let k0 = g.workpiece_cells()[0];
        for &k in g.workpiece_cells() {
            assert!((z[k] - z[k0]).abs() < 1e-13);
            assert!((z[k] - z_local[k]).abs() < 1e-12);
        }
        assert!(regularisation_heating(&g, &laws, 0.05, &z, &theta)
            .iter()
            .all(|&h| h.abs() < 1e-20));
    }

    #[test]
    fn regularised_step_smooths_and_solves() {
        let g = grid();
        let laws = MaterialLaws {
            free_energy: FreeEnergy::DefaultSteel(DefaultSteelLaw {
                equilibrium: EquilibriumCurve {
                    theta_mid: 1000.0,
                    width: 100.0,
                    z_sat: 1.0,
                },
                ..steel()
            }),
            tau: ScalarLaw::constant(0.02),
            ..MaterialLaws::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta: Field = (0..g.len()).map(|_| rng.gen_range(900.0..1200.0)).collect();
        let z_old: Field = (0..g.len()).map(|_| rng.gen_range(0.0..0.6)).collect();
        let cfg = PhaseConfig {
            delta: 0.01,
            ..PhaseConfig::default()
        };
        let dt = 0.01;
        let (z, rep) = phase_step(&g, &laws, &cfg, &z_old, &theta, dt).unwrap();
        assert!(rep.residual <= cfg.newton_tol);
        // direct residual check with an independent Laplacian
        for &k in g.workpiece_cells() {
            let (i, j) = g.ij(k);
            let mut lap = 0.0;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let n = g.idx((i as i64 + di) as usize, (j as i64 + dj) as usize);
                if g.is_workpiece(n) {
                    lap += (z[n] - z[k]) / (g.hx() * g.hx());
                }
            }
            let r = z[k] - z_old[k] - dt * cfg.delta * lap
                + dt / 0.02 * laws.free_energy.psi_z(theta[k], z[k]);
            assert!(r.abs() < 1e-11, "cell {k}: {r}");
        }
    }

    #[test]
    fn dissipation_matches_direct_formula() {
        let g = grid();
        let laws = MaterialLaws {
            tau: ScalarLaw::Arctan {
                base: 0.02,
                amplitude: 0.005,
                center: 900.0,
                width: 50.0,
            },
            ..MaterialLaws::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z0: Field = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let z1: Field = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let th: Field = (0..g.len()).map(|_| rng.gen_range(300.0..1500.0)).collect();
        let dt = 0.01;
        let d = phase_dissipation(&g, &laws, &z1, &z0, &th, dt);
        let twice: Field = z0.iter().zip(&z1).map(|(a, b)| a + 2.0 * (b - a)).collect();
        let d2 = phase_dissipation(&g, &laws, &twice, &z0, &th, dt);
        for k in 0..g.len() {
            if g.is_workpiece(k) {
                let tau = 0.02 + 0.005 * ((th[k] - 900.0) / 50.0).atan();
                let expect = tau * ((z1[k] - z0[k]) / dt).powi(2);
                assert!((d[k] - expect).abs() <= 1e-12 * expect.max(1.0));
                assert!((d2[k] - 4.0 * d[k]).abs() <= 1e-10 * d[k].max(1.0));
            } else {
                assert_eq!(d[k], 0.0);
            }
        }
        assert!(phase_dissipation(&g, &laws, &z0, &z0, &th, dt).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn monotone_for_any_state(theta in 300.0f64..1500.0, z0 in 0.0f64..1.0, dt in 1e-4f64..1.0) {
            let g = grid();
            let laws = MaterialLaws::default();
            let th = vec![theta; g.len()];
            let zo = vec![z0; g.len()];
            let (z, _) = phase_step(&g, &laws, &PhaseConfig::default(), &zo, &th, dt).unwrap();
            let k = g.workpiece_cells()[0];
            prop_assert!(z[k] >= z0);
            prop_assert!(z[k] <= z0.max(steel().z_eq(theta)) + 1e-14);
        }
    }
}
