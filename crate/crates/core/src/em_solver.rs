//! Backward-Euler step for the out-of-plane vector potential,
//! `σ ∂_t A − div(μ⁻¹ ∇A) = J_s` on the whole domain with `A = 0` on its
//! boundary. Outside the conductors the vanishing conductivity is replaced by
//! a small positive value so the system stays definite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiffusionOperator, FaceAverage, Field, Region, RegionGrid};
use crate::linalg::{pcg, CgReport};
use crate::materials::MaterialLaws;

/// Prescribed current density in the inductor.
pub trait CurrentSource {
    /// Value at cell `k` and time `t`; called only for cells where it may be
    /// nonzero (the inductor, unless [`CurrentSource::everywhere`] is set).
    fn density(&self, grid: &RegionGrid, k: usize, t: f64) -> f64;

    /// Sources that are not confined to the inductor (manufactured forcing).
    fn everywhere(&self) -> bool {
        false
    }
}

/// Time profile of the inductor current, multiplied cellwise by the
/// inductor polarity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// `amplitude · sin(2π f t)`
    Sinusoid { frequency: f64, amplitude: f64 },
    /// Sinusoid whose amplitude ramps linearly from zero over `ramp` seconds.
    RampedSinusoid {
        frequency: f64,
        amplitude: f64,
        ramp: f64,
    },
    /// Piecewise-linear interpolation of `(t, value)` pairs, held constant
    /// outside the table.
    Tabulated { points: Vec<[f64; 2]> },
    Off,
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform::Sinusoid {
            frequency: 32.0,
            amplitude: 1.0,
        }
    }
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        match self {
            Waveform::Sinusoid {
                frequency,
                amplitude,
            } => amplitude * (TAU * frequency * t).sin(),
            Waveform::RampedSinusoid {
                frequency,
                amplitude,
                ramp,
            } => {
                let r = if *ramp > 0.0 { (t / ramp).min(1.0) } else { 1.0 };
                r * amplitude * (TAU * frequency * t).sin()
            }
            Waveform::Tabulated { points } => tabulated(points, t),
            Waveform::Off => 0.0,
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self {
            Waveform::Sinusoid { frequency, .. } | Waveform::RampedSinusoid { frequency, .. } => {
                Some(*frequency)
            }
            _ => None,
        }
    }

    /// Copy with the frequency multiplied by `factor` (no-op for other kinds).
    pub fn with_frequency_scaled(&self, factor: f64) -> Self {
        let mut w = self.clone();
        match &mut w {
            Waveform::Sinusoid { frequency, .. } | Waveform::RampedSinusoid { frequency, .. } => {
                *frequency *= factor
            }
            _ => {}
        }
        w
    }
}

fn tabulated(points: &[[f64; 2]], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [p] => p[1],
        _ => {
            if t <= points[0][0] {
                return points[0][1];
            }
            for w in points.windows(2) {
                let ([t0, v0], [t1, v1]) = (w[0], w[1]);
                if t <= t1 {
                    return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                }
            }
            points[points.len() - 1][1]
        }
    }
}

impl CurrentSource for Waveform {
    fn density(&self, grid: &RegionGrid, k: usize, t: f64) -> f64 {
        grid.polarity(k) * self.value(t)
    }
}

/// Source density field at time `t`.
pub fn source_field(grid: &RegionGrid, source: &dyn CurrentSource, t: f64) -> Field {
    (0..grid.len())
        .map(|k| {
            if source.everywhere() || grid.region(k) == Region::Inductor {
                source.density(grid, k, t)
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Conductivity substituted in air; `None` means `1e-6 · σ_cond`.
    pub sigma_air: Option<f64>,
    pub rtol: f64,
    /// Iteration budget as a multiple of the cell count.
    pub max_iter_factor: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            sigma_air: None,
            rtol: 1e-12,
            max_iter_factor: 10,
        }
    }
}

impl EmConfig {
    pub fn sigma_air(&self, laws: &MaterialLaws) -> f64 {
        self.sigma_air.unwrap_or(1e-6 * laws.sigma_cond)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmStepReport {
    pub cg: CgReport,
    /// `σ |δA/dt|²` on workpiece cells, zero elsewhere.
    pub joule: Field,
    pub magnetic_energy: f64,
}

/// Per-cell conductivity used by the magnetic step.
pub fn sigma_eff_field(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    theta: &[f64],
    sigma_air: f64,
) -> Field {
    (0..grid.len())
        .map(|k| laws.sigma_eff(grid.region(k), theta[k], sigma_air))
        .collect()
}

/// Reluctivity `1/μ(z)` per cell.
pub fn reluctivity(grid: &RegionGrid, laws: &MaterialLaws, z: &[f64]) -> Field {
    (0..grid.len())
        .map(|k| 1.0 / laws.mu(grid.region(k), z[k]))
        .collect()
}

/// `-div(μ⁻¹ ∇·)` with `A = 0` on the outer boundary; face reluctivity is the
/// mean of cell reluctivities (harmonic mean of μ).
pub fn curl_curl_operator(grid: &RegionGrid, laws: &MaterialLaws, z: &[f64]) -> DiffusionOperator {
    DiffusionOperator::dirichlet(grid, &reluctivity(grid, laws, z), FaceAverage::Arithmetic)
}

/// `∫_D (1/2μ(z)) |curl A|²` in the face discretisation used by the solver.
pub fn magnetic_energy(grid: &RegionGrid, laws: &MaterialLaws, z: &[f64], a: &[f64]) -> f64 {
    curl_curl_operator(grid, laws, z).energy(a)
}

/// One implicit step. `theta` and `z` supply the conductivity and
/// permeability (the caller decides how they are lagged); values outside the
/// workpiece are ignored.
#[allow(clippy::too_many_arguments)]
pub fn em_step(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &EmConfig,
    source: &dyn CurrentSource,
    a_old: &[f64],
    theta: &[f64],
    z: &[f64],
    t_new: f64,
    dt: f64,
) -> Result<(Field, EmStepReport)> {
    let j = source_field(grid, source, t_new);
    em_step_with_forcing(grid, laws, cfg, &j, a_old, theta, z, dt)
}

/// As [`em_step`] with an explicit right-hand side density.
#[allow(clippy::too_many_arguments)]
pub fn em_step_with_forcing(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    cfg: &EmConfig,
    forcing: &[f64],
    a_old: &[f64],
    theta: &[f64],
    z: &[f64],
    dt: f64,
) -> Result<(Field, EmStepReport)> {
    if !(dt > 0.0) {
        return Err(Error::Config(vec![format!("time step must be positive, got {dt}")]));
    }
    if let Some(&k) = grid
        .workpiece_cells()
        .iter()
        .find(|&&k| !(theta[k] > 0.0))
    {
        return Err(Error::NonPositiveTemperature(theta[k]));
    }
    let sigma_air = cfg.sigma_air(laws);
    let sigma = sigma_eff_field(grid, laws, theta, sigma_air);
    let op = curl_curl_operator(grid, laws, z);
    let mass: Vec<f64> = sigma.iter().map(|s| s / dt).collect();
    let rhs: Vec<f64> = (0..grid.len())
        .map(|k| forcing[k] + mass[k] * a_old[k])
        .collect();
    let diag: Vec<f64> = op.diagonal().iter().zip(&mass).map(|(d, m)| d + m).collect();
    let mut a = a_old.to_vec();
    let apply = |v: &[f64], out: &mut [f64]| {
        op.apply(v, out);
        for k in 0..v.len() {
            out[k] += mass[k] * v[k];
        }
    };
    let cg = pcg(apply, &diag, &rhs, &mut a, cfg.rtol, cfg.max_iter_factor * grid.len())?;
    let joule = joule_power(grid, laws, &a, a_old, dt, theta);
    let magnetic_energy = op.energy(&a);
    Ok((
        a,
        EmStepReport {
            cg,
            joule,
            magnetic_energy,
        },
    ))
}

/// `σ(θ) |(A_new − A_old)/dt|²` on workpiece cells, zero elsewhere.
pub fn joule_power(
    grid: &RegionGrid,
    laws: &MaterialLaws,
    a_new: &[f64],
    a_old: &[f64],
    dt: f64,
    theta: &[f64],
) -> Field {
    (0..grid.len())
        .map(|k| {
            if grid.is_workpiece(k) {
                let r = (a_new[k] - a_old[k]) / dt;
                laws.sigma_work.value(theta[k]) * r * r
            } else {
                0.0
            }
        })
        .collect()
}
