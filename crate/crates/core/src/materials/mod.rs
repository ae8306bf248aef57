//! Free energy, material coefficients, thermodynamic potentials, their inverse
//! maps, and sampled checks of the structural hypotheses they must satisfy.

mod coefficient;
mod free_energy;
mod inequalities;
mod inverse;
mod validate;

use serde::{Deserialize, Serialize};

pub use coefficient::ScalarLaw;
pub use free_energy::{
    entropy_density, internal_energy, AdmissibleBox, DefaultSteelLaw, EquilibriumCurve,
    FreeEnergy, FreeEnergyLaw, SmoothSteelLaw,
};
pub use inequalities::{
    check_fenchel_inequality, check_sqrt_log_inequality, InequalityCheck, InequalityGrid,
};
pub use inverse::{invert_energy, invert_entropy, THETA_SEARCH_MIN};
pub use validate::{
    validate_assumptions, Clause, EmpiricalConstants, Level, SamplingSpec, ValidationReport,
};

use crate::geometry::Region;

/// Every constitutive function of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialLaws {
    pub free_energy: FreeEnergy,
    /// Temperature factor of the heat conductivity.
    pub kappa_theta: ScalarLaw,
    /// Phase factor of the heat conductivity.
    pub kappa_phase: ScalarLaw,
    /// Electrical conductivity of the workpiece as a function of temperature.
    pub sigma_work: ScalarLaw,
    pub sigma_cond: f64,
    /// Magnetic permeability of the workpiece as a function of phase.
    pub mu_work: ScalarLaw,
    pub mu_cond: f64,
    pub mu_air: f64,
    /// Phase relaxation time as a function of temperature.
    pub tau: ScalarLaw,
}

impl Default for MaterialLaws {
    fn default() -> Self {
        MaterialLaws {
            free_energy: FreeEnergy::default(),
            kappa_theta: ScalarLaw::constant(0.01),
            kappa_phase: ScalarLaw::constant(1.0),
            sigma_work: ScalarLaw::Tanh {
                low: 1.0,
                high: 0.5,
                center: 1000.0,
                width: 100.0,
            },
            sigma_cond: 1.0,
            mu_work: ScalarLaw::SqrtLinear { a0: 4.0, a1: -3.0 },
            mu_cond: 1.0,
            mu_air: 1.0,
            tau: ScalarLaw::constant(0.01),
        }
    }
}

impl MaterialLaws {
    pub fn kappa(&self, theta: f64, z: f64) -> f64 {
        self.kappa_theta.value(theta) * self.kappa_phase.value(z)
    }

    /// Conductivity for the magnetic step; `sigma_air` replaces the vanishing
    /// conductivity outside the conductors.
    pub fn sigma_eff(&self, region: Region, theta: f64, sigma_air: f64) -> f64 {
        match region {
            Region::Workpiece => self.sigma_work.value(theta),
            Region::Inductor => self.sigma_cond,
            Region::Air => sigma_air,
        }
    }

    pub fn mu(&self, region: Region, z: f64) -> f64 {
        match region {
            Region::Workpiece => self.mu_work.value(z),
            Region::Inductor => self.mu_cond,
            Region::Air => self.mu_air,
        }
    }

    /// `∂μ/∂z`, nonzero only inside the workpiece.
    pub fn mu_prime(&self, region: Region, z: f64) -> f64 {
        match region {
            Region::Workpiece => self.mu_work.d1(z),
            _ => 0.0,
        }
    }

    pub fn admissible_box(&self) -> AdmissibleBox {
        self.free_energy.admissible_box()
    }
}
